//! Banded LU with partial pivoting, LAPACK-style band storage.
//!
//! Storage is column major with `2*kl + ku + 1` rows per column; the
//! extra `kl` rows hold the fill produced by row interchanges. Entry
//! `(i, j)` lives at band row `kl + ku + i - j`.

use crate::error::{CoreError, Result};

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandedMatrix { n, kl, ku, ldab, ab: vec![0.0; ldab * n] }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(j + self.kl >= i && i + self.ku >= j, "outside band: ({i},{j})");
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || i + self.ku < j {
            return 0.0;
        }
        self.ab[self.slot(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.ab[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.ab[s] += v;
    }

    pub fn max_abs(&self) -> f64 {
        // only in-band slots are ever written
        self.ab.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            let xv = x[j];
            if xv == 0.0 {
                continue;
            }
            for i in lo..=hi {
                y[i] += self.ab[j * self.ldab + (self.kl + self.ku + i - j)] * xv;
            }
        }
        y
    }

    pub fn to_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                let v = self.ab[j * self.ldab + (self.kl + self.ku + i - j)];
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        t
    }

    pub fn from_triplets(n: usize, kl: usize, ku: usize, trips: &[(usize, usize, f64)]) -> Self {
        let mut m = BandedMatrix::zeros(n, kl, ku);
        for &(i, j, v) in trips {
            m.add(i, j, v);
        }
        m
    }

    /// Factors in place; the matrix is consumed.
    pub fn factor(self) -> Result<BandedLu> {
        let n = self.n;
        let kl = self.kl;
        let ku_work = self.kl + self.ku; // fill widens the upper band
        let ldab = self.ldab;
        let mut ab = self.ab;
        let scale = ab.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut piv = vec![0usize; n];

        let idx = |i: usize, j: usize| -> usize { j * ldab + (kl + ku_work + i - j) - kl };
        // With the working upper bandwidth, entry (i,j) sits at row
        // kl + ku + (i - j) of column j, i.e. offset kl+ku_work+i-j-kl.

        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // pivot search in column j
            let mut p = 0usize;
            let mut best = ab[idx(j, j)].abs();
            for i in 1..=km {
                let v = ab[idx(j + i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < 1e-30 * scale.max(1.0) {
                return Err(CoreError::Singular(format!(
                    "band pivot {best:.3e} at column {j} (scale {scale:.3e})"
                )));
            }
            piv[j] = j + p;
            let jmax = (j + ku_work).min(n - 1);
            if p != 0 {
                for c in j..=jmax {
                    ab.swap(idx(j, c), idx(j + p, c));
                }
            }
            let d = ab[idx(j, j)];
            for i in 1..=km {
                let f = ab[idx(j + i, j)] / d;
                ab[idx(j + i, j)] = f;
                if f != 0.0 {
                    for c in j + 1..=jmax {
                        let u = ab[idx(j, c)];
                        if u != 0.0 {
                            ab[idx(j + i, c)] -= f * u;
                        }
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, ku_work, ldab, ab, piv })
    }
}

/// LU factors of a banded matrix; solves by forward substitution with
/// the recorded row interchanges, then banded back substitution.
#[derive(Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku_work: usize,
    ldab: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + (self.ku_work + i - j)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        let n = self.n;
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let km = self.kl.min(n - 1 - j);
                for i in 1..=km {
                    b[j + i] -= self.ab[self.idx(j + i, j)] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let x = b[j] / self.ab[self.idx(j, j)];
            b[j] = x;
            if x != 0.0 {
                let lo = j.saturating_sub(self.ku_work);
                for i in lo..j {
                    b[i] -= self.ab[self.idx(i, j)] * x;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn identity_solve_returns_rhs() {
        let mut m = BandedMatrix::zeros(5, 0, 0);
        for i in 0..5 {
            m.set(i, i, 1.0);
        }
        let lu = m.factor().unwrap();
        let b = vec![1.0, -2.0, 3.0, 0.5, 4.0];
        assert_eq!(lu.solve(&b), b);
    }

    #[test]
    fn poisson_tridiagonal_closed_form() {
        // (2,-1) of order 50 with unit rhs: u_i = (i+1)(n-i)/2 exactly
        let n = 50;
        let mut m = BandedMatrix::zeros(n, 1, 1);
        for i in 0..n {
            m.set(i, i, 2.0);
            if i > 0 {
                m.set(i, i - 1, -1.0);
            }
            if i + 1 < n {
                m.set(i, i + 1, -1.0);
            }
        }
        let lu = m.factor().unwrap();
        let x = lu.solve(&vec![1.0; n]);
        for i in 0..n {
            let exact = ((i + 1) * (n - i)) as f64 / 2.0;
            assert!(
                (x[i] - exact).abs() <= 1e-10 * exact.max(1.0),
                "i={i}: {} vs {exact}",
                x[i]
            );
        }
    }

    #[test]
    fn zero_row_is_singular() {
        let mut m = BandedMatrix::zeros(4, 1, 1);
        m.set(0, 0, 1.0);
        m.set(1, 1, 1.0);
        m.set(3, 3, 1.0);
        // row 2 left identically zero
        assert!(matches!(m.factor(), Err(CoreError::Singular(_))));
    }

    #[test]
    fn random_banded_solve_reconstructs() {
        let mut rng = SplitMix64::new(77);
        for _ in 0..10 {
            let n = 40;
            let kl = 3;
            let ku = 2;
            let mut m = BandedMatrix::zeros(n, kl, ku);
            for i in 0..n {
                for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                    m.set(i, j, rng.next_symmetric());
                }
                m.add(i, i, 4.0); // keep it comfortably nonsingular
            }
            let x_true: Vec<f64> = (0..n).map(|_| rng.next_symmetric()).collect();
            let b = m.matvec(&x_true);
            let lu = m.factor().unwrap();
            let x = lu.solve(&b);
            for i in 0..n {
                assert!((x[i] - x_true[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn triplet_round_trip() {
        let mut rng = SplitMix64::new(3);
        let mut m = BandedMatrix::zeros(12, 2, 1);
        for i in 0..12usize {
            for j in i.saturating_sub(2)..(i + 2).min(12) {
                m.set(i, j, rng.next_symmetric());
            }
        }
        let t = m.to_triplets();
        let m2 = BandedMatrix::from_triplets(12, 2, 1, &t);
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(m.get(i, j), m2.get(i, j));
            }
        }
    }
}
