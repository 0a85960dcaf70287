//! Smallest singular value by inverse power iteration on the normal
//! equations, using banded factorizations of M and M^T.

use crate::eigen::banded::BandedLu;
use crate::error::{CoreError, Result};
use crate::rng::SplitMix64;
use crate::sparse::Csr;

#[derive(Debug, Clone, Copy)]
pub struct SigmaMin {
    pub sigma: f64,
    /// bracket from the Rayleigh quotient of (M^T M)^{-1}
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
}

/// Estimates sigma_min(M). Power iteration on (M^T M)^{-1} = M^{-1} M^{-T},
/// capped at 200 iterations or 1e-6 relative stagnation.
pub fn smallest_singular_value(m: &Csr) -> Result<SigmaMin> {
    assert_eq!(m.n_rows, m.n_cols);
    let n = m.n_rows;
    let lu = match m.to_banded().factor() {
        Ok(f) => f,
        Err(CoreError::Singular(_)) => {
            return Ok(SigmaMin { sigma: 0.0, lower: 0.0, upper: 0.0, iterations: 0 })
        }
        Err(e) => return Err(e),
    };
    let lu_t = match m.transpose().to_banded().factor() {
        Ok(f) => f,
        Err(CoreError::Singular(_)) => {
            return Ok(SigmaMin { sigma: 0.0, lower: 0.0, upper: 0.0, iterations: 0 })
        }
        Err(e) => return Err(e),
    };
    smallest_singular_from_factors(&lu, &lu_t, n)
}

/// Same iteration with factorizations supplied by the caller (used when
/// M is only available in shifted/embedded form).
pub fn smallest_singular_from_factors(
    lu: &BandedLu,
    lu_t: &BandedLu,
    n: usize,
) -> Result<SigmaMin> {
    let mut rng = SplitMix64::new(2);
    let mut v: Vec<f64> = (0..n).map(|_| 1.0 + 1e-3 * rng.next_symmetric()).collect();
    normalize(&mut v);
    let mut theta_prev = 0.0;
    let mut rayleigh = 0.0;
    let mut qnorm = 0.0;
    let mut iters = 0usize;
    for it in 0..200 {
        iters = it + 1;
        // K v = M^{-1} M^{-T} v
        let w = lu_t.solve(&v);
        let kv = lu.solve(&w);
        rayleigh = dot(&v, &kv);
        qnorm = norm2(&kv);
        let theta = qnorm;
        if theta <= 0.0 || !theta.is_finite() {
            return Ok(SigmaMin { sigma: 0.0, lower: 0.0, upper: 0.0, iterations: iters });
        }
        let rel = ((theta - theta_prev) / theta).abs();
        v = kv;
        for x in &mut v {
            *x /= theta;
        }
        if it > 2 && rel < 1e-6 {
            break;
        }
        theta_prev = theta;
    }
    // qnorm and rayleigh both estimate 1/sigma_min^2 from below
    let sigma = 1.0 / qnorm.sqrt();
    let upper = 1.0 / rayleigh.abs().max(f64::MIN_POSITIVE).sqrt();
    Ok(SigmaMin { sigma, lower: sigma, upper, iterations: iters })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm2(v);
    for x in v.iter_mut() {
        *x /= n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::dense::{dense_eigs, DMat};
    use crate::rng::SplitMix64;

    #[test]
    fn identity_has_sigma_one() {
        let m = Csr::identity(10);
        let s = smallest_singular_value(&m).unwrap();
        assert!((s.sigma - 1.0).abs() < 1e-10);
    }

    #[test]
    fn diagonal_small_entry() {
        let mut t = vec![(0, 0, 1e-3), (1, 1, 1.0)];
        let m = Csr::from_triplets(2, 2, &mut t);
        let s = smallest_singular_value(&m).unwrap();
        assert!((s.sigma - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn random_matrix_matches_dense_normal_equations() {
        let n = 50;
        let mut rng = SplitMix64::new(11);
        let mut trips = Vec::new();
        let mut dense = DMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let v = rng.next_symmetric() + if i == j { 3.0 } else { 0.0 };
                trips.push((i, j, v));
                dense[(i, j)] = v;
            }
        }
        let m = Csr::from_triplets(n, n, &mut trips);
        let s = smallest_singular_value(&m).unwrap();
        // dense oracle: smallest eigenvalue of M^T M
        let mtm = dense.transpose().matmul(&dense);
        let eigs = dense_eigs(&mtm).unwrap();
        let min_eig = eigs.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let oracle = min_eig.sqrt();
        assert!(
            (s.sigma - oracle).abs() <= 1e-6 * oracle,
            "{} vs {}",
            s.sigma,
            oracle
        );
    }
}
