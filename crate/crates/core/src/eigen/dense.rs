//! Dense eigenvalue machinery: Householder Hessenberg reduction,
//! Francis implicit double-shift QR, symmetric tridiagonal QL, dense LU
//! (real and complex) and inverse iteration for eigenvectors.

use num_complex::Complex64;

use crate::error::{CoreError, Result};

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DMat {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl DMat {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DMat { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows[0].len();
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols);
            data.extend_from_slice(r);
        }
        DMat { n_rows, n_cols, data }
    }

    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_rows * n_cols);
        DMat { n_rows, n_cols, data }
    }

    pub fn transpose(&self) -> DMat {
        let mut t = DMat::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DMat) -> DMat {
        assert_eq!(self.n_cols, other.n_rows);
        let mut out = DMat::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.n_cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.n_cols, x.len());
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let row = &self.data[i * self.n_cols..(i + 1) * self.n_cols];
            y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        y
    }

    pub fn scale(&self, s: f64) -> DMat {
        DMat {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &DMat) -> DMat {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        DMat {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &DMat) -> DMat {
        self.add(&other.scale(-1.0))
    }

    /// (A + A^T) / 2
    pub fn symmetrize(&self) -> DMat {
        assert_eq!(self.n_rows, self.n_cols);
        let mut s = DMat::zeros(self.n_rows, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_rows {
                s[(i, j)] = 0.5 * (self[(i, j)] + self[(j, i)]);
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.n_rows.min(self.n_cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self[(i, j)]).collect()
    }
}

impl std::ops::Index<(usize, usize)> for DMat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n_cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n_cols + j]
    }
}

/// Householder reduction to upper Hessenberg form (in place, no Q).
fn hessenberg(a: &mut DMat) {
    let n = a.n_rows;
    for k in 0..n.saturating_sub(2) {
        // reflector annihilating a[k+2.., k]
        let mut alpha = 0.0;
        for i in k + 1..n {
            alpha += a[(i, k)] * a[(i, k)];
        }
        if alpha == 0.0 {
            continue;
        }
        let a0 = a[(k + 1, k)];
        let mut norm = alpha.sqrt();
        if a0 > 0.0 {
            norm = -norm;
        }
        let mut v = vec![0.0; n];
        v[k + 1] = a0 - norm;
        for i in k + 2..n {
            v[i] = a[(i, k)];
        }
        let vtv: f64 = v[k + 1..].iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            continue;
        }
        let beta = 2.0 / vtv;
        // left: A <- A - beta v (v^T A)
        for j in 0..n {
            let mut s = 0.0;
            for i in k + 1..n {
                s += v[i] * a[(i, j)];
            }
            s *= beta;
            for i in k + 1..n {
                a[(i, j)] -= s * v[i];
            }
        }
        // right: A <- A - beta (A v) v^T
        for i in 0..n {
            let mut s = 0.0;
            for j in k + 1..n {
                s += a[(i, j)] * v[j];
            }
            s *= beta;
            for j in k + 1..n {
                a[(i, j)] -= s * v[j];
            }
        }
        a[(k + 1, k)] = norm;
        for i in k + 2..n {
            a[(i, k)] = 0.0;
        }
    }
}

/// Eigenvalues of an upper Hessenberg matrix by the implicit
/// double-shift QR iteration, with an exceptional shift every 30
/// stalled sweeps on the active block.
fn hqr_eigenvalues(h: &mut DMat, max_total: usize) -> Result<Vec<Complex64>> {
    let n = h.n_rows as i64;
    let eps = f64::EPSILON;
    let mut eig = vec![Complex64::new(0.0, 0.0); n as usize];
    let mut norm = 0.0;
    for i in 0..n {
        for j in (i - 1).max(0)..n {
            norm += h[(i as usize, j as usize)].abs();
        }
    }
    if norm == 0.0 {
        return Ok(eig);
    }

    let hv = |h: &DMat, i: i64, j: i64| h[(i as usize, j as usize)];

    let mut en: i64 = n - 1;
    let mut t = 0.0; // accumulated exceptional shift
    let mut total_iters = 0usize;
    while en >= 0 {
        let mut its = 0usize;
        'qr: loop {
            // look for a single negligible subdiagonal element
            let mut l = en;
            while l > 0 {
                let mut s = hv(h, l - 1, l - 1).abs() + hv(h, l, l).abs();
                if s == 0.0 {
                    s = norm;
                }
                if hv(h, l, l - 1).abs() <= eps * s {
                    break;
                }
                l -= 1;
            }
            let x = hv(h, en, en);
            if l == en {
                eig[en as usize] = Complex64::new(x + t, 0.0);
                en -= 1;
                break 'qr;
            }
            let na = en - 1;
            let y = hv(h, na, na);
            let w = hv(h, en, na) * hv(h, na, en);
            if l == na {
                // 2x2 block: exact conjugate pairing for complex roots
                let p = (y - x) / 2.0;
                let q = p * p + w;
                let zz = q.abs().sqrt();
                let xs = x + t;
                if q >= 0.0 {
                    let zz = if p >= 0.0 { p + zz } else { p - zz };
                    let r1 = xs + zz;
                    let r2 = if zz != 0.0 { xs - w / zz } else { r1 };
                    eig[na as usize] = Complex64::new(r1, 0.0);
                    eig[en as usize] = Complex64::new(r2, 0.0);
                } else {
                    eig[na as usize] = Complex64::new(xs + p, zz);
                    eig[en as usize] = Complex64::new(xs + p, -zz);
                }
                en -= 2;
                break 'qr;
            }

            total_iters += 1;
            if total_iters > max_total {
                return Err(CoreError::NoConvergence(format!(
                    "QR budget {max_total} exhausted with {} eigenvalues pending",
                    en + 1
                )));
            }
            its += 1;
            let (mut x, mut y, mut w) = (x, y, w);
            if its % 30 == 0 {
                // exceptional shift
                t += x;
                for i in 0..=en {
                    let d = hv(h, i, i) - x;
                    h[(i as usize, i as usize)] = d;
                }
                let s = hv(h, en, na).abs() + hv(h, na, en - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }

            // two consecutive small subdiagonals
            let enm2 = en - 2;
            let mut m = enm2;
            let (mut p, mut q, mut r);
            loop {
                let zz = hv(h, m, m);
                let rr = x - zz;
                let ss = y - zz;
                p = (rr * ss - w) / hv(h, m + 1, m) + hv(h, m, m + 1);
                q = hv(h, m + 1, m + 1) - zz - rr - ss;
                r = hv(h, m + 2, m + 1);
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let tst1 = p.abs()
                    * (hv(h, m - 1, m - 1).abs() + zz.abs() + hv(h, m + 1, m + 1).abs());
                let tst2 = tst1 + hv(h, m, m - 1).abs() * (q.abs() + r.abs());
                if tst2 == tst1 {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=en {
                h[(i as usize, (i - 2) as usize)] = 0.0;
                if i > m + 2 {
                    h[(i as usize, (i - 3) as usize)] = 0.0;
                }
            }

            // double QR sweep over rows l..=en
            for k in m..=na {
                let notlast = k != na;
                if k != m {
                    p = hv(h, k, k - 1);
                    q = hv(h, k + 1, k - 1);
                    r = if notlast { hv(h, k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                let mut s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s == 0.0 {
                    continue;
                }
                if k != m {
                    h[(k as usize, (k - 1) as usize)] = -s * x;
                } else if l != m {
                    let v = hv(h, k, k - 1);
                    h[(k as usize, (k - 1) as usize)] = -v;
                }
                p += s;
                x = p / s;
                y = q / s;
                let zz = r / s;
                q /= p;
                r /= p;

                for j in k..=en {
                    let mut pp = hv(h, k, j) + q * hv(h, k + 1, j);
                    if notlast {
                        pp += r * hv(h, k + 2, j);
                        let v = hv(h, k + 2, j) - pp * zz;
                        h[((k + 2) as usize, j as usize)] = v;
                    }
                    let v1 = hv(h, k, j) - pp * x;
                    h[(k as usize, j as usize)] = v1;
                    let v2 = hv(h, k + 1, j) - pp * y;
                    h[((k + 1) as usize, j as usize)] = v2;
                }
                let upper = en.min(k + 3);
                for i in l..=upper {
                    let mut pp = x * hv(h, i, k) + y * hv(h, i, k + 1);
                    if notlast {
                        pp += zz * hv(h, i, k + 2);
                        let v = hv(h, i, k + 2) - pp * r;
                        h[(i as usize, (k + 2) as usize)] = v;
                    }
                    let v1 = hv(h, i, k) - pp;
                    h[(i as usize, k as usize)] = v1;
                    let v2 = hv(h, i, k + 1) - pp * q;
                    h[(i as usize, (k + 1) as usize)] = v2;
                }
            }
        }
    }
    Ok(eig)
}

/// Eigenvalues of a general real square matrix, sorted by descending
/// real part, ties broken by descending imaginary part. Conjugate pairs
/// come out exactly conjugate.
pub fn dense_eigs(a: &DMat) -> Result<Vec<Complex64>> {
    assert_eq!(a.n_rows, a.n_cols);
    let n = a.n_rows;
    if n == 0 {
        return Ok(Vec::new());
    }
    if n > 2000 {
        return Err(CoreError::NoConvergence(format!(
            "dense solver limited to order 2000, got {n}"
        )));
    }
    let mut h = a.clone();
    hessenberg(&mut h);
    let mut eig = hqr_eigenvalues(&mut h, 100 * n.max(10))?;
    eig.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap()
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    Ok(eig)
}

/// Eigenvalues plus right eigenvectors (one complex vector per
/// eigenvalue) obtained by inverse iteration on the shifted matrix.
/// Repeated eigenvalues get vectors deflated against the earlier copies
/// so semisimple multiplicities yield independent directions.
pub fn dense_eigs_with_vectors(a: &DMat) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
    let eig = dense_eigs(a)?;
    let scale = eig.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let mut vecs: Vec<Vec<Complex64>> = Vec::with_capacity(eig.len());
    for (i, &lambda) in eig.iter().enumerate() {
        let prior: Vec<&Vec<Complex64>> = eig[..i]
            .iter()
            .zip(&vecs)
            .filter(|(l, _)| (*l - lambda).norm() <= 1e-8 * scale)
            .map(|(_, v)| v)
            .collect();
        vecs.push(inverse_iteration_deflated(a, lambda, &prior)?);
    }
    Ok((eig, vecs))
}

/// Inverse iteration: 3 refinement solves of (A - lambda I) x = b.
pub fn inverse_iteration(a: &DMat, lambda: Complex64) -> Result<Vec<Complex64>> {
    inverse_iteration_deflated(a, lambda, &[])
}

fn inverse_iteration_deflated(
    a: &DMat,
    lambda: Complex64,
    deflate: &[&Vec<Complex64>],
) -> Result<Vec<Complex64>> {
    let n = a.n_rows;
    let scale = a.max_abs().max(lambda.norm()).max(1.0);
    // tiny diagonal offset keeps the factorization usable when lambda
    // is (numerically) an exact eigenvalue
    let shift = lambda + Complex64::new(scale * 1e-13, 0.0);
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = Complex64::new(a[(i, j)], 0.0);
        }
        m[i * n + i] -= shift;
    }
    let lu = ComplexLu::factor(n, m)?;
    let project = |x: &mut Vec<Complex64>| {
        for d in deflate {
            let c: Complex64 = d.iter().zip(x.iter()).map(|(u, v)| u.conj() * v).sum();
            for (xi, di) in x.iter_mut().zip(d.iter()) {
                *xi -= c * di;
            }
        }
    };
    let rounds = if deflate.is_empty() { 3 } else { 6 };
    for attempt in 0..(4 + deflate.len()) {
        // vary the start so the deflated component is nonzero
        let mut x: Vec<Complex64> = (0..n)
            .map(|i| {
                let t = ((attempt + 1) * (i + 2)) as f64;
                Complex64::new(t.cos(), 0.5 + t.sin())
            })
            .collect();
        project(&mut x);
        if norm_c(&x) < 1e-8 {
            continue;
        }
        normalize_c(&mut x);
        let mut ok = true;
        for _ in 0..rounds {
            let mut y = lu.solve(&x);
            project(&mut y);
            if norm_c(&y) < 1e-300 {
                ok = false;
                break;
            }
            normalize_c(&mut y);
            x = y;
        }
        if ok {
            return Ok(x);
        }
    }
    Err(CoreError::NoConvergence(format!(
        "inverse iteration at {lambda} exhausted start vectors"
    )))
}

fn norm_c(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize_c(x: &mut [Complex64]) {
    let norm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in x.iter_mut() {
            *v /= norm;
        }
    }
}

/// Dense complex LU with partial pivoting.
pub struct ComplexLu {
    n: usize,
    lu: Vec<Complex64>,
    piv: Vec<usize>,
}

impl ComplexLu {
    pub fn factor(n: usize, mut m: Vec<Complex64>) -> Result<Self> {
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = m[k * n + k].norm();
            for i in k + 1..n {
                let v = m[i * n + k].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                // keep going with a tiny pivot; solves will blow up in a
                // controlled direction which is what inverse iteration wants
                m[k * n + k] = Complex64::new(f64::MIN_POSITIVE.sqrt(), 0.0);
            } else if p != k {
                for j in 0..n {
                    m.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let d = m[k * n + k];
            for i in k + 1..n {
                let f = m[i * n + k] / d;
                m[i * n + k] = f;
                if f != Complex64::new(0.0, 0.0) {
                    for j in k + 1..n {
                        let v = m[k * n + j];
                        m[i * n + j] -= f * v;
                    }
                }
            }
        }
        Ok(ComplexLu { n, lu: m, piv })
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut x: Vec<Complex64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Dense real LU with partial pivoting, for the small solves in the
/// geometry pipeline.
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
    sign: f64,
    min_pivot: f64,
    max_pivot: f64,
}

impl DenseLu {
    pub fn factor(a: &DMat) -> Result<Self> {
        assert_eq!(a.n_rows, a.n_cols);
        let n = a.n_rows;
        let mut m = a.data.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot = 0.0_f64;
        let scale = a.max_abs();
        for k in 0..n {
            let mut p = k;
            let mut best = m[k * n + k].abs();
            for i in k + 1..n {
                let v = m[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-300 * scale.max(1.0) {
                return Err(CoreError::Singular(format!("pivot {best:.3e} in column {k}")));
            }
            if p != k {
                for j in 0..n {
                    m.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
                sign = -sign;
            }
            min_pivot = min_pivot.min(best);
            max_pivot = max_pivot.max(best);
            let d = m[k * n + k];
            for i in k + 1..n {
                let f = m[i * n + k] / d;
                m[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        m[i * n + j] -= f * m[k * n + j];
                    }
                }
            }
        }
        Ok(DenseLu { n, lu: m, piv, sign, min_pivot, max_pivot })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    pub fn det(&self) -> f64 {
        let mut d = self.sign;
        for i in 0..self.n {
            d *= self.lu[i * self.n + i];
        }
        d
    }

    /// Crude condition proxy from the pivot spread.
    pub fn pivot_ratio(&self) -> f64 {
        self.max_pivot / self.min_pivot
    }
}

/// Symmetric eigendecomposition (tridiagonalization followed by
/// implicit-shift QL). Returns eigenvalues ascending with matching
/// orthonormal eigenvector columns.
pub fn symmetric_eigen(a: &DMat) -> (Vec<f64>, DMat) {
    assert_eq!(a.n_rows, a.n_cols);
    let n = a.n_rows;
    let mut v = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e);
    (d, v)
}

// Householder tridiagonalization with accumulation (tred2 lineage).
fn tred2(v: &mut DMat, d: &mut [f64], e: &mut [f64]) {
    let n = v.n_rows;
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in j + 1..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let t = v[(k, j)] - (f * e[k] + g * d[k]);
                    v[(k, j)] = t;
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    let t = v[(k, j)] - g * d[k];
                    v[(k, j)] = t;
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

// Implicit-shift QL for the symmetric tridiagonal problem (tql2 lineage).
fn tql2(v: &mut DMat, d: &mut [f64], e: &mut [f64]) {
    let n = v.n_rows;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0_f64;
    let mut tst1 = 0.0_f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l && m < n {
            let mut guard = 0usize;
            loop {
                guard += 1;
                assert!(guard <= 60, "tridiagonal QL stalled (non-finite input?)");
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = (p * p + 1.0).sqrt();
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for i in l + 2..n {
                    d[i] -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = (p * p + e[i] * e[i]).sqrt();
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[(k, i + 1)];
                        v[(k, i + 1)] = s * v[(k, i)] + c * h;
                        v[(k, i)] = c * v[(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // sort ascending, carrying the eigenvector columns
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for j in i + 1..n {
            if d[j] < p {
                k = j;
                p = d[j];
            }
        }
        if k != i {
            d.swap(k, i);
            for r in 0..n {
                let t = v[(r, i)];
                v[(r, i)] = v[(r, k)];
                v[(r, k)] = t;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn quadratic_pair_from_kfp_minimum() {
        // 0.5*[[0,1],[-2,1]] has roots of z^2 - 0.5 z + 0.5
        let a = DMat::from_rows(&[&[0.0, 0.5], &[-1.0, 0.5]]);
        let e = dense_eigs(&a).unwrap();
        let disc: f64 = 1.75_f64.sqrt() / 2.0;
        assert_close(e[0].re, 0.25, 1e-12);
        assert_close(e[0].im, disc, 1e-12);
        assert_close(e[1].re, 0.25, 1e-12);
        assert_close(e[1].im, -disc, 1e-12);
        assert_eq!(e[0].im, -e[1].im, "conjugate pair must be exact");
    }

    #[test]
    fn diagonal_spectrum() {
        let a = DMat::from_rows(&[&[3.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 2.0]]);
        let e = dense_eigs(&a).unwrap();
        let re: Vec<f64> = e.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![3.0, 2.0, 1.0]);
        assert!(e.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn rotation_is_pure_imaginary() {
        let a = DMat::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let e = dense_eigs(&a).unwrap();
        assert_close(e[0].im, 1.0, 1e-14);
        assert_close(e[1].im, -1.0, 1e-14);
        assert!(e[0].re.abs() < 1e-14);
    }

    #[test]
    fn similarity_invariance_random() {
        let mut rng = SplitMix64::new(1234);
        for trial in 0..5 {
            let n = 8 + 3 * trial;
            let mut a = DMat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] = rng.next_symmetric();
                }
            }
            // well-conditioned T = I + 0.1 R
            let mut t = DMat::identity(n);
            for i in 0..n {
                for j in 0..n {
                    t[(i, j)] += 0.1 * rng.next_symmetric();
                }
            }
            let lu = DenseLu::factor(&t).unwrap();
            // T^{-1} A T column by column
            let at = a.matmul(&t);
            let mut sim = DMat::zeros(n, n);
            for j in 0..n {
                let col = lu.solve(&at.column(j));
                for i in 0..n {
                    sim[(i, j)] = col[i];
                }
            }
            let mut e1 = dense_eigs(&a).unwrap();
            let mut e2 = dense_eigs(&sim).unwrap();
            let key = |z: &Complex64| (z.re, z.im);
            e1.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            e2.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            let scale = a.max_abs();
            for (x, y) in e1.iter().zip(&e2) {
                assert!((x - y).norm() <= 1e-8 * scale.max(1.0) * 10.0,
                    "{x} vs {y} at n={n}");
            }
        }
    }

    #[test]
    fn eigenvector_residual_small() {
        let a = DMat::from_rows(&[&[0.0, 0.5], &[-1.0, 0.5]]);
        let (eigs, vecs) = dense_eigs_with_vectors(&a).unwrap();
        for (lam, v) in eigs.iter().zip(&vecs) {
            let mut res = 0.0;
            for i in 0..2 {
                let mut av = Complex64::new(0.0, 0.0);
                for j in 0..2 {
                    av += Complex64::new(a[(i, j)], 0.0) * v[j];
                }
                res += (av - lam * v[i]).norm_sqr();
            }
            assert!(res.sqrt() < 1e-10);
        }
    }

    #[test]
    fn symmetric_eigen_matches_known() {
        let a = DMat::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let (d, v) = symmetric_eigen(&a);
        assert_close(d[0], 1.0, 1e-14);
        assert_close(d[1], 3.0, 1e-14);
        // orthonormality
        let g = v.transpose().matmul(&v);
        assert_close(g[(0, 0)], 1.0, 1e-14);
        assert_close(g[(0, 1)], 0.0, 1e-14);
    }

    #[test]
    fn symmetric_eigen_random_reconstruction() {
        let mut rng = SplitMix64::new(9);
        let n = 12;
        let mut a = DMat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rng.next_symmetric();
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let (d, v) = symmetric_eigen(&a);
        // A V = V diag(d)
        for j in 0..n {
            let col = v.column(j);
            let av = a.matvec(&col);
            for i in 0..n {
                assert_close(av[i], d[j] * col[i], 1e-10);
            }
        }
        // ascending
        for w in d.windows(2) {
            assert!(w[0] <= w[1] + 1e-14);
        }
    }

    #[test]
    fn dense_lu_solves_and_det() {
        let a = DMat::from_rows(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let lu = DenseLu::factor(&a).unwrap();
        let x = lu.solve(&[3.0, 4.0]);
        assert_close(2.0 * x[0] + x[1], 3.0, 1e-14);
        assert_close(x[0] + 3.0 * x[1], 4.0, 1e-14);
        assert_close(lu.det(), 5.0, 1e-14);
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = DMat::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(DenseLu::factor(&a), Err(CoreError::Singular(_))));
    }

    #[test]
    fn hessenberg_preserves_spectrum_of_symmetric() {
        // eigenvalues of a known 3x3
        let a = DMat::from_rows(&[
            &[4.0, 1.0, 0.0],
            &[1.0, 4.0, 1.0],
            &[0.0, 1.0, 4.0],
        ]);
        let e = dense_eigs(&a).unwrap();
        let mut re: Vec<f64> = e.iter().map(|z| z.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let s2 = 2.0_f64.sqrt();
        assert_close(re[0], 4.0 - s2, 1e-12);
        assert_close(re[1], 4.0, 1e-12);
        assert_close(re[2], 4.0 + s2, 1e-12);
    }
}
