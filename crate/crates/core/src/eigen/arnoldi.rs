//! Shift-invert Arnoldi for large non-symmetric spectra.
//!
//! The iteration runs on (M - sigma)^{-1} supplied as an abstract
//! operator (banded LU solves plus optional deflation projectors).
//! Ritz values are mapped back through lambda = sigma + 1/theta and
//! every reported value carries a residual recomputed against the
//! original matrix, never the Hessenberg proxy. Converged vectors are
//! locked and projected out of later restarts.

use num_complex::Complex64;

use crate::eigen::dense::{dense_eigs_with_vectors, DMat};
use crate::error::{CoreError, Result};
use crate::rng::SplitMix64;

/// Real linear operator (matrix-free).
pub trait LinearOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

impl LinearOp for crate::sparse::Csr {
    fn dim(&self) -> usize {
        self.n_rows
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matvec(x)
    }
}

/// Complex linear operator, used for complex shifts.
pub trait ComplexOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64>;
}

#[derive(Debug, Clone)]
pub struct ArnoldiOptions {
    /// converged values wanted
    pub k: usize,
    /// Krylov basis size per cycle
    pub m: usize,
    pub max_restarts: usize,
    /// acceptance threshold for the recomputed residual, relative to ||M||
    pub residual_tol: f64,
    /// matrix norm estimate used to scale the residual threshold
    pub norm_estimate: f64,
}

impl ArnoldiOptions {
    pub fn new(k: usize, norm_estimate: f64) -> Self {
        ArnoldiOptions {
            k,
            m: (2 * k + 8).max(24),
            max_restarts: 40,
            residual_tol: 1e-8,
            norm_estimate,
        }
    }
}

/// One converged eigenpair. The vector is stored as (re, im) parts.
#[derive(Debug, Clone)]
pub struct RitzPair {
    pub value: Complex64,
    pub residual: f64,
    pub vec_re: Vec<f64>,
    pub vec_im: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ArnoldiResult {
    pub pairs: Vec<RitzPair>,
    pub iterations: usize,
    pub basis_size: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Deterministic start vector: ones plus a fixed-seed 1e-3 perturbation.
fn start_vector(n: usize) -> Vec<f64> {
    let mut rng = SplitMix64::new(1);
    let mut v: Vec<f64> = (0..n).map(|_| 1.0 + 1e-3 * rng.next_symmetric()).collect();
    let nrm = norm2(&v);
    for x in &mut v {
        *x /= nrm;
    }
    v
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // classical Gram-Schmidt with one reorthogonalization pass
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            if c != 0.0 {
                axpy(v, -c, b);
            }
        }
    }
}

/// Residual of (lambda, x) against the real operator, for a complex
/// vector split into re/im parts.
fn true_residual(
    m_op: &dyn LinearOp,
    lambda: Complex64,
    re: &[f64],
    im: &[f64],
) -> f64 {
    let mre = m_op.apply(re);
    let mim = m_op.apply(im);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..re.len() {
        let rr = mre[i] - lambda.re * re[i] + lambda.im * im[i];
        let ri = mim[i] - lambda.re * im[i] - lambda.im * re[i];
        num += rr * rr + ri * ri;
        den += re[i] * re[i] + im[i] * im[i];
    }
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Shift-invert Arnoldi with a real shift. `inv_op` applies
/// (M - sigma)^{-1}; `m_op` applies M itself (for residuals).
pub fn shift_invert_arnoldi(
    inv_op: &dyn LinearOp,
    m_op: &dyn LinearOp,
    sigma: f64,
    opts: &ArnoldiOptions,
) -> Result<ArnoldiResult> {
    let n = inv_op.dim();
    let m = opts.m.min(n);
    if m < 2 {
        return Err(CoreError::NotConverged("basis too small".into()));
    }
    let res_gate = opts.residual_tol * opts.norm_estimate.max(f64::MIN_POSITIVE);

    let mut locked: Vec<RitzPair> = Vec::new();
    let mut locked_basis: Vec<Vec<f64>> = Vec::new();
    let mut total_iters = 0usize;
    let mut v0 = start_vector(n);

    for _restart in 0..=opts.max_restarts {
        orthogonalize(&mut v0, &locked_basis);
        let nv = norm2(&v0);
        if nv < 1e-300 {
            v0 = start_vector(n);
            continue;
        }
        for x in &mut v0 {
            *x /= nv;
        }

        // Arnoldi factorization of the deflated inverse operator
        let mut basis: Vec<Vec<f64>> = vec![v0.clone()];
        let mut h = DMat::zeros(m + 1, m);
        let mut steps = 0usize;
        for j in 0..m {
            let mut w = inv_op.apply(&basis[j]);
            total_iters += 1;
            steps = j + 1;
            orthogonalize(&mut w, &locked_basis);
            // CGS against current basis, one reorth pass
            for pass in 0..2 {
                for (i, b) in basis.iter().enumerate() {
                    let c = dot(&w, b);
                    if pass == 0 {
                        h[(i, j)] = c;
                    } else {
                        h[(i, j)] += c;
                    }
                    axpy(&mut w, -c, b);
                }
            }
            let beta = norm2(&w);
            h[(j + 1, j)] = beta;
            if beta <= 1e-14 * h.max_abs().max(1.0) {
                break; // invariant subspace found
            }
            for x in &mut w {
                *x /= beta;
            }
            basis.push(w);
        }

        // Ritz data from the square Hessenberg block
        let mm = steps;
        let mut hm = DMat::zeros(mm, mm);
        for i in 0..mm {
            for j in 0..mm {
                hm[(i, j)] = h[(i, j)];
            }
        }
        let (thetas, svecs) = dense_eigs_with_vectors(&hm)?;
        let beta_last = if mm < m { 0.0 } else { h[(mm, mm - 1)] };

        // sort by |theta| descending: dominant in the inverse spectrum
        // means nearest the shift
        let mut order: Vec<usize> = (0..thetas.len()).collect();
        order.sort_by(|&a, &b| thetas[b].norm().partial_cmp(&thetas[a].norm()).unwrap());

        let mut progressed = false;
        for &idx in &order {
            if locked.len() >= opts.k {
                break;
            }
            let theta = thetas[idx];
            if theta.norm() < 1e-300 {
                continue;
            }
            let lambda = Complex64::new(sigma, 0.0) + theta.finv();
            // skip values already locked (conjugates are locked together)
            if locked
                .iter()
                .any(|p| (p.value - lambda).norm() <= 1e-10 * (1.0 + lambda.norm()))
            {
                continue;
            }
            let s = &svecs[idx];
            // cheap proxy first: last-component estimate
            let proxy = beta_last * s[mm - 1].norm();
            if proxy > 1e-6 * theta.norm().max(1e-300) {
                continue;
            }
            let mut vre = vec![0.0; n];
            let mut vim = vec![0.0; n];
            for (i, b) in basis.iter().take(mm).enumerate() {
                axpy(&mut vre, s[i].re, b);
                axpy(&mut vim, s[i].im, b);
            }
            let res = true_residual(m_op, lambda, &vre, &vim);
            if res <= res_gate {
                lock_pair(&mut locked, &mut locked_basis, lambda, res, vre, vim);
                progressed = true;
            }
        }

        if locked.len() >= opts.k {
            return Ok(finish(locked, total_iters, mm, true));
        }
        // restart from the best unconverged direction
        let mut next = None;
        for &idx in &order {
            let theta = thetas[idx];
            let lambda = Complex64::new(sigma, 0.0) + theta.finv();
            if locked
                .iter()
                .any(|p| (p.value - lambda).norm() <= 1e-10 * (1.0 + lambda.norm()))
            {
                continue;
            }
            let s = &svecs[idx];
            let mut vre = vec![0.0; n];
            for (i, b) in basis.iter().take(mm).enumerate() {
                axpy(&mut vre, s[i].re, b);
            }
            next = Some(vre);
            break;
        }
        match next {
            Some(v) if norm2(&v) > 1e-300 => v0 = v,
            _ => v0 = start_vector(n),
        }
        if !progressed && mm < m {
            // exact invariant subspace exhausted: nothing more to find
            let done = locked.len() >= opts.k;
            return Ok(finish(locked, total_iters, mm, done));
        }
    }
    let n_locked = locked.len();
    let r = finish(locked, total_iters, m, false);
    if n_locked > 0 {
        Ok(r)
    } else {
        Err(CoreError::NotConverged(format!(
            "no Ritz value reached the residual gate after {} restarts",
            opts.max_restarts
        )))
    }
}

fn lock_pair(
    locked: &mut Vec<RitzPair>,
    locked_basis: &mut Vec<Vec<f64>>,
    lambda: Complex64,
    res: f64,
    vre: Vec<f64>,
    vim: Vec<f64>,
) {
    // lock the (orthonormalized) real span of the pair
    let mut b1 = vre.clone();
    orthogonalize(&mut b1, locked_basis);
    let n1 = norm2(&b1);
    if n1 > 1e-12 {
        for x in &mut b1 {
            *x /= n1;
        }
        locked_basis.push(b1);
    }
    let im_norm = norm2(&vim);
    if lambda.im != 0.0 && im_norm > 1e-12 {
        let mut b2 = vim.clone();
        orthogonalize(&mut b2, locked_basis);
        let n2 = norm2(&b2);
        if n2 > 1e-12 {
            for x in &mut b2 {
                *x /= n2;
            }
            locked_basis.push(b2);
        }
    }
    let scale = {
        let mut s = 0.0;
        for i in 0..vre.len() {
            s += vre[i] * vre[i] + vim[i] * vim[i];
        }
        s.sqrt()
    };
    let vre_n: Vec<f64> = vre.iter().map(|x| x / scale).collect();
    let vim_n: Vec<f64> = vim.iter().map(|x| x / scale).collect();
    if lambda.im != 0.0 {
        // store both members of the conjugate pair explicitly
        locked.push(RitzPair {
            value: lambda,
            residual: res,
            vec_re: vre_n.clone(),
            vec_im: vim_n.clone(),
        });
        locked.push(RitzPair {
            value: lambda.conj(),
            residual: res,
            vec_re: vre_n,
            vec_im: vim_n.iter().map(|x| -x).collect(),
        });
    } else {
        locked.push(RitzPair { value: lambda, residual: res, vec_re: vre_n, vec_im: vim_n });
    }
}

fn finish(mut locked: Vec<RitzPair>, iters: usize, basis: usize, converged: bool) -> ArnoldiResult {
    locked.sort_by(|a, b| {
        a.value
            .norm()
            .partial_cmp(&b.value.norm())
            .unwrap()
            .then(b.value.im.partial_cmp(&a.value.im).unwrap())
    });
    ArnoldiResult { pairs: locked, iterations: iters, basis_size: basis, converged }
}

/// Complex-shift variant: the Krylov space is complex, the Hessenberg
/// eigenproblem is solved through its 2m x 2m real embedding, and the
/// spurious conjugate copies are filtered by reconstruction residual.
pub fn shift_invert_arnoldi_complex(
    inv_op: &dyn ComplexOp,
    m_op: &dyn LinearOp,
    sigma: Complex64,
    opts: &ArnoldiOptions,
) -> Result<ArnoldiResult> {
    let n = inv_op.dim();
    let m = opts.m.min(n);
    let res_gate = opts.residual_tol * opts.norm_estimate.max(f64::MIN_POSITIVE);

    let czero = Complex64::new(0.0, 0.0);
    let cdot = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    };
    let cnorm = |a: &[Complex64]| -> f64 { a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt() };

    let mut locked: Vec<RitzPair> = Vec::new();
    let mut total_iters = 0usize;
    let mut v0: Vec<Complex64> = start_vector(n).into_iter().map(|x| Complex64::new(x, 0.0)).collect();

    for _restart in 0..=opts.max_restarts {
        let nv = cnorm(&v0);
        if nv < 1e-300 {
            v0 = start_vector(n).into_iter().map(|x| Complex64::new(x, 0.0)).collect();
            continue;
        }
        for x in &mut v0 {
            *x /= nv;
        }
        let mut basis: Vec<Vec<Complex64>> = vec![v0.clone()];
        let mut h = vec![czero; (m + 1) * m];
        let mut steps = 0usize;
        for j in 0..m {
            let mut w = inv_op.apply(&basis[j]);
            total_iters += 1;
            steps = j + 1;
            for pass in 0..2 {
                for (i, b) in basis.iter().enumerate() {
                    let c = cdot(b, &w);
                    if pass == 0 {
                        h[i * m + j] = c;
                    } else {
                        h[i * m + j] += c;
                    }
                    for (wk, bk) in w.iter_mut().zip(b) {
                        *wk -= c * bk;
                    }
                }
            }
            let beta = cnorm(&w);
            h[(j + 1) * m + j] = Complex64::new(beta, 0.0);
            if beta <= 1e-14 {
                break;
            }
            for x in &mut w {
                *x /= beta;
            }
            basis.push(w);
        }

        let mm = steps;
        // 2m x 2m real embedding of the complex Hessenberg block
        let mut he = DMat::zeros(2 * mm, 2 * mm);
        for i in 0..mm {
            for j in 0..mm {
                let z = h[i * m + j];
                he[(2 * i, 2 * j)] = z.re;
                he[(2 * i, 2 * j + 1)] = -z.im;
                he[(2 * i + 1, 2 * j)] = z.im;
                he[(2 * i + 1, 2 * j + 1)] = z.re;
            }
        }
        let (thetas_e, svecs_e) = dense_eigs_with_vectors(&he)?;

        // keep eigenvalues whose reconstructed complex vector is genuine
        let mut cand: Vec<(Complex64, Vec<Complex64>)> = Vec::new();
        for (theta, se) in thetas_e.iter().zip(&svecs_e) {
            let mut s = vec![czero; mm];
            for i in 0..mm {
                s[i] = se[2 * i] + Complex64::new(0.0, 1.0) * se[2 * i + 1];
            }
            let sn = s.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if sn < 1e-8 {
                continue; // conjugate-copy artifact
            }
            for z in &mut s {
                *z /= sn;
            }
            // verify H s = theta s
            let mut err = 0.0;
            for i in 0..mm {
                let mut hs = czero;
                for j in 0..mm {
                    hs += h[i * m + j] * s[j];
                }
                err += (hs - theta * s[i]).norm_sqr();
            }
            if err.sqrt() <= 1e-6 * theta.norm().max(1e-300) {
                cand.push((*theta, s));
            }
        }
        cand.sort_by(|a, b| b.0.norm().partial_cmp(&a.0.norm()).unwrap());

        let beta_last = if mm < m { 0.0 } else { h[mm * m + (mm - 1)].re };
        let mut progressed = false;
        for (theta, s) in &cand {
            if locked.len() >= opts.k {
                break;
            }
            if theta.norm() < 1e-300 {
                continue;
            }
            let lambda = sigma + theta.finv();
            if locked
                .iter()
                .any(|p| (p.value - lambda).norm() <= 1e-10 * (1.0 + lambda.norm()))
            {
                continue;
            }
            let proxy = beta_last * s[mm - 1].norm();
            if proxy > 1e-6 * theta.norm().max(1e-300) {
                continue;
            }
            let mut vre = vec![0.0; n];
            let mut vim = vec![0.0; n];
            for (i, b) in basis.iter().take(mm).enumerate() {
                for idx in 0..n {
                    let z = s[i] * b[idx];
                    vre[idx] += z.re;
                    vim[idx] += z.im;
                }
            }
            let res = true_residual(m_op, lambda, &vre, &vim);
            if res <= res_gate {
                let scale = {
                    let mut t = 0.0;
                    for i in 0..n {
                        t += vre[i] * vre[i] + vim[i] * vim[i];
                    }
                    t.sqrt()
                };
                locked.push(RitzPair {
                    value: lambda,
                    residual: res,
                    vec_re: vre.iter().map(|x| x / scale).collect(),
                    vec_im: vim.iter().map(|x| x / scale).collect(),
                });
                progressed = true;
            }
        }
        if locked.len() >= opts.k {
            return Ok(finish(locked, total_iters, mm, true));
        }
        if !progressed {
            if mm < m || !locked.is_empty() {
                let done = locked.len() >= opts.k;
                return Ok(finish(locked, total_iters, mm, done));
            }
            v0 = start_vector(n).into_iter().map(|x| Complex64::new(x, 0.0)).collect();
        } else {
            // restart from the best unconverged candidate
            if let Some((_, s)) = cand.iter().find(|(t, _)| {
                let lambda = sigma + t.finv();
                !locked
                    .iter()
                    .any(|p| (p.value - lambda).norm() <= 1e-10 * (1.0 + lambda.norm()))
            }) {
                let mut v = vec![czero; n];
                for (i, b) in basis.iter().take(mm).enumerate() {
                    for idx in 0..n {
                        v[idx] += s[i] * b[idx];
                    }
                }
                v0 = v;
            }
        }
    }
    let n_locked = locked.len();
    let r = finish(locked, total_iters, m, false);
    if n_locked > 0 {
        Ok(r)
    } else {
        Err(CoreError::NotConverged(
            "complex-shift iteration found no converged Ritz value".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::Csr;

    struct BandSolve {
        lu: crate::eigen::banded::BandedLu,
    }
    impl LinearOp for BandSolve {
        fn dim(&self) -> usize {
            self.lu.n()
        }
        fn apply(&self, x: &[f64]) -> Vec<f64> {
            self.lu.solve(x)
        }
    }

    #[test]
    fn diagonal_matrix_smallest_eigs() {
        // diag(1..100), shift 0.4 -> {1, 2, 3}
        let n = 100;
        let mut trips: Vec<(usize, usize, f64)> =
            (0..n).map(|i| (i, i, (i + 1) as f64)).collect();
        let a = Csr::from_triplets(n, n, &mut trips);
        let shifted = a.shift_diag(0.4).to_banded();
        let solver = BandSolve { lu: shifted.factor().unwrap() };
        let opts = ArnoldiOptions::new(3, a.norm_one());
        let r = shift_invert_arnoldi(&solver, &a, 0.4, &opts).unwrap();
        assert!(r.converged);
        let mut re: Vec<f64> = r.pairs.iter().map(|p| p.value.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((re[0] - 1.0).abs() < 1e-8);
        assert!((re[1] - 2.0).abs() < 1e-8);
        assert!((re[2] - 3.0).abs() < 1e-8);
        for p in &r.pairs {
            assert!(p.residual <= 1e-8 * a.norm_one());
        }
    }

    #[test]
    fn nonsymmetric_complex_pair_found() {
        // block diag: [[0,1],[-1,0]] (eigs +/- i) and diag(3, 5)
        let mut trips = vec![
            (0, 1, 1.0),
            (1, 0, -1.0),
            (2, 2, 3.0),
            (3, 3, 5.0),
        ];
        let a = Csr::from_triplets(4, 4, &mut trips);
        let shifted = a.shift_diag(0.1).to_banded();
        let solver = BandSolve { lu: shifted.factor().unwrap() };
        let mut opts = ArnoldiOptions::new(2, a.norm_one());
        opts.m = 4;
        let r = shift_invert_arnoldi(&solver, &a, 0.1, &opts).unwrap();
        let has_i = r
            .pairs
            .iter()
            .any(|p| (p.value - Complex64::new(0.0, 1.0)).norm() < 1e-8);
        let has_minus_i = r
            .pairs
            .iter()
            .any(|p| (p.value - Complex64::new(0.0, -1.0)).norm() < 1e-8);
        assert!(has_i && has_minus_i, "pairs: {:?}", r.pairs.iter().map(|p| p.value).collect::<Vec<_>>());
    }

    struct EmbeddedSolve {
        lu: crate::eigen::banded::BandedLu,
    }
    impl ComplexOp for EmbeddedSolve {
        fn dim(&self) -> usize {
            self.lu.n() / 2
        }
        fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
            let n = x.len();
            let mut b = vec![0.0; 2 * n];
            for i in 0..n {
                b[2 * i] = x[i].re;
                b[2 * i + 1] = x[i].im;
            }
            self.lu.solve_in_place(&mut b);
            (0..n).map(|i| Complex64::new(b[2 * i], b[2 * i + 1])).collect()
        }
    }

    #[test]
    fn complex_shift_targets_one_branch() {
        let mut trips = vec![
            (0, 1, 2.0),
            (1, 0, -2.0), // eigenvalues +/- 2i
            (2, 2, 0.5),
        ];
        let a = Csr::from_triplets(3, 3, &mut trips);
        let sigma = Complex64::new(0.0, 1.7);
        let emb = a.embed_complex_shift(sigma).to_banded();
        let solver = EmbeddedSolve { lu: emb.factor().unwrap() };
        let mut opts = ArnoldiOptions::new(1, a.norm_one());
        opts.m = 3;
        let r = shift_invert_arnoldi_complex(&solver, &a, sigma, &opts).unwrap();
        let best = &r.pairs[0];
        assert!(
            (best.value - Complex64::new(0.0, 2.0)).norm() < 1e-8,
            "got {}",
            best.value
        );
    }
}
