//! Classical symbols of the Hodge Laplacian and the quadratic-model
//! geometry at critical points: fundamental-matrix spectrum, eigenvalue
//! lattice, stable/unstable graph forms, Lyapunov and escape forms.

use num_complex::Complex64;
use serde::Serialize;

use crate::eigen::dense::{
    dense_eigs, dense_eigs_with_vectors, symmetric_eigen, DenseLu, DMat,
};
use crate::error::{CoreError, Result};
use crate::landscape::{CriticalPoint, ModelSpec};

const AXIS_TOL: f64 = 1e-8;

/// Symmetric matrix with inertia metadata.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub matrix: DMat,
    /// (positive, zero, negative) eigenvalue counts at relative
    /// tolerance 1e-8
    pub inertia: (usize, usize, usize),
}

impl QuadraticForm {
    pub fn new(matrix: DMat) -> Result<Self> {
        assert_eq!(matrix.n_rows, matrix.n_cols);
        let defect = matrix.sub(&matrix.transpose()).max_abs();
        if defect > 1e-12 * matrix.max_abs().max(1e-300) {
            return Err(CoreError::InvalidModel(format!(
                "quadratic form asymmetry {defect:.3e}"
            )));
        }
        let sym = matrix.symmetrize();
        let (eigs, _) = symmetric_eigen(&sym);
        let scale = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-8 * scale.max(1e-300);
        let neg = eigs.iter().filter(|&&e| e < -tol).count();
        let pos = eigs.iter().filter(|&&e| e > tol).count();
        let zero = eigs.len() - neg - pos;
        Ok(QuadraticForm { matrix: sym, inertia: (pos, zero, neg) })
    }

    pub fn dim(&self) -> usize {
        self.matrix.n_rows
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        symmetric_eigen(&self.matrix).0
    }

    pub fn apply(&self, x: &[f64]) -> f64 {
        let mx = self.matrix.matvec(x);
        x.iter().zip(&mx).map(|(a, b)| a * b).sum()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.inertia == (self.dim(), 0, 0)
    }
}

/// Principal symbol evaluators for the model: p = p2 + i p1 + p0 and
/// the real counterpart q(x, xi) = p2 + p1 - p0.
pub struct SymbolSet<'a> {
    pub model: &'a ModelSpec,
    b: DMat,
    c: DMat,
}

impl<'a> SymbolSet<'a> {
    pub fn new(model: &'a ModelSpec) -> Self {
        SymbolSet { model, b: model.b_part(), c: model.c_part() }
    }

    /// p2(x, xi) = <B xi, xi> (x enters only through a variable B,
    /// which is constant here)
    pub fn p2(&self, _x: &[f64], xi: &[f64]) -> f64 {
        quad(&self.b, xi)
    }

    /// p0(x) = <B phi'(x), phi'(x)>
    pub fn p0(&self, x: &[f64]) -> f64 {
        let g = self.model.jet().gradient(x);
        quad(&self.b, &g)
    }

    /// transport coefficient c(x) = 2 C phi'(x)
    pub fn transport(&self, x: &[f64]) -> Vec<f64> {
        let g = self.model.jet().gradient(x);
        self.c.matvec(&g).iter().map(|v| 2.0 * v).collect()
    }

    /// p1(x, xi) = <c(x), xi>
    pub fn p1(&self, x: &[f64], xi: &[f64]) -> f64 {
        let c = self.transport(x);
        c.iter().zip(xi).map(|(a, b)| a * b).sum()
    }

    pub fn p(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        Complex64::new(self.p2(x, xi) + self.p0(x), self.p1(x, xi))
    }

    /// q(x, xi) = -p(x, i xi) = p2 + p1 - p0
    pub fn q(&self, x: &[f64], xi: &[f64]) -> f64 {
        self.p2(x, xi) + self.p1(x, xi) - self.p0(x)
    }
}

fn quad(m: &DMat, v: &[f64]) -> f64 {
    let mv = m.matvec(v);
    v.iter().zip(&mv).map(|(a, b)| a * b).sum()
}

/// Eigenvalues of A phi''(U) ordered by descending real part (ties by
/// descending imaginary part), conjugate pairs exact.
pub fn fundamental_eigs(model: &ModelSpec, cp: &CriticalPoint) -> Result<Vec<Complex64>> {
    let h = DMat::from_vec(
        model.dim,
        model.dim,
        model.jet().hessian(&cp.location),
    );
    let m = model.a.matmul(&h);
    let eigs = dense_eigs(&m)?;
    let scale = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for z in &eigs {
        if z.re.abs() <= AXIS_TOL * scale {
            return Err(CoreError::ImaginaryAxisEigenvalue(format!(
                "eig {z} of A phi'' at {:?}",
                cp.location
            )));
        }
    }
    // trace consistency of the computed multiset
    let sum: Complex64 = eigs.iter().sum();
    let tr = m.trace();
    debug_assert!(
        (sum.re - tr).abs() <= 1e-10 * tr.abs().max(1.0) && sum.im.abs() <= 1e-10 * scale.max(1.0)
    );
    Ok(eigs)
}

/// 2 (sum of lambdas with positive real part - sum with negative real
/// part); imaginary parts cancel by conjugate pairing.
pub fn tr_tilde(lambdas: &[Complex64]) -> f64 {
    let mut s = Complex64::new(0.0, 0.0);
    for z in lambdas {
        if z.re > 0.0 {
            s += z;
        } else {
            s -= z;
        }
    }
    2.0 * s.re
}

/// Eigenvalues of the combined half-trace-plus-subprincipal operator on
/// m-forms: 2(lambda_{j1}+...+lambda_{jm} - sum over Re < 0), one value
/// per m-subset, sorted by (Re, Im).
pub fn subprincipal_eigs(lambdas: &[Complex64], degree: usize) -> Vec<Complex64> {
    let n = lambdas.len();
    assert!(degree <= n);
    let neg_sum: Complex64 = lambdas.iter().filter(|z| z.re < 0.0).sum();
    let mut out = Vec::new();
    // iterate over m-subsets in lexicographic order
    let mut idx: Vec<usize> = (0..degree).collect();
    loop {
        let subset_sum: Complex64 = idx.iter().map(|&i| lambdas[i]).sum();
        out.push(2.0 * (subset_sum - neg_sum));
        if degree == 0 {
            break;
        }
        // advance combination
        let mut i = degree;
        loop {
            if i == 0 {
                idx.clear();
                break;
            }
            i -= 1;
            if idx[i] != i + n - degree {
                idx[i] += 1;
                for j in i + 1..degree {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
        if idx.is_empty() {
            break;
        }
    }
    out.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    out
}

/// One lattice value with its multiplicity and a representative
/// spectral recipe.
#[derive(Debug, Clone, Serialize)]
pub struct MuEntry {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
    pub nu_vector: Vec<u32>,
    pub gamma_index: usize,
    /// true when distinct (gamma, nu) recipes collide on the same value
    pub resonant: bool,
}

const LATTICE_CAP: usize = 1_000_000;

/// All values gamma + sum nu_l * lambda_hat_l with |value| < radius,
/// where lambda_hat_l = 2 sign(Re lambda_l) lambda_l and gamma ranges
/// over the degree-m subprincipal eigenvalues.
pub fn mu_lattice(
    lambdas: &[Complex64],
    degree: usize,
    radius: f64,
) -> Result<Vec<MuEntry>> {
    assert!(radius > 0.0);
    let n = lambdas.len();
    let hats: Vec<Complex64> = lambdas
        .iter()
        .map(|z| if z.re > 0.0 { 2.0 * z } else { -2.0 * z })
        .collect();
    let gammas = subprincipal_eigs(lambdas, degree);

    // enumeration terminates because every Re(lambda_hat) > 0
    let mut raw: Vec<(Complex64, Vec<u32>, usize)> = Vec::new();
    let mut nu = vec![0u32; n];
    for gamma in &gammas {
        enumerate_nu(&hats, *gamma, radius, 0, &mut nu, &mut raw)?;
    }
    // group by value at absolute tolerance 1e-9 (values are O(1))
    raw.sort_by(|a, b| {
        a.0.re
            .partial_cmp(&b.0.re)
            .unwrap()
            .then(a.0.im.partial_cmp(&b.0.im).unwrap())
    });
    let mut entries: Vec<MuEntry> = Vec::new();
    for (val, nu, gi) in raw {
        match entries.last_mut() {
            Some(e)
                if (e.re - val.re).abs() <= 1e-9 && (e.im - val.im).abs() <= 1e-9 =>
            {
                e.multiplicity += 1;
                if e.nu_vector != nu || e.gamma_index != gi {
                    e.resonant = true;
                }
            }
            _ => entries.push(MuEntry {
                re: val.re,
                im: val.im,
                multiplicity: 1,
                nu_vector: nu,
                gamma_index: gi,
                resonant: false,
            }),
        }
    }
    Ok(entries)
}

fn enumerate_nu(
    hats: &[Complex64],
    base: Complex64,
    radius: f64,
    level: usize,
    nu: &mut Vec<u32>,
    out: &mut Vec<(Complex64, Vec<u32>, usize)>,
) -> Result<()> {
    // `base` carries gamma plus contributions below `level`
    if level == hats.len() {
        if base.norm() < radius {
            // gamma index recovered by caller ordering; patched below
            out.push((base, nu.clone(), usize::MAX));
        }
        return Ok(());
    }
    let mut k = 0u32;
    loop {
        let shifted = base + (k as f64) * hats[level];
        // Re grows monotonically with k; once too large, stop
        if shifted.re - radius > 0.0 && k > 0 {
            break;
        }
        if shifted.re > radius && k == 0 {
            // still record nothing, deeper levels only increase Re
            break;
        }
        nu[level] = k;
        enumerate_nu(hats, shifted, radius, level + 1, nu, out)?;
        if out.len() > LATTICE_CAP {
            return Err(CoreError::Overflow(LATTICE_CAP));
        }
        k += 1;
        if k > 10_000 {
            break;
        }
    }
    nu[level] = 0;
    Ok(())
}

/// Lattice report for one critical point.
#[derive(Debug, Clone, Serialize)]
pub struct MuLattice {
    pub critical_index: usize,
    pub lambdas: Vec<[f64; 2]>,
    pub tr_tilde: f64,
    pub subprincipal_by_degree: Vec<Vec<[f64; 2]>>,
    pub degree: usize,
    pub radius: f64,
    pub entries: Vec<MuEntry>,
}

impl MuLattice {
    pub fn build(
        model: &ModelSpec,
        cp: &CriticalPoint,
        critical_index: usize,
        degree: usize,
        radius: f64,
    ) -> Result<Self> {
        let lambdas = fundamental_eigs(model, cp)?;
        let n = lambdas.len();
        let mut entries = mu_lattice(&lambdas, degree, radius)?;
        // patch gamma indices: recompute per entry from its recipe
        let gammas = subprincipal_eigs(&lambdas, degree);
        let hats: Vec<Complex64> = lambdas
            .iter()
            .map(|z| if z.re > 0.0 { 2.0 * z } else { -2.0 * z })
            .collect();
        for e in &mut entries {
            let shift: Complex64 = e
                .nu_vector
                .iter()
                .zip(&hats)
                .map(|(&k, h)| (k as f64) * h)
                .sum();
            let target = Complex64::new(e.re, e.im) - shift;
            let gi = gammas
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    (a.1 - target).norm().partial_cmp(&(b.1 - target).norm()).unwrap()
                })
                .map(|(i, _)| i)
                .unwrap_or(0);
            e.gamma_index = gi;
        }
        Ok(MuLattice {
            critical_index,
            lambdas: lambdas.iter().map(|z| [z.re, z.im]).collect(),
            tr_tilde: tr_tilde(&lambdas),
            subprincipal_by_degree: (0..=n)
                .map(|m| {
                    subprincipal_eigs(&lambdas, m)
                        .iter()
                        .map(|z| [z.re, z.im])
                        .collect()
                })
                .collect(),
            degree,
            radius,
            entries,
        })
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.entries
            .iter()
            .flat_map(|e| std::iter::repeat(Complex64::new(e.re, e.im)).take(e.multiplicity))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Outgoing,
    Incoming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    /// q(x, xi)
    Plain,
    /// q-check(x, xi) = q(x, -xi), the adjoint-complex symbol
    Check,
}

/// Hamilton-map linearization of the quadratic model of q (or q-check)
/// at a critical point: block matrix [[2CH, 2B], [2HBH, 2HC]] with the
/// sign of C flipped for the adjoint symbol.
pub fn fundamental_matrix(model: &ModelSpec, cp: &CriticalPoint, kind: SymbolKind) -> DMat {
    let n = model.dim;
    let h = DMat::from_vec(n, n, model.jet().hessian(&cp.location));
    let b = model.b_part();
    let c = match kind {
        SymbolKind::Plain => model.c_part(),
        SymbolKind::Check => model.c_part().scale(-1.0),
    };
    let ch = c.matmul(&h);
    let hbh = h.matmul(&b).matmul(&h);
    let hc = h.matmul(&c);
    let mut f = DMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            f[(i, j)] = 2.0 * ch[(i, j)];
            f[(i, j + n)] = 2.0 * b[(i, j)];
            f[(i + n, j)] = 2.0 * hbh[(i, j)];
            f[(i + n, j + n)] = 2.0 * hc[(i, j)];
        }
    }
    f
}

const GRAPH_COND_LIMIT: f64 = 1e8;

/// Graph matrix M of the invariant subspace xi = M x for the selected
/// half of the spectrum of the linearized flow, symmetrized, with the
/// quadratic eikonal residual verified.
pub fn stable_quadratic_form(
    model: &ModelSpec,
    cp: &CriticalPoint,
    direction: Direction,
    kind: SymbolKind,
) -> Result<QuadraticForm> {
    let n = model.dim;
    let f = fundamental_matrix(model, cp, kind);
    let (eigs, vecs) = dense_eigs_with_vectors(&f)?;
    let scale = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for z in &eigs {
        if z.re.abs() <= AXIS_TOL * scale {
            return Err(CoreError::ImaginaryAxisEigenvalue(format!(
                "linearized flow eigenvalue {z}"
            )));
        }
    }
    let want_positive = direction == Direction::Outgoing;
    // real basis of the selected invariant subspace: one column per real
    // eigenvalue, a (Re, Im) 2-plane per conjugate pair
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (z, v) in eigs.iter().zip(&vecs) {
        if (z.re > 0.0) != want_positive {
            continue;
        }
        if z.im < 0.0 {
            continue; // pair handled through its Im > 0 member
        }
        if z.im == 0.0 {
            cols.push(realize_phase(v));
        } else {
            cols.push(v.iter().map(|c| c.re).collect());
            cols.push(v.iter().map(|c| c.im).collect());
        }
    }
    if cols.len() != n {
        return Err(CoreError::ImaginaryAxisEigenvalue(format!(
            "selected subspace has dimension {} instead of {n}",
            cols.len()
        )));
    }
    // conditioning of the merged real basis (Jordan-like inputs rejected)
    let mut w = DMat::zeros(2 * n, n);
    for (j, col) in cols.iter().enumerate() {
        for i in 0..2 * n {
            w[(i, j)] = col[i];
        }
    }
    let gram = w.transpose().matmul(&w);
    let (geigs, _) = symmetric_eigen(&gram);
    if geigs[0] <= 0.0 || (geigs[n - 1] / geigs[0]) > GRAPH_COND_LIMIT * GRAPH_COND_LIMIT {
        return Err(CoreError::NotAGraph(format!(
            "basis condition {:.3e} exceeds limit",
            (geigs[n - 1] / geigs[0].max(1e-300)).sqrt()
        )));
    }
    // write the subspace as xi = M x
    let mut x_top = DMat::zeros(n, n);
    let mut xi_bot = DMat::zeros(n, n);
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            x_top[(i, j)] = col[i];
            xi_bot[(i, j)] = col[i + n];
        }
    }
    let lu = DenseLu::factor(&x_top.transpose())
        .map_err(|_| CoreError::NotAGraph("x-projection is rank deficient".into()))?;
    if lu.pivot_ratio() > GRAPH_COND_LIMIT {
        return Err(CoreError::NotAGraph(format!(
            "x-projection condition {:.3e}",
            lu.pivot_ratio()
        )));
    }
    // M = Xi X^{-1}: solve X^T M^T = Xi^T row by row
    let mut m = DMat::zeros(n, n);
    for i in 0..n {
        let rhs: Vec<f64> = (0..n).map(|j| xi_bot[(i, j)]).collect();
        let row = lu.solve(&rhs);
        for j in 0..n {
            m[(i, j)] = row[j];
        }
    }
    let asym = m.sub(&m.transpose()).max_abs();
    if asym > 1e-8 * m.max_abs().max(1e-300) {
        return Err(CoreError::NotAGraph(format!(
            "graph matrix asymmetry {asym:.3e}"
        )));
    }
    let m = m.symmetrize();

    // quadratic eikonal residual: q(x, Mx) must vanish identically
    let h = DMat::from_vec(n, n, model.jet().hessian(&cp.location));
    let b = model.b_part();
    let c = match kind {
        SymbolKind::Plain => model.c_part(),
        SymbolKind::Check => model.c_part().scale(-1.0),
    };
    let mbm = m.transpose().matmul(&b).matmul(&m);
    let mch = m.transpose().matmul(&c).matmul(&h);
    let hcm = h.matmul(&c).matmul(&m);
    let hbh = h.matmul(&b).matmul(&h);
    let residual = mbm.add(&mch).sub(&hcm).sub(&hbh);
    let qscale = [
        b.max_abs(),
        hbh.max_abs(),
        c.matmul(&h).max_abs(),
        mbm.max_abs(),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    if residual.max_abs() > 1e-8 * qscale.max(1e-300) {
        return Err(CoreError::NotAGraph(format!(
            "eikonal residual {:.3e} relative to {:.3e}",
            residual.max_abs(),
            qscale
        )));
    }
    QuadraticForm::new(m)
}

/// Rotates a complex eigenvector of a real eigenvalue onto the real
/// axis and returns the real part.
fn realize_phase(v: &[Complex64]) -> Vec<f64> {
    let k = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let phase = v[k] / v[k].norm();
    v.iter().map(|c| (c * phase.conj()).re).collect()
}

/// Lyapunov quadratic form for a hyperbolic matrix flow.
#[derive(Debug, Clone)]
pub struct LyapunovForm {
    pub form: QuadraticForm,
    /// certified constant: min over |x| = 1 of (Mx) . grad G(x)
    pub certified: f64,
    pub horizon: f64,
}

/// G = G_+ (+) (-G_-) built from time averages of the squared flow on
/// the invariant splitting, with fourth-order fixed-step quadrature.
pub fn lyapunov_form(m: &DMat, t_horizon: f64) -> Result<LyapunovForm> {
    assert!(t_horizon > 0.0);
    let n = m.n_rows;
    let (eigs, vecs) = dense_eigs_with_vectors(m)?;
    let scale = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for z in &eigs {
        if z.re.abs() <= AXIS_TOL * scale {
            return Err(CoreError::ImaginaryAxisEigenvalue(format!(
                "Lyapunov input eigenvalue {z}"
            )));
        }
    }
    let mut cols: Vec<(bool, Vec<f64>)> = Vec::new();
    for (z, v) in eigs.iter().zip(&vecs) {
        if z.im < 0.0 {
            continue;
        }
        if z.im == 0.0 {
            cols.push((z.re > 0.0, realize_phase(v)));
        } else {
            cols.push((z.re > 0.0, v.iter().map(|c| c.re).collect()));
            cols.push((z.re > 0.0, v.iter().map(|c| c.im).collect()));
        }
    }
    assert_eq!(cols.len(), n);
    let n_plus = cols.iter().filter(|(p, _)| *p).count();
    let n_minus = n - n_plus;

    // oblique projectors onto the stable/unstable splitting
    let mut w = DMat::zeros(n, n);
    for (j, (_, col)) in cols.iter().enumerate() {
        for i in 0..n {
            w[(i, j)] = col[i];
        }
    }
    let lu = DenseLu::factor(&w)?;
    let mut proj_plus = DMat::zeros(n, n);
    let mut proj_minus = DMat::zeros(n, n);
    for jcol in 0..n {
        let mut unit = vec![0.0; n];
        unit[jcol] = 1.0;
        let coeffs = lu.solve(&unit); // coordinates of e_j in the basis
        for (k, (is_plus, col)) in cols.iter().enumerate() {
            let target = if *is_plus { &mut proj_plus } else { &mut proj_minus };
            for i in 0..n {
                target[(i, jcol)] += col[i] * coeffs[k];
            }
        }
    }

    let k_plus = flow_average_gram(m, t_horizon, 1.0);
    let k_minus = flow_average_gram(m, t_horizon, -1.0);
    let g = proj_plus
        .transpose()
        .matmul(&k_plus)
        .matmul(&proj_plus)
        .sub(&proj_minus.transpose().matmul(&k_minus).matmul(&proj_minus));
    let form = QuadraticForm::new(g.symmetrize())?;
    if form.inertia != (n_plus, 0, n_minus) {
        return Err(CoreError::ImaginaryAxisEigenvalue(format!(
            "Lyapunov form inertia {:?} does not match split ({n_plus}, 0, {n_minus})",
            form.inertia
        )));
    }
    // derivative form (Mx) . grad G = x^T (M^T G + G M) x
    let d = m
        .transpose()
        .matmul(&form.matrix)
        .add(&form.matrix.matmul(m))
        .symmetrize();
    let (deigs, _) = symmetric_eigen(&d);
    Ok(LyapunovForm { form, certified: deigs[0], horizon: t_horizon })
}

/// (1/T) int_0^T exp(s t M)^T exp(s t M) dt by Simpson over an RK4-
/// propagated matrix flow, 2048 fixed steps.
fn flow_average_gram(m: &DMat, t_horizon: f64, sign: f64) -> DMat {
    let n = m.n_rows;
    let steps = 2048usize;
    let dt = sign * t_horizon / steps as f64;
    let mut e = DMat::identity(n);
    let mut acc = DMat::zeros(n, n);
    let weight = |i: usize| -> f64 {
        if i == 0 || i == steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    acc = acc.add(&e.transpose().matmul(&e).scale(weight(0)));
    for i in 1..=steps {
        e = rk4_matrix_step(m, &e, dt);
        acc = acc.add(&e.transpose().matmul(&e).scale(weight(i)));
    }
    // Simpson: (h/3) sum w_i f_i, then divide by T
    acc.scale((dt.abs() / 3.0) / t_horizon)
}

fn rk4_matrix_step(m: &DMat, e: &DMat, dt: f64) -> DMat {
    let k1 = m.matmul(e);
    let k2 = m.matmul(&e.add(&k1.scale(dt / 2.0)));
    let k3 = m.matmul(&e.add(&k2.scale(dt / 2.0)));
    let k4 = m.matmul(&e.add(&k3.scale(dt)));
    e.add(
        &k1.add(&k2.scale(2.0))
            .add(&k3.scale(2.0))
            .add(&k4)
            .scale(dt / 6.0),
    )
}

/// Default horizon for the Lyapunov construction.
pub fn lyapunov_default_horizon(m: &DMat) -> Result<f64> {
    let eigs = dense_eigs(m)?;
    let min_re = eigs.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
    if min_re <= 0.0 || !min_re.is_finite() {
        return Err(CoreError::ImaginaryAxisEigenvalue(
            "cannot scale Lyapunov horizon".into(),
        ));
    }
    Ok(5.0 / min_re)
}

/// Escape-form certificate at a critical point: unit-scaled Lyapunov
/// forms G(x), G-tilde(xi) and the largest dyadic epsilon for which
/// Re p0((x,xi) + i eps H_G) - (eps/100) |(x,xi)|^2 is PSD.
pub fn escape_form(
    model: &ModelSpec,
    cp: &CriticalPoint,
) -> Result<(QuadraticForm, QuadraticForm, f64)> {
    let n = model.dim;
    let h = DMat::from_vec(n, n, model.jet().hessian(&cp.location));
    let b = model.b_part();
    let c = model.c_part();
    let aph = model.a.matmul(&h);
    let pha = h.matmul(&model.a);
    let horizon = lyapunov_default_horizon(&aph)?;
    let g_raw = lyapunov_form(&aph, horizon)?;
    let gt_raw = lyapunov_form(&pha, horizon)?;
    // unit scaling: spectral radius 1/2 keeps the eps^2 penalty small
    let g = scale_to_half(&g_raw.form.matrix);
    let gt = scale_to_half(&gt_raw.form.matrix);

    let c0 = 100.0;
    let hbh = h.matmul(&b).matmul(&h);
    for k in 1..=20 {
        let eps = 0.5f64.powi(k);
        let re_form = escape_re_form(&b, &c, &h, &hbh, &g, &gt, eps);
        // subtract (eps/C0) I
        let mut shifted = re_form.clone();
        for i in 0..2 * n {
            shifted[(i, i)] -= eps / c0;
        }
        let (eigs, _) = symmetric_eigen(&shifted);
        let tol = 1e-12 * re_form.max_abs().max(1.0);
        if eigs[0] >= -tol {
            return Ok((QuadraticForm::new(g)?, QuadraticForm::new(gt)?, eps));
        }
    }
    Err(CoreError::NoPositiveEpsilon)
}

/// Symmetric matrix of Re p0((x,xi) + i eps H_G) as a block form over
/// (x, xi); no cross block survives taking real parts.
pub fn escape_re_form(
    b: &DMat,
    c: &DMat,
    h: &DMat,
    hbh: &DMat,
    g: &DMat,
    gt: &DMat,
    eps: f64,
) -> DMat {
    let n = b.n_rows;
    // xx linear term: sym of -4 eps H C G, which equals 2 eps (GCH + (GCH)^T)
    let gch = g.matmul(c).matmul(h);
    let xx_lin = gch.add(&gch.transpose()).scale(2.0 * eps);
    let xx_quad = g.matmul(b).matmul(g).scale(-4.0 * eps * eps);
    let xx = hbh.add(&xx_lin).add(&xx_quad);

    // xi xi linear term: sym of +4 eps Gt H C
    let gthc = gt.matmul(h).matmul(c);
    let xixi_lin = gthc.add(&gthc.transpose()).scale(2.0 * eps);
    let xixi_quad = gt.matmul(hbh).matmul(gt).scale(-4.0 * eps * eps);
    let xixi = b.add(&xixi_lin).add(&xixi_quad);

    let mut out = DMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = xx[(i, j)];
            out[(i + n, j + n)] = xixi[(i, j)];
        }
    }
    out.symmetrize()
}

fn scale_to_half(g: &DMat) -> DMat {
    let (eigs, _) = symmetric_eigen(g);
    let radius = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    g.scale(0.5 / radius.max(1e-300))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{find_critical_points, registry, SearchBox};

    fn dw1_points() -> (ModelSpec, Vec<CriticalPoint>) {
        let m = registry("DW1").unwrap();
        let pts = find_critical_points(&m, SearchBox::default(), 8).unwrap();
        (m, pts)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn fundamental_eigs_dw1() {
        let (m, pts) = dw1_points();
        // minimum: roots of z^2 - z/2 + 1/2
        let lam_min = fundamental_eigs(&m, &pts[0]).unwrap();
        let disc = 1.75f64.sqrt() / 2.0;
        assert!(close(lam_min[0].re, 0.25, 1e-12) && close(lam_min[0].im, disc, 1e-12));
        assert_eq!(lam_min[0].im, -lam_min[1].im);
        // saddle: (1 +- sqrt 5)/4
        let lam_sad = fundamental_eigs(&m, &pts[2]).unwrap();
        let s5 = 5f64.sqrt();
        assert!(close(lam_sad[0].re, (1.0 + s5) / 4.0, 1e-12));
        assert!(close(lam_sad[1].re, (1.0 - s5) / 4.0, 1e-12));
    }

    #[test]
    fn diagonal_case_identity_structure() {
        let m = ModelSpec::new_unchecked(
            "diag",
            crate::poly::Poly::from_terms(2, &[(&[2, 0], 1.5), (&[0, 2], 0.25)]),
            DMat::identity(2),
        );
        let pts = find_critical_points(&m, SearchBox::default(), 8).unwrap();
        let lam = fundamental_eigs(&m, &pts[0]).unwrap();
        // phi'' = diag(3, 0.5); A = I
        assert!(close(lam[0].re, 3.0, 1e-10));
        assert!(close(lam[1].re, 0.5, 1e-10));
    }

    #[test]
    fn tr_tilde_values() {
        let (m, pts) = dw1_points();
        let lam_min = fundamental_eigs(&m, &pts[0]).unwrap();
        assert!(close(tr_tilde(&lam_min), 1.0, 1e-12));
        let lam_sad = fundamental_eigs(&m, &pts[2]).unwrap();
        assert!(close(tr_tilde(&lam_sad), 5f64.sqrt(), 1e-12));
        // A = I, phi'' = diag(1, -1)
        let lam = vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)];
        assert_eq!(tr_tilde(&lam), 4.0);
    }

    #[test]
    fn subprincipal_dw1_saddle() {
        let (m, pts) = dw1_points();
        let lam = fundamental_eigs(&m, &pts[2]).unwrap();
        let s5 = 5f64.sqrt();
        let m0 = subprincipal_eigs(&lam, 0);
        assert_eq!(m0.len(), 1);
        assert!(close(m0[0].re, (s5 - 1.0) / 2.0, 1e-12));
        let m1 = subprincipal_eigs(&lam, 1);
        assert_eq!(m1.len(), 2);
        assert!(close(m1[0].re, 0.0, 1e-12), "zero exactly at the Morse index degree");
        assert!(close(m1[1].re, s5, 1e-12));
        // minimum, degree 0: single zero
        let lam_min = fundamental_eigs(&m, &pts[0]).unwrap();
        let mm0 = subprincipal_eigs(&lam_min, 0);
        assert_eq!(mm0.len(), 1);
        assert!(mm0[0].norm() < 1e-12);
    }

    #[test]
    fn mu_lattice_dw1_minimum_b2() {
        let (m, pts) = dw1_points();
        let lam = fundamental_eigs(&m, &pts[0]).unwrap();
        // radius 1.9 keeps clear of the |1.5 +- i sqrt(1.75)| = 2 shell
        let inner = mu_lattice(&lam, 0, 1.9).unwrap();
        let im = 1.75f64.sqrt();
        let expect: Vec<(f64, f64)> =
            vec![(0.0, 0.0), (0.5, -im), (0.5, im), (1.0, 0.0)];
        assert_eq!(inner.len(), expect.len(), "{inner:?}");
        for ((re, imv), e) in expect.iter().zip(&inner) {
            assert!(close(e.re, *re, 1e-9) && close(e.im, *imv, 1e-9));
            assert_eq!(e.multiplicity, 1);
        }
        // radius 2.2 picks up the boundary shell and the (2,2) point
        let entries = mu_lattice(&lam, 0, 2.2).unwrap();
        assert_eq!(entries.len(), 7, "{entries:?}");
        assert!(entries.iter().any(|e| close(e.re, 1.5, 1e-9) && close(e.im, im, 1e-9)));
        assert!(entries.iter().any(|e| close(e.re, 2.0, 1e-9) && e.im.abs() < 1e-9));
        // lowest nonzero real part is 0.5
        let min_pos = entries
            .iter()
            .filter(|e| e.re > 1e-9)
            .map(|e| e.re)
            .fold(f64::INFINITY, f64::min);
        assert!(close(min_pos, 0.5, 1e-9));
        // conjugation closure with equal multiplicity
        for e in &entries {
            assert!(entries
                .iter()
                .any(|f| close(f.re, e.re, 1e-9)
                    && close(f.im, -e.im, 1e-9)
                    && f.multiplicity == e.multiplicity));
        }
    }

    #[test]
    fn mu_lattice_dw1_saddle_windows() {
        let (m, pts) = dw1_points();
        let lam = fundamental_eigs(&m, &pts[2]).unwrap();
        let s5 = 5f64.sqrt();
        let e1 = mu_lattice(&lam, 0, 1.0).unwrap();
        assert_eq!(e1.len(), 1);
        assert!(close(e1[0].re, (s5 - 1.0) / 2.0, 1e-9));
        // degree 1, radius 0.5: only the exact zero survives
        let e2 = mu_lattice(&lam, 1, 0.5).unwrap();
        assert_eq!(e2.len(), 1);
        assert!(e2[0].re.abs() < 1e-9 && e2[0].im.abs() < 1e-9);
    }

    #[test]
    fn isospectral_family() {
        let (m, pts) = dw1_points();
        let h = DMat::from_vec(2, 2, m.jet().hessian(&pts[2].location));
        let variants = [
            m.a.matmul(&h),
            m.a.transpose().matmul(&h),
            h.matmul(&m.a),
            h.matmul(&m.a.transpose()),
        ];
        let mut sets: Vec<Vec<(f64, f64)>> = Vec::new();
        for v in &variants {
            let mut e: Vec<(f64, f64)> = dense_eigs(v)
                .unwrap()
                .iter()
                .map(|z| (z.re, z.im))
                .collect();
            e.sort_by(|a, b| a.partial_cmp(b).unwrap());
            sets.push(e);
        }
        for s in &sets[1..] {
            for (a, b) in sets[0].iter().zip(s) {
                assert!(close(a.0, b.0, 1e-8) && close(a.1, b.1, 1e-8));
            }
        }
    }

    #[test]
    fn stable_form_dw1_saddle() {
        let (m, pts) = dw1_points();
        let saddle = &pts[2];
        let plus =
            stable_quadratic_form(&m, saddle, Direction::Outgoing, SymbolKind::Plain).unwrap();
        assert!(plus.is_positive_definite(), "{:?}", plus);
        let minus =
            stable_quadratic_form(&m, saddle, Direction::Incoming, SymbolKind::Plain).unwrap();
        assert_eq!(minus.inertia, (0, 0, 2), "phi-minus curvature is negative");
        // adjoint-complex relation: incoming for q-check equals -phi_+''
        let check_in =
            stable_quadratic_form(&m, saddle, Direction::Incoming, SymbolKind::Check).unwrap();
        let defect = check_in.matrix.add(&plus.matrix).max_abs();
        assert!(defect <= 1e-8 * plus.matrix.max_abs(), "defect {defect:.3e}");
    }

    #[test]
    fn stable_form_cleanness_at_saddle() {
        let (m, pts) = dw1_points();
        let saddle = &pts[2];
        let plus =
            stable_quadratic_form(&m, saddle, Direction::Outgoing, SymbolKind::Plain).unwrap();
        let h = DMat::from_vec(2, 2, m.jet().hessian(&saddle.location));
        let diff = QuadraticForm::new(plus.matrix.sub(&h)).unwrap();
        assert_eq!(diff.inertia, (1, 1, 0), "phi_+'' - phi'' is PSD with 1-d kernel");
        let minus =
            stable_quadratic_form(&m, saddle, Direction::Incoming, SymbolKind::Plain).unwrap();
        let diff2 = QuadraticForm::new(h.sub(&minus.matrix)).unwrap();
        assert_eq!(diff2.inertia, (1, 1, 0));
    }

    #[test]
    fn selfadjoint_case_gives_matrix_absolute_value() {
        let m = registry("DW1-selfadjoint").unwrap();
        let pts = find_critical_points(&m, SearchBox::default(), 8).unwrap();
        let saddle = &pts[2];
        let plus =
            stable_quadratic_form(&m, saddle, Direction::Outgoing, SymbolKind::Plain).unwrap();
        // phi'' = diag(-1, 1); |phi''| = I
        assert!(close(plus.matrix[(0, 0)], 1.0, 1e-9));
        assert!(close(plus.matrix[(1, 1)], 1.0, 1e-9));
        assert!(plus.matrix[(0, 1)].abs() < 1e-9);
    }

    #[test]
    fn lyapunov_scalar_cases() {
        // M = I in one dimension with T = 1: G = (e^2 - 1)/2
        let m = DMat::identity(1);
        let l = lyapunov_form(&m, 1.0).unwrap();
        let exact = (2f64.exp() - 1.0) / 2.0;
        assert!(close(l.form.matrix[(0, 0)], exact, 1e-9 * exact));
        assert_eq!(l.form.inertia, (1, 0, 0));
        assert!(l.certified >= 2.0 - 1e-9);
        // M = -I: sign flip
        let lm = lyapunov_form(&m.scale(-1.0), 1.0).unwrap();
        assert_eq!(lm.form.inertia, (0, 0, 1));
        assert!(close(lm.form.matrix[(0, 0)], -exact, 1e-9 * exact));
        assert!(lm.certified > 0.0);
    }

    #[test]
    fn lyapunov_at_dw1_saddle() {
        let (model, pts) = dw1_points();
        let h = DMat::from_vec(2, 2, model.jet().hessian(&pts[2].location));
        let m = model.a.matmul(&h);
        let horizon = lyapunov_default_horizon(&m).unwrap();
        let l = lyapunov_form(&m, horizon).unwrap();
        assert_eq!(l.form.inertia, (1, 0, 1));
        assert!(l.certified > 0.0, "certified constant {}", l.certified);
        // sampled cross-check of the certificate on the unit circle
        let d = m
            .transpose()
            .matmul(&l.form.matrix)
            .add(&l.form.matrix.matmul(&m));
        for k in 0..64 {
            let t = 2.0 * std::f64::consts::PI * (k as f64) / 64.0;
            let x = [t.cos(), t.sin()];
            let dx = d.matvec(&x);
            let v: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
            assert!(v >= l.certified - 1e-9);
        }
    }

    #[test]
    fn escape_form_certificates() {
        let (model, pts) = dw1_points();
        for cp in [&pts[0], &pts[2]] {
            let (_, _, eps) = escape_form(&model, cp).unwrap();
            assert!(eps > 0.0 && eps <= 0.5, "eps = {eps}");
        }
        // elliptic case: A = I, phi'' = I; eps = 1/2 certifies
        let m = ModelSpec::new_unchecked(
            "elliptic",
            crate::poly::Poly::from_terms(2, &[(&[2, 0], 0.5), (&[0, 2], 0.5)]),
            DMat::identity(2),
        );
        let pts = find_critical_points(&m, SearchBox::default(), 8).unwrap();
        let (_, _, eps) = escape_form(&m, &pts[0]).unwrap();
        assert_eq!(eps, 0.5);
    }

    #[test]
    fn escape_re_form_matches_direct_complex_evaluation() {
        let (model, pts) = dw1_points();
        let n = 2;
        let h = DMat::from_vec(n, n, model.jet().hessian(&pts[2].location));
        let b = model.b_part();
        let c = model.c_part();
        let hbh = h.matmul(&b).matmul(&h);
        let g = DMat::from_rows(&[&[0.3, -0.1], &[-0.1, 0.4]]);
        let gt = DMat::from_rows(&[&[0.2, 0.05], &[0.05, 0.35]]);
        let eps = 0.125;
        let form = escape_re_form(&b, &c, &h, &hbh, &g, &gt, eps);
        // direct evaluation of Re p0 at (x,xi) + i eps (Gt' xi, -G' x)
        let mut rng = crate::rng::SplitMix64::new(5);
        for _ in 0..50 {
            let x = rng.vector(n);
            let xi = rng.vector(n);
            let gpx: Vec<f64> = g.matvec(&x).iter().map(|v| 2.0 * v).collect();
            let gtpxi: Vec<f64> = gt.matvec(&xi).iter().map(|v| 2.0 * v).collect();
            let xc: Vec<Complex64> = x
                .iter()
                .zip(&gtpxi)
                .map(|(a, s)| Complex64::new(*a, eps * s))
                .collect();
            let xic: Vec<Complex64> = xi
                .iter()
                .zip(&gpx)
                .map(|(a, s)| Complex64::new(*a, -eps * s))
                .collect();
            // p0 = <B xi, xi> + 2 i <C H x, xi> + <B H x, H x> over C
            let mut val = Complex64::new(0.0, 0.0);
            let hx: Vec<Complex64> = (0..n)
                .map(|i| (0..n).map(|j| h[(i, j)] * xc[j]).sum())
                .collect();
            for i in 0..n {
                for j in 0..n {
                    val += b[(i, j)] * xic[i] * xic[j];
                    val += b[(i, j)] * hx[i] * hx[j];
                    val += 2.0 * Complex64::new(0.0, 1.0) * c[(i, j)] * hx[j] * xic[i];
                }
            }
            let mut z = Vec::with_capacity(2 * n);
            z.extend_from_slice(&x);
            z.extend_from_slice(&xi);
            let fz = form.matvec(&z);
            let quad: f64 = z.iter().zip(&fz).map(|(a, b)| a * b).sum();
            assert!(
                close(val.re, quad, 1e-10 * (1.0 + val.norm())),
                "{} vs {}",
                val.re,
                quad
            );
        }
    }

    #[test]
    fn symbol_positivity_and_lagrangian_vanishing() {
        let (model, _) = dw1_points();
        let sym = SymbolSet::new(&model);
        let mut rng = crate::rng::SplitMix64::new(8);
        for _ in 0..200 {
            let x: Vec<f64> = rng.vector(2).iter().map(|v| 2.0 * v).collect();
            let xi: Vec<f64> = rng.vector(2).iter().map(|v| 2.0 * v).collect();
            assert!(sym.p2(&x, &xi) >= 0.0);
            assert!(sym.p0(&x) >= 0.0);
            // q vanishes on xi = +/- phi'(x)
            let gplus = model.jet().gradient(&x);
            let gminus: Vec<f64> = gplus.iter().map(|v| -v).collect();
            assert!(sym.q(&x, &gplus).abs() <= 1e-12 * (1.0 + sym.p0(&x)));
            assert!(sym.q(&x, &gminus).abs() <= 1e-12 * (1.0 + sym.p0(&x)));
            // quadratic-level transport positivity <2B phi'' x, phi'' x> >= 0
            let h = DMat::from_vec(2, 2, model.jet().hessian(&[0.0, 0.0]));
            let hx = h.matvec(&x);
            let b = model.b_part();
            let bhx = b.matvec(&hx);
            let v: f64 = 2.0 * hx.iter().zip(&bhx).map(|(a, c)| a * c).sum::<f64>();
            assert!(v >= -1e-14);
        }
    }

    #[test]
    fn lattice_overflow_guard() {
        let lam = vec![
            Complex64::new(1e-4, 0.0),
            Complex64::new(1.2e-4, 0.0),
        ];
        assert!(matches!(
            mu_lattice(&lam, 0, 1.0),
            Err(CoreError::Overflow(_))
        ));
    }
}
