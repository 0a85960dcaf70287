//! The spectral laboratory: low-lying spectra against the eigenvalue
//! lattice, the exponentially small splitting and its h-sweep fit, the
//! leading-order prefactor pipeline, resolvent probes, and eigenvector
//! localization reports.

use num_complex::Complex64;
use serde::Serialize;

use crate::complex::{assemble_complex, DiscreteComplex};
use crate::eigen::arnoldi::{
    shift_invert_arnoldi, shift_invert_arnoldi_complex, ArnoldiOptions, ArnoldiResult,
    ComplexOp, LinearOp, RitzPair,
};
use crate::eigen::banded::BandedLu;
use crate::eigen::dense::{DenseLu, DMat};
use crate::eigen::svd::smallest_singular_from_factors;
use crate::error::{CoreError, Result};
use crate::grid::{GridSpec, Layout};
use crate::landscape::{CriticalPoint, ModelSpec, WellStructure};
use crate::symbols::{
    fundamental_eigs, mu_lattice, stable_quadratic_form, Direction, MuLattice, SymbolKind,
};

/// Solver and discretization knobs; defaults reproduce the reference
/// workflows.
#[derive(Debug, Clone)]
pub struct LabConfig {
    /// grid rule: spacing <= h / grid_multiplier
    pub grid_multiplier: f64,
    pub box_half_width: f64,
    pub basis: usize,
    pub max_restarts: usize,
    pub residual_tol: f64,
    /// spectral window |lambda| < window_b * h
    pub window_b: f64,
    pub seed: u64,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            grid_multiplier: 2.0,
            box_half_width: 2.5,
            basis: 56,
            max_restarts: 40,
            residual_tol: 1e-8,
            window_b: 2.0,
            seed: 42,
        }
    }
}

/// Grid sized by the spacing rule Delta <= h / multiplier.
pub fn grid_for(dim: usize, h: f64, cfg: &LabConfig) -> GridSpec {
    let l = cfg.box_half_width;
    let n = ((2.0 * l * cfg.grid_multiplier / h).ceil() as usize).max(16);
    GridSpec::cube(dim, l, n)
}

pub fn assemble_for(model: &ModelSpec, h: f64, cfg: &LabConfig) -> Result<DiscreteComplex> {
    assemble_complex(&grid_for(model.dim, h, cfg), model, h)
}

#[derive(Debug, Clone, Serialize)]
pub struct EigRow {
    pub re: f64,
    pub im: f64,
    pub residual: f64,
    /// true for the analytically deflated kernel entry
    pub deflated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumResult {
    pub h: f64,
    pub degree: usize,
    pub grid_points: Vec<usize>,
    pub deflated_kernel: bool,
    pub eigenvalues: Vec<EigRow>,
}

/// Shift-invert operator: permuted banded solve wrapped with an
/// orthogonal projector that removes the exact kernel direction.
struct DeflatedSolve<'a> {
    lu: BandedLu,
    perm: Option<&'a [usize]>,
    kernel: Option<&'a [f64]>,
    scratch_dim: usize,
}

impl<'a> DeflatedSolve<'a> {
    fn project(&self, v: &mut [f64]) {
        if let Some(m) = self.kernel {
            let c: f64 = m.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            for (vi, mi) in v.iter_mut().zip(m) {
                *vi -= c * mi;
            }
        }
    }
}

impl<'a> LinearOp for DeflatedSolve<'a> {
    fn dim(&self) -> usize {
        self.scratch_dim
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        self.project(&mut v);
        let mut out = match self.perm {
            Some(p) => {
                let mut b = vec![0.0; v.len()];
                for (i, &pi) in p.iter().enumerate() {
                    b[pi] = v[i];
                }
                self.lu.solve_in_place(&mut b);
                let mut y = vec![0.0; v.len()];
                for (i, &pi) in p.iter().enumerate() {
                    y[i] = b[pi];
                }
                y
            }
            None => self.lu.solve(&v),
        };
        self.project(&mut out);
        out
    }
}

/// Complex solve through the interleaved real embedding.
struct EmbeddedSolve<'a> {
    lu: BandedLu,
    perm: Option<&'a [usize]>,
    kernel: Option<&'a [f64]>,
    n: usize,
}

impl<'a> EmbeddedSolve<'a> {
    fn project(&self, v: &mut [Complex64]) {
        if let Some(m) = self.kernel {
            let c: Complex64 = m
                .iter()
                .zip(v.iter())
                .map(|(a, b)| b * *a)
                .sum();
            for (vi, mi) in v.iter_mut().zip(m) {
                *vi -= c * mi;
            }
        }
    }
}

impl<'a> ComplexOp for EmbeddedSolve<'a> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut v = x.to_vec();
        self.project(&mut v);
        let mut b = vec![0.0; 2 * self.n];
        for (i, z) in v.iter().enumerate() {
            let slot = self.perm.map(|p| p[i]).unwrap_or(i);
            b[2 * slot] = z.re;
            b[2 * slot + 1] = z.im;
        }
        self.lu.solve_in_place(&mut b);
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        for (i, z) in out.iter_mut().enumerate() {
            let slot = self.perm.map(|p| p[i]).unwrap_or(i);
            *z = Complex64::new(b[2 * slot], b[2 * slot + 1]);
        }
        self.project(&mut out);
        out
    }
}

fn ensure_tight_box(complex: &DiscreteComplex) -> Result<()> {
    if complex.tail_ratio > 1e-12 {
        return Err(CoreError::InvalidModel(format!(
            "box too small for spectra: Maxwellian tail ratio {:.3e} at h = {}",
            complex.tail_ratio, complex.h
        )));
    }
    Ok(())
}

/// Low-lying spectrum in the window |lambda| < window_b * h.
///
/// Degree 0 deflates the exact Maxwellian kernel by projection, so the
/// tunneling eigenvalue is resolved as a simple dominant value of the
/// inverted operator. A real shift at -h/10 is tried first; predicted
/// complex lattice clusters that it misses get dedicated complex shifts.
pub fn low_spectrum(
    complex: &DiscreteComplex,
    degree: usize,
    count: usize,
    lattice_mus: &[Complex64],
    cfg: &LabConfig,
) -> Result<(SpectrumResult, Vec<RitzPair>)> {
    ensure_tight_box(complex)?;
    let h = complex.h;
    let m = complex.lap(degree);
    let perm = complex.solver_permutation(degree);
    let kernel: Option<&[f64]> = if degree == 0 {
        Some(complex.maxwellian.as_slice())
    } else {
        None
    };
    let norm_est = m.norm_one();
    let mut opts = ArnoldiOptions::new(count, norm_est);
    opts.m = cfg.basis.max(2 * count + 8);
    opts.max_restarts = cfg.max_restarts;
    opts.residual_tol = cfg.residual_tol;

    // real shift pass
    let sigma0 = -h / 10.0;
    let mp = match &perm {
        Some(p) => m.permute_symmetric(p),
        None => m.clone(),
    };
    let banded = mp.shift_diag(sigma0).to_banded();
    let solver = DeflatedSolve {
        lu: banded.factor()?,
        perm: perm.as_deref(),
        kernel,
        scratch_dim: m.n_rows,
    };
    let result = shift_invert_arnoldi(&solver, m, sigma0, &opts)?;
    let mut pairs: Vec<RitzPair> = result
        .pairs
        .into_iter()
        .filter(|p| p.value.norm() < cfg.window_b * h * 1.05)
        .collect();

    // complex shifts for predicted clusters the real pass missed
    let mut missed: Vec<Complex64> = Vec::new();
    for mu in lattice_mus {
        if mu.im <= 1e-9 {
            continue; // real clusters come out of the real pass
        }
        let target = mu * h;
        let found = pairs
            .iter()
            .any(|p| (p.value - target).norm() <= 0.35 * h * (1.0 + mu.norm()));
        if !found && missed.iter().all(|s| (s - mu).norm() > 1e-6) {
            missed.push(*mu);
        }
    }
    for mu in missed {
        let sigma = h * (mu + Complex64::new(0.11, 0.07));
        let emb = mp.embed_complex_shift(sigma).to_banded();
        let lu = match emb.factor() {
            Ok(f) => f,
            Err(CoreError::Singular(_)) => continue, // shift hit the spectrum
            Err(e) => return Err(e),
        };
        let solver = EmbeddedSolve { lu, perm: perm.as_deref(), kernel, n: m.n_rows };
        let mut copts = opts.clone();
        copts.k = 2;
        copts.m = opts.m.min(40);
        if let Ok(extra) = shift_invert_arnoldi_complex(&solver, m, sigma, &copts) {
            for p in extra.pairs {
                if p.value.norm() >= cfg.window_b * h * 1.05 {
                    continue;
                }
                let dup = pairs
                    .iter()
                    .any(|q| (q.value - p.value).norm() <= 1e-8 * h.max(p.value.norm()));
                if !dup {
                    // the conjugate eigenpair exists by realness
                    let conj = RitzPair {
                        value: p.value.conj(),
                        residual: p.residual,
                        vec_re: p.vec_re.clone(),
                        vec_im: p.vec_im.iter().map(|v| -v).collect(),
                    };
                    pairs.push(p);
                    let dup_c = pairs
                        .iter()
                        .any(|q| (q.value - conj.value).norm() <= 1e-8 * h.max(conj.value.norm()));
                    if !dup_c {
                        pairs.push(conj);
                    }
                }
            }
        }
    }

    // residual gate and window filter
    let gate = cfg.residual_tol * norm_est;
    for p in &pairs {
        if p.residual > gate {
            return Err(CoreError::ResidualTooLarge(format!(
                "{} has residual {:.3e} above {:.3e}",
                p.value, p.residual, gate
            )));
        }
    }
    pairs.retain(|p| p.value.norm() < cfg.window_b * h);
    pairs.sort_by(|a, b| {
        (a.value.re, a.value.im)
            .partial_cmp(&(b.value.re, b.value.im))
            .unwrap()
    });

    // accretivity of the reported set
    for p in &pairs {
        if p.value.re < -1e-8 * norm_est {
            return Err(CoreError::ResidualTooLarge(format!(
                "eigenvalue {} violates accretivity",
                p.value
            )));
        }
    }

    let mut rows: Vec<EigRow> = Vec::with_capacity(pairs.len() + 1);
    if degree == 0 {
        let r = complex.lap0.matvec(&complex.maxwellian);
        let res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        rows.push(EigRow { re: 0.0, im: 0.0, residual: res, deflated: true });
    }
    for p in &pairs {
        rows.push(EigRow {
            re: p.value.re,
            im: p.value.im,
            residual: p.residual,
            deflated: false,
        });
    }
    Ok((
        SpectrumResult {
            h,
            degree,
            grid_points: complex.grid.n_points.clone(),
            deflated_kernel: degree == 0,
            eigenvalues: rows,
        },
        pairs,
    ))
}

/// The lattice predictions of every critical point pooled together,
/// with multiplicity.
pub fn model_lattice(
    model: &ModelSpec,
    crit: &[CriticalPoint],
    degree: usize,
    radius: f64,
) -> Result<Vec<Complex64>> {
    let mut mus = Vec::new();
    for cp in crit {
        let lam = fundamental_eigs(model, cp)?;
        for e in mu_lattice(&lam, degree, radius)? {
            for _ in 0..e.multiplicity {
                mus.push(Complex64::new(e.re, e.im));
            }
        }
    }
    mus.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    Ok(mus)
}

/// Per-critical-point lattice reports, for serialization.
pub fn lattice_report(
    model: &ModelSpec,
    crit: &[CriticalPoint],
    degree: usize,
    radius: f64,
) -> Result<Vec<MuLattice>> {
    crit.iter()
        .enumerate()
        .map(|(i, cp)| MuLattice::build(model, cp, i, degree, radius))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchRow {
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub mu_re: f64,
    pub mu_im: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchReport {
    pub pairs: Vec<MatchRow>,
    pub unmatched_computed: Vec<[f64; 2]>,
    pub unmatched_lattice: Vec<[f64; 2]>,
    pub max_deviation: f64,
}

/// Greedy nearest pairing of computed lambda/h values against the
/// lattice multiset.
pub fn match_lattice(spectrum: &SpectrumResult, lattice: &[Complex64]) -> MatchReport {
    let h = spectrum.h;
    let mut remaining: Vec<Complex64> = lattice.to_vec();
    let mut computed: Vec<Complex64> = spectrum
        .eigenvalues
        .iter()
        .map(|r| Complex64::new(r.re / h, r.im / h))
        .collect();
    computed.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    let mut pairs = Vec::new();
    let mut unmatched_computed = Vec::new();
    let mut max_dev = 0.0f64;
    for lam in computed {
        if remaining.is_empty() {
            unmatched_computed.push([lam.re, lam.im]);
            continue;
        }
        let (best, _) = remaining
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - lam).norm().partial_cmp(&(b.1 - lam).norm()).unwrap())
            .unwrap();
        let mu = remaining.remove(best);
        let dev = (lam - mu).norm();
        max_dev = max_dev.max(dev);
        pairs.push(MatchRow {
            lambda_re: lam.re,
            lambda_im: lam.im,
            mu_re: mu.re,
            mu_im: mu.im,
            deviation: dev,
        });
    }
    MatchReport {
        pairs,
        unmatched_computed,
        unmatched_lattice: remaining.iter().map(|z| [z.re, z.im]).collect(),
        max_deviation: max_dev,
    }
}

/// Smallest nonzero eigenvalue of the degree-0 Laplacian; must be real
/// and positive.
pub fn splitting_value(complex: &DiscreteComplex, cfg: &LabConfig) -> Result<(f64, RitzPair)> {
    ensure_tight_box(complex)?;
    let h = complex.h;
    let m = &complex.lap0;
    let sigma = -h / 10.0;
    let banded = m.shift_diag(sigma).to_banded();
    let solver = DeflatedSolve {
        lu: banded.factor()?,
        perm: None,
        kernel: Some(complex.maxwellian.as_slice()),
        scratch_dim: m.n_rows,
    };
    let mut opts = ArnoldiOptions::new(1, m.norm_one());
    opts.m = cfg.basis.min(40).max(16);
    opts.max_restarts = cfg.max_restarts;
    opts.residual_tol = cfg.residual_tol;
    let result: ArnoldiResult = shift_invert_arnoldi(&solver, m, sigma, &opts)?;
    let best = result
        .pairs
        .iter()
        .min_by(|a, b| a.value.norm().partial_cmp(&b.value.norm()).unwrap())
        .ok_or_else(|| CoreError::NotConverged("no splitting value".into()))?;
    let val = best.value;
    if val.im.abs() > 1e-8 * val.norm() {
        return Err(CoreError::ComplexSplitting { val: val.re, im: val.im });
    }
    if val.re <= 0.0 {
        return Err(CoreError::ComplexSplitting { val: val.re, im: val.im });
    }
    Ok((val.re, best.clone()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SplittingFit {
    pub points: Vec<[f64; 2]>,
    pub slope: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub pass: bool,
}

/// Least squares of log(mu1) - log(h) against 1/h: intercept log a,
/// slope -s in the model mu1 = h a exp(-s/h).
pub fn fit_splitting(table: &[(f64, f64)]) -> Result<SplittingFit> {
    if table.len() < 5 {
        return Err(CoreError::BadFit(f64::NAN));
    }
    for &(h, mu) in table {
        if !(h > 0.0 && mu > 0.0) {
            return Err(CoreError::BadFit(f64::NAN));
        }
    }
    let xs: Vec<f64> = table.iter().map(|&(h, _)| 1.0 / h).collect();
    let ys: Vec<f64> = table.iter().map(|&(h, mu)| (mu / h).ln()).collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope_raw = sxy / sxx;
    let intercept = ym - slope_raw * xm;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let p = intercept + slope_raw * x;
            (y - p) * (y - p)
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - ym) * (y - ym)).sum();
    let r_squared = 1.0 - ss_res / ss_tot.max(f64::MIN_POSITIVE);
    let fit = SplittingFit {
        points: table.iter().map(|&(h, mu)| [h, mu]).collect(),
        slope: -slope_raw,
        prefactor: intercept.exp(),
        r_squared,
        pass: r_squared >= 0.999,
    };
    if !fit.pass {
        return Err(CoreError::BadFit(r_squared));
    }
    Ok(fit)
}

/// Quasimode interaction data for the leading-order prefactor.
#[derive(Debug, Clone, Serialize)]
pub struct InteractionData {
    /// normalization constants of the two well quasimodes
    pub c0: [f64; 2],
    /// leading interaction coefficients per well, both complexes
    pub l0: [f64; 2],
    pub l0_star: [f64; 2],
    /// predicted prefactors a_{j,0} = l_{j,0} l*_{j,0}
    pub a0: [f64; 2],
    /// actions aligned with the wells
    pub actions: [f64; 2],
    /// phase of the pairing integral at the cutoff radius, relative to
    /// the action (diagnostic; should be small)
    pub phase_defect: [f64; 2],
    /// relative change of a_{j,0} when the cutoff radius is halved
    pub r0_sensitivity: f64,
    pub r0: f64,
    /// total prefactor for a symmetric-well fit comparison
    pub total: f64,
}

/// Leading-order Gaussian pipeline for the interaction coefficients.
///
/// All inputs are saddle quadratic data and the flow curves of the
/// incoming separatrix; every integral is evaluated in closed matrix
/// form under the quadratic model.
pub fn predict_prefactor(
    model: &ModelSpec,
    wells: &WellStructure,
    r0: f64,
) -> Result<InteractionData> {
    let data = prefactor_at_radius(model, wells, r0)?;
    let half = prefactor_at_radius(model, wells, r0 / 2.0)?;
    let mut sens = 0.0f64;
    for j in 0..2 {
        sens = sens.max((half.a0[j] - data.a0[j]).abs() / data.a0[j].abs().max(1e-300));
    }
    Ok(InteractionData { r0_sensitivity: sens, ..data })
}

fn prefactor_at_radius(
    model: &ModelSpec,
    wells: &WellStructure,
    r0: f64,
) -> Result<InteractionData> {
    let n = model.dim;
    let saddle = &wells.saddle;
    let pi = std::f64::consts::PI;

    let phi_plus = stable_quadratic_form(model, saddle, Direction::Outgoing, SymbolKind::Plain)?;
    let phi_plus_star =
        stable_quadratic_form(model, saddle, Direction::Outgoing, SymbolKind::Check)?;

    // transport eigenvectors at the saddle for the negative eigenvalue
    let h_s = DMat::from_vec(n, n, model.jet().hessian(&saddle.location));
    let a00 = negative_real_eigenvector(&h_s.matmul(&model.a.transpose()))?;
    let mut a00 = a00;
    let a00_star = negative_real_eigenvector(&h_s.matmul(&model.a))?;

    // joint normalization: the leading Gaussian evaluation of the
    // saddle pairing must equal one
    let sum_form = phi_plus.matrix.add(&phi_plus_star.matrix);
    let det_sum = DenseLu::factor(&sum_form)?.det();
    if det_sum <= 0.0 {
        return Err(CoreError::NotAGraph(format!(
            "saddle pairing form has det {det_sum:.3e}"
        )));
    }
    let a_a00_star = model.a.matvec(&a00_star);
    let mut base: f64 = a_a00_star.iter().zip(&a00).map(|(u, v)| u * v).sum();
    base *= (2.0 * pi).powi(n as i32).sqrt() / det_sum.sqrt();
    if base == 0.0 {
        return Err(CoreError::SignViolation { l: 0.0, l_star: 0.0 });
    }
    if base < 0.0 {
        for v in &mut a00 {
            *v = -*v;
        }
        base = -base;
    }
    let t = 1.0 / base.sqrt();
    let a00: Vec<f64> = a00.iter().map(|v| t * v).collect();
    let a00_star: Vec<f64> = a00_star.iter().map(|v| t * v).collect();

    // quasimode normalizations from the well Hessians
    let mut c0 = [0.0f64; 2];
    for j in 0..2 {
        let hw = DMat::from_vec(n, n, model.jet().hessian(&wells.minima[j].location));
        let det = DenseLu::factor(&hw)?.det();
        c0[j] = det.powf(0.25) / pi.powf(n as f64 / 4.0);
    }

    // incoming separatrix curves and their crossings at radius r0
    let v_minus_a = negative_real_eigenvector(&model.a.matmul(&h_s))?;
    let v_minus_at = negative_real_eigenvector(&model.a.transpose().matmul(&h_s))?;
    let branches_a = trace_separatrix(model, wells, saddle, &v_minus_a, r0, false)?;
    let branches_at = trace_separatrix(model, wells, saddle, &v_minus_at, r0, true)?;

    let mut l0 = [0.0f64; 2];
    let mut l0_star = [0.0f64; 2];
    let mut a0 = [0.0f64; 2];
    let mut phase_defect = [0.0f64; 2];
    let gauss_pow = (2.0 * pi).powi(n as i32 - 1).sqrt();
    for j in 0..2 {
        // A-complex: phase phi_plus_star + phi, pairing <A a00*, tangent>
        let (x1, tangent) = &branches_a[j];
        let mperp = transverse_hessian(model, &phi_plus_star.matrix, x1, tangent)?;
        let va = model.a.matvec(&a00_star);
        let pairing: f64 = va.iter().zip(tangent).map(|(u, v)| u * v).sum();
        l0[j] = c0[j] * pairing * gauss_pow / mperp.sqrt();
        // transposed complex: phase phi_plus + phi, pairing <tA a00, tangent*>
        let (x1s, tangent_s) = &branches_at[j];
        let mperp_s = transverse_hessian(model, &phi_plus.matrix, x1s, tangent_s)?;
        let vat = model.a.transpose().matvec(&a00);
        let pairing_s: f64 = vat.iter().zip(tangent_s).map(|(u, v)| u * v).sum();
        l0_star[j] = c0[j] * pairing_s * gauss_pow / mperp_s.sqrt();

        let a = l0[j] * l0_star[j];
        if a <= 0.0 {
            return Err(CoreError::SignViolation { l: l0[j], l_star: l0_star[j] });
        }
        a0[j] = a;

        // phase diagnostic: quadratic phase at the crossing vs action
        let phase = quadratic_phase(model, &phi_plus_star.matrix, saddle, x1)
            - wells.minima[j].value;
        phase_defect[j] = (phase - wells.actions[j]).abs() / wells.actions[j];
    }

    Ok(InteractionData {
        c0,
        l0,
        l0_star,
        a0,
        actions: wells.actions,
        phase_defect,
        r0_sensitivity: 0.0,
        r0,
        total: a0[0] + a0[1],
    })
}

/// Real unit eigenvector for the unique negative real eigenvalue.
fn negative_real_eigenvector(m: &DMat) -> Result<Vec<f64>> {
    let (eigs, vecs) = crate::eigen::dense::dense_eigs_with_vectors(m)?;
    let scale = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut best: Option<(f64, &Vec<Complex64>)> = None;
    for (z, v) in eigs.iter().zip(&vecs) {
        if z.re < 0.0 && z.im.abs() <= 1e-8 * scale {
            match best {
                Some((r, _)) if r <= z.re => {}
                _ => best = Some((z.re, v)),
            }
        }
    }
    let (_, v) = best.ok_or_else(|| {
        CoreError::ImaginaryAxisEigenvalue("no negative real transport eigenvalue".into())
    })?;
    // rotate onto the real axis
    let k = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let phase = v[k] / v[k].norm();
    let mut real: Vec<f64> = v.iter().map(|c| (c * phase.conj()).re).collect();
    let nrm = real.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut real {
        *x /= nrm;
    }
    Ok(real)
}

/// Traces both branches of the incoming separatrix (the curve flowing
/// into the saddle under 2 A phi', or 2 tA phi' for the transposed
/// complex) out to radius r0, returning the crossing point and the
/// outward unit tangent, ordered by the well whose basin each branch
/// descends into.
fn trace_separatrix(
    model: &ModelSpec,
    wells: &WellStructure,
    saddle: &CriticalPoint,
    v_minus: &[f64],
    r0: f64,
    transposed: bool,
) -> Result<[(Vec<f64>, Vec<f64>); 2]> {
    let n = model.dim;
    let jet = model.jet();
    let field = |x: &[f64]| -> Vec<f64> {
        let g = jet.gradient(x);
        let v = if transposed {
            model.a.transpose().matvec(&g)
        } else {
            model.a.matvec(&g)
        };
        v.iter().map(|u| -2.0 * u).collect() // backward flow leaves the saddle
    };
    let ds = r0 / 1024.0;
    let max_steps = 16 * 1024;
    let mut out: Vec<(usize, (Vec<f64>, Vec<f64>))> = Vec::new();
    for sign in [1.0f64, -1.0] {
        let mut x: Vec<f64> =
            (0..n).map(|i| saddle.location[i] + sign * 1e-5 * r0 * v_minus[i]).collect();
        let mut steps = 0usize;
        let (x1, tangent) = loop {
            let f = field(&x);
            let fn2 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            if fn2 < 1e-14 {
                return Err(CoreError::CurveEscapesQuadraticRegion(
                    "separatrix stalled at a stationary point".into(),
                ));
            }
            // unit-speed RK4 step
            let xn = rk4_unit_step(&field, &x, ds);
            let r = dist(&xn, &saddle.location);
            if r >= r0 {
                // linear interpolation onto the sphere of radius r0
                let r_prev = dist(&x, &saddle.location);
                let t = (r0 - r_prev) / (r - r_prev);
                let xi: Vec<f64> =
                    x.iter().zip(&xn).map(|(a, b)| a + t * (b - a)).collect();
                let f1 = field(&xi);
                let f1n = f1.iter().map(|v| v * v).sum::<f64>().sqrt();
                break (xi.clone(), f1.iter().map(|v| v / f1n).collect::<Vec<f64>>());
            }
            x = xn;
            steps += 1;
            if steps > max_steps {
                return Err(CoreError::CurveEscapesQuadraticRegion(format!(
                    "no crossing of radius {r0} within {max_steps} steps"
                )));
            }
        };
        // basin classification by plain gradient descent
        let basin = classify_basin(model, wells, &x1)?;
        out.push((basin, (x1, tangent)));
    }
    if out[0].0 == out[1].0 {
        return Err(CoreError::CurveEscapesQuadraticRegion(
            "both separatrix branches descend into the same basin".into(),
        ));
    }
    out.sort_by_key(|(b, _)| *b);
    let mut it = out.into_iter();
    Ok([it.next().unwrap().1, it.next().unwrap().1])
}

fn rk4_unit_step(field: &impl Fn(&[f64]) -> Vec<f64>, x: &[f64], ds: f64) -> Vec<f64> {
    let unit = |v: Vec<f64>| -> Vec<f64> {
        let n = v.iter().map(|u| u * u).sum::<f64>().sqrt().max(1e-300);
        v.into_iter().map(|u| u / n).collect()
    };
    let k1 = unit(field(x));
    let k2 = unit(field(&step(x, &k1, ds / 2.0)));
    let k3 = unit(field(&step(x, &k2, ds / 2.0)));
    let k4 = unit(field(&step(x, &k3, ds)));
    (0..x.len())
        .map(|i| x[i] + ds / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn step(x: &[f64], d: &[f64], s: f64) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + s * b).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Index of the well whose basin contains x, by gradient descent.
fn classify_basin(model: &ModelSpec, wells: &WellStructure, x: &[f64]) -> Result<usize> {
    let jet = model.jet();
    let mut p = x.to_vec();
    for _ in 0..100_000 {
        let g = jet.gradient(&p);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn < 1e-9 {
            break;
        }
        let s = (0.02 / gn.max(0.2)).min(0.05);
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi -= s * gi;
        }
    }
    let d0 = dist(&p, &wells.minima[0].location);
    let d1 = dist(&p, &wells.minima[1].location);
    if d0.min(d1) > 0.5 {
        return Err(CoreError::CurveEscapesQuadraticRegion(format!(
            "descent from {x:?} ended at {p:?}, near neither well"
        )));
    }
    Ok(if d0 < d1 { 0 } else { 1 })
}

/// Hessian of the quadratic phase phi_plus_variant(x - saddle) + phi(x)
/// restricted to the hyperplane transverse to the curve tangent;
/// returns its determinant.
fn transverse_hessian(
    model: &ModelSpec,
    phi_quad: &DMat,
    x1: &[f64],
    tangent: &[f64],
) -> Result<f64> {
    let n = model.dim;
    let h_x1 = DMat::from_vec(n, n, model.jet().hessian(x1));
    let full = phi_quad.add(&h_x1);
    // orthonormal basis of the tangent complement
    let mut basis: Vec<Vec<f64>> = vec![tangent.to_vec()];
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        for b in &basis {
            let c: f64 = e.iter().zip(b).map(|(u, v)| u * v).sum();
            for (ei, bi) in e.iter_mut().zip(b) {
                *ei -= c * bi;
            }
        }
        let nn = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nn > 1e-8 {
            for v in &mut e {
                *v /= nn;
            }
            basis.push(e);
        }
        if basis.len() == n {
            break;
        }
    }
    let w = &basis[1..];
    let m = w.len();
    if m != n - 1 {
        return Err(CoreError::NotAGraph("transverse basis incomplete".into()));
    }
    let mut mat = DMat::zeros(m, m);
    for i in 0..m {
        let fw = full.matvec(&w[i]);
        for j in 0..m {
            mat[(i, j)] = fw.iter().zip(&w[j]).map(|(u, v)| u * v).sum();
        }
    }
    let det = if m == 0 { 1.0 } else { DenseLu::factor(&mat)?.det() };
    if det <= 0.0 {
        return Err(CoreError::CurveEscapesQuadraticRegion(format!(
            "transverse phase Hessian not positive at {x1:?} (det {det:.3e})"
        )));
    }
    Ok(det)
}

fn quadratic_phase(model: &ModelSpec, phi_quad: &DMat, saddle: &CriticalPoint, x: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().zip(&saddle.location).map(|(a, b)| a - b).collect();
    let qd = phi_quad.matvec(&d);
    let q: f64 = d.iter().zip(&qd).map(|(u, v)| u * v).sum();
    0.5 * q + model.jet().value(x)
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventRow {
    pub z_re: f64,
    pub z_im: f64,
    pub sigma_min: f64,
    pub estimate: f64,
    pub h_estimate: f64,
}

/// Resolvent norm estimates 1/sigma_min(z - P) at probe points; every
/// probe must keep distance h/c_dist from the computed spectrum.
pub fn resolvent_probe(
    complex: &DiscreteComplex,
    zs: &[Complex64],
    spectrum: &[Complex64],
    c_dist: f64,
) -> Result<Vec<ResolventRow>> {
    ensure_tight_box(complex)?;
    let h = complex.h;
    let mut rows = Vec::with_capacity(zs.len());
    for &z in zs {
        let too_close = spectrum.iter().any(|s| (s - z).norm() < h / c_dist);
        if too_close {
            return Err(CoreError::Singular(format!(
                "probe {z} within h/{c_dist} of the computed spectrum"
            )));
        }
        // sigma_min of (P - z) equals sigma_min of (z - P)
        let emb = complex.lap0.embed_complex_shift(z);
        let lu = emb.to_banded().factor()?;
        let lu_t = emb.transpose().to_banded().factor()?;
        let s = smallest_singular_from_factors(&lu, &lu_t, emb.n_rows)?;
        let sigma = s.sigma;
        if sigma <= 0.0 {
            return Err(CoreError::Singular(format!("probe {z} is singular")));
        }
        rows.push(ResolventRow {
            z_re: z.re,
            z_im: z.im,
            sigma_min: sigma,
            estimate: 1.0 / sigma,
            h_estimate: h / sigma,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalizationReport {
    /// quasimode overlaps of the splitting eigenvector per basin
    pub overlaps: [f64; 2],
    pub degree0_pass: bool,
    /// squared-norm fraction of the degree-1 eigenvector near the saddle
    pub saddle_fraction: f64,
    pub degree1_pass: bool,
}

/// Localization checks: the splitting eigenvector restricted to each
/// basin must align with the truncated Maxwellian quasimode; the
/// degree-1 eigenvector must concentrate near the saddle.
pub fn localization_check(
    complex: &DiscreteComplex,
    model: &ModelSpec,
    wells: &WellStructure,
    vec0: &[f64],
    vec1: &[f64],
) -> LocalizationReport {
    let grid = &complex.grid;
    let eps0 = 0.05;
    let cut = wells.saddle.value - eps0;
    let n_nodes = grid.size(Layout::NODES);
    let jet = model.jet();

    // basins: connected components of {phi < phi(saddle) - eps0}
    let mut labels = vec![usize::MAX; n_nodes];
    let mut overlaps = [0.0f64; 2];
    for (well_idx, well) in wells.minima.iter().enumerate() {
        // seed at the node nearest the minimum
        let mut seed = 0usize;
        let mut best = f64::INFINITY;
        for i in 0..n_nodes {
            let m = grid.to_multi(Layout::NODES, i);
            let p = grid.position(Layout::NODES, &m);
            let d = dist(&p, &well.location);
            if d < best {
                best = d;
                seed = i;
            }
        }
        // flood fill within the sublevel set
        let mut stack = vec![seed];
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            if labels[i] != usize::MAX {
                continue;
            }
            let m = grid.to_multi(Layout::NODES, i);
            let p = grid.position(Layout::NODES, &m);
            if jet.value(&p) >= cut {
                continue;
            }
            labels[i] = well_idx;
            members.push(i);
            for d in 0..grid.dim() {
                let mut mm = m.clone();
                if mm[d] > 0 {
                    mm[d] -= 1;
                    let j = grid.from_multi(Layout::NODES, &mm);
                    if labels[j] == usize::MAX {
                        stack.push(j);
                    }
                    mm[d] += 1;
                }
                if mm[d] + 1 < grid.count(Layout::NODES, d) {
                    mm[d] += 1;
                    let j = grid.from_multi(Layout::NODES, &mm);
                    if labels[j] == usize::MAX {
                        stack.push(j);
                    }
                }
            }
        }
        // quasimode = normalized Maxwellian restriction
        let mut f_norm = 0.0;
        for &i in &members {
            f_norm += complex.maxwellian[i] * complex.maxwellian[i];
        }
        let f_norm = f_norm.sqrt().max(f64::MIN_POSITIVE);
        let mut inner = 0.0;
        let mut v_norm = 0.0;
        for &i in &members {
            inner += vec0[i] * complex.maxwellian[i] / f_norm;
            v_norm += vec0[i] * vec0[i];
        }
        overlaps[well_idx] = inner.abs() / v_norm.sqrt().max(f64::MIN_POSITIVE);
    }

    // degree-1 concentration near the saddle
    let mut inside = 0.0;
    let mut total = 0.0;
    let mut offset = 0usize;
    for k in 0..grid.dim() {
        let layout = Layout::edge(k);
        let sz = grid.size(layout);
        for i in 0..sz {
            let m = grid.to_multi(layout, i);
            let p = grid.position(layout, &m);
            let v = vec1[offset + i];
            total += v * v;
            if dist(&p, &wells.saddle.location) <= 0.5 {
                inside += v * v;
            }
        }
        offset += sz;
    }
    let saddle_fraction = inside / total.max(f64::MIN_POSITIVE);
    LocalizationReport {
        overlaps,
        degree0_pass: overlaps[0] >= 0.9 && overlaps[1] >= 0.9,
        saddle_fraction,
        degree1_pass: saddle_fraction >= 0.9,
    }
}

/// Character-exact CSV for the spectrum report.
pub fn spectrum_csv(spectrum: &SpectrumResult, matched: &MatchReport) -> String {
    let mut out = String::from(
        "h,degree,re,im,residual,matched_mu_re,matched_mu_im,deviation\n",
    );
    for r in &spectrum.eigenvalues {
        let lam = Complex64::new(r.re / spectrum.h, r.im / spectrum.h);
        let hit = matched
            .pairs
            .iter()
            .find(|p| (Complex64::new(p.lambda_re, p.lambda_im) - lam).norm() < 1e-12);
        let (mr, mi, dev) = match hit {
            Some(p) => (
                format!("{:.16e}", p.mu_re),
                format!("{:.16e}", p.mu_im),
                format!("{:.16e}", p.deviation),
            ),
            None => ("".into(), "".into(), "".into()),
        };
        out.push_str(&format!(
            "{:.16e},{},{:.16e},{:.16e},{:.16e},{},{},{}\n",
            spectrum.h, spectrum.degree, r.re, r.im, r.residual, mr, mi, dev
        ));
    }
    out
}

pub fn splitting_csv(table: &[(f64, f64)]) -> String {
    let mut out = String::from("h,mu1,log_mu1_minus_log_h\n");
    for &(h, mu) in table {
        out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", h, mu, (mu / h).ln()));
    }
    out
}
