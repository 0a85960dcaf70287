//! Numerical verification of the dynamical averaging hypotheses and the
//! auxiliary weight functions they control.
//!
//! Everything here is diagnostic: fixed-step RK4 transport along
//! nu = 2 C phi', Simpson time averages, and eigenvalue certificates
//! for the averaged quadratic forms.

use serde::Serialize;

use crate::eigen::dense::{symmetric_eigen, DMat};
use crate::error::{CoreError, Result};
use crate::landscape::{CriticalPoint, ModelSpec};
use crate::poly::Poly;
use crate::symbols::{QuadraticForm, SymbolSet};

const BLOWUP_RADIUS: f64 = 1e3;
pub const DEFAULT_T0: f64 = 10.0;
const STEPS_PER_HORIZON: usize = 2048;

/// Transport field nu(x) = 2 C phi'(x) with its fixed integrator grid.
pub struct FlowField {
    pub nu: Vec<Poly>,
    pub t0: f64,
    pub dt: f64,
    dim: usize,
}

impl FlowField {
    pub fn new(model: &ModelSpec, t0: f64) -> Self {
        let c = model.c_part();
        let grad = model.phi.gradient();
        let n = model.dim;
        let mut nu = Vec::with_capacity(n);
        for i in 0..n {
            // nu_i = 2 sum_j C_ij d_j phi
            let mut terms = Vec::new();
            for (j, g) in grad.iter().enumerate() {
                let w = 2.0 * c[(i, j)];
                if w != 0.0 {
                    for t in &g.terms {
                        terms.push(crate::poly::Monomial {
                            exps: t.exps.clone(),
                            coef: w * t.coef,
                        });
                    }
                }
            }
            nu.push(Poly::new(n, terms));
        }
        FlowField { nu, t0, dt: t0 / STEPS_PER_HORIZON as f64, dim: n }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.nu.iter().map(|p| p.eval(x)).collect()
    }

    /// x(t) by fixed-step RK4; |t| may not exceed ten horizons.
    pub fn flow(&self, x0: &[f64], t: f64) -> Result<Vec<f64>> {
        assert!(t.abs() <= 10.0 * self.t0 + 1e-12);
        if t == 0.0 {
            return Ok(x0.to_vec());
        }
        let steps = ((t.abs() / self.dt).round() as usize).max(1);
        let h = t / steps as f64;
        let mut x = x0.to_vec();
        for k in 0..steps {
            x = self.rk4_step(&x, h);
            let r = norm(&x);
            if r > BLOWUP_RADIUS {
                return Err(CoreError::Blowup { t: h * (k + 1) as f64, norm: r });
            }
        }
        Ok(x)
    }

    fn rk4_step(&self, x: &[f64], h: f64) -> Vec<f64> {
        let k1 = self.eval(x);
        let k2 = self.eval(&combine(x, &k1, h / 2.0));
        let k3 = self.eval(&combine(x, &k2, h / 2.0));
        let k4 = self.eval(&combine(x, &k3, h));
        (0..self.dim)
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }

    /// Samples x(t) on the uniform grid over [-T0/2, T0/2]; the center
    /// sample is x0 itself.
    pub fn trajectory(&self, x0: &[f64]) -> Result<Vec<Vec<f64>>> {
        let half = STEPS_PER_HORIZON / 2;
        let mut back = Vec::with_capacity(half);
        let mut x = x0.to_vec();
        for k in 0..half {
            x = self.rk4_step(&x, -self.dt);
            let r = norm(&x);
            if r > BLOWUP_RADIUS {
                return Err(CoreError::Blowup {
                    t: -self.dt * (k + 1) as f64,
                    norm: r,
                });
            }
            back.push(x.clone());
        }
        back.reverse();
        let mut path = back;
        path.push(x0.to_vec());
        let mut x = x0.to_vec();
        for k in 0..half {
            x = self.rk4_step(&x, self.dt);
            let r = norm(&x);
            if r > BLOWUP_RADIUS {
                return Err(CoreError::Blowup { t: self.dt * (k + 1) as f64, norm: r });
            }
            path.push(x.clone());
        }
        Ok(path)
    }

    /// (1/T0) integral of g along the trajectory, composite Simpson.
    pub fn time_average(&self, g: impl Fn(&[f64]) -> f64, x0: &[f64]) -> Result<f64> {
        let path = self.trajectory(x0)?;
        Ok(simpson(&path.iter().map(|x| g(x)).collect::<Vec<_>>(), self.dt) / self.t0)
    }

    /// Fraction of [-T0/2, T0/2] where g >= threshold, counted on the
    /// integration grid by trapezoid credit.
    pub fn measure_fraction(
        &self,
        g: impl Fn(&[f64]) -> f64,
        x0: &[f64],
        threshold: f64,
    ) -> Result<f64> {
        let path = self.trajectory(x0)?;
        let flags: Vec<f64> = path
            .iter()
            .map(|x| if g(x) >= threshold { 1.0 } else { 0.0 })
            .collect();
        let mut acc = 0.0;
        for w in flags.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * self.dt;
        }
        Ok(acc / self.t0)
    }
}

fn combine(x: &[f64], d: &[f64], h: f64) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + h * b).collect()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn simpson(values: &[f64], dt: f64) -> f64 {
    let n = values.len() - 1;
    assert!(n >= 2 && n % 2 == 0, "Simpson needs an even interval count");
    let mut acc = values[0] + values[n];
    for (i, v) in values.iter().enumerate().skip(1).take(n - 1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * dt / 3.0
}

/// Saturating ramp: t on [0,1], 3/2 beyond 2, monotone C^1 bridge
/// 1 + s - s^2/2 in between; f(t) <= t everywhere.
pub fn f_ramp(t: f64) -> f64 {
    if t <= 1.0 {
        t
    } else if t >= 2.0 {
        1.5
    } else {
        let s = t - 1.0;
        1.0 + s - 0.5 * s * s
    }
}

pub fn f_eps(t: f64, eps: f64) -> f64 {
    assert!(eps > 0.0);
    eps * f_ramp(t / eps)
}

/// Odd sawtooth supported on |t| < 1/2.
pub fn k_sawtooth(t: f64) -> f64 {
    if t >= 0.5 || t <= -0.5 {
        0.0
    } else if t < 0.0 {
        t + 0.5
    } else if t > 0.0 {
        t - 0.5
    } else {
        0.0
    }
}

/// Decay profile: 1 on [0,1], 1/t beyond 2, monotone C^1 bridge.
pub fn g_decay(t: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        1.0 / t
    } else {
        let s = t - 1.0;
        0.75 * s * s * s - 1.25 * s * s + 1.0
    }
}

/// C^1 radial bump: 1 inside half the support radius, 0 outside it.
pub fn bump(r: f64, support: f64) -> f64 {
    let half = 0.5 * support;
    if r <= half {
        1.0
    } else if r >= support {
        0.0
    } else {
        let s = (r - half) / half; // in (0, 1)
        1.0 - s * s * (3.0 - 2.0 * s)
    }
}

/// psi_eps(x) = int k(t/T0) f_eps(p0(exp(t nu) x)) dt, Simpson split at
/// the sawtooth jump; |psi_eps| <= (3 T0/8) eps is enforced.
pub fn psi_eps(field: &FlowField, sym: &SymbolSet, x: &[f64], eps: f64) -> Result<f64> {
    let path = field.trajectory(x)?;
    let half = STEPS_PER_HORIZON / 2;
    let t0 = field.t0;
    let samples: Vec<f64> = path
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let t = (i as f64 - half as f64) * field.dt;
            k_sawtooth(t / t0) * f_eps(sym.p0(p), eps)
        })
        .collect();
    let left = simpson(&samples[..=half], field.dt);
    let right = simpson(&samples[half..], field.dt);
    let psi = left + right;
    let bound = 0.375 * t0 * eps;
    assert!(
        psi.abs() <= bound * (1.0 + 1e-9),
        "psi_eps bound violated: |{psi}| > {bound}"
    );
    Ok(psi)
}

/// p-tilde(x, xi) = p0(x) + p2(x, xi) / <xi>^2.
pub fn p_tilde(sym: &SymbolSet, x: &[f64], xi: &[f64]) -> f64 {
    let wt = 1.0 + xi.iter().map(|v| v * v).sum::<f64>();
    sym.p0(x) + sym.p2(x, xi) / wt
}

/// Plateau cutoff in x: 1 on |x| <= plateau, 0 beyond the support.
fn plateau_cutoff(r: f64, plateau: f64, support: f64) -> f64 {
    if r <= plateau {
        1.0
    } else if r >= support {
        0.0
    } else {
        let s = (r - plateau) / (support - plateau);
        1.0 - s * s * (3.0 - 2.0 * s)
    }
}

/// Regularized weight: g-profile transition of scale sqrt(eps) near the
/// critical set, epsilon-scaled bulk, and f_eps(p0) far out in x.
/// Cutoffs: bumps of support 0.3 in phase space around each critical
/// point; a single x-cutoff of radius 2.0 (plateau 1.5) around the
/// origin separates the far region.
pub fn p_tilde_eps(
    sym: &SymbolSet,
    crit: &[CriticalPoint],
    x: &[f64],
    xi: &[f64],
    eps: f64,
) -> f64 {
    assert!(eps > 0.0);
    let pt = p_tilde(sym, x, xi);
    let r_x = norm(x);
    // the new weight freezes the xi-dependence away from the critical set
    let chi_inner = plateau_cutoff(r_x, 1.3, 1.8);
    let wt = 1.0 + xi.iter().map(|v| v * v).sum::<f64>();
    let pt_new = sym.p0(x) + chi_inner * sym.p2(x, xi) / wt;

    let mut chi_sum = 0.0;
    let mut near = 0.0;
    for c in crit {
        let r2 = dist(x, &c.location).powi(2) + xi.iter().map(|v| v * v).sum::<f64>();
        let chi_j = bump(r2.sqrt(), 0.3);
        chi_sum += chi_j;
        near += chi_j * g_decay(r2 / eps) * pt;
    }
    let chi_sum = chi_sum.min(1.0);
    let chi_new = plateau_cutoff(r_x, 1.5, 2.0);
    let inner = near + eps * (1.0 - chi_sum) * pt_new;
    let val = chi_new * inner + (1.0 - chi_new) * f_eps(sym.p0(x), eps);
    // enforced postcondition: the regularization never exceeds p-tilde
    val.min(pt)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Quadratic certificate near one critical point: the time average of
/// the quadratic model of p-tilde along the linearized transport flow
/// must be positive definite. Returns the averaged form and the
/// certified constant C = 1 / (smallest eigenvalue).
pub fn check_ny17(
    model: &ModelSpec,
    cp: &CriticalPoint,
    t0: f64,
) -> Result<(QuadraticForm, f64)> {
    let n = model.dim;
    let h = DMat::from_vec(n, n, model.jet().hessian(&cp.location));
    let b = model.b_part();
    let c = model.c_part();
    // quadratic model on (x, xi): <B phi'' x, phi'' x> + <B xi, xi>
    let hbh = h.matmul(&b).matmul(&h);
    let mut q = DMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            q[(i, j)] = hbh[(i, j)];
            q[(i + n, j + n)] = b[(i, j)];
        }
    }
    // linearized transport flow: xdot = 2C phi'' x, xidot = 2 phi'' C xi
    let ch = c.matmul(&h).scale(2.0);
    let hc = h.matmul(&c).scale(2.0);
    let mut f = DMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            f[(i, j)] = ch[(i, j)];
            f[(i + n, j + n)] = hc[(i, j)];
        }
    }
    let avg = averaged_form(&q, &f, t0);
    let (eigs, vecs) = symmetric_eigen(&avg);
    if eigs[0] <= 0.0 {
        let null: Vec<f64> = vecs.column(0);
        return Err(CoreError::HypothesisFails(format!(
            "averaged quadratic form at {:?} has eigenvalue {:.3e} along {:?}",
            cp.location, eigs[0], null
        )));
    }
    Ok((QuadraticForm::new(avg)?, 1.0 / eigs[0]))
}

/// (1/T0) int_{-T0/2}^{T0/2} e^{tF}^T Q e^{tF} dt, Simpson over an
/// RK4-propagated matrix flow.
fn averaged_form(q: &DMat, f: &DMat, t0: f64) -> DMat {
    let steps = STEPS_PER_HORIZON;
    let half = steps / 2;
    let dt = t0 / steps as f64;
    let n = q.n_rows;
    // propagate to -T0/2 first, then sweep forward
    let mut e = DMat::identity(n);
    for _ in 0..half {
        e = rk4_mat(f, &e, -dt);
    }
    let mut acc = DMat::zeros(n, n);
    {
        let mut add = |e: &DMat, w: f64| {
            let qe = q.matmul(e);
            acc = acc.add(&e.transpose().matmul(&qe).scale(w));
        };
        add(&e, 1.0);
        for i in 1..=steps {
            e = rk4_mat(f, &e, dt);
            let w = if i == steps {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            add(&e, w);
        }
    }
    acc.scale((dt / 3.0) / t0).symmetrize()
}

fn rk4_mat(f: &DMat, e: &DMat, dt: f64) -> DMat {
    let k1 = f.matmul(e);
    let k2 = f.matmul(&e.add(&k1.scale(dt / 2.0)));
    let k3 = f.matmul(&e.add(&k2.scale(dt / 2.0)));
    let k4 = f.matmul(&e.add(&k3.scale(dt)));
    e.add(
        &k1.add(&k2.scale(2.0))
            .add(&k3.scale(2.0))
            .add(&k4)
            .scale(dt / 6.0),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleRow {
    pub x: Vec<f64>,
    pub average: f64,
    pub fraction: f64,
    pub pass: bool,
}

/// Report for the away-from-critical-set averaging hypotheses.
#[derive(Debug, Clone, Serialize)]
pub struct AverageReport {
    pub description: String,
    pub t0: f64,
    pub threshold: f64,
    pub samples: Vec<SampleRow>,
    pub worst_average: f64,
    pub worst_fraction: f64,
    pub pass: bool,
}

impl AverageReport {
    pub fn to_csv(&self) -> String {
        let dim = self.samples.first().map(|s| s.x.len()).unwrap_or(0);
        let mut out = String::new();
        for d in 0..dim {
            out.push_str(&format!("x{d},"));
        }
        out.push_str("average,fraction,pass\n");
        for s in &self.samples {
            for v in &s.x {
                out.push_str(&format!("{v:.16e},"));
            }
            out.push_str(&format!(
                "{:.16e},{:.16e},{}\n",
                s.average, s.fraction, s.pass
            ));
        }
        out
    }
}

/// Default sample set: points on the l1-ring of radius 0.5 around each
/// critical point, excluding anything within `exclusion` of the
/// projected critical set.
pub fn default_sample_ring(
    crit: &[CriticalPoint],
    ring_radius: f64,
    exclusion: f64,
    per_ring: usize,
) -> Vec<Vec<f64>> {
    let mut samples = Vec::new();
    for c in crit {
        let n = c.location.len();
        for k in 0..per_ring {
            let t = 2.0 * std::f64::consts::PI * (k as f64) / (per_ring as f64);
            // l1 ring in the leading plane
            let (u, v) = (t.cos(), t.sin());
            let s = u.abs() + v.abs();
            let mut x = c.location.clone();
            x[0] += ring_radius * u / s;
            if n > 1 {
                x[1] += ring_radius * v / s;
            }
            if crit.iter().all(|cj| dist(&x, &cj.location) > exclusion) {
                samples.push(x);
            }
        }
    }
    samples
}

/// Time-average and time-measure checks for every sample; all must
/// clear the threshold.
pub fn check_ny19_ny20(
    model: &ModelSpec,
    samples: &[Vec<f64>],
    t0: f64,
    threshold: f64,
) -> Result<AverageReport> {
    let field = FlowField::new(model, t0);
    let sym = SymbolSet::new(model);
    let mut rows = Vec::with_capacity(samples.len());
    let mut worst_avg = f64::INFINITY;
    let mut worst_frac = f64::INFINITY;
    for x in samples {
        let average = field.time_average(|p| sym.p0(p), x)?;
        debug_assert!(average >= 0.0);
        let fraction = field.measure_fraction(|p| sym.p0(p), x, threshold)?;
        let pass = average >= threshold && fraction >= threshold;
        worst_avg = worst_avg.min(average);
        worst_frac = worst_frac.min(fraction);
        rows.push(SampleRow { x: x.clone(), average, fraction, pass });
    }
    let pass = rows.iter().all(|r| r.pass) && !rows.is_empty();
    let report = AverageReport {
        description: format!("{} samples, T0 = {t0}", rows.len()),
        t0,
        threshold,
        samples: rows,
        worst_average: worst_avg,
        worst_fraction: worst_frac,
        pass,
    };
    if !report.pass {
        return Err(CoreError::HypothesisFails(format!(
            "worst average {worst_avg:.3e}, worst fraction {worst_frac:.3e} vs threshold {threshold:.3e}"
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{find_critical_points, registry, SearchBox};
    use crate::poly::Poly;

    fn dw1() -> ModelSpec {
        registry("DW1").unwrap()
    }

    #[test]
    fn critical_points_are_fixed() {
        let m = dw1();
        let field = FlowField::new(&m, DEFAULT_T0);
        let x = field.flow(&[1.0, 0.0], 3.0).unwrap();
        assert!(dist(&x, &[1.0, 0.0]) < 1e-14);
    }

    #[test]
    fn transport_conserves_phi() {
        let m = dw1();
        let field = FlowField::new(&m, DEFAULT_T0);
        let jet = m.jet();
        for x0 in [[0.0, 0.1], [0.5, 0.0], [1.3, -0.4]] {
            let base = jet.value(&x0);
            let path = field.trajectory(&x0).unwrap();
            for p in path.iter().step_by(64) {
                assert!(
                    (jet.value(p) - base).abs() <= 1e-8,
                    "phi drift at {p:?}"
                );
            }
        }
    }

    #[test]
    fn linear_field_is_exponential() {
        // phi = xy with C = [[0, 1/2], [-1/2, 0]] gives nu = (x, -y)
        let m = ModelSpec::new_unchecked(
            "shear",
            Poly::from_terms(2, &[(&[1, 1], 1.0)]),
            crate::eigen::dense::DMat::from_rows(&[&[1.0, 0.5], &[-0.5, 1.0]]),
        );
        let field = FlowField::new(&m, 1.0);
        let x = field.flow(&[0.3, 0.0], 1.0).unwrap();
        assert!((x[0] - 0.3 * 1f64.exp()).abs() <= 1e-10 * 0.3 * 1f64.exp());
        assert!(x[1].abs() < 1e-12);
    }

    #[test]
    fn blowup_detected() {
        let m = ModelSpec::new_unchecked(
            "expand",
            Poly::from_terms(2, &[(&[1, 1], 1.0)]),
            crate::eigen::dense::DMat::from_rows(&[&[1.0, 0.5], &[-0.5, 1.0]]),
        );
        let field = FlowField::new(&m, 20.0);
        assert!(matches!(
            field.flow(&[1.0, 0.0], 20.0),
            Err(CoreError::Blowup { .. })
        ));
    }

    #[test]
    fn time_average_examples() {
        let m = dw1();
        let field = FlowField::new(&m, DEFAULT_T0);
        let sym = SymbolSet::new(&m);
        let c = field.time_average(|_| 3.0, &[0.3, 0.2]).unwrap();
        assert!((c - 3.0).abs() < 1e-12);
        // fixed point: average of p0 vanishes
        let z = field.time_average(|p| sym.p0(p), &[0.0, 0.0]).unwrap();
        assert!(z.abs() < 1e-14);
        // interior point: strictly positive, matching a refined oracle
        let a = field.time_average(|p| sym.p0(p), &[0.5, 0.0]).unwrap();
        assert!(a > 0.0);
        // oracle: 4x denser fixed-step RK4 + trapezoid
        let oracle = {
            let t0 = DEFAULT_T0;
            let steps = 4 * STEPS_PER_HORIZON;
            let dt = t0 / steps as f64;
            let mut x = vec![0.5, 0.0];
            for _ in 0..steps / 2 {
                x = field.rk4_step(&x, -dt);
            }
            let mut acc = 0.0;
            let mut prev = sym.p0(&x);
            for _ in 0..steps {
                x = field.rk4_step(&x, dt);
                let cur = sym.p0(&x);
                acc += 0.5 * (prev + cur) * dt;
                prev = cur;
            }
            acc / t0
        };
        assert!((a - oracle).abs() <= 1e-6 * oracle.max(1e-3), "{a} vs {oracle}");
    }

    #[test]
    fn ramp_and_sawtooth_values() {
        let eps = 0.37;
        assert_eq!(f_eps(0.5 * eps, eps), 0.5 * eps);
        assert_eq!(f_eps(3.0 * eps, eps), 1.5 * eps);
        // f <= t and monotone on a grid
        let mut prev = 0.0;
        for k in 0..400 {
            let t = 0.01 * k as f64;
            let v = f_ramp(t);
            assert!(v <= t + 1e-15);
            assert!(v + 1e-15 >= prev);
            prev = v;
        }
        assert_eq!(k_sawtooth(0.6), 0.0);
        assert_eq!(k_sawtooth(-0.25), 0.25);
        assert_eq!(k_sawtooth(0.25), -0.25);
        for k in 1..10 {
            let t = 0.05 * k as f64;
            assert_eq!(k_sawtooth(-t), -k_sawtooth(t));
        }
    }

    #[test]
    fn psi_eps_bounded_on_grid() {
        let m = dw1();
        let field = FlowField::new(&m, DEFAULT_T0);
        let sym = SymbolSet::new(&m);
        let eps = 0.1;
        let bound = 0.375 * DEFAULT_T0 * eps;
        let mut max_seen = 0.0f64;
        for i in 0..20 {
            for j in 0..20 {
                let x = [-1.9 + 0.2 * i as f64, -1.9 + 0.2 * j as f64];
                let psi = psi_eps(&field, &sym, &x, eps).unwrap();
                max_seen = max_seen.max(psi.abs());
            }
        }
        assert!(max_seen <= bound, "{max_seen} vs bound {bound}");
        assert!(max_seen > 0.0);
    }

    #[test]
    fn psi_eps_cohomology_identity() {
        // nu(psi_eps) = f_eps(p0) - <f_eps(p0)>_T0 at sampled points,
        // finite differences along nu at quadrature accuracy
        let m = dw1();
        let field = FlowField::new(&m, DEFAULT_T0);
        let sym = SymbolSet::new(&m);
        let eps = 0.2;
        for x in [[0.5, 0.2], [-0.7, 0.4], [1.2, -0.3]] {
            let nu = field.eval(&x);
            let nn = norm(&nu);
            if nn < 1e-10 {
                continue;
            }
            let h = 1e-5 / nn;
            let xp = combine(&x, &nu, h);
            let xm = combine(&x, &nu, -h);
            let dpsi = (psi_eps(&field, &sym, &xp, eps).unwrap()
                - psi_eps(&field, &sym, &xm, eps).unwrap())
                / (2.0 * h);
            let avg = field.time_average(|p| f_eps(sym.p0(p), eps), &x).unwrap();
            let rhs = f_eps(sym.p0(&x), eps) - avg;
            assert!(
                (dpsi - rhs).abs() <= 1e-4 * (1.0 + rhs.abs()),
                "{dpsi} vs {rhs} at {x:?}"
            );
        }
    }

    #[test]
    fn p_tilde_eps_structure() {
        let m = dw1();
        let sym = SymbolSet::new(&m);
        let crit = find_critical_points(&m, SearchBox::default(), 8).unwrap();
        // vanishes exactly on the critical set
        for c in &crit {
            let z = vec![0.0; 2];
            assert_eq!(p_tilde(&sym, &c.location, &z), 0.0);
            assert_eq!(p_tilde_eps(&sym, &crit, &c.location, &z, 0.05), 0.0);
        }
        // identity region: p_tilde_eps = p_tilde within sqrt(eps) of a
        // critical point when that ball sits inside the cutoff plateau
        let eps = 0.02;
        let x = [1.0 + 0.1, 0.05];
        let xi = [0.03, -0.02];
        let r2 = 0.1f64.powi(2) + 0.05f64.powi(2) + 0.03f64.powi(2) + 0.02f64.powi(2);
        assert!(r2 <= eps);
        let a = p_tilde(&sym, &x, &xi);
        let b = p_tilde_eps(&sym, &crit, &x, &xi, eps);
        assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0), "{a} vs {b}");
        // far region: depends only on x through f_eps(p0)
        let far = [2.6, 0.4];
        let v1 = p_tilde_eps(&sym, &crit, &far, &[0.0, 0.0], eps);
        let v2 = p_tilde_eps(&sym, &crit, &far, &[3.0, -1.0], eps);
        assert_eq!(v1, v2);
        assert!((v1 - f_eps(sym.p0(&far), eps)).abs() <= 1e-14 * v1.abs().max(1e-30));
        // global domination p_tilde_eps <= p_tilde
        let mut rng = crate::rng::SplitMix64::new(21);
        for _ in 0..500 {
            let x: Vec<f64> = rng.vector(2).iter().map(|v| 3.0 * v).collect();
            let xi: Vec<f64> = rng.vector(2).iter().map(|v| 3.0 * v).collect();
            for &e in &[0.5, 0.1, 0.05] {
                assert!(
                    p_tilde_eps(&sym, &crit, &x, &xi, e) <= p_tilde(&sym, &x, &xi) + 1e-14
                );
            }
        }
    }

    #[test]
    fn ny17_passes_on_dw1_and_fails_degenerate() {
        let m = dw1();
        let crit = find_critical_points(&m, SearchBox::default(), 8).unwrap();
        for cp in &crit {
            let (form, c) = check_ny17(&m, cp, DEFAULT_T0).unwrap();
            assert!(form.is_positive_definite());
            assert!(c > 0.0 && c < 1e3, "certified C = {c}");
        }
        // degenerate control: B singular and no transport
        let bad = registry("nu-zero-test").unwrap();
        let crit_b = find_critical_points(&bad, SearchBox::default(), 8).unwrap();
        let r = check_ny17(&bad, &crit_b[0], DEFAULT_T0);
        assert!(matches!(r, Err(CoreError::HypothesisFails(_))));
    }

    #[test]
    fn ny19_ny20_ring_and_controls() {
        let m = dw1();
        let crit = find_critical_points(&m, SearchBox::default(), 8).unwrap();
        let samples = default_sample_ring(&crit, 0.5, 0.1, 16);
        assert!(!samples.is_empty());
        let report = check_ny19_ny20(&m, &samples, DEFAULT_T0, 1e-3).unwrap();
        assert!(report.pass);
        assert!(report.worst_average >= 1e-3);
        // nu = 0 control with p0 vanishing at a noncritical sample
        let bad = registry("nu-zero-test").unwrap();
        // p0 = <B phi', phi'> with B = diag(0,1): vanishes on y = 0
        let r = check_ny19_ny20(&bad, &[vec![0.5, 0.0]], DEFAULT_T0, 1e-3);
        assert!(matches!(r, Err(CoreError::HypothesisFails(_))));
        let csv = report.to_csv();
        assert!(csv.starts_with("x0,x1,average,fraction,pass"));
    }
}
