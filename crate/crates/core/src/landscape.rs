//! Model definition (weight polynomial plus structure matrix) and the
//! critical landscape: Newton search for critical points, Morse
//! classification, and the double-well action data.

use serde::{Deserialize, Serialize};

use crate::eigen::dense::{symmetric_eigen, DenseLu, DMat};
use crate::error::{CoreError, Result};
use crate::poly::{Monomial, Poly, PolyJet};
use crate::symbols::QuadraticForm;

/// The pair (phi, A): a polynomial weight and a constant invertible
/// structure matrix whose symmetric part is positive semidefinite.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub dim: usize,
    pub phi: Poly,
    pub a: DMat,
    jet: PolyJet,
}

/// Wire format: {"name", "dim", "phi": [{"exps", "coef"}...], "A": [[..]..]}
#[derive(Serialize, Deserialize)]
struct ModelSpecWire {
    name: String,
    dim: usize,
    phi: Vec<Monomial>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows = (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.a[(i, j)]).collect())
            .collect();
        ModelSpecWire {
            name: self.name.clone(),
            dim: self.dim,
            phi: self.phi.terms.clone(),
            a: rows,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = ModelSpecWire::deserialize(d)?;
        let mut a = DMat::zeros(wire.dim, wire.dim);
        if wire.a.len() != wire.dim {
            return Err(serde::de::Error::custom("A must be dim x dim"));
        }
        for (i, row) in wire.a.iter().enumerate() {
            if row.len() != wire.dim {
                return Err(serde::de::Error::custom("A must be dim x dim"));
            }
            for (j, v) in row.iter().enumerate() {
                a[(i, j)] = *v;
            }
        }
        let phi = Poly::new(wire.dim, wire.phi);
        Ok(ModelSpec::new_unchecked(wire.name, phi, a))
    }
}

impl ModelSpec {
    /// Builds without invariant checks (degenerate test models need this).
    pub fn new_unchecked(name: impl Into<String>, phi: Poly, a: DMat) -> Self {
        assert_eq!(a.n_rows, phi.dim);
        assert_eq!(a.n_cols, phi.dim);
        let jet = PolyJet::new(phi.clone());
        ModelSpec { name: name.into(), dim: phi.dim, phi, a, jet }
    }

    pub fn new(name: impl Into<String>, phi: Poly, a: DMat) -> Result<Self> {
        let m = ModelSpec::new_unchecked(name, phi, a);
        m.validate()?;
        Ok(m)
    }

    /// A invertible, B = sym(A) >= 0, and ker B intersect ker C trivial.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim;
        let norm_a = frobenius(&self.a);
        let det = DenseLu::factor(&self.a).map(|lu| lu.det()).unwrap_or(0.0);
        if det.abs() <= 1e-12 * norm_a.powi(n as i32) {
            return Err(CoreError::InvalidModel(format!(
                "A is numerically singular: |det| = {:.3e}",
                det.abs()
            )));
        }
        let b = self.b_part();
        let (eigs, _) = symmetric_eigen(&b);
        if eigs.iter().any(|&e| e < -1e-12 * norm_a) {
            return Err(CoreError::InvalidModel(format!(
                "symmetric part of A has negative eigenvalue {:.3e}",
                eigs[0]
            )));
        }
        // independent common-kernel test: lambda_min(B^T B + C^T C) > 0
        let c = self.c_part();
        let btb = b.transpose().matmul(&b);
        let ctc = c.transpose().matmul(&c);
        let (keigs, _) = symmetric_eigen(&btb.add(&ctc));
        if keigs[0] <= (1e-12 * norm_a).powi(2) {
            return Err(CoreError::InvalidModel(
                "ker B and ker C intersect nontrivially".into(),
            ));
        }
        Ok(())
    }

    pub fn jet(&self) -> &PolyJet {
        &self.jet
    }

    /// Symmetric part B = (A + A^T)/2.
    pub fn b_part(&self) -> DMat {
        self.a.symmetrize()
    }

    /// Antisymmetric part C = (A - A^T)/2.
    pub fn c_part(&self) -> DMat {
        self.a.sub(&self.a.transpose()).scale(0.5)
    }

    /// phi value, exact gradient and exact Hessian at x.
    pub fn eval_phi(&self, x: &[f64]) -> (f64, Vec<f64>, DMat) {
        let v = self.jet.value(x);
        let g = self.jet.gradient(x);
        let h = DMat::from_vec(self.dim, self.dim, self.jet.hessian(x));
        (v, g, h)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ModelSpec = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

fn frobenius(a: &DMat) -> f64 {
    a.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Kinetic structure matrix [[0, 1], [-1, gamma]] / 2.
pub fn kfp_structure(gamma: f64) -> DMat {
    DMat::from_rows(&[&[0.0, 0.5], &[-0.5, 0.5 * gamma]])
}

/// Built-in model registry.
pub fn registry(name: &str) -> Option<ModelSpec> {
    match name {
        // symmetric double well, phi = y^2/2 + x^4/4 - x^2/2
        "DW1" => Some(ModelSpec::new_unchecked(
            "DW1",
            Poly::from_terms(2, &[(&[0, 2], 0.5), (&[4, 0], 0.25), (&[2, 0], -0.5)]),
            kfp_structure(1.0),
        )),
        // tilted double well, V = x^4/4 - x^2/2 + x/10
        "DW2" => Some(ModelSpec::new_unchecked(
            "DW2",
            Poly::from_terms(
                2,
                &[(&[0, 2], 0.5), (&[4, 0], 0.25), (&[2, 0], -0.5), (&[1, 0], 0.1)],
            ),
            kfp_structure(1.0),
        )),
        // single quadratic well with the kinetic structure matrix
        "single-well-test" => Some(ModelSpec::new_unchecked(
            "single-well-test",
            Poly::from_terms(2, &[(&[0, 2], 0.5), (&[2, 0], 0.5)]),
            kfp_structure(1.0),
        )),
        // selfadjoint Witten case: A = I over the DW1 weight
        "DW1-selfadjoint" => Some(ModelSpec::new_unchecked(
            "DW1-selfadjoint",
            Poly::from_terms(2, &[(&[0, 2], 0.5), (&[4, 0], 0.25), (&[2, 0], -0.5)]),
            DMat::identity(2),
        )),
        // degenerate negative control: no transport (C = 0) and singular B
        "nu-zero-test" => Some(ModelSpec::new_unchecked(
            "nu-zero-test",
            Poly::from_terms(2, &[(&[0, 2], 0.5), (&[4, 0], 0.25), (&[2, 0], -0.5)]),
            DMat::from_rows(&[&[0.0, 0.0], &[0.0, 1.0]]),
        )),
        _ => None,
    }
}

/// Critical point with exact Hessian data.
#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub value: f64,
    pub hessian: QuadraticForm,
    /// Morse index: count of negative Hessian eigenvalues
    pub index: usize,
}

/// The validated double-well structure.
#[derive(Debug, Clone)]
pub struct WellStructure {
    /// index-0 points, ordered lexicographically by location
    pub minima: [CriticalPoint; 2],
    pub saddle: CriticalPoint,
    /// barrier actions aligned with `minima`
    pub actions: [f64; 2],
    pub s_min: f64,
    /// index into `minima` of the shallower well (larger phi value),
    /// the one that determines s_min
    pub shallow: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchBox {
    pub half_width: f64,
}

impl Default for SearchBox {
    fn default() -> Self {
        SearchBox { half_width: 3.0 }
    }
}

const NEWTON_MAX_STEPS: usize = 100;
const DAMPING_MAX_HALVINGS: usize = 20;
const DEDUPE_RADIUS: f64 = 1e-6;
const GRADIENT_TOL_FACTOR: f64 = 1e-12;
const HESSIAN_DEGENERACY_TOL: f64 = 1e-8;

/// Newton search from a uniform seed grid over the box. Seeds that fail
/// to converge are dropped; a converged point with a numerically
/// singular Hessian is fatal (the Morse assumption is violated).
pub fn find_critical_points(
    spec: &ModelSpec,
    search: SearchBox,
    seeds_per_dim: usize,
) -> Result<Vec<CriticalPoint>> {
    assert!(seeds_per_dim >= 8, "need at least 8 seeds per dimension");
    let n = spec.dim;
    let jet = spec.jet();
    let l = search.half_width;

    let mut found: Vec<Vec<f64>> = Vec::new();
    let total = seeds_per_dim.pow(n as u32);
    for flat in 0..total {
        let mut seed = vec![0.0; n];
        let mut rem = flat;
        for s in seed.iter_mut() {
            let i = rem % seeds_per_dim;
            rem /= seeds_per_dim;
            *s = -l + (2.0 * l) * (i as f64 + 0.5) / (seeds_per_dim as f64);
        }
        if let Some(x) = newton_from_seed(jet, &seed) {
            if x.iter().all(|v| v.abs() <= l + 1e-6) {
                found.push(x);
            }
        }
    }

    // deterministic dedupe: sort, then cluster-merge at the fixed radius
    found.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut reps: Vec<Vec<f64>> = Vec::new();
    'outer: for x in found {
        for r in &reps {
            if dist(&x, r) <= DEDUPE_RADIUS {
                continue 'outer;
            }
        }
        reps.push(x);
    }

    let mut points = Vec::with_capacity(reps.len());
    for x in reps {
        let (value, grad, hess) = spec.eval_phi(&x);
        let gn = norm(&grad);
        debug_assert!(gn <= 1e-10 * (1.0 + norm(&x)));
        let _ = gn;
        let qf = QuadraticForm::new(hess)?;
        let (eigs, _) = symmetric_eigen(&qf.matrix);
        let max_e = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min_e = eigs.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if min_e < HESSIAN_DEGENERACY_TOL * max_e {
            return Err(CoreError::DegenerateCritical {
                location: x,
                ratio: min_e / max_e,
            });
        }
        let index = eigs.iter().filter(|&&e| e < 0.0).count();
        points.push(CriticalPoint { location: x, value, hessian: qf, index });
    }
    points.sort_by(|a, b| {
        a.value
            .partial_cmp(&b.value)
            .unwrap()
            .then(a.location.partial_cmp(&b.location).unwrap())
    });
    Ok(points)
}

fn newton_from_seed(jet: &PolyJet, seed: &[f64]) -> Option<Vec<f64>> {
    let n = seed.len();
    let mut x = seed.to_vec();
    let mut gnorm = norm(&jet.gradient(&x));
    // iterate to stagnation: extra polishing steps past the tolerance
    // sharpen the degeneracy diagnostics downstream
    for _ in 0..NEWTON_MAX_STEPS {
        let g = jet.gradient(&x);
        let h = DMat::from_vec(n, n, jet.hessian(&x));
        let lu = match DenseLu::factor(&h) {
            Ok(lu) => lu,
            Err(_) => break,
        };
        let step: Vec<f64> = lu.solve(&g).iter().map(|v| -v).collect();
        // damped update: halve until the gradient norm decreases
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=DAMPING_MAX_HALVINGS {
            let cand: Vec<f64> = x.iter().zip(&step).map(|(xi, si)| xi + t * si).collect();
            let gn = norm(&jet.gradient(&cand));
            if gn < gnorm {
                x = cand;
                gnorm = gn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break; // stagnated at the rounding floor
        }
    }
    if gnorm <= GRADIENT_TOL_FACTOR * (1.0 + norm(&x)) {
        Some(x)
    } else {
        // exceeding the budget or stalling short drops the seed, not the run
        None
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Validates the exact double-well shape: two minima, one index-1
/// saddle, nothing else.
pub fn classify_landscape(points: &[CriticalPoint]) -> Result<WellStructure> {
    let minima: Vec<&CriticalPoint> = points.iter().filter(|p| p.index == 0).collect();
    let saddles: Vec<&CriticalPoint> = points.iter().filter(|p| p.index == 1).collect();
    let higher = points.len() - minima.len() - saddles.len();
    if minima.len() != 2 || saddles.len() != 1 || higher != 0 {
        let mut counts = std::collections::BTreeMap::new();
        for p in points {
            *counts.entry(p.index).or_insert(0usize) += 1;
        }
        return Err(CoreError::NotDoubleWell(format!(
            "critical point counts per Morse index: {:?}",
            counts
        )));
    }
    let saddle = saddles[0].clone();
    let mut mins = [minima[0].clone(), minima[1].clone()];
    mins.sort_by(|a, b| a.location.partial_cmp(&b.location).unwrap());
    let actions = [saddle.value - mins[0].value, saddle.value - mins[1].value];
    if actions[0] <= 0.0 || actions[1] <= 0.0 {
        return Err(CoreError::NotDoubleWell(format!(
            "non-positive action: {:?}",
            actions
        )));
    }
    let s_min = actions[0].min(actions[1]);
    let shallow = if mins[0].value >= mins[1].value { 0 } else { 1 };
    Ok(WellStructure { minima: mins, saddle, actions, s_min, shallow })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dw1() -> ModelSpec {
        registry("DW1").unwrap()
    }

    #[test]
    fn dw1_critical_points_exact() {
        let pts = find_critical_points(&dw1(), SearchBox::default(), 8).unwrap();
        assert_eq!(pts.len(), 3);
        // sorted by value: the two minima at -1/4 first
        assert!((pts[0].value + 0.25).abs() < 1e-12);
        assert!((pts[1].value + 0.25).abs() < 1e-12);
        assert!(pts[2].value.abs() < 1e-12);
        assert!((pts[0].location[0] + 1.0).abs() < 1e-9);
        assert!((pts[1].location[0] - 1.0).abs() < 1e-9);
        assert!(norm(&pts[2].location) < 1e-9);
        assert_eq!(pts[0].index, 0);
        assert_eq!(pts[2].index, 1);
        for p in &pts {
            let (_, g, _) = dw1().eval_phi(&p.location);
            assert!(norm(&g) <= 1e-10 * (1.0 + norm(&p.location)));
        }
    }

    #[test]
    fn dw1_mirror_symmetry() {
        let pts = find_critical_points(&dw1(), SearchBox::default(), 9).unwrap();
        let w = classify_landscape(&pts).unwrap();
        for k in 0..2 {
            assert!(
                (w.minima[0].location[k] + w.minima[1].location[k]).abs() < 1e-9,
                "minima are mirror images"
            );
        }
        assert!((w.actions[0] - 0.25).abs() < 1e-12);
        assert!((w.actions[1] - 0.25).abs() < 1e-12);
        assert!((w.s_min - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_well_is_unique_quadratic_minimum() {
        let m = registry("single-well-test").unwrap();
        let pts = find_critical_points(&m, SearchBox::default(), 8).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].index, 0);
        assert!(norm(&pts[0].location) < 1e-12);
        assert!(matches!(
            classify_landscape(&pts),
            Err(CoreError::NotDoubleWell(_))
        ));
    }

    #[test]
    fn dw2_matches_cubic_root_oracle() {
        // critical x solve x^3 - x + 1/10 = 0; bisection oracle
        let f = |x: f64| x * x * x - x + 0.1;
        let mut roots = Vec::new();
        for (lo, hi) in [(-1.5_f64, -0.5), (-0.2, 0.4), (0.5, 1.5)] {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if f(a) * f(m) <= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
        let m = registry("DW2").unwrap();
        let pts = find_critical_points(&m, SearchBox::default(), 9).unwrap();
        assert_eq!(pts.len(), 3);
        let mut xs: Vec<f64> = pts.iter().map(|p| p.location[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (x, r) in xs.iter().zip(&roots) {
            assert!((x - r).abs() < 1e-9, "{x} vs oracle {r}");
        }
        for p in &pts {
            assert!(p.location[1].abs() < 1e-9);
        }
        // distinct values, s_min attained at the shallower well
        let w = classify_landscape(&pts).unwrap();
        let phi = |x: f64| 0.25 * x.powi(4) - 0.5 * x * x + 0.1 * x;
        let s_left = phi(roots[1]) - phi(roots[0]);
        let s_right = phi(roots[1]) - phi(roots[2]);
        assert!((w.actions[0] - s_left).abs() < 1e-9);
        assert!((w.actions[1] - s_right).abs() < 1e-9);
        assert!((w.s_min - s_left.min(s_right)).abs() < 1e-12);
        assert_eq!(w.shallow, 1, "the x>0 well is shallower for the +x/10 tilt");
    }

    #[test]
    fn eval_phi_examples() {
        let m = dw1();
        let (v, g, h) = m.eval_phi(&[1.0, 0.0]);
        assert_eq!(v, -0.25);
        assert_eq!(g, vec![0.0, 0.0]);
        assert_eq!(h[(0, 0)], 2.0);
        assert_eq!(h[(1, 1)], 1.0);
        let (_, _, h0) = m.eval_phi(&[0.0, 0.0]);
        assert_eq!(h0[(0, 0)], -1.0);
        assert_eq!(h0[(1, 1)], 1.0);
    }

    #[test]
    fn model_json_round_trip_exact() {
        let m = dw1();
        let text = m.to_json().unwrap();
        let back = ModelSpec::from_json(&text).unwrap();
        assert_eq!(back.phi, m.phi);
        assert_eq!(back.a.data, m.a.data);
        assert_eq!(back.name, m.name);
        // binary64-representable coefficients survive exactly
        let tricky = ModelSpec::new_unchecked(
            "tricky",
            Poly::from_terms(1, &[(&[3], 0.1), (&[1], -2.2250738585072014e-308)]),
            DMat::identity(1),
        );
        let t2 = ModelSpec::from_json(&tricky.to_json().unwrap()).unwrap();
        assert_eq!(t2.phi, tricky.phi);
    }

    #[test]
    fn invalid_models_rejected() {
        // singular A
        let m = ModelSpec::new(
            "bad",
            Poly::from_terms(2, &[(&[2, 0], 1.0), (&[0, 2], 1.0)]),
            DMat::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]),
        );
        assert!(matches!(m, Err(CoreError::InvalidModel(_))));
        // B with a negative eigenvalue
        let m2 = ModelSpec::new(
            "bad2",
            Poly::from_terms(2, &[(&[2, 0], 1.0), (&[0, 2], 1.0)]),
            DMat::from_rows(&[&[-1.0, 0.0], &[0.0, 1.0]]),
        );
        assert!(matches!(m2, Err(CoreError::InvalidModel(_))));
        // registry KFP matrix passes
        assert!(registry("DW1").unwrap().validate().is_ok());
    }

    #[test]
    fn degenerate_hessian_is_fatal() {
        // phi = x^4/4 + y^2/2: critical point at 0 with singular Hessian
        let m = ModelSpec::new_unchecked(
            "degenerate",
            Poly::from_terms(2, &[(&[4, 0], 0.25), (&[0, 2], 0.5)]),
            DMat::identity(2),
        );
        let r = find_critical_points(&m, SearchBox::default(), 8);
        assert!(matches!(r, Err(CoreError::DegenerateCritical { .. })));
    }
}
