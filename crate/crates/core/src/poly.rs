//! Multivariate polynomials as explicit coefficient tables.
//!
//! All derivative data downstream (gradients, Hessians, symbol
//! linearizations) is evaluated exactly from these tables; there is no
//! numerical differentiation anywhere in the crate.

use serde::{Deserialize, Serialize};

/// One monomial: exponent tuple and coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub exps: Vec<u32>,
    pub coef: f64,
}

/// Polynomial in `dim` variables, stored as a sum of monomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    pub dim: usize,
    pub terms: Vec<Monomial>,
}

impl Poly {
    pub fn new(dim: usize, terms: Vec<Monomial>) -> Self {
        let mut p = Poly { dim, terms };
        p.normalize();
        p
    }

    pub fn zero(dim: usize) -> Self {
        Poly { dim, terms: Vec::new() }
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs.
    pub fn from_terms(dim: usize, terms: &[(&[u32], f64)]) -> Self {
        Poly::new(
            dim,
            terms
                .iter()
                .map(|(e, c)| Monomial { exps: e.to_vec(), coef: *c })
                .collect(),
        )
    }

    /// Merges duplicate monomials and drops exact zeros; sorts terms so
    /// that evaluation order (and hence rounding) is reproducible.
    fn normalize(&mut self) {
        for t in &self.terms {
            assert_eq!(t.exps.len(), self.dim, "monomial arity mismatch");
        }
        self.terms.sort_by(|a, b| a.exps.cmp(&b.exps));
        let mut merged: Vec<Monomial> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match merged.last_mut() {
                Some(last) if last.exps == t.exps => last.coef += t.coef,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coef != 0.0);
        self.terms = merged;
    }

    /// Value at `x`. Powers are accumulated by repeated multiplication
    /// per monomial, so the result is deterministic.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut acc = 0.0;
        for t in &self.terms {
            let mut m = t.coef;
            for (xi, &e) in x.iter().zip(&t.exps) {
                m *= powi(*xi, e);
            }
            acc += m;
        }
        acc
    }

    /// Exact partial derivative with respect to variable `k`.
    pub fn diff(&self, k: usize) -> Poly {
        assert!(k < self.dim);
        let terms = self
            .terms
            .iter()
            .filter(|t| t.exps[k] > 0)
            .map(|t| {
                let mut exps = t.exps.clone();
                let e = exps[k];
                exps[k] = e - 1;
                Monomial { exps, coef: t.coef * f64::from(e) }
            })
            .collect();
        Poly::new(self.dim, terms)
    }

    pub fn gradient(&self) -> Vec<Poly> {
        (0..self.dim).map(|k| self.diff(k)).collect()
    }

    /// Hessian as a `dim * dim` row-major table of polynomials.
    pub fn hessian(&self) -> Vec<Poly> {
        let grad = self.gradient();
        let mut h = Vec::with_capacity(self.dim * self.dim);
        for g in &grad {
            for k in 0..self.dim {
                h.push(g.diff(k));
            }
        }
        h
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.exps.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }
}

/// Gradient and Hessian of `phi` with the polynomials pre-differentiated
/// once at construction.
#[derive(Debug, Clone)]
pub struct PolyJet {
    pub phi: Poly,
    pub grad: Vec<Poly>,
    pub hess: Vec<Poly>,
}

impl PolyJet {
    pub fn new(phi: Poly) -> Self {
        let grad = phi.gradient();
        let hess = phi.hessian();
        PolyJet { phi, grad, hess }
    }

    pub fn dim(&self) -> usize {
        self.phi.dim
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.phi.eval(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.grad.iter().map(|g| g.eval(x)).collect()
    }

    /// Row-major `dim * dim` Hessian values at `x`.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        self.hess.iter().map(|g| g.eval(x)).collect()
    }
}

fn powi(x: f64, e: u32) -> f64 {
    let mut r = 1.0;
    for _ in 0..e {
        r *= x;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dw1_phi() -> Poly {
        // y^2/2 + x^4/4 - x^2/2
        Poly::from_terms(
            2,
            &[(&[0, 2], 0.5), (&[4, 0], 0.25), (&[2, 0], -0.5)],
        )
    }

    #[test]
    fn eval_and_derivatives_are_exact() {
        let p = dw1_phi();
        assert_eq!(p.eval(&[1.0, 0.0]), -0.25);
        let jet = PolyJet::new(p);
        assert_eq!(jet.gradient(&[1.0, 0.0]), vec![0.0, 0.0]);
        let h = jet.hessian(&[1.0, 0.0]);
        assert_eq!(h, vec![2.0, 0.0, 0.0, 1.0]);
        let h0 = jet.hessian(&[0.0, 0.0]);
        assert_eq!(h0, vec![-1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_term_at_origin() {
        let p = Poly::from_terms(3, &[(&[0, 0, 0], 4.25), (&[1, 2, 0], -3.0)]);
        assert_eq!(p.eval(&[0.0, 0.0, 0.0]), 4.25);
    }

    #[test]
    fn duplicate_monomials_merge() {
        let p = Poly::from_terms(1, &[(&[2], 1.5), (&[2], 0.5), (&[1], 0.0)]);
        assert_eq!(p.terms.len(), 1);
        assert_eq!(p.eval(&[2.0]), 8.0);
    }
}
