//! Run configuration: one self-describing JSON document; CLI flags
//! override individual keys. Unknown keys are rejected.

use serde::Deserialize;

use kfp_core::landscape::{registry, ModelSpec};
use kfp_core::CoreError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ModelField {
    Name(String),
    Inline(ModelSpec),
}

impl Default for ModelField {
    fn default() -> Self {
        ModelField::Name("DW1".into())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// spacing rule: Delta <= h / multiplier
    pub multiplier: f64,
    /// box half-width per dimension
    pub box_half_width: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { multiplier: 2.0, box_half_width: 2.5 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub basis: usize,
    pub residual_tol: f64,
    pub max_restarts: usize,
    pub window_b: f64,
    /// extra real shifts (in units of h) tried besides -1/10
    pub shifts: Vec<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            basis: 56,
            residual_tol: 1e-8,
            max_restarts: 40,
            window_b: 2.0,
            shifts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// strictly decreasing list of h values
    pub h: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { h: vec![0.14, 0.12, 0.10, 0.08, 0.07, 0.06] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypothesesSection {
    pub t0: f64,
    pub ring_radius: f64,
    pub exclusion: f64,
    pub threshold: f64,
    pub samples_per_ring: usize,
    pub eps_grid: Vec<f64>,
}

impl Default for HypothesesSection {
    fn default() -> Self {
        HypothesesSection {
            t0: 10.0,
            ring_radius: 0.5,
            exclusion: 0.1,
            threshold: 1e-3,
            samples_per_ring: 16,
            eps_grid: vec![0.5, 0.1, 0.05],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelField,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub sweep: SweepSection,
    pub hypotheses: HypothesesSection,
    pub out_dir: String,
    pub seed: u64,
    /// cutoff radius for the prefactor pipeline
    pub prefactor_r0: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelField::default(),
            grid: GridSection::default(),
            solver: SolverSection::default(),
            sweep: SweepSection::default(),
            hypotheses: HypothesesSection::default(),
            out_dir: "out".into(),
            seed: 42,
            prefactor_r0: 0.25,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.grid.multiplier <= 0.0 || self.grid.box_half_width <= 0.0 {
            return Err("grid parameters must be positive".into());
        }
        if self.solver.residual_tol <= 0.0 || self.solver.window_b <= 0.0 {
            return Err("solver tolerances must be positive".into());
        }
        if self.hypotheses.t0 <= 0.0
            || self.hypotheses.threshold <= 0.0
            || self.hypotheses.ring_radius <= 0.0
        {
            return Err("hypothesis parameters must be positive".into());
        }
        if self.sweep.h.is_empty() || self.sweep.h.iter().any(|&h| h <= 0.0) {
            return Err("sweep needs positive h values".into());
        }
        for w in self.sweep.h.windows(2) {
            if w[1] >= w[0] {
                return Err("sweep h list must be strictly decreasing".into());
            }
        }
        if self.prefactor_r0 <= 0.0 {
            return Err("prefactor_r0 must be positive".into());
        }
        Ok(())
    }

    pub fn resolve_model(&self) -> Result<ModelSpec, CoreError> {
        let m = match &self.model {
            ModelField::Name(name) => registry(name).ok_or_else(|| {
                CoreError::InvalidModel(format!("unknown model name {name:?}"))
            })?,
            ModelField::Inline(m) => m.clone(),
        };
        Ok(m)
    }
}
