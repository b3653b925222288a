//! Additive multi-fidelity expansions.
//!
//! The low-fidelity model is projected on the level-`w` grid and the
//! correction `hf - lf` on the level-`w - q` grid. Their coefficient tables are
//! summed: shared bases get `alpha_lf + alpha_cr`, the rest keep `alpha_lf`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{eval_grid, EvalCache, Model};
use crate::orthopoly::VariableSpec;
use crate::pce::{project, Expansion, Provenance};
use crate::sparse_grid::smolyak_grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MfConfig {
    /// Sparse level of the low-fidelity expansion.
    pub w: u32,
    /// Level offset of the correction expansion.
    pub q: u32,
}

impl MfConfig {
    pub fn new(w: u32, q: u32) -> Result<Self> {
        let cfg = MfConfig { w, q };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q > self.w {
            return Err(Error::InvalidMfConfig(format!("offset q={} exceeds level w={}", self.q, self.w)));
        }
        Ok(())
    }

    pub fn correction_level(&self) -> u32 {
        self.w - self.q
    }
}

pub fn correction_values(hf: &[f64], lf: &[f64]) -> Result<Vec<f64>> {
    if hf.len() != lf.len() {
        return Err(Error::LengthMismatch { expected: hf.len(), got: lf.len() });
    }
    Ok(hf.iter().zip(lf).map(|(h, l)| h - l).collect())
}

/// The pieces of a multi-fidelity build.
#[derive(Debug, Clone)]
pub struct MfExpansion {
    pub config: MfConfig,
    pub lf: Expansion,
    pub correction: Expansion,
    pub combined: Expansion,
    /// Node counts of the level-`w` and level-`w - q` grids.
    pub lf_grid_len: usize,
    pub correction_grid_len: usize,
}

/// Sums an LF table and a correction table into the combined expansion.
pub fn combine(lf: &Expansion, correction: &Expansion) -> Result<Expansion> {
    lf.add(correction, Provenance::Combined)
}

/// Builds LF, correction and combined expansions, routing every model call
/// through `cache`.
pub fn build_mf(
    lf_model: &dyn Model,
    hf_model: &dyn Model,
    specs: &[VariableSpec],
    cfg: MfConfig,
    cache: &EvalCache,
) -> Result<MfExpansion> {
    cfg.validate()?;
    let n = specs.len();
    for m in [lf_model, hf_model] {
        if m.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: m.dim() });
        }
    }

    let lf_grid = smolyak_grid(n, cfg.w, specs)?;
    let lf_values = eval_grid(lf_model, &lf_grid, cache)?;
    let lf = project(&lf_grid, &lf_values, Provenance::LF)?;

    let cr_grid = smolyak_grid(n, cfg.correction_level(), specs)?;
    let hf_values = eval_grid(hf_model, &cr_grid, cache)?;
    let lf_on_cr = eval_grid(lf_model, &cr_grid, cache)?;
    let correction = project(&cr_grid, &correction_values(&hf_values, &lf_on_cr)?, Provenance::Correction)?;

    let combined = combine(&lf, &correction)?;
    Ok(MfExpansion {
        config: cfg,
        lf,
        correction,
        combined,
        lf_grid_len: lf_grid.len(),
        correction_grid_len: cr_grid.len(),
    })
}

/// Single-fidelity expansion of `model` at level `w` through `cache`.
pub fn build_single(model: &dyn Model, specs: &[VariableSpec], w: u32, provenance: Provenance, cache: &EvalCache) -> Result<Expansion> {
    if model.dim() != specs.len() {
        return Err(Error::DimensionMismatch { expected: specs.len(), got: model.dim() });
    }
    let grid = smolyak_grid(specs.len(), w, specs)?;
    let values = eval_grid(model, &grid, cache)?;
    project(&grid, &values, provenance)
}
