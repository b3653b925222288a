//! Multi-fidelity polynomial chaos expansions for variance-based sensitivity
//! analysis.
//!
//! Expansions are built by pseudo-spectral projection on isotropic Smolyak
//! sparse grids of Gauss rules (Legendre for uniform inputs, probabilists'
//! Hermite for normal inputs). A multi-fidelity expansion adds a correction
//! expansion of `hf - lf` built on a coarser grid to a low-fidelity expansion
//! built on a finer one. Sobol indices, moments and error metrics are read
//! directly off the coefficient table.

pub mod config;
pub mod error;
pub mod mf_pce;
pub mod models;
pub mod orthopoly;
pub mod pce;
pub mod sobol;
pub mod sparse_grid;
pub mod study;

pub use error::{Error, Result};
pub use mf_pce::{build_mf, MfConfig, MfExpansion};
pub use models::{EvalCache, Fidelity, Model};
pub use orthopoly::{Distribution, GaussRule, PolyFamily, VariableSpec};
pub use pce::{Expansion, Provenance};
pub use sobol::SobolReport;
pub use sparse_grid::{MultiIndex, QuadratureGrid};
