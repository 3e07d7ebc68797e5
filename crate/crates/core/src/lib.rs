//! Bayesian smoothing of gridded surfaces with a hybrid model: a thin-plate
//! Gaussian process for the smooth part plus a rough field whose adjacent
//! differences carry a scale-mixture prior (LASSO, horseshoe, Cauchy,
//! Pareto or normal-Jeffreys). Includes the Gibbs sampler, field
//! simulation and the factorial simulation study.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod priors;
pub mod quadrature;
pub mod sampler;
pub mod study;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{build_diff_matrix, build_grid, DiffMatrix, DiffOrder, GridGraph};
pub use model::{Anchor, HybridModel, ModelMatrices};
pub use priors::{PriorName, ScalingPrior};
pub use sampler::{estimate_edf, run_chain, ChainState, FieldScheme, FitMode, Observations, SamplerConfig, Samples};
pub use study::{Method, StudyDesign, StudyResult};
pub use synth::RoughTemplate;
