//! Shrinkage CAR and CAT score feature selection for regression problems
//! with many more predictors than samples.
//!
//! The shrinkage correlation matrix `R = λI + (1-λ)R_emp` is never formed.
//! Instead it is held as `λ(I + U M Uᵀ)` with `U` of size `d × m`, and
//! matrix powers are applied to vectors in `O(dm)`.

pub mod cache;
pub mod cli;
pub mod error;
pub mod evaluate;
pub mod genomatrix;
pub mod io;
pub mod lowrank;
pub mod pipeline;
pub mod scores;
pub mod selection;
pub mod simulate;
mod stats;

pub use error::{Error, Result};
pub use genomatrix::{CovariateMatrix, GenotypeMatrix, MarkerInfo, PhenotypeVector, RawGenotypes};
pub use lowrank::{LambdaSource, LowRankCorrelation, ShrinkageEstimate};
pub use scores::{ScoreKind, ScoreVector};
pub use selection::SelectionResult;
pub use simulate::SimulationScenario;

/// Tool version embedded in every output artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
