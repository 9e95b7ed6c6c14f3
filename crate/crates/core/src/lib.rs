//! Censored and kinked structural vector autoregressions.
//!
//! The observed policy rate is the maximum of a shadow rate and an
//! observable lower bound, and the bound regime can kink the coefficients and
//! variances of the remaining equations. The crate covers the reduced form
//! and its structural parameterization, exact and simulated likelihoods,
//! maximum-likelihood fitting with the usual regime-irrelevance tests,
//! set identification, generalized impulse responses and data ingestion.

pub mod error;
pub mod estimation;
pub mod identification;
pub mod ingest;
pub mod irf;
pub mod likelihood;
pub mod model;
pub mod optim;
pub mod period;
pub mod serde_mat;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    build_regressors, detect_regimes, impact_multipliers, reduced_from_structural, simulate, Dataset, Dims,
    ModelSpec, ReducedFormParams, RegimePath, Regressor, Restriction, StructuralParams, Variant,
};
pub use period::Quarter;
