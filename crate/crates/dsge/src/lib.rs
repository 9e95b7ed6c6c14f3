//! Log-linear New Keynesian model with a lower bound on the short rate,
//! quantitative easing and forward guidance.
//!
//! Unconventional policy enters through the shadow rate. The Euler equation
//! carries the effective rate `(1−λ*)î + λ*î*`, and forward guidance makes
//! `î* = −αî + (1+α)î^Taylor`. Only `ξ* = λ*(1+α)` matters for the observed
//! paths.

pub mod export;
pub mod params;
pub mod rules;
pub mod scenario;
pub mod sim;

pub use export::export_as_cksvar;
pub use params::{derive_reduced_params, DSGEParams, DeepParams, ReducedCoefficients};
pub use rules::{long_rate_rules, solve_linear_re, DecisionRules, LongRateRules};
pub use scenario::{dsge_girf, DsgeIrf};
pub use sim::{simulate_linear, simulate_prop2, solve_occbin, Method, Shocks, SimPath, State};

#[derive(Debug, thiserror::Error)]
pub enum DsgeError {
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("no unique stable solution ({0} stable roots)")]
    Indeterminate(usize),
    #[error("regime iteration did not converge after {0} rounds")]
    NoConvergence(usize),
    #[error("lower-bound spell reaches the solution horizon of {0} periods")]
    Horizon(usize),
    #[error(transparent)]
    Core(#[from] cksvar::Error),
}

pub type Result<T> = std::result::Result<T, DsgeError>;
