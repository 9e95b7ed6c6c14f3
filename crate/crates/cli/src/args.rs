use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "cksvar", version, about = "Censored and kinked SVARs with an occasionally binding lower bound")]
pub struct Cli {
    /// Seed for every random stream; equal seeds give byte-identical artifacts.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for the library routines.
    #[arg(long, global = true, env = "CKSVAR_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Build a quarterly dataset and manifest from raw CSV files.
    Ingest(IngestArgs),
    /// Maximum-likelihood fit of one model.
    Estimate(ModelArgs),
    /// Likelihood-ratio tests and lag selection.
    Test {
        #[command(subcommand)]
        which: TestCommand,
    },
    /// Identified set for ξ and the structural coefficients.
    Idset(IdsetArgs),
    /// Envelope of generalized impulse responses over the identified set.
    Irf(IrfArgs),
    /// Band of shadow-rate paths over the identified set.
    Shadow(ShadowArgs),
    /// New Keynesian model scenarios.
    Dsge {
        #[command(subcommand)]
        which: DsgeCommand,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetArg {
    Us,
    Jp,
    Custom,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long, value_enum, default_value = "us")]
    pub preset: PresetArg,
    /// JSON ingestion config; required for `custom`, replaces the preset otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset name used in artifact names (default: the preset).
    #[arg(long)]
    pub name: Option<String>,
    /// Raw wide CSV files with a date column.
    #[arg(required = true)]
    pub sources: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    Cksvar,
    Ksvar,
    Csvar,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Dataset CSV (a sibling manifest `.json` supplies the column roles).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "cksvar")]
    pub variant: VariantArg,
    /// Lag order.
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    /// Particles for the simulated likelihood.
    #[arg(long, default_value_t = 4096)]
    pub particles: usize,
    /// Optimizer starting points.
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    /// Skip the numerical Hessian and standard errors.
    #[arg(long)]
    pub no_covariance: bool,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestCommand {
    /// Bound irrelevance for the unconstrained equations.
    Ih1(ModelArgs),
    /// CSVAR against CKSVAR.
    Ih2(ModelArgs),
    /// Exclusion of the lags of one variable from the other equations.
    ExclLong(ExclArgs),
    /// Lag order by AIC and sequential tests.
    LagSelect(LagArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ExclArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Excluded variable, by name or column index.
    #[arg(long, default_value = "long_rate")]
    pub excluded: String,
    /// Equations the restriction applies to (default: the other unconstrained ones).
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct LagArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 4)]
    pub pmax: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IdsetArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub xi_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub xi_hi: f64,
    #[arg(long, default_value_t = 0.005)]
    pub xi_step: f64,
    /// Allow negative ξ (reversal-rate exploration); sets the grid floor to −1
    /// unless `--xi-lo` is lower.
    #[arg(long)]
    pub negative_xi: bool,
    /// Variables that an expansionary shock may not lower.
    #[arg(long, value_delimiter = ',')]
    pub nonneg: Vec<String>,
    /// Variables that an expansionary shock may not raise.
    #[arg(long, value_delimiter = ',')]
    pub nonpos: Vec<String>,
    /// Last horizon of the sign restrictions.
    #[arg(long, default_value_t = 4)]
    pub sign_horizon: usize,
    #[arg(long, default_value_t = 200)]
    pub sign_draws: usize,
    /// Enforcement dates such as 2009Q1 (default: every date).
    #[arg(long, value_delimiter = ',')]
    pub sign_dates: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct IrfArgs {
    #[command(flatten)]
    pub id: IdsetArgs,
    /// Date of the shock, e.g. 2009Q1. Without it every date is reported at
    /// `--horizons`.
    #[arg(long)]
    pub date: Option<String>,
    #[arg(long, default_value_t = 12)]
    pub horizon: usize,
    /// Horizons reported by the timeline.
    #[arg(long, value_delimiter = ',', default_value = "0,4,8")]
    pub horizons: Vec<usize>,
    #[arg(long, default_value_t = -0.25, allow_negative_numbers = true)]
    pub shock: f64,
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    /// Report cumulated responses of the unconstrained variables.
    #[arg(long)]
    pub cumulative: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ShadowArgs {
    #[command(flatten)]
    pub id: IdsetArgs,
    /// Forward-guidance parameter used to map the reduced shadow value.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Use the 5% and 95% smoothed quantiles instead of the smoothed mean.
    #[arg(long)]
    pub quantiles: bool,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DsgeCommand {
    /// Run a bundled scenario (figure1 or figure2).
    Scenario(ScenarioArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ScenarioArgs {
    pub name: String,
    /// Key-value scenario file applied before the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub xi: Vec<f64>,
    #[arg(long)]
    pub demand_size: Option<f64>,
    #[arg(long)]
    pub periods: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
}
