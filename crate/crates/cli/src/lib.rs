//! Command-line front end for the Harris toolkit: run configuration,
//! subcommand implementations and the validation grid.

use std::path::PathBuf;

use clap::Args;

pub mod commands;
pub mod output;
pub mod suite;

use output::Format;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Harris scale m > 1 (direct parameterization).
    #[arg(long)]
    pub m: Option<f64>,
    /// Step k >= 1.
    #[arg(long)]
    pub k: Option<u32>,
    /// Birth-process base rate; with --t gives m = e^{tλk}.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Gamma mixing rate; with --t gives m = (a+t)/a.
    #[arg(long)]
    pub a: Option<f64>,
    /// Query time.
    #[arg(long)]
    pub t: Option<f64>,
    /// Simulation horizon for the birth model (defaults to --t).
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub replicas: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Significance level of goodness-of-fit tests.
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Tail mass bound for tables and truncated state spaces.
    #[arg(long, default_value_t = 1e-12)]
    pub tail: f64,
    /// Absolute tolerance for numerical cross-checks.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Relative tolerance of the sample variance check.
    #[arg(long = "var-tol", default_value_t = 0.05)]
    pub var_tol: f64,
    /// pgf evaluation point (repeatable); a grid on [0, 1] when omitted.
    #[arg(long)]
    pub s: Vec<f64>,
    /// Largest count index compared by mixture-check.
    #[arg(long = "n-max", default_value_t = 20)]
    pub n_max: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for Monte Carlo replicas.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            m: None,
            k: None,
            lambda: None,
            a: None,
            t: None,
            horizon: None,
            replicas: 100_000,
            seed: 0,
            alpha: 0.01,
            tail: 1e-12,
            tol: 1e-8,
            var_tol: 0.05,
            s: Vec::new(),
            n_max: 20,
            format: Format::Csv,
            out: None,
            threads: None,
        }
    }
}
