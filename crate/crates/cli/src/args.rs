//! Command-line arguments and `key=value` config-file merging.

use std::path::PathBuf;

use bridgelab::jump_models::{JumpDensity, MODEL_GRAMMAR};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "bridgelab", about = "Compound Poisson bridges, pinned Poisson point processes and their identities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Forward compound-Poisson paths.
    SampleLevy(SampleLevy),
    /// Bridge paths from Z_0 = x to Z_1 = y.
    SampleBridge(SampleBridge),
    /// Periodic Ornstein-Uhlenbeck paths.
    SamplePerou(SamplePerou),
    /// Monte Carlo check of an identity.
    Check(Check),
    /// Convolution constants k ≤ (ρ∗ρ)/ρ ≤ K.
    Bounds(Bounds),
    /// Bridge jump counts against conditioned Poisson laws.
    Dominate(Dominate),
}

fn parse_model(s: &str) -> Result<JumpDensity, String> {
    s.parse::<JumpDensity>().map_err(|e| format!("{e}\n\n{MODEL_GRAMMAR}"))
}

fn model_string<S: serde::Serializer>(m: &JumpDensity, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&m.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mcmc,
    Rejection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Identity {
    Mecke,
    Bivariate,
    Split,
    Reweight,
    Diminished,
    Perou,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args, Serialize)]
pub struct Common {
    /// Jump model, e.g. "laplace(lambda=1)" or "cauchy(alpha=2,lambda=1)".
    #[arg(long, value_parser = parse_model)]
    #[serde(serialize_with = "model_string")]
    pub model: JumpDensity,
    /// Root seed (mandatory).
    #[arg(long)]
    pub seed: u64,
    /// Number of samples.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// `key=value` file with defaults for any flag; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; output does not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Exit with status 1 when an identity check has |z| ≥ 3.
    #[arg(long)]
    pub strict: bool,
}

/// Bridge chain tuning.
#[derive(Debug, Args, Serialize)]
pub struct ChainArgs {
    /// Chain time discarded before the first recorded state.
    #[arg(long, default_value_t = 20.0)]
    pub burn_in: f64,
    /// Chain time between recorded states.
    #[arg(long, default_value_t = 5.0)]
    pub interval: f64,
    /// Paths recorded per independent chain.
    #[arg(long, default_value_t = 10)]
    pub samples_per_chain: usize,
    /// Event cap per chain.
    #[arg(long, default_value_t = 1_000_000)]
    pub max_events: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleLevy {
    #[command(flatten)]
    pub common: Common,
    /// Initial value Z_0.
    #[arg(long, default_value_t = 0.0)]
    pub x: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleBridge {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value_t = Method::Mcmc)]
    pub method: Method,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub y: f64,
    /// Rejection window; defaults to 0.05 × IQR of the jump density.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Trial budget per accepted rejection sample.
    #[arg(long, default_value_t = bridgelab::samplers::DEFAULT_TRIAL_BUDGET)]
    pub budget: u64,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SamplePerou {
    #[command(flatten)]
    pub common: Common,
    /// Damping parameter (nonzero).
    #[arg(long, allow_hyphen_values = true)]
    pub c: f64,
    /// Grid points per path in CSV output.
    #[arg(long, default_value_t = bridgelab::path::DEFAULT_EXPORT_POINTS)]
    pub points: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct Check {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub identity: Identity,
    /// Test functional; each identity has a default.
    #[arg(long)]
    pub functional: Option<String>,
    /// Bridge height (diminished) or damping (perou).
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub c: f64,
    /// Rejection window for the diminished check; defaults to 0.05 × IQR.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Split identity under bridge samples from x to y.
    #[arg(long)]
    pub bridge: bool,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub y: f64,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct GridArgs {
    /// Grid half-width for the ratio search.
    #[arg(long, default_value_t = 50.0)]
    pub halfwidth: f64,
    /// Grid points (odd counts include x = 0).
    #[arg(long, default_value_t = 2001)]
    pub points: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct Bounds {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct Dominate {
    #[command(flatten)]
    pub common: Common,
    /// Bridge height (nonzero).
    #[arg(long, allow_hyphen_values = true)]
    pub c: f64,
    #[arg(long, value_enum, default_value_t = Method::Mcmc)]
    pub method: Method,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = bridgelab::samplers::DEFAULT_TRIAL_BUDGET)]
    pub budget: u64,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::SampleLevy(a) => &a.common,
            Command::SampleBridge(a) => &a.common,
            Command::SamplePerou(a) => &a.common,
            Command::Check(a) => &a.common,
            Command::Bounds(a) => &a.common,
            Command::Dominate(a) => &a.common,
        }
    }
}

/// Flags that take no value.
const SWITCHES: &[&str] = &["strict", "bridge"];

/// Finds `--config <path>` (or `--config=<path>`) in raw arguments.
fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn has_flag(argv: &[String], key: &str) -> bool {
    let long = format!("--{key}");
    let eq = format!("--{key}=");
    argv.iter().any(|a| *a == long || a.starts_with(&eq))
}

/// Appends `--key value` for every config entry whose flag is absent from
/// `argv`. Blank lines and lines starting with `#` are ignored.
pub fn merge_config(argv: Vec<String>) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config file {path}: {e}"))?;
    let mut out = argv;
    let mut extra = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{path}:{}: expected key=value, got '{line}'", lineno + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" {
            return Err(format!("{path}:{}: config files cannot include other config files", lineno + 1));
        }
        if has_flag(&out, &key) {
            continue;
        }
        if SWITCHES.contains(&key.as_str()) {
            match value {
                "true" => extra.push(format!("--{key}")),
                "false" => {}
                _ => return Err(format!("{path}:{}: {key} expects true or false", lineno + 1)),
            }
        } else {
            extra.push(format!("--{key}={value}"));
        }
    }
    out.extend(extra);
    Ok(out)
}
