//! Command-line flags and `--config` overrides.
//!
//! Each subcommand's flags are a serde-able struct. A config file is a JSON
//! object whose keys are the flag names in snake_case; its values replace the
//! ones given on the command line.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use subsampled_rdp::accountant::AccountantConfig;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "srdp", version, about = "Rényi-DP accounting for subsampled mechanisms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// RDP curve ε(α) of a base mechanism.
    Mech(MechArgs),
    /// Amplified RDP curves of a subsampled mechanism.
    Amplify(AmplifyArgs),
    /// ε after k subsampled rounds, for the accountant and classical baselines.
    Compose(ComposeArgs),
    /// ε from δ or δ from ε for a ledger.
    Convert(ConvertArgs),
    /// Check lower ≤ exact divergence ≤ upper on the worst-case pair.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Naive,
    Strong,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Common {
    /// JSON file whose keys override the command-line flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

/// Orders to evaluate: the integers `alpha_min..=alpha_max`, plus
/// `fractional_points` log-spaced non-integer orders in the same range, or an
/// explicit list.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AlphaGrid {
    #[arg(long, default_value_t = 2)]
    pub alpha_min: u64,
    #[arg(long)]
    pub alpha_max: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub fractional_points: usize,
    /// Comma-separated orders, strictly increasing; overrides the range.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MechArgs {
    /// Mechanism as JSON, e.g. '{"kind":"gaussian","sigma":5}'.
    #[arg(long)]
    pub mechanism: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: AlphaGrid,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AmplifyArgs {
    #[arg(long)]
    pub mechanism: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Bound kinds: general, tight, lower, puredp_form, asymptotic_bad,
    /// asymptotic_good.
    #[arg(long, value_delimiter = ',', default_value = "general")]
    pub bounds: Vec<String>,
    /// Population size for the asymptotic kinds.
    #[arg(long, default_value_t = 100_000)]
    pub n: u64,
    #[arg(long, default_value_t = 256)]
    pub alpha_thresh: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: AlphaGrid,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ComposeArgs {
    #[arg(long)]
    pub mechanism: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    pub delta: f64,
    /// Explicit round counts; overrides `k_max`/`k_points`.
    #[arg(long, value_delimiter = ',')]
    pub rounds: Option<Vec<u64>>,
    #[arg(long, default_value_t = 600_000)]
    pub k_max: u64,
    /// Number of distinct, roughly log-spaced round counts in `1..=k_max`.
    #[arg(long, default_value_t = 600)]
    pub k_points: usize,
    /// Methods: rdp_general, rdp_lower, naive, strong. Defaults to all that
    /// apply to the mechanism.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Restrict the classical baselines to this one.
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Orders above this use the bracketed approximation.
    #[arg(long, default_value_t = 256)]
    pub alpha_thresh: u64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(skip)]
    pub accountant: Option<AccountantConfig>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConvertArgs {
    /// Ledger JSON file; alternatively build one from `mechanism`.
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    #[arg(long)]
    pub mechanism: Option<String>,
    /// Sampling ratio; the mechanism is composed unsubsampled when absent.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value = "general")]
    pub bound_kind: String,
    #[arg(long, default_value_t = 1)]
    pub rounds: u64,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Apply the convex projection before converting.
    #[arg(long, default_value_t = false)]
    pub project: bool,
    /// Also write the ledger that was used.
    #[arg(long)]
    pub save_ledger: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(skip)]
    pub accountant: Option<AccountantConfig>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub mechanism: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Relative quadrature tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub n: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: AlphaGrid,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

/// Overlays the JSON object in `path` onto `args`.
pub fn apply_config<T: Serialize + DeserializeOwned>(args: T, path: Option<&PathBuf>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let overrides: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("malformed config {}: {e}", path.display())))?;
    let Value::Object(overrides) = overrides else {
        return Err(CliError::Usage("config must be a JSON object".into()));
    };
    let mut merged = serde_json::to_value(&args).expect("flags serialize");
    let fields = merged.as_object_mut().expect("flags serialize to an object");
    for (key, value) in overrides {
        if !fields.contains_key(&key) {
            return Err(CliError::Usage(format!("unknown config key `{key}`")));
        }
        // A mechanism may be given inline as an object.
        let value = match (key.as_str(), value) {
            ("mechanism", v @ Value::Object(_)) => Value::String(v.to_string()),
            (_, v) => v,
        };
        fields.insert(key, value);
    }
    serde_json::from_value(merged).map_err(|e| CliError::Usage(format!("invalid config value: {e}")))
}
