use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use mec_aoi::model::default_a_max;
use mec_aoi::ModelParams;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Flags accepted by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct Shared {
    /// Local service rate, in (0, 1]
    #[arg(long)]
    pub mu: Option<f64>,
    /// Price of one edge-cloud slot
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Discount factor for the value iterates
    #[arg(long)]
    pub beta: Option<f64>,
    /// Truncation age
    #[arg(long)]
    pub amax: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated slots
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Output file; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// TOML file with defaults for any of the flags above
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub amax: Option<u32>,
    pub seed: Option<u64>,
    pub horizon: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

pub const DEFAULT_MU: f64 = 0.01;
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_HORIZON: u64 = 1_000_000;

/// Flags, then config file, then built-in defaults.
#[derive(Clone, Debug)]
pub struct Settings {
    pub mu: f64,
    pub lambda: f64,
    pub beta: f64,
    pub a_max: u32,
    pub seed: u64,
    pub horizon: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Settings {
    pub fn resolve(flags: &Shared, default_format: Format) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let mu = flags.mu.or(file.mu).unwrap_or(DEFAULT_MU);
        let s = Settings {
            mu,
            lambda: flags.lambda.or(file.lambda).unwrap_or(DEFAULT_LAMBDA),
            beta: flags.beta.or(file.beta).unwrap_or(ModelParams::DEFAULT_BETA),
            a_max: match flags.amax.or(file.amax) {
                Some(a) => a,
                None if mu > 0.0 && mu <= 1.0 => default_a_max(mu),
                None => 50,
            },
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            horizon: flags.horizon.or(file.horizon).unwrap_or(DEFAULT_HORIZON),
            out: flags.out.clone().or(file.out),
            format: flags.format.or(file.format).unwrap_or(default_format),
        };
        s.params()?;
        Ok(s)
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        Ok(ModelParams::new(self.mu, self.lambda, self.beta, self.a_max)?)
    }
}
