use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(
    name = "gamevo",
    version,
    about = "Search, evaluate and run adaptive GAM load forecasters"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select a model per hour with an evolutionary or random search.
    Search(SearchArgs),
    /// Report fixed and adaptive errors of saved models on every split.
    Evaluate(EvaluateArgs),
    /// Replay saved models operationally: weekly updates on delayed data.
    Forecast(ForecastArgs),
    /// Generate a synthetic dataset from a known formula.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    /// Evolve formula and Q jointly.
    EaFq,
    /// Evolve the formula in fixed mode, then tune Q by grid search.
    EaFQigs,
    /// Random search over adaptive models.
    Random,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::EaFq => "ea-fq",
            Algo::EaFQigs => "ea-f-qigs",
            Algo::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON schema of the input CSV.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub algo: Option<Algo>,
    /// Model evaluations per run, initial population included.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    /// Candidates drawn per parent selection.
    #[arg(long)]
    pub tournament: Option<usize>,
    /// Hours to model separately, e.g. `0-23` or `7,8,19`. Without it one
    /// model is searched on all rows.
    #[arg(long)]
    pub hours: Option<String>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Random seed, shared by every hour.
    #[arg(long, env = "GAMEVO_SEED")]
    pub seed: Option<u64>,
    /// Put a named preset formula into the initial population.
    #[arg(long)]
    pub seed_preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// A model file, or a search output directory.
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// A model file, or a search output directory.
    #[arg(long)]
    pub model: PathBuf,
    /// Output CSV for a model file, output directory for a search directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthPreset {
    /// Three effects over an eight-covariate registry.
    Recovery,
    /// The recovery benchmark with a drifting temperature effect.
    Drift,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON generator spec.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<SynthPreset>,
    /// Noise level for a preset.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub rows: usize,
    #[arg(long, env = "GAMEVO_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output directory for `data.csv`, `schema.json` and `truth.json`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `0-23`, `8`, `0,6,12-14`.
pub fn parse_hours(text: &str) -> Result<Vec<u32>, String> {
    let mut hours = Vec::new();
    for part in text.split(',').map(str::trim) {
        let (a, b) = match part.split_once('-') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (part, part),
        };
        let parse = |s: &str| {
            s.parse::<u32>()
                .ok()
                .filter(|h| *h <= 23)
                .ok_or_else(|| format!("invalid hour `{s}` in `{text}`"))
        };
        let (a, b) = (parse(a)?, parse(b)?);
        if a > b {
            return Err(format!("empty hour range `{part}`"));
        }
        hours.extend(a..=b);
    }
    hours.sort_unstable();
    hours.dedup();
    Ok(hours)
}
