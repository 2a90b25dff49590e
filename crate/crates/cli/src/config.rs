//! TOML experiment configuration and the loading of data it points to.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, FixedOffset};
use gamevo::data::{load_csv, split, DataView, ReplaySpec, Schema, Split, SplitSpec};
use gamevo::search::SearchConfig;
use serde::Deserialize;

use crate::args::{Algo, DataArgs};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub algo: Option<Algo>,
    pub hours: Option<String>,
    pub jobs: Option<usize>,
    pub seed_preset: Option<String>,
    pub split: SplitConfig,
    pub search: SearchConfig,
    pub replay: ReplaySpec,
}

/// Split boundaries as timestamps, or as row fractions when the timestamps
/// are absent.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_end: Option<DateTime<FixedOffset>>,
    pub valid_end: Option<DateTime<FixedOffset>>,
    pub train_fraction: f64,
    pub valid_fraction: f64,
    /// Inclusive windows dropped from training.
    pub exclusions: Vec<(DateTime<FixedOffset>, DateTime<FixedOffset>)>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_end: None,
            valid_end: None,
            train_fraction: 0.6,
            valid_fraction: 0.2,
            exclusions: Vec::new(),
        }
    }
}

impl SplitConfig {
    pub fn apply(&self, view: &DataView) -> Result<Split> {
        let mut spec = match (self.train_end, self.valid_end) {
            (Some(train_end), Some(valid_end)) => SplitSpec {
                train_end,
                valid_end,
                exclusions: Vec::new(),
            },
            (None, None) => {
                SplitSpec::from_fractions(view, self.train_fraction, self.valid_fraction)?
            }
            _ => {
                return Err(CliError::Usage(
                    "split needs both train_end and valid_end, or neither".into(),
                ))
            }
        };
        spec.exclusions = self.exclusions.clone();
        Ok(split(view, &spec)?)
    }
}

impl ExperimentConfig {
    /// Reads `path`; relative data and schema paths resolve against its
    /// directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).map_err(|source| CliError::Config {
                path: path.to_path_buf(),
                source,
            })?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.data, &mut config.schema].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(config)
    }

    /// The config named by `--config` (or defaults), with `--data` and
    /// `--schema` applied.
    pub fn load(args: &DataArgs) -> Result<Self> {
        let mut config = match &args.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = &args.data {
            config.data = Some(p.clone());
        }
        if let Some(p) = &args.schema {
            config.schema = Some(p.clone());
        }
        Ok(config)
    }

    pub fn dataset(&self) -> Result<DataView> {
        let data = self
            .data
            .as_ref()
            .ok_or_else(|| CliError::Usage("no data file: pass --data or set `data`".into()))?;
        let schema = self.schema.as_ref().ok_or_else(|| {
            CliError::Usage("no schema file: pass --schema or set `schema`".into())
        })?;
        let schema = Schema::from_json_file(schema).map_err(|e| match e {
            gamevo::Error::Io(source) => CliError::Io {
                path: schema.clone(),
                source,
            },
            other => other.into(),
        })?;
        let ds = load_csv(data, &schema)?;
        Ok(DataView::full(Arc::new(ds)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_parses() {
        let text = r#"
            data = "load.csv"
            schema = "schema.json"
            algo = "ea-f-qigs"
            hours = "0-23"
            jobs = 2

            [split]
            train_end = "2019-12-31T23:00:00+01:00"
            valid_end = "2020-12-31T23:00:00+01:00"
            exclusions = [["2019-03-01T00:00:00+01:00", "2019-03-02T00:00:00+01:00"]]

            [search]
            population = 20
            budget = 200
            tournament = 5
            seed = 42

            [replay]
            update_weekday = "Mon"
            update_time = "08:00:00"
            delay = 201600
        "#;
        let c: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(c.algo, Some(Algo::EaFQigs));
        assert_eq!(c.search.budget, 200);
        assert_eq!(c.search.seed, 42);
        assert_eq!(c.split.exclusions.len(), 1);
        assert_eq!(c.replay.delay.num_hours(), 56);
        c.search.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("budgett = 3").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[search]\nbudgett = 3").is_err());
    }
}
