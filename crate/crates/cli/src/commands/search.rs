use std::path::Path;

use gamevo::data::DataView;
use gamevo::presets::preset;
use gamevo::search::{evolve, random_search, write_audit, SearchConfig, SearchOutcome, Variant};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{parse_hours, Algo, SearchArgs};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::output::{write_atomic, write_json, ModelFile, MODEL_FILE};

/// Output directory name of one hour's run.
pub fn run_dir(hour: Option<u32>) -> String {
    match hour {
        Some(h) => format!("hour_{h:02}"),
        None => "all".into(),
    }
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    hour: String,
    algo: &'static str,
    seed: u64,
    evaluations: usize,
    loss: Option<f64>,
    rmse_valid: Option<f64>,
    edf: Option<f64>,
    final_rmse_valid: Option<f64>,
    eta: f64,
    model: String,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

struct Job<'a> {
    algo: Algo,
    config: &'a SearchConfig,
    experiment: &'a ExperimentConfig,
    preset: Option<&'a str>,
    data: &'a DataView,
    out: &'a Path,
}

impl Job<'_> {
    fn run(&self, hour: Option<u32>) -> Result<SummaryRow> {
        let view = match hour {
            Some(h) => self.data.hour(h),
            None => self.data.clone(),
        };
        if view.is_empty() {
            return Err(CliError::Data(format!(
                "no rows at hour {}",
                hour.map_or("any".into(), |h| h.to_string())
            )));
        }
        let parts = self.experiment.split.apply(&view)?;
        let preset = self
            .preset
            .map(|name| preset(name, hour.unwrap_or(0)))
            .transpose()?;
        let outcome: SearchOutcome = match self.algo {
            Algo::EaFq => evolve(
                Variant::EaFq,
                self.config,
                &parts.train,
                &parts.valid,
                preset.as_ref(),
            )?,
            Algo::EaFQigs => evolve(
                Variant::EaFThenQigs,
                self.config,
                &parts.train,
                &parts.valid,
                preset.as_ref(),
            )?,
            Algo::Random => {
                if preset.is_some() {
                    log::warn!("random search ignores the seed preset");
                }
                random_search(self.config, true, &parts.train, &parts.valid)?
            }
        };
        let fitted = outcome.best.fitted.clone().ok_or_else(|| {
            CliError::Core(gamevo::Error::NonFinite("best model has no fit".into()))
        })?;
        let dir = self.out.join(run_dir(hour));
        let model = outcome.model.serialize();
        write_json(
            &dir.join(MODEL_FILE),
            &ModelFile {
                hour,
                algo: self.algo.name().into(),
                model: model.clone(),
                fitted,
            },
        )?;
        write_atomic(&dir.join("audit.ndjson"), |w| {
            Ok(write_audit(&outcome.audit, w)?)
        })?;
        log::info!("{}: {}", run_dir(hour), model);
        Ok(SummaryRow {
            hour: hour.map_or("all".into(), |h| h.to_string()),
            algo: self.algo.name(),
            seed: self.config.seed,
            evaluations: outcome.audit.len(),
            loss: finite(outcome.best.loss),
            rmse_valid: finite(outcome.best.rmse_valid),
            edf: finite(outcome.best.edf),
            final_rmse_valid: finite(outcome.final_rmse_valid),
            eta: outcome.eta,
            model,
        })
    }
}

pub fn run(args: SearchArgs) -> Result<()> {
    let experiment = ExperimentConfig::load(&args.data)?;
    let mut config = experiment.search.clone();
    if let Some(v) = args.budget {
        config.budget = v;
    }
    if let Some(v) = args.population {
        config.population = v;
    }
    if let Some(v) = args.tournament {
        config.tournament = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    config.validate()?;
    let algo = args.algo.or(experiment.algo).unwrap_or(Algo::EaFq);
    let hours = match args.hours.as_ref().or(experiment.hours.as_ref()) {
        Some(text) => parse_hours(text)
            .map_err(CliError::Usage)?
            .into_iter()
            .map(Some)
            .collect(),
        None => vec![None],
    };
    let jobs = match args.jobs.or(experiment.jobs) {
        Some(0) => return Err(CliError::Usage("--jobs must be positive".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let preset_name = args.seed_preset.or_else(|| experiment.seed_preset.clone());
    if let Some(name) = &preset_name {
        preset(name, 0)?;
    }
    let data = experiment.dataset()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?;
    let job = Job {
        algo,
        config: &config,
        experiment: &experiment,
        preset: preset_name.as_deref(),
        data: &data,
        out: &args.out,
    };
    let rows: Vec<Result<SummaryRow>> =
        pool.install(|| hours.par_iter().map(|h| job.run(*h)).collect());
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    write_json(&args.out.join("search_config.json"), &config)?;
    write_atomic(&args.out.join("summary.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in &rows {
            csv.serialize(r).map_err(gamevo::Error::from)?;
        }
        csv.flush()
            .map_err(CliError::io(args.out.join("summary.csv")))
    })?;
    for r in &rows {
        println!(
            "{:>4} loss={} rmse_valid={} {}",
            r.hour,
            r.loss.map_or("-".into(), |v| format!("{v:.6}")),
            r.final_rmse_valid.map_or("-".into(), |v| format!("{v:.6}")),
            r.model
        );
    }
    Ok(())
}
