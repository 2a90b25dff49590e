use std::path::Path;

use gamevo::data::{weekly_replay, write_forecast_csv, DataView};

use super::search::run_dir;
use crate::args::ForecastArgs;
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::output::{model_files, write_atomic, ModelFile};

fn replay_one(
    file: &ModelFile,
    data: &DataView,
    experiment: &ExperimentConfig,
    out: &Path,
) -> Result<()> {
    let model = file.adaptive_model()?;
    let view = match file.hour {
        Some(h) => data.hour(h),
        None => data.clone(),
    };
    let replay = weekly_replay(
        &file.fitted,
        model.q_diag.as_deref(),
        &view,
        &experiment.replay,
    )?;
    write_atomic(out, |w| Ok(write_forecast_csv(&replay.rows, w)?))?;
    println!(
        "{}: {} blocks, rmse {:.4}, mape {:.3}%{}",
        out.display(),
        replay.updates.len(),
        replay.overall.rmse,
        replay.overall.mape,
        if replay.dropped > 0 {
            format!(", {} trailing rows dropped", replay.dropped)
        } else {
            String::new()
        }
    );
    Ok(())
}

pub fn run(args: ForecastArgs) -> Result<()> {
    let experiment = ExperimentConfig::load(&args.data)?;
    let data = experiment.dataset()?;
    if args.model.is_file() {
        let (_, file) = model_files(&args.model)?.remove(0);
        return replay_one(&file, &data, &experiment, &args.out);
    }
    for (_, file) in model_files(&args.model)? {
        let out = args.out.join(format!("{}.csv", run_dir(file.hour)));
        replay_one(&file, &data, &experiment, &out)?;
    }
    Ok(())
}
