use chrono::Timelike;
use gamevo::adapt::kalman_forecast;
use gamevo::data::{grouped, metrics, Metrics};

use crate::args::EvaluateArgs;
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::output::{model_files, write_atomic};
use crate::report::per_hour_svg;

const SPLITS: [&str; 3] = ["train", "valid", "test"];

/// Targets and predictions pooled over models for one mode and split.
#[derive(Debug, Default, Clone)]
struct Pool {
    y: Vec<f64>,
    yhat: Vec<f64>,
    hours: Vec<u32>,
}

impl Pool {
    fn extend(&mut self, y: &[f64], yhat: &[f64], hours: &[u32]) {
        self.y.extend_from_slice(y);
        self.yhat.extend_from_slice(yhat);
        self.hours.extend_from_slice(hours);
    }

    fn metrics(&self) -> Result<Option<Metrics>> {
        if self.y.is_empty() {
            return Ok(None);
        }
        Ok(Some(metrics(&self.y, &self.yhat)?))
    }

    fn per_hour(&self) -> Result<Vec<Option<Metrics>>> {
        let mut out = vec![None; 24];
        if !self.y.is_empty() {
            for (h, m) in grouped(&self.hours, &self.y, &self.yhat)? {
                out[h as usize] = Some(m);
            }
        }
        Ok(out)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    let experiment = ExperimentConfig::load(&args.data)?;
    let data = experiment.dataset()?;
    let models = model_files(&args.model)?;
    // [mode][split]
    let mut fixed: [Pool; 3] = Default::default();
    let mut adaptive: [Pool; 3] = Default::default();
    let mut any_adaptive = false;
    for (path, file) in &models {
        let model = file.adaptive_model()?;
        let view = match file.hour {
            Some(h) => data.hour(h),
            None => data.clone(),
        };
        let parts = experiment.split.apply(&view)?;
        let sets = [&parts.train, &parts.valid, &parts.test];
        let all = parts.train.union(&parts.valid)?.union(&parts.test)?;
        let run = match &model.q_diag {
            Some(q) => {
                any_adaptive = true;
                Some(kalman_forecast(&file.fitted, Some(q), &all)?)
            }
            None => None,
        };
        let mut offset = 0;
        for (s, set) in sets.iter().enumerate() {
            if set.is_empty() {
                continue;
            }
            let y = set.target();
            let hours: Vec<u32> = set.timestamps().iter().map(|t| t.hour()).collect();
            let pred = file.fitted.predict_fixed(set)?;
            fixed[s].extend(&y, &pred.values, &hours);
            if let Some(run) = &run {
                // `all` holds the parts back to back in time order.
                let slice = &run.forecasts[offset..offset + set.len()];
                adaptive[s].extend(&y, slice, &hours);
            }
            offset += set.len();
        }
        log::info!("evaluated {}", path.display());
    }

    let metrics_path = args.out.join("metrics.csv");
    let mut table = Vec::new();
    for (mode, pools) in [("fixed", &fixed), ("adaptive", &adaptive)] {
        if mode == "adaptive" && !any_adaptive {
            continue;
        }
        for (s, pool) in pools.iter().enumerate() {
            if let Some(m) = pool.metrics()? {
                table.push((mode, SPLITS[s], m));
            }
        }
    }
    write_atomic(&metrics_path, |w| {
        writeln!(w, "mode,split,rmse,mape,n").map_err(CliError::io(&metrics_path))?;
        for (mode, split, m) in &table {
            writeln!(w, "{mode},{split},{},{},{}", m.rmse, m.mape, m.n)
                .map_err(CliError::io(&metrics_path))?;
        }
        Ok(())
    })?;

    // Per-hour breakdown of the test part, or of validation without one.
    let s = if fixed[2].y.is_empty() { 1 } else { 2 };
    let hour_fixed = fixed[s].per_hour()?;
    let hour_adaptive = adaptive[s].per_hour()?;
    let per_hour_path = args.out.join("per_hour.csv");
    write_atomic(&per_hour_path, |w| {
        writeln!(
            w,
            "hour,split,n,rmse_fixed,mape_fixed,rmse_adaptive,mape_adaptive"
        )
        .map_err(CliError::io(&per_hour_path))?;
        for h in 0..24 {
            let (f, a) = (hour_fixed[h], hour_adaptive[h]);
            writeln!(
                w,
                "{h},{},{},{},{},{},{}",
                SPLITS[s],
                f.map_or(0, |m| m.n),
                cell(f.map(|m| m.rmse)),
                cell(f.map(|m| m.mape)),
                cell(a.map(|m| m.rmse)),
                cell(a.map(|m| m.mape)),
            )
            .map_err(CliError::io(&per_hour_path))?;
        }
        Ok(())
    })?;
    let svg_path = args.out.join("per_hour.svg");
    let svg = per_hour_svg(
        &format!("RMSE per hour ({} part)", SPLITS[s]),
        &hour_fixed
            .iter()
            .map(|m| m.map(|m| m.rmse))
            .collect::<Vec<_>>(),
        &hour_adaptive
            .iter()
            .map(|m| m.map(|m| m.rmse))
            .collect::<Vec<_>>(),
    );
    write_atomic(&svg_path, |w| {
        w.write_all(svg.as_bytes()).map_err(CliError::io(&svg_path))
    })?;

    println!(
        "{:<9} {:<6} {:>12} {:>9} {:>8}",
        "mode", "split", "rmse", "mape%", "n"
    );
    for (mode, split, m) in &table {
        println!(
            "{mode:<9} {split:<6} {:>12.4} {:>9.3} {:>8}",
            m.rmse, m.mape, m.n
        );
    }
    Ok(())
}
