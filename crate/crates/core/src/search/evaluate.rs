use serde::{Deserialize, Serialize};

use crate::adapt::{kalman_forecast, q_igs};
use crate::data::{rmse, DataView};
use crate::fit::{fit_with, FitOptions, FittedGam};
use crate::formula::{self, AdaptiveModel};
use crate::Result;

/// How a candidate came to be.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    /// Population indices of the parents.
    pub parents: Vec<usize>,
    pub operators: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EvaluatedModel {
    pub model: AdaptiveModel,
    pub fitted: Option<FittedGam>,
    /// `rmse_valid + η·edf`; `+∞` when the fit failed.
    pub loss: f64,
    pub rmse_valid: f64,
    pub edf: f64,
    pub error: Option<String>,
    pub lineage: Lineage,
}

/// `√Var[Y_valid] / 5000`, with the population variance.
pub fn default_eta(valid: &DataView) -> f64 {
    let y = valid.target();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt() / 5000.0
}

/// Fits on `train` and scores the one-step forecasts on `valid`.
#[derive(Debug, Clone)]
pub struct Evaluation<'a> {
    pub train: &'a DataView,
    pub valid: &'a DataView,
    pub eta: f64,
    pub fit: FitOptions,
    /// Grid-search passes refining `Q` after the fit (adaptive models only).
    pub refine: usize,
    pub multipliers: Vec<f64>,
}

impl Evaluation<'_> {
    fn attempt(&self, model: &mut AdaptiveModel) -> Result<(FittedGam, f64)> {
        formula::ensure_valid(model, self.train.registry())?;
        let fitted = fit_with(&model.formula, self.train, &self.fit)?;
        if self.refine > 0 {
            if let Some(q) = &model.q_diag {
                // Grid search needs a positive starting point.
                let start: Vec<f64> = q.iter().map(|v| v.max(f64::MIN_POSITIVE)).collect();
                let tuned = q_igs(&fitted, self.train, &start, self.refine, &self.multipliers)?;
                model.q_diag = Some(tuned.q_diag);
            }
        }
        let run = kalman_forecast(&fitted, model.q_diag.as_deref(), self.valid)?;
        let r = rmse(&self.valid.target(), &run.forecasts);
        Ok((fitted, r))
    }

    /// Never fails: a model that cannot be fitted gets an infinite loss and
    /// a diagnostic.
    pub fn evaluate(&self, model: &AdaptiveModel, lineage: Lineage) -> EvaluatedModel {
        let mut model = model.clone();
        match self.attempt(&mut model) {
            Ok((fitted, r)) if r.is_finite() && fitted.edf.is_finite() => EvaluatedModel {
                loss: r + self.eta * fitted.edf,
                rmse_valid: r,
                edf: fitted.edf,
                fitted: Some(fitted),
                model,
                error: None,
                lineage,
            },
            Ok((fitted, r)) => EvaluatedModel {
                loss: f64::INFINITY,
                rmse_valid: r,
                edf: fitted.edf,
                fitted: None,
                model,
                error: Some("non-finite validation error".into()),
                lineage,
            },
            Err(e) => {
                log::debug!("candidate `{}` failed: {e}", model.serialize());
                EvaluatedModel {
                    loss: f64::INFINITY,
                    rmse_valid: f64::INFINITY,
                    edf: f64::NAN,
                    fitted: None,
                    model,
                    error: Some(e.to_string()),
                    lineage,
                }
            }
        }
    }
}

/// Loss of one model with the default λ grid and no `Q` refinement.
pub fn evaluate(
    model: &AdaptiveModel,
    train: &DataView,
    valid: &DataView,
    eta: f64,
) -> EvaluatedModel {
    Evaluation {
        train,
        valid,
        eta,
        fit: FitOptions::default(),
        refine: 0,
        multipliers: crate::adapt::DEFAULT_MULTIPLIERS.to_vec(),
    }
    .evaluate(model, Lineage::default())
}
