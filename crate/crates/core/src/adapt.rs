//! State-space adaptation of a fitted GAM.
//!
//! The effect weights follow a random walk `θ_t = θ_{t−1} + η_t` and the
//! observation is `y_t = β₀ + θ_tᵀ f_t + ε_t`, where `f_t` holds the fitted
//! effect contributions. All covariances are divided by the observation
//! variance, so `Q` is the only tuning quantity.

use std::io::Write;

use chrono::{DateTime, FixedOffset};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{rmse, DataView};
use crate::fit::FittedGam;
use crate::{Error, Result};

/// Default diagonal entry of the initial `Q` for the grid search.
pub const DEFAULT_Q0: f64 = 1e-6;

/// Default per-coordinate multipliers tried by the grid search.
pub const DEFAULT_MULTIPLIERS: [f64; 5] = [1e-2, 1e-1, 1.0, 1e1, 1e2];

/// Iteration cap standing in for "until convergence".
pub const MAX_QIGS_ITERATIONS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub theta: DVector<f64>,
    pub p: DMatrix<f64>,
    pub q_diag: DVector<f64>,
}

impl KalmanState {
    /// `θ = 1`, `P = 0`: the filter starts exactly at the fitted model.
    pub fn new(q_diag: &[f64]) -> Result<Self> {
        let k = q_diag.len();
        Self::with(DVector::from_element(k, 1.0), DMatrix::zeros(k, k), q_diag)
    }

    pub fn with(theta: DVector<f64>, p: DMatrix<f64>, q_diag: &[f64]) -> Result<Self> {
        let k = theta.len();
        if p.nrows() != k || p.ncols() != k || q_diag.len() != k {
            return Err(Error::Dimension(format!(
                "state of size {k} with a {}x{} covariance and {} noise entries",
                p.nrows(),
                p.ncols(),
                q_diag.len()
            )));
        }
        if q_diag.iter().any(|q| !(*q >= 0.0) || !q.is_finite()) {
            return Err(Error::InvalidParameter(
                "process noise entries must be finite and non-negative".into(),
            ));
        }
        Ok(KalmanState {
            theta,
            p,
            q_diag: DVector::from_column_slice(q_diag),
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// `offset + θᵀf`, summed in effect order.
    pub fn forecast(&self, offset: f64, f: &[f64]) -> f64 {
        let mut acc = offset;
        for (t, v) in self.theta.iter().zip(f) {
            acc += t * v;
        }
        acc
    }

    /// One filter step: returns the forecast made before `observe` is
    /// called, then updates the state with the observation it returns.
    pub fn step(
        &mut self,
        offset: f64,
        f: &[f64],
        observe: impl FnOnce(f64) -> Result<f64>,
    ) -> Result<f64> {
        if f.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "{} contributions for a state of size {}",
                f.len(),
                self.dim()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("effect contributions".into()));
        }
        let yhat = self.forecast(offset, f);
        let y = observe(yhat)?;
        if !y.is_finite() {
            return Err(Error::NonFinite("observation".into()));
        }
        self.update(f, y - yhat);
        Ok(yhat)
    }

    /// Measurement update with innovation `e`, in Joseph form
    /// `P⁻ − k hᵀ − h kᵀ + s k kᵀ` with `h = P⁻f`, `s = fᵀP⁻f + 1`.
    fn update(&mut self, f: &[f64], e: f64) {
        let k = self.dim();
        let mut prior = self.p.clone();
        for i in 0..k {
            prior[(i, i)] += self.q_diag[i];
        }
        let f = DVector::from_column_slice(f);
        let h = &prior * &f;
        let s = f.dot(&h) + 1.0;
        let gain = &h / s;
        self.theta += &gain * e;
        let mut p =
            prior - &gain * h.transpose() - &h * gain.transpose() + &gain * gain.transpose() * s;
        for i in 0..k {
            for j in i + 1..k {
                let m = 0.5 * (p[(i, j)] + p[(j, i)]);
                p[(i, j)] = m;
                p[(j, i)] = m;
            }
        }
        self.p = p;
    }
}

/// One-step-ahead forecasts and the weights each was made with.
#[derive(Debug, Clone)]
pub struct KalmanRun {
    pub forecasts: Vec<f64>,
    /// Row `t` is the `θ̂` used for forecast `t`.
    pub theta: DMatrix<f64>,
    pub state: KalmanState,
}

/// Runs the filter over rows of contributions; `observe(t, ŷ_t)` supplies
/// `y_t` only after the forecast for `t` exists.
pub fn kalman_run(
    offset: f64,
    contributions: &DMatrix<f64>,
    mut state: KalmanState,
    mut observe: impl FnMut(usize, f64) -> Result<f64>,
) -> Result<KalmanRun> {
    let n = contributions.nrows();
    let mut forecasts = Vec::with_capacity(n);
    let mut theta = DMatrix::zeros(n, state.dim());
    let mut f = vec![0.0; contributions.ncols()];
    for t in 0..n {
        for (j, v) in f.iter_mut().enumerate() {
            *v = contributions[(t, j)];
        }
        theta.row_mut(t).copy_from(&state.theta.transpose());
        forecasts.push(state.step(offset, &f, |yhat| observe(t, yhat))?);
    }
    Ok(KalmanRun {
        forecasts,
        theta,
        state,
    })
}

/// Adaptive forecasts over a view, or the fixed prediction when `q_diag` is
/// `None`.
pub fn kalman_forecast(
    fitted: &FittedGam,
    q_diag: Option<&[f64]>,
    data: &DataView,
) -> Result<KalmanRun> {
    let pred = fitted.predict_fixed(data)?;
    let k = fitted.formula.len();
    match q_diag {
        None => Ok(KalmanRun {
            forecasts: pred.values,
            theta: DMatrix::from_element(data.len(), k, 1.0),
            state: KalmanState::new(&vec![0.0; k])?,
        }),
        Some(q) => {
            let y = data.target();
            kalman_run(
                pred.intercept,
                &pred.contributions,
                KalmanState::new(q)?,
                |t, _| Ok(y[t]),
            )
        }
    }
}

/// Result of the iterative grid search over `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QigsResult {
    pub q_diag: Vec<f64>,
    pub rmse: f64,
    /// Training one-step RMSE at the start and after each full pass.
    pub trace: Vec<f64>,
}

/// Coordinate descent on the diagonal of `Q`: each pass tries every
/// multiplier on each coordinate in turn and keeps a change only when the
/// training one-step RMSE strictly drops.
pub fn q_igs(
    fitted: &FittedGam,
    train: &DataView,
    q0: &[f64],
    iterations: usize,
    multipliers: &[f64],
) -> Result<QigsResult> {
    let k = fitted.formula.len();
    if k == 0 {
        return Err(Error::InvalidParameter(
            "grid search needs at least one effect".into(),
        ));
    }
    if iterations == 0 {
        return Err(Error::InvalidParameter(
            "grid search needs at least one iteration".into(),
        ));
    }
    if q0.len() != k || q0.iter().any(|q| !(*q > 0.0) || !q.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "initial Q needs {k} positive entries"
        )));
    }
    if multipliers.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
        return Err(Error::InvalidParameter(
            "multipliers must be positive".into(),
        ));
    }
    let pred = fitted.predict_fixed(train)?;
    let y = train.target();
    let objective = |q: &[f64]| -> f64 {
        let state = match KalmanState::new(q) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        match kalman_run(pred.intercept, &pred.contributions, state, |t, _| Ok(y[t])) {
            Ok(run) => {
                let r = rmse(&y, &run.forecasts);
                if r.is_finite() {
                    r
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        }
    };
    let mut q = q0.to_vec();
    let mut best = objective(&q);
    let mut trace = vec![best];
    for _ in 0..iterations {
        let mut changed = false;
        for j in 0..k {
            let scores: Vec<(f64, f64)> = multipliers
                .par_iter()
                .map(|m| {
                    let mut cand = q.clone();
                    cand[j] *= m;
                    (cand[j], objective(&cand))
                })
                .collect();
            for (value, score) in scores {
                if score < best {
                    best = score;
                    q[j] = value;
                    changed = true;
                }
            }
        }
        trace.push(best);
        if !changed {
            break;
        }
    }
    Ok(QigsResult {
        q_diag: q,
        rmse: best,
        trace,
    })
}

/// Writes `timestamp,theta_1..theta_K`.
pub fn write_theta_csv<W: Write>(
    timestamps: &[DateTime<FixedOffset>],
    theta: &DMatrix<f64>,
    out: W,
) -> Result<()> {
    if timestamps.len() != theta.nrows() {
        return Err(Error::Dimension(format!(
            "{} timestamps for {} weight rows",
            timestamps.len(),
            theta.nrows()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["timestamp".to_string()];
    header.extend((1..=theta.ncols()).map(|k| format!("theta_{k}")));
    w.write_record(&header)?;
    for (t, ts) in timestamps.iter().enumerate() {
        let mut record = vec![ts.to_rfc3339()];
        record.extend(theta.row(t).iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
