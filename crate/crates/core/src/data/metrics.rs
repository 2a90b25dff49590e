use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    /// Percent, over rows with a nonzero target.
    pub mape: f64,
    pub n: usize,
    /// Rows left out of the MAPE because the target is zero.
    pub zero_targets: usize,
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> f64 {
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    (sse / y.len() as f64).sqrt()
}

pub fn metrics(y: &[f64], yhat: &[f64]) -> Result<Metrics> {
    if y.len() != yhat.len() {
        return Err(Error::Dimension(format!(
            "{} observations but {} forecasts",
            y.len(),
            yhat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Data("metrics of an empty series".into()));
    }
    let mut ape = 0.0;
    let mut zeros = 0;
    for (a, b) in y.iter().zip(yhat) {
        if *a == 0.0 {
            zeros += 1;
        } else {
            ape += ((a - b) / a).abs();
        }
    }
    if zeros > 0 {
        log::warn!("{zeros} zero targets left out of the MAPE");
    }
    let counted = y.len() - zeros;
    Ok(Metrics {
        rmse: rmse(y, yhat),
        mape: if counted > 0 {
            100.0 * ape / counted as f64
        } else {
            f64::NAN
        },
        n: y.len(),
        zero_targets: zeros,
    })
}

/// Metrics per group (e.g. hour of day), in increasing key order.
pub fn grouped<K: Ord + Copy>(keys: &[K], y: &[f64], yhat: &[f64]) -> Result<Vec<(K, Metrics)>> {
    let mut groups: std::collections::BTreeMap<K, (Vec<f64>, Vec<f64>)> = Default::default();
    for ((k, a), b) in keys.iter().zip(y).zip(yhat) {
        let g = groups.entry(*k).or_default();
        g.0.push(*a);
        g.1.push(*b);
    }
    groups
        .into_iter()
        .map(|(k, (a, b))| Ok((k, metrics(&a, &b)?)))
        .collect()
}
