use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};

use super::DataView;
use crate::{Error, Result};

/// Train/validation/test boundaries: train is `t <= train_end`, validation
/// `train_end < t <= valid_end`, test the remainder. Exclusion windows
/// (inclusive) are removed from the training part only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_end: DateTime<FixedOffset>,
    pub valid_end: DateTime<FixedOffset>,
    #[serde(default)]
    pub exclusions: Vec<(DateTime<FixedOffset>, DateTime<FixedOffset>)>,
}

impl SplitSpec {
    /// Boundaries placed after the given fractions of the view's rows.
    pub fn from_fractions(view: &DataView, train: f64, valid: f64) -> Result<Self> {
        let ts = view.timestamps();
        let n = ts.len();
        let a = ((n as f64 * train).round() as usize).clamp(1, n);
        let b = ((n as f64 * (train + valid)).round() as usize).clamp(a, n);
        if b == a {
            return Err(Error::InvalidParameter(
                "validation fraction yields no rows".into(),
            ));
        }
        Ok(SplitSpec {
            train_end: ts[a - 1],
            valid_end: ts[b - 1],
            exclusions: Vec::new(),
        })
    }
}

pub struct Split {
    pub train: DataView,
    pub valid: DataView,
    pub test: DataView,
}

/// Splits a view. The test part may be empty; an empty train or validation
/// part is an error.
pub fn split(view: &DataView, spec: &SplitSpec) -> Result<Split> {
    if spec.train_end >= spec.valid_end {
        return Err(Error::InvalidParameter(
            "train end must precede validation end".into(),
        ));
    }
    if let Some(last) = view.timestamps().last() {
        if spec.valid_end > *last {
            return Err(Error::InvalidParameter(
                "validation end lies after the last timestamp".into(),
            ));
        }
    }
    for (a, b) in &spec.exclusions {
        if a > b || *b > spec.train_end {
            return Err(Error::InvalidParameter(format!(
                "exclusion window [{}, {}] must be ordered and inside the training range",
                a.to_rfc3339(),
                b.to_rfc3339()
            )));
        }
    }
    let ts = view.source().timestamps();
    let excluded =
        |t: &DateTime<FixedOffset>| spec.exclusions.iter().any(|(a, b)| t >= a && t <= b);
    let train = view.filter(|i| ts[i] <= spec.train_end && !excluded(&ts[i]));
    let valid = view.filter(|i| ts[i] > spec.train_end && ts[i] <= spec.valid_end);
    let test = view.filter(|i| ts[i] > spec.valid_end);
    if train.is_empty() {
        return Err(Error::Data("empty partition: training set".into()));
    }
    if valid.is_empty() {
        return Err(Error::Data("empty partition: validation set".into()));
    }
    Ok(Split { train, valid, test })
}
