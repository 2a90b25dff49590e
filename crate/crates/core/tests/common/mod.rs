#![allow(dead_code)]

use std::sync::Arc;

use gamevo::data::{
    split, synth_generate, DataView, Split, SplitSpec, SynthSpec, Synthetic, TimeDataset,
};
use gamevo::features::parse_timestamp;
use gamevo::features::Column;
use gamevo::formula::{Covariate, CovariateKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn synth(spec: &SynthSpec, n: usize, seed: u64) -> Synthetic {
    synth_generate(spec, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

pub fn view(ds: TimeDataset) -> DataView {
    DataView::full(Arc::new(ds))
}

pub fn split_fractions(v: &DataView, train: f64, valid: f64) -> Split {
    let spec = SplitSpec::from_fractions(v, train, valid).unwrap();
    split(v, &spec).unwrap()
}

/// Hourly series starting on a Monday with the given target and numeric
/// covariates.
pub fn hourly(target: Vec<f64>, numeric: Vec<(&str, Vec<f64>)>) -> DataView {
    let t0 = parse_timestamp("2024-01-01T00:00:00+00:00").unwrap();
    let ts = (0..target.len())
        .map(|i| t0 + chrono::Duration::hours(i as i64))
        .collect();
    let covs = numeric
        .into_iter()
        .map(|(name, v)| {
            (
                Covariate {
                    name: name.into(),
                    kind: CovariateKind::Numeric,
                },
                Column::Numeric(v),
            )
        })
        .collect();
    view(TimeDataset::new(ts, target, covs).unwrap())
}
