//! Datasets, splits, synthetic generators, metrics and the weekly replay.

mod dataset;
mod metrics;
mod replay;
mod split;
mod synth;

pub use dataset::{load_csv, read_csv, CalendarSpec, DataView, Schema, TimeDataset};
pub use metrics::{grouped, metrics, rmse, Metrics};
pub use replay::{
    first_update, replay_with, weekly_replay, write_forecast_csv, ReplayOutput, ReplayRow,
    ReplaySpec,
};
pub use split::{split, Split, SplitSpec};
pub use synth::{synth_generate, CovariateSpec, Drift, Process, Shape, SynthSpec, Synthetic};
