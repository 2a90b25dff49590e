//! Built-in formulas and synthetic benchmarks.

use chrono::{DateTime, FixedOffset};

use crate::data::{CovariateSpec, Drift, Process, Shape, SynthSpec};
use crate::formula::{BasisSpec, Effect, Formula};
use crate::{Error, Result};

/// Smoothing factor of the smoothed temperature in [`sota_formula`].
pub const SOTA_ALPHA: f64 = 0.95;

/// Basis size of every spline in [`sota_formula`].
pub const SOTA_K: usize = 10;

/// The hand-crafted load model for hour `h`: splines of temperature,
/// smoothed temperature, cloud cover and wind, day-of-week and break
/// indicators, and a cyclic spline of the position in the year. The hour
/// only selects the data, so the structure is the same for every hour.
pub fn sota_formula(h: u32) -> Result<Formula> {
    sota_formula_with(h, SOTA_ALPHA, SOTA_K)
}

pub fn sota_formula_with(h: u32, alpha: f64, k: usize) -> Result<Formula> {
    if h > 23 {
        return Err(Error::InvalidParameter(format!("hour {h} outside 0..=23")));
    }
    Ok(Formula::new(vec![
        Effect::spline("Temp", k),
        Effect::smoothed("Temp", alpha, BasisSpec::CubicSpline { k }),
        Effect::spline("Cloud", k),
        Effect::spline("Wind", k),
        Effect::categorical("Day"),
        Effect::categorical("Break"),
        Effect::cyclic("PosYear", k),
    ]))
}

/// Looks a preset formula up by name.
pub fn preset(name: &str, h: u32) -> Result<Formula> {
    match name {
        "sota" => sota_formula(h),
        other => Err(Error::InvalidParameter(format!("unknown preset `{other}`"))),
    }
}

fn start() -> DateTime<FixedOffset> {
    DateTime::parse_from_rfc3339("2021-01-04T00:00:00+00:00").expect("valid timestamp")
}

fn weather_covariates() -> Vec<CovariateSpec> {
    let spec = |name: &str, process: Process| CovariateSpec {
        name: name.into(),
        process,
    };
    vec![
        spec(
            "Temp",
            Process::Temperature {
                mean: 12.0,
                annual_amplitude: 8.0,
                daily_amplitude: 3.0,
                phi: 0.8,
                sd: 0.8,
            },
        ),
        spec("Cloud", Process::Uniform { lo: 0.0, hi: 1.0 }),
        spec(
            "Wind",
            Process::Ar {
                mean: 5.0,
                phi: 0.9,
                sd: 0.8,
            },
        ),
        spec(
            "Noise1",
            Process::Ar {
                mean: 0.0,
                phi: 0.5,
                sd: 1.0,
            },
        ),
        spec("Noise2", Process::Uniform { lo: -1.0, hi: 1.0 }),
        spec(
            "Regime",
            Process::CategoricalCycle {
                levels: 4,
                dwell: 37,
            },
        ),
    ]
}

/// Daily series generated by a known three-effect formula, over a registry
/// of eight covariates (five of them irrelevant to the target).
pub fn recovery_benchmark(sigma: f64) -> SynthSpec {
    let mut covariates = weather_covariates();
    covariates.push(CovariateSpec {
        name: "Day".into(),
        process: Process::CategoricalCycle {
            levels: 7,
            dwell: 1,
        },
    });
    covariates.push(CovariateSpec {
        name: "Season".into(),
        process: Process::Phase { period: 91 },
    });
    SynthSpec {
        start: start(),
        step_seconds: 86_400,
        intercept: 50.0,
        covariates,
        calendar: false,
        formula: Formula::new(vec![
            Effect::spline("Temp", 8),
            Effect::categorical("Day"),
            Effect::spline("Wind", 6),
        ]),
        shapes: vec![
            Shape::Polynomial {
                coefs: vec![0.0, -2.5, 0.12],
            },
            Shape::Levels {
                values: vec![0.0, 1.0, 1.5, 1.0, 0.5, -6.0, -8.0],
            },
            Shape::Sine {
                amplitude: 3.0,
                period: 20.0,
                phase: 0.0,
            },
        ],
        sigma,
        drifts: Vec::new(),
    }
}

/// Recovery benchmark whose temperature effect weight ramps from 1 to
/// `to` over rows `start..end`.
pub fn drift_benchmark(sigma: f64, to: f64, start_row: usize, end_row: usize) -> SynthSpec {
    let mut spec = recovery_benchmark(sigma);
    spec.drifts.push(Drift {
        effect: 0,
        from: 1.0,
        to,
        start: start_row,
        end: end_row,
    });
    spec
}
