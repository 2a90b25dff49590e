//! Synthetic series with known generating effects, for benchmarks and tests.

use std::f64::consts::PI;

use chrono::{DateTime, Duration, FixedOffset};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::TimeDataset;
use crate::features::{CalendarOptions, Column};
use crate::formula::{self, AdaptiveModel, Covariate, CovariateKind, Formula};
use crate::{Error, Result};

/// How one covariate column is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "snake_case", deny_unknown_fields)]
pub enum Process {
    /// Annual and daily sinusoids around `mean` plus an AR(1) anomaly.
    Temperature {
        mean: f64,
        annual_amplitude: f64,
        daily_amplitude: f64,
        phi: f64,
        sd: f64,
    },
    Ar {
        mean: f64,
        phi: f64,
        sd: f64,
    },
    /// `amplitude · sin(2π t / period + phase)`, `t` in steps.
    Wave {
        period: f64,
        amplitude: f64,
        phase: f64,
    },
    /// `t mod period`, declared cyclic.
    Phase {
        period: usize,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Codes `1..=levels`, each held for `dwell` steps in turn.
    CategoricalCycle {
        levels: usize,
        dwell: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(flatten)]
    pub process: Process,
}

/// Shape of one generating effect, applied to its engineered column(s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Linear {
        slope: f64,
    },
    /// `Σ c_i x^i`.
    Polynomial {
        coefs: Vec<f64>,
    },
    Sine {
        amplitude: f64,
        period: f64,
        phase: f64,
    },
    /// Value per modality code `1..`; code 0 maps to 0.
    Levels {
        values: Vec<f64>,
    },
    /// Product of one shape per input of a two-covariate effect.
    Product {
        first: Box<Shape>,
        second: Box<Shape>,
    },
}

impl Shape {
    fn value(&self, x: f64) -> Result<f64> {
        Ok(match self {
            Shape::Linear { slope } => slope * x,
            Shape::Polynomial { coefs } => coefs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            Shape::Sine {
                amplitude,
                period,
                phase,
            } => amplitude * (2.0 * PI * x / period + phase).sin(),
            Shape::Levels { values } => {
                let code = x as usize;
                if code == 0 {
                    0.0
                } else {
                    *values.get(code - 1).ok_or_else(|| {
                        Error::InvalidParameter(format!("no level value for modality {code}"))
                    })?
                }
            }
            Shape::Product { .. } => {
                return Err(Error::InvalidParameter(
                    "product shape needs two inputs".into(),
                ))
            }
        })
    }

    fn eval(&self, inputs: &[&Column], i: usize) -> Result<f64> {
        let at = |c: &Column| match c {
            Column::Numeric(v) => v[i],
            Column::Categorical(v) => v[i] as f64,
        };
        match self {
            Shape::Product { first, second } => {
                if inputs.len() != 2 {
                    return Err(Error::InvalidParameter(
                        "product shape needs a two-covariate effect".into(),
                    ));
                }
                Ok(first.value(at(inputs[0]))? * second.value(at(inputs[1]))?)
            }
            _ => inputs.iter().map(|c| self.value(at(c))).sum(),
        }
    }
}

/// Linear ramp of one effect weight between two rows; the weight is `from`
/// before `start` and `to` after `end`. Several drifts on one effect
/// multiply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub effect: usize,
    pub from: f64,
    pub to: f64,
    pub start: usize,
    pub end: usize,
}

impl Drift {
    fn weight(&self, t: usize) -> f64 {
        if t <= self.start {
            self.from
        } else if t >= self.end {
            self.to
        } else {
            let u = (t - self.start) as f64 / (self.end - self.start) as f64;
            self.from + u * (self.to - self.from)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub start: DateTime<FixedOffset>,
    pub step_seconds: i64,
    pub intercept: f64,
    pub covariates: Vec<CovariateSpec>,
    /// Adds Hour, Day, PosYear, Month and Weekend columns.
    #[serde(default)]
    pub calendar: bool,
    #[serde(with = "formula_dsl")]
    pub formula: Formula,
    /// One per effect of `formula`.
    pub shapes: Vec<Shape>,
    pub sigma: f64,
    #[serde(default)]
    pub drifts: Vec<Drift>,
}

mod formula_dsl {
    use super::*;

    pub fn serialize<S: Serializer>(f: &Formula, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&f.to_dsl())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Formula, D::Error> {
        let text = String::deserialize(d)?;
        let model = AdaptiveModel::deserialize(&text).map_err(serde::de::Error::custom)?;
        Ok(model.formula)
    }
}

/// A generated dataset with everything needed to check a fit against it.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: TimeDataset,
    pub formula: Formula,
    /// Noise-free target.
    pub signal: Vec<f64>,
    /// `n × K` effect weights used at each row.
    pub theta: DMatrix<f64>,
}

fn process_column<R: Rng + ?Sized>(
    process: &Process,
    n: usize,
    step_seconds: i64,
    rng: &mut R,
) -> Result<(CovariateKind, Column)> {
    let normal = |sd: f64| {
        Normal::new(0.0, sd).map_err(|e| Error::InvalidParameter(format!("noise sd: {e}")))
    };
    Ok(match *process {
        Process::Temperature {
            mean,
            annual_amplitude,
            daily_amplitude,
            phi,
            sd,
        } => {
            let noise = normal(sd)?;
            let day = 86_400.0 / step_seconds as f64;
            let year = 365.25 * day;
            let mut anomaly = 0.0;
            let v = (0..n)
                .map(|t| {
                    anomaly = phi * anomaly + noise.sample(rng);
                    let t = t as f64;
                    mean - annual_amplitude * (2.0 * PI * t / year).cos()
                        - daily_amplitude * (2.0 * PI * (t / day - 0.125)).cos()
                        + anomaly
                })
                .collect();
            (CovariateKind::Numeric, Column::Numeric(v))
        }
        Process::Ar { mean, phi, sd } => {
            let noise = normal(sd)?;
            let mut x = 0.0;
            let v = (0..n)
                .map(|_| {
                    x = phi * x + noise.sample(rng);
                    mean + x
                })
                .collect();
            (CovariateKind::Numeric, Column::Numeric(v))
        }
        Process::Wave {
            period,
            amplitude,
            phase,
        } => {
            let v = (0..n)
                .map(|t| amplitude * (2.0 * PI * t as f64 / period + phase).sin())
                .collect();
            (CovariateKind::Numeric, Column::Numeric(v))
        }
        Process::Phase { period } => {
            if period == 0 {
                return Err(Error::InvalidParameter(
                    "phase period must be positive".into(),
                ));
            }
            let v = (0..n).map(|t| (t % period) as f64).collect();
            (
                CovariateKind::Cyclic {
                    period: period as f64,
                },
                Column::Numeric(v),
            )
        }
        Process::Uniform { lo, hi } => {
            if !(lo < hi) {
                return Err(Error::InvalidParameter(
                    "uniform bounds must be ordered".into(),
                ));
            }
            let v = (0..n).map(|_| rng.random_range(lo..hi)).collect();
            (CovariateKind::Numeric, Column::Numeric(v))
        }
        Process::CategoricalCycle { levels, dwell } => {
            if levels < 2 || dwell == 0 {
                return Err(Error::InvalidParameter(
                    "categorical cycle needs at least 2 levels and a positive dwell".into(),
                ));
            }
            let v = (0..n).map(|t| ((t / dwell) % levels + 1) as u32).collect();
            (
                CovariateKind::Categorical { levels },
                Column::Categorical(v),
            )
        }
    })
}

/// Draws `n` rows: covariates from their processes, then
/// `y_t = intercept + Σ_k θ_{k,t} f_k(x_t) + N(0, σ²)`.
pub fn synth_generate<R: Rng + ?Sized>(
    spec: &SynthSpec,
    n: usize,
    rng: &mut R,
) -> Result<Synthetic> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "synthetic series needs rows".into(),
        ));
    }
    if spec.step_seconds <= 0 {
        return Err(Error::InvalidParameter("step must be positive".into()));
    }
    if !(spec.sigma >= 0.0) {
        return Err(Error::InvalidParameter(
            "noise sigma must be non-negative".into(),
        ));
    }
    let k = spec.formula.len();
    if spec.shapes.len() != k {
        return Err(Error::InvalidParameter(format!(
            "{} shapes for {k} effects",
            spec.shapes.len()
        )));
    }
    for d in &spec.drifts {
        if d.effect >= k || d.start >= d.end {
            return Err(Error::InvalidParameter(format!(
                "drift on effect {} over rows {}..{} is out of range",
                d.effect, d.start, d.end
            )));
        }
    }
    let timestamps = (0..n)
        .map(|t| spec.start + Duration::seconds(spec.step_seconds * t as i64))
        .collect();
    let mut covariates = Vec::with_capacity(spec.covariates.len());
    for c in &spec.covariates {
        let (kind, column) = process_column(&c.process, n, spec.step_seconds, rng)?;
        covariates.push((
            Covariate {
                name: c.name.clone(),
                kind,
            },
            column,
        ));
    }
    let mut dataset = TimeDataset::new(timestamps, vec![0.0; n], covariates)?;
    if spec.calendar {
        let mut options = CalendarOptions::all(None);
        options.breaks = None;
        options.daily_extremes.clear();
        dataset.add_calendar(&options)?;
    }
    formula::ensure_valid(
        &AdaptiveModel::fixed(spec.formula.clone()),
        dataset.registry(),
    )?;

    let mut theta = DMatrix::from_element(n, k, 1.0);
    for d in &spec.drifts {
        for t in 0..n {
            theta[(t, d.effect)] *= d.weight(t);
        }
    }
    let mut signal = vec![spec.intercept; n];
    for (e, (effect, shape)) in spec.formula.effects.iter().zip(&spec.shapes).enumerate() {
        let mut inputs = Vec::new();
        for c in &effect.covariates {
            let cols = dataset.engineer(c)?;
            if effect.basis.is_tensor() {
                inputs.extend(cols.into_iter().take(1));
            } else {
                inputs.extend(cols);
            }
        }
        let refs: Vec<&Column> = inputs.iter().collect();
        for (t, s) in signal.iter_mut().enumerate() {
            *s += theta[(t, e)] * shape.eval(&refs, t)?;
        }
    }
    let mut target = signal.clone();
    if spec.sigma > 0.0 {
        let noise = Normal::new(0.0, spec.sigma)
            .map_err(|e| Error::InvalidParameter(format!("noise sigma: {e}")))?;
        for y in &mut target {
            *y += noise.sample(rng);
        }
    }
    let mut covariates: Vec<(Covariate, Column)> = Vec::new();
    for (name, kind) in dataset.registry().iter() {
        let column = dataset.column(name).expect("registered column").clone();
        covariates.push((
            Covariate {
                name: name.to_string(),
                kind: kind.clone(),
            },
            column,
        ));
    }
    let dataset = TimeDataset::new(dataset.timestamps().to_vec(), target, covariates)?;
    Ok(Synthetic {
        dataset,
        formula: spec.formula.clone(),
        signal,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::parse_timestamp;
    use crate::formula::Effect;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(sigma: f64) -> SynthSpec {
        SynthSpec {
            start: parse_timestamp("2021-01-04T00:00:00+00:00").unwrap(),
            step_seconds: 3600,
            intercept: 10.0,
            covariates: vec![
                CovariateSpec {
                    name: "Temp".into(),
                    process: Process::Temperature {
                        mean: 12.0,
                        annual_amplitude: 8.0,
                        daily_amplitude: 3.0,
                        phi: 0.95,
                        sd: 0.5,
                    },
                },
                CovariateSpec {
                    name: "Kind".into(),
                    process: Process::CategoricalCycle {
                        levels: 3,
                        dwell: 5,
                    },
                },
            ],
            calendar: true,
            formula: Formula::new(vec![Effect::linear("Temp"), Effect::categorical("Kind")]),
            shapes: vec![
                Shape::Linear { slope: 2.0 },
                Shape::Levels {
                    values: vec![0.0, 1.0, -1.0],
                },
            ],
            sigma,
            drifts: vec![Drift {
                effect: 0,
                from: 1.0,
                to: 1.5,
                start: 100,
                end: 200,
            }],
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = synth_generate(&spec(1.0), 300, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = synth_generate(&spec(1.0), 300, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let c = synth_generate(&spec(1.0), 300, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn target_follows_construction() {
        let s = synth_generate(&spec(0.0), 300, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.dataset.target(), &s.signal[..]);
        let temp = s
            .dataset
            .column("Temp")
            .unwrap()
            .as_numeric()
            .unwrap()
            .to_vec();
        let kind = s
            .dataset
            .column("Kind")
            .unwrap()
            .as_categorical()
            .unwrap()
            .to_vec();
        let levels = [0.0, 1.0, -1.0];
        for t in [0, 99, 150, 250] {
            let w = s.theta[(t, 0)];
            let expected = 10.0 + w * 2.0 * temp[t] + levels[kind[t] as usize - 1];
            assert!((s.signal[t] - expected).abs() < 1e-12);
        }
        assert_eq!(s.theta[(150, 0)], 1.25);
        assert_eq!(s.theta[(250, 0)], 1.5);
        assert!(s.dataset.registry().kind("Hour").is_some());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let s = spec(0.5);
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"formula\":\"lin(Temp) + cat(Kind)\""));
        let back: SynthSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let mut s = spec(0.0);
        s.shapes.pop();
        assert!(synth_generate(&s, 10, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
