//! Penalized least-squares fitting with GCV smoothing selection.
//!
//! The model is `y = β₀ + Σ_k X_k β_k + ε`, estimated by minimizing
//! `‖y − Xβ‖² + Σ_j λ_j βᵀS_jβ`. Each penalty matrix is rescaled to the
//! Frobenius norm of its block of `XᵀX`, so the λ grid means the same thing
//! for every effect.

use std::collections::HashMap;
use std::ops::Range;

use chrono::{DateTime, FixedOffset};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{self, Evaluator};
use crate::data::DataView;
use crate::features::{self, Column};
use crate::formula::{CovariateKind, Effect, EngineeredCovariate, FeatureEngineering, Formula};
use crate::linalg;
use crate::{Error, Result};

/// One penalty matrix, already scaled, acting on the columns starting at
/// `offset` (its size gives the span).
#[derive(Debug, Clone)]
pub struct PenaltyTerm {
    pub effect: usize,
    pub offset: usize,
    pub matrix: DMatrix<f64>,
}

/// Full design: intercept column first, then each effect's block in formula
/// order.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub spans: Vec<Range<usize>>,
    pub penalties: Vec<PenaltyTerm>,
    pub evaluators: Vec<Evaluator>,
}

impl Design {
    pub fn columns(&self) -> usize {
        self.x.ncols()
    }

    /// Effect owning a column, `None` for the intercept.
    pub fn effect_of(&self, column: usize) -> Option<usize> {
        self.spans.iter().position(|s| s.contains(&column))
    }

    /// `Σ_j λ_j S_j` embedded in a `p × p` matrix.
    pub fn penalty_sum(&self, lambdas: &[f64]) -> DMatrix<f64> {
        let p = self.columns();
        let mut s = DMatrix::zeros(p, p);
        for (term, &l) in self.penalties.iter().zip(lambdas) {
            let w = term.matrix.nrows();
            let mut view = s.view_mut((term.offset, term.offset), (w, w));
            view += &term.matrix * l;
        }
        s
    }
}

/// Source kind facts needed by the basis builders.
fn kind_info(kind: &CovariateKind) -> (Option<f64>, Option<usize>) {
    match kind {
        CovariateKind::Cyclic { period } => (Some(*period), None),
        CovariateKind::Categorical { levels } => (None, Some(*levels)),
        CovariateKind::Numeric => (None, None),
    }
}

struct EffectInputs {
    columns: Vec<Column>,
    periods: Vec<Option<f64>>,
    levels: Vec<Option<usize>>,
}

fn effect_inputs(
    effect: &Effect,
    data: &DataView,
    engineer: &dyn Fn(&EngineeredCovariate) -> Result<Vec<Column>>,
) -> Result<EffectInputs> {
    let mut inputs = EffectInputs {
        columns: Vec::new(),
        periods: Vec::new(),
        levels: Vec::new(),
    };
    let tensor = effect.basis.is_tensor();
    for c in &effect.covariates {
        let kind = data
            .registry()
            .kind(&c.name)
            .ok_or_else(|| Error::MissingCovariate(c.name.clone()))?;
        let (period, levels) = kind_info(kind);
        let cols = engineer(c)?;
        let take = if tensor { 1 } else { cols.len() };
        for col in cols.into_iter().take(take) {
            inputs.columns.push(col);
            inputs.periods.push(period);
            inputs.levels.push(levels);
        }
    }
    Ok(inputs)
}

fn at_effect(e: Error, k: usize) -> Error {
    match e {
        Error::TooFewDistinct {
            distinct, required, ..
        } => Error::TooFewDistinct {
            effect: k,
            distinct,
            required,
        },
        other => other,
    }
}

/// Builds the design matrix, column map and scaled penalties on training rows.
pub fn design_matrix(formula: &Formula, data: &DataView) -> Result<Design> {
    if data.is_empty() {
        return Err(Error::Data("cannot fit on an empty dataset".into()));
    }
    let n = data.len();
    let mut blocks = Vec::with_capacity(formula.len());
    for (k, effect) in formula.effects.iter().enumerate() {
        let inputs = effect_inputs(effect, data, &|c| data.engineered(c))?;
        let block = basis::build_effect(
            &effect.basis,
            &inputs.columns,
            &inputs.periods,
            &inputs.levels,
        )
        .map_err(|e| at_effect(e, k))?;
        blocks.push(block);
    }
    let p = 1 + blocks.iter().map(|b| b.columns()).sum::<usize>();
    let mut x = DMatrix::zeros(n, p);
    x.column_mut(0).fill(1.0);
    let mut spans = Vec::with_capacity(blocks.len());
    let mut penalties = Vec::new();
    let mut evaluators = Vec::with_capacity(blocks.len());
    let mut col = 1;
    for (k, b) in blocks.into_iter().enumerate() {
        let w = b.columns();
        x.columns_mut(col, w).copy_from(&b.design);
        let block_gram = b.design.transpose() * &b.design;
        let gram_norm = block_gram.norm();
        for s in b.penalties {
            let s_norm = s.norm();
            if s_norm == 0.0 {
                continue;
            }
            let scale = if gram_norm > 0.0 {
                gram_norm / s_norm
            } else {
                1.0
            };
            penalties.push(PenaltyTerm {
                effect: k,
                offset: col,
                matrix: s * scale,
            });
        }
        spans.push(col..col + w);
        evaluators.push(b.evaluator);
        col += w;
    }
    Ok(Design {
        x,
        spans,
        penalties,
        evaluators,
    })
}

/// Cached cross-products of a design and a response.
pub struct PenalizedSystem<'a> {
    pub design: &'a Design,
    pub y: &'a [f64],
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
}

/// Solution of the penalized normal equations at one λ vector.
#[derive(Debug, Clone)]
pub struct Solution {
    pub beta: DVector<f64>,
    pub rss: f64,
    /// Trace of the influence matrix.
    pub edf: f64,
    pub jitter: f64,
}

impl Solution {
    /// GCV `n·RSS / (n − tr A)²`.
    pub fn gcv(&self, n: usize) -> Result<f64> {
        let nf = n as f64;
        if nf <= self.edf {
            return Err(Error::DegenerateGcv { n, trace: self.edf });
        }
        Ok(nf * self.rss / ((nf - self.edf) * (nf - self.edf)))
    }
}

impl<'a> PenalizedSystem<'a> {
    pub fn new(design: &'a Design, y: &'a [f64]) -> Result<Self> {
        if y.len() != design.x.nrows() {
            return Err(Error::Dimension(format!(
                "{} responses for {} design rows",
                y.len(),
                design.x.nrows()
            )));
        }
        let yv = DVector::from_column_slice(y);
        let xt = design.x.transpose();
        Ok(PenalizedSystem {
            design,
            y,
            xtx: &xt * &design.x,
            xty: xt * yv,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn singular(&self, column: usize) -> Error {
        let effect = self.design.effect_of(column);
        let columns = match effect {
            Some(k) => self.design.spans[k].clone(),
            None => 0..1,
        };
        Error::Singular { effect, columns }
    }

    fn factor(&self, lambdas: &[f64]) -> Result<linalg::Factor> {
        let a = &self.xtx + self.design.penalty_sum(lambdas);
        linalg::cholesky(&a).map_err(|e| self.singular(e.0))
    }

    pub fn solve(&self, lambdas: &[f64]) -> Result<Solution> {
        if lambdas.len() != self.design.penalties.len() || lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "expected {} non-negative smoothing parameters",
                self.design.penalties.len()
            )));
        }
        let f = self.factor(lambdas)?;
        let beta = f.solve(&self.xty);
        let fitted = &self.design.x * &beta;
        let rss = self
            .y
            .iter()
            .zip(fitted.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        let edf = f.solve_matrix(&self.xtx).trace();
        if !rss.is_finite() || !edf.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("penalized least-squares solution".into()));
        }
        Ok(Solution {
            beta,
            rss,
            edf,
            jitter: f.jitter,
        })
    }

    pub fn gcv_score(&self, lambdas: &[f64]) -> Result<f64> {
        self.solve(lambdas)?.gcv(self.n())
    }

    /// Trace of the influence matrix, computed from the singular vectors of
    /// the stacked system `[R; √λ_j B_j]` (with `X = QR`, `S_j = B_jᵀB_j`),
    /// which stays accurate when some λ are very large.
    pub fn edf(&self, lambdas: &[f64]) -> Result<f64> {
        self.factor(lambdas)?;
        let p = self.design.columns();
        let r = self.design.x.clone().qr().r();
        let mut roots: Vec<(usize, DMatrix<f64>)> = Vec::new();
        for (term, &l) in self.design.penalties.iter().zip(lambdas) {
            if l == 0.0 {
                continue;
            }
            let eig = term.matrix.clone().symmetric_eigen();
            let top = eig.eigenvalues.amax();
            for (i, &ev) in eig.eigenvalues.iter().enumerate() {
                if ev > 1e-12 * top {
                    let v = eig.eigenvectors.column(i) * (ev * l).sqrt();
                    roots.push((
                        term.offset,
                        DMatrix::from_row_slice(1, v.len(), v.as_slice()),
                    ));
                }
            }
        }
        let mut m = DMatrix::zeros(r.nrows() + roots.len(), p);
        m.rows_mut(0, r.nrows()).copy_from(&r);
        for (i, (offset, row)) in roots.iter().enumerate() {
            m.view_mut((r.nrows() + i, *offset), (1, row.ncols()))
                .copy_from(row);
        }
        let svd = m.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let top = svd.singular_values.amax();
        let mut edf = 0.0;
        for (j, &sv) in svd.singular_values.iter().enumerate() {
            if sv > 1e-13 * top {
                edf += u.view((0, j), (r.nrows(), 1)).norm_squared();
            }
        }
        if !edf.is_finite() {
            return Err(Error::NonFinite("effective degrees of freedom".into()));
        }
        Ok(edf)
    }
}

/// `tr((XᵀX + Σλ_j S_j)⁻¹ XᵀX)`.
pub fn edf(design: &Design, lambdas: &[f64]) -> Result<f64> {
    let y = vec![0.0; design.x.nrows()];
    PenalizedSystem::new(design, &y)?.edf(lambdas)
}

/// Grid for the smoothing-parameter search, in `log10 λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub log10_min: f64,
    pub log10_max: f64,
    pub log10_step: f64,
    pub start: f64,
    pub max_passes: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            log10_min: -6.0,
            log10_max: 6.0,
            log10_step: 0.5,
            start: 0.0,
            max_passes: 3,
        }
    }
}

impl FitOptions {
    fn grid(&self) -> Vec<f64> {
        let steps = ((self.log10_max - self.log10_min) / self.log10_step).round() as usize;
        (0..=steps)
            .map(|i| self.log10_min + i as f64 * self.log10_step)
            .collect()
    }
}

/// Result of the coordinate-descent λ search.
#[derive(Debug, Clone)]
pub struct GcvSearch {
    pub lambdas: Vec<f64>,
    pub solution: Solution,
    pub gcv: f64,
    /// True when the last pass moved no coordinate.
    pub converged: bool,
}

/// Coordinate descent over the `log10 λ` grid, one coordinate at a time,
/// moving in single grid steps. Ties go to the larger λ.
pub fn select_smoothing(system: &PenalizedSystem, options: &FitOptions) -> Result<GcvSearch> {
    let j = system.design.penalties.len();
    let grid = options.grid();
    let start = grid
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 - options.start)
                .abs()
                .total_cmp(&(b.1 - options.start).abs())
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut pos = vec![start; j];
    let mut cache: HashMap<Vec<usize>, Option<(f64, Solution)>> = HashMap::new();
    let mut last_error = None;
    let mut score = |pos: &Vec<usize>, last_error: &mut Option<Error>| -> f64 {
        let entry = cache.entry(pos.clone()).or_insert_with(|| {
            let lambdas: Vec<f64> = pos.iter().map(|&i| 10f64.powf(grid[i])).collect();
            match system
                .solve(&lambdas)
                .and_then(|s| Ok((s.gcv(system.n())?, s)))
            {
                Ok(v) => Some(v),
                Err(e) => {
                    *last_error = Some(e);
                    None
                }
            }
        });
        entry.as_ref().map_or(f64::INFINITY, |v| v.0)
    };

    let mut converged = j == 0;
    let mut best = score(&pos, &mut last_error);
    for _ in 0..options.max_passes.max(1) {
        if j == 0 {
            break;
        }
        let mut moved = false;
        for c in 0..j {
            let current = pos[c];
            // Step toward the better neighbour, then keep stepping while the
            // score improves. Ties favour the larger λ.
            let mut probe = |i: usize, pos: &Vec<usize>, last_error: &mut Option<Error>| {
                let mut trial = pos.clone();
                trial[c] = i;
                score(&trial, last_error)
            };
            let up = (current + 1 < grid.len()).then(|| probe(current + 1, &pos, &mut last_error));
            let down = (current > 0).then(|| probe(current - 1, &pos, &mut last_error));
            let accepts = |v: f64, best: f64, upward: bool| {
                v < best || (upward && v == best && v.is_finite())
            };
            let step: isize = match (up, down) {
                (Some(u), Some(d)) if accepts(u, best, true) && !(d < u) => 1,
                (Some(u), None) if accepts(u, best, true) => 1,
                (_, Some(d)) if accepts(d, best, false) => -1,
                _ => 0,
            };
            if step == 0 {
                continue;
            }
            let mut i = current;
            loop {
                let next = i as isize + step;
                if next < 0 || next as usize >= grid.len() {
                    break;
                }
                let v = probe(next as usize, &pos, &mut last_error);
                if !accepts(v, best, step > 0) {
                    break;
                }
                best = v;
                i = next as usize;
            }
            pos[c] = i;
            moved = true;
        }
        if !moved {
            converged = true;
            break;
        }
    }
    if !best.is_finite() {
        return Err(last_error.unwrap_or_else(|| Error::NonFinite("GCV score".into())));
    }
    let (gcv, solution) = cache
        .remove(&pos)
        .flatten()
        .expect("finite best score is cached");
    Ok(GcvSearch {
        lambdas: pos.iter().map(|&i| 10f64.powf(grid[i])).collect(),
        solution,
        gcv,
        converged,
    })
}

/// Smoothing state carried from the end of training, for data that lacks
/// the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothCarry {
    pub covariate: String,
    pub alpha: f64,
    pub at: DateTime<FixedOffset>,
    pub value: f64,
}

/// A trained formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedGam {
    pub formula: Formula,
    /// Intercept first, then each effect's span.
    #[serde(with = "coefficients")]
    pub beta: Vec<f64>,
    pub spans: Vec<Range<usize>>,
    pub lambdas: Vec<f64>,
    /// Effect index of each smoothing parameter.
    pub lambda_effects: Vec<usize>,
    pub edf: f64,
    pub gcv: f64,
    pub converged: bool,
    pub rss: f64,
    pub n_train: usize,
    pub evaluators: Vec<Evaluator>,
    pub carries: Vec<SmoothCarry>,
}

/// Coefficient arrays as base64 of little-endian `f64`s.
mod coefficients {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = STANDARD.decode(text).map_err(serde::de::Error::custom)?;
        if bytes.len() % 8 != 0 {
            return Err(serde::de::Error::custom(
                "coefficient bytes not a multiple of 8",
            ));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Fits a formula with the default λ grid.
pub fn fit(formula: &Formula, train: &DataView) -> Result<FittedGam> {
    fit_with(formula, train, &FitOptions::default())
}

pub fn fit_with(formula: &Formula, train: &DataView, options: &FitOptions) -> Result<FittedGam> {
    let design = design_matrix(formula, train)?;
    let y = train.target();
    if y.len() <= design.columns() {
        log::warn!(
            "{} training rows for {} coefficients",
            y.len(),
            design.columns()
        );
    }
    let system = PenalizedSystem::new(&design, &y)?;
    let search = select_smoothing(&system, options)?;
    let carries = smoothing_carries(formula, train)?;
    let edf = system.edf(&search.lambdas)?;
    Ok(FittedGam {
        formula: formula.clone(),
        beta: search.solution.beta.iter().copied().collect(),
        spans: design.spans.clone(),
        lambda_effects: design.penalties.iter().map(|t| t.effect).collect(),
        lambdas: search.lambdas,
        edf,
        gcv: search.gcv,
        converged: search.converged,
        rss: search.solution.rss,
        n_train: y.len(),
        evaluators: design.evaluators,
        carries,
    })
}

fn smoothing_carries(formula: &Formula, train: &DataView) -> Result<Vec<SmoothCarry>> {
    let mut out: Vec<SmoothCarry> = Vec::new();
    let Some(&last) = train.rows().last() else {
        return Ok(out);
    };
    let at = train.source().timestamps()[last];
    for c in formula.effects.iter().flat_map(|e| &e.covariates) {
        if let FeatureEngineering::ExpSmooth { alpha } = c.engineering {
            if out
                .iter()
                .any(|k| k.covariate == c.name && k.alpha == alpha)
            {
                continue;
            }
            let full = train.source().engineer(c)?;
            let value = full[0].as_numeric().expect("smoothing yields numbers")[last];
            out.push(SmoothCarry {
                covariate: c.name.clone(),
                alpha,
                at,
                value,
            });
        }
    }
    Ok(out)
}

/// Fixed-model prediction with per-effect contributions (`n × K`).
#[derive(Debug, Clone)]
pub struct Prediction {
    pub values: Vec<f64>,
    pub intercept: f64,
    pub contributions: DMatrix<f64>,
    /// Categorical codes beyond the declared modalities, mapped to zero rows.
    pub unseen: usize,
}

impl FittedGam {
    pub fn intercept(&self) -> f64 {
        self.beta[0]
    }

    fn engineered(&self, data: &DataView, c: &EngineeredCovariate) -> Result<Vec<Column>> {
        if let FeatureEngineering::ExpSmooth { alpha } = c.engineering {
            let carry = self
                .carries
                .iter()
                .find(|k| k.covariate == c.name && k.alpha == alpha);
            let source = data.source();
            if let Some(carry) = carry {
                if source.timestamps()[0] > carry.at {
                    let raw = source
                        .column(&c.name)
                        .ok_or_else(|| Error::MissingCovariate(c.name.clone()))?;
                    let raw = raw.as_numeric().ok_or_else(|| {
                        Error::Data(format!("smoothing needs numeric `{}`", c.name))
                    })?;
                    let smoothed = features::exp_smooth_from(carry.value, raw, alpha)?;
                    return Ok(vec![Column::Numeric(smoothed).gather(data.rows())]);
                }
            }
        }
        data.engineered(c)
    }

    /// Per-effect contributions `f̂_k` at the view's rows.
    pub fn predict_fixed(&self, data: &DataView) -> Result<Prediction> {
        let n = data.len();
        let k = self.formula.len();
        let mut contributions = DMatrix::zeros(n, k);
        let mut unseen = 0;
        for (e, effect) in self.formula.effects.iter().enumerate() {
            let inputs = effect_inputs(effect, data, &|c| self.engineered(data, c))?;
            let refs: Vec<&Column> = inputs.columns.iter().collect();
            let block = self.evaluators[e].evaluate(&refs, &mut unseen)?;
            let span = self.spans[e].clone();
            let beta = &self.beta[span];
            for i in 0..n {
                let mut acc = 0.0;
                for (j, b) in beta.iter().enumerate() {
                    acc += block[(i, j)] * b;
                }
                contributions[(i, e)] = acc;
            }
        }
        if unseen > 0 {
            log::warn!("{unseen} categorical values outside the declared modalities");
        }
        let intercept = self.intercept();
        let values = (0..n)
            .map(|i| {
                let mut acc = intercept;
                for e in 0..k {
                    acc += contributions[(i, e)];
                }
                acc
            })
            .collect();
        Ok(Prediction {
            values,
            intercept,
            contributions,
            unseen,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
