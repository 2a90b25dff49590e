//! Design blocks and penalty matrices for each effect family.
//!
//! Smooth terms are P-splines: B-splines on equally spaced knots over the
//! training range with a second-order difference penalty. Every block is made
//! identifiable against the global intercept: smooth and tensor blocks are
//! column-centered and lose their last column, indicator blocks lose a
//! reference level.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::features::Column;
use crate::formula::{BasisSpec, Marginal, MarginalFamily};
use crate::{Error, Result};

/// Uniform B-spline basis of `q` functions, open (clamped to the range) or
/// periodic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spline {
    pub cyclic: bool,
    pub lo: f64,
    pub hi: f64,
    pub q: usize,
    pub degree: usize,
}

/// Cardinal B-spline of degree `d` supported on `[0, d + 1]`.
fn cardinal(d: usize, u: f64) -> f64 {
    if d == 0 {
        return if (0.0..1.0).contains(&u) { 1.0 } else { 0.0 };
    }
    let df = d as f64;
    (u * cardinal(d - 1, u) + (df + 1.0 - u) * cardinal(d - 1, u - 1.0)) / df
}

impl Spline {
    pub fn new(cyclic: bool, lo: f64, hi: f64, q: usize) -> Result<Self> {
        if q < 3 {
            return Err(Error::InvalidParameter(format!(
                "spline basis size {q} < 3"
            )));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "degenerate spline range [{lo}, {hi}]"
            )));
        }
        let degree = if q == 3 { 2 } else { 3 };
        Ok(Spline {
            cyclic,
            lo,
            hi,
            q,
            degree,
        })
    }

    fn segments(&self) -> usize {
        if self.cyclic {
            self.q
        } else {
            self.q - self.degree
        }
    }

    /// Writes the `q` basis values at `x` into `row`.
    pub fn eval_into(&self, x: f64, row: &mut [f64]) {
        row.iter_mut().for_each(|v| *v = 0.0);
        let segs = self.segments();
        let h = (self.hi - self.lo) / segs as f64;
        let d = self.degree;
        let (s, t) = if self.cyclic {
            let u = ((x - self.lo) / h).rem_euclid(segs as f64);
            let s = (u.floor() as usize).min(segs - 1);
            (s, u - s as f64)
        } else {
            let u = ((x.clamp(self.lo, self.hi) - self.lo) / h).clamp(0.0, segs as f64);
            let s = (u.floor() as usize).min(segs - 1);
            (s, u - s as f64)
        };
        for i in 0..=d {
            let value = cardinal(d, t + (d - i) as f64);
            let j = if self.cyclic {
                (s + i + self.q - d) % self.q
            } else {
                s + i
            };
            row[j] += value;
        }
    }

    pub fn design(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(x.len(), self.q);
        let mut row = vec![0.0; self.q];
        for (r, &v) in x.iter().enumerate() {
            self.eval_into(v, &mut row);
            for (c, &b) in row.iter().enumerate() {
                m[(r, c)] = b;
            }
        }
        m
    }

    /// `DᵀD` for the second-order difference operator, wrapped when cyclic.
    pub fn penalty(&self) -> DMatrix<f64> {
        let q = self.q;
        let rows = if self.cyclic { q } else { q - 2 };
        let mut diff = DMatrix::<f64>::zeros(rows, q);
        for r in 0..rows {
            for (offset, w) in [(0, 1.0), (1, -2.0), (2, 1.0)] {
                diff[(r, (r + offset) % q)] += w;
            }
        }
        diff.transpose() * diff
    }
}

/// Uncentered marginal basis used inside tensor products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum RawBasis {
    Spline(Spline),
    /// `levels` indicator columns `1{x = i}`; code 0 gives a zero row.
    Indicator {
        levels: usize,
    },
    /// A single all-ones column.
    Constant,
}

impl RawBasis {
    pub fn columns(&self) -> usize {
        match self {
            RawBasis::Spline(s) => s.q,
            RawBasis::Indicator { levels } => *levels,
            RawBasis::Constant => 1,
        }
    }

    fn eval_into(&self, value: Value, row: &mut [f64], unseen: &mut usize) {
        match (self, value) {
            (RawBasis::Spline(s), Value::Num(x)) => s.eval_into(x, row),
            (RawBasis::Indicator { levels }, Value::Code(c)) => {
                row.iter_mut().for_each(|v| *v = 0.0);
                if c as usize > *levels {
                    *unseen += 1;
                } else if c > 0 {
                    row[c as usize - 1] = 1.0;
                }
            }
            (RawBasis::Constant, _) => row[0] = 1.0,
            _ => unreachable!("input kind checked at construction"),
        }
    }

    fn penalty(&self) -> Option<DMatrix<f64>> {
        match self {
            RawBasis::Spline(s) => Some(s.penalty()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Value {
    Num(f64),
    Code(u32),
}

fn value_at(c: &Column, i: usize) -> Value {
    match c {
        Column::Numeric(v) => Value::Num(v[i]),
        Column::Categorical(v) => Value::Code(v[i]),
    }
}

/// A basis before identifiability constraints.
#[derive(Debug, Clone)]
pub struct RawBlock {
    pub design: DMatrix<f64>,
    pub penalties: Vec<DMatrix<f64>>,
}

/// Re-evaluates a block's design at new engineered values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Evaluator {
    /// One centered column.
    Linear { mean: f64 },
    /// Centered spline with the last column dropped.
    Spline { spline: Spline, means: Vec<f64> },
    /// Indicator columns for `codes`; other codes give a zero row.
    Indicator { levels: usize, codes: Vec<u32> },
    /// One sub-block per engineered column (lag sets), side by side.
    Stack { parts: Vec<Evaluator> },
    /// Centered row-major product of two marginals with the last column dropped.
    Tensor {
        first: RawBasis,
        second: RawBasis,
        means: Vec<f64>,
    },
}

impl Evaluator {
    pub fn columns(&self) -> usize {
        match self {
            Evaluator::Linear { .. } => 1,
            Evaluator::Spline { means, .. } | Evaluator::Tensor { means, .. } => means.len() - 1,
            Evaluator::Indicator { codes, .. } => codes.len(),
            Evaluator::Stack { parts } => parts.iter().map(Evaluator::columns).sum(),
        }
    }

    /// Number of engineered input columns this evaluator consumes.
    pub fn inputs(&self) -> usize {
        match self {
            Evaluator::Stack { parts } => parts.len(),
            Evaluator::Tensor { .. } => 2,
            _ => 1,
        }
    }

    /// Evaluates the design at new values. Categorical codes without a column
    /// give zero rows; codes beyond `levels` are also counted in `unseen`.
    pub fn evaluate(&self, inputs: &[&Column], unseen: &mut usize) -> Result<DMatrix<f64>> {
        if inputs.len() != self.inputs() {
            return Err(Error::Dimension(format!(
                "basis expects {} input columns, got {}",
                self.inputs(),
                inputs.len()
            )));
        }
        let n = inputs[0].len();
        if inputs.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("input columns differ in length".into()));
        }
        let p = self.columns();
        let mut out = DMatrix::zeros(n, p);
        match self {
            Evaluator::Linear { mean } => {
                let x = numeric(inputs[0])?;
                for (i, &v) in x.iter().enumerate() {
                    out[(i, 0)] = v - mean;
                }
            }
            Evaluator::Spline { spline, means } => {
                let x = numeric(inputs[0])?;
                let mut row = vec![0.0; spline.q];
                for (i, &v) in x.iter().enumerate() {
                    spline.eval_into(v, &mut row);
                    for c in 0..p {
                        out[(i, c)] = row[c] - means[c];
                    }
                }
            }
            Evaluator::Indicator { levels, codes } => {
                let x = categorical(inputs[0])?;
                for (i, &v) in x.iter().enumerate() {
                    if let Some(c) = codes.iter().position(|&k| k == v) {
                        out[(i, c)] = 1.0;
                    } else if v as usize > *levels {
                        *unseen += 1;
                    }
                }
            }
            Evaluator::Stack { parts } => {
                let mut col = 0;
                for (part, input) in parts.iter().zip(inputs) {
                    let d = part.evaluate(&[input], unseen)?;
                    out.columns_mut(col, d.ncols()).copy_from(&d);
                    col += d.ncols();
                }
            }
            Evaluator::Tensor {
                first,
                second,
                means,
            } => {
                check_input(first, inputs[0])?;
                check_input(second, inputs[1])?;
                let (pa, pb) = (first.columns(), second.columns());
                let (mut ra, mut rb) = (vec![0.0; pa], vec![0.0; pb]);
                for i in 0..n {
                    first.eval_into(value_at(inputs[0], i), &mut ra, unseen);
                    second.eval_into(value_at(inputs[1], i), &mut rb, unseen);
                    for c in 0..p {
                        out[(i, c)] = ra[c / pb] * rb[c % pb] - means[c];
                    }
                }
            }
        }
        Ok(out)
    }
}

fn check_input(b: &RawBasis, c: &Column) -> Result<()> {
    match (b, c) {
        (RawBasis::Spline(_), Column::Numeric(_))
        | (RawBasis::Indicator { .. }, Column::Categorical(_))
        | (RawBasis::Constant, _) => Ok(()),
        _ => Err(Error::Data(
            "tensor marginal applied to a column of the wrong kind".into(),
        )),
    }
}

fn numeric(c: &Column) -> Result<&[f64]> {
    c.as_numeric()
        .ok_or_else(|| Error::Data("numeric basis applied to a categorical column".into()))
}

fn categorical(c: &Column) -> Result<&[u32]> {
    c.as_categorical()
        .ok_or_else(|| Error::Data("indicator basis applied to a numeric column".into()))
}

/// An identifiable design block with its penalty matrices (one smoothing
/// parameter each) and the evaluator that reproduces it on new data.
#[derive(Debug, Clone)]
pub struct BasisBlock {
    pub design: DMatrix<f64>,
    pub penalties: Vec<DMatrix<f64>>,
    pub evaluator: Evaluator,
}

impl BasisBlock {
    pub fn columns(&self) -> usize {
        self.design.ncols()
    }
}

fn distinct(values: &[f64]) -> usize {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

fn too_few(distinct: usize, required: usize) -> Error {
    Error::TooFewDistinct {
        effect: 0,
        distinct,
        required,
    }
}

fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() as f64;
    m.column_iter().map(|c| c.sum() / n).collect()
}

/// Centers the columns, drops the last one and restricts the penalties.
fn identify(raw: RawBlock) -> (DMatrix<f64>, Vec<DMatrix<f64>>, Vec<f64>) {
    let means = column_means(&raw.design);
    let p = raw.design.ncols() - 1;
    let mut design = raw.design.columns(0, p).into_owned();
    for (c, mut col) in design.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[c]);
    }
    let penalties = raw
        .penalties
        .iter()
        .map(|s| s.view((0, 0), (p, p)).into_owned())
        .collect();
    (design, penalties, means)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnivariateFamily {
    Linear,
    Cubic,
    /// Periodic over `[0, period]`, or over the training range without a period.
    Cyclic {
        period: Option<f64>,
    },
}

/// Builds a linear, cubic or cyclic block on training values.
pub fn build_univariate(family: UnivariateFamily, q: usize, values: &[f64]) -> Result<BasisBlock> {
    if values.is_empty() {
        return Err(Error::Data("cannot build a basis on zero rows".into()));
    }
    let nd = distinct(values);
    match family {
        UnivariateFamily::Linear => {
            if nd < 2 {
                return Err(too_few(nd, 2));
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let design = DMatrix::from_iterator(values.len(), 1, values.iter().map(|v| v - mean));
            Ok(BasisBlock {
                design,
                penalties: Vec::new(),
                evaluator: Evaluator::Linear { mean },
            })
        }
        UnivariateFamily::Cubic | UnivariateFamily::Cyclic { .. } => {
            if q < 3 {
                return Err(Error::InvalidParameter(format!(
                    "spline basis size {q} < 3"
                )));
            }
            if nd < q {
                return Err(too_few(nd, q));
            }
            let spline = raw_spline(family, q, values)?;
            let raw = RawBlock {
                design: spline.design(values),
                penalties: vec![spline.penalty()],
            };
            let (design, penalties, means) = identify(raw);
            Ok(BasisBlock {
                design,
                penalties,
                evaluator: Evaluator::Spline { spline, means },
            })
        }
    }
}

fn raw_spline(family: UnivariateFamily, q: usize, values: &[f64]) -> Result<Spline> {
    let (lo, hi) = range(values);
    match family {
        UnivariateFamily::Cyclic { period: Some(p) } => Spline::new(true, 0.0, p, q),
        UnivariateFamily::Cyclic { period: None } => Spline::new(true, lo, hi, q),
        _ => Spline::new(false, lo, hi, q),
    }
}

/// Indicator block for codes `1..=levels`. The default code 0 gives a zero
/// row; when 0 never occurs in training, the most frequent level (lowest code
/// on ties) becomes the reference and is dropped. Levels absent from training
/// get no column.
pub fn build_categorical(levels: usize, values: &[u32]) -> Result<BasisBlock> {
    if values.is_empty() {
        return Err(Error::Data("cannot build a basis on zero rows".into()));
    }
    let mut counts = vec![0usize; levels + 1];
    for &v in values {
        if v as usize > levels {
            return Err(Error::Data(format!(
                "modality code {v} outside 0..={levels}"
            )));
        }
        counts[v as usize] += 1;
    }
    let observed = counts.iter().filter(|&&c| c > 0).count();
    if observed < 2 {
        return Err(Error::Data(format!(
            "categorical effect has fewer than 2 observed levels ({observed})"
        )));
    }
    let reference = if counts[0] > 0 {
        0
    } else {
        (1..=levels).fold(1, |best, l| if counts[l] > counts[best] { l } else { best })
    };
    let codes: Vec<u32> = (1..=levels)
        .filter(|&l| counts[l] > 0 && l != reference)
        .map(|l| l as u32)
        .collect();
    build_indicator(levels, codes, values)
}

/// Indicator block with an explicit set of coded columns.
pub fn build_indicator(levels: usize, codes: Vec<u32>, values: &[u32]) -> Result<BasisBlock> {
    let evaluator = Evaluator::Indicator { levels, codes };
    let mut unseen = 0;
    let design = evaluator.evaluate(&[&Column::Categorical(values.to_vec())], &mut unseen)?;
    Ok(BasisBlock {
        design,
        penalties: Vec::new(),
        evaluator,
    })
}

/// Uncentered marginal on training values.
pub fn raw_marginal(marginal: &Marginal, period: Option<f64>, column: &Column) -> Result<RawBasis> {
    match (marginal.family, column) {
        (MarginalFamily::Categorical, Column::Categorical(_)) => Ok(RawBasis::Indicator {
            levels: marginal.size,
        }),
        (MarginalFamily::Cubic | MarginalFamily::Cyclic, Column::Numeric(v)) => {
            let nd = distinct(v);
            if nd < marginal.size {
                return Err(too_few(nd, marginal.size));
            }
            let family = if marginal.family == MarginalFamily::Cyclic {
                UnivariateFamily::Cyclic { period }
            } else {
                UnivariateFamily::Cubic
            };
            Ok(RawBasis::Spline(raw_spline(family, marginal.size, v)?))
        }
        _ => Err(Error::Data(
            "tensor marginal applied to a column of the wrong kind".into(),
        )),
    }
}

pub fn raw_block(basis: &RawBasis, column: &Column) -> Result<RawBlock> {
    check_input(basis, column)?;
    let n = column.len();
    let p = basis.columns();
    let mut design = DMatrix::zeros(n, p);
    let mut row = vec![0.0; p];
    let mut unseen = 0;
    for i in 0..n {
        basis.eval_into(value_at(column, i), &mut row, &mut unseen);
        for c in 0..p {
            design[(i, c)] = row[c];
        }
    }
    Ok(RawBlock {
        design,
        penalties: basis.penalty().into_iter().collect(),
    })
}

/// Row-wise product of two raw blocks: column `iA * pB + iB` holds
/// `a[:, iA] * b[:, iB]`. Penalties become `S_A ⊗ I` and `I ⊗ S_B`.
pub fn tensor_product(a: &RawBlock, b: &RawBlock) -> Result<RawBlock> {
    let n = a.design.nrows();
    if b.design.nrows() != n {
        return Err(Error::Dimension(format!(
            "tensor marginals have {} and {} rows",
            n,
            b.design.nrows()
        )));
    }
    let (pa, pb) = (a.design.ncols(), b.design.ncols());
    let mut design = DMatrix::zeros(n, pa * pb);
    for i in 0..n {
        for ia in 0..pa {
            let x = a.design[(i, ia)];
            for ib in 0..pb {
                design[(i, ia * pb + ib)] = x * b.design[(i, ib)];
            }
        }
    }
    let mut penalties = Vec::new();
    for s in &a.penalties {
        penalties.push(s.kronecker(&DMatrix::<f64>::identity(pb, pb)));
    }
    for s in &b.penalties {
        penalties.push(DMatrix::<f64>::identity(pa, pa).kronecker(s));
    }
    Ok(RawBlock { design, penalties })
}

/// Identifiable tensor block over two engineered columns.
pub fn build_tensor(
    marginals: (&Marginal, &Marginal),
    periods: (Option<f64>, Option<f64>),
    columns: (&Column, &Column),
) -> Result<BasisBlock> {
    let first = raw_marginal(marginals.0, periods.0, columns.0)?;
    let second = raw_marginal(marginals.1, periods.1, columns.1)?;
    let raw = tensor_product(
        &raw_block(&first, columns.0)?,
        &raw_block(&second, columns.1)?,
    )?;
    let (design, penalties, means) = identify(raw);
    Ok(BasisBlock {
        design,
        penalties,
        evaluator: Evaluator::Tensor {
            first,
            second,
            means,
        },
    })
}

/// Builds the block for one effect. `columns` are the engineered columns
/// (one per lag offset for lag sets, two for tensors); `periods` and `levels`
/// describe the source covariates.
pub fn build_effect(
    spec: &BasisSpec,
    columns: &[Column],
    periods: &[Option<f64>],
    levels: &[Option<usize>],
) -> Result<BasisBlock> {
    if columns.is_empty() {
        return Err(Error::Dimension("effect without input columns".into()));
    }
    let univariate = |c: &Column| -> Result<BasisBlock> {
        match spec {
            BasisSpec::Linear => build_univariate(UnivariateFamily::Linear, 1, numeric(c)?),
            BasisSpec::CubicSpline { k } => {
                build_univariate(UnivariateFamily::Cubic, *k, numeric(c)?)
            }
            BasisSpec::CyclicSpline { k } => build_univariate(
                UnivariateFamily::Cyclic { period: periods[0] },
                *k,
                numeric(c)?,
            ),
            BasisSpec::Categorical => {
                let m = levels[0].ok_or_else(|| {
                    Error::Data("indicator basis on a covariate without modalities".into())
                })?;
                build_categorical(m, categorical(c)?)
            }
            BasisSpec::TensorProduct { .. } => unreachable!(),
        }
    };
    match spec {
        BasisSpec::TensorProduct { first, second } => {
            if columns.len() != 2 {
                return Err(Error::Dimension("tensor basis needs two columns".into()));
            }
            build_tensor(
                (first, second),
                (periods[0], periods[1]),
                (&columns[0], &columns[1]),
            )
        }
        _ if columns.len() == 1 => univariate(&columns[0]),
        _ => {
            let blocks = columns.iter().map(univariate).collect::<Result<Vec<_>>>()?;
            Ok(stack(blocks))
        }
    }
}

/// Places blocks side by side with a block-diagonal penalty sharing a single
/// smoothing parameter.
pub fn stack(blocks: Vec<BasisBlock>) -> BasisBlock {
    let n = blocks[0].design.nrows();
    let p: usize = blocks.iter().map(BasisBlock::columns).sum();
    let mut design = DMatrix::zeros(n, p);
    let mut penalty = DMatrix::zeros(p, p);
    let mut penalized = false;
    let mut col = 0;
    let mut parts = Vec::new();
    for b in blocks {
        let w = b.columns();
        design.columns_mut(col, w).copy_from(&b.design);
        for s in &b.penalties {
            penalized = true;
            let mut view = penalty.view_mut((col, col), (w, w));
            view += s;
        }
        col += w;
        parts.push(b.evaluator);
    }
    BasisBlock {
        design,
        penalties: if penalized { vec![penalty] } else { Vec::new() },
        evaluator: Evaluator::Stack { parts },
    }
}

/// Recovers the 1-based row-major multi-index of a 1-based flat index: the
/// last index varies fastest.
pub fn flatten_index(i: usize, dims: &[usize]) -> Result<Vec<usize>> {
    let total: usize = dims.iter().product();
    if dims.is_empty() || i == 0 || i > total {
        return Err(Error::InvalidParameter(format!(
            "flat index {i} outside 1..={total}"
        )));
    }
    let mut rest = i - 1;
    let mut out = vec![0; dims.len()];
    for (l, &q) in dims.iter().enumerate().rev() {
        out[l] = rest % q + 1;
        rest /= q;
    }
    Ok(out)
}

/// Symmetric eigenvalues, ascending.
pub fn eigenvalues(s: &DMatrix<f64>) -> DVector<f64> {
    let mut e = s.clone().symmetric_eigen().eigenvalues;
    e.as_mut_slice().sort_by(f64::total_cmp);
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    fn rank(m: &DMatrix<f64>) -> usize {
        let e = eigenvalues(m);
        let tol = e.max().abs().max(1.0) * 1e-9;
        e.iter().filter(|v| v.abs() > tol).count()
    }

    #[test]
    fn linear_block_is_centered_values() {
        let b = build_univariate(UnivariateFamily::Linear, 1, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(b.design.as_slice(), &[-1.0, 0.0, 1.0]);
        assert!(b.penalties.is_empty());
    }

    #[test]
    fn cubic_block_shape_and_penalty_rank() {
        let x = uniform(500, 1);
        let b = build_univariate(UnivariateFamily::Cubic, 10, &x).unwrap();
        assert_eq!(b.columns(), 9);
        // Oracle: explicit second differences on 10 coefficients, last one fixed at zero.
        let mut d = DMatrix::zeros(8, 10);
        for r in 0..8 {
            d[(r, r)] = 1.0;
            d[(r, r + 1)] = -2.0;
            d[(r, r + 2)] = 1.0;
        }
        let oracle = (d.transpose() * d).view((0, 0), (9, 9)).into_owned();
        assert_eq!(b.penalties[0], oracle);
        assert_eq!(rank(&b.penalties[0]), 8);
        for c in b.design.column_iter() {
            assert!(c.sum().abs() < 1e-8);
        }
    }

    #[test]
    fn bases_partition_unity() {
        for (cyclic, q) in [
            (false, 3),
            (false, 4),
            (false, 12),
            (true, 3),
            (true, 4),
            (true, 9),
        ] {
            let s = Spline::new(cyclic, -2.0, 5.0, q).unwrap();
            let d = s.design(&[-2.0, -1.3, 0.0, 2.2, 4.99, 5.0]);
            for r in d.row_iter() {
                assert!((r.sum() - 1.0).abs() < 1e-12, "cyclic={cyclic} q={q}");
            }
        }
    }

    #[test]
    fn cyclic_rows_match_at_period_ends() {
        let x = uniform(200, 2).iter().map(|v| v * 24.0).collect::<Vec<_>>();
        let b = build_univariate(UnivariateFamily::Cyclic { period: Some(24.0) }, 8, &x).unwrap();
        let mut unseen = 0;
        let d = b
            .evaluator
            .evaluate(&[&Column::Numeric(vec![0.0, 24.0])], &mut unseen)
            .unwrap();
        assert_eq!(d.row(0), d.row(1));
        // Smooth wrap: values near both ends agree to first order.
        let e = b
            .evaluator
            .evaluate(&[&Column::Numeric(vec![1e-6, 24.0 - 1e-6])], &mut unseen)
            .unwrap();
        assert!((e.row(0) - e.row(1)).amax() < 1e-5);
        // Circulant penalty leaves only constants unpenalized before centering.
        let s = Spline::new(true, 0.0, 24.0, 8).unwrap().penalty();
        assert_eq!(rank(&s), 7);
    }

    #[test]
    fn spline_needs_enough_distinct_values() {
        let x = [1.0, 2.0, 3.0, 1.0, 2.0];
        assert!(matches!(
            build_univariate(UnivariateFamily::Cubic, 5, &x),
            Err(Error::TooFewDistinct {
                distinct: 3,
                required: 5,
                ..
            })
        ));
        assert!(build_univariate(UnivariateFamily::Cubic, 2, &x).is_err());
    }

    #[test]
    fn categorical_reference_and_default() {
        // Level 1 most frequent: reference 1, columns for 2 and 3.
        let b = build_categorical(3, &[1, 1, 1, 2, 3, 2]).unwrap();
        assert_eq!(
            b.evaluator,
            Evaluator::Indicator {
                levels: 3,
                codes: vec![2, 3]
            }
        );
        let mut unseen = 0;
        let row = |code: u32, unseen: &mut usize| {
            b.evaluator
                .evaluate(&[&Column::Categorical(vec![code])], unseen)
                .unwrap()
                .row(0)
                .iter()
                .copied()
                .collect::<Vec<_>>()
        };
        // One-hot minus reference oracle.
        assert_eq!(row(2, &mut unseen), vec![1.0, 0.0]);
        assert_eq!(row(1, &mut unseen), vec![0.0, 0.0]);
        assert_eq!(row(0, &mut unseen), vec![0.0, 0.0]);
        assert_eq!(unseen, 0);
        assert_eq!(row(9, &mut unseen), vec![0.0, 0.0]);
        assert_eq!(unseen, 1);
        // Level 3 most frequent: value 2 lands in the second column.
        let c = build_categorical(3, &[3, 3, 3, 1, 2]).unwrap();
        let d = c
            .evaluator
            .evaluate(&[&Column::Categorical(vec![2])], &mut unseen)
            .unwrap();
        assert_eq!(d.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0]);
        assert!(build_categorical(3, &[2, 2, 2]).is_err());
        // With the default code present it is the baseline; all seen levels keep a column.
        let s = build_categorical(4, &[0, 2, 0, 4]).unwrap();
        assert_eq!(
            s.evaluator,
            Evaluator::Indicator {
                levels: 4,
                codes: vec![2, 4]
            }
        );
    }

    #[test]
    fn tensor_counts_and_identity_factor() {
        let x = uniform(50, 3);
        let a = raw_block(
            &RawBasis::Spline(Spline::new(false, 0.0, 1.0, 4).unwrap()),
            &Column::Numeric(x.clone()),
        )
        .unwrap();
        let ones = RawBlock {
            design: DMatrix::from_element(50, 1, 1.0),
            penalties: Vec::new(),
        };
        let t = tensor_product(&a, &ones).unwrap();
        assert_eq!(t.design, a.design);
        assert_eq!(t.penalties, a.penalties);

        let two = RawBlock {
            design: a.design.columns(0, 2).into_owned(),
            penalties: Vec::new(),
        };
        let three = RawBlock {
            design: a.design.columns(1, 3).into_owned(),
            penalties: Vec::new(),
        };
        let t = tensor_product(&two, &three).unwrap();
        assert_eq!(t.design.ncols(), 6);
        // Flat column 5 (1-based) is the (2, 2) pair.
        let col5 = t.design.column(4);
        let oracle = two.design.column(1).component_mul(&three.design.column(1));
        assert_eq!(col5, oracle.column(0));
        assert_eq!(flatten_index(5, &[2, 3]).unwrap(), vec![2, 2]);
        assert!(tensor_product(
            &two,
            &RawBlock {
                design: DMatrix::zeros(3, 1),
                penalties: vec![]
            }
        )
        .is_err());
    }

    #[test]
    fn tensor_design_matches_double_loop() {
        let x = uniform(80, 4);
        let z: Vec<u32> = (0..80).map(|i| (i % 4) as u32).collect();
        let m1 = Marginal {
            family: MarginalFamily::Cubic,
            size: 5,
        };
        let m2 = Marginal {
            family: MarginalFamily::Categorical,
            size: 3,
        };
        let cx = Column::Numeric(x.clone());
        let cz = Column::Categorical(z.clone());
        let b = build_tensor((&m1, &m2), (None, None), (&cx, &cz)).unwrap();
        assert_eq!(b.columns(), 14);
        let s = Spline::new(
            false,
            *x.iter().min_by(|a, b| a.total_cmp(b)).unwrap(),
            *x.iter().max_by(|a, b| a.total_cmp(b)).unwrap(),
            5,
        )
        .unwrap();
        let bx = s.design(&x);
        let mut raw = DMatrix::zeros(80, 15);
        for i in 0..80 {
            for ia in 0..5 {
                for ib in 0..3 {
                    let ind = if z[i] as usize == ib + 1 { 1.0 } else { 0.0 };
                    raw[(i, ia * 3 + ib)] = bx[(i, ia)] * ind;
                }
            }
        }
        for c in 0..14 {
            let mean = raw.column(c).sum() / 80.0;
            for i in 0..80 {
                assert!((b.design[(i, c)] - (raw[(i, c)] - mean)).abs() <= 1e-12);
            }
        }
        assert_eq!(b.penalties.len(), 1);
        let mut unseen = 0;
        let again = b.evaluator.evaluate(&[&cx, &cz], &mut unseen).unwrap();
        assert!((again - &b.design).amax() <= 1e-12);
    }

    #[test]
    fn lag_stack_shares_one_penalty() {
        let x = uniform(100, 5);
        let lagged = crate::features::lag(&x, 3);
        let spec = BasisSpec::CubicSpline { k: 6 };
        let b = build_effect(
            &spec,
            &[Column::Numeric(x), Column::Numeric(lagged)],
            &[None, None],
            &[None, None],
        )
        .unwrap();
        assert_eq!(b.columns(), 10);
        assert_eq!(b.penalties.len(), 1);
        assert_eq!(b.penalties[0].view((0, 5), (5, 5)).amax(), 0.0);
        let lin = build_effect(
            &BasisSpec::Linear,
            &[
                Column::Numeric(uniform(10, 6)),
                Column::Numeric(uniform(10, 7)),
            ],
            &[None, None],
            &[None, None],
        )
        .unwrap();
        assert_eq!(lin.columns(), 2);
        assert!(lin.penalties.is_empty());
    }

    #[test]
    fn flatten_examples() {
        assert_eq!(flatten_index(4, &[7]).unwrap(), vec![4]);
        assert_eq!(flatten_index(1, &[2, 3]).unwrap(), vec![1, 1]);
        assert_eq!(flatten_index(6, &[2, 3]).unwrap(), vec![2, 3]);
        assert_eq!(flatten_index(24, &[2, 3, 4]).unwrap(), vec![2, 3, 4]);
        assert!(flatten_index(0, &[2, 3]).is_err());
        assert!(flatten_index(7, &[2, 3]).is_err());
    }

    #[test]
    fn literal_remainder_formula_breaks_at_first_index() {
        // i_l = floor((r(i, q_1..q_{l-1}) - 1) / (q_{l+1}..q_m)) + 1 with an
        // empty product of 1 at l = 1 gives r(i, 1) = 0 and an index of 0.
        let dims = [2usize, 3];
        let literal_first = |i: usize| {
            #[allow(clippy::modulo_one)]
            let r = (i % 1) as i64;
            (r - 1).div_euclid(dims[1] as i64) + 1
        };
        for i in 1..=6 {
            assert_eq!(literal_first(i), 0);
            assert!(flatten_index(i, &dims).unwrap()[0] >= 1);
        }
    }

    fn nested_loop(dims: &[usize]) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for &q in dims {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (1..=q).map(move |i| {
                        let mut p = prefix.clone();
                        p.push(i);
                        p
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn flatten_agrees_with_enumeration_up_to_200_cells() {
        fn walk(prefix: &mut Vec<usize>, product: usize, checked: &mut usize) {
            if !prefix.is_empty() {
                let all = nested_loop(prefix);
                for (i, idx) in all.iter().enumerate() {
                    assert_eq!(&flatten_index(i + 1, prefix).unwrap(), idx);
                }
                *checked += 1;
            }
            // Unit factors are covered up to three levels deep; others until the product bound.
            let lo = if prefix.len() < 3 { 1 } else { 2 };
            for q in lo..=200 / product {
                prefix.push(q);
                walk(prefix, product * q, checked);
                prefix.pop();
            }
        }
        let mut checked = 0;
        walk(&mut Vec::new(), 1, &mut checked);
        assert!(checked > 1000);
    }

    proptest! {
        #[test]
        fn penalties_are_psd(q in 3usize..15, cyclic in any::<bool>(), seed in 0u64..1000) {
            let s = Spline::new(cyclic, 0.0, 1.0, q).unwrap().penalty();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..50 {
                let x = DVector::from_fn(q, |_, _| rng.random::<f64>() * 2.0 - 1.0);
                prop_assert!((x.transpose() * &s * &x)[0] >= -1e-10);
            }
            prop_assert!((&s - s.transpose()).amax() == 0.0);
        }

        #[test]
        fn reevaluation_reproduces_training_design(q in 3usize..12, seed in 0u64..1000, cyclic in any::<bool>()) {
            let x = uniform(60, seed);
            let fam = if cyclic { UnivariateFamily::Cyclic { period: None } } else { UnivariateFamily::Cubic };
            let b = build_univariate(fam, q, &x).unwrap();
            let mut unseen = 0;
            let again = b.evaluator.evaluate(&[&Column::Numeric(x)], &mut unseen).unwrap();
            prop_assert!((again - &b.design).amax() <= 1e-12);
        }
    }
}
