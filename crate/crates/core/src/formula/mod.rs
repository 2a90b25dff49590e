//! GAM formulae and adaptive models: the genome explored by the search.
//!
//! A [`Formula`] is an ordered list of [`Effect`]s; the global intercept is
//! implicit. An [`AdaptiveModel`] pairs a formula with the optional diagonal
//! of the normalized state-noise matrix `Q` (absent means the fixed model,
//! whose effect weights stay at one).

mod dsl;

use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use dsl::ParseError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CovariateKind {
    Numeric,
    /// Numeric with a known period; the cyclic basis wraps over `[0, period]`.
    Cyclic {
        period: f64,
    },
    /// Codes `1..=levels`, with `0` reserved for the default modality.
    Categorical {
        levels: usize,
    },
}

impl CovariateKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, CovariateKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<usize> {
        match self {
            CovariateKind::Categorical { levels } => Some(*levels),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
}

/// Name-indexed covariate schema. Names are unique.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Covariate>", into = "Vec<Covariate>")]
pub struct CovariateRegistry {
    kinds: IndexMap<String, CovariateKind>,
}

impl CovariateRegistry {
    pub fn new(covariates: impl IntoIterator<Item = Covariate>) -> Result<Self> {
        let mut registry = CovariateRegistry::default();
        for c in covariates {
            registry.insert(c)?;
        }
        Ok(registry)
    }

    pub fn insert(&mut self, covariate: Covariate) -> Result<()> {
        match &covariate.kind {
            CovariateKind::Categorical { levels } if *levels < 2 => {
                return Err(Error::InvalidParameter(format!(
                    "categorical covariate `{}` needs at least 2 modalities",
                    covariate.name
                )))
            }
            CovariateKind::Cyclic { period } if !(*period > 0.0 && period.is_finite()) => {
                return Err(Error::InvalidParameter(format!(
                    "cyclic covariate `{}` needs a positive period",
                    covariate.name
                )))
            }
            _ => {}
        }
        if self.kinds.contains_key(&covariate.name) {
            return Err(Error::InvalidParameter(format!(
                "duplicate covariate name `{}`",
                covariate.name
            )));
        }
        self.kinds.insert(covariate.name, covariate.kind);
        Ok(())
    }

    pub fn kind(&self, name: &str) -> Option<&CovariateKind> {
        self.kinds.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.kinds.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &CovariateKind)> {
        self.kinds.iter().map(|(n, k)| (n.as_str(), k))
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }
}

impl TryFrom<Vec<Covariate>> for CovariateRegistry {
    type Error = Error;

    fn try_from(v: Vec<Covariate>) -> Result<Self> {
        CovariateRegistry::new(v)
    }
}

impl From<CovariateRegistry> for Vec<Covariate> {
    fn from(r: CovariateRegistry) -> Self {
        r.kinds
            .into_iter()
            .map(|(name, kind)| Covariate { name, kind })
            .collect()
    }
}

/// Parameterized feature-engineering function applied to one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum FeatureEngineering {
    Identity,
    ExpSmooth {
        alpha: f64,
    },
    /// One flag per modality `1..=m`; unselected modalities collapse to 0.
    CategorySelect {
        select: Vec<bool>,
    },
    /// One engineered column per offset (in time steps).
    LagSet {
        offsets: Vec<usize>,
    },
    /// Keeps the listed modality codes; every other code collapses to 0.
    DaySet {
        days: Vec<u32>,
    },
}

impl FeatureEngineering {
    fn signature_suffix(&self) -> Option<String> {
        match self {
            FeatureEngineering::Identity => None,
            FeatureEngineering::ExpSmooth { alpha } => Some(format!("ema={alpha}")),
            FeatureEngineering::CategorySelect { select } => Some(format!(
                "select={}",
                select
                    .iter()
                    .map(|&b| if b { '1' } else { '0' })
                    .collect::<String>()
            )),
            FeatureEngineering::LagSet { offsets } => {
                let mut o = offsets.clone();
                o.sort_unstable();
                Some(format!("lag={}", join(&o)))
            }
            FeatureEngineering::DaySet { days } => {
                let mut d = days.clone();
                d.sort_unstable();
                Some(format!("days={}", join(&d)))
            }
        }
    }

    /// Whether the engineered value is categorical given the source kind.
    pub fn yields_categorical(&self, source: &CovariateKind) -> bool {
        source.is_categorical()
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// A covariate reference together with its engineering function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineeredCovariate {
    pub name: String,
    pub engineering: FeatureEngineering,
}

impl EngineeredCovariate {
    pub fn identity(name: impl Into<String>) -> Self {
        EngineeredCovariate {
            name: name.into(),
            engineering: FeatureEngineering::Identity,
        }
    }

    pub fn new(name: impl Into<String>, engineering: FeatureEngineering) -> Self {
        EngineeredCovariate {
            name: name.into(),
            engineering,
        }
    }

    pub fn signature(&self) -> String {
        match self.engineering.signature_suffix() {
            Some(s) => format!("{}|{}", self.name, s),
            None => self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginalFamily {
    Cubic,
    Cyclic,
    Categorical,
}

/// One factor of a tensor-product basis. `size` is the modality count for a
/// categorical marginal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marginal {
    pub family: MarginalFamily,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum BasisSpec {
    Linear,
    CubicSpline {
        k: usize,
    },
    CyclicSpline {
        k: usize,
    },
    /// Indicator basis; its size is the covariate's modality count.
    Categorical,
    TensorProduct {
        first: Marginal,
        second: Marginal,
    },
}

impl BasisSpec {
    pub fn is_tensor(&self) -> bool {
        matches!(self, BasisSpec::TensorProduct { .. })
    }
}

/// One additive term: one or two engineered covariates and a basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub covariates: Vec<EngineeredCovariate>,
    pub basis: BasisSpec,
}

impl Effect {
    pub fn univariate(covariate: EngineeredCovariate, basis: BasisSpec) -> Self {
        Effect {
            covariates: vec![covariate],
            basis,
        }
    }

    pub fn linear(name: &str) -> Self {
        Effect::univariate(EngineeredCovariate::identity(name), BasisSpec::Linear)
    }

    pub fn spline(name: &str, k: usize) -> Self {
        Effect::univariate(
            EngineeredCovariate::identity(name),
            BasisSpec::CubicSpline { k },
        )
    }

    pub fn cyclic(name: &str, k: usize) -> Self {
        Effect::univariate(
            EngineeredCovariate::identity(name),
            BasisSpec::CyclicSpline { k },
        )
    }

    pub fn categorical(name: &str) -> Self {
        Effect::univariate(EngineeredCovariate::identity(name), BasisSpec::Categorical)
    }

    pub fn smoothed(name: &str, alpha: f64, basis: BasisSpec) -> Self {
        Effect::univariate(
            EngineeredCovariate::new(name, FeatureEngineering::ExpSmooth { alpha }),
            basis,
        )
    }

    pub fn tensor(
        first: EngineeredCovariate,
        second: EngineeredCovariate,
        marginals: (Marginal, Marginal),
    ) -> Self {
        Effect {
            covariates: vec![first, second],
            basis: BasisSpec::TensorProduct {
                first: marginals.0,
                second: marginals.1,
            },
        }
    }

    pub fn is_bivariate(&self) -> bool {
        self.covariates.len() == 2
    }

    /// Identity of the engineered covariate tuple, ignoring the basis.
    pub fn signature(&self) -> String {
        canonical_signature(self)
    }
}

/// Signature used for deduplication: sorted engineered-covariate identities.
/// The basis family and size do not take part.
pub fn canonical_signature(effect: &Effect) -> String {
    let mut parts: Vec<String> = effect
        .covariates
        .iter()
        .map(EngineeredCovariate::signature)
        .collect();
    parts.sort();
    parts.join(" & ")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Formula {
    pub effects: Vec<Effect>,
}

impl Formula {
    pub fn new(effects: Vec<Effect>) -> Self {
        Formula { effects }
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn contains_signature(&self, signature: &str) -> bool {
        self.effects.iter().any(|e| e.signature() == signature)
    }

    /// Keeps the first occurrence of each signature; returns the kept indices.
    pub fn dedup(&mut self) -> Vec<usize> {
        let mut seen = std::collections::HashSet::new();
        let mut kept = Vec::new();
        let mut effects = Vec::with_capacity(self.effects.len());
        for (i, e) in std::mem::take(&mut self.effects).into_iter().enumerate() {
            if seen.insert(e.signature()) {
                kept.push(i);
                effects.push(e);
            }
        }
        self.effects = effects;
        kept
    }

    pub fn to_dsl(&self) -> String {
        dsl::write_formula(self)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_dsl())
    }
}

/// A formula plus the diagonal of `Q`; `q_diag = None` is the fixed model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveModel {
    pub formula: Formula,
    pub q_diag: Option<Vec<f64>>,
}

impl AdaptiveModel {
    pub fn fixed(formula: Formula) -> Self {
        AdaptiveModel {
            formula,
            q_diag: None,
        }
    }

    pub fn adaptive(formula: Formula, q_diag: Vec<f64>) -> Self {
        AdaptiveModel {
            formula,
            q_diag: Some(q_diag),
        }
    }

    pub fn is_adaptive(&self) -> bool {
        self.q_diag.is_some()
    }

    /// Text form: the formula DSL, with `| Q=[...]` when adaptive.
    pub fn serialize(&self) -> String {
        dsl::write_model(self)
    }

    pub fn deserialize(text: &str) -> std::result::Result<Self, ParseError> {
        dsl::parse_model(text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self, registry: &CovariateRegistry) -> Vec<Violation> {
        validate(self, registry)
    }
}

impl fmt::Display for AdaptiveModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

impl std::str::FromStr for AdaptiveModel {
    type Err = ParseError;

    fn from_str(s: &str) -> std::result::Result<Self, ParseError> {
        dsl::parse_model(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    EmptyFormula,
    DuplicateSignature(Vec<usize>),
    QDimension { expected: usize, found: usize },
    QEntry { index: usize, value: f64 },
    UnknownCovariate(String),
    Arity(usize),
    RepeatedCovariate(String),
    TwoCategorical,
    Engineering(String),
    Basis(String),
}

/// A broken invariant, with the offending effect index when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub effect: Option<usize>,
    pub kind: ViolationKind,
}

impl Violation {
    fn at(effect: usize, kind: ViolationKind) -> Self {
        Violation {
            effect: Some(effect),
            kind,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::EmptyFormula => write!(f, "K ≥ 1: formula has no effect"),
            ViolationKind::DuplicateSignature(idx) => {
                write!(f, "duplicate signature at indices {}", join(idx))
            }
            ViolationKind::QDimension { expected, found } => write!(
                f,
                "Q dimension: expected {expected} diagonal entries, found {found}"
            ),
            ViolationKind::QEntry { index, value } => {
                write!(f, "Q entry {index} must be finite and ≥ 0, got {value}")
            }
            other => {
                if let Some(k) = self.effect {
                    write!(f, "effect {k}: ")?;
                }
                match other {
                    ViolationKind::UnknownCovariate(n) => write!(f, "unknown covariate `{n}`"),
                    ViolationKind::Arity(n) => write!(f, "{n} covariates (expected 1 or 2)"),
                    ViolationKind::RepeatedCovariate(n) => {
                        write!(f, "covariate `{n}` used twice in one effect")
                    }
                    ViolationKind::TwoCategorical => {
                        write!(f, "bi-variate effect on two categorical covariates")
                    }
                    ViolationKind::Engineering(m) | ViolationKind::Basis(m) => f.write_str(m),
                    _ => unreachable!(),
                }
            }
        }
    }
}

/// Checks every model invariant against the registry. Pure: the same input
/// always yields the same list, in effect order.
pub fn validate(model: &AdaptiveModel, registry: &CovariateRegistry) -> Vec<Violation> {
    let mut out = Vec::new();
    let effects = &model.formula.effects;
    if effects.is_empty() {
        out.push(Violation {
            effect: None,
            kind: ViolationKind::EmptyFormula,
        });
    }
    for (i, effect) in effects.iter().enumerate() {
        validate_effect(i, effect, registry, &mut out);
    }

    let mut groups: IndexMap<String, Vec<usize>> = IndexMap::new();
    for (i, e) in effects.iter().enumerate() {
        groups.entry(e.signature()).or_default().push(i);
    }
    for (_, idx) in groups {
        if idx.len() > 1 {
            out.push(Violation {
                effect: Some(idx[0]),
                kind: ViolationKind::DuplicateSignature(idx),
            });
        }
    }

    if let Some(q) = &model.q_diag {
        if q.len() != effects.len() {
            out.push(Violation {
                effect: None,
                kind: ViolationKind::QDimension {
                    expected: effects.len(),
                    found: q.len(),
                },
            });
        }
        for (index, &value) in q.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                out.push(Violation {
                    effect: None,
                    kind: ViolationKind::QEntry { index, value },
                });
            }
        }
    }
    out
}

fn validate_effect(
    i: usize,
    effect: &Effect,
    registry: &CovariateRegistry,
    out: &mut Vec<Violation>,
) {
    let n = effect.covariates.len();
    if !(1..=2).contains(&n) {
        out.push(Violation::at(i, ViolationKind::Arity(n)));
        return;
    }
    let mut kinds = Vec::with_capacity(n);
    for c in &effect.covariates {
        match registry.kind(&c.name) {
            Some(k) => kinds.push(k),
            None => {
                out.push(Violation::at(
                    i,
                    ViolationKind::UnknownCovariate(c.name.clone()),
                ));
                return;
            }
        }
    }
    for (c, kind) in effect.covariates.iter().zip(&kinds) {
        if let Some(msg) = engineering_problem(c, kind) {
            out.push(Violation::at(i, ViolationKind::Engineering(msg)));
        }
    }

    let basis = |m: String| Violation::at(i, ViolationKind::Basis(m));
    if n == 2 {
        if effect.covariates[0].name == effect.covariates[1].name {
            out.push(Violation::at(
                i,
                ViolationKind::RepeatedCovariate(effect.covariates[0].name.clone()),
            ));
        }
        if kinds[0].is_categorical() && kinds[1].is_categorical() {
            out.push(Violation::at(i, ViolationKind::TwoCategorical));
        }
        for c in &effect.covariates {
            if matches!(c.engineering, FeatureEngineering::LagSet { .. }) {
                out.push(Violation::at(
                    i,
                    ViolationKind::Engineering(format!(
                        "lag-set on `{}` is only allowed in univariate effects",
                        c.name
                    )),
                ));
            }
        }
        match &effect.basis {
            BasisSpec::TensorProduct { first, second } => {
                for ((m, c), kind) in [first, second].iter().zip(&effect.covariates).zip(&kinds) {
                    if let Some(msg) = marginal_problem(m, c, kind) {
                        out.push(basis(msg));
                    }
                }
            }
            _ => out.push(basis(
                "bi-variate effect requires a tensor-product basis".to_string(),
            )),
        }
        return;
    }

    let c = &effect.covariates[0];
    let kind = kinds[0];
    let categorical = kind.is_categorical();
    match &effect.basis {
        BasisSpec::TensorProduct { .. } => out.push(basis(
            "tensor-product basis requires two covariates".to_string(),
        )),
        BasisSpec::Categorical if !categorical => out.push(basis(format!(
            "indicator basis on numeric covariate `{}`",
            c.name
        ))),
        BasisSpec::Linear | BasisSpec::CubicSpline { .. } | BasisSpec::CyclicSpline { .. }
            if categorical =>
        {
            out.push(basis(format!(
                "categorical covariate `{}` requires the indicator basis",
                c.name
            )))
        }
        BasisSpec::CubicSpline { k } | BasisSpec::CyclicSpline { k } if *k < 3 => {
            out.push(basis(format!("spline basis size {k} < 3")))
        }
        BasisSpec::CyclicSpline { .. } => {
            let cyclic_source = matches!(kind, CovariateKind::Cyclic { .. });
            let periodic_value = matches!(
                c.engineering,
                FeatureEngineering::Identity | FeatureEngineering::LagSet { .. }
            );
            if !(cyclic_source && periodic_value) {
                out.push(basis(format!(
                    "cyclic basis needs a cyclic covariate without smoothing (`{}`)",
                    c.name
                )));
            }
        }
        _ => {}
    }
}

fn marginal_problem(m: &Marginal, c: &EngineeredCovariate, kind: &CovariateKind) -> Option<String> {
    match (m.family, kind) {
        (MarginalFamily::Categorical, CovariateKind::Categorical { levels }) => (m.size != *levels)
            .then(|| {
                format!(
                    "categorical marginal `{}` has size {} but {} modalities",
                    c.name, m.size, levels
                )
            }),
        (MarginalFamily::Categorical, _) => Some(format!(
            "categorical marginal on numeric covariate `{}`",
            c.name
        )),
        (_, CovariateKind::Categorical { .. }) => Some(format!(
            "categorical covariate `{}` requires a categorical marginal",
            c.name
        )),
        (MarginalFamily::Cyclic, k)
            if !matches!(k, CovariateKind::Cyclic { .. })
                || !matches!(c.engineering, FeatureEngineering::Identity) =>
        {
            Some(format!(
                "cyclic marginal needs a cyclic covariate without smoothing (`{}`)",
                c.name
            ))
        }
        _ if m.size < 3 => Some(format!(
            "spline marginal `{}` has size {} < 3",
            c.name, m.size
        )),
        _ => None,
    }
}

fn engineering_problem(c: &EngineeredCovariate, kind: &CovariateKind) -> Option<String> {
    let name = &c.name;
    match (&c.engineering, kind) {
        (FeatureEngineering::Identity, _) => None,
        (FeatureEngineering::ExpSmooth { alpha }, CovariateKind::Numeric) => (!(0.0..=1.0)
            .contains(alpha))
        .then(|| format!("alpha {alpha} outside [0,1] on `{name}`")),
        (FeatureEngineering::ExpSmooth { .. }, _) => Some(format!(
            "exponential smoothing needs a plain numeric covariate (`{name}`)"
        )),
        (FeatureEngineering::LagSet { offsets }, k) if !k.is_categorical() => {
            let mut sorted = offsets.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if offsets.is_empty() {
                Some(format!("empty lag offsets on `{name}`"))
            } else if sorted.len() != offsets.len() {
                Some(format!("duplicate lag offsets on `{name}`"))
            } else {
                None
            }
        }
        (FeatureEngineering::LagSet { .. }, _) => {
            Some(format!("lag-set needs a numeric covariate (`{name}`)"))
        }
        (FeatureEngineering::CategorySelect { select }, CovariateKind::Categorical { levels }) => {
            if select.len() != *levels {
                Some(format!(
                    "selection vector of length {} for {} modalities of `{name}`",
                    select.len(),
                    levels
                ))
            } else if !select.iter().any(|&b| b) {
                Some(format!("selection vector on `{name}` selects nothing"))
            } else {
                None
            }
        }
        (FeatureEngineering::DaySet { days }, CovariateKind::Categorical { levels }) => {
            let mut seen = HashMap::new();
            if days.is_empty() {
                Some(format!("empty day set on `{name}`"))
            } else if days.iter().any(|&d| d == 0 || d as usize > *levels) {
                Some(format!("day code outside 1..={levels} on `{name}`"))
            } else if days.iter().any(|d| seen.insert(*d, ()).is_some()) {
                Some(format!("duplicate day code on `{name}`"))
            } else {
                None
            }
        }
        (FeatureEngineering::CategorySelect { .. } | FeatureEngineering::DaySet { .. }, _) => Some(
            format!("category selection needs a categorical covariate (`{name}`)"),
        ),
    }
}

/// Returns `Err(Error::InvalidModel)` listing every violation, if any.
pub fn ensure_valid(model: &AdaptiveModel, registry: &CovariateRegistry) -> Result<()> {
    let v = validate(model, registry);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidModel(v))
    }
}
