use serde::{Deserialize, Serialize};

use crate::adapt::{DEFAULT_MULTIPLIERS, DEFAULT_Q0, MAX_QIGS_ITERATIONS};
use crate::fit::FitOptions;
use crate::{Error, Result};

/// Univariate relationship families the generator may draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relationship {
    Linear,
    Cubic,
    Cyclic,
}

/// Marginal families for tensor products of two numeric covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TensorFamily {
    Cubic,
    Cyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Evolve formulas in fixed mode, then tune `Q` on the winner.
    EaFThenQigs,
    /// Evolve formula and `Q` together.
    EaFq,
}

impl Variant {
    pub fn kalman(self) -> bool {
        matches!(self, Variant::EaFq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Population size `M`.
    pub population: usize,
    /// Total number of fits `T`.
    pub budget: usize,
    /// Tournament size `m`.
    pub tournament: usize,
    pub p_bivariate: f64,
    /// Maximum number of effects; the number of candidate covariates when absent.
    pub max_effects: Option<usize>,
    pub k_min: usize,
    pub k_max: usize,
    /// Basis-size bounds of each marginal of a two-numeric tensor product.
    pub te_k_min: usize,
    pub te_k_max: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Candidate covariates; every registered covariate when empty.
    pub covariates: Vec<String>,
    pub relationships: Vec<Relationship>,
    pub tensors: Vec<TensorFamily>,
    /// Covariates that may be exponentially smoothed.
    pub smoothable: Vec<String>,
    /// Categorical covariates that may be restricted to a day set.
    pub day_covariates: Vec<String>,
    /// Numeric covariates that may be expanded into lags.
    pub lag_covariates: Vec<String>,
    pub day_sets: Vec<Vec<u32>>,
    pub offset_sets: Vec<Vec<usize>>,
    /// Probability that an eligible covariate receives feature engineering.
    pub p_engineer: f64,
    /// Loss weight of the effective degrees of freedom; derived from the
    /// validation target when absent.
    pub eta: Option<f64>,
    /// Grid-search passes applied to each child's `Q` inside the loop.
    pub qigs_in_loop: usize,
    pub q0: f64,
    pub qigs_iterations: usize,
    pub qigs_multipliers: Vec<f64>,
    pub fit: FitOptions,
    pub seed: u64,
    /// Record wall-clock time in the audit log (breaks byte-identical logs).
    pub record_wall_time: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population: 20,
            budget: 200,
            tournament: 5,
            p_bivariate: 0.2,
            max_effects: None,
            k_min: 4,
            k_max: 15,
            te_k_min: 3,
            te_k_max: 7,
            alpha_min: 0.8,
            alpha_max: 0.999,
            q_min: 1e-8,
            q_max: 1e-1,
            sigma_min: 0.1,
            sigma_max: 1.0,
            covariates: Vec::new(),
            relationships: vec![
                Relationship::Linear,
                Relationship::Cubic,
                Relationship::Cyclic,
            ],
            tensors: vec![TensorFamily::Cubic, TensorFamily::Cyclic],
            smoothable: Vec::new(),
            day_covariates: Vec::new(),
            lag_covariates: Vec::new(),
            day_sets: Vec::new(),
            offset_sets: Vec::new(),
            p_engineer: 0.5,
            eta: None,
            qigs_in_loop: 0,
            q0: DEFAULT_Q0,
            qigs_iterations: MAX_QIGS_ITERATIONS,
            qigs_multipliers: DEFAULT_MULTIPLIERS.to_vec(),
            fit: FitOptions::default(),
            seed: 0,
            record_wall_time: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.population < 2 {
            return bad("population must hold at least 2 models");
        }
        if self.tournament < 1 || self.tournament > self.population - 1 {
            return bad("tournament size must lie in 1..=population-1");
        }
        if self.budget < self.population {
            return bad("budget must be at least the population size");
        }
        if self.max_effects == Some(0) {
            return bad("maximum number of effects must be at least 1");
        }
        if self.k_min < 3 || self.k_min > self.k_max {
            return bad("spline sizes must satisfy 3 <= k_min <= k_max");
        }
        if self.te_k_min < 3 || self.te_k_min > self.te_k_max {
            return bad("tensor sizes must satisfy 3 <= te_k_min <= te_k_max");
        }
        if !(0.0..=1.0).contains(&self.alpha_min)
            || !(0.0..=1.0).contains(&self.alpha_max)
            || self.alpha_min > self.alpha_max
        {
            return bad("smoothing bounds must be ordered inside [0, 1]");
        }
        if !(self.q_min > 0.0) || !(self.q_min <= self.q_max) || !self.q_max.is_finite() {
            return bad("Q bounds must satisfy 0 < q_min <= q_max");
        }
        if !(self.sigma_min <= self.sigma_max) {
            return bad("sigma bounds must be ordered");
        }
        if !(0.0..=1.0).contains(&self.p_bivariate) || !(0.0..=1.0).contains(&self.p_engineer) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.relationships.is_empty() {
            return bad("at least one univariate relationship is required");
        }
        if let Some(eta) = self.eta {
            if !(eta >= 0.0) || !eta.is_finite() {
                return bad("eta must be finite and non-negative");
            }
        }
        if !(self.q0 > 0.0) || self.qigs_iterations == 0 || self.qigs_multipliers.is_empty() {
            return bad("grid search needs q0 > 0, at least one iteration and one multiplier");
        }
        if self.day_sets.iter().any(Vec::is_empty) || self.offset_sets.iter().any(Vec::is_empty) {
            return bad("day and offset sets must be non-empty");
        }
        Ok(())
    }
}
