//! Random generation of effects and models.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::config::{Relationship, SearchConfig, TensorFamily};
use crate::formula::{
    AdaptiveModel, BasisSpec, CovariateKind, CovariateRegistry, Effect, EngineeredCovariate,
    FeatureEngineering, Formula, Marginal, MarginalFamily,
};
use crate::{Error, Result};

/// Attempts per effect before the generator gives up on it.
pub const RETRY_CAP: usize = 100;

/// Draws effects over the candidate covariates of a registry.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    pub config: &'a SearchConfig,
    pub registry: &'a CovariateRegistry,
    candidates: Vec<(String, CovariateKind)>,
}

impl<'a> Sampler<'a> {
    pub fn new(config: &'a SearchConfig, registry: &'a CovariateRegistry) -> Result<Self> {
        let candidates: Vec<(String, CovariateKind)> = if config.covariates.is_empty() {
            registry
                .iter()
                .map(|(n, k)| (n.to_string(), k.clone()))
                .collect()
        } else {
            config
                .covariates
                .iter()
                .map(|n| {
                    registry
                        .kind(n)
                        .map(|k| (n.clone(), k.clone()))
                        .ok_or_else(|| Error::MissingCovariate(n.clone()))
                })
                .collect::<Result<_>>()?
        };
        if candidates.is_empty() {
            return Err(Error::InvalidParameter("no candidate covariates".into()));
        }
        Ok(Sampler {
            config,
            registry,
            candidates,
        })
    }

    pub fn max_effects(&self) -> usize {
        self.config.max_effects.unwrap_or(self.candidates.len())
    }

    pub fn log_uniform_q<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = (self.config.q_min.log10(), self.config.q_max.log10());
        if lo == hi {
            return self.config.q_min;
        }
        10f64.powf(rng.random_range(lo..=hi))
    }

    fn kind(&self, name: &str) -> &CovariateKind {
        self.registry
            .kind(name)
            .expect("candidate covariates are registered")
    }

    fn size<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(self.config.k_min..=self.config.k_max)
    }

    fn te_size<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(self.config.te_k_min..=self.config.te_k_max)
    }

    /// Feature engineering for one covariate, or identity.
    pub fn engineering<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        name: &str,
        univariate: bool,
    ) -> FeatureEngineering {
        let c = self.config;
        let kind = self.kind(name);
        let listed = |l: &[String]| l.iter().any(|n| n == name);
        let mut options: Vec<u8> = Vec::new();
        if matches!(kind, CovariateKind::Numeric) && listed(&c.smoothable) {
            options.push(0);
        }
        if let CovariateKind::Categorical { levels } = kind {
            if listed(&c.day_covariates) && self.day_sets(*levels).next().is_some() {
                options.push(1);
            }
        }
        if univariate
            && !kind.is_categorical()
            && listed(&c.lag_covariates)
            && !c.offset_sets.is_empty()
        {
            options.push(2);
        }
        if options.is_empty() || !rng.random_bool(c.p_engineer) {
            return FeatureEngineering::Identity;
        }
        match *options.choose(rng).expect("non-empty") {
            0 => FeatureEngineering::ExpSmooth {
                alpha: if c.alpha_min == c.alpha_max {
                    c.alpha_min
                } else {
                    rng.random_range(c.alpha_min..=c.alpha_max)
                },
            },
            1 => {
                let levels = kind.levels().expect("categorical");
                let sets: Vec<&Vec<u32>> = self.day_sets(levels).collect();
                FeatureEngineering::DaySet {
                    days: sets.choose(rng).expect("non-empty").to_vec(),
                }
            }
            _ => FeatureEngineering::LagSet {
                offsets: c.offset_sets.choose(rng).expect("non-empty").clone(),
            },
        }
    }

    fn day_sets(&self, levels: usize) -> impl Iterator<Item = &Vec<u32>> {
        self.config
            .day_sets
            .iter()
            .filter(move |s| s.iter().all(|&d| d >= 1 && d as usize <= levels))
    }

    /// Basis for a univariate effect on an engineered covariate.
    pub fn univariate_basis<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        covariate: &EngineeredCovariate,
    ) -> Option<BasisSpec> {
        let kind = self.kind(&covariate.name);
        if kind.is_categorical() {
            return Some(BasisSpec::Categorical);
        }
        let cyclic_ok = matches!(kind, CovariateKind::Cyclic { .. })
            && matches!(
                covariate.engineering,
                FeatureEngineering::Identity | FeatureEngineering::LagSet { .. }
            );
        let allowed: Vec<Relationship> = self
            .config
            .relationships
            .iter()
            .copied()
            .filter(|r| *r != Relationship::Cyclic || cyclic_ok)
            .collect();
        Some(match allowed.choose(rng)? {
            Relationship::Linear => BasisSpec::Linear,
            Relationship::Cubic => BasisSpec::CubicSpline { k: self.size(rng) },
            Relationship::Cyclic => BasisSpec::CyclicSpline { k: self.size(rng) },
        })
    }

    fn marginal<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        covariate: &EngineeredCovariate,
        other_categorical: bool,
    ) -> Option<Marginal> {
        let kind = self.kind(&covariate.name);
        if let Some(levels) = kind.levels() {
            return Some(Marginal {
                family: MarginalFamily::Categorical,
                size: levels,
            });
        }
        let cyclic_ok = matches!(kind, CovariateKind::Cyclic { .. })
            && covariate.engineering == FeatureEngineering::Identity;
        if other_categorical {
            // Smooth-by-factor: the numeric side uses a univariate family.
            let families: Vec<MarginalFamily> = self
                .config
                .relationships
                .iter()
                .filter_map(|r| match r {
                    Relationship::Cubic => Some(MarginalFamily::Cubic),
                    Relationship::Cyclic if cyclic_ok => Some(MarginalFamily::Cyclic),
                    _ => None,
                })
                .collect();
            let family = *families.choose(rng).unwrap_or(&MarginalFamily::Cubic);
            return Some(Marginal {
                family,
                size: self.size(rng),
            });
        }
        let families: Vec<MarginalFamily> = self
            .config
            .tensors
            .iter()
            .filter_map(|f| match f {
                TensorFamily::Cubic => Some(MarginalFamily::Cubic),
                TensorFamily::Cyclic if cyclic_ok => Some(MarginalFamily::Cyclic),
                _ => None,
            })
            .collect();
        Some(Marginal {
            family: *families.choose(rng)?,
            size: self.te_size(rng),
        })
    }

    /// Tensor basis for a two-covariate effect.
    pub fn tensor_basis<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        a: &EngineeredCovariate,
        b: &EngineeredCovariate,
    ) -> Option<BasisSpec> {
        let cat_a = self.kind(&a.name).is_categorical();
        let cat_b = self.kind(&b.name).is_categorical();
        Some(BasisSpec::TensorProduct {
            first: self.marginal(rng, a, cat_b)?,
            second: self.marginal(rng, b, cat_a)?,
        })
    }

    pub fn univariate<R: Rng + ?Sized>(&self, rng: &mut R, name: &str) -> Option<Effect> {
        let covariate = EngineeredCovariate::new(name, self.engineering(rng, name, true));
        let basis = self.univariate_basis(rng, &covariate)?;
        Some(Effect::univariate(covariate, basis))
    }

    pub fn bivariate<R: Rng + ?Sized>(&self, rng: &mut R, a: &str, b: &str) -> Option<Effect> {
        if a == b || (self.kind(a).is_categorical() && self.kind(b).is_categorical()) {
            return None;
        }
        let ca = EngineeredCovariate::new(a, self.engineering(rng, a, false));
        let cb = EngineeredCovariate::new(b, self.engineering(rng, b, false));
        let basis = self.tensor_basis(rng, &ca, &cb)?;
        Some(Effect {
            covariates: vec![ca, cb],
            basis,
        })
    }

    fn candidate<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        &self.candidates.choose(rng).expect("non-empty").0
    }

    /// A fresh effect whose signature is absent from `existing`.
    pub fn effect<R: Rng + ?Sized>(&self, rng: &mut R, existing: &Formula) -> Option<Effect> {
        for _ in 0..RETRY_CAP {
            let effect = if self.candidates.len() > 1 && rng.random_bool(self.config.p_bivariate) {
                let a = self.candidate(rng).to_string();
                let b = self.candidate(rng).to_string();
                self.bivariate(rng, &a, &b)
            } else {
                let a = self.candidate(rng).to_string();
                self.univariate(rng, &a)
            };
            if let Some(e) = effect {
                if !existing.contains_signature(&e.signature()) {
                    return Some(e);
                }
            }
        }
        None
    }

    /// Draws a model: `K` uniform in `1..=K_max`, effects one by one (stopping
    /// early when no new signature can be found), then `Q` when `kalman`.
    pub fn model<R: Rng + ?Sized>(&self, rng: &mut R, kalman: bool) -> Result<AdaptiveModel> {
        let k = rng.random_range(1..=self.max_effects());
        let mut q = Vec::new();
        if kalman {
            // Drawn for parity with the sampling procedure; only Q is kept.
            let _sigma: f64 = if self.config.sigma_min < self.config.sigma_max {
                rng.random_range(self.config.sigma_min..self.config.sigma_max)
            } else {
                self.config.sigma_min
            };
            q = (0..k).map(|_| self.log_uniform_q(rng)).collect();
        }
        let mut formula = Formula::default();
        for _ in 0..k {
            match self.effect(rng, &formula) {
                Some(e) => formula.effects.push(e),
                None => break,
            }
        }
        if formula.is_empty() {
            return Err(Error::InvalidParameter(
                "could not generate any effect from the covariate registry".into(),
            ));
        }
        Ok(if kalman {
            q.truncate(formula.len());
            AdaptiveModel::adaptive(formula, q)
        } else {
            AdaptiveModel::fixed(formula)
        })
    }
}

/// Draws one random model.
pub fn generate_model<R: Rng + ?Sized>(
    config: &SearchConfig,
    registry: &CovariateRegistry,
    kalman: bool,
    rng: &mut R,
) -> Result<AdaptiveModel> {
    Sampler::new(config, registry)?.model(rng, kalman)
}
