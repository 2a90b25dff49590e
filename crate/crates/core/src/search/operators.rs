//! Mutation, crossover and tournament selection.

use std::fmt;

use rand::seq::{index, IndexedRandom};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::generate::{Sampler, RETRY_CAP};
use crate::formula::{
    self, AdaptiveModel, BasisSpec, Effect, EngineeredCovariate, FeatureEngineering,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SiteKind {
    ChangeCovariate,
    ChangeRelationship,
    ChangeEngineering,
    AddEffect,
    DeleteEffect,
    PerturbQ,
}

/// One applied edit, as recorded in the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub kind: SiteKind,
    /// Effect (or `Q` entry) index the edit touched.
    pub index: usize,
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            SiteKind::ChangeCovariate => "change-covariate",
            SiteKind::ChangeRelationship => "change-relationship",
            SiteKind::ChangeEngineering => "change-engineering",
            SiteKind::AddEffect => "add-effect",
            SiteKind::DeleteEffect => "delete-effect",
            SiteKind::PerturbQ => "perturb-q",
        };
        write!(f, "{name}@{}", self.index)
    }
}

/// Standard deviation, in decades, of a `Q` perturbation.
const Q_STEP_DECADES: f64 = 0.5;

impl Sampler<'_> {
    fn valid(&self, model: &AdaptiveModel) -> bool {
        formula::validate(model, self.registry).is_empty()
    }

    fn replace_effect(
        &self,
        model: &AdaptiveModel,
        i: usize,
        effect: Effect,
    ) -> Option<AdaptiveModel> {
        let mut m = model.clone();
        m.formula.effects[i] = effect;
        self.valid(&m).then_some(m)
    }

    fn change_covariate<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        model: &AdaptiveModel,
        i: usize,
    ) -> Option<AdaptiveModel> {
        let effect = &model.formula.effects[i];
        let names: Vec<&str> = self.registry_names();
        let replacement = if effect.is_bivariate() {
            let slot = rng.random_range(0..2);
            let keep = &effect.covariates[1 - slot].name;
            let current = &effect.covariates[slot].name;
            let pick = *names
                .iter()
                .filter(|n| *n != keep && *n != current)
                .collect::<Vec<_>>()
                .choose(rng)?;
            let (a, b) = if slot == 0 {
                (*pick, keep.as_str())
            } else {
                (keep.as_str(), *pick)
            };
            self.bivariate(rng, a, b)?
        } else {
            let current = &effect.covariates[0].name;
            let pick = *names
                .iter()
                .filter(|n| *n != current)
                .collect::<Vec<_>>()
                .choose(rng)?;
            self.univariate(rng, pick)?
        };
        self.replace_effect(model, i, replacement)
    }

    fn registry_names(&self) -> Vec<&str> {
        if self.config.covariates.is_empty() {
            self.registry.names().collect()
        } else {
            self.config.covariates.iter().map(String::as_str).collect()
        }
    }

    fn change_relationship<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        model: &AdaptiveModel,
        i: usize,
    ) -> Option<AdaptiveModel> {
        let effect = &model.formula.effects[i];
        let basis = if effect.is_bivariate() {
            self.tensor_basis(rng, &effect.covariates[0], &effect.covariates[1])?
        } else {
            self.univariate_basis(rng, &effect.covariates[0])?
        };
        if basis == effect.basis {
            return None;
        }
        let mut e = effect.clone();
        e.basis = basis;
        self.replace_effect(model, i, e)
    }

    fn change_engineering<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        model: &AdaptiveModel,
        i: usize,
    ) -> Option<AdaptiveModel> {
        let effect = &model.formula.effects[i];
        let slot = rng.random_range(0..effect.covariates.len());
        let c = &effect.covariates[slot];
        let engineering = match &c.engineering {
            FeatureEngineering::ExpSmooth { .. } if rng.random_bool(0.5) => {
                FeatureEngineering::Identity
            }
            FeatureEngineering::ExpSmooth { .. } => {
                let a = (self.config.alpha_min, self.config.alpha_max);
                FeatureEngineering::ExpSmooth {
                    alpha: if a.0 == a.1 {
                        a.0
                    } else {
                        rng.random_range(a.0..=a.1)
                    },
                }
            }
            _ => {
                // Force an engineering draw, falling back to identity when the
                // covariate has none.
                let mut e = FeatureEngineering::Identity;
                for _ in 0..8 {
                    e = self.engineering(rng, &c.name, !effect.is_bivariate());
                    if e != FeatureEngineering::Identity {
                        break;
                    }
                }
                e
            }
        };
        if engineering == c.engineering {
            return None;
        }
        let mut e = effect.clone();
        e.covariates[slot] = EngineeredCovariate::new(c.name.clone(), engineering);
        if !effect.is_bivariate() {
            // A periodic basis cannot follow a smoothed covariate.
            if matches!(e.basis, BasisSpec::CyclicSpline { .. })
                && matches!(
                    e.covariates[0].engineering,
                    FeatureEngineering::ExpSmooth { .. }
                )
            {
                e.basis = BasisSpec::CubicSpline {
                    k: match e.basis {
                        BasisSpec::CyclicSpline { k } => k,
                        _ => unreachable!(),
                    },
                };
            }
        } else if let BasisSpec::TensorProduct { first, second } = &mut e.basis {
            for (m, cov) in [first, second].into_iter().zip(&e.covariates) {
                if m.family == formula::MarginalFamily::Cyclic
                    && cov.engineering != FeatureEngineering::Identity
                {
                    m.family = formula::MarginalFamily::Cubic;
                }
            }
        }
        self.replace_effect(model, i, e)
    }

    fn add_effect<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        model: &AdaptiveModel,
    ) -> Option<AdaptiveModel> {
        let e = self.effect(rng, &model.formula)?;
        let mut m = model.clone();
        m.formula.effects.push(e);
        if let Some(q) = &mut m.q_diag {
            q.push(self.log_uniform_q(rng));
        }
        self.valid(&m).then_some(m)
    }

    fn delete_effect(&self, model: &AdaptiveModel, i: usize) -> Option<AdaptiveModel> {
        if model.formula.len() < 2 {
            return None;
        }
        let mut m = model.clone();
        m.formula.effects.remove(i);
        if let Some(q) = &mut m.q_diag {
            q.remove(i);
        }
        Some(m)
    }

    fn perturb_q<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        model: &AdaptiveModel,
        i: usize,
    ) -> Option<AdaptiveModel> {
        let mut m = model.clone();
        let q = m.q_diag.as_mut()?;
        let step = Normal::new(0.0, Q_STEP_DECADES)
            .expect("valid sd")
            .sample(rng);
        let v = (q[i] * 10f64.powf(step)).clamp(self.config.q_min, self.config.q_max);
        if v == q[i] {
            return None;
        }
        q[i] = v;
        Some(m)
    }

    fn apply<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        model: &AdaptiveModel,
        kind: SiteKind,
    ) -> Option<(AdaptiveModel, Site)> {
        let k = model.formula.len();
        let i = rng.random_range(0..k);
        let out = match kind {
            SiteKind::ChangeCovariate => self.change_covariate(rng, model, i),
            SiteKind::ChangeRelationship => self.change_relationship(rng, model, i),
            SiteKind::ChangeEngineering => self.change_engineering(rng, model, i),
            SiteKind::AddEffect => {
                return self
                    .add_effect(rng, model)
                    .map(|m| (m, Site { kind, index: k }))
            }
            SiteKind::DeleteEffect => self.delete_effect(model, i),
            SiteKind::PerturbQ => self.perturb_q(rng, model, i),
        };
        out.map(|m| (m, Site { kind, index: i }))
    }

    /// Applies `1 + Binomial(3, 0.2)` edits at distinct site kinds. Falls
    /// back to a fresh model after repeated failures.
    pub fn mutate<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        model: &AdaptiveModel,
    ) -> Result<(AdaptiveModel, Vec<Site>)> {
        let wanted = 1 + Binomial::new(3, 0.2).expect("valid binomial").sample(rng) as usize;
        let mut current = model.clone();
        let mut sites = Vec::new();
        let mut used: Vec<SiteKind> = Vec::new();
        let mut failures = 0;
        while sites.len() < wanted && failures < RETRY_CAP {
            let mut kinds = vec![
                SiteKind::ChangeCovariate,
                SiteKind::ChangeRelationship,
                SiteKind::ChangeEngineering,
                SiteKind::AddEffect,
            ];
            if current.formula.len() > 1 {
                kinds.push(SiteKind::DeleteEffect);
            }
            if current.q_diag.is_some() {
                kinds.push(SiteKind::PerturbQ);
            }
            kinds.retain(|k| !used.contains(k));
            let Some(&kind) = kinds.choose(rng) else {
                break;
            };
            match self.apply(rng, &current, kind) {
                Some((m, site)) => {
                    current = m;
                    used.push(kind);
                    sites.push(site);
                }
                None => failures += 1,
            }
        }
        if sites.is_empty() {
            let fresh = self.model(rng, model.q_diag.is_some())?;
            return Ok((fresh, Vec::new()));
        }
        debug_assert!(self.valid(&current));
        Ok((current, sites))
    }

    /// Pads or truncates `Q` to the formula length.
    fn resync_q<R: Rng + ?Sized>(&self, rng: &mut R, model: &mut AdaptiveModel) {
        let k = model.formula.len();
        if let Some(q) = &mut model.q_diag {
            q.truncate(k);
            while q.len() < k {
                q.push(self.log_uniform_q(rng));
            }
        }
    }

    fn child<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        outer: &AdaptiveModel,
        inner: &AdaptiveModel,
        a: usize,
        b: usize,
    ) -> AdaptiveModel {
        let mut effects: Vec<Effect> = outer.formula.effects[..a].to_vec();
        effects.extend_from_slice(&inner.formula.effects[a..b]);
        effects.extend_from_slice(&outer.formula.effects[b..]);
        let q = outer.q_diag.as_ref().map(|qo| {
            let mut q: Vec<f64> = qo[..a.min(qo.len())].to_vec();
            if let Some(qi) = &inner.q_diag {
                q.extend_from_slice(&qi[a.min(qi.len())..b.min(qi.len())]);
            }
            q.extend_from_slice(&qo[b.min(qo.len())..]);
            q
        });
        let mut child = AdaptiveModel {
            formula: formula::Formula::new(effects),
            q_diag: q,
        };
        // Aligned q entries must be padded before dedup drops positions.
        self.resync_q(rng, &mut child);
        let kept = child.formula.dedup();
        if let Some(q) = &mut child.q_diag {
            *q = kept.iter().map(|&i| q[i]).collect();
        }
        if child.formula.is_empty() {
            let e = outer
                .formula
                .effects
                .choose(rng)
                .expect("non-empty parent")
                .clone();
            child.formula.effects.push(e);
        }
        self.resync_q(rng, &mut child);
        child
    }

    /// Two-point crossover: cuts `a ≤ b` uniform in `[0, min(K¹, K²)]`; the
    /// effects and `Q` entries in `[a, b)` are swapped.
    pub fn crossover<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        first: &AdaptiveModel,
        second: &AdaptiveModel,
    ) -> (AdaptiveModel, AdaptiveModel, (usize, usize)) {
        let m = first.formula.len().min(second.formula.len());
        let x = rng.random_range(0..=m);
        let y = rng.random_range(0..=m);
        let (a, b) = (x.min(y), x.max(y));
        let ab = self.child(rng, first, second, a, b);
        let ba = self.child(rng, second, first, a, b);
        (ab, ba, (a, b))
    }
}

/// Tournament: a uniform `m`-subset of the indices (minus `excluded`),
/// returning the lowest loss, ties to the lowest index.
pub fn tournament_select<R: Rng + ?Sized>(
    losses: &[f64],
    m: usize,
    rng: &mut R,
    excluded: Option<usize>,
) -> Result<usize> {
    let available: Vec<usize> = (0..losses.len()).filter(|i| Some(*i) != excluded).collect();
    if m == 0 || m > available.len() {
        return Err(Error::InvalidParameter(format!(
            "tournament of size {m} over {} candidates",
            available.len()
        )));
    }
    let mut picked: Vec<usize> = index::sample(rng, available.len(), m)
        .into_iter()
        .map(|i| available[i])
        .collect();
    picked.sort_unstable();
    let mut best = picked[0];
    for &i in &picked[1..] {
        if losses[i] < losses[best] {
            best = i;
        }
    }
    Ok(best)
}
