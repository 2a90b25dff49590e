use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{SearchConfig, Variant};
use super::evaluate::{default_eta, EvaluatedModel, Evaluation, Lineage};
use super::generate::Sampler;
use super::operators::tournament_select;
use crate::adapt::{kalman_forecast, q_igs, QigsResult};
use crate::data::{rmse, DataView};
use crate::formula::{AdaptiveModel, Formula};
use crate::{Error, Result};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed for one (iteration, slot) of a run.
pub fn sub_seed(seed: u64, iteration: usize, slot: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ iteration as u64) ^ slot as u64)
}

fn rng_at(seed: u64, iteration: usize, slot: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, iteration, slot))
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// One evaluated candidate. Non-finite numbers are written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub iteration: usize,
    pub slot: usize,
    pub parents: Vec<usize>,
    pub operators: Vec<String>,
    pub model: String,
    pub loss: Option<f64>,
    pub rmse: Option<f64>,
    pub edf: Option<f64>,
    pub error: Option<String>,
    /// Population index this candidate took over, if any.
    pub replaced: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

impl AuditRecord {
    fn new(iteration: usize, slot: usize, e: &EvaluatedModel, wall_ms: Option<f64>) -> Self {
        AuditRecord {
            iteration,
            slot,
            parents: e.lineage.parents.clone(),
            operators: e.lineage.operators.clone(),
            model: e.model.serialize(),
            loss: finite(e.loss),
            rmse: finite(e.rmse_valid),
            edf: finite(e.edf),
            error: e.error.clone(),
            replaced: None,
            wall_ms,
        }
    }
}

/// Writes one JSON object per line.
pub fn write_audit<W: Write>(records: &[AuditRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Best population member by loss.
    pub best: EvaluatedModel,
    /// The best formula with its final `Q` (tuned afterwards for
    /// [`Variant::EaFThenQigs`]).
    pub model: AdaptiveModel,
    pub qigs: Option<QigsResult>,
    /// Validation RMSE of `model` in its final mode.
    pub final_rmse_valid: f64,
    pub eta: f64,
    pub audit: Vec<AuditRecord>,
    /// Best loss after initialization and after each iteration.
    pub best_losses: Vec<f64>,
}

fn argmin(losses: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, l) in losses.into_iter().enumerate() {
        if i == 0 || l < best.1 {
            best = (i, l);
        }
    }
    best.0
}

fn argmax(losses: &[f64]) -> usize {
    let mut worst = 0;
    for (i, &l) in losses.iter().enumerate() {
        if l > losses[worst] {
            worst = i;
        }
    }
    worst
}

struct Run<'a> {
    config: &'a SearchConfig,
    eval: Evaluation<'a>,
    sampler: Sampler<'a>,
}

impl<'a> Run<'a> {
    fn new(
        config: &'a SearchConfig,
        train: &'a DataView,
        valid: &'a DataView,
        refine: usize,
    ) -> Result<Self> {
        config.validate()?;
        if train.registry() != valid.registry() {
            return Err(Error::Data(
                "training and validation data disagree on covariates".into(),
            ));
        }
        let eta = config.eta.unwrap_or_else(|| default_eta(valid));
        Ok(Run {
            config,
            eval: Evaluation {
                train,
                valid,
                eta,
                fit: config.fit,
                refine,
                multipliers: config.qigs_multipliers.clone(),
            },
            sampler: Sampler::new(config, train.registry())?,
        })
    }

    fn evaluate(&self, model: &AdaptiveModel, lineage: Lineage) -> (EvaluatedModel, Option<f64>) {
        let start = Instant::now();
        let e = self.eval.evaluate(model, lineage);
        let wall = self
            .config
            .record_wall_time
            .then(|| start.elapsed().as_secs_f64() * 1e3);
        (e, wall)
    }

    fn evaluate_all(
        &self,
        models: Vec<(AdaptiveModel, Lineage)>,
    ) -> Vec<(EvaluatedModel, Option<f64>)> {
        models
            .into_par_iter()
            .map(|(m, l)| self.evaluate(&m, l))
            .collect()
    }
}

/// Replaces one random member of `population` with `preset` (given the
/// default `Q` when the population is adaptive).
pub fn seed_population_with<R: Rng + ?Sized>(
    preset: &Formula,
    population: &mut [(AdaptiveModel, Lineage)],
    q0: f64,
    rng: &mut R,
) -> Result<usize> {
    if population.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot seed an empty population".into(),
        ));
    }
    let i = rng.random_range(0..population.len());
    let adaptive = population[i].0.q_diag.is_some();
    let model = if adaptive {
        AdaptiveModel::adaptive(preset.clone(), vec![q0; preset.len()])
    } else {
        AdaptiveModel::fixed(preset.clone())
    };
    population[i] = (
        model,
        Lineage {
            parents: Vec::new(),
            operators: vec!["preset".into()],
        },
    );
    Ok(i)
}

/// Steady-state evolution (see [`Variant`]). Exactly `T` candidates are
/// evaluated: `M` initial draws, then pairs of children, with a single child
/// in the last iteration when `T − M` is odd.
pub fn evolve(
    variant: Variant,
    config: &SearchConfig,
    train: &DataView,
    valid: &DataView,
    preset: Option<&Formula>,
) -> Result<SearchOutcome> {
    let refine = if variant == Variant::EaFq {
        config.qigs_in_loop
    } else {
        0
    };
    let run = Run::new(config, train, valid, refine)?;
    let seed = config.seed;
    let m = config.population;
    let kalman = variant.kalman();

    let mut initial = Vec::with_capacity(m);
    for i in 0..m {
        let model = run.sampler.model(&mut rng_at(seed, 0, i), kalman)?;
        let lineage = Lineage {
            parents: Vec::new(),
            operators: vec!["generate".into()],
        };
        initial.push((model, lineage));
    }
    if let Some(p) = preset {
        seed_population_with(p, &mut initial, config.q0, &mut rng_at(seed, 0, m))?;
    }
    let mut audit = Vec::with_capacity(config.budget);
    let mut population = Vec::with_capacity(m);
    for (i, (e, wall)) in run.evaluate_all(initial).into_iter().enumerate() {
        audit.push(AuditRecord::new(0, i, &e, wall));
        population.push(e);
    }
    let mut best_losses = vec![population[argmin(population.iter().map(|e| e.loss))].loss];

    let remaining = config.budget - m;
    let iterations = remaining / 2 + remaining % 2;
    for it in 1..=iterations {
        let single = it == iterations && remaining % 2 == 1;
        let mut rng = rng_at(seed, it, 0);
        let losses: Vec<f64> = population.iter().map(|e| e.loss).collect();
        let a = tournament_select(&losses, config.tournament, &mut rng, None)?;
        let b = tournament_select(&losses, config.tournament, &mut rng, Some(a))?;
        let (c1, c2, cuts) =
            run.sampler
                .crossover(&mut rng, &population[a].model, &population[b].model);
        let crossover = format!("crossover({},{})", cuts.0, cuts.1);
        let mut children = Vec::with_capacity(2);
        for (slot, child) in [c1, c2]
            .into_iter()
            .enumerate()
            .take(if single { 1 } else { 2 })
        {
            let (mutant, sites) = run
                .sampler
                .mutate(&mut rng_at(seed, it, slot + 1), &child)?;
            let mut operators = vec![crossover.clone()];
            if sites.is_empty() {
                operators.push("regenerate".into());
            }
            operators.extend(sites.iter().map(|s| s.to_string()));
            children.push((
                mutant,
                Lineage {
                    parents: vec![a, b],
                    operators,
                },
            ));
        }
        let evaluated: Vec<(EvaluatedModel, Option<f64>)> = if children.len() == 2 {
            let second = children.pop().expect("two children");
            let first = children.pop().expect("two children");
            let (x, y) = rayon::join(
                || run.evaluate(&first.0, first.1),
                || run.evaluate(&second.0, second.1),
            );
            vec![x, y]
        } else {
            run.evaluate_all(children)
        };
        for (slot, (e, wall)) in evaluated.into_iter().enumerate() {
            let mut record = AuditRecord::new(it, slot, &e, wall);
            let losses: Vec<f64> = population.iter().map(|p| p.loss).collect();
            let worst = argmax(&losses);
            if e.loss < losses[worst] {
                record.replaced = Some(worst);
                population[worst] = e;
            }
            audit.push(record);
        }
        best_losses.push(population[argmin(population.iter().map(|e| e.loss))].loss);
    }

    let best = population.swap_remove(argmin(population.iter().map(|e| e.loss)));
    let (model, qigs, final_rmse_valid) = match (variant, &best.fitted) {
        (Variant::EaFThenQigs, Some(fitted)) => {
            let q0 = vec![config.q0; best.model.formula.len()];
            let tuned = q_igs(
                fitted,
                train,
                &q0,
                config.qigs_iterations,
                &config.qigs_multipliers,
            )?;
            let run = kalman_forecast(fitted, Some(&tuned.q_diag), valid)?;
            let r = rmse(&valid.target(), &run.forecasts);
            (
                AdaptiveModel::adaptive(best.model.formula.clone(), tuned.q_diag.clone()),
                Some(tuned),
                r,
            )
        }
        (_, None) => {
            return Err(Error::NonFinite(
                "every candidate failed to fit; no model to return".into(),
            ))
        }
        _ => (best.model.clone(), None, best.rmse_valid),
    };
    Ok(SearchOutcome {
        eta: run.eval.eta,
        best,
        model,
        qigs,
        final_rmse_valid,
        audit,
        best_losses,
    })
}

/// `T` independent draws, all evaluated; returns the lowest loss.
pub fn random_search(
    config: &SearchConfig,
    kalman: bool,
    train: &DataView,
    valid: &DataView,
) -> Result<SearchOutcome> {
    if config.budget == 0 {
        return Err(Error::InvalidParameter("budget must be positive".into()));
    }
    let mut c = config.clone();
    // Population and tournament play no role here.
    c.population = 2;
    c.budget = c.budget.max(2);
    c.tournament = 1;
    let run = Run::new(&c, train, valid, 0)?;
    let mut models = Vec::with_capacity(config.budget);
    for i in 0..config.budget {
        let model = run.sampler.model(&mut rng_at(config.seed, i, 0), kalman)?;
        models.push((
            model,
            Lineage {
                parents: Vec::new(),
                operators: vec!["generate".into()],
            },
        ));
    }
    let evaluated = run.evaluate_all(models);
    let audit: Vec<AuditRecord> = evaluated
        .iter()
        .enumerate()
        .map(|(i, (e, w))| AuditRecord::new(i, 0, e, *w))
        .collect();
    let mut best_losses = Vec::with_capacity(evaluated.len());
    let mut running = f64::INFINITY;
    for (e, _) in &evaluated {
        running = running.min(e.loss);
        best_losses.push(running);
    }
    let i = argmin(evaluated.iter().map(|(e, _)| e.loss));
    let best = evaluated.into_iter().nth(i).expect("non-empty").0;
    if best.fitted.is_none() {
        return Err(Error::NonFinite(
            "every candidate failed to fit; no model to return".into(),
        ));
    }
    Ok(SearchOutcome {
        eta: run.eval.eta,
        model: best.model.clone(),
        final_rmse_valid: best.rmse_valid,
        best,
        qigs: None,
        audit,
        best_losses,
    })
}
