mod common;

use gamevo::formula::{validate, AdaptiveModel};
use gamevo::presets::{recovery_benchmark, sota_formula};
use gamevo::search::{
    evaluate, evolve, generate_model, random_search, tournament_select, write_audit, AuditRecord,
    Sampler, SearchConfig, Variant,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn small_config(seed: u64) -> SearchConfig {
    SearchConfig {
        population: 6,
        budget: 15,
        tournament: 3,
        max_effects: Some(4),
        k_min: 4,
        k_max: 8,
        smoothable: vec!["Temp".into()],
        day_covariates: vec!["Day".into()],
        day_sets: vec![vec![6, 7], vec![1, 2, 3, 4, 5]],
        lag_covariates: vec!["Wind".into()],
        offset_sets: vec![vec![1], vec![1, 7]],
        seed,
        ..Default::default()
    }
}

fn data(n: usize) -> gamevo::data::Split {
    let s = synth(&recovery_benchmark(1.0), n, 3);
    split_fractions(&view(s.dataset), 0.6, 0.2)
}

#[test]
fn generation_respects_switches() {
    let parts = data(300);
    let reg = parts.train.registry();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut config = small_config(0);
    config.p_bivariate = 0.0;
    config.max_effects = Some(1);
    for _ in 0..200 {
        let m = generate_model(&config, reg, false, &mut rng).unwrap();
        assert_eq!(m.formula.len(), 1);
        assert!(!m.formula.effects[0].is_bivariate());
        assert!(m.q_diag.is_none());
        assert!(validate(&m, reg).is_empty());
    }
    config.max_effects = Some(5);
    config.p_bivariate = 0.5;
    for _ in 0..200 {
        let m = generate_model(&config, reg, true, &mut rng).unwrap();
        let q = m.q_diag.as_ref().unwrap();
        assert_eq!(q.len(), m.formula.len());
        assert!(q.iter().all(|v| *v >= config.q_min && *v <= config.q_max));
        assert!(validate(&m, reg).is_empty(), "{}", m.serialize());
    }
}

#[test]
fn operators_keep_models_valid() {
    let parts = data(300);
    let reg = parts.train.registry();
    let mut config = small_config(0);
    config.p_bivariate = 0.4;
    let sampler = Sampler::new(&config, reg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..2000 {
        let kalman = i % 2 == 0;
        let a = sampler.model(&mut rng, kalman).unwrap();
        let b = sampler.model(&mut rng, kalman).unwrap();
        let (c, d, _) = sampler.crossover(&mut rng, &a, &b);
        for m in [&c, &d] {
            assert!(validate(m, reg).is_empty(), "{}", m.serialize());
        }
        let (m, _) = sampler.mutate(&mut rng, &c).unwrap();
        assert!(validate(&m, reg).is_empty(), "{}", m.serialize());
        assert_eq!(m.q_diag.is_some(), kalman);
    }
}

#[test]
fn crossover_shapes() {
    let parts = data(300);
    let reg = parts.train.registry();
    let config = small_config(0);
    let sampler = Sampler::new(&config, reg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let a = sampler.model(&mut rng, true).unwrap();
        let (c, d, _) = sampler.crossover(&mut rng, &a, &a);
        assert_eq!(c, a);
        assert_eq!(d, a);
        let b = sampler.model(&mut rng, true).unwrap();
        let (c, _, (x, y)) = sampler.crossover(&mut rng, &a, &b);
        if x == y {
            assert_eq!(c, a);
        } else {
            // Head and tail from the first parent survive when nothing
            // duplicates them.
            assert_eq!(c.formula.effects[0..x], a.formula.effects[0..x]);
        }
    }
}

#[test]
fn mutation_never_perturbs_missing_q() {
    let parts = data(300);
    let reg = parts.train.registry();
    let config = small_config(0);
    let sampler = Sampler::new(&config, reg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..500 {
        let a = sampler.model(&mut rng, false).unwrap();
        let (_, sites) = sampler.mutate(&mut rng, &a).unwrap();
        assert!(sites
            .iter()
            .all(|s| !s.to_string().starts_with("perturb-q")));
    }
}

#[test]
fn tournament_properties() {
    let losses = [3.0, 1.0, 2.0, 1.0, 5.0];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(tournament_select(&losses, 5, &mut rng, None).unwrap(), 1);
    assert_eq!(tournament_select(&losses, 4, &mut rng, Some(1)).unwrap(), 3);
    assert!(tournament_select(&losses, 5, &mut rng, Some(1)).is_err());
    let mut seen = [0usize; 5];
    for _ in 0..5000 {
        seen[tournament_select(&losses, 1, &mut rng, Some(2)).unwrap()] += 1;
    }
    assert_eq!(seen[2], 0);
    assert!(seen.iter().enumerate().all(|(i, &c)| i == 2 || c > 1000));
}

#[test]
fn loss_components() {
    let parts = data(400);
    let model = AdaptiveModel::fixed(synth(&recovery_benchmark(1.0), 10, 3).formula);
    let e = evaluate(&model, &parts.train, &parts.valid, 0.0);
    assert_eq!(e.loss, e.rmse_valid);
    let e = evaluate(&model, &parts.train, &parts.valid, 0.01);
    assert_eq!(e.loss, e.rmse_valid + 0.01 * e.edf);
}

fn reconstruct(records: &[AuditRecord], eta: f64) {
    for r in records {
        if let (Some(loss), Some(rmse), Some(edf)) = (r.loss, r.rmse, r.edf) {
            assert!((loss - (rmse + eta * edf)).abs() <= 1e-10);
        } else {
            assert!(r.loss.is_none());
        }
    }
}

#[test]
fn evolution_contract() {
    let parts = data(400);
    for variant in [Variant::EaFq, Variant::EaFThenQigs] {
        let config = small_config(11);
        let out = evolve(variant, &config, &parts.train, &parts.valid, None).unwrap();
        assert_eq!(out.audit.len(), config.budget);
        for w in out.best_losses.windows(2) {
            assert!(w[1] <= w[0]);
        }
        reconstruct(&out.audit, out.eta);
        assert!(out.model.is_adaptive());
        assert_eq!(out.qigs.is_some(), variant == Variant::EaFThenQigs);
        // Odd T − M ends with a single child.
        let last = out.audit.last().unwrap();
        assert_eq!(last.slot, 0);
        assert_eq!(
            out.audit
                .iter()
                .filter(|r| r.iteration == last.iteration)
                .count(),
            1
        );
    }
}

#[test]
fn budget_equal_to_population_is_initial_best() {
    let parts = data(400);
    let mut config = small_config(4);
    config.budget = config.population;
    let out = evolve(Variant::EaFq, &config, &parts.train, &parts.valid, None).unwrap();
    assert_eq!(out.audit.len(), config.population);
    let best = out
        .audit
        .iter()
        .map(|r| r.loss.unwrap_or(f64::INFINITY))
        .fold(f64::INFINITY, f64::min);
    assert_eq!(out.best.loss, best);
}

#[test]
fn same_seed_same_audit_across_thread_counts() {
    let parts = data(400);
    let config = small_config(21);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let out = pool
            .install(|| evolve(Variant::EaFq, &config, &parts.train, &parts.valid, None))
            .unwrap();
        let mut bytes = Vec::new();
        write_audit(&out.audit, &mut bytes).unwrap();
        bytes
    };
    let a = run(1);
    assert_eq!(a, run(4));
    assert_eq!(a, run(1));
}

#[test]
fn preset_enters_initial_population() {
    let s = synth(&recovery_benchmark(1.0), 400, 3);
    let parts = split_fractions(&view(s.dataset), 0.6, 0.2);
    let config = small_config(2);
    let preset = s.formula.clone();
    let out = evolve(
        Variant::EaFq,
        &config,
        &parts.train,
        &parts.valid,
        Some(&preset),
    )
    .unwrap();
    let text = AdaptiveModel::adaptive(preset.clone(), vec![config.q0; 3]).serialize();
    let seeded: Vec<_> = out
        .audit
        .iter()
        .filter(|r| r.iteration == 0 && r.operators == ["preset"])
        .collect();
    assert_eq!(seeded.len(), 1);
    assert_eq!(seeded[0].model, text);
    assert!(seeded[0].loss.is_some());
    // The hand-crafted preset needs covariates this registry lacks.
    let sota = sota_formula(8).unwrap();
    let out = evolve(
        Variant::EaFq,
        &config,
        &parts.train,
        &parts.valid,
        Some(&sota),
    )
    .unwrap();
    let r = out
        .audit
        .iter()
        .find(|r| r.operators == ["preset"])
        .unwrap();
    assert!(r.loss.is_none() && r.error.is_some());
}

#[test]
fn random_search_is_deterministic() {
    let parts = data(400);
    let mut config = small_config(9);
    config.budget = 1;
    let one = random_search(&config, false, &parts.train, &parts.valid).unwrap();
    assert_eq!(one.audit.len(), 1);
    assert_eq!(one.audit[0].model, one.model.serialize());
    config.budget = 8;
    let a = random_search(&config, true, &parts.train, &parts.valid).unwrap();
    let b = random_search(&config, true, &parts.train, &parts.valid).unwrap();
    assert_eq!(a.audit, b.audit);
    reconstruct(&a.audit, a.eta);
}
