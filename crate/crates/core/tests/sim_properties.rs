use arena_core::evaluators::Verdict;
use arena_core::rating::RatingHyperParams;
use arena_core::sim::metrics::{order_kendall, order_spearman, spearman, topk_overlap};
use arena_core::sim::{catalog, environment, run_trial, sample_outcome, PromptEffect, SystemKind, TrialSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn ranking_agrees_with_itself() {
    let mut rng = ChaCha8Rng::seed_from_u64(420);
    for n in 2..=50usize {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        assert_eq!(order_spearman(&order, &order).unwrap(), 1.0);
        assert_eq!(order_kendall(&order, &order).unwrap(), 1.0);
        let reversed: Vec<usize> = order.iter().rev().copied().collect();
        assert!((order_spearman(&order, &reversed).unwrap() + 1.0).abs() < 1e-12);
    }
}

#[test]
fn metrics_stay_in_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(421);
    for _ in 0..2000 {
        let n = 2 + rand::Rng::gen_range(&mut rng, 0..30);
        let a: Vec<f64> = (0..n).map(|_| rand::Rng::gen_range(&mut rng, 0.0..5.0f64).round()).collect();
        let b: Vec<f64> = (0..n).map(|_| rand::Rng::gen_range(&mut rng, 0.0..5.0f64).round()).collect();
        let rho = spearman(&a, &b).unwrap();
        assert!((-1.0..=1.0).contains(&rho));
        let mut x: Vec<usize> = (0..n).collect();
        x.shuffle(&mut rng);
        let mut y = x.clone();
        y.shuffle(&mut rng);
        for k in 1..=n {
            let o = topk_overlap(&x, &y, k).unwrap();
            assert!((0.0..=1.0).contains(&o));
        }
        let tau = order_kendall(&x, &y).unwrap();
        assert!((-1.0..=1.0).contains(&tau));
    }
}

#[test]
fn swapping_skills_mirrors_verdicts() {
    for env in catalog() {
        for seed in 0..200 {
            let effect = PromptEffect {
                offset_a: 12.0,
                offset_b: -7.0,
                tie_offset: 3.0,
            };
            let v1 = sample_outcome(&env, 1040.0, 980.0, &effect, &mut ChaCha8Rng::seed_from_u64(seed));
            let v2 = sample_outcome(&env, 980.0, 1040.0, &effect.swapped(), &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(v1, v2.mirrored(), "{} seed {seed}", env.name);
        }
    }
}

#[test]
fn equal_skills_are_balanced() {
    let env = environment("reference").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(387);
    let (mut a, mut b, mut t) = (0, 0, 0);
    for _ in 0..100_000 {
        match sample_outcome(&env, 1000.0, 1000.0, &PromptEffect::default(), &mut rng) {
            Verdict::A => a += 1,
            Verdict::B => b += 1,
            Verdict::Tie => t += 1,
        }
    }
    assert!(((a - b) as f64 / 1e5).abs() <= 0.01, "{a} vs {b}");
    assert!(t > 0);
}

#[test]
fn every_system_gets_the_same_budget() {
    let env = environment("reference").unwrap();
    let spec = TrialSpec {
        n_models: 10,
        dynamic_rounds: 200,
        static_rounds: 10,
        injections: vec![arena_core::sim::Injection::strong(100)],
        checkpoints: vec![100, 210],
        n_trials: 1,
        ..TrialSpec::default()
    };
    let hp = RatingHyperParams::default();
    for kind in SystemKind::BENCHMARK {
        let report = run_trial(&env, &spec, kind, &hp, 0).unwrap();
        assert_eq!(report.batches, spec.total_rounds(), "{kind:?}");
        for v in report.srcc_at.values().chain(report.kendall_at.values()) {
            assert!((-1.0..=1.0).contains(v));
        }
    }
}
