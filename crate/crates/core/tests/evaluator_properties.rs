use arena_core::evaluators::{
    aesthetic_compare, order_swap_aggregate, perceptual_compare, perceptual_win_probability, ScoreSampleSet, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_set(rng: &mut ChaCha8Rng) -> ScoreSampleSet {
    let k = rng.gen_range(1..=8);
    let center = rng.gen_range(0.0..5.0);
    ScoreSampleSet::new((0..k).map(|_| center + rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn comparators_are_antisymmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(282);
    for _ in 0..100_000 {
        let (a, b) = (random_set(&mut rng), random_set(&mut rng));
        let p = perceptual_win_probability(&a, &b) + perceptual_win_probability(&b, &a);
        assert!((p - 1.0).abs() <= 1e-12);
        assert_eq!(perceptual_compare(&a, &b), perceptual_compare(&b, &a).mirrored());

        let (x, y) = (rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
        assert_eq!(aesthetic_compare(x, y, 3.5).unwrap(), aesthetic_compare(y, x, 3.5).unwrap().mirrored());
    }
}

fn rank(v: Verdict) -> i32 {
    match v {
        Verdict::B => 0,
        Verdict::Tie => 1,
        Verdict::A => 2,
    }
}

#[test]
fn raising_a_never_skips_the_tie_band() {
    let mut rng = ChaCha8Rng::seed_from_u64(284);
    for _ in 0..200 {
        let b = random_set(&mut rng);
        let spread: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mut last = Verdict::B;
        for step in 0..400 {
            let shift = -5.0 + step as f64 * 0.05;
            let a = ScoreSampleSet::new(spread.iter().map(|s| b.mean() + shift + s).collect()).unwrap();
            let v = perceptual_compare(&a, &b);
            assert!(rank(v) >= rank(last) && rank(v) - rank(last) <= 1, "{last:?} -> {v:?}");
            last = v;
        }
        let base = rng.gen_range(10.0..90.0);
        let mut last = Verdict::B;
        for step in 0..=2000 {
            let v = aesthetic_compare(base - 10.0 + step as f64 * 0.01, base, 3.5).unwrap();
            assert!(rank(v) >= rank(last) && rank(v) - rank(last) <= 1);
            last = v;
        }
    }
}

#[test]
fn swap_aggregation_is_symmetric() {
    use Verdict::*;
    for x in [A, B, Tie] {
        for y in [A, B, Tie] {
            assert_eq!(order_swap_aggregate(x, y), order_swap_aggregate(y, x));
        }
    }
}
