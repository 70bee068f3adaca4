use arena_core::normal;
use arena_core::rating::{
    aggregate_micro_batch, apply_batch, conservative_score, decisive_update, tie_update, win_correction,
    MacroVerdict, MicroBatchResult, RatingHyperParams, RatingState,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hp() -> RatingHyperParams {
    RatingHyperParams::default()
}

fn random_batch(rng: &mut ChaCha8Rng) -> MicroBatchResult {
    let n = rng.gen_range(0..=15);
    let wa = rng.gen_range(0..=n);
    let wb = rng.gen_range(0..=n - wa);
    MicroBatchResult::new(wa, wb, n - wa - wb)
}

#[test]
fn sigma_never_drops_below_floor() {
    let hp = hp();
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for _ in 0..100_000 {
        let mut states: Vec<RatingState> = (0..3)
            .map(|_| RatingState::new(rng.gen_range(-500.0..2500.0), rng.gen_range(hp.sigma_conv..400.0)))
            .collect();
        for _ in 0..rng.gen_range(1..=8) {
            let i = rng.gen_range(0..3);
            let j = (i + rng.gen_range(1..3)) % 3;
            let (a, b, _) = apply_batch(&states[i], &states[j], &random_batch(&mut rng), &hp).unwrap();
            assert!(a.sigma >= hp.sigma_conv && b.sigma >= hp.sigma_conv, "{a:?} {b:?}");
            states[i] = a;
            states[j] = b;
        }
    }
}

// Phi(x) = 1/2 + integral of the density from 0 to x, by composite Simpson.
fn quadrature_cdf(x: f64) -> f64 {
    let n = 20_000;
    let h = x / n as f64;
    let mut sum = normal::pdf(0.0) + normal::pdf(x);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * normal::pdf(i as f64 * h);
    }
    0.5 + sum * h / 3.0
}

#[test]
fn normal_cdf_matches_quadrature() {
    for i in 0..=160 {
        let x = -8.0 + 0.1 * i as f64;
        let (got, want) = (normal::cdf(x), quadrature_cdf(x));
        assert!((got - want).abs() <= 1e-12, "x={x}: {got} vs {want}");
    }
}

#[test]
fn w_stays_inside_unit_interval() {
    for i in 0..10_000 {
        let t = -5.0 + 10.0 * i as f64 / 9_999.0;
        let (v, w) = win_correction(t);
        assert!(v > 0.0 && w > 0.0 && w < 1.0, "t={t}: V={v} W={w}");
    }
}

#[test]
fn every_composition_has_bounded_weight() {
    let hp = hp();
    for n in 0..=30u32 {
        for wa in 0..=n {
            for wb in 0..=n - wa {
                let batch = MicroBatchResult::new(wa, wb, n - wa - wb);
                let out = aggregate_micro_batch(&batch, &hp);
                assert!((1.0..=hp.weight_max).contains(&out.weight));
                let decisive = matches!(out.verdict, MacroVerdict::WinA | MacroVerdict::WinB);
                assert_eq!(out.weight == 1.0, !decisive, "{batch:?} -> {out:?}");
                let mirrored = aggregate_micro_batch(&batch.mirrored(), &hp);
                assert_eq!(mirrored.verdict, out.verdict.mirrored());
                assert_eq!(mirrored.weight, out.weight);
                if n > 0 {
                    assert!((mirrored.p_a + out.p_a - 1.0).abs() < 1e-15);
                }
            }
        }
    }
}

fn arb_state() -> impl Strategy<Value = RatingState> {
    (-1000.0f64..3000.0, 20.0f64..400.0).prop_map(|(mu, sigma)| RatingState::new(mu, sigma))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn conservative_score_is_below_mean(s in arb_state(), batches in 0u64..100) {
        let mut s = s;
        s.batches_evaluated = batches;
        prop_assert!(conservative_score(&s, &hp()) <= s.mu);
    }

    #[test]
    fn decisive_update_moves_means_apart(w in arb_state(), l in arb_state(), omega in 1.0f64..2.0) {
        let hp = hp();
        let (w2, l2) = decisive_update(&w, &l, omega, &hp).unwrap();
        prop_assert!(w2.mu > w.mu && l2.mu < l.mu);
        let (w3, _) = decisive_update(&w, &l, omega + 0.25, &hp).unwrap();
        prop_assert!(w3.mu - w.mu > w2.mu - w.mu);
    }

    #[test]
    fn tie_update_conserves_and_contracts(a in arb_state(), b in arb_state()) {
        let hp = hp();
        let (a2, b2) = tie_update(&a, &b, &hp);
        let sum = a.mu + b.mu;
        prop_assert!((a2.mu + b2.mu - sum).abs() <= 1e-12 * sum.abs().max(1.0));
        let gap = (1.0 - hp.tie_pull) * (a.mu - b.mu).abs();
        prop_assert!(((a2.mu - b2.mu).abs() - gap).abs() <= 1e-12 * gap.max(1.0));
    }

    #[test]
    fn invalid_batch_only_counts_the_attempt(a in arb_state(), b in arb_state()) {
        let (a2, b2, out) = apply_batch(&a, &b, &MicroBatchResult::new(0, 0, 0), &hp()).unwrap();
        prop_assert_eq!(out.verdict, MacroVerdict::Invalid);
        let mut a_expected = a.clone();
        a_expected.batches_attempted += 1;
        let mut b_expected = b.clone();
        b_expected.batches_attempted += 1;
        prop_assert_eq!(a2, a_expected);
        prop_assert_eq!(b2, b_expected);
    }
}
