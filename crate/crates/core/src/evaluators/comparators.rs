use serde::{Deserialize, Serialize};

use super::{EvalError, Verdict};
use crate::normal;

/// Variance floor added under the square root of the perceptual comparison.
pub const PERCEPTUAL_EPSILON: f64 = 1e-5;
/// Aesthetic score gap (100-point scale) below which a comparison is a tie.
pub const AESTHETIC_TIE_THRESHOLD: f64 = 3.5;

const PERCEPTUAL_LOW: f64 = 0.42;
const PERCEPTUAL_HIGH: f64 = 0.58;

/// Repeated stochastic quality scores for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSampleSet {
    samples: Vec<f64>,
    mean: f64,
    /// Unbiased sample variance; zero for a single sample.
    variance: f64,
}

impl ScoreSampleSet {
    pub fn new(samples: Vec<f64>) -> Result<Self, EvalError> {
        if samples.is_empty() {
            return Err(EvalError::InvalidInput("empty score sample set".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(EvalError::InvalidInput("non-finite score sample".into()));
        }
        let k = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / k;
        let variance = if samples.len() > 1 {
            samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        Ok(Self {
            samples,
            mean,
            variance,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

/// Thurstone probability that A is preferred over B.
pub fn perceptual_win_probability(a: &ScoreSampleSet, b: &ScoreSampleSet) -> f64 {
    let denom = (a.variance.max(0.0) + b.variance.max(0.0) + PERCEPTUAL_EPSILON).sqrt();
    normal::cdf((a.mean - b.mean) / denom)
}

/// Variance-aware comparison of two repeated-score sets. Probabilities of
/// exactly 0.42 or 0.58 are ties.
pub fn perceptual_compare(a: &ScoreSampleSet, b: &ScoreSampleSet) -> Verdict {
    let p = perceptual_win_probability(a, b);
    if p > PERCEPTUAL_HIGH {
        Verdict::A
    } else if p < PERCEPTUAL_LOW {
        Verdict::B
    } else {
        Verdict::Tie
    }
}

/// Scalar score comparison with a tie band of `threshold` (strict).
pub fn aesthetic_compare(score_a: f64, score_b: f64, threshold: f64) -> Result<Verdict, EvalError> {
    if !score_a.is_finite() || !score_b.is_finite() {
        return Err(EvalError::InvalidInput("non-finite aesthetic score".into()));
    }
    let gap = score_a - score_b;
    Ok(if gap.abs() < threshold {
        Verdict::Tie
    } else if gap > 0.0 {
        Verdict::A
    } else {
        Verdict::B
    })
}

/// Reconciles the two order-swapped judgments, both already mapped back to
/// canonical labels.
pub fn order_swap_aggregate(first: Verdict, second: Verdict) -> Verdict {
    match (first, second) {
        (x, y) if x == y => x,
        (Verdict::Tie, other) | (other, Verdict::Tie) => other,
        _ => Verdict::Tie,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(v: &[f64]) -> ScoreSampleSet {
        ScoreSampleSet::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sample_statistics() {
        let s = set(&[1.0, 2.0, 3.0, 6.0]);
        assert_eq!(s.mean(), 3.0);
        assert!((s.variance() - 14.0 / 3.0).abs() < 1e-12);
        assert!(ScoreSampleSet::new(vec![]).is_err());
        assert!(ScoreSampleSet::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn perceptual_examples() {
        let a = set(&[5.0; 4]);
        let b = set(&[4.0; 4]);
        assert!(perceptual_win_probability(&a, &b) > 1.0 - 1e-12);
        assert_eq!(perceptual_compare(&a, &b), Verdict::A);
        assert_eq!(perceptual_compare(&b, &a), Verdict::B);

        let c = set(&[3.0, 4.0, 5.0, 3.5]);
        let d = set(&[4.5, 3.0, 4.0, 4.0]);
        assert_eq!(perceptual_win_probability(&c, &d), 0.5);
        assert_eq!(perceptual_compare(&c, &d), Verdict::Tie);
    }

    #[test]
    fn aesthetic_examples() {
        assert_eq!(aesthetic_compare(70.0, 68.0, 3.5).unwrap(), Verdict::Tie);
        assert_eq!(aesthetic_compare(70.0, 60.0, 3.5).unwrap(), Verdict::A);
        assert_eq!(aesthetic_compare(60.0, 70.0, 3.5).unwrap(), Verdict::B);
        assert_eq!(aesthetic_compare(42.0, 42.0, 3.5).unwrap(), Verdict::Tie);
        // exactly on the threshold is decisive
        assert_eq!(aesthetic_compare(73.5, 70.0, 3.5).unwrap(), Verdict::A);
        assert!(aesthetic_compare(f64::NAN, 1.0, 3.5).is_err());
    }

    #[test]
    fn swap_table() {
        use Verdict::*;
        let table = [
            (A, A, A),
            (B, B, B),
            (Tie, Tie, Tie),
            (A, Tie, A),
            (Tie, A, A),
            (B, Tie, B),
            (Tie, B, B),
            (A, B, Tie),
            (B, A, Tie),
        ];
        for (x, y, want) in table {
            assert_eq!(order_swap_aggregate(x, y), want, "{x:?} {y:?}");
        }
    }

    proptest! {
        #[test]
        fn perceptual_antisymmetric(a in prop::collection::vec(0.0f64..10.0, 1..6),
                                    b in prop::collection::vec(0.0f64..10.0, 1..6)) {
            let (a, b) = (set(&a), set(&b));
            let pab = perceptual_win_probability(&a, &b);
            let pba = perceptual_win_probability(&b, &a);
            prop_assert!((pab + pba - 1.0).abs() < 1e-12);
            prop_assert_eq!(perceptual_compare(&a, &b), perceptual_compare(&b, &a).mirrored());
        }

        #[test]
        fn aesthetic_antisymmetric(a in 0.0f64..100.0, b in 0.0f64..100.0) {
            prop_assert_eq!(aesthetic_compare(a, b, 3.5).unwrap(),
                            aesthetic_compare(b, a, 3.5).unwrap().mirrored());
        }
    }
}
