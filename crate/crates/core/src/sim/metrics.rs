//! Ranking-quality and late-entry discovery metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("rankings cover different id sets")]
    MismatchedIds,
    #[error("rankings have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("k must be in 1..={0}")]
    InvalidK(usize),
    #[error("trace does not cover the injection at round {0}")]
    InjectionOutsideTrace(u64),
}

/// 1-based ranks of `values` (higher value = rank 1), ties get the average.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&x, &y| values[y].total_cmp(&values[x]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Spearman correlation between two score vectors over the same items.
/// Constant inputs have no defined correlation and give 0.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(pearson(&average_ranks(a), &average_ranks(b)).clamp(-1.0, 1.0))
}

/// Kendall tau-b between two score vectors over the same items.
pub fn kendall(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    let (mut concordant, mut discordant, mut ties_a, mut ties_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i].total_cmp(&a[j]) as i64;
            let db = b[i].total_cmp(&b[j]) as i64;
            match (da, db) {
                (0, 0) => {}
                (0, _) => ties_a += 1,
                (_, 0) => ties_b += 1,
                _ if da == db => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = concordant + discordant;
    let denom = (((n0 + ties_a) * (n0 + ties_b)) as f64).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

/// Scores for the items of `reference` derived from positions in `order`
/// (first = highest), aligned with `reference`.
fn position_scores<T: Ord + Clone>(order: &[T], reference: &[T]) -> Result<Vec<f64>, MetricError> {
    if order.len() != reference.len() {
        return Err(MetricError::MismatchedIds);
    }
    let pos: BTreeMap<&T, usize> = order.iter().enumerate().map(|(i, id)| (id, i)).collect();
    if pos.len() != order.len() {
        return Err(MetricError::MismatchedIds);
    }
    reference
        .iter()
        .map(|id| {
            pos.get(id)
                .map(|&p| -(p as f64))
                .ok_or(MetricError::MismatchedIds)
        })
        .collect()
}

/// Spearman between two orderings (best first) of the same ids.
pub fn order_spearman<T: Ord + Clone>(a: &[T], b: &[T]) -> Result<f64, MetricError> {
    spearman(&position_scores(a, a)?, &position_scores(b, a)?)
}

pub fn order_kendall<T: Ord + Clone>(a: &[T], b: &[T]) -> Result<f64, MetricError> {
    kendall(&position_scores(a, a)?, &position_scores(b, a)?)
}

/// Fraction of the first `k` ids of `a` that are also among the first `k` of `b`.
pub fn topk_overlap<T: Ord + Clone>(a: &[T], b: &[T], k: usize) -> Result<f64, MetricError> {
    position_scores(b, a)?;
    if k == 0 || k > a.len() {
        return Err(MetricError::InvalidK(a.len()));
    }
    let top_b: std::collections::BTreeSet<&T> = b[..k].iter().collect();
    Ok(a[..k].iter().filter(|id| top_b.contains(id)).count() as f64 / k as f64)
}

/// Placement of one injected model over the rounds after its injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discovery {
    pub injection_round: u64,
    pub target_rank: usize,
    /// Rounds from injection to the first hit; `None` if never hit.
    pub first_hit: Option<u64>,
    /// Rounds from injection to the start of the first stable stretch.
    pub stable_hit: Option<u64>,
}

impl Discovery {
    pub fn success(&self) -> bool {
        self.first_hit.is_some()
    }
}

/// `trace` holds `(round, system rank)` for consecutive rounds starting at
/// the injection round. A hit is a rank within one of `target_rank`; a stable
/// hit at round t also stays within it through round t + window.
pub fn discovery_metrics(
    trace: &[(u64, usize)],
    injection_round: u64,
    target_rank: usize,
    window: u64,
) -> Result<Discovery, MetricError> {
    if trace.first().map(|t| t.0) != Some(injection_round) {
        return Err(MetricError::InjectionOutsideTrace(injection_round));
    }
    let hit: Vec<bool> = trace.iter().map(|&(_, r)| r.abs_diff(target_rank) <= 1).collect();
    let first_hit = hit.iter().position(|&h| h).map(|i| trace[i].0 - injection_round);
    let w = window as usize;
    let stable_hit = (0..trace.len())
        .find(|&i| i + w < trace.len() && hit[i..=i + w].iter().all(|&h| h))
        .map(|i| trace[i].0 - injection_round);
    Ok(Discovery {
        injection_round,
        target_rank,
        first_hit,
        stable_hit,
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Paired t statistic for `a - b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedT {
    pub mean_diff: f64,
    pub std_err: f64,
    pub t: f64,
    pub df: usize,
}

pub fn paired_t(a: &[f64], b: &[f64]) -> Result<PairedT, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = mean(&d).unwrap_or(0.0);
    let var = if n > 1 {
        d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let std_err = (var / n.max(1) as f64).sqrt();
    let t = if std_err > 0.0 {
        m / std_err
    } else if m == 0.0 {
        0.0
    } else {
        m.signum() * f64::INFINITY
    };
    Ok(PairedT {
        mean_diff: m,
        std_err,
        t,
        df: n.saturating_sub(1),
    })
}
