//! Spectral ranking from the stationary distribution of a comparison chain.

use serde::{Deserialize, Serialize};

use super::{ModelIdx, Outcome, Rater, RaterError, Roster, WinMatrix};
use crate::rating::MicroBatchResult;

const TOLERANCE: f64 = 1e-12;
const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCentralityResult {
    /// Row indices of the input matrix, best first.
    pub order: Vec<usize>,
    /// Stationary mass per row, normalized within each component.
    pub stationary: Vec<f64>,
    /// Connected components of the comparison graph, each sorted.
    pub components: Vec<Vec<usize>>,
    /// True when the graph is disconnected and the order only ranks
    /// models within their component.
    pub partial: bool,
}

/// `wins[i][j]` is how often `i` beat `j`. `regularization` is a
/// pseudo-count added to every ordered pair, which also connects the graph.
pub fn rank_centrality(wins: &[Vec<f64>], regularization: f64) -> RankCentralityResult {
    let n = wins.len();
    let count = |i: usize, j: usize| wins[i][j] + regularization;
    let games = |i: usize, j: usize| count(i, j) + count(j, i);

    let degree: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && games(i, j) > 0.0).count())
        .collect();
    let d_max = degree.iter().copied().max().unwrap_or(0).max(1) as f64;

    // transition i -> j carries the fraction of i-vs-j games won by j
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut out = 0.0;
        for j in 0..n {
            if i != j && games(i, j) > 0.0 {
                p[i][j] = count(j, i) / games(i, j) / d_max;
                out += p[i][j];
            }
        }
        p[i][i] = 1.0 - out;
    }

    let components = connected_components(n, |i, j| games(i, j) > 0.0);
    let mut stationary = vec![0.0; n];
    for comp in &components {
        let mut pi: Vec<f64> = vec![1.0 / comp.len() as f64; comp.len()];
        for _ in 0..MAX_ITERATIONS {
            let mut next = vec![0.0; comp.len()];
            for (a, &i) in comp.iter().enumerate() {
                for (b, &j) in comp.iter().enumerate() {
                    next[b] += pi[a] * p[i][j];
                }
            }
            let total: f64 = next.iter().sum();
            next.iter_mut().for_each(|x| *x /= total);
            let change: f64 = next.iter().zip(&pi).map(|(x, y)| (x - y).abs()).sum();
            pi = next;
            if change < TOLERANCE {
                break;
            }
        }
        for (a, &i) in comp.iter().enumerate() {
            stationary[i] = pi[a];
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| stationary[y].total_cmp(&stationary[x]).then(x.cmp(&y)));
    RankCentralityResult {
        order,
        stationary,
        partial: components.len() > 1,
        components,
    }
}

fn connected_components(n: usize, linked: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && linked(i, j) {
                    seen[j] = true;
                    comp.push(j);
                    stack.push(j);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Rank Centrality over the macro outcomes seen so far, regularized with
/// `1/n` pseudo-wins per ordered pair.
#[derive(Debug, Clone, Default)]
pub struct RankCentrality {
    roster: Roster,
    wins: WinMatrix,
}

impl RankCentrality {
    pub fn scores(&self) -> RankCentralityResult {
        let n = self.roster.len().max(1);
        rank_centrality(self.wins.rows(), 1.0 / n as f64)
    }
}

impl Rater for RankCentrality {
    fn name(&self) -> &'static str {
        "Rank Centrality"
    }

    fn inject(&mut self, model: ModelIdx) -> Result<(), RaterError> {
        self.roster.add(model)?;
        self.wins.grow();
        Ok(())
    }

    fn models(&self) -> &[ModelIdx] {
        &self.roster.models
    }

    fn observe(&mut self, a: ModelIdx, b: ModelIdx, batch: &MicroBatchResult) -> Result<(), RaterError> {
        let (i, j) = self.roster.pair(a, b)?;
        if let Some(o) = Outcome::from_batch(batch) {
            self.wins.record(i, j, o);
        }
        Ok(())
    }

    fn rank(&self) -> Vec<ModelIdx> {
        let result = self.scores();
        let mut order: Vec<ModelIdx> = self.roster.models.clone();
        order.sort_by(|&x, &y| {
            let (sx, sy) = (self.roster.slot(x).unwrap(), self.roster.slot(y).unwrap());
            result.stationary[sy]
                .total_cmp(&result.stationary[sx])
                .then(x.cmp(&y))
        });
        order
    }

    fn reset(&mut self) {
        self.roster.clear();
        self.wins.clear();
    }
}
