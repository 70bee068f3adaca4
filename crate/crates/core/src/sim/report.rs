use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::mean;
use super::{MetricsReport, SystemKind, TrialSpec};

/// Trial means of one system in one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub environment: String,
    pub system: String,
    pub kind: SystemKind,
    pub n_trials: usize,
    pub srcc: BTreeMap<u64, f64>,
    pub kendall: BTreeMap<u64, f64>,
    /// `(round, k, mean overlap)`.
    pub topk_overlap: Vec<(u64, usize, f64)>,
    /// Mean rounds to first hit over successful discoveries.
    pub discovery_latency: Option<f64>,
    pub stable_latency: Option<f64>,
    pub discovery_success: Option<f64>,
    pub top1_after_injection: Option<f64>,
    #[serde(skip)]
    pub trials: Vec<MetricsReport>,
}

impl SystemSummary {
    pub fn from_trials(environment: &str, kind: SystemKind, trials: Vec<MetricsReport>) -> Self {
        let mut srcc: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        let mut kendall: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        let mut topk: BTreeMap<(u64, usize), Vec<f64>> = BTreeMap::new();
        let (mut latency, mut stable, mut success, mut top1) = (vec![], vec![], vec![], vec![]);
        for t in &trials {
            for (&r, &v) in &t.srcc_at {
                srcc.entry(r).or_default().push(v);
            }
            for (&r, &v) in &t.kendall_at {
                kendall.entry(r).or_default().push(v);
            }
            for &(r, k, v) in &t.topk_overlap {
                topk.entry((r, k)).or_default().push(v);
            }
            for d in &t.discoveries {
                success.push(if d.success() { 1.0 } else { 0.0 });
                latency.extend(d.first_hit.map(|x| x as f64));
                stable.extend(d.stable_hit.map(|x| x as f64));
            }
            top1.extend(t.top1_after_injection.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        }
        let means = |m: BTreeMap<u64, Vec<f64>>| m.into_iter().map(|(r, v)| (r, mean(&v).unwrap())).collect();
        Self {
            environment: environment.to_string(),
            system: kind.name().to_string(),
            kind,
            n_trials: trials.len(),
            srcc: means(srcc),
            kendall: means(kendall),
            topk_overlap: topk.into_iter().map(|((r, k), v)| (r, k, mean(&v).unwrap())).collect(),
            discovery_latency: mean(&latency),
            stable_latency: mean(&stable),
            discovery_success: mean(&success),
            top1_after_injection: mean(&top1),
            trials,
        }
    }

    /// Per-trial SRCC at `round`, in trial order.
    pub fn srcc_series(&self, round: u64) -> Vec<f64> {
        self.trials.iter().map(|t| t.srcc_at[&round]).collect()
    }

    /// Per-trial mean first-hit latency; `None` where nothing was discovered.
    pub fn latency_series(&self) -> Vec<Option<f64>> {
        self.trials
            .iter()
            .map(|t| {
                let hits: Vec<f64> = t.discoveries.iter().filter_map(|d| d.first_hit.map(|x| x as f64)).collect();
                mean(&hits)
            })
            .collect()
    }

    /// `(metric, value)` rows; missing values are omitted.
    pub fn metric_rows(&self) -> Vec<(String, f64)> {
        let mut rows = Vec::new();
        for (r, v) in &self.srcc {
            rows.push((format!("srcc@{r}"), *v));
        }
        for (r, v) in &self.kendall {
            rows.push((format!("kendall@{r}"), *v));
        }
        for (r, k, v) in &self.topk_overlap {
            rows.push((format!("top{k}_overlap@{r}"), *v));
        }
        let optional = [
            ("discovery_latency", self.discovery_latency),
            ("stable_latency", self.stable_latency),
            ("discovery_success", self.discovery_success),
            ("top1_after_injection", self.top1_after_injection),
        ];
        for (name, v) in optional {
            if let Some(v) = v {
                rows.push((name.to_string(), v));
            }
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub spec: TrialSpec,
    pub summaries: Vec<SystemSummary>,
}

impl BenchmarkReport {
    pub fn get(&self, environment: &str, kind: SystemKind) -> Option<&SystemSummary> {
        self.summaries
            .iter()
            .find(|s| s.environment == environment && s.kind == kind)
    }

    /// One row per (environment, system, metric).
    pub fn to_long_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["environment", "system", "metric", "value"])?;
        for s in &self.summaries {
            for (metric, value) in s.metric_rows() {
                w.write_record([s.environment.as_str(), s.system.as_str(), &metric, &format!("{value:.6}")])?;
            }
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8 csv"))
    }

    /// One row per (environment, system) with the headline columns.
    pub fn to_wide_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let checkpoints = &self.spec.checkpoints;
        let mut header = vec!["environment".to_string(), "system".to_string()];
        header.extend(checkpoints.iter().map(|c| format!("srcc@{c}")));
        header.extend(["discovery".into(), "discovery_success".into(), "top1_after_injection".into()]);
        w.write_record(&header)?;
        let cell = |v: Option<f64>, digits: usize| v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into());
        for s in &self.summaries {
            let mut row = vec![s.environment.clone(), s.system.clone()];
            row.extend(checkpoints.iter().map(|c| cell(s.srcc.get(c).copied(), 4)));
            row.push(cell(s.discovery_latency, 2));
            row.push(cell(s.discovery_success, 2));
            row.push(cell(s.top1_after_injection, 2));
            w.write_record(&row)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8 csv"))
    }
}
