//! Aggregation of repeated runs into mean ± standard deviation tables.

use std::collections::BTreeMap;

use serde::Serialize;
use shgt_core::EvalReport;

/// Mean and sample standard deviation (`n − 1` denominator; 0 for one run).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// `25.60±0.15`: both parts as percentages with two decimals.
pub fn percent_cell(mean: f64, std: f64) -> String {
    format!("{:.2}±{:.2}", 100.0 * mean, 100.0 * std)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl MetricSummary {
    fn from_values(values: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&values);
        MetricSummary { mean, std, values }
    }
}

/// One table row: a model (or sweep setting) evaluated over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowSummary {
    pub name: String,
    pub seeds: Vec<u64>,
    pub w_f1: MetricSummary,
    pub recall_at: BTreeMap<usize, MetricSummary>,
}

impl RowSummary {
    pub fn new(name: impl Into<String>, runs: &[(u64, &EvalReport)]) -> Self {
        let w_f1 = MetricSummary::from_values(runs.iter().map(|(_, r)| r.w_f1).collect());
        let mut recall_at = BTreeMap::new();
        if let Some((_, first)) = runs.first() {
            for &k in first.recall_at.keys() {
                let values = runs
                    .iter()
                    .filter_map(|(_, r)| r.recall_at.get(&k).copied())
                    .collect();
                recall_at.insert(k, MetricSummary::from_values(values));
            }
        }
        RowSummary {
            name: name.into(),
            seeds: runs.iter().map(|(s, _)| *s).collect(),
            w_f1,
            recall_at,
        }
    }
}

/// Fixed-width table with a `Model` column followed by `w-F1` and one
/// `R@k` column per cut-off.
pub fn render_table(rows: &[RowSummary]) -> String {
    let ks: Vec<usize> = rows
        .first()
        .map(|r| r.recall_at.keys().copied().collect())
        .unwrap_or_default();
    let name_width = rows
        .iter()
        .map(|r| r.name.chars().count())
        .max()
        .unwrap_or(0)
        .max(5);
    let mut out = format!("{:<name_width$}  {:>13}", "Model", "w-F1");
    for k in &ks {
        out.push_str(&format!("  {:>13}", format!("R@{k}")));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{:<name_width$}  {:>13}",
            row.name,
            percent_cell(row.w_f1.mean, row.w_f1.std)
        ));
        for k in &ks {
            let cell = row
                .recall_at
                .get(k)
                .map_or_else(|| "-".to_string(), |m| percent_cell(m.mean, m.std));
            out.push_str(&format!("  {cell:>13}"));
        }
        out.push('\n');
    }
    out
}
