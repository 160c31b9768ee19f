//! Multilabel evaluation: support-weighted F1 and top-k recall.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::ehr::SupervisedExample;
use crate::error::{Result, ShgtError};
use crate::hypergraph::Hypergraph;
use crate::model::{predict, ModelConfig, ParameterSet};
use crate::objectives::label_matrix;

pub const DEFAULT_KS: [usize; 2] = [10, 20];
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Denominator used by top-k recall for each patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum RecallDenominator {
    /// `min(k, |true|)`: a perfect top-k list always scores 1.
    #[default]
    Capped,
    /// `|true|`.
    Uncapped,
}

impl fmt::Display for RecallDenominator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecallDenominator::Capped => "capped",
            RecallDenominator::Uncapped => "uncapped",
        })
    }
}

impl FromStr for RecallDenominator {
    type Err = ShgtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "capped" => Ok(RecallDenominator::Capped),
            "uncapped" => Ok(RecallDenominator::Uncapped),
            other => Err(ShgtError::Config(format!(
                "unknown recall denominator {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Breakdown {
    pub w_f1: f64,
    pub per_label_f1: Vec<f64>,
    pub support: Vec<usize>,
}

fn check_dims(scores: ArrayView2<f64>, labels: ArrayView2<f64>) -> Result<()> {
    if scores.dim() != labels.dim() {
        return Err(ShgtError::Shape {
            context: "metric inputs".into(),
            expected: labels.dim(),
            found: scores.dim(),
        });
    }
    Ok(())
}

/// Binarizes `probabilities >= threshold`, computes per-label F1 (0 when
/// precision and recall are both 0) and averages it weighted by label support.
/// Labels without support are left out of the average.
pub fn weighted_f1(
    probabilities: ArrayView2<f64>,
    labels: ArrayView2<f64>,
    threshold: f64,
) -> Result<F1Breakdown> {
    check_dims(probabilities, labels)?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ShgtError::Config(format!(
            "threshold {threshold} outside (0, 1)"
        )));
    }
    let n_labels = labels.ncols();
    let mut per_label_f1 = vec![0.0; n_labels];
    let mut support = vec![0usize; n_labels];
    for j in 0..n_labels {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&p, &y) in probabilities.column(j).iter().zip(labels.column(j)) {
            let predicted = p >= threshold;
            let actual = y == 1.0;
            match (predicted, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        support[j] = tp + fn_;
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        per_label_f1[j] = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
    }
    let total: usize = support.iter().sum();
    if total == 0 {
        return Err(ShgtError::UndefinedMetric(
            "weighted F1 needs at least one positive label".into(),
        ));
    }
    let weighted: f64 = per_label_f1
        .iter()
        .zip(&support)
        .filter(|(_, &s)| s > 0)
        .map(|(f, &s)| s as f64 * f)
        .sum();
    Ok(F1Breakdown {
        w_f1: weighted / total as f64,
        per_label_f1,
        support,
    })
}

/// Label indices sorted by descending score, ties broken by lower index.
pub fn rank_labels(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Mean over patients of `|top-k ∩ true| / denominator`.
pub fn recall_at_k(
    scores: ArrayView2<f64>,
    labels: ArrayView2<f64>,
    k: usize,
    denominator: RecallDenominator,
) -> Result<f64> {
    check_dims(scores, labels)?;
    if k == 0 {
        return Err(ShgtError::Config("k must be at least 1".into()));
    }
    if scores.nrows() == 0 {
        return Err(ShgtError::UndefinedMetric(
            "recall over zero patients".into(),
        ));
    }
    let mut sum = 0.0;
    for (b, (s_row, y_row)) in scores.rows().into_iter().zip(labels.rows()).enumerate() {
        let scores: Vec<f64> = s_row.to_vec();
        if scores.iter().any(|v| v.is_nan()) {
            return Err(ShgtError::NonFinite {
                stage: format!("scores of patient {b}"),
            });
        }
        let n_true = y_row.iter().filter(|&&y| y == 1.0).count();
        if n_true == 0 {
            return Err(ShgtError::UndefinedMetric(format!(
                "patient {b} has no true labels"
            )));
        }
        let hits = rank_labels(&scores)
            .into_iter()
            .take(k)
            .filter(|&j| y_row[j] == 1.0)
            .count();
        let denom = match denominator {
            RecallDenominator::Capped => k.min(n_true),
            RecallDenominator::Uncapped => n_true,
        };
        sum += hits as f64 / denom as f64;
    }
    Ok(sum / scores.nrows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub threshold: f64,
    pub ks: Vec<usize>,
    pub denominator: RecallDenominator,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            threshold: DEFAULT_THRESHOLD,
            ks: DEFAULT_KS.to_vec(),
            denominator: RecallDenominator::Capped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_patients: usize,
    pub threshold: f64,
    pub recall_denominator: RecallDenominator,
    pub w_f1: f64,
    pub recall_at: BTreeMap<usize, f64>,
    pub per_label_f1: Vec<f64>,
    pub support: Vec<usize>,
}

impl EvalReport {
    pub fn from_scores(
        scores: ArrayView2<f64>,
        labels: ArrayView2<f64>,
        options: &EvalOptions,
    ) -> Result<Self> {
        let f1 = weighted_f1(scores, labels, options.threshold)?;
        let mut recall_at = BTreeMap::new();
        for &k in &options.ks {
            recall_at.insert(k, recall_at_k(scores, labels, k, options.denominator)?);
        }
        Ok(EvalReport {
            n_patients: scores.nrows(),
            threshold: options.threshold,
            recall_denominator: options.denominator,
            w_f1: f1.w_f1,
            recall_at,
            per_label_f1: f1.per_label_f1,
            support: f1.support,
        })
    }

    /// One `key=value` line per headline metric.
    pub fn to_key_values(&self) -> String {
        let mut out = format!(
            "patients={}\nthreshold={}\nrecall_denominator={}\nw_f1={}\n",
            self.n_patients, self.threshold, self.recall_denominator, self.w_f1
        );
        for (k, r) in &self.recall_at {
            out.push_str(&format!("recall@{k}={r}\n"));
        }
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>10}", "metric", "value")?;
        writeln!(f, "{:<12} {:>10.4}", "w-F1", self.w_f1)?;
        for (k, r) in &self.recall_at {
            writeln!(f, "{:<12} {:>10.4}", format!("R@{k}"), r)?;
        }
        writeln!(
            f,
            "({} patients, threshold {}, {} recall)",
            self.n_patients, self.threshold, self.recall_denominator
        )
    }
}

/// Eval-mode forward pass followed by w-F1 and R@k.
pub fn evaluate(
    params: &ParameterSet,
    h: &Hypergraph,
    examples: &[SupervisedExample],
    cfg: &ModelConfig,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let scores = predict(params, h, examples, cfg)?;
    let labels = label_matrix(examples, params.n_labels());
    EvalReport::from_scores(scores.view(), labels.view(), options)
}
