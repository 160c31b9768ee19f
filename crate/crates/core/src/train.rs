//! Full-batch training loop with per-epoch negative resampling, validation
//! w-F1 early stopping and a JSON-lines epoch log.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ehr::SupervisedExample;
use crate::error::{Result, ShgtError};
use crate::hypergraph::Hypergraph;
use crate::metrics::{EvalOptions, EvalReport, RecallDenominator, DEFAULT_KS, DEFAULT_THRESHOLD};
use crate::model::{backward, forward, predict, ModelConfig, ParameterSet, Variant};
use crate::objectives::{label_matrix, sample_negatives, LossBreakdown};
use crate::optim::{adam_step, AdamConfig, OptimizerState};
use crate::transformer::DropoutStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub dropout: f64,
    pub dim: usize,
    pub layers: usize,
    pub alpha: f64,
    /// Upper bound on epochs.
    pub epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    pub variant: Variant,
    pub threshold: f64,
    /// Cut-offs for R@k in validation records and reports.
    pub ks: Vec<usize>,
    pub recall_denominator: RecallDenominator,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.004,
            dropout: 0.4,
            dim: 256,
            layers: 2,
            alpha: 0.3,
            epochs: 200,
            patience: 20,
            seed: 0,
            variant: Variant::Full,
            threshold: DEFAULT_THRESHOLD,
            ks: DEFAULT_KS.to_vec(),
            recall_denominator: RecallDenominator::Capped,
        }
    }
}

/// Dataset-shaped presets for depth and reconstruction weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Mimic3,
    Mimic4,
}

impl std::str::FromStr for Preset {
    type Err = ShgtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mimic3" | "mimic-iii" => Ok(Preset::Mimic3),
            "mimic4" | "mimic-iv" => Ok(Preset::Mimic4),
            other => Err(ShgtError::Config(format!("unknown preset {other:?}"))),
        }
    }
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = TrainConfig::default();
        match preset {
            Preset::Mimic3 => TrainConfig {
                layers: 2,
                alpha: 0.3,
                ..base
            },
            Preset::Mimic4 => TrainConfig {
                layers: 1,
                alpha: 0.2,
                ..base
            },
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            dim: self.dim,
            layers: self.layers,
            alpha: self.alpha,
            dropout: self.dropout,
            variant: self.variant,
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            threshold: self.threshold,
            ks: self.ks.clone(),
            denominator: self.recall_denominator,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ShgtError::Config("lr must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(ShgtError::Config("epochs must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ShgtError::Config("threshold must lie in (0, 1)".into()));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(ShgtError::Config(
                "recall cut-offs must be a non-empty list of k >= 1".into(),
            ));
        }
        self.model().validate()
    }

    fn negatives_rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x6e65_6761_7469_7665);
        rng.set_stream(epoch as u64);
        rng
    }

    fn dropout_stream(&self, epoch: usize) -> DropoutStream {
        DropoutStream {
            seed: self.seed ^ 0x6472_6f70_6f75_7400,
            step: epoch as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub val_w_f1: f64,
    pub val_recall: BTreeMap<usize, f64>,
    pub improved: bool,
}

impl EpochRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_json_line());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: EpochRecord = serde_json::from_str(line).map_err(|e| ShgtError::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            records.push(record);
        }
        let best_epoch = records
            .iter()
            .filter(|r| r.improved)
            .map(|r| r.epoch)
            .next_back();
        Ok(TrainLog {
            records,
            best_epoch,
        })
    }

    pub fn best_val_w_f1(&self) -> Option<f64> {
        let best = self.best_epoch?;
        self.records
            .iter()
            .find(|r| r.epoch == best)
            .map(|r| r.val_w_f1)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ParameterSet,
    pub last: ParameterSet,
    pub log: TrainLog,
}

/// A failed run together with the best parameters seen before the fault.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: ShgtError,
    pub last_good: Option<Box<ParameterSet>>,
    pub log: TrainLog,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "training aborted after {} epochs: {}",
            self.log.records.len(),
            self.error
        )
    }
}

impl std::error::Error for TrainFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<ShgtError> for TrainFailure {
    fn from(error: ShgtError) -> Self {
        TrainFailure {
            error,
            last_good: None,
            log: TrainLog::default(),
        }
    }
}

/// Evaluates `examples` in eval mode with the config's threshold and ks.
pub fn evaluate_examples(
    params: &ParameterSet,
    h: &Hypergraph,
    examples: &[SupervisedExample],
    config: &TrainConfig,
) -> Result<EvalReport> {
    let scores = predict(params, h, examples, &config.model())?;
    let labels = label_matrix(examples, params.n_labels());
    EvalReport::from_scores(scores.view(), labels.view(), &config.eval_options())
}

pub fn train(
    config: &TrainConfig,
    h: &Hypergraph,
    n_labels: usize,
    train_examples: &[SupervisedExample],
    val_examples: &[SupervisedExample],
) -> Result<TrainOutcome, TrainFailure> {
    train_with_observer(config, h, n_labels, train_examples, val_examples, |_| {})
}

/// Like [`train`], calling `observer` after every epoch.
pub fn train_with_observer<F>(
    config: &TrainConfig,
    h: &Hypergraph,
    n_labels: usize,
    train_examples: &[SupervisedExample],
    val_examples: &[SupervisedExample],
    mut observer: F,
) -> Result<TrainOutcome, TrainFailure>
where
    F: FnMut(&EpochRecord),
{
    config.validate()?;
    if train_examples.is_empty() || val_examples.is_empty() {
        return Err(ShgtError::InvalidDataset(
            "training and validation sets must be non-empty".into(),
        )
        .into());
    }
    let model = config.model();
    let mut params = ParameterSet::init(
        h.num_nodes(),
        h.num_edges(),
        n_labels,
        config.dim,
        config.layers,
        config.seed,
    )?;
    let mut state = OptimizerState::new(&params, AdamConfig::with_lr(config.lr));
    let mut log = TrainLog::default();
    let mut best: Option<(f64, ParameterSet)> = None;
    let mut since_best = 0usize;

    let fail =
        |error: ShgtError, best: &Option<(f64, ParameterSet)>, log: &TrainLog| TrainFailure {
            error,
            last_good: best.as_ref().map(|(_, p)| Box::new(p.clone())),
            log: log.clone(),
        };

    for epoch in 0..config.epochs {
        let step = (|| -> Result<LossBreakdown> {
            let pairs = if model.variant.uses_reconstruction() {
                Some(sample_negatives(h, &mut config.negatives_rng(epoch))?)
            } else {
                None
            };
            let dropout = (model.dropout > 0.0).then(|| config.dropout_stream(epoch));
            let (loss, trace) =
                forward(&params, h, train_examples, pairs.as_ref(), &model, dropout)?;
            let grads = backward(&params, h, train_examples, pairs.as_ref(), &model, &trace)?;
            adam_step(&mut params, &grads, &mut state)?;
            if !params.is_finite() {
                return Err(ShgtError::NonFinite {
                    stage: "parameters after update".into(),
                });
            }
            Ok(loss)
        })();
        let loss = step.map_err(|e| fail(e, &best, &log))?;

        let report = evaluate_examples(&params, h, val_examples, config)
            .map_err(|e| fail(e, &best, &log))?;
        let improved = best.as_ref().is_none_or(|(score, _)| report.w_f1 > *score);
        if improved {
            best = Some((report.w_f1, params.clone()));
            since_best = 0;
            log.best_epoch = Some(epoch);
        } else {
            since_best += 1;
        }
        let record = EpochRecord {
            epoch,
            loss,
            val_w_f1: report.w_f1,
            val_recall: report.recall_at,
            improved,
        };
        log::debug!(
            "epoch {epoch}: loss {:.6} (clas {:.6}, stru {:.6}) val w-F1 {:.4}",
            record.loss.total,
            record.loss.classification,
            record.loss.reconstruction,
            record.val_w_f1
        );
        observer(&record);
        log.records.push(record);
        if since_best > config.patience {
            break;
        }
    }

    let (_, best) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        last: params,
        log,
    })
}
