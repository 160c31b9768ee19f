//! Training objectives: negative-sampled incidence reconstruction, the
//! patient-level prediction head with multilabel cross-entropy, and their
//! weighted combination.
//!
//! All cross-entropies are evaluated from logits as
//! `softplus(s) - y·s`, which stays finite for any finite `s`.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ehr::SupervisedExample;
use crate::encoder::xavier_uniform;
use crate::error::{Result, ShgtError};
use crate::hypergraph::Hypergraph;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow or cancellation.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary cross-entropy `-[y ln σ(s) + (1-y) ln(1-σ(s))]` from the logit `s`.
pub fn bce_with_logit(logit: f64, target: f64) -> f64 {
    softplus(logit) - target * logit
}

/// Positive (observed) and negative (sampled absent) incidence entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePairs {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

impl SamplePairs {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pairs with their 0/1 target, positives first.
    pub fn labelled(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.positives
            .iter()
            .map(|&p| (p, 1.0))
            .chain(self.negatives.iter().map(|&p| (p, 0.0)))
    }
}

/// All nonzeros of `H` as positives plus `min(|P|, #zeros)` distinct zero
/// entries drawn uniformly without replacement.
pub fn sample_negatives<R: Rng + ?Sized>(h: &Hypergraph, rng: &mut R) -> Result<SamplePairs> {
    let positives = h.nonzeros();
    let cells = h.num_nodes() * h.num_edges();
    let zeros = cells - positives.len();
    if zeros == 0 {
        return Err(ShgtError::InvalidDataset(
            "incidence matrix has no zero entries to sample".into(),
        ));
    }
    let target = positives.len().min(zeros);

    let negatives = if zeros <= 4 * target {
        // Dense enough to enumerate the zero set directly.
        let pool: Vec<(usize, usize)> = (0..h.num_nodes())
            .flat_map(|i| (0..h.num_edges()).map(move |j| (i, j)))
            .filter(|&(i, j)| !h.contains(i, j))
            .collect();
        rand::seq::index::sample(rng, pool.len(), target)
            .into_iter()
            .map(|k| pool[k])
            .collect()
    } else {
        let mut seen = HashSet::with_capacity(target);
        let mut out = Vec::with_capacity(target);
        while out.len() < target {
            let i = rng.gen_range(0..h.num_nodes());
            let j = rng.gen_range(0..h.num_edges());
            if !h.contains(i, j) && seen.insert((i, j)) {
                out.push((i, j));
            }
        }
        out
    };
    Ok(SamplePairs {
        positives,
        negatives,
    })
}

fn check_pair_inputs(z_v: ArrayView2<f64>, z_e: ArrayView2<f64>) -> Result<()> {
    if z_v.ncols() != z_e.ncols() {
        return Err(ShgtError::Shape {
            context: "reconstruction".into(),
            expected: (z_e.nrows(), z_v.ncols()),
            found: z_e.dim(),
        });
    }
    Ok(())
}

/// `⟨Z_v'[i], Z_e'[j]⟩` for each pair, positives first.
pub fn pair_logits(
    pairs: &SamplePairs,
    z_v: ArrayView2<f64>,
    z_e: ArrayView2<f64>,
) -> Result<Vec<f64>> {
    check_pair_inputs(z_v, z_e)?;
    Ok(pairs
        .labelled()
        .map(|((i, j), _)| z_v.row(i).dot(&z_e.row(j)))
        .collect())
}

/// `H'_{ij} = σ(⟨Z_v'[i], Z_e'[j]⟩)` evaluated only at the sampled pairs.
pub fn reconstruct_incidence(
    pairs: &SamplePairs,
    z_v: ArrayView2<f64>,
    z_e: ArrayView2<f64>,
) -> Result<Vec<((usize, usize), f64)>> {
    let logits = pair_logits(pairs, z_v, z_e)?;
    Ok(pairs
        .labelled()
        .zip(logits)
        .map(|((p, _), s)| (p, sigmoid(s)))
        .collect())
}

/// Mean binary cross-entropy over `P ∪ N`.
pub fn reconstruction_loss(
    pairs: &SamplePairs,
    z_v: ArrayView2<f64>,
    z_e: ArrayView2<f64>,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(ShgtError::InvalidDataset("no sampled pairs".into()));
    }
    let logits = pair_logits(pairs, z_v, z_e)?;
    let sum: f64 = pairs
        .labelled()
        .zip(&logits)
        .map(|((_, y), &s)| bce_with_logit(s, y))
        .sum();
    Ok(sum / pairs.len() as f64)
}

/// Gradient of `weight · reconstruction_loss` with respect to `Z_v'` and `Z_e'`.
pub fn reconstruction_backward(
    pairs: &SamplePairs,
    z_v: ArrayView2<f64>,
    z_e: ArrayView2<f64>,
    weight: f64,
) -> (Array2<f64>, Array2<f64>) {
    let mut d_z_v = Array2::zeros(z_v.dim());
    let mut d_z_e = Array2::zeros(z_e.dim());
    let norm = weight / pairs.len() as f64;
    for ((i, j), y) in pairs.labelled() {
        let s = z_v.row(i).dot(&z_e.row(j));
        let g = (sigmoid(s) - y) * norm;
        d_z_v.row_mut(i).scaled_add(g, &z_e.row(j));
        d_z_e.row_mut(j).scaled_add(g, &z_v.row(i));
    }
    (d_z_v, d_z_e)
}

/// Dense sigmoid layer from a patient embedding to diagnosis probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionHead {
    /// `d × |D|`
    pub w_p: Array2<f64>,
    /// `1 × |D|`
    pub b_p: Array2<f64>,
}

impl PredictionHead {
    pub fn init<R: Rng + ?Sized>(d: usize, n_labels: usize, rng: &mut R) -> Self {
        PredictionHead {
            w_p: xavier_uniform(d, n_labels, d, n_labels, rng),
            b_p: Array2::zeros((1, n_labels)),
        }
    }

    pub fn n_labels(&self) -> usize {
        self.w_p.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientPredictions {
    /// Mean of the patient's visit rows, `B × d`.
    pub embeddings: Array2<f64>,
    pub logits: Array2<f64>,
    pub probabilities: Array2<f64>,
}

/// Mean of `Z_e'` rows over each example's input visits.
pub fn pool_patients(z_e: ArrayView2<f64>, examples: &[SupervisedExample]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((examples.len(), z_e.ncols()));
    for (b, ex) in examples.iter().enumerate() {
        if ex.input_visit_edge_ids.is_empty() {
            return Err(ShgtError::InvalidDataset(format!(
                "patient {} has no input visits",
                ex.patient_index
            )));
        }
        let mut row = out.row_mut(b);
        for &j in &ex.input_visit_edge_ids {
            if j >= z_e.nrows() {
                return Err(ShgtError::InvalidDataset(format!(
                    "edge id {j} out of range for {} visits",
                    z_e.nrows()
                )));
            }
            row += &z_e.row(j);
        }
        row /= ex.input_visit_edge_ids.len() as f64;
    }
    Ok(out)
}

pub fn predict_patients(
    z_e: ArrayView2<f64>,
    examples: &[SupervisedExample],
    head: &PredictionHead,
) -> Result<PatientPredictions> {
    if z_e.ncols() != head.w_p.nrows() {
        return Err(ShgtError::Shape {
            context: "prediction head".into(),
            expected: (z_e.nrows(), head.w_p.nrows()),
            found: z_e.dim(),
        });
    }
    let embeddings = pool_patients(z_e, examples)?;
    let logits = embeddings.dot(&head.w_p) + &head.b_p;
    let probabilities = logits.mapv(sigmoid);
    Ok(PatientPredictions {
        embeddings,
        logits,
        probabilities,
    })
}

/// `B × |D|` matrix of 0/1 targets.
pub fn label_matrix(examples: &[SupervisedExample], n_labels: usize) -> Array2<f64> {
    let mut y = Array2::zeros((examples.len(), n_labels));
    for (b, ex) in examples.iter().enumerate() {
        for (j, &v) in ex.label.iter().enumerate().take(n_labels) {
            y[(b, j)] = f64::from(v);
        }
    }
    y
}

/// Sum over labels of the cross-entropy, averaged over patients only.
pub fn classification_loss(logits: ArrayView2<f64>, labels: ArrayView2<f64>) -> Result<f64> {
    if logits.dim() != labels.dim() {
        return Err(ShgtError::Shape {
            context: "classification loss".into(),
            expected: logits.dim(),
            found: labels.dim(),
        });
    }
    if logits.nrows() == 0 {
        return Err(ShgtError::InvalidDataset("no patients in batch".into()));
    }
    let sum: f64 = logits
        .iter()
        .zip(labels.iter())
        .map(|(&s, &y)| bce_with_logit(s, y))
        .sum();
    Ok(sum / logits.nrows() as f64)
}

/// `dL_clas / d logits = (σ(s) − y) / B`.
pub fn classification_backward(logits: ArrayView2<f64>, labels: ArrayView2<f64>) -> Array2<f64> {
    let b = logits.nrows() as f64;
    let mut g = logits.mapv(sigmoid) - labels;
    g /= b;
    g
}

/// Backpropagates `dL/d logits` through the head and the visit pooling.
/// Returns `(dW_p, db_p, dZ_e')`.
pub fn prediction_backward(
    d_logits: ArrayView2<f64>,
    predictions: &PatientPredictions,
    head: &PredictionHead,
    examples: &[SupervisedExample],
    n_edges: usize,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let d_w_p = predictions.embeddings.t().dot(&d_logits);
    let d_b_p = d_logits.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_embed = d_logits.dot(&head.w_p.t());
    let mut d_z_e = Array2::zeros((n_edges, head.w_p.nrows()));
    for (b, ex) in examples.iter().enumerate() {
        let share = &d_embed.row(b) / ex.input_visit_edge_ids.len() as f64;
        for &j in &ex.input_visit_edge_ids {
            let mut row = d_z_e.row_mut(j);
            row += &share;
        }
    }
    (d_w_p, d_b_p, d_z_e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub classification: f64,
    pub reconstruction: f64,
    pub alpha: f64,
    pub total: f64,
}

/// `L = L_clas + α · L_stru`.
pub fn total_loss(classification: f64, reconstruction: f64, alpha: f64) -> Result<LossBreakdown> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(ShgtError::Config(format!(
            "alpha must be >= 0, got {alpha}"
        )));
    }
    Ok(LossBreakdown {
        classification,
        reconstruction,
        alpha,
        total: classification + alpha * reconstruction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diagonal() -> Hypergraph {
        Hypergraph::from_edges(2, &[vec![0], vec![1]], vec![(0, 1), (0, 2)]).unwrap()
    }

    #[test]
    fn exhausted_zero_set_is_fully_sampled() {
        let pairs = sample_negatives(&diagonal(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(pairs.positives, vec![(0, 0), (1, 1)]);
        let mut neg = pairs.negatives.clone();
        neg.sort_unstable();
        assert_eq!(neg, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn all_ones_incidence_has_no_negatives() {
        let h = Hypergraph::from_edges(2, &[vec![0, 1]], vec![(0, 1)]).unwrap();
        assert!(sample_negatives(&h, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn negatives_are_balanced_distinct_and_absent() {
        let edges: Vec<Vec<usize>> = (0..30).map(|j| vec![j % 40, (j * 7 + 3) % 40]).collect();
        let h = Hypergraph::from_edges(40, &edges, vec![(0, 1); 30]).unwrap();
        let pairs = sample_negatives(&h, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(pairs.negatives.len(), pairs.positives.len());
        let distinct: HashSet<_> = pairs.negatives.iter().collect();
        assert_eq!(distinct.len(), pairs.negatives.len());
        assert!(pairs.negatives.iter().all(|&(i, j)| !h.contains(i, j)));
    }

    #[test]
    fn zero_embeddings_reconstruct_one_half() {
        let pairs = sample_negatives(&diagonal(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let z = Array2::zeros((2, 3));
        for (_, p) in reconstruct_incidence(&pairs, z.view(), z.view()).unwrap() {
            assert_eq!(p, 0.5);
        }
        let loss = reconstruction_loss(&pairs, z.view(), z.view()).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturated_reconstruction_is_stable() {
        let pairs = SamplePairs {
            positives: vec![(0, 0)],
            negatives: vec![(1, 0)],
        };
        let z_v = array![[50.0], [-50.0]];
        let z_e = array![[1.0]];
        let h = reconstruct_incidence(&pairs, z_v.view(), z_e.view()).unwrap();
        assert!(h[0].1 >= 1.0 - 2e-22);
        let loss = reconstruction_loss(&pairs, z_v.view(), z_e.view()).unwrap();
        assert!(loss > 0.0 && loss < 1e-20, "loss {loss}");
    }

    #[test]
    fn head_with_zero_weights_predicts_one_half() {
        let head = PredictionHead {
            w_p: Array2::zeros((2, 3)),
            b_p: Array2::zeros((1, 3)),
        };
        let ex = SupervisedExample {
            patient_index: 0,
            input_visit_edge_ids: vec![0],
            label: vec![1, 0, 0],
        };
        let z_e = array![[0.7, -0.1]];
        let pred = predict_patients(z_e.view(), std::slice::from_ref(&ex), &head).unwrap();
        assert_eq!(pred.embeddings, z_e);
        assert!(pred.probabilities.iter().all(|&p| p == 0.5));
        let y = label_matrix(&[ex], 3);
        let loss = classification_loss(pred.logits.view(), y.view()).unwrap();
        assert!((loss - 3.0 * std::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn confident_correct_logits_have_tiny_loss() {
        let logits = array![[50.0, -50.0], [-50.0, 50.0]];
        let y = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(classification_loss(logits.view(), y.view()).unwrap() < 1e-18);
    }

    #[test]
    fn total_is_weighted_sum() {
        let l = total_loss(1.5, 0.25, 0.0).unwrap();
        assert_eq!(l.total, 1.5);
        let l = total_loss(1.5, 0.25, 0.3).unwrap();
        assert_eq!(l.total, 1.5 + 0.3 * 0.25);
        assert!(total_loss(1.0, 1.0, -0.1).is_err());
    }
}
