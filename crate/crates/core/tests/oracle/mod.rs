//! Naive reference implementations used as test oracles. Everything here works
//! on nested `Vec`s with explicit loops and shares no code with the library
//! beyond converting its inputs.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::Rng;
use shgt_core::{Hypergraph, SupervisedExample};

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(a: &Array2<f64>) -> Mat {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn max_abs_diff(a: &Mat, b: &Array2<f64>) -> f64 {
    assert_eq!((a.len(), a.first().map_or(0, Vec::len)), b.dim());
    let mut worst = 0.0f64;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - b[(i, j)]).abs());
        }
    }
    worst
}

pub fn random_mat<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-scale..scale))
}

/// Random incidence structure with `m` codes and `n` visits split over
/// patients with 1–3 input visits each, plus random multi-hot labels over the
/// first `n_labels` codes.
pub struct Instance {
    pub edges: Vec<Vec<usize>>,
    pub h: Hypergraph,
    pub examples: Vec<SupervisedExample>,
    pub m: usize,
    pub n: usize,
    pub n_labels: usize,
}

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let m = rng.gen_range(3..=14);
    let mut edges = Vec::new();
    let mut owners = Vec::new();
    let mut examples = Vec::new();
    let n_labels = rng.gen_range(1..=m.min(6));
    let patients = rng.gen_range(1..=4);
    for u in 0..patients {
        let visits = rng.gen_range(1..=3);
        let first = edges.len();
        for t in 0..visits {
            let mut e: Vec<usize> = (0..m).filter(|_| rng.gen_bool(0.35)).collect();
            if e.is_empty() {
                e.push(rng.gen_range(0..m));
            }
            edges.push(e);
            owners.push((u, t));
        }
        let mut label: Vec<u8> = (0..n_labels).map(|_| u8::from(rng.gen_bool(0.4))).collect();
        let forced = rng.gen_range(0..n_labels);
        label[forced] = 1;
        examples.push(SupervisedExample {
            patient_index: u,
            input_visit_edge_ids: (first..edges.len()).collect(),
            label,
        });
    }
    let n = edges.len();
    let h = Hypergraph::from_edges(m, &edges, owners).unwrap();
    Instance {
        edges,
        h,
        examples,
        m,
        n,
        n_labels,
    }
}

pub fn dense_incidence(m: usize, edges: &[Vec<usize>]) -> Mat {
    let mut h = vec![vec![0.0; edges.len()]; m];
    for (j, e) in edges.iter().enumerate() {
        for &i in e {
            h[i][j] = 1.0;
        }
    }
    h
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (r, inner, c) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; c]; r];
    for i in 0..r {
        for j in 0..c {
            let mut s = 0.0;
            for k in 0..inner {
                s += a[i][k] * b[k][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    let mut out = vec![vec![0.0; a.len()]; a[0].len()];
    for (i, row) in a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[j][i] = v;
        }
    }
    out
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

/// Visit embedding as the average of member code embeddings.
pub fn mean_pool(h: &Mat, x_v: &Mat) -> Mat {
    let (m, n, d) = (h.len(), h[0].len(), x_v[0].len());
    let mut out = vec![vec![0.0; d]; n];
    for j in 0..n {
        let mut count = 0.0;
        for i in 0..m {
            if h[i][j] == 1.0 {
                count += 1.0;
                for k in 0..d {
                    out[j][k] += x_v[i][k];
                }
            }
        }
        for k in 0..d {
            out[j][k] /= count;
        }
    }
    out
}

/// `(Z_v, Z_e)` of the structural encoder.
pub fn encoder(h: &Mat, x_v: &Mat, w_v: &Mat, w_e: &Mat) -> (Mat, Mat) {
    let x_e = mean_pool(h, x_v);
    let s_v = matmul(h, w_v);
    let s_e = matmul(&transpose(h), w_e);
    (add(&s_v, x_v), add(&s_e, &x_e))
}

pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let exps: Vec<f64> = row.iter().map(|v| v.exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// One attention layer by explicit triple loops. Returns `(A, output)`.
pub fn attention(x: &Mat, w_q: &Mat, w_k: &Mat, w_v: &Mat) -> (Mat, Mat) {
    let t = x.len();
    let d = x[0].len();
    let q = matmul(x, w_q);
    let k = matmul(x, w_k);
    let v = matmul(x, w_v);
    let mut a = Vec::with_capacity(t);
    for i in 0..t {
        let mut logits = vec![0.0; t];
        for j in 0..t {
            let mut s = 0.0;
            for c in 0..d {
                s += q[i][c] * k[j][c];
            }
            logits[j] = s / (d as f64).sqrt();
        }
        a.push(softmax_row(&logits));
    }
    let mut out = vec![vec![0.0; d]; t];
    for i in 0..t {
        for j in 0..t {
            for c in 0..d {
                out[i][c] += a[i][j] * v[j][c];
            }
        }
    }
    (a, out)
}

fn sigma(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

fn bce(p: f64, y: f64) -> f64 {
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Mean cross-entropy of `σ(⟨z_v[i], z_e[j]⟩)` against 1 on positives and 0
/// on negatives.
pub fn reconstruction(
    z_v: &Mat,
    z_e: &Mat,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> f64 {
    let score = |i: usize, j: usize| -> f64 {
        let mut s = 0.0;
        for c in 0..z_v[i].len() {
            s += z_v[i][c] * z_e[j][c];
        }
        sigma(s)
    };
    let mut total = 0.0;
    for &(i, j) in positives {
        total += bce(score(i, j), 1.0);
    }
    for &(i, j) in negatives {
        total += bce(score(i, j), 0.0);
    }
    total / (positives.len() + negatives.len()) as f64
}

/// Per-patient probabilities from pooled visit rows and the sigmoid head.
pub fn head_probabilities(
    z_e: &Mat,
    examples: &[SupervisedExample],
    w_p: &Mat,
    b_p: &[f64],
) -> Mat {
    let d = z_e[0].len();
    let mut out = Vec::new();
    for ex in examples {
        let mut pooled = vec![0.0; d];
        for &j in &ex.input_visit_edge_ids {
            for c in 0..d {
                pooled[c] += z_e[j][c];
            }
        }
        for c in 0..d {
            pooled[c] /= ex.input_visit_edge_ids.len() as f64;
        }
        let mut probs = Vec::new();
        for l in 0..b_p.len() {
            let mut s = b_p[l];
            for c in 0..d {
                s += pooled[c] * w_p[c][l];
            }
            probs.push(sigma(s));
        }
        out.push(probs);
    }
    out
}

/// Label cross-entropy summed over labels, averaged over patients.
pub fn classification(probs: &Mat, examples: &[SupervisedExample]) -> f64 {
    let mut total = 0.0;
    for (p, ex) in probs.iter().zip(examples) {
        for (l, &y) in ex.label.iter().enumerate() {
            total += bce(p[l], f64::from(y));
        }
    }
    total / examples.len() as f64
}

/// Weighted F1 from per-label predicted and true patient sets.
pub fn weighted_f1(scores: &Mat, truth: &[Vec<bool>], threshold: f64) -> Option<f64> {
    let labels = truth[0].len();
    let mut weighted = 0.0;
    let mut support_total = 0usize;
    for l in 0..labels {
        let predicted: BTreeSet<usize> = (0..scores.len())
            .filter(|&b| scores[b][l] >= threshold)
            .collect();
        let actual: BTreeSet<usize> = (0..truth.len()).filter(|&b| truth[b][l]).collect();
        if actual.is_empty() {
            continue;
        }
        let hits = predicted.intersection(&actual).count() as f64;
        let f1 = if hits == 0.0 {
            0.0
        } else {
            let p = hits / predicted.len() as f64;
            let r = hits / actual.len() as f64;
            2.0 * p * r / (p + r)
        };
        weighted += f1 * actual.len() as f64;
        support_total += actual.len();
    }
    (support_total > 0).then(|| weighted / support_total as f64)
}

/// Top-k by repeated selection of the highest remaining score, earliest
/// index first among equals.
pub fn top_k(scores: &[f64], k: usize) -> BTreeSet<usize> {
    let mut chosen = BTreeSet::new();
    while chosen.len() < k.min(scores.len()) {
        let mut best: Option<usize> = None;
        for (j, &s) in scores.iter().enumerate() {
            if chosen.contains(&j) {
                continue;
            }
            if best.is_none_or(|b| s > scores[b]) {
                best = Some(j);
            }
        }
        chosen.insert(best.unwrap());
    }
    chosen
}

pub fn recall_at_k(scores: &Mat, truth: &[Vec<bool>], k: usize, capped: bool) -> f64 {
    let mut total = 0.0;
    for (s, t) in scores.iter().zip(truth) {
        let actual: BTreeSet<usize> = (0..t.len()).filter(|&j| t[j]).collect();
        let hits = top_k(s, k).intersection(&actual).count() as f64;
        let denom = if capped {
            k.min(actual.len())
        } else {
            actual.len()
        };
        total += hits / denom as f64;
    }
    total / scores.len() as f64
}
