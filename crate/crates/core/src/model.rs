//! The full model: parameters, the forward composition of encoder,
//! attention stack and objectives, and its hand-derived reverse pass.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ehr::SupervisedExample;
use crate::encoder::{
    fuse, init_embeddings, mean_pool_backward, mean_pool_visits, structural_backward,
    structural_embed, EmbeddingState, FusedEmbeddings, StructuralParams,
};
use crate::error::{Result, ShgtError};
use crate::hypergraph::Hypergraph;
use crate::objectives::{
    classification_backward, classification_loss, label_matrix, predict_patients,
    prediction_backward, reconstruction_backward, reconstruction_loss, total_loss, LossBreakdown,
    PatientPredictions, PredictionHead, SamplePairs,
};
use crate::transformer::{
    backward_stack, concat_tokens, forward_stack, split_outputs, AttentionLayerParams,
    DropoutStream, TransformerTrace,
};

/// Which components are active. The three ablations each drop one piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Variant {
    #[default]
    Full,
    /// Structural projections forced to zero.
    WithoutStructure,
    /// Fused embeddings fed straight to the objectives.
    WithoutTransformer,
    /// Reconstruction term dropped (`α = 0`).
    WithoutReconstruction,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::WithoutStructure,
        Variant::WithoutTransformer,
        Variant::WithoutReconstruction,
    ];

    pub fn uses_structure(self) -> bool {
        self != Variant::WithoutStructure
    }

    pub fn uses_transformer(self) -> bool {
        self != Variant::WithoutTransformer
    }

    pub fn uses_reconstruction(self) -> bool {
        self != Variant::WithoutReconstruction
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::WithoutStructure => "wo-S",
            Variant::WithoutTransformer => "wo-T",
            Variant::WithoutReconstruction => "wo-L",
        })
    }
}

impl FromStr for Variant {
    type Err = ShgtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "wo-S" | "wo-s" => Ok(Variant::WithoutStructure),
            "wo-T" | "wo-t" => Ok(Variant::WithoutTransformer),
            "wo-L" | "wo-l" => Ok(Variant::WithoutReconstruction),
            other => Err(ShgtError::Config(format!(
                "unknown variant {other:?} (expected full, wo-S, wo-T or wo-L)"
            ))),
        }
    }
}

/// Architecture and objective settings shared by forward and backward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub layers: usize,
    pub alpha: f64,
    pub dropout: f64,
    pub variant: Variant,
}

impl ModelConfig {
    /// `α` actually applied to the reconstruction term.
    pub fn effective_alpha(&self) -> f64 {
        if self.variant.uses_reconstruction() {
            self.alpha
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(ShgtError::Config("dim must be positive".into()));
        }
        if self.layers == 0 {
            return Err(ShgtError::Config("layers must be at least 1".into()));
        }
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(ShgtError::Config("alpha must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ShgtError::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Every trainable tensor. Gradients share the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub x_v: Array2<f64>,
    pub structural: StructuralParams,
    pub layers: Vec<AttentionLayerParams>,
    pub head: PredictionHead,
}

pub type GradientSet = ParameterSet;

impl ParameterSet {
    pub fn init(
        m: usize,
        n: usize,
        n_labels: usize,
        dim: usize,
        layers: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_labels == 0 {
            return Err(ShgtError::Config(
                "at least one diagnosis label is required".into(),
            ));
        }
        let (x_v, structural) = init_embeddings(m, n, dim, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let layers = (0..layers)
            .map(|_| AttentionLayerParams::init(dim, &mut rng))
            .collect();
        let head = PredictionHead::init(dim, n_labels, &mut rng);
        Ok(ParameterSet {
            x_v,
            structural,
            layers,
            head,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |a: &Array2<f64>| Array2::zeros(a.dim());
        ParameterSet {
            x_v: z(&self.x_v),
            structural: StructuralParams {
                w_v: z(&self.structural.w_v),
                w_e: z(&self.structural.w_e),
            },
            layers: self
                .layers
                .iter()
                .map(|l| AttentionLayerParams {
                    w_q: z(&l.w_q),
                    w_k: z(&l.w_k),
                    w_v: z(&l.w_v),
                })
                .collect(),
            head: PredictionHead {
                w_p: z(&self.head.w_p),
                b_p: z(&self.head.b_p),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.x_v.ncols()
    }

    pub fn n_labels(&self) -> usize {
        self.head.n_labels()
    }

    /// Tensors in canonical order with their names.
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![
            ("x_v".to_string(), &self.x_v),
            ("w_v".to_string(), &self.structural.w_v),
            ("w_e".to_string(), &self.structural.w_e),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.w_q"), &layer.w_q));
            out.push((format!("layer{l}.w_k"), &layer.w_k));
            out.push((format!("layer{l}.w_v"), &layer.w_v));
        }
        out.push(("w_p".to_string(), &self.head.w_p));
        out.push(("b_p".to_string(), &self.head.b_p));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = vec![
            ("x_v".to_string(), &mut self.x_v),
            ("w_v".to_string(), &mut self.structural.w_v),
            ("w_e".to_string(), &mut self.structural.w_e),
        ];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{l}.w_q"), &mut layer.w_q));
            out.push((format!("layer{l}.w_k"), &mut layer.w_k));
            out.push((format!("layer{l}.w_v"), &mut layer.w_v));
        }
        out.push(("w_p".to_string(), &mut self.head.w_p));
        out.push(("b_p".to_string(), &mut self.head.b_p));
        out
    }

    pub fn tensor(&self, name: &str) -> Option<&Array2<f64>> {
        self.tensors()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.tensors_mut()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Shapes must agree with a hypergraph of `m` codes and `n` visits.
    pub fn check_shapes(&self, m: usize, n: usize) -> Result<()> {
        let d = self.dim();
        let expect = |name: &str, t: &Array2<f64>, shape: (usize, usize)| {
            if t.dim() != shape {
                Err(ShgtError::Shape {
                    context: name.to_string(),
                    expected: shape,
                    found: t.dim(),
                })
            } else {
                Ok(())
            }
        };
        expect("x_v", &self.x_v, (m, d))?;
        expect("w_v", &self.structural.w_v, (n, d))?;
        expect("w_e", &self.structural.w_e, (m, d))?;
        for l in &self.layers {
            expect("w_q", &l.w_q, (d, d))?;
            expect("w_k", &l.w_k, (d, d))?;
            expect("w_v", &l.w_v, (d, d))?;
        }
        expect("w_p", &self.head.w_p, (d, self.n_labels()))?;
        expect("b_p", &self.head.b_p, (1, self.n_labels()))
    }
}

/// Intermediates of one forward pass kept for the reverse pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub embeddings: EmbeddingState,
    pub fused: FusedEmbeddings,
    pub transformer: Option<TransformerTrace>,
    /// `Z_v'` and `Z_e'`.
    pub outputs: FusedEmbeddings,
    pub predictions: PatientPredictions,
    pub labels: Array2<f64>,
}

fn ensure_finite(stage: &str, a: &Array2<f64>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ShgtError::NonFinite {
            stage: stage.to_string(),
        })
    }
}

/// Encoder and attention stack only: returns `(Z_v', Z_e')` plus the trace
/// pieces that produced them.
fn encode(
    params: &ParameterSet,
    h: &Hypergraph,
    cfg: &ModelConfig,
    dropout: Option<DropoutStream>,
) -> Result<(
    EmbeddingState,
    FusedEmbeddings,
    Option<TransformerTrace>,
    FusedEmbeddings,
)> {
    params.check_shapes(h.num_nodes(), h.num_edges())?;
    let x_e = mean_pool_visits(params.x_v.view(), h)?;
    let embeddings = EmbeddingState {
        x_v: params.x_v.clone(),
        x_e,
    };
    let fused = if cfg.variant.uses_structure() {
        let (s_v, s_e) = structural_embed(h, &params.structural)?;
        fuse(
            embeddings.x_v.view(),
            embeddings.x_e.view(),
            s_v.view(),
            s_e.view(),
        )?
    } else {
        FusedEmbeddings {
            z_v: embeddings.x_v.clone(),
            z_e: embeddings.x_e.clone(),
        }
    };
    ensure_finite("structural encoder", &fused.z_v)?;
    ensure_finite("structural encoder", &fused.z_e)?;

    let (transformer, outputs) = if cfg.variant.uses_transformer() {
        if params.layers.len() != cfg.layers {
            return Err(ShgtError::Config(format!(
                "config asks for {} layers but parameters hold {}",
                cfg.layers,
                params.layers.len()
            )));
        }
        let x0 = concat_tokens(&fused)?;
        let (x_out, trace) = forward_stack(x0.view(), &params.layers, cfg.dropout, dropout)?;
        ensure_finite("transformer", &x_out)?;
        let outputs = split_outputs(x_out.view(), h.num_nodes(), h.num_edges())?;
        (Some(trace), outputs)
    } else {
        (None, fused.clone())
    };
    Ok((embeddings, fused, transformer, outputs))
}

/// Full forward pass. `dropout = None` is eval mode. Reconstruction is
/// evaluated whenever `pairs` is given; it only enters the total through the
/// effective `α`.
pub fn forward(
    params: &ParameterSet,
    h: &Hypergraph,
    examples: &[SupervisedExample],
    pairs: Option<&SamplePairs>,
    cfg: &ModelConfig,
    dropout: Option<DropoutStream>,
) -> Result<(LossBreakdown, ForwardTrace)> {
    let (embeddings, fused, transformer, outputs) = encode(params, h, cfg, dropout)?;
    let predictions = predict_patients(outputs.z_e.view(), examples, &params.head)?;
    let labels = label_matrix(examples, params.n_labels());
    let l_clas = classification_loss(predictions.logits.view(), labels.view())?;
    let alpha = cfg.effective_alpha();
    let l_stru = match pairs {
        Some(p) => reconstruction_loss(p, outputs.z_v.view(), outputs.z_e.view())?,
        None if alpha > 0.0 => {
            return Err(ShgtError::Config(
                "reconstruction weight is positive but no sample pairs were given".into(),
            ))
        }
        None => 0.0,
    };
    let loss = total_loss(l_clas, l_stru, alpha)?;
    if !loss.total.is_finite() {
        return Err(ShgtError::NonFinite {
            stage: "loss".into(),
        });
    }
    Ok((
        loss,
        ForwardTrace {
            embeddings,
            fused,
            transformer,
            outputs,
            predictions,
            labels,
        },
    ))
}

/// Eval-mode probabilities for `examples`.
pub fn predict(
    params: &ParameterSet,
    h: &Hypergraph,
    examples: &[SupervisedExample],
    cfg: &ModelConfig,
) -> Result<Array2<f64>> {
    let (_, _, _, outputs) = encode(params, h, cfg, None)?;
    Ok(predict_patients(outputs.z_e.view(), examples, &params.head)?.probabilities)
}

/// `(Z_v', Z_e')` in eval mode.
pub fn embed(params: &ParameterSet, h: &Hypergraph, cfg: &ModelConfig) -> Result<FusedEmbeddings> {
    Ok(encode(params, h, cfg, None)?.3)
}

/// Exact gradient of the total loss of the pass recorded in `trace`.
pub fn backward(
    params: &ParameterSet,
    h: &Hypergraph,
    examples: &[SupervisedExample],
    pairs: Option<&SamplePairs>,
    cfg: &ModelConfig,
    trace: &ForwardTrace,
) -> Result<GradientSet> {
    let (m, n) = (h.num_nodes(), h.num_edges());
    params.check_shapes(m, n)?;
    if trace.outputs.z_v.dim() != (m, params.dim())
        || trace.predictions.logits.nrows() != examples.len()
    {
        return Err(ShgtError::Shape {
            context: "trace does not match parameters".into(),
            expected: (m, params.dim()),
            found: trace.outputs.z_v.dim(),
        });
    }
    let mut grads = params.zeros_like();

    // Classification head and patient pooling.
    let d_logits = classification_backward(trace.predictions.logits.view(), trace.labels.view());
    let (d_w_p, d_b_p, mut d_z_e_out) = prediction_backward(
        d_logits.view(),
        &trace.predictions,
        &params.head,
        examples,
        n,
    );
    grads.head.w_p = d_w_p;
    grads.head.b_p = d_b_p;
    let mut d_z_v_out = Array2::zeros((m, params.dim()));

    // Reconstruction shares Z_v', Z_e' with the head.
    let alpha = cfg.effective_alpha();
    if alpha > 0.0 {
        let pairs = pairs.ok_or_else(|| {
            ShgtError::Config(
                "reconstruction weight is positive but no sample pairs were given".into(),
            )
        })?;
        let (d_v, d_e) = reconstruction_backward(
            pairs,
            trace.outputs.z_v.view(),
            trace.outputs.z_e.view(),
            alpha,
        );
        d_z_v_out += &d_v;
        d_z_e_out += &d_e;
    }

    // Attention stack.
    let (d_z_v, d_z_e) = match &trace.transformer {
        Some(tt) => {
            let d_out =
                ndarray::concatenate(ndarray::Axis(0), &[d_z_v_out.view(), d_z_e_out.view()])
                    .expect("widths match");
            let (d_x0, layer_grads) = backward_stack(d_out.view(), &params.layers, tt);
            grads.layers = layer_grads;
            (
                d_x0.slice(s![..m, ..]).to_owned(),
                d_x0.slice(s![m.., ..]).to_owned(),
            )
        }
        None => (d_z_v_out, d_z_e_out),
    };

    // Z_v = S_v + X_v, Z_e = S_e + X_e.
    if cfg.variant.uses_structure() {
        let (d_w_v, d_w_e) = structural_backward(h, d_z_v.view(), d_z_e.view())?;
        grads.structural.w_v = d_w_v;
        grads.structural.w_e = d_w_e;
    }
    // X_v receives its direct token gradient plus the pooled-visit gradient.
    grads.x_v = d_z_v + mean_pool_backward(d_z_e.view(), h);

    for (name, g) in grads.tensors() {
        ensure_finite(&format!("gradient of {name}"), g)?;
    }
    Ok(grads)
}
