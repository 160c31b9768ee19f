//! Global single-head self-attention over the stacked code and visit tokens.
//!
//! Each layer is exactly
//!
//! ```text
//! A   = softmax_rows( (X W_Q)(X W_K)ᵀ / √d )
//! X'  = A X W_V
//! ```
//!
//! with no residual path, normalization or feed-forward sublayer. In training
//! mode inverted dropout is applied to `A`; masks are kept in the trace so the
//! backward pass sees the same realization.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{xavier_uniform, FusedEmbeddings};
use crate::error::{Result, ShgtError};

pub const ATTENTION_IDENTITY_GAIN: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayerParams {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
}

impl AttentionLayerParams {
    /// Query and key maps start at `ATTENTION_IDENTITY_GAIN · I` and the
    /// value map at `I`, each plus Xavier noise. Plain Xavier weights give
    /// near-uniform attention at this embedding scale, which maps every token
    /// to the same vector and stalls training.
    pub fn init<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let eye = Array2::<f64>::eye(d);
        AttentionLayerParams {
            w_q: xavier_uniform(d, d, d, d, rng) + &eye * ATTENTION_IDENTITY_GAIN,
            w_k: xavier_uniform(d, d, d, d, rng) + &eye * ATTENTION_IDENTITY_GAIN,
            w_v: xavier_uniform(d, d, d, d, rng) + &eye,
        }
    }

    pub fn zeros(d: usize) -> Self {
        AttentionLayerParams {
            w_q: Array2::zeros((d, d)),
            w_k: Array2::zeros((d, d)),
            w_v: Array2::zeros((d, d)),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_q.nrows()
    }
}

/// Everything one layer needs for its backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub input: Array2<f64>,
    pub queries: Array2<f64>,
    pub keys: Array2<f64>,
    /// `X · W_V`
    pub values: Array2<f64>,
    pub logits: Array2<f64>,
    /// Row-stochastic attention before dropout.
    pub attention: Array2<f64>,
    /// Per-entry multiplier: 0 or `1 / (1 - rate)`. `None` in eval mode.
    pub dropout_mask: Option<Array2<f64>>,
}

impl LayerTrace {
    /// Attention actually applied to the values.
    pub fn applied_attention(&self) -> Array2<f64> {
        match &self.dropout_mask {
            Some(mask) => &self.attention * mask,
            None => self.attention.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerTrace {
    pub layers: Vec<LayerTrace>,
    pub output: Array2<f64>,
}

/// Counter-based dropout randomness: one independent stream per
/// `(step, layer)` so masks do not depend on evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropoutStream {
    pub seed: u64,
    pub step: u64,
}

impl DropoutStream {
    pub fn layer_rng(&self, layer: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((self.step << 16) | layer as u64);
        rng
    }
}

/// Stacks codes above visits: rows `[0, m)` are `Z_v`, rows `[m, m+n)` are `Z_e`.
pub fn concat_tokens(z: &FusedEmbeddings) -> Result<Array2<f64>> {
    if z.z_v.nrows() == 0 || z.z_e.nrows() == 0 {
        return Err(ShgtError::InvalidDataset(
            "token matrix needs at least one code and one visit".into(),
        ));
    }
    if z.z_v.ncols() != z.z_e.ncols() {
        return Err(ShgtError::Shape {
            context: "concat tokens".into(),
            expected: (z.z_e.nrows(), z.z_v.ncols()),
            found: z.z_e.dim(),
        });
    }
    Ok(ndarray::concatenate(Axis(0), &[z.z_v.view(), z.z_e.view()]).expect("widths checked"))
}

/// Inverse of [`concat_tokens`].
pub fn split_outputs(x: ArrayView2<f64>, m: usize, n: usize) -> Result<FusedEmbeddings> {
    if m == 0 || n == 0 || x.nrows() != m + n {
        return Err(ShgtError::Shape {
            context: "split outputs".into(),
            expected: (m + n, x.ncols()),
            found: x.dim(),
        });
    }
    Ok(FusedEmbeddings {
        z_v: x.slice(s![..m, ..]).to_owned(),
        z_e: x.slice(s![m.., ..]).to_owned(),
    })
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// One attention layer. `rng = None` selects eval mode (no dropout).
pub fn attention_layer(
    x: ArrayView2<f64>,
    params: &AttentionLayerParams,
    dropout_rate: f64,
    rng: Option<&mut ChaCha8Rng>,
    layer_index: usize,
) -> Result<(Array2<f64>, LayerTrace)> {
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(ShgtError::Config(format!(
            "dropout rate {dropout_rate} outside [0, 1)"
        )));
    }
    let d = params.dim();
    if x.ncols() != d {
        return Err(ShgtError::Shape {
            context: format!("attention layer {layer_index}"),
            expected: (x.nrows(), d),
            found: x.dim(),
        });
    }
    let queries = x.dot(&params.w_q);
    let keys = x.dot(&params.w_k);
    let values = x.dot(&params.w_v);
    let logits = queries.dot(&keys.t()) / (d as f64).sqrt();
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(ShgtError::NonFinite {
            stage: format!("attention logits of layer {layer_index}"),
        });
    }
    let attention = softmax_rows(logits.view());

    let dropout_mask = match rng {
        Some(rng) if dropout_rate > 0.0 => {
            let keep = 1.0 - dropout_rate;
            let scale = 1.0 / keep;
            Some(Array2::from_shape_simple_fn(attention.dim(), || {
                if rng.gen::<f64>() < keep {
                    scale
                } else {
                    0.0
                }
            }))
        }
        _ => None,
    };

    let trace = LayerTrace {
        input: x.to_owned(),
        queries,
        keys,
        values,
        logits,
        attention,
        dropout_mask,
    };
    let output = trace.applied_attention().dot(&trace.values);
    Ok((output, trace))
}

/// Backward pass of one layer: returns `dL/dX` and the parameter gradients.
pub fn attention_backward(
    d_out: ArrayView2<f64>,
    params: &AttentionLayerParams,
    trace: &LayerTrace,
) -> (Array2<f64>, AttentionLayerParams) {
    let d = params.dim();
    let scale = 1.0 / (d as f64).sqrt();
    let applied = trace.applied_attention();

    // out = Â · V
    let d_values = applied.t().dot(&d_out);
    let mut d_attention = d_out.dot(&trace.values.t());
    if let Some(mask) = &trace.dropout_mask {
        d_attention *= mask;
    }

    // Softmax Jacobian action per row: A ⊙ (g − Σ_k g_k A_k).
    let a = &trace.attention;
    let mut d_logits = &d_attention * a;
    let row_dots = d_logits.sum_axis(Axis(1));
    for (mut row, (a_row, dot)) in d_logits
        .rows_mut()
        .into_iter()
        .zip(a.rows().into_iter().zip(row_dots.iter()))
    {
        row.scaled_add(-dot, &a_row);
    }
    d_logits *= scale;

    let d_queries = d_logits.dot(&trace.keys);
    let d_keys = d_logits.t().dot(&trace.queries);

    let x_t = trace.input.t();
    let grads = AttentionLayerParams {
        w_q: x_t.dot(&d_queries),
        w_k: x_t.dot(&d_keys),
        w_v: x_t.dot(&d_values),
    };
    let d_x = d_queries.dot(&params.w_q.t())
        + d_keys.dot(&params.w_k.t())
        + d_values.dot(&params.w_v.t());
    (d_x, grads)
}

/// Applies the layers in sequence. `dropout = None` selects eval mode.
pub fn forward_stack(
    x0: ArrayView2<f64>,
    layers: &[AttentionLayerParams],
    dropout_rate: f64,
    dropout: Option<DropoutStream>,
) -> Result<(Array2<f64>, TransformerTrace)> {
    if layers.is_empty() {
        return Err(ShgtError::Config(
            "transformer needs at least one layer".into(),
        ));
    }
    let mut x = x0.to_owned();
    let mut traces = Vec::with_capacity(layers.len());
    for (l, params) in layers.iter().enumerate() {
        let mut rng = dropout.map(|s| s.layer_rng(l));
        let (next, trace) = attention_layer(x.view(), params, dropout_rate, rng.as_mut(), l)?;
        traces.push(trace);
        x = next;
    }
    Ok((
        x.clone(),
        TransformerTrace {
            layers: traces,
            output: x,
        },
    ))
}

/// Reverse traversal of [`forward_stack`].
pub fn backward_stack(
    d_out: ArrayView2<f64>,
    layers: &[AttentionLayerParams],
    trace: &TransformerTrace,
) -> (Array2<f64>, Vec<AttentionLayerParams>) {
    let mut grads = Vec::with_capacity(layers.len());
    let mut upstream = d_out.to_owned();
    for (params, layer) in layers.iter().zip(&trace.layers).rev() {
        let (d_x, g) = attention_backward(upstream.view(), params, layer);
        grads.push(g);
        upstream = d_x;
    }
    grads.reverse();
    (upstream, grads)
}
