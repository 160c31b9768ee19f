//! Structural encoder: code embeddings, mean-pooled visit embeddings, the
//! incidence projections `S_v = H·W_v`, `S_e = Hᵀ·W_e`, and their fusion
//! with the raw embeddings.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, ShgtError};
use crate::hypergraph::Hypergraph;

/// Code embeddings and the visit embeddings pooled from them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    pub x_v: Array2<f64>,
    pub x_e: Array2<f64>,
}

impl EmbeddingState {
    pub fn new(x_v: Array2<f64>, h: &Hypergraph) -> Result<Self> {
        let x_e = mean_pool_visits(x_v.view(), h)?;
        Ok(EmbeddingState { x_v, x_e })
    }

    pub fn dim(&self) -> usize {
        self.x_v.ncols()
    }
}

/// `W_v` is `n × d` and `W_e` is `m × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralParams {
    pub w_v: Array2<f64>,
    pub w_e: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedEmbeddings {
    pub z_v: Array2<f64>,
    pub z_e: Array2<f64>,
}

/// Uniform on `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Array2<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-a..=a))
}

/// Draws `X_v` (m×d), `W_v` (n×d) and `W_e` (m×d) from one seeded stream.
pub fn init_embeddings(
    m: usize,
    n: usize,
    d: usize,
    seed: u64,
) -> Result<(Array2<f64>, StructuralParams)> {
    if m == 0 || n == 0 || d == 0 {
        return Err(ShgtError::Config(format!(
            "embedding sizes must be positive (m={m}, n={n}, d={d})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_v = xavier_uniform(m, d, m, d, &mut rng);
    let w_v = xavier_uniform(n, d, n, d, &mut rng);
    let w_e = xavier_uniform(m, d, m, d, &mut rng);
    Ok((x_v, StructuralParams { w_v, w_e }))
}

/// `X_e[j] = mean of X_v[i]` over the members `i` of visit `j`.
pub fn mean_pool_visits(x_v: ArrayView2<f64>, h: &Hypergraph) -> Result<Array2<f64>> {
    if x_v.nrows() != h.num_nodes() {
        return Err(ShgtError::Shape {
            context: "mean pooling".into(),
            expected: (h.num_nodes(), x_v.ncols()),
            found: x_v.dim(),
        });
    }
    let mut x_e = Array2::zeros((h.num_edges(), x_v.ncols()));
    for j in 0..h.num_edges() {
        let members = h.edge_nodes(j);
        assert!(!members.is_empty(), "hyperedge {j} is empty");
        let mut row = x_e.row_mut(j);
        for &i in members {
            row += &x_v.row(i);
        }
        row /= members.len() as f64;
    }
    Ok(x_e)
}

/// Adjoint of [`mean_pool_visits`]: scatters `d_x_e[j] / deg(j)` onto every
/// member code of visit `j`.
pub fn mean_pool_backward(d_x_e: ArrayView2<f64>, h: &Hypergraph) -> Array2<f64> {
    let mut d_x_v = Array2::zeros((h.num_nodes(), d_x_e.ncols()));
    for j in 0..h.num_edges() {
        let members = h.edge_nodes(j);
        let scaled = &d_x_e.row(j) / members.len() as f64;
        for &i in members {
            let mut row = d_x_v.row_mut(i);
            row += &scaled;
        }
    }
    d_x_v
}

/// Returns `(S_v, S_e) = (H·W_v, Hᵀ·W_e)`.
pub fn structural_embed(
    h: &Hypergraph,
    params: &StructuralParams,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let s_v = h.mul_dense(params.w_v.view())?;
    let s_e = h.t_mul_dense(params.w_e.view())?;
    Ok((s_v, s_e))
}

/// Gradients of `W_v` and `W_e` given upstream `dS_v` and `dS_e`.
pub fn structural_backward(
    h: &Hypergraph,
    d_s_v: ArrayView2<f64>,
    d_s_e: ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let d_w_v = h.t_mul_dense(d_s_v)?;
    let d_w_e = h.mul_dense(d_s_e)?;
    Ok((d_w_v, d_w_e))
}

pub fn fuse(
    x_v: ArrayView2<f64>,
    x_e: ArrayView2<f64>,
    s_v: ArrayView2<f64>,
    s_e: ArrayView2<f64>,
) -> Result<FusedEmbeddings> {
    for (context, a, b) in [("fuse codes", x_v, s_v), ("fuse visits", x_e, s_e)] {
        if a.dim() != b.dim() {
            return Err(ShgtError::Shape {
                context: context.into(),
                expected: a.dim(),
                found: b.dim(),
            });
        }
    }
    Ok(FusedEmbeddings {
        z_v: &s_v + &x_v,
        z_e: &s_e + &x_e,
    })
}
