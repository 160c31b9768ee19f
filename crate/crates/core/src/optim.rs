//! Bias-corrected adaptive-moment optimizer over a [`ParameterSet`].

use crate::error::{Result, ShgtError};
use crate::model::{GradientSet, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    /// First moments.
    pub m: ParameterSet,
    /// Second moments.
    pub v: ParameterSet,
}

impl OptimizerState {
    pub fn new(params: &ParameterSet, config: AdamConfig) -> Self {
        OptimizerState {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One update. Fails without touching anything if a gradient is non-finite
/// or shapes disagree.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &GradientSet,
    state: &mut OptimizerState,
) -> Result<()> {
    let g_tensors = grads.tensors();
    let p_tensors = params.tensors();
    if g_tensors.len() != p_tensors.len() {
        return Err(ShgtError::Config(
            "gradient set does not match parameter set".into(),
        ));
    }
    for ((pn, p), (gn, g)) in p_tensors.iter().zip(&g_tensors) {
        if pn != gn || p.dim() != g.dim() {
            return Err(ShgtError::Shape {
                context: format!("adam step on {pn}"),
                expected: p.dim(),
                found: g.dim(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(ShgtError::NonFinite {
                stage: format!("gradient of {gn}"),
            });
        }
    }

    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);

    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for ((((_, p), (_, g)), (_, m)), (_, v)) in params
        .tensors_mut()
        .into_iter()
        .zip(g_tensors)
        .zip(ms)
        .zip(vs)
    {
        ndarray::Zip::from(p)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|p, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    Ok(())
}
