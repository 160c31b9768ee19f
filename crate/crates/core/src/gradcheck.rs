//! Central finite-difference verification of analytic gradients.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, ShgtError};
use crate::model::ParameterSet;

/// Anything that exposes named 2-D tensors for perturbation.
pub trait NamedTensors {
    fn tensor_names(&self) -> Vec<String>;
    fn get_tensor(&self, name: &str) -> Option<&Array2<f64>>;
    fn get_tensor_mut(&mut self, name: &str) -> Option<&mut Array2<f64>>;
}

impl NamedTensors for ParameterSet {
    fn tensor_names(&self) -> Vec<String> {
        self.tensors().into_iter().map(|(n, _)| n).collect()
    }

    fn get_tensor(&self, name: &str) -> Option<&Array2<f64>> {
        self.tensor(name)
    }

    fn get_tensor_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.tensor_mut(name)
    }
}

impl NamedTensors for BTreeMap<String, Array2<f64>> {
    fn tensor_names(&self) -> Vec<String> {
        self.keys().cloned().collect()
    }

    fn get_tensor(&self, name: &str) -> Option<&Array2<f64>> {
        self.get(name)
    }

    fn get_tensor_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.get_mut(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Coordinate {
    pub tensor: String,
    pub index: (usize, usize),
}

/// Every coordinate of every tensor.
pub fn all_coordinates<P: NamedTensors>(params: &P) -> Vec<Coordinate> {
    let mut out = Vec::new();
    for name in params.tensor_names() {
        let t = params.get_tensor(&name).expect("listed tensor exists");
        for r in 0..t.nrows() {
            for c in 0..t.ncols() {
                out.push(Coordinate {
                    tensor: name.clone(),
                    index: (r, c),
                });
            }
        }
    }
    out
}

/// `count` coordinates drawn uniformly (with replacement) over all entries.
pub fn sample_coordinates<P: NamedTensors>(params: &P, count: usize, seed: u64) -> Vec<Coordinate> {
    let all = all_coordinates(params);
    if all.is_empty() {
        return all;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| all[rng.gen_range(0..all.len())].clone())
        .collect()
}

/// `|a − n| / max(|a|, |n|, 1e-12)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_relative_error: f64,
    /// Coordinate with the largest error and its analytic / numeric values.
    pub worst: Option<((usize, usize), f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub step: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.tensors
            .iter()
            .all(|t| t.max_relative_error < tolerance)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:>8} {:>14}", "tensor", "coords", "max rel err")?;
        for t in &self.tensors {
            writeln!(
                f,
                "{:<14} {:>8} {:>14.3e}",
                t.name, t.checked, t.max_relative_error
            )?;
        }
        Ok(())
    }
}

/// Compares `analytic` against `(f(θ+h) − f(θ−h)) / 2h` at `coordinates`.
/// `loss_fn` must be deterministic; it is evaluated twice at `params` first
/// and the check aborts if the two values differ.
pub fn finite_difference_check<P, F>(
    params: &P,
    analytic: &P,
    mut loss_fn: F,
    step: f64,
    coordinates: &[Coordinate],
) -> Result<GradCheckReport>
where
    P: NamedTensors + Clone,
    F: FnMut(&P) -> Result<f64>,
{
    let first = loss_fn(params)?;
    let second = loss_fn(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(ShgtError::NonDeterministic { first, second });
    }

    let mut by_tensor: BTreeMap<String, TensorCheck> = BTreeMap::new();
    let mut probe = params.clone();
    for coord in coordinates {
        let missing = || ShgtError::Config(format!("unknown tensor {:?}", coord.tensor));
        let a = *analytic
            .get_tensor(&coord.tensor)
            .ok_or_else(missing)?
            .get(coord.index)
            .ok_or_else(missing)?;
        let original = *params
            .get_tensor(&coord.tensor)
            .ok_or_else(missing)?
            .get(coord.index)
            .ok_or_else(missing)?;

        let set = |p: &mut P, v: f64| {
            p.get_tensor_mut(&coord.tensor).expect("checked above")[coord.index] = v;
        };
        set(&mut probe, original + step);
        let plus = loss_fn(&probe)?;
        set(&mut probe, original - step);
        let minus = loss_fn(&probe)?;
        set(&mut probe, original);

        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(a, numeric);
        let entry = by_tensor
            .entry(coord.tensor.clone())
            .or_insert_with(|| TensorCheck {
                name: coord.tensor.clone(),
                checked: 0,
                max_relative_error: 0.0,
                worst: None,
            });
        entry.checked += 1;
        if entry.worst.is_none() || err > entry.max_relative_error {
            entry.max_relative_error = err;
            entry.worst = Some((coord.index, a, numeric));
        }
    }

    // Report in the parameter set's own order.
    let order = params.tensor_names();
    let mut tensors: Vec<TensorCheck> = by_tensor.into_values().collect();
    tensors.sort_by_key(|t| order.iter().position(|n| *n == t.name));
    Ok(GradCheckReport { step, tensors })
}
