//! Central finite-difference gradient checking.
//!
//! Only the forward pass of the graph is used to form the numerical
//! estimate, which keeps it independent of every backward rule it checks.

use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::math;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-6;

/// Relative error of two gradient vectors: `|a - n| / max(|a|, |n|)`, or 0
/// when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| math::sqrt(v.map(|x| x * x).sum());
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Analytic gradient of `f` at `inputs`, one tensor per input.
pub fn analytic<F>(inputs: &[Tensor], f: &F) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| g.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect())
}

fn evaluate<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    Ok(g.value(loss).item())
}

/// Central-difference gradient of `f` at `inputs` with step `h`.
pub fn numeric<F>(inputs: &[Tensor], f: &F, h: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut grad = Tensor::zeros(inputs[k].shape());
        for j in 0..inputs[k].len() {
            let x0 = inputs[k].data()[j];
            work[k].data_mut()[j] = x0 + h;
            let fp = evaluate(&work, f)?;
            work[k].data_mut()[j] = x0 - h;
            let fm = evaluate(&work, f)?;
            work[k].data_mut()[j] = x0;
            grad.data_mut()[j] = (fp - fm) / (2.0 * h);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Largest per-input relative error between analytic and numeric gradients.
pub fn max_relative_error<F>(inputs: &[Tensor], f: F, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let a = analytic(inputs, &f)?;
    let n = numeric(inputs, &f, h)?;
    Ok(a.iter()
        .zip(&n)
        .map(|(a, n)| relative_error(a.data(), n.data()))
        .fold(0.0, f64::max))
}
