//! Loop-by-loop reference forms of the network and losses, written without
//! the tape so they can check it.

#![allow(dead_code)]

use scen_core::model::ScenParams;
use scen_core::nn::{Linear, Mlp};
use scen_core::stm::StmParams;

pub fn linear(l: &Linear, x: &[f64]) -> Vec<f64> {
    let (n_in, n_out) = (l.in_dim(), l.out_dim());
    assert_eq!(x.len(), n_in);
    let w = l.weight.data();
    (0..n_out)
        .map(|j| l.bias.data()[j] + (0..n_in).map(|i| x[i] * w[i * n_out + j]).sum::<f64>())
        .collect()
}

pub fn mlp(m: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (i, l) in m.layers.iter().enumerate() {
        if i > 0 {
            h = h.iter().map(|&v| v.max(0.0)).collect();
        }
        h = linear(l, &h);
    }
    h
}

pub fn encode(p: &ScenParams, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let z = linear(&p.fc, x);
    (mlp(&p.e_s, &z), mlp(&p.e_o, &z))
}

/// Naive softmax, then log; inputs here are small enough not to overflow.
pub fn log_probs(logits: &[f64]) -> Vec<f64> {
    let z: f64 = logits.iter().map(|v| v.exp()).sum();
    logits.iter().map(|v| (v.exp() / z).ln()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Zero rows stay zero, as with the clamped norm on the tape.
pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt().max(scen_core::autodiff::NORM_EPS);
    v.iter().map(|x| x / n).collect()
}

pub fn info_nce(a: &[f64], p: &[f64], negs: &[Vec<f64>], tau: f64, normalize: bool) -> f64 {
    let f = |v: &[f64]| if normalize { unit(v) } else { v.to_vec() };
    let (a, p) = (f(a), f(p));
    let pos = (dot(&a, &p) / tau).exp();
    let neg: f64 = negs.iter().map(|n| (dot(&a, &f(n)) / tau).exp()).sum();
    -(pos / (pos + neg)).ln()
}

/// `CE(C_a(h_s), a) + CE(C_o(h_o), o)` for one row.
pub fn classification(p: &ScenParams, h_s: &[f64], h_o: &[f64], state: usize, object: usize) -> f64 {
    -log_probs(&mlp(&p.c_a, h_s))[state] - log_probs(&mlp(&p.c_o, h_o))[object]
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn d_prob(stm: &StmParams, x: &[f64]) -> f64 {
    sigmoid(mlp(&stm.d, x)[0])
}

pub fn generate(stm: &StmParams, h_t: &[f64], h_o: &[f64]) -> Vec<f64> {
    let z: Vec<f64> = h_t.iter().chain(h_o).copied().collect();
    mlp(&stm.g, &z)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
