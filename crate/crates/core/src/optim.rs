//! Losses, the accuracy metric and parameter update rules.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::Params;
use crate::tensor::{format_shape, Tensor};

pub const BCE_CLAMP: f32 = 1e-7;

/// Mean binary cross-entropy and its gradient with respect to `pred`.
///
/// Predictions are clamped to `[1e-7, 1 - 1e-7]`; the gradient is zero where
/// the clamp is active.
pub fn bce_loss(pred: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("bce", format_shape(pred.shape()), format_shape(target.shape())));
    }
    let n = pred.len() as f32;
    let (lo, hi) = (BCE_CLAMP, 1.0 - BCE_CLAMP);
    let mut total = 0.0f64;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let q = p.clamp(lo, hi);
        total -= f64::from(t) * f64::from(q).ln() + f64::from(1.0 - t) * f64::from(1.0 - q).ln();
        grad.push(if p < lo || p > hi { 0.0 } else { (-t / q + (1.0 - t) / (1.0 - q)) / n });
    }
    Ok(((total / f64::from(n)) as f32, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// Mean binary cross-entropy of `sigmoid(logits)` against `target`, computed
/// stably from the logits; the gradient is `(sigmoid(logits) - target) / n`.
pub fn bce_with_logits_loss(logits: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    if logits.shape() != target.shape() {
        return Err(Error::shape("bce", format_shape(logits.shape()), format_shape(target.shape())));
    }
    let n = logits.len() as f32;
    let mut total = 0.0f64;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.data().iter().zip(target.data()) {
        let (z64, t64) = (f64::from(z), f64::from(t));
        total += z64.max(0.0) - z64 * t64 + (-z64.abs()).exp().ln_1p();
        let p = if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        };
        grad.push((p - t) / n);
    }
    Ok(((total / f64::from(n)) as f32, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Mean squared error and its gradient.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse", format_shape(pred.shape()), format_shape(target.shape())));
    }
    let n = pred.len() as f32;
    let mut total = 0.0f64;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        total += f64::from(d) * f64::from(d);
        grad.push(2.0 * d / n);
    }
    Ok(((total / f64::from(n)) as f32, Tensor::new(pred.shape().to_vec(), grad)?))
}

fn check_labels(logits: &Tensor, labels: &[usize]) -> Result<usize> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::shape("logits", format!("({},K)", labels.len()), format_shape(logits.shape())));
    }
    let k = logits.shape()[1];
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    Ok(k)
}

/// Mean softmax cross-entropy over a batch of logits.
///
/// The gradient is `(softmax(logits) - one_hot) / batch`.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[usize]) -> Result<(f32, Tensor)> {
    let k = check_labels(logits, labels)?;
    let batch = labels.len();
    let probs = crate::graph::softmax_rows(logits);
    let mut total = 0.0f64;
    for (row, &label) in logits.data().chunks(k).zip(labels) {
        // log-sum-exp in f64 keeps the saturated case exact
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let lse: f64 = row.iter().map(|&v| f64::from(v - max).exp()).sum::<f64>().ln();
        total += lse - f64::from(row[label] - max);
    }
    let mut grad = probs;
    for (row, &label) in grad.data_mut().chunks_mut(k).zip(labels) {
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v /= batch as f32;
        }
    }
    Ok(((total / batch as f64) as f32, grad))
}

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Number of rows whose argmax equals the label.
pub fn correct_count(logits: &Tensor, labels: &[usize]) -> Result<usize> {
    check_labels(logits, labels)?;
    Ok(argmax_rows(logits).iter().zip(labels).filter(|(p, l)| p == l).count())
}

pub fn accuracy(logits: &Tensor, labels: &[usize]) -> Result<f32> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(correct_count(logits, labels)? as f32 / labels.len() as f32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateRule {
    Sgd { learning_rate: f32 },
    SgdMomentum { learning_rate: f32, momentum: f32 },
    Adam { learning_rate: f32, beta1: f32, beta2: f32, eps: f32 },
}

impl Default for UpdateRule {
    fn default() -> Self {
        UpdateRule::Adam { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl UpdateRule {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidHyperparameter(m.to_string()));
        let unit = |v: f32| (0.0..1.0).contains(&v);
        let positive = |v: f32| v > 0.0;
        match *self {
            UpdateRule::Sgd { learning_rate } if !positive(learning_rate) => bad("learning rate must be positive"),
            UpdateRule::SgdMomentum { learning_rate, momentum } if !positive(learning_rate) || !unit(momentum) => {
                bad("learning rate must be positive and momentum in [0, 1)")
            }
            UpdateRule::Adam { learning_rate, beta1, beta2, eps }
                if !positive(learning_rate) || !unit(beta1) || !unit(beta2) || !positive(eps) =>
            {
                bad("Adam needs lr > 0, betas in [0, 1) and eps > 0")
            }
            _ => Ok(()),
        }
    }

    pub fn learning_rate(&self) -> f32 {
        match *self {
            UpdateRule::Sgd { learning_rate }
            | UpdateRule::SgdMomentum { learning_rate, .. }
            | UpdateRule::Adam { learning_rate, .. } => learning_rate,
        }
    }
}

/// Update rule plus per-parameter moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    rule: UpdateRule,
    first: BTreeMap<String, Vec<f32>>,
    second: BTreeMap<String, Vec<f32>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(rule: UpdateRule) -> Result<Self> {
        rule.validate()?;
        Ok(Self { rule, first: BTreeMap::new(), second: BTreeMap::new(), step: 0 })
    }

    pub fn rule(&self) -> UpdateRule {
        self.rule
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, name: &str) -> Option<&[f32]> {
        self.first.get(name).map(Vec::as_slice)
    }

    pub fn second_moment(&self, name: &str) -> Option<&[f32]> {
        self.second.get(name).map(Vec::as_slice)
    }

    /// Applies one update in place. `grads` must hold exactly the keys of `params`.
    pub fn apply(&mut self, params: &mut Params, grads: &Params) -> Result<()> {
        if let Some(name) =
            params.names().find(|n| !grads.contains(n)).or_else(|| grads.names().find(|n| !params.contains(n)))
        {
            return Err(Error::KeyMismatch(name.to_string()));
        }
        for (name, g) in grads.iter() {
            let p = params.get(name).expect("keys checked");
            if p.shape() != g.shape() {
                return Err(Error::shape(name, format_shape(p.shape()), format_shape(g.shape())));
            }
        }
        self.step += 1;
        let step = self.step;
        for (name, p) in params.iter_mut() {
            let g = grads.get(name).expect("keys checked").data();
            let p = p.data_mut();
            match self.rule {
                UpdateRule::Sgd { learning_rate } => {
                    for (w, &d) in p.iter_mut().zip(g) {
                        *w -= learning_rate * d;
                    }
                }
                UpdateRule::SgdMomentum { learning_rate, momentum } => {
                    let v = self.first.entry(name.to_string()).or_insert_with(|| vec![0.0; p.len()]);
                    for ((w, &d), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                        *v = momentum * *v + d;
                        *w -= learning_rate * *v;
                    }
                }
                UpdateRule::Adam { learning_rate, beta1, beta2, eps } => {
                    let m = self.first.entry(name.to_string()).or_insert_with(|| vec![0.0; p.len()]);
                    let v = self.second.entry(name.to_string()).or_insert_with(|| vec![0.0; p.len()]);
                    let c1 = 1.0 - beta1.powi(step as i32);
                    let c2 = 1.0 - beta2.powi(step as i32);
                    for (((w, &d), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = beta1 * *m + (1.0 - beta1) * d;
                        *v = beta2 * *v + (1.0 - beta2) * d * d;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *w -= learning_rate * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
