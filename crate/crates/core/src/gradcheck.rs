//! Finite-difference verification of [`crate::graph::backward`].
//!
//! Analytic gradients come from the `f32` tape. Numeric gradients come from
//! central differences over a separate `f64` evaluator that implements every
//! layer with direct loops (no im2col, no gemm), so the two sides share no
//! kernel code. A coordinate whose `±ε` probe flips a ReLU sign, a max-pool
//! winner or the BCE clamp is non-differentiable at that scale and is
//! skipped; the count is reported.

use std::collections::BTreeMap;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{backward, forward, Mode};
use crate::optim::{bce_loss, cross_entropy_loss, mse_loss, BCE_CLAMP};
use crate::params::{init_params, Params};
use crate::rng::{derive, rng_from};
use crate::spec::{LayerKind, LayerSpec, NetworkSpec};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    Bce,
    /// Softmax cross-entropy; a trailing Softmax layer is folded into the loss.
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max over checked coordinates of `|a - n| / max(|a| + |n|, 1e-8)`.
    pub max_rel_error: f64,
    /// `name[index]` of the coordinate attaining the maximum.
    pub worst: Option<String>,
    pub checked: usize,
    pub skipped: usize,
}

/// Gradient check with seeded parameters and targets.
///
/// Weights are He-initialized and biases drawn from `U(-0.1, 0.1)` so bias
/// paths are exercised away from zero. Dropout runs in eval mode.
pub fn grad_check(
    spec: &NetworkSpec,
    input: &Tensor,
    loss: LossKind,
    epsilon: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let params = check_params(spec, seed);
    grad_check_params(spec, &params, input, loss, epsilon, seed, |_, _| {})
}

pub fn check_params(spec: &NetworkSpec, seed: u64) -> Params {
    let mut params = init_params(spec, seed);
    let mut rng = rng_from(derive(seed, "gradcheck-bias"));
    for (name, t) in params.iter_mut() {
        if name.ends_with(".bias") {
            for v in t.data_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }
    params
}

/// As [`grad_check`] with explicit parameters. `tamper` may rewrite each
/// analytic gradient before comparison (negative-control fixtures).
pub fn grad_check_params(
    spec: &NetworkSpec,
    params: &Params,
    input: &Tensor,
    loss: LossKind,
    epsilon: f64,
    seed: u64,
    mut tamper: impl FnMut(&str, &mut Tensor),
) -> Result<GradCheckReport> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidHyperparameter("epsilon must be positive".into()));
    }
    let spec = loss_spec(spec, loss)?;
    params.validate(&spec)?;
    if spec.param_shapes().is_empty() {
        return Ok(GradCheckReport { max_rel_error: 0.0, worst: None, checked: 0, skipped: 0 });
    }
    let out_shape = spec.output_shape(input.shape())?;
    let target = Target::seeded(loss, &out_shape, seed)?;

    let (output, tape) = forward(&spec, params, input, Mode::Eval, &mut rng_from(0))?;
    let (_, loss_grad) = target.analytic(&output)?;
    let mut grads = backward(&tape, &loss_grad)?;
    for (name, g) in grads.iter_mut() {
        tamper(name, g);
    }

    let mut reference = Reference::new(&spec, params, input)?;
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, checked: 0, skipped: 0 };
    for (layer_index, layer) in spec.layers().iter().enumerate() {
        if layer.kind.param_shapes().is_none() {
            continue;
        }
        for name in [layer.weight_name(), layer.bias_name()] {
            let analytic = grads.require(&name)?;
            for i in 0..analytic.len() {
                let Some(numeric) = reference.central_difference(layer_index, &name, i, epsilon, &target) else {
                    report.skipped += 1;
                    continue;
                };
                let a = f64::from(analytic.data()[i]);
                let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
                report.checked += 1;
                if report.worst.is_none() || err > report.max_rel_error {
                    report.max_rel_error = err;
                    report.worst = Some(format!("{name}[{i}]"));
                }
            }
        }
    }
    Ok(report)
}

fn loss_spec(spec: &NetworkSpec, loss: LossKind) -> Result<NetworkSpec> {
    let mut layers = spec.layers().to_vec();
    if loss == LossKind::CrossEntropy && matches!(layers.last(), Some(l) if l.kind == LayerKind::Softmax) {
        layers.pop();
    }
    NetworkSpec::new(layers)
}

enum Target {
    Dense(Tensor, LossKind),
    Labels(Vec<usize>),
}

impl Target {
    fn seeded(loss: LossKind, shape: &[usize], seed: u64) -> Result<Self> {
        let mut rng = rng_from(derive(seed, "gradcheck-target"));
        Ok(match loss {
            LossKind::Mse => Target::Dense(Tensor::from_fn(shape, |_| rng.random::<f32>()), loss),
            LossKind::Bce => {
                Target::Dense(Tensor::from_fn(shape, |_| if rng.random::<bool>() { 1.0 } else { 0.0 }), loss)
            }
            LossKind::CrossEntropy => {
                if shape.len() != 2 {
                    return Err(Error::shape("cross-entropy", "(N,K) logits", crate::tensor::format_shape(shape)));
                }
                Target::Labels((0..shape[0]).map(|_| rng.random_range(0..shape[1])).collect())
            }
        })
    }

    fn analytic(&self, output: &Tensor) -> Result<(f32, Tensor)> {
        match self {
            Target::Dense(t, LossKind::Bce) => bce_loss(output, t),
            Target::Dense(t, _) => mse_loss(output, t),
            Target::Labels(labels) => cross_entropy_loss(output, labels),
        }
    }

    /// `f64` loss plus clamp-activity flags for the kink signature.
    fn reference(&self, output: &[f64], k: usize, sig: &mut Vec<u32>) -> f64 {
        match self {
            Target::Dense(t, LossKind::Bce) => {
                let (lo, hi) = (f64::from(BCE_CLAMP), 1.0 - f64::from(BCE_CLAMP));
                let n = output.len() as f64;
                output
                    .iter()
                    .zip(t.data())
                    .map(|(&p, &t)| {
                        sig.push(u32::from(p < lo) | (u32::from(p > hi) << 1));
                        let q = p.clamp(lo, hi);
                        let t = f64::from(t);
                        -(t * q.ln() + (1.0 - t) * (1.0 - q).ln())
                    })
                    .sum::<f64>()
                    / n
            }
            Target::Dense(t, _) => {
                let n = output.len() as f64;
                output.iter().zip(t.data()).map(|(&p, &t)| (p - f64::from(t)).powi(2)).sum::<f64>() / n
            }
            Target::Labels(labels) => {
                let mut total = 0.0;
                for (row, &label) in output.chunks(k).zip(labels) {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    total += lse - (row[label] - max);
                }
                total / labels.len() as f64
            }
        }
    }
}

#[derive(Clone)]
struct Act {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Direct-loop `f64` evaluator with cached base activations.
struct Reference<'a> {
    layers: &'a [LayerSpec],
    params: BTreeMap<String, Vec<f64>>,
    /// `acts[i]` is the base input of layer `i`.
    acts: Vec<Act>,
    /// `sigs[i]` is the base kink signature of layers `i..` plus the loss, computed lazily.
    sigs: Vec<Option<Vec<u32>>>,
}

impl<'a> Reference<'a> {
    fn new(spec: &'a NetworkSpec, params: &Params, input: &Tensor) -> Result<Self> {
        let params =
            params.iter().map(|(n, t)| (n.to_string(), t.data().iter().map(|&v| f64::from(v)).collect())).collect();
        let mut reference = Self {
            layers: spec.layers(),
            params,
            acts: vec![Act {
                shape: input.shape().to_vec(),
                data: input.data().iter().map(|&v| f64::from(v)).collect(),
            }],
            sigs: vec![None; spec.len()],
        };
        let mut sig = Vec::new();
        let layers = reference.layers;
        for layer in &layers[..layers.len().saturating_sub(1)] {
            let next = reference.layer(layer, reference.acts.last().expect("seeded"), &mut sig);
            reference.acts.push(next);
        }
        Ok(reference)
    }

    fn suffix(&self, start: usize, target: &Target) -> (f64, Vec<u32>) {
        let mut sig = Vec::new();
        let mut current = self.acts[start].clone();
        for layer in &self.layers[start..] {
            current = self.layer(layer, &current, &mut sig);
        }
        let k = *current.shape.last().unwrap_or(&1);
        let loss = target.reference(&current.data, k, &mut sig);
        (loss, sig)
    }

    fn central_difference(
        &mut self,
        layer_index: usize,
        name: &str,
        index: usize,
        epsilon: f64,
        target: &Target,
    ) -> Option<f64> {
        if self.sigs[layer_index].is_none() {
            self.sigs[layer_index] = Some(self.suffix(layer_index, target).1);
        }
        let original = self.params[name][index];
        self.params.get_mut(name).expect("param")[index] = original + epsilon;
        let (up, sig_up) = self.suffix(layer_index, target);
        self.params.get_mut(name).expect("param")[index] = original - epsilon;
        let (down, sig_down) = self.suffix(layer_index, target);
        self.params.get_mut(name).expect("param")[index] = original;
        let base = self.sigs[layer_index].as_ref().expect("computed above");
        (sig_up == *base && sig_down == *base).then(|| (up - down) / (2.0 * epsilon))
    }

    fn layer(&self, layer: &LayerSpec, x: &Act, sig: &mut Vec<u32>) -> Act {
        let p = |suffix: &str| &self.params[&format!("{}.{suffix}", layer.name)];
        match layer.kind {
            LayerKind::Conv2D { out_channels, kernel_size: k, stride: s, padding: pad, .. } => {
                let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
                let oh = (h + 2 * pad - k) / s + 1;
                let ow = (w + 2 * pad - k) / s + 1;
                let (wt, b) = (p("weight"), p("bias"));
                let mut out = vec![0.0; n * out_channels * oh * ow];
                for ni in 0..n {
                    for co in 0..out_channels {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut acc = b[co];
                                for ci in 0..c {
                                    for ki in 0..k {
                                        for kj in 0..k {
                                            let y = (oy * s + ki) as isize - pad as isize;
                                            let xx = (ox * s + kj) as isize - pad as isize;
                                            if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                                continue;
                                            }
                                            acc += wt[((co * c + ci) * k + ki) * k + kj]
                                                * x.data[((ni * c + ci) * h + y as usize) * w + xx as usize];
                                        }
                                    }
                                }
                                out[((ni * out_channels + co) * oh + oy) * ow + ox] = acc;
                            }
                        }
                    }
                }
                Act { shape: vec![n, out_channels, oh, ow], data: out }
            }
            LayerKind::TransposeConv2D { out_channels, kernel_size: k, stride: s, padding: pad, .. } => {
                let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
                let oh = (h - 1) * s + k - 2 * pad;
                let ow = (w - 1) * s + k - 2 * pad;
                let (wt, b) = (p("weight"), p("bias"));
                let mut out = vec![0.0; n * out_channels * oh * ow];
                for ni in 0..n {
                    for co in 0..out_channels {
                        for v in &mut out[(ni * out_channels + co) * oh * ow..][..oh * ow] {
                            *v = b[co];
                        }
                    }
                    for ci in 0..c {
                        for iy in 0..h {
                            for ix in 0..w {
                                let xv = x.data[((ni * c + ci) * h + iy) * w + ix];
                                for co in 0..out_channels {
                                    for ki in 0..k {
                                        for kj in 0..k {
                                            let y = (iy * s + ki) as isize - pad as isize;
                                            let xx = (ix * s + kj) as isize - pad as isize;
                                            if y < 0 || xx < 0 || y >= oh as isize || xx >= ow as isize {
                                                continue;
                                            }
                                            out[((ni * out_channels + co) * oh + y as usize) * ow + xx as usize] +=
                                                wt[((ci * out_channels + co) * k + ki) * k + kj] * xv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Act { shape: vec![n, out_channels, oh, ow], data: out }
            }
            LayerKind::Dense { in_features, out_features } => {
                let n = x.shape[0];
                let (wt, b) = (p("weight"), p("bias"));
                let mut out = vec![0.0; n * out_features];
                for ni in 0..n {
                    for o in 0..out_features {
                        out[ni * out_features + o] = b[o]
                            + (0..in_features)
                                .map(|i| wt[o * in_features + i] * x.data[ni * in_features + i])
                                .sum::<f64>();
                    }
                }
                Act { shape: vec![n, out_features], data: out }
            }
            LayerKind::MaxPool2D { window, stride } => {
                let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
                let oh = (h - window) / stride + 1;
                let ow = (w - window) / stride + 1;
                let mut out = Vec::with_capacity(n * c * oh * ow);
                for plane in 0..n * c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = (0, f64::NEG_INFINITY);
                            for ky in 0..window {
                                for kx in 0..window {
                                    let v = x.data[(plane * h + oy * stride + ky) * w + ox * stride + kx];
                                    if v > best.1 {
                                        best = (ky * window + kx, v);
                                    }
                                }
                            }
                            sig.push(best.0 as u32);
                            out.push(best.1);
                        }
                    }
                }
                Act { shape: vec![n, c, oh, ow], data: out }
            }
            LayerKind::ReLU => Act {
                shape: x.shape.clone(),
                data: x
                    .data
                    .iter()
                    .map(|&v| {
                        sig.push(u32::from(v > 0.0));
                        v.max(0.0)
                    })
                    .collect(),
            },
            LayerKind::Sigmoid => {
                Act { shape: x.shape.clone(), data: x.data.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect() }
            }
            LayerKind::Softmax => {
                let k = x.shape[1];
                let mut data = x.data.clone();
                for row in data.chunks_mut(k) {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
                    for v in row.iter_mut() {
                        *v = (*v - max).exp() / sum;
                    }
                }
                Act { shape: x.shape.clone(), data }
            }
            LayerKind::Dropout { .. } => x.clone(),
            LayerKind::Flatten => Act { shape: vec![x.shape[0], x.shape[1..].iter().product()], data: x.data.clone() },
        }
    }
}

/// Eval-mode output of the `f64` reference evaluator, for cross-checking the fast path.
pub fn reference_forward(spec: &NetworkSpec, params: &Params, input: &Tensor) -> Result<Vec<f64>> {
    spec.infer_shapes(input.shape())?;
    params.validate(spec)?;
    let reference = Reference::new(spec, params, input)?;
    let last = reference.acts.last().expect("input activation");
    Ok(match spec.layers().last() {
        Some(layer) => reference.layer(layer, last, &mut Vec::new()).data,
        None => last.data.clone(),
    })
}

/// One network of the standard gradient-check suite.
#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub name: String,
    pub spec: NetworkSpec,
    pub input: Tensor,
    pub loss: LossKind,
}

/// Small networks covering every layer kind, plus the reference phase-1,
/// phase-2 and benchmark networks on 8×8 inputs.
pub fn standard_suite(seed: u64) -> Result<Vec<SuiteCase>> {
    use crate::pipeline::{build_phase1_model, ReferenceArchitecture};
    let l = LayerSpec::new;
    let input = |shape: &[usize], label: &str| {
        let mut rng = rng_from(derive(seed, label));
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    };
    let case = |name: &str, layers: Vec<LayerSpec>, shape: &[usize], loss: LossKind| -> Result<SuiteCase> {
        Ok(SuiteCase { name: name.to_string(), spec: NetworkSpec::new(layers)?, input: input(shape, name), loss })
    };
    let arch = ReferenceArchitecture::default();
    let mut phase2 = arch.encoder();
    phase2.extend(arch.phase2_extension((8, 8), true)?);
    let unit = |shape: &[usize], label: &str| input(shape, label).map(|v| 0.5 + 0.5 * v);
    Ok(vec![
        case("conv2d", vec![l("conv", LayerKind::conv(2, 3, 3, 1, 1))], &[2, 2, 5, 5], LossKind::Mse)?,
        case("conv2d_strided", vec![l("conv", LayerKind::conv(2, 2, 3, 2, 1))], &[2, 2, 6, 6], LossKind::Mse)?,
        case(
            "transpose_conv2d",
            vec![l("tconv", LayerKind::transpose_conv(2, 3, 2, 2, 0))],
            &[2, 2, 3, 3],
            LossKind::Mse,
        )?,
        case(
            "transpose_conv2d_overlap",
            vec![l("tconv", LayerKind::transpose_conv(2, 2, 3, 2, 1))],
            &[1, 2, 3, 3],
            LossKind::Mse,
        )?,
        case(
            "maxpool2d",
            vec![l("conv", LayerKind::conv(1, 2, 3, 1, 1)), l("pool", LayerKind::max_pool(2))],
            &[2, 1, 6, 6],
            LossKind::Mse,
        )?,
        case(
            "dense_relu",
            vec![l("fc1", LayerKind::dense(6, 5)), l("relu", LayerKind::ReLU), l("fc2", LayerKind::dense(5, 3))],
            &[4, 6],
            LossKind::Mse,
        )?,
        case(
            "sigmoid_bce",
            vec![l("conv", LayerKind::conv(2, 1, 3, 1, 1)), l("sigmoid", LayerKind::Sigmoid)],
            &[2, 2, 4, 4],
            LossKind::Bce,
        )?,
        case(
            "softmax",
            vec![l("fc", LayerKind::dense(5, 4)), l("softmax", LayerKind::Softmax)],
            &[3, 5],
            LossKind::Mse,
        )?,
        case(
            "softmax_cross_entropy",
            vec![l("fc", LayerKind::dense(5, 4)), l("softmax", LayerKind::Softmax)],
            &[3, 5],
            LossKind::CrossEntropy,
        )?,
        case(
            "dropout_eval",
            vec![
                l("fc1", LayerKind::dense(4, 6)),
                l("drop", LayerKind::Dropout { rate: 0.5 }),
                l("fc2", LayerKind::dense(6, 2)),
            ],
            &[3, 4],
            LossKind::Mse,
        )?,
        case(
            "flatten",
            vec![
                l("conv", LayerKind::conv(1, 2, 3, 1, 0)),
                l("flatten", LayerKind::Flatten),
                l("fc", LayerKind::dense(8, 3)),
            ],
            &[2, 1, 4, 4],
            LossKind::Mse,
        )?,
        SuiteCase {
            name: "reference_phase1".into(),
            spec: build_phase1_model(&arch)?,
            input: unit(&[1, 3, 8, 8], "reference_phase1"),
            loss: LossKind::Bce,
        },
        SuiteCase {
            name: "reference_phase2".into(),
            spec: NetworkSpec::new(phase2)?,
            input: unit(&[1, 3, 8, 8], "reference_phase2"),
            loss: LossKind::CrossEntropy,
        },
        SuiteCase {
            name: "reference_benchmark".into(),
            spec: arch.benchmark_spec((8, 8), 10)?,
            input: unit(&[1, 3, 8, 8], "reference_benchmark"),
            loss: LossKind::CrossEntropy,
        },
    ])
}

/// Runs [`standard_suite`]; `tamper` is passed through to every case.
pub fn run_suite(
    epsilon: f64,
    seed: u64,
    mut tamper: impl FnMut(&str, &mut Tensor),
) -> Result<Vec<(String, GradCheckReport)>> {
    standard_suite(seed)?
        .into_iter()
        .map(|c| {
            let params = check_params(&c.spec, seed);
            let report = grad_check_params(&c.spec, &params, &c.input, c.loss, epsilon, seed, &mut tamper)?;
            Ok((c.name, report))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(layers: Vec<(&str, LayerKind)>) -> NetworkSpec {
        NetworkSpec::new(layers.into_iter().map(|(n, k)| LayerSpec::new(n, k)).collect()).unwrap()
    }

    fn input(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = rng_from(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn two_layer_dense_mse() {
        let spec =
            net(vec![("fc1", LayerKind::dense(5, 6)), ("relu", LayerKind::ReLU), ("fc2", LayerKind::dense(6, 3))]);
        let r = grad_check(&spec, &input(&[4, 5], 1), LossKind::Mse, 1e-3, 11).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert!(r.checked > 0);
    }

    #[test]
    fn conv_sigmoid_bce_micro_net() {
        let spec = net(vec![("conv", LayerKind::conv(1, 1, 3, 1, 1)), ("sig", LayerKind::Sigmoid)]);
        let r = grad_check(&spec, &input(&[1, 1, 4, 4], 2), LossKind::Bce, 1e-3, 5).unwrap();
        assert!(r.max_rel_error < 1e-3, "{r:?}");
    }

    #[test]
    fn parameter_free_stack_is_vacuous() {
        let spec = net(vec![("r1", LayerKind::ReLU), ("r2", LayerKind::ReLU)]);
        let r = grad_check(&spec, &input(&[2, 3], 3), LossKind::Mse, 1e-3, 0).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.checked, 0);
    }

    #[test]
    fn tampered_gradient_is_caught() {
        let spec = net(vec![("fc", LayerKind::dense(3, 2))]);
        let params = check_params(&spec, 1);
        let r = grad_check_params(&spec, &params, &input(&[2, 3], 4), LossKind::Mse, 1e-3, 1, |name, g| {
            if name == "fc.bias" {
                g.data_mut()[0] *= 1.5;
            }
        })
        .unwrap();
        assert!(r.max_rel_error > 0.1);
        assert!(r.worst.as_deref().unwrap().starts_with("fc.bias"));
    }

    #[test]
    fn non_positive_epsilon_rejected() {
        let spec = net(vec![("fc", LayerKind::dense(3, 2))]);
        assert!(grad_check(&spec, &input(&[1, 3], 0), LossKind::Mse, 0.0, 0).is_err());
    }

    #[test]
    fn reference_forward_agrees_with_fast_path() {
        let spec = net(vec![
            ("c", LayerKind::conv(2, 3, 3, 2, 1)),
            ("r", LayerKind::ReLU),
            ("t", LayerKind::transpose_conv(3, 2, 3, 2, 1)),
            ("p", LayerKind::MaxPool2D { window: 3, stride: 1 }),
            ("f", LayerKind::Flatten),
            ("fc", LayerKind::dense(2 * 5 * 5, 4)),
            ("s", LayerKind::Softmax),
        ]);
        let params = check_params(&spec, 8);
        let x = input(&[2, 2, 7, 7], 9);
        let (y, _) = forward(&spec, &params, &x, Mode::Eval, &mut rng_from(0)).unwrap();
        let r = reference_forward(&spec, &params, &x).unwrap();
        for (a, b) in y.data().iter().zip(&r) {
            assert!((f64::from(*a) - b).abs() < 1e-5);
        }
    }
}
