//! Forward evaluation of a [`NetworkSpec`] and reverse-mode gradients.
//!
//! The networks here are plain layer stacks, so the tape is one record per
//! layer holding that layer's input plus whatever auxiliary state its
//! backward rule needs (max-pool routing, dropout masks). Convolution
//! layers process batch samples in parallel; per-sample weight gradients
//! are summed afterwards in sample order, so results do not depend on the
//! number of worker threads.

use std::borrow::Cow;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{gemm, Patches};
use crate::params::Params;
use crate::spec::{LayerKind, LayerSpec, NetworkSpec};
use crate::tensor::{format_shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Aux {
    None,
    PoolArgmax(Vec<u32>),
    DropoutMask(Vec<f32>),
}

#[derive(Debug)]
struct Record {
    input: Tensor,
    aux: Aux,
}

/// Record of one forward pass, consumed by [`backward`].
#[derive(Debug)]
pub struct Tape<'a> {
    spec: &'a NetworkSpec,
    params: &'a Params,
    records: Vec<Record>,
    output: Tensor,
}

impl Tape<'_> {
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Activation entering layer `index`; `index == len()` gives the network output.
    pub fn activation(&self, index: usize) -> Option<&Tensor> {
        match index.cmp(&self.records.len()) {
            std::cmp::Ordering::Less => Some(&self.records[index].input),
            std::cmp::Ordering::Equal => Some(&self.output),
            std::cmp::Ordering::Greater => None,
        }
    }
}

/// Runs `spec` on a batched `input`.
///
/// Dropout draws from `rng` in [`Mode::Train`] only; every other layer is
/// deterministic, so equal `(params, input, mode, rng state)` give
/// bit-identical outputs.
pub fn forward<'a, R: Rng + ?Sized>(
    spec: &'a NetworkSpec,
    params: &'a Params,
    input: &Tensor,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, Tape<'a>)> {
    spec.infer_shapes(input.shape())?;
    let mut records = Vec::with_capacity(spec.len());
    let mut current = input.clone();
    for layer in spec.layers() {
        let (output, aux) = layer_forward(layer, params, &current, mode, rng)?;
        records.push(Record { input: current, aux });
        current = output;
    }
    let tape = Tape { spec, params, records, output: current.clone() };
    Ok((current, tape))
}

/// Gradients of every parameter given `loss_grad = dLoss/dOutput`.
pub fn backward(tape: &Tape<'_>, loss_grad: &Tensor) -> Result<Params> {
    if tape.records.is_empty() {
        return Err(Error::EmptyTape);
    }
    if loss_grad.shape() != tape.output.shape() {
        return Err(Error::shape("loss gradient", format_shape(tape.output.shape()), format_shape(loss_grad.shape())));
    }
    let mut grads = Params::new();
    let mut upstream = loss_grad.clone();
    for (index, (layer, record)) in tape.spec.layers().iter().zip(&tape.records).enumerate().rev() {
        let output = tape.activation(index + 1).expect("tape has an entry per layer");
        let need_input_grad = index > 0;
        if let Some(down) = layer_backward(layer, tape.params, record, output, &upstream, need_input_grad, &mut grads)?
        {
            upstream = down;
        }
    }
    Ok(grads)
}

fn layer_forward<R: Rng + ?Sized>(
    layer: &LayerSpec,
    params: &Params,
    x: &Tensor,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, Aux)> {
    let out = match layer.kind {
        LayerKind::Conv2D { out_channels, kernel_size, stride, padding, .. } => {
            let w = params.require(&layer.weight_name())?;
            let b = params.require(&layer.bias_name())?;
            check_param(layer, w, b)?;
            conv_forward(x, w, b, out_channels, kernel_size, stride, padding)
        }
        LayerKind::TransposeConv2D { out_channels, kernel_size, stride, padding, .. } => {
            let w = params.require(&layer.weight_name())?;
            let b = params.require(&layer.bias_name())?;
            check_param(layer, w, b)?;
            transpose_conv_forward(x, w, b, out_channels, kernel_size, stride, padding)
        }
        LayerKind::Dense { .. } => {
            let w = params.require(&layer.weight_name())?;
            let b = params.require(&layer.bias_name())?;
            check_param(layer, w, b)?;
            dense_forward(x, w, b)
        }
        LayerKind::MaxPool2D { window, stride } => {
            let (y, argmax) = max_pool_forward(x, window, stride);
            return Ok((y, Aux::PoolArgmax(argmax)));
        }
        LayerKind::ReLU => x.map(|v| if v > 0.0 { v } else { 0.0 }),
        LayerKind::Sigmoid => x.map(sigmoid),
        LayerKind::Softmax => softmax_rows(x),
        LayerKind::Dropout { rate } => {
            if mode == Mode::Eval || rate == 0.0 {
                x.clone()
            } else {
                let keep = 1.0 / (1.0 - rate);
                let mask: Vec<f32> =
                    (0..x.len()).map(|_| if rng.random::<f32>() < rate { 0.0 } else { keep }).collect();
                let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
                let y = Tensor::new(x.shape().to_vec(), data)?;
                return Ok((y, Aux::DropoutMask(mask)));
            }
        }
        LayerKind::Flatten => {
            let n = x.shape()[0];
            x.clone().reshape(&[n, x.len() / n])?
        }
    };
    Ok((out, Aux::None))
}

fn layer_backward(
    layer: &LayerSpec,
    params: &Params,
    record: &Record,
    output: &Tensor,
    dy: &Tensor,
    need_input_grad: bool,
    grads: &mut Params,
) -> Result<Option<Tensor>> {
    let x = &record.input;
    let dx = match layer.kind {
        LayerKind::Conv2D { kernel_size, stride, padding, .. } => {
            let w = params.require(&layer.weight_name())?;
            let (dx, dw, db) = conv_backward(x, w, dy, kernel_size, stride, padding, need_input_grad);
            grads.insert(layer.weight_name(), dw);
            grads.insert(layer.bias_name(), db);
            dx
        }
        LayerKind::TransposeConv2D { kernel_size, stride, padding, .. } => {
            let w = params.require(&layer.weight_name())?;
            let (dx, dw, db) = transpose_conv_backward(x, w, dy, kernel_size, stride, padding, need_input_grad);
            grads.insert(layer.weight_name(), dw);
            grads.insert(layer.bias_name(), db);
            dx
        }
        LayerKind::Dense { .. } => {
            let w = params.require(&layer.weight_name())?;
            let (dx, dw, db) = dense_backward(x, w, dy, need_input_grad);
            grads.insert(layer.weight_name(), dw);
            grads.insert(layer.bias_name(), db);
            dx
        }
        LayerKind::MaxPool2D { .. } => {
            let Aux::PoolArgmax(argmax) = &record.aux else { unreachable!("max-pool record without routing") };
            let mut dx = Tensor::zeros(x.shape());
            let d = dx.data_mut();
            for (&src, &g) in argmax.iter().zip(dy.data()) {
                d[src as usize] += g;
            }
            Some(dx)
        }
        LayerKind::ReLU => Some(zip_map(x, dy, |v, g| if v > 0.0 { g } else { 0.0 })),
        LayerKind::Sigmoid => Some(zip_map(output, dy, |y, g| g * y * (1.0 - y))),
        LayerKind::Softmax => Some(softmax_backward(output, dy)),
        LayerKind::Dropout { .. } => match &record.aux {
            Aux::DropoutMask(mask) => {
                let data = dy.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                Some(Tensor::new(dy.shape().to_vec(), data)?)
            }
            _ => Some(dy.clone()),
        },
        LayerKind::Flatten => Some(dy.clone().reshape(x.shape())?),
    };
    Ok(dx)
}

fn check_param(layer: &LayerSpec, w: &Tensor, b: &Tensor) -> Result<()> {
    let (ws, bs) = layer.kind.param_shapes().expect("parameterized layer");
    if w.shape() != ws.as_slice() {
        return Err(Error::shape(layer.weight_name(), format_shape(&ws), format_shape(w.shape())));
    }
    if b.shape() != bs.as_slice() {
        return Err(Error::shape(layer.bias_name(), format_shape(&bs), format_shape(b.shape())));
    }
    Ok(())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("operands share a shape")
}

pub(crate) fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax of a `(N, K)` tensor with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let k = x.shape()[1];
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn softmax_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let k = y.shape()[1];
    let mut dx = dy.clone();
    for (row_dx, row_y) in dx.data_mut().chunks_mut(k).zip(y.data().chunks(k)) {
        let dot: f32 = row_dx.iter().zip(row_y).map(|(g, p)| g * p).sum();
        for (g, p) in row_dx.iter_mut().zip(row_y) {
            *g = p * (*g - dot);
        }
    }
    dx
}

fn image_dims(x: &Tensor) -> (usize, usize, usize, usize) {
    let s = x.shape();
    (s[0], s[1], s[2], s[3])
}

fn conv_patches(x: &Tensor, kernel: usize, stride: usize, padding: usize) -> Patches {
    let (_, c, h, w) = image_dims(x);
    Patches {
        channels: c,
        height: h,
        width: w,
        kernel,
        stride,
        padding,
        out_height: (h + 2 * padding - kernel) / stride + 1,
        out_width: (w + 2 * padding - kernel) / stride + 1,
    }
}

fn unfold<'a>(geo: &Patches, image: &'a [f32]) -> Cow<'a, [f32]> {
    if geo.kernel == 1 && geo.stride == 1 && geo.padding == 0 {
        Cow::Borrowed(image)
    } else {
        let mut cols = vec![0.0; geo.rows() * geo.cols()];
        geo.im2col(image, &mut cols);
        Cow::Owned(cols)
    }
}

fn conv_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Tensor {
    let n = x.shape()[0];
    let geo = conv_patches(x, kernel, stride, padding);
    let in_plane = x.len() / n;
    let ncols = geo.cols();
    let out_plane = out_channels * ncols;
    let mut out = vec![0.0; n * out_plane];
    out.par_chunks_mut(out_plane).enumerate().for_each(|(i, o)| {
        let cols = unfold(&geo, &x.data()[i * in_plane..(i + 1) * in_plane]);
        for (co, plane) in o.chunks_mut(ncols).enumerate() {
            plane.fill(b.data()[co]);
        }
        gemm(out_channels, geo.rows(), ncols, w.data(), false, &cols, false, 1.0, o);
    });
    Tensor::new(vec![n, out_channels, geo.out_height, geo.out_width], out).expect("conv output shape")
}

fn conv_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    kernel: usize,
    stride: usize,
    padding: usize,
    need_input_grad: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let n = x.shape()[0];
    let geo = conv_patches(x, kernel, stride, padding);
    let out_channels = dy.shape()[1];
    let in_plane = x.len() / n;
    let ncols = geo.cols();
    let out_plane = out_channels * ncols;
    let rows = geo.rows();
    let mut dx = vec![0.0; if need_input_grad { x.len() } else { 0 }];
    let per_sample = |i: usize, dxi: Option<&mut [f32]>| {
        let cols = unfold(&geo, &x.data()[i * in_plane..(i + 1) * in_plane]);
        let dyi = &dy.data()[i * out_plane..(i + 1) * out_plane];
        let mut dw = vec![0.0; out_channels * rows];
        gemm(out_channels, ncols, rows, dyi, false, &cols, true, 0.0, &mut dw);
        let db: Vec<f32> = dyi.chunks(ncols).map(|p| p.iter().sum()).collect();
        if let Some(dxi) = dxi {
            let mut dcols = vec![0.0; rows * ncols];
            gemm(rows, out_channels, ncols, w.data(), true, dyi, false, 0.0, &mut dcols);
            geo.col2im(&dcols, dxi);
        }
        (dw, db)
    };
    let partials: Vec<(Vec<f32>, Vec<f32>)> = if need_input_grad {
        dx.par_chunks_mut(in_plane).enumerate().map(|(i, dxi)| per_sample(i, Some(dxi))).collect()
    } else {
        (0..n).into_par_iter().map(|i| per_sample(i, None)).collect()
    };
    let (dw, db) = sum_partials(partials, w.len(), out_channels);
    (
        need_input_grad.then(|| Tensor::new(x.shape().to_vec(), dx).expect("dx shape")),
        Tensor::new(w.shape().to_vec(), dw).expect("dw shape"),
        Tensor::new(vec![out_channels], db).expect("db shape"),
    )
}

#[allow(clippy::too_many_arguments)]
fn transpose_patches(
    out_h: usize,
    out_w: usize,
    channels: usize,
    in_h: usize,
    in_w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Patches {
    Patches { channels, height: out_h, width: out_w, kernel, stride, padding, out_height: in_h, out_width: in_w }
}

fn transpose_conv_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Tensor {
    let (n, in_channels, h, wd) = image_dims(x);
    let oh = (h - 1) * stride + kernel - 2 * padding;
    let ow = (wd - 1) * stride + kernel - 2 * padding;
    let geo = transpose_patches(oh, ow, out_channels, h, wd, kernel, stride, padding);
    let in_plane = in_channels * h * wd;
    let out_plane = out_channels * oh * ow;
    let mut out = vec![0.0; n * out_plane];
    out.par_chunks_mut(out_plane).enumerate().for_each(|(i, o)| {
        let xi = &x.data()[i * in_plane..(i + 1) * in_plane];
        let mut cols = vec![0.0; geo.rows() * geo.cols()];
        gemm(geo.rows(), in_channels, geo.cols(), w.data(), true, xi, false, 0.0, &mut cols);
        for (co, plane) in o.chunks_mut(oh * ow).enumerate() {
            plane.fill(b.data()[co]);
        }
        geo.col2im(&cols, o);
    });
    Tensor::new(vec![n, out_channels, oh, ow], out).expect("transpose conv output shape")
}

fn transpose_conv_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    kernel: usize,
    stride: usize,
    padding: usize,
    need_input_grad: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let (n, in_channels, h, wd) = image_dims(x);
    let (_, out_channels, oh, ow) = image_dims(dy);
    let geo = transpose_patches(oh, ow, out_channels, h, wd, kernel, stride, padding);
    let in_plane = in_channels * h * wd;
    let out_plane = out_channels * oh * ow;
    let rows = geo.rows();
    let ncols = geo.cols();
    let mut dx = vec![0.0; if need_input_grad { x.len() } else { 0 }];
    let per_sample = |i: usize, dxi: Option<&mut [f32]>| {
        let xi = &x.data()[i * in_plane..(i + 1) * in_plane];
        let dyi = &dy.data()[i * out_plane..(i + 1) * out_plane];
        let mut dcols = vec![0.0; rows * ncols];
        geo.im2col(dyi, &mut dcols);
        let mut dw = vec![0.0; in_channels * rows];
        gemm(in_channels, ncols, rows, xi, false, &dcols, true, 0.0, &mut dw);
        let db: Vec<f32> = dyi.chunks(oh * ow).map(|p| p.iter().sum()).collect();
        if let Some(dxi) = dxi {
            gemm(in_channels, rows, ncols, w.data(), false, &dcols, false, 0.0, dxi);
        }
        (dw, db)
    };
    let partials: Vec<(Vec<f32>, Vec<f32>)> = if need_input_grad {
        dx.par_chunks_mut(in_plane).enumerate().map(|(i, dxi)| per_sample(i, Some(dxi))).collect()
    } else {
        (0..n).into_par_iter().map(|i| per_sample(i, None)).collect()
    };
    let (dw, db) = sum_partials(partials, w.len(), out_channels);
    (
        need_input_grad.then(|| Tensor::new(x.shape().to_vec(), dx).expect("dx shape")),
        Tensor::new(w.shape().to_vec(), dw).expect("dw shape"),
        Tensor::new(vec![out_channels], db).expect("db shape"),
    )
}

fn sum_partials(partials: Vec<(Vec<f32>, Vec<f32>)>, wlen: usize, blen: usize) -> (Vec<f32>, Vec<f32>) {
    let mut dw = vec![0.0; wlen];
    let mut db = vec![0.0; blen];
    for (pw, pb) in partials {
        dw.iter_mut().zip(pw).for_each(|(a, b)| *a += b);
        db.iter_mut().zip(pb).for_each(|(a, b)| *a += b);
    }
    (dw, db)
}

fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let n = x.shape()[0];
    let (out_f, in_f) = (w.shape()[0], w.shape()[1]);
    let mut y = Vec::with_capacity(n * out_f);
    for _ in 0..n {
        y.extend_from_slice(b.data());
    }
    gemm(n, in_f, out_f, x.data(), false, w.data(), true, 1.0, &mut y);
    Tensor::new(vec![n, out_f], y).expect("dense output shape")
}

fn dense_backward(x: &Tensor, w: &Tensor, dy: &Tensor, need_input_grad: bool) -> (Option<Tensor>, Tensor, Tensor) {
    let n = x.shape()[0];
    let (out_f, in_f) = (w.shape()[0], w.shape()[1]);
    let mut dw = vec![0.0; out_f * in_f];
    gemm(out_f, n, in_f, dy.data(), true, x.data(), false, 0.0, &mut dw);
    let mut db = vec![0.0; out_f];
    for row in dy.data().chunks(out_f) {
        db.iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
    let dx = need_input_grad.then(|| {
        let mut dx = vec![0.0; n * in_f];
        gemm(n, out_f, in_f, dy.data(), false, w.data(), false, 0.0, &mut dx);
        Tensor::new(vec![n, in_f], dx).expect("dense dx shape")
    });
    (
        dx,
        Tensor::new(vec![out_f, in_f], dw).expect("dense dw shape"),
        Tensor::new(vec![out_f], db).expect("dense db shape"),
    )
}

/// Max pooling; ties resolve to the first maximum in row-major window order.
fn max_pool_forward(x: &Tensor, window: usize, stride: usize) -> (Tensor, Vec<u32>) {
    let (n, c, h, w) = image_dims(x);
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(out.capacity());
    let data = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for ky in 0..window {
                    for kx in 0..window {
                        let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                }
                out.push(data[best]);
                argmax.push(best as u32);
            }
        }
    }
    (Tensor::new(vec![n, c, oh, ow], out).expect("pool output shape"), argmax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::init_params;
    use crate::rng::rng_from;
    use crate::spec::LayerSpec;

    fn net(layers: Vec<(&str, LayerKind)>) -> NetworkSpec {
        NetworkSpec::new(layers.into_iter().map(|(n, k)| LayerSpec::new(n, k)).collect()).unwrap()
    }

    fn ramp(shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |i| ((i as f32) * 0.731).sin())
    }

    #[test]
    fn identity_one_by_one_conv() {
        let spec = net(vec![("c", LayerKind::conv(2, 2, 1, 1, 0))]);
        let mut params = Params::new();
        params.insert("c.weight", Tensor::new(vec![2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        params.insert("c.bias", Tensor::zeros(&[2]));
        let x = ramp(&[2, 2, 3, 3]);
        let (y, _) = forward(&spec, &params, &x, Mode::Eval, &mut rng_from(0)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn uniform_softmax_over_nine() {
        let spec = net(vec![("s", LayerKind::Softmax)]);
        let x = Tensor::zeros(&[1, 9]);
        let (y, _) = forward(&spec, &Params::new(), &x, Mode::Eval, &mut rng_from(0)).unwrap();
        for v in y.data() {
            assert!((v - 1.0 / 9.0).abs() < 1e-7);
        }
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let x = Tensor::new(vec![1, 3], vec![1000.0, 999.0, -1000.0]).unwrap();
        let y = softmax_rows(&x);
        assert!(y.is_finite());
        assert!((y.data().iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn eval_dropout_is_identity() {
        let spec = net(vec![("d", LayerKind::Dropout { rate: 0.5 })]);
        let x = ramp(&[3, 7]);
        let (y, _) = forward(&spec, &Params::new(), &x, Mode::Eval, &mut rng_from(1)).unwrap();
        assert!(y.bit_eq(&x));
    }

    #[test]
    fn train_dropout_zeroes_or_rescales() {
        let spec = net(vec![("d", LayerKind::Dropout { rate: 0.5 })]);
        let x = Tensor::full(&[1, 4000], 1.0);
        let (y, _) = forward(&spec, &Params::new(), &x, Mode::Train, &mut rng_from(1)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = y.data().iter().filter(|&&v| v > 0.0).count() as f64 / 4000.0;
        assert!((kept - 0.5).abs() < 0.05, "{kept}");
    }

    #[test]
    fn dense_weight_grad_of_summed_output() {
        // y = Wx, L = sum(y)  =>  dL/dW[i][j] = x[j] for every row i.
        let spec = net(vec![("fc", LayerKind::dense(3, 2))]);
        let params = init_params(&spec, 5);
        let x = Tensor::new(vec![1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let (y, tape) = forward(&spec, &params, &x, Mode::Eval, &mut rng_from(0)).unwrap();
        let grads = backward(&tape, &Tensor::full(y.shape(), 1.0)).unwrap();
        assert_eq!(grads.get("fc.weight").unwrap().data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
        assert_eq!(grads.get("fc.bias").unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn relu_blocks_negative_preactivations() {
        let spec = net(vec![("fc", LayerKind::dense(1, 1)), ("r", LayerKind::ReLU)]);
        let mut params = Params::new();
        params.insert("fc.weight", Tensor::new(vec![1, 1], vec![1.0]).unwrap());
        params.insert("fc.bias", Tensor::new(vec![1], vec![-5.0]).unwrap());
        let x = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let (_, tape) = forward(&spec, &params, &x, Mode::Eval, &mut rng_from(0)).unwrap();
        let grads = backward(&tape, &Tensor::full(&[1, 1], 1.0)).unwrap();
        assert_eq!(grads.get("fc.weight").unwrap().data(), &[0.0]);
        assert_eq!(grads.get("fc.bias").unwrap().data(), &[0.0]);
    }

    #[test]
    fn max_pool_ties_route_to_first_maximum() {
        let x = Tensor::new(vec![1, 1, 2, 2], vec![3.0, 3.0, 3.0, 1.0]).unwrap();
        let (y, argmax) = max_pool_forward(&x, 2, 2);
        assert_eq!(y.data(), &[3.0]);
        assert_eq!(argmax, vec![0]);
    }

    #[test]
    fn empty_tape_and_bad_loss_grad() {
        let spec = NetworkSpec::default();
        let x = Tensor::zeros(&[1, 2]);
        let params = Params::new();
        let (_, tape) = forward(&spec, &params, &x, Mode::Eval, &mut rng_from(0)).unwrap();
        assert!(matches!(backward(&tape, &x), Err(Error::EmptyTape)));

        let spec = net(vec![("r", LayerKind::ReLU)]);
        let (_, tape) = forward(&spec, &params, &x, Mode::Eval, &mut rng_from(0)).unwrap();
        assert!(matches!(backward(&tape, &Tensor::zeros(&[2, 2])), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn missing_parameter_is_named() {
        let spec = net(vec![("fc", LayerKind::dense(2, 2))]);
        let params = Params::new();
        let err = forward(&spec, &params, &Tensor::zeros(&[1, 2]), Mode::Eval, &mut rng_from(0));
        assert!(matches!(err, Err(Error::MissingParameter(n)) if n == "fc.weight"));
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let spec = net(vec![
            ("c", LayerKind::conv(3, 4, 3, 1, 1)),
            ("r", LayerKind::ReLU),
            ("t", LayerKind::transpose_conv(4, 2, 2, 2, 0)),
        ]);
        let params = init_params(&spec, 9);
        let x = ramp(&[5, 3, 6, 6]);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let (y, tape) = forward(&spec, &params, &x, Mode::Eval, &mut rng_from(0)).unwrap();
                let g = backward(&tape, &y.map(|v| v * 0.5)).unwrap();
                (y, g)
            })
        };
        let (y1, g1) = run(1);
        let (y3, g3) = run(3);
        assert!(y1.bit_eq(&y3));
        for (name, t) in g1.iter() {
            assert!(t.bit_eq(g3.get(name).unwrap()), "{name}");
        }
    }
}
