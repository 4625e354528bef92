//! Declarative layer stacks.
//!
//! A [`NetworkSpec`] is an ordered list of named layers. It carries no
//! parameters; those live in a [`crate::params::Params`] keyed by
//! `<layer>.weight` / `<layer>.bias`. Layer names are the unit of weight
//! surgery between training phases, so they must be unique.

use std::collections::HashSet;
use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::format_shape;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    Conv2D { in_channels: usize, out_channels: usize, kernel_size: usize, stride: usize, padding: usize },
    TransposeConv2D { in_channels: usize, out_channels: usize, kernel_size: usize, stride: usize, padding: usize },
    MaxPool2D { window: usize, stride: usize },
    Dense { in_features: usize, out_features: usize },
    ReLU,
    Sigmoid,
    Softmax,
    Dropout { rate: f32 },
    Flatten,
}

impl LayerKind {
    pub fn conv(in_channels: usize, out_channels: usize, kernel_size: usize, stride: usize, padding: usize) -> Self {
        LayerKind::Conv2D { in_channels, out_channels, kernel_size, stride, padding }
    }

    pub fn transpose_conv(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        LayerKind::TransposeConv2D { in_channels, out_channels, kernel_size, stride, padding }
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        LayerKind::Dense { in_features, out_features }
    }

    pub fn max_pool(window: usize) -> Self {
        LayerKind::MaxPool2D { window, stride: window }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Conv2D { .. } => "conv2d",
            LayerKind::TransposeConv2D { .. } => "transpose_conv2d",
            LayerKind::MaxPool2D { .. } => "maxpool2d",
            LayerKind::Dense { .. } => "dense",
            LayerKind::ReLU => "relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Softmax => "softmax",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Flatten => "flatten",
        }
    }

    /// Shapes of the `(weight, bias)` pair for parameterized layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerKind::Conv2D { in_channels, out_channels, kernel_size, .. } => {
                Some((vec![out_channels, in_channels, kernel_size, kernel_size], vec![out_channels]))
            }
            LayerKind::TransposeConv2D { in_channels, out_channels, kernel_size, .. } => {
                Some((vec![in_channels, out_channels, kernel_size, kernel_size], vec![out_channels]))
            }
            LayerKind::Dense { in_features, out_features } => {
                Some((vec![out_features, in_features], vec![out_features]))
            }
            _ => None,
        }
    }

    /// Number of inputs feeding each output unit, used for He scaling.
    pub fn fan_in(&self) -> Option<usize> {
        match *self {
            LayerKind::Conv2D { in_channels, kernel_size, .. } => Some(in_channels * kernel_size * kernel_size),
            LayerKind::TransposeConv2D { in_channels, kernel_size, stride, .. } => {
                let taps = kernel_size.div_ceil(stride);
                Some(in_channels * taps * taps)
            }
            LayerKind::Dense { in_features, .. } => Some(in_features),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self { name: name.into(), kind }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Builds a spec, rejecting duplicate names and out-of-range hyperparameters.
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for layer in &layers {
            if layer.name.is_empty() || layer.name.chars().any(|c| c.is_whitespace() || c == '=') {
                return Err(Error::InvalidHyperparameter(format!(
                    "layer name `{}` must be non-empty without whitespace or `=`",
                    layer.name
                )));
            }
            if !seen.insert(layer.name.as_str()) {
                return Err(Error::DuplicateLayerName(layer.name.clone()));
            }
            validate_kind(&layer.name, &layer.kind)?;
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn into_layers(self) -> Vec<LayerSpec> {
        self.layers
    }

    /// `(name, shape)` for every parameter tensor, in layer order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Some((w, b)) = layer.kind.param_shapes() {
                out.push((layer.weight_name(), w));
                out.push((layer.bias_name(), b));
            }
        }
        out
    }

    /// Output shape of every layer for a batched input shape.
    pub fn infer_shapes(&self, input_shape: &[usize]) -> Result<Vec<Vec<usize>>> {
        let mut current = input_shape.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            current = layer_output_shape(layer, &current)?;
            out.push(current.clone());
        }
        Ok(out)
    }

    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        Ok(self.infer_shapes(input_shape)?.pop().unwrap_or_else(|| input_shape.to_vec()))
    }

    /// Line-oriented text form; the checkpoint spec blob.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        for layer in &self.layers {
            s.push_str(layer.kind.tag());
            s.push_str(" name=");
            s.push_str(&layer.name);
            match layer.kind {
                LayerKind::Conv2D { in_channels, out_channels, kernel_size, stride, padding }
                | LayerKind::TransposeConv2D { in_channels, out_channels, kernel_size, stride, padding } => {
                    s.push_str(&format!(" in={in_channels} out={out_channels} k={kernel_size} s={stride} p={padding}"))
                }
                LayerKind::MaxPool2D { window, stride } => s.push_str(&format!(" window={window} s={stride}")),
                LayerKind::Dense { in_features, out_features } => {
                    s.push_str(&format!(" in={in_features} out={out_features}"))
                }
                LayerKind::Dropout { rate } => s.push_str(&format!(" rate={rate}")),
                LayerKind::ReLU | LayerKind::Sigmoid | LayerKind::Softmax | LayerKind::Flatten => {}
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut layers = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            layers.push(parse_layer(line).map_err(|msg| Error::BadCheckpoint(format!("spec line {}: {msg}", i + 1)))?);
        }
        Self::new(layers)
    }

    /// Hex prefix of the SHA-256 of [`NetworkSpec::serialize`].
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.serialize().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

fn validate_kind(name: &str, kind: &LayerKind) -> Result<()> {
    let bad = |what: &str| Err(Error::InvalidHyperparameter(format!("{name}: {what}")));
    match *kind {
        LayerKind::Conv2D { in_channels, out_channels, kernel_size, stride, .. }
        | LayerKind::TransposeConv2D { in_channels, out_channels, kernel_size, stride, .. } => {
            if in_channels == 0 || out_channels == 0 || kernel_size == 0 || stride == 0 {
                return bad("channels, kernel size and stride must be positive");
            }
        }
        LayerKind::MaxPool2D { window, stride } => {
            if window == 0 || stride == 0 {
                return bad("window and stride must be positive");
            }
        }
        LayerKind::Dense { in_features, out_features } => {
            if in_features == 0 || out_features == 0 {
                return bad("feature counts must be positive");
            }
        }
        LayerKind::Dropout { rate } => {
            if !(0.0..1.0).contains(&rate) {
                return bad("dropout rate must lie in [0, 1)");
            }
        }
        LayerKind::ReLU | LayerKind::Sigmoid | LayerKind::Softmax | LayerKind::Flatten => {}
    }
    Ok(())
}

fn layer_output_shape(layer: &LayerSpec, input: &[usize]) -> Result<Vec<usize>> {
    let name = &layer.name;
    let image = |channels: Option<usize>| -> Result<(usize, usize, usize, usize)> {
        if input.len() != 4 {
            return Err(Error::shape(name, "rank-4 (N,C,H,W) input", format_shape(input)));
        }
        if let Some(c) = channels {
            if input[1] != c {
                return Err(Error::shape(name, format!("{c} input channels"), format_shape(input)));
            }
        }
        Ok((input[0], input[1], input[2], input[3]))
    };
    match layer.kind {
        LayerKind::Conv2D { in_channels, out_channels, kernel_size, stride, padding } => {
            let (n, _, h, w) = image(Some(in_channels))?;
            let oh = conv_extent(h, kernel_size, stride, padding).ok_or_else(|| {
                Error::shape(name, format!("spatial extent >= {kernel_size} after padding"), format_shape(input))
            })?;
            let ow = conv_extent(w, kernel_size, stride, padding).ok_or_else(|| {
                Error::shape(name, format!("spatial extent >= {kernel_size} after padding"), format_shape(input))
            })?;
            Ok(vec![n, out_channels, oh, ow])
        }
        LayerKind::TransposeConv2D { in_channels, out_channels, kernel_size, stride, padding } => {
            let (n, _, h, w) = image(Some(in_channels))?;
            let oh = transpose_extent(h, kernel_size, stride, padding)
                .ok_or_else(|| Error::shape(name, "positive output extent", format_shape(input)))?;
            let ow = transpose_extent(w, kernel_size, stride, padding)
                .ok_or_else(|| Error::shape(name, "positive output extent", format_shape(input)))?;
            Ok(vec![n, out_channels, oh, ow])
        }
        LayerKind::MaxPool2D { window, stride } => {
            let (n, c, h, w) = image(None)?;
            let oh = conv_extent(h, window, stride, 0)
                .ok_or_else(|| Error::shape(name, format!("spatial extent >= {window}"), format_shape(input)))?;
            let ow = conv_extent(w, window, stride, 0)
                .ok_or_else(|| Error::shape(name, format!("spatial extent >= {window}"), format_shape(input)))?;
            Ok(vec![n, c, oh, ow])
        }
        LayerKind::Dense { in_features, out_features } => {
            if input.len() != 2 || input[1] != in_features {
                return Err(Error::shape(name, format!("(N,{in_features})"), format_shape(input)));
            }
            Ok(vec![input[0], out_features])
        }
        LayerKind::Softmax => {
            if input.len() != 2 {
                return Err(Error::shape(name, "rank-2 (N,K) input", format_shape(input)));
            }
            Ok(input.to_vec())
        }
        LayerKind::Flatten => {
            if input.is_empty() {
                return Err(Error::shape(name, "batched input", format_shape(input)));
            }
            Ok(vec![input[0], input[1..].iter().product()])
        }
        LayerKind::ReLU | LayerKind::Sigmoid | LayerKind::Dropout { .. } => {
            if input.is_empty() {
                return Err(Error::shape(name, "non-scalar input", format_shape(input)));
            }
            Ok(input.to_vec())
        }
    }
}

/// `floor((extent + 2·padding − kernel) / stride) + 1`, or `None` if the window does not fit.
pub fn conv_extent(extent: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = extent + 2 * padding;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

/// `(extent − 1)·stride − 2·padding + kernel`, or `None` if not positive.
pub fn transpose_extent(extent: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let full = (extent - 1) * stride + kernel;
    (full > 2 * padding).then(|| full - 2 * padding)
}

fn parse_layer(line: &str) -> std::result::Result<LayerSpec, String> {
    let mut tokens = line.split_whitespace();
    let tag = tokens.next().ok_or("empty line")?;
    let mut name = None;
    let mut fields = std::collections::BTreeMap::new();
    for tok in tokens {
        let (k, v) = tok.split_once('=').ok_or_else(|| format!("bad token `{tok}`"))?;
        if k == "name" {
            name = Some(v.to_string());
        } else {
            fields.insert(k, v);
        }
    }
    let name = name.ok_or("missing name")?;
    let uint = |key: &str| -> std::result::Result<usize, String> {
        fields.get(key).ok_or_else(|| format!("missing `{key}`"))?.parse().map_err(|_| format!("bad `{key}`"))
    };
    let kind = match tag {
        "conv2d" => LayerKind::conv(uint("in")?, uint("out")?, uint("k")?, uint("s")?, uint("p")?),
        "transpose_conv2d" => LayerKind::transpose_conv(uint("in")?, uint("out")?, uint("k")?, uint("s")?, uint("p")?),
        "maxpool2d" => LayerKind::MaxPool2D { window: uint("window")?, stride: uint("s")? },
        "dense" => LayerKind::dense(uint("in")?, uint("out")?),
        "relu" => LayerKind::ReLU,
        "sigmoid" => LayerKind::Sigmoid,
        "softmax" => LayerKind::Softmax,
        "flatten" => LayerKind::Flatten,
        "dropout" => {
            LayerKind::Dropout { rate: fields.get("rate").ok_or("missing `rate`")?.parse().map_err(|_| "bad `rate`")? }
        }
        other => return Err(format!("unknown layer kind `{other}`")),
    };
    Ok(LayerSpec::new(name, kind))
}
