use crate::error::{Error, Result};
use crate::spec::{LayerKind, LayerSpec, NetworkSpec};

/// Layer widths of the reference network. Names are fixed; widths are
/// overridable for experiments, and [`Default`] gives the reference sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceArchitecture {
    pub input_channels: usize,
    pub enc_channels: [usize; 2],
    pub dec_channels: [usize; 2],
    pub ext_channels: usize,
    pub hidden: usize,
    pub dropout_rate: f32,
    pub shape_classes: usize,
}

impl Default for ReferenceArchitecture {
    fn default() -> Self {
        Self {
            input_channels: 3,
            enc_channels: [16, 32],
            dec_channels: [16, 8],
            ext_channels: 64,
            hidden: 128,
            dropout_rate: 0.5,
            shape_classes: 9,
        }
    }
}

/// Encoder layers, in order.
pub const ENCODER_LAYERS: [&str; 6] = ["enc_conv1", "enc_relu1", "enc_pool1", "enc_conv2", "enc_relu2", "enc_pool2"];
pub const DROPOUT_LAYER: &str = "fc1_dropout";

fn layer(name: &str, kind: LayerKind) -> LayerSpec {
    LayerSpec::new(name, kind)
}

impl ReferenceArchitecture {
    pub fn validate(&self) -> Result<()> {
        let widths = [
            self.input_channels,
            self.enc_channels[0],
            self.enc_channels[1],
            self.dec_channels[0],
            self.dec_channels[1],
            self.ext_channels,
            self.hidden,
        ];
        if widths.contains(&0) {
            return Err(Error::InvalidHyperparameter("architecture widths must be positive".into()));
        }
        if self.shape_classes < 2 {
            return Err(Error::InvalidHyperparameter("phase-2 head needs at least 2 classes".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidHyperparameter(format!("dropout rate {}", self.dropout_rate)));
        }
        Ok(())
    }

    pub fn encoder(&self) -> Vec<LayerSpec> {
        let [c1, c2] = self.enc_channels;
        vec![
            layer("enc_conv1", LayerKind::conv(self.input_channels, c1, 3, 1, 1)),
            layer("enc_relu1", LayerKind::ReLU),
            layer("enc_pool1", LayerKind::max_pool(2)),
            layer("enc_conv2", LayerKind::conv(c1, c2, 3, 1, 1)),
            layer("enc_relu2", LayerKind::ReLU),
            layer("enc_pool2", LayerKind::max_pool(2)),
        ]
    }

    pub fn decoder(&self) -> Vec<LayerSpec> {
        let [d1, d2] = self.dec_channels;
        vec![
            layer("dec_tconv1", LayerKind::transpose_conv(self.enc_channels[1], d1, 2, 2, 0)),
            layer("dec_relu1", LayerKind::ReLU),
            layer("dec_tconv2", LayerKind::transpose_conv(d1, d2, 2, 2, 0)),
            layer("dec_relu2", LayerKind::ReLU),
            layer("dec_conv_out", LayerKind::conv(d2, 1, 1, 1, 0)),
            layer("dec_sigmoid", LayerKind::Sigmoid),
        ]
    }

    /// Flattened feature count after the phase-2 convolution block at `resolution`.
    pub fn flat_features(&self, (height, width): (usize, usize)) -> Result<usize> {
        let (h, w) = (height / 8, width / 8);
        if h == 0 || w == 0 {
            return Err(Error::ResolutionTooSmall { height, width, min: 8 });
        }
        Ok(self.ext_channels * h * w)
    }

    /// Conv block, flatten and the 128-wide hidden layer (with optional dropout).
    fn extension_trunk(&self, resolution: (usize, usize), dropout: bool) -> Result<Vec<LayerSpec>> {
        let mut layers = vec![
            layer("ext_conv3", LayerKind::conv(self.enc_channels[1], self.ext_channels, 3, 1, 1)),
            layer("ext_relu3", LayerKind::ReLU),
            layer("ext_pool3", LayerKind::max_pool(2)),
            layer("flatten", LayerKind::Flatten),
            layer("fc1", LayerKind::dense(self.flat_features(resolution)?, self.hidden)),
            layer("fc1_relu", LayerKind::ReLU),
        ];
        if dropout {
            layers.push(layer(DROPOUT_LAYER, LayerKind::Dropout { rate: self.dropout_rate }));
        }
        Ok(layers)
    }

    pub fn phase2_extension(&self, resolution: (usize, usize), dropout: bool) -> Result<Vec<LayerSpec>> {
        let mut layers = self.extension_trunk(resolution, dropout)?;
        layers.push(layer("fc_out", LayerKind::dense(self.hidden, self.shape_classes)));
        layers.push(layer("softmax", LayerKind::Softmax));
        Ok(layers)
    }

    /// Hidden fine-tuning layer and a `num_classes`-way classifier.
    pub fn benchmark_head(&self, num_classes: usize) -> Vec<LayerSpec> {
        vec![
            layer("bench_fc1", LayerKind::dense(self.hidden, self.hidden)),
            layer("bench_relu", LayerKind::ReLU),
            layer("bench_fc_out", LayerKind::dense(self.hidden, num_classes)),
            layer("bench_softmax", LayerKind::Softmax),
        ]
    }

    /// The benchmark network built from scratch; identical to what
    /// [`build_benchmark_model`](super::build_benchmark_model) produces.
    pub fn benchmark_spec(&self, resolution: (usize, usize), num_classes: usize) -> Result<NetworkSpec> {
        if num_classes < 2 {
            return Err(Error::InvalidHyperparameter(format!("benchmark needs at least 2 classes, got {num_classes}")));
        }
        let mut layers = self.encoder();
        layers.extend(self.extension_trunk(resolution, false)?);
        layers.extend(self.benchmark_head(num_classes));
        NetworkSpec::new(layers)
    }
}

/// Encoder followed by the edge decoder; maps `(N, 3, H, W)` to `(N, 1, H, W)`
/// when `H` and `W` are multiples of 4.
pub fn build_phase1_model(arch: &ReferenceArchitecture) -> Result<NetworkSpec> {
    arch.validate()?;
    let mut layers = arch.encoder();
    layers.extend(arch.decoder());
    NetworkSpec::new(layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase1_restores_resolution() {
        let spec = build_phase1_model(&ReferenceArchitecture::default()).unwrap();
        assert_eq!(spec.output_shape(&[1, 3, 64, 64]).unwrap(), vec![1, 1, 64, 64]);
        assert_eq!(spec.output_shape(&[1, 3, 256, 256]).unwrap(), vec![1, 1, 256, 256]);
        assert_eq!(spec.layers().last().unwrap().kind, LayerKind::Sigmoid);
    }

    #[test]
    fn encoder_names_are_stable() {
        let names: Vec<_> = ReferenceArchitecture::default().encoder().into_iter().map(|l| l.name).collect();
        assert_eq!(names, ENCODER_LAYERS);
    }

    #[test]
    fn benchmark_spec_widths() {
        let arch = ReferenceArchitecture::default();
        let spec = arch.benchmark_spec((64, 64), 10).unwrap();
        assert_eq!(spec.output_shape(&[2, 3, 64, 64]).unwrap(), vec![2, 10]);
        assert_eq!(arch.flat_features((64, 64)).unwrap(), 4096);
        assert!(arch.benchmark_spec((64, 64), 1).is_err());
        let bad = ReferenceArchitecture { hidden: 0, ..arch };
        assert!(build_phase1_model(&bad).is_err());
    }
}
