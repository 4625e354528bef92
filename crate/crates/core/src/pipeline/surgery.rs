use super::arch::{ReferenceArchitecture, ENCODER_LAYERS};
use super::checkpoint::{Checkpoint, PhaseTag};
use crate::error::{Error, Result};
use crate::params::{init_params, Params};
use crate::rng;
use crate::spec::{LayerKind, LayerSpec, NetworkSpec};
use crate::tensor::format_shape;

/// Keeps only the encoder of a phase-1 checkpoint. The retained tensors are
/// moved, not recomputed, so they stay bit-identical.
pub fn strip_decoder(ckpt: &Checkpoint, arch: &ReferenceArchitecture) -> Result<Checkpoint> {
    ckpt.phase.expect(PhaseTag::Phase1)?;
    let expected = arch.encoder();
    let layers = ckpt.spec.layers();
    if layers.len() < expected.len() || layers[..expected.len()] != expected[..] {
        let got: Vec<&str> = layers.iter().take(expected.len()).map(|l| l.name.as_str()).collect();
        return Err(Error::shape("encoder", ENCODER_LAYERS.join(","), got.join(",")));
    }
    let spec = NetworkSpec::new(expected)?;
    let mut params = ckpt.params.clone();
    let keep: Vec<String> = spec.param_shapes().into_iter().map(|(n, _)| n).collect();
    params.retain(|name| keep.iter().any(|k| k == name));
    Checkpoint::new(PhaseTag::Encoder, ckpt.seed, ckpt.epoch, spec, params)
}

/// Copies every tensor of `donor` into `params`, checking that shapes agree.
fn transplant(params: &mut Params, donor: &Params) -> Result<()> {
    for (name, t) in donor.iter() {
        let slot = params.get_mut(name).ok_or_else(|| Error::MissingParameter(name.to_string()))?;
        if slot.shape() != t.shape() {
            return Err(Error::shape(name, format_shape(slot.shape()), format_shape(t.shape())));
        }
        *slot = t.clone();
    }
    Ok(())
}

/// Encoder from `encoder_ckpt` followed by a freshly initialized
/// classification extension (He-uniform weights from `seed`).
pub fn build_phase2_model(
    encoder_ckpt: &Checkpoint,
    arch: &ReferenceArchitecture,
    resolution: (usize, usize),
    dropout_enabled: bool,
    seed: u64,
) -> Result<(NetworkSpec, Params)> {
    encoder_ckpt.phase.expect(PhaseTag::Encoder)?;
    let mut layers = encoder_ckpt.spec.layers().to_vec();
    layers.extend(arch.phase2_extension(resolution, dropout_enabled)?);
    let spec = NetworkSpec::new(layers)?;
    spec.infer_shapes(&[1, arch.input_channels, resolution.0, resolution.1])?;
    let mut params = init_params(&spec, rng::derive(seed, "phase2-init"));
    transplant(&mut params, &encoder_ckpt.params)?;
    Ok((spec, params))
}

/// Deletes every Dropout layer. Under inverted dropout these are the
/// identity in eval mode, so the eval function is unchanged.
pub fn remove_dropout(spec: &NetworkSpec, params: &Params) -> Result<(NetworkSpec, Params)> {
    let layers: Vec<LayerSpec> =
        spec.layers().iter().filter(|l| !matches!(l.kind, LayerKind::Dropout { .. })).cloned().collect();
    Ok((NetworkSpec::new(layers)?, params.clone()))
}

/// Replaces the phase-2 classifier (the last Dense and everything after it)
/// with a fresh hidden Dense + ReLU and a `num_classes`-way Dense + Softmax.
/// Nothing is frozen here.
pub fn build_benchmark_model(
    phase2_ckpt: &Checkpoint,
    arch: &ReferenceArchitecture,
    num_classes: usize,
    seed: u64,
) -> Result<(NetworkSpec, Params)> {
    phase2_ckpt.phase.expect(PhaseTag::Phase2)?;
    if num_classes < 2 {
        return Err(Error::InvalidHyperparameter(format!("benchmark needs at least 2 classes, got {num_classes}")));
    }
    let (spec, _) = remove_dropout(&phase2_ckpt.spec, &phase2_ckpt.params)?;
    let layers = spec.layers();
    let cut = layers
        .iter()
        .rposition(|l| matches!(l.kind, LayerKind::Dense { .. }))
        .ok_or_else(|| Error::MissingParameter("phase-2 classifier".into()))?;
    let mut kept = layers[..cut].to_vec();
    kept.extend(arch.benchmark_head(num_classes));
    let spec = NetworkSpec::new(kept)?;
    let mut params = vanilla_init(&spec, seed);
    let mut retained = phase2_ckpt.params.clone();
    retained.retain(|name| params.contains(name));
    transplant(&mut params, &retained)?;
    Ok((spec, params))
}

/// Fresh He-uniform weights and zero biases for `spec`.
pub fn vanilla_init(spec: &NetworkSpec, seed: u64) -> Params {
    init_params(spec, rng::derive(seed, "fresh-init"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{forward, Mode};
    use crate::pipeline::build_phase1_model;
    use crate::tensor::Tensor;

    fn phase1() -> Checkpoint {
        let spec = build_phase1_model(&ReferenceArchitecture::default()).unwrap();
        let params = init_params(&spec, 5);
        Checkpoint::new(PhaseTag::Phase1, 5, 1, spec, params).unwrap()
    }

    #[test]
    fn strip_keeps_encoder_only() {
        let arch = ReferenceArchitecture::default();
        let p1 = phase1();
        let enc = strip_decoder(&p1, &arch).unwrap();
        let names: Vec<&str> = enc.params.names().collect();
        assert_eq!(names, ["enc_conv1.bias", "enc_conv1.weight", "enc_conv2.bias", "enc_conv2.weight"]);
        for (name, t) in enc.params.iter() {
            assert!(t.bit_eq(p1.params.get(name).unwrap()));
        }
        assert!(matches!(strip_decoder(&enc, &arch), Err(Error::WrongPhase { .. })));
    }

    #[test]
    fn phase2_build_contract() {
        let arch = ReferenceArchitecture::default();
        let enc = strip_decoder(&phase1(), &arch).unwrap();
        let (spec, params) = build_phase2_model(&enc, &arch, (32, 32), true, 1).unwrap();
        assert!(spec.layers().iter().any(|l| matches!(l.kind, LayerKind::Dropout { .. })));
        for (name, t) in enc.params.iter() {
            assert!(t.bit_eq(params.get(name).unwrap()));
        }
        let x = Tensor::from_fn(&[2, 3, 32, 32], |i| (i % 13) as f32 / 13.0);
        let (y, _) = forward(&spec, &params, &x, Mode::Eval, &mut rng::rng_from(0)).unwrap();
        assert_eq!(y.shape(), &[2, 9]);
        for row in y.data().chunks(9) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
        let (spec, _) = build_phase2_model(&enc, &arch, (32, 32), false, 1).unwrap();
        assert!(!spec.layers().iter().any(|l| matches!(l.kind, LayerKind::Dropout { .. })));
        assert!(matches!(build_phase2_model(&phase1(), &arch, (32, 32), false, 1), Err(Error::WrongPhase { .. })));
    }

    #[test]
    fn dropout_removal_is_a_no_op_without_dropout() {
        let spec = build_phase1_model(&ReferenceArchitecture::default()).unwrap();
        let params = init_params(&spec, 0);
        let (s2, p2) = remove_dropout(&spec, &params).unwrap();
        assert_eq!(s2, spec);
        assert_eq!(p2, params);
    }

    #[test]
    fn benchmark_head_replacement() {
        let arch = ReferenceArchitecture::default();
        let enc = strip_decoder(&phase1(), &arch).unwrap();
        let (spec, params) = build_phase2_model(&enc, &arch, (32, 32), true, 1).unwrap();
        let (spec, params) = remove_dropout(&spec, &params).unwrap();
        let p2 = Checkpoint::new(PhaseTag::Phase2, 1, 3, spec, params).unwrap();
        let (bspec, bparams) = build_benchmark_model(&p2, &arch, 10, 2).unwrap();
        assert_eq!(bspec, arch.benchmark_spec((32, 32), 10).unwrap());
        assert_eq!(bspec.output_shape(&[1, 3, 32, 32]).unwrap(), vec![1, 10]);
        for name in ["enc_conv1.weight", "enc_conv2.bias", "ext_conv3.weight", "fc1.weight", "fc1.bias"] {
            assert!(bparams.get(name).unwrap().bit_eq(p2.params.get(name).unwrap()), "{name}");
        }
        assert!(!bparams.contains("fc_out.weight"));
        assert!(bparams.get("bench_fc_out.bias").unwrap().data().iter().all(|&b| b == 0.0));
        assert!(build_benchmark_model(&p2, &arch, 1, 2).is_err());
        assert!(matches!(build_benchmark_model(&enc, &arch, 10, 2), Err(Error::WrongPhase { .. })));
    }

    #[test]
    fn vanilla_init_is_seeded() {
        let spec = ReferenceArchitecture::default().benchmark_spec((32, 32), 10).unwrap();
        assert_eq!(vanilla_init(&spec, 4), vanilla_init(&spec, 4));
        let (a, b) = (vanilla_init(&spec, 4), vanilla_init(&spec, 5));
        assert!(a.iter().any(|(n, t)| !t.bit_eq(b.get(n).unwrap())));
        assert!(a.iter().filter(|(n, _)| n.ends_with(".bias")).all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
    }
}
