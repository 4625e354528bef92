use dpt_core::params::init_params;
use dpt_core::pipeline::{
    build_benchmark_model, build_phase1_model, build_phase2_model, remove_dropout, strip_decoder, Checkpoint, PhaseTag,
    ReferenceArchitecture, ENCODER_LAYERS,
};
use dpt_core::rng::rng_from;
use dpt_core::{forward, LayerKind, Mode, Tensor};
use rand::Rng;

const RES: (usize, usize) = (32, 32);

fn phase1_ckpt(seed: u64) -> Checkpoint {
    let spec = build_phase1_model(&ReferenceArchitecture::default()).unwrap();
    let params = init_params(&spec, seed);
    Checkpoint::new(PhaseTag::Phase1, seed, 1, spec, params).unwrap()
}

fn random_input(n: usize, seed: u64) -> Tensor {
    let mut rng = rng_from(seed);
    Tensor::from_fn(&[n, 3, RES.0, RES.1], |_| rng.random())
}

#[test]
fn encoder_tap_matches_donor_activations() {
    let arch = ReferenceArchitecture::default();
    let p1 = phase1_ckpt(21);
    let enc = strip_decoder(&p1, &arch).unwrap();
    let x = random_input(3, 1);
    let (_, donor) = forward(&p1.spec, &p1.params, &x, Mode::Eval, &mut rng_from(0)).unwrap();
    let tap = donor.activation(ENCODER_LAYERS.len()).unwrap();
    let (encoded, _) = forward(&enc.spec, &enc.params, &x, Mode::Eval, &mut rng_from(0)).unwrap();
    assert!(encoded.bit_eq(tap));

    // The same tap inside the phase-2 network.
    let (spec, params) = build_phase2_model(&enc, &arch, RES, true, 4).unwrap();
    let (_, tape) = forward(&spec, &params, &x, Mode::Eval, &mut rng_from(0)).unwrap();
    assert!(tape.activation(ENCODER_LAYERS.len()).unwrap().bit_eq(tap));
}

#[test]
fn dropout_removal_keeps_eval_forward_bit_identical() {
    let arch = ReferenceArchitecture::default();
    let enc = strip_decoder(&phase1_ckpt(2), &arch).unwrap();
    let (spec, params) = build_phase2_model(&enc, &arch, RES, true, 9).unwrap();
    let (stripped, stripped_params) = remove_dropout(&spec, &params).unwrap();
    assert_eq!(stripped.len(), spec.len() - 1);
    assert!(!stripped.layers().iter().any(|l| matches!(l.kind, LayerKind::Dropout { .. })));
    for i in 0..10 {
        let x = random_input(1 + i % 3, 100 + i as u64);
        let (a, _) = forward(&spec, &params, &x, Mode::Eval, &mut rng_from(i as u64)).unwrap();
        let (b, _) = forward(&stripped, &stripped_params, &x, Mode::Eval, &mut rng_from(0)).unwrap();
        assert!(a.bit_eq(&b), "input {i}");
    }
}

#[test]
fn transfer_integrity_across_every_boundary() {
    let arch = ReferenceArchitecture::default();
    let p1 = phase1_ckpt(5);
    let enc = strip_decoder(&p1, &arch).unwrap();
    let (spec, params) = build_phase2_model(&enc, &arch, RES, true, 6).unwrap();
    let (spec, params) = remove_dropout(&spec, &params).unwrap();
    let p2 = Checkpoint::new(PhaseTag::Phase2, 6, 1, spec, params).unwrap();
    let (_, bench) = build_benchmark_model(&p2, &arch, 10, 7).unwrap();
    let pairs = [(&p1.params, &enc.params), (&enc.params, &p2.params), (&p2.params, &bench)];
    for (before, after) in pairs {
        let mut shared = 0;
        for (name, t) in after.iter() {
            if let Some(old) = before.get(name) {
                assert!(t.bit_eq(old), "{name}");
                shared += 1;
            }
        }
        assert!(shared >= 4);
    }
}

#[test]
fn surgery_rejects_wrong_phases() {
    let arch = ReferenceArchitecture::default();
    let p1 = phase1_ckpt(1);
    assert!(build_phase2_model(&p1, &arch, RES, false, 0).is_err());
    assert!(build_benchmark_model(&p1, &arch, 10, 0).is_err());
    let enc = strip_decoder(&p1, &arch).unwrap();
    assert!(strip_decoder(&enc, &arch).is_err());
}
