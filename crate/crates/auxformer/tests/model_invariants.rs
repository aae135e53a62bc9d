//! End-to-end model invariants: mask invariance, masked-row identity,
//! full-loss gradient correctness and head independence.

use auxformer::model::{forward, HyperConfig, MaskingVariant, ModelParams, TaskHead};
use auxformer::motion::{MaskMatrix, MotionSequence};
use auxformer::numerics::{grad_check, Tape, Tensor, Var};
use auxformer::rng::derive_rng;
use auxformer::tasks::{total_loss_on_tape, CorruptionSpec, LossConfig};
use rand::Rng;

fn tiny_hyper() -> HyperConfig {
    HyperConfig {
        feature_dim: 8,
        layers: 1,
        heads: 2,
        masking_variant: MaskingVariant::PostSoftmaxLiteral,
        paper_literal_masked_update: false,
    }
}

fn random_motion(t_past: usize, t_future: usize, joints: usize, seed: u64) -> MotionSequence {
    let mut rng = derive_rng(seed, "invariants/motion", &[]);
    let t = t_past + t_future;
    let coords = Tensor::new(
        vec![t, joints, 3],
        (0..t * joints * 3)
            .map(|_| rng.random_range(-500.0..500.0))
            .collect(),
    )
    .unwrap();
    MotionSequence::new(coords, t_past).unwrap()
}

fn random_mask(t_total: usize, joints: usize, p_zero: f64, seed: u64) -> MaskMatrix {
    let mut rng = derive_rng(seed, "invariants/mask", &[]);
    let bits = (0..t_total * joints)
        .map(|_| !rng.random_bool(p_zero))
        .collect();
    MaskMatrix::new(t_total, joints, bits).unwrap()
}

/// Perturbing inputs only at masked positions leaves the forward output
/// bitwise unchanged, for any mask and both masking variants.
#[test]
fn mask_invariance_end_to_end() {
    let mut cfg = tiny_hyper();
    for variant in [
        MaskingVariant::PostSoftmaxLiteral,
        MaskingVariant::PreSoftmaxAdditive,
    ] {
        cfg.masking_variant = variant;
        let params = ModelParams::init(5, 3, &cfg, 1).unwrap();
        for trial in 0..20u64 {
            let x = random_motion(3, 2, 3, 100 + trial);
            let mask = random_mask(5, 3, 0.4, 200 + trial);
            let base = forward(&x, &mask, TaskHead::Mask, &params, &cfg).unwrap();

            let mut perturbed = x.clone();
            let mut rng = derive_rng(300 + trial, "invariants/perturb", &[]);
            let mut touched = false;
            for t in 0..5 {
                for j in 0..3 {
                    if !mask.get(t, j) {
                        perturbed.set_coord(
                            t,
                            j,
                            [
                                rng.random_range(-1e6..1e6),
                                rng.random_range(-1e6..1e6),
                                rng.random_range(-1e6..1e6),
                            ],
                        );
                        touched = true;
                    }
                }
            }
            if !touched {
                continue;
            }
            let out = forward(&perturbed, &mask, TaskHead::Mask, &params, &cfg).unwrap();
            assert_eq!(base.data(), out.data(), "variant {variant:?} trial {trial}");
        }
    }
}

/// Under the default update rule, observed-only attention leaves masked
/// positions exactly equal to their input features across the whole forward:
/// feeding identical inputs with different values at masked positions is
/// covered above; here we check the layer-level identity directly.
#[test]
fn osta_identity_on_masked_rows() {
    use auxformer::model::osta_layer;
    let cfg = tiny_hyper();
    let params = ModelParams::init(4, 3, &cfg, 3).unwrap();
    let mask = random_mask(4, 3, 0.5, 4);

    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let mut rng = derive_rng(5, "invariants/features", &[]);
    let features = Tensor::new(
        vec![12, 8],
        (0..96).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let fv = tape.constant(features.clone());
    let out = osta_layer(
        &mut tape,
        &vars.layers[0].osta,
        fv,
        &mask,
        &cfg,
        "osta",
        &mut None,
    )
    .unwrap();
    let out_t = tape.value(out);
    for t in 0..4 {
        for j in 0..3 {
            if !mask.get(t, j) {
                let row = t * 3 + j;
                for f in 0..8 {
                    assert_eq!(
                        out_t.at2(row, f),
                        features.at2(row, f),
                        "masked row changed at ({t},{j})"
                    );
                }
            }
        }
    }
}

/// With the literal update rule, masked rows do move (h + FFN(0)).
#[test]
fn literal_update_shifts_masked_rows() {
    use auxformer::model::osta_layer;
    let mut cfg = tiny_hyper();
    cfg.paper_literal_masked_update = true;
    let params = ModelParams::init(4, 3, &cfg, 6).unwrap();
    let mut mask = MaskMatrix::all_ones(4, 3);
    mask.set(1, 1, false);

    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let mut rng = derive_rng(7, "invariants/features2", &[]);
    let features = Tensor::new(
        vec![12, 8],
        (0..96).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let fv = tape.constant(features.clone());
    let out = osta_layer(
        &mut tape,
        &vars.layers[0].osta,
        fv,
        &mask,
        &cfg,
        "osta",
        &mut None,
    )
    .unwrap();
    let row = 3 + 1; // (t=1, j=1)
    let moved = (0..8).any(|f| tape.value(out).at2(row, f) != features.at2(row, f));
    assert!(moved, "literal variant left the masked row untouched");
}

/// Full three-task loss gradient against central finite differences on the
/// tiny configuration, every parameter group at once.
#[test]
fn full_loss_gradient_matches_finite_differences() {
    let hyper = HyperConfig {
        feature_dim: 8,
        layers: 1,
        heads: 2,
        masking_variant: MaskingVariant::PostSoftmaxLiteral,
        paper_literal_masked_update: false,
    };
    let err = auxformer::tasks::full_loss_grad_check(&hyper, 2, 2, 2, 0, 1e-5).unwrap();
    assert!(err < 1e-4, "max rel error {err}");
}

/// Same check under the pre-softmax masking variant.
#[test]
fn full_loss_gradient_pre_softmax_variant() {
    let hyper = HyperConfig {
        feature_dim: 8,
        layers: 1,
        heads: 2,
        masking_variant: MaskingVariant::PreSoftmaxAdditive,
        paper_literal_masked_update: false,
    };
    let err = auxformer::tasks::full_loss_grad_check(&hyper, 2, 2, 2, 0, 1e-5).unwrap();
    assert!(err < 1e-4, "max rel error {err}");
}

/// Gradients of the prediction loss alone are zero for the mask and denoise
/// heads, and symmetrically.
#[test]
fn head_independence() {
    use auxformer::model::forward_on_tape;
    let hyper = tiny_hyper();
    let params = ModelParams::init(4, 2, &hyper, 10).unwrap();
    let x = random_motion(2, 2, 2, 11).zero_padded().scaled(0.01);
    let mask = MaskMatrix::past_only(2, 4, 2);

    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = forward_on_tape(
        &mut tape,
        &vars,
        &x,
        &mask,
        TaskHead::Pred,
        &hyper,
        &mut None,
    )
    .unwrap();
    let target = Tensor::zeros(&[8, 3]);
    let weights = vec![1.0; 8];
    let loss = tape.weighted_sq_loss(out, &target, &weights, 8.0).unwrap();
    let grads = tape.backward(loss).unwrap();

    for head in [&vars.head_mask, &vars.head_denoise] {
        for var in [head.weight, head.bias] {
            assert!(grads.param(var).data().iter().all(|&g| g == 0.0));
        }
    }
    let pred_grad = grads.param(vars.head_pred.weight);
    assert!(pred_grad.data().iter().any(|&g| g != 0.0));
}

/// Full attention treats joints symmetrically: swapping two joints in the
/// coordinates and the joint dictionary swaps the outputs.
#[test]
fn forward_joint_equivariance() {
    let cfg = tiny_hyper();
    let params = ModelParams::init(4, 3, &cfg, 12).unwrap();
    let x = random_motion(2, 2, 3, 13);
    let mask = MaskMatrix::past_only(2, 4, 3);
    let out = forward(&x, &mask, TaskHead::Pred, &params, &cfg).unwrap();

    // swap joints 0 and 2 everywhere
    let swap = |j: usize| match j {
        0 => 2,
        2 => 0,
        other => other,
    };
    let mut x2 = x.clone();
    let mut p2 = params.clone();
    for t in 0..4 {
        let a = x.coord(t, 0);
        let b = x.coord(t, 2);
        x2.set_coord(t, 0, b);
        x2.set_coord(t, 2, a);
    }
    for f in 0..8 {
        let a = params.joint_dict.at2(0, f);
        let b = params.joint_dict.at2(2, f);
        p2.joint_dict.data_mut()[f] = b;
        p2.joint_dict.data_mut()[2 * 8 + f] = a;
    }
    let out2 = forward(&x2, &mask, TaskHead::Pred, &p2, &cfg).unwrap();
    for t in 0..4 {
        for j in 0..3 {
            for c in 0..3 {
                let diff = (out2.at3(t, j, c) - out.at3(t, swap(j), c)).abs();
                assert!(diff < 1e-9, "equivariance violated at ({t},{j},{c}): {diff}");
            }
        }
    }
}

/// All-equal features at every position stay all-equal through full
/// attention (symmetry of the all-ones mask).
#[test]
fn fsta_uniform_features_stay_uniform() {
    use auxformer::model::fsta_layer;
    let cfg = tiny_hyper();
    let params = ModelParams::init(3, 2, &cfg, 14).unwrap();
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let row: Vec<f64> = (0..8).map(|f| 0.1 * f as f64 - 0.3).collect();
    let features = Tensor::new(vec![6, 8], row.repeat(6)).unwrap();
    let fv = tape.constant(features);
    let out = fsta_layer(&mut tape, &vars.layers[0].fsta, fv, 3, 2, &cfg, "fsta", &mut None)
        .unwrap();
    let out_t = tape.value(out);
    for r in 1..6 {
        for f in 0..8 {
            let diff = (out_t.at2(r, f) - out_t.at2(0, f)).abs();
            assert!(diff < 1e-12, "row {r} differs at {f}");
        }
    }
}

/// OSTA with the all-zero mask returns its input; with the all-ones mask it
/// matches FSTA applied with the same weights.
#[test]
fn osta_degenerate_masks() {
    use auxformer::model::{fsta_layer, osta_layer};
    let cfg = tiny_hyper();
    let params = ModelParams::init(3, 2, &cfg, 15).unwrap();
    let mut rng = derive_rng(16, "invariants/features3", &[]);
    let features = Tensor::new(
        vec![6, 8],
        (0..48).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();

    // all-zero mask: identity
    let zeros = MaskMatrix::new(3, 2, vec![false; 6]).unwrap();
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let fv = tape.constant(features.clone());
    let out = osta_layer(&mut tape, &vars.layers[0].osta, fv, &zeros, &cfg, "o", &mut None)
        .unwrap();
    assert_eq!(tape.value(out).data(), features.data());

    // all-ones mask: same as the FSTA wiring with identical weights
    let ones = MaskMatrix::all_ones(3, 2);
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let fv = tape.constant(features.clone());
    let a = osta_layer(&mut tape, &vars.layers[0].osta, fv, &ones, &cfg, "o", &mut None)
        .unwrap();
    let b = fsta_layer(&mut tape, &vars.layers[0].osta, fv, 3, 2, &cfg, "f", &mut None)
        .unwrap();
    assert_eq!(tape.value(a).data(), tape.value(b).data());
}
