//! Manual calibration probe:
//! `cargo test -p auxformer --test calibrate -- --ignored --nocapture`

use auxformer::eval::{evaluate, Predictor};
use auxformer::model::{HyperConfig, ModelParams};
use auxformer::synth::{default_nine_joint_skeleton, generate_dataset, SynthConfig};
use auxformer::tasks::{
    train, CorruptionSpec, Dataset, LossConfig, LossWeights, TrainConfig, TrainOptions,
};
use std::time::Instant;

fn make_data(n_train: usize, n_test: usize, hard: bool) -> Dataset {
    let skel = default_nine_joint_skeleton();
    let synth = SynthConfig {
        samples: n_train + n_test,
        seed: 7,
        freq_band: if hard { (0.3, 2.5) } else { (0.4, 1.6) },
        amp_band: if hard { (0.3, 1.0) } else { (0.2, 0.7) },
        ..SynthConfig::default()
    };
    let mut all = generate_dataset(&skel, &synth);
    let val = all.split_off(n_train);
    Dataset { train: all, val }
}

#[allow(clippy::too_many_arguments)]
fn run_cfg(
    data: &Dataset,
    hyper: &HyperConfig,
    alpha_mask: f64,
    alpha_denoise: f64,
    epochs: usize,
    lr: f64,
    seed: u64,
    mask_past_only: bool,
    euclidean: bool,
) -> Vec<f64> {
    let hyper = *hyper;
    let corruption = CorruptionSpec {
        seed,
        ..CorruptionSpec::default()
    };
    let loss = LossConfig {
        weights: LossWeights {
            alpha_mask,
            alpha_denoise,
        },
        metric: if euclidean {
            auxformer::tasks::LossMetric::L2
        } else {
            auxformer::tasks::LossMetric::SquaredL2
        },
        mask_past_only,
    };
    let optim = TrainConfig {
        epochs,
        learning_rate: lr,
        ..TrainConfig::default()
    };
    let opts = TrainOptions {
        corruption: &corruption,
        loss: &loss,
        optim: &optim,
        hyper: &hyper,
        horizons: &[2, 4, 8, 10],
        frame_rate: 25.0,
        seed,
    };
    let mut params = ModelParams::init(20, 9, &hyper, seed).unwrap();
    let start = Instant::now();
    let report = train(data, &mut params, &opts).unwrap();
    println!(
        "  seed {seed} a1={alpha_mask} a2={alpha_denoise} lr={lr}: {:.1}s, val@400ms {:7.2}",
        start.elapsed().as_secs_f64(),
        report.rows.last().unwrap().val_mpjpe[3],
    );
    report.rows.last().unwrap().val_mpjpe.clone()
}

#[test]
#[ignore]
fn calibration() {
    let data = make_data(1000, 200, false);
    let small = HyperConfig::default();

    println!("D: mask_past_only=true, F=16 L=1, lr 1e-3, 12 epochs");
    let p = run_cfg(&data, &small, 0.0, 0.0, 12, 1e-3, 0, true, false);
    let f = run_cfg(&data, &small, 1.0, 1.0, 12, 1e-3, 0, true, false);
    println!("D pred-only: {p:?}");
    println!("D full:      {f:?}");

    println!("G: pre_softmax_additive, F=16 L=1, lr 1e-3, 12 epochs");
    let pre = HyperConfig {
        masking_variant: auxformer::model::MaskingVariant::PreSoftmaxAdditive,
        ..small
    };
    let p = run_cfg(&data, &pre, 0.0, 0.0, 12, 1e-3, 0, false, false);
    let f = run_cfg(&data, &pre, 1.0, 1.0, 12, 1e-3, 0, false, false);
    println!("G pred-only: {p:?}");
    println!("G full:      {f:?}");

    println!("H: F=12 L=2 H=4, lr 1e-3, 12 epochs");
    let deep = HyperConfig {
        feature_dim: 12,
        layers: 2,
        ..small
    };
    let p = run_cfg(&data, &deep, 0.0, 0.0, 12, 1e-3, 0, false, false);
    let f = run_cfg(&data, &deep, 1.0, 1.0, 12, 1e-3, 0, false, false);
    println!("H pred-only: {p:?}");
    println!("H full:      {f:?}");
}
