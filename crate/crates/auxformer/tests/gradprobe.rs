//! Manual probe: locate which parameter groups disagree with finite
//! differences. `cargo test -p auxformer --test gradprobe -- --ignored --nocapture`

use auxformer::model::{HyperConfig, MaskingVariant, ModelParams};
use auxformer::motion::MotionSequence;
use auxformer::numerics::{Tape, Tensor, Var};
use auxformer::rng::derive_rng;
use auxformer::tasks::{total_loss_on_tape, CorruptionSpec, LossConfig};
use rand::Rng;

#[test]
#[ignore]
fn per_group_errors() {
    let hyper = HyperConfig {
        feature_dim: 8,
        layers: 1,
        heads: 2,
        masking_variant: MaskingVariant::PostSoftmaxLiteral,
        paper_literal_masked_update: false,
    };
    // same instance as the failing invariants test
    let params = ModelParams::init(4, 2, &hyper, 8).unwrap();
    let mut rng = derive_rng(9, "invariants/motion", &[]);
    let coords = Tensor::new(
        vec![4, 2, 3],
        (0..24).map(|_| rng.random_range(-500.0..500.0)).collect(),
    )
    .unwrap();
    let x = MotionSequence::new(coords, 2).unwrap();
    let spec = CorruptionSpec {
        seed: 11,
        ..CorruptionSpec::default()
    };
    let loss_cfg = LossConfig::default();

    let mut names = Vec::new();
    let mut tensors = Vec::new();
    params.visit(|name, t| {
        names.push(name);
        tensors.push(t.clone());
    });
    let template = params.clone();

    let eval = |ps: &[Tensor]| -> (f64, Vec<Tensor>) {
        let mut tape = Tape::new();
        let vars_flat: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let mut i = 0;
        let vars = template.map(|_| {
            let v = vars_flat[i];
            i += 1;
            v
        });
        let mut rng = derive_rng(99, "invariants/gradcheck", &[]);
        let loss = total_loss_on_tape(
            &mut tape, &vars, &x, &spec, &loss_cfg, &hyper, 0.01, &mut rng,
        )
        .unwrap();
        let value = tape.value(loss.total).item();
        let grads = tape.backward(loss.total).unwrap();
        let flat = vars_flat.iter().map(|&v| grads.param(v).clone()).collect();
        (value, flat)
    };

    let (_, analytic) = eval(&tensors);
    let mut work = tensors.clone();
    for &h in &[1e-5, 1e-6, 1e-7] {
        let mut worst = 0.0f64;
        let mut worst_at = (0, 0);
        for (pi, _) in names.iter().enumerate() {
            for ci in 0..analytic[pi].numel() {
                let orig = work[pi].data()[ci];
                work[pi].data_mut()[ci] = orig + h;
                let (plus, _) = eval(&work);
                work[pi].data_mut()[ci] = orig - h;
                let (minus, _) = eval(&work);
                work[pi].data_mut()[ci] = orig;
                let central = (plus - minus) / (2.0 * h);
                let a = analytic[pi].data()[ci];
                let rel = (a - central).abs() / a.abs().max(central.abs()).max(1e-8);
                if rel > worst {
                    worst = rel;
                    worst_at = (pi, ci);
                }
            }
        }
        println!(
            "h={h:e}: worst rel {worst:.3e} at {} component {}",
            names[worst_at.0], worst_at.1
        );
    }
}

#[test]
#[ignore]
fn seed_scan() {
    let hyper = HyperConfig {
        feature_dim: 8,
        layers: 1,
        heads: 2,
        masking_variant: MaskingVariant::PostSoftmaxLiteral,
        paper_literal_masked_update: false,
    };
    for seed in 0..12u64 {
        let params = ModelParams::init(4, 2, &hyper, seed).unwrap();
        let mut rng = derive_rng(seed, "gradcheck/motion", &[]);
        let coords = Tensor::new(
            vec![4, 2, 3],
            (0..24).map(|_| rng.random_range(-500.0..500.0)).collect(),
        )
        .unwrap();
        let x = MotionSequence::new(coords, 2).unwrap();
        let spec = CorruptionSpec {
            seed,
            ..CorruptionSpec::default()
        };
        let loss_cfg = LossConfig::default();

        let mut tensors = Vec::new();
        params.visit(|_, t| tensors.push(t.clone()));
        let template = params.clone();

        let f = {
            let x = x.clone();
            move |tape: &mut Tape, vs: &[Var]| -> auxformer::Result<Var> {
                let mut i = 0;
                let vars = template.map(|_| {
                    let v = vs[i];
                    i += 1;
                    v
                });
                let mut rng = derive_rng(seed, "gradcheck/draw", &[]);
                let loss = total_loss_on_tape(
                    tape, &vars, &x, &spec, &loss_cfg, &hyper, 0.01, &mut rng,
                )?;
                Ok(loss.total)
            }
        };
        let err = auxformer::numerics::grad_check(&f, &tensors, 1e-5).unwrap();
        println!("seed {seed}: max rel {err:.3e}");
    }
}
