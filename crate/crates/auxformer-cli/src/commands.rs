//! Command implementations shared by the binary and the test suites.

use crate::config::ExperimentConfig;
use auxformer::eval::{evaluate, robustness_sweep, CorruptionMode, EvalResult, Predictor};
use auxformer::model::{load_checkpoint, save_checkpoint, ModelParams};
use auxformer::synth::{
    default_nine_joint_skeleton, generate_dataset, read_motion, read_motion_csv, write_motion,
};
use auxformer::tasks::{
    full_loss_grad_check, train, Dataset, LossConfig, LossWeights, TrainOptions, TrainReport,
};
use auxformer::{write_atomic, Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST_NAME: &str = "manifest.csv";
pub const CONFIG_ECHO_NAME: &str = "config.used";

/// Gate every output path behind the overwrite flag.
pub fn check_output(path: &Path, overwrite: bool) -> Result<()> {
    if path.exists() && !overwrite {
        return Err(Error::InvalidArgument(format!(
            "{} exists; pass --overwrite to replace it",
            path.display()
        )));
    }
    Ok(())
}

/// Generate the synthetic dataset: motion files, a manifest and an echo of
/// the effective configuration.
pub fn cmd_gen(cfg: &ExperimentConfig, out_dir: &Path, overwrite: bool) -> Result<PathBuf> {
    let manifest_path = out_dir.join(MANIFEST_NAME);
    check_output(&manifest_path, overwrite)?;
    std::fs::create_dir_all(out_dir)?;

    let skel = default_nine_joint_skeleton();
    let mut manifest = String::from("filename,split\n");
    let mut synth = cfg.synth(cfg.n_train);
    synth.seed = auxformer::rng::derive_seed(cfg.seed, "gen/train", &[]);
    for (i, x) in generate_dataset(&skel, &synth).iter().enumerate() {
        let name = format!("train_{i:04}.motn");
        write_motion(&out_dir.join(&name), x)?;
        let _ = writeln!(manifest, "{name},train");
    }
    synth.samples = cfg.n_test;
    synth.seed = auxformer::rng::derive_seed(cfg.seed, "gen/test", &[]);
    for (i, x) in generate_dataset(&skel, &synth).iter().enumerate() {
        let name = format!("test_{i:04}.motn");
        write_motion(&out_dir.join(&name), x)?;
        let _ = writeln!(manifest, "{name},test");
    }
    write_atomic(&manifest_path, manifest.as_bytes())?;
    write_atomic(
        &out_dir.join(CONFIG_ECHO_NAME),
        cfg.to_flat_string().as_bytes(),
    )?;
    Ok(manifest_path)
}

/// Load a generated dataset directory via its manifest. CSV motion files are
/// accepted alongside the binary format; their past length comes from the
/// configuration.
pub fn load_dataset(cfg: &ExperimentConfig, data_dir: &Path) -> Result<Dataset> {
    let manifest_path = data_dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
        Error::InvalidArgument(format!("cannot read {}: {e}", manifest_path.display()))
    })?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut lines = text.lines();
    match lines.next() {
        Some("filename,split") => {}
        _ => {
            return Err(Error::MalformedHeader {
                path: manifest_path.display().to_string(),
                reason: "expected header filename,split".into(),
            })
        }
    }
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (name, split) = line.split_once(',').ok_or_else(|| Error::MalformedHeader {
            path: manifest_path.display().to_string(),
            reason: format!("bad manifest line {line:?}"),
        })?;
        let path = data_dir.join(name);
        let motion = if name.ends_with(".csv") {
            read_motion_csv(&path, cfg.t_past)?
        } else {
            read_motion(&path)?
        };
        match split {
            "train" => train.push(motion),
            "test" => test.push(motion),
            other => {
                return Err(Error::MalformedHeader {
                    path: manifest_path.display().to_string(),
                    reason: format!("unknown split {other:?}"),
                })
            }
        }
    }
    if train.is_empty() && test.is_empty() {
        return Err(Error::InvalidArgument("manifest lists no files".into()));
    }
    Ok(Dataset { train, val: test })
}

fn data_dims(data: &Dataset) -> Result<(usize, usize, usize)> {
    let sample = data
        .train
        .first()
        .or_else(|| data.val.first())
        .ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
    for x in data.train.iter().chain(&data.val) {
        if x.t_total() != sample.t_total()
            || x.joints() != sample.joints()
            || x.t_past() != sample.t_past()
        {
            return Err(Error::InvalidArgument(
                "dataset mixes sequence shapes".into(),
            ));
        }
    }
    Ok((sample.t_total(), sample.joints(), sample.t_past()))
}

/// Train on a dataset with the configured settings.
pub fn train_once(
    cfg: &ExperimentConfig,
    data: &Dataset,
    weights: LossWeights,
    seed: u64,
) -> Result<(ModelParams, TrainReport)> {
    let (t_total, joints, _) = data_dims(data)?;
    let hyper = cfg.hyper();
    let mut corruption = cfg.corruption();
    corruption.seed = seed;
    let loss = LossConfig {
        weights,
        ..cfg.loss()
    };
    let optim = cfg.optim();
    let opts = TrainOptions {
        corruption: &corruption,
        loss: &loss,
        optim: &optim,
        hyper: &hyper,
        horizons: &cfg.horizons,
        frame_rate: cfg.frame_rate,
        seed,
    };
    let mut params = ModelParams::init(t_total, joints, &hyper, seed)?;
    let report = train(data, &mut params, &opts)?;
    Ok((params, report))
}

/// Train and persist checkpoint plus report CSV.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    data_dir: &Path,
    out_checkpoint: &Path,
    report_path: Option<&Path>,
    overwrite: bool,
) -> Result<()> {
    let default_report = out_checkpoint.with_extension("report.csv");
    let report_path = report_path.unwrap_or(&default_report);
    check_output(out_checkpoint, overwrite)?;
    check_output(report_path, overwrite)?;

    let data = load_dataset(cfg, data_dir)?;
    let weights = LossWeights {
        alpha_mask: cfg.alpha_mask,
        alpha_denoise: cfg.alpha_denoise,
    };
    let (params, report) = train_once(cfg, &data, weights, cfg.seed)?;
    save_checkpoint(out_checkpoint, &params)?;
    report.write_csv(report_path)?;
    Ok(())
}

/// Evaluate a checkpoint on the test split.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    data_dir: &Path,
    horizons: Option<&[usize]>,
    out: &Path,
    overwrite: bool,
) -> Result<EvalResult> {
    check_output(out, overwrite)?;
    let data = load_dataset(cfg, data_dir)?;
    let (_, _, t_past) = data_dims(&data)?;
    let t_future = data
        .val
        .first()
        .or_else(|| data.train.first())
        .map(|x| x.t_future())
        .unwrap_or(0);
    let _ = t_past;
    let horizons = horizons.unwrap_or(&cfg.horizons);
    for &h in horizons {
        if h < 1 || h > t_future {
            return Err(Error::HorizonOutOfRange { horizon: h, t_future });
        }
    }
    let params = load_checkpoint(checkpoint)?;
    let hyper = cfg.hyper();
    params.check_compatible(&hyper)?;
    let predictor = Predictor::Model {
        params: &params,
        hyper: &hyper,
        input_scale: cfg.input_scale,
    };
    let result = evaluate(&predictor, &data.val, horizons, cfg.frame_rate)?;
    result.write_csv(out)?;
    Ok(result)
}

/// The four-task ablation (plus optional extra masking-ratio rows): train
/// each configuration on the train split and report test MPJPE per horizon.
pub fn cmd_ablate(
    cfg: &ExperimentConfig,
    data_dir: &Path,
    out: &Path,
    mask_ratios: Option<&[f64]>,
    overwrite: bool,
) -> Result<String> {
    check_output(out, overwrite)?;
    let data = load_dataset(cfg, data_dir)?;

    let mut rows: Vec<(String, ExperimentConfig, LossWeights)> = vec![
        (
            "pred".into(),
            cfg.clone(),
            LossWeights {
                alpha_mask: 0.0,
                alpha_denoise: 0.0,
            },
        ),
        (
            "pred+mask".into(),
            cfg.clone(),
            LossWeights {
                alpha_mask: cfg.alpha_mask,
                alpha_denoise: 0.0,
            },
        ),
        (
            "pred+denoise".into(),
            cfg.clone(),
            LossWeights {
                alpha_mask: 0.0,
                alpha_denoise: cfg.alpha_denoise,
            },
        ),
        (
            "pred+mask+denoise".into(),
            cfg.clone(),
            LossWeights {
                alpha_mask: cfg.alpha_mask,
                alpha_denoise: cfg.alpha_denoise,
            },
        ),
    ];
    if let Some(ratios) = mask_ratios {
        for &r in ratios {
            let mut variant = cfg.clone();
            variant.mask_prob = r;
            variant.validate()?;
            rows.push((
                format!("pred+mask+denoise@p_m={r}"),
                variant,
                LossWeights {
                    alpha_mask: cfg.alpha_mask,
                    alpha_denoise: cfg.alpha_denoise,
                },
            ));
        }
    }

    let mut csv = String::from("config");
    for &h in &cfg.horizons {
        let ms = h as f64 * 1000.0 / cfg.frame_rate;
        let _ = write!(csv, ",mpjpe@{ms}ms");
    }
    csv.push('\n');
    for (label, variant, weights) in &rows {
        let (params, _) = train_once(variant, &data, *weights, variant.seed)?;
        let hyper = variant.hyper();
        let predictor = Predictor::Model {
            params: &params,
            hyper: &hyper,
            input_scale: variant.input_scale,
        };
        let result = evaluate(&predictor, &data.val, &variant.horizons, variant.frame_rate)?;
        let _ = write!(csv, "{label}");
        for v in &result.mpjpe {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    write_atomic(out, csv.as_bytes())?;
    Ok(csv)
}

/// Robustness sweep of a trained checkpoint under test-time corruption.
#[allow(clippy::too_many_arguments)]
pub fn cmd_robust(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    data_dir: &Path,
    mode: CorruptionMode,
    ratios: &[f64],
    sigma: Option<f64>,
    out: &Path,
    overwrite: bool,
) -> Result<()> {
    check_output(out, overwrite)?;
    let data = load_dataset(cfg, data_dir)?;
    let params = load_checkpoint(checkpoint)?;
    let hyper = cfg.hyper();
    params.check_compatible(&hyper)?;
    let predictor = Predictor::Model {
        params: &params,
        hyper: &hyper,
        input_scale: cfg.input_scale,
    };
    let table = robustness_sweep(
        &predictor,
        &data.val,
        mode,
        ratios,
        sigma.unwrap_or(cfg.noise_sigma),
        cfg.seed,
        &cfg.horizons,
        cfg.frame_rate,
    )?;
    table.write_csv(out)?;
    Ok(())
}

/// Verify the full-loss gradient on the smallest configuration that
/// exercises every code path. Returns the maximum relative error.
pub fn cmd_gradcheck(cfg: &ExperimentConfig) -> Result<f64> {
    let hyper = auxformer::model::HyperConfig {
        feature_dim: 8,
        layers: 1,
        heads: 2,
        masking_variant: cfg.masking_variant,
        paper_literal_masked_update: cfg.paper_literal_masked_update,
    };
    full_loss_grad_check(&hyper, 2, 2, 2, cfg.seed, 1e-5)
}
