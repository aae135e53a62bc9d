//! The joint training loop.

use super::{
    adam_step, total_loss_on_tape, AdamState, CorruptionSpec, LossBreakdown, LossConfig,
    TrainConfig,
};
use crate::error::{Error, Result};
use crate::eval::model_horizon_errors;
use crate::fsutil::write_atomic;
use crate::model::{HyperConfig, ModelParams};
use crate::motion::MotionSequence;
use crate::numerics::{Tape, Tensor};
use crate::rng::derive_rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<MotionSequence>,
    pub val: Vec<MotionSequence>,
}

#[derive(Debug, Clone)]
pub struct EpochRow {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_pred: f64,
    pub loss_mask: f64,
    pub loss_denoise: f64,
    pub val_mpjpe: Vec<f64>,
}

/// Per-epoch losses and validation MPJPE, serializable as CSV.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub horizons: Vec<usize>,
    pub frame_rate: f64,
    pub rows: Vec<EpochRow>,
}

impl TrainReport {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("epoch,loss_total,loss_pred,loss_mask,loss_denoise");
        for &h in &self.horizons {
            let ms = h as f64 * 1000.0 / self.frame_rate;
            let _ = write!(out, ",val_mpjpe@{ms}ms");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                row.epoch, row.loss_total, row.loss_pred, row.loss_mask, row.loss_denoise
            );
            for v in &row.val_mpjpe {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string().as_bytes())
    }

    /// Validation MPJPE at the last configured horizon of the final epoch.
    pub fn final_val_mpjpe(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.val_mpjpe.last().copied())
    }
}

pub struct TrainOptions<'a> {
    pub corruption: &'a CorruptionSpec,
    pub loss: &'a LossConfig,
    pub optim: &'a TrainConfig,
    pub hyper: &'a HyperConfig,
    pub horizons: &'a [usize],
    pub frame_rate: f64,
    /// Seed for epoch shuffles; corruption draws derive from
    /// `corruption.seed`.
    pub seed: u64,
}

fn zeros_like(params: &ModelParams) -> Vec<Tensor> {
    params.flat().iter().map(|t| Tensor::zeros(t.shape())).collect()
}

/// Gradients of one sample's joint loss, in canonical parameter order.
fn sample_gradients(
    params: &ModelParams,
    x: &MotionSequence,
    opts: &TrainOptions,
    epoch: usize,
    sample_index: usize,
) -> Result<(Vec<Tensor>, LossBreakdown)> {
    let mut rng = derive_rng(
        opts.corruption.seed,
        "train/corrupt",
        &[epoch as u64, sample_index as u64],
    );
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let loss = total_loss_on_tape(
        &mut tape,
        &vars,
        x,
        opts.corruption,
        opts.loss,
        opts.hyper,
        opts.optim.input_scale,
        &mut rng,
    )?;
    let breakdown = loss.breakdown(&tape);
    if !breakdown.total.is_finite() {
        return Err(Error::non_finite("sample loss"));
    }
    let grads = tape.backward(loss.total)?;
    let flat = vars
        .flat()
        .into_iter()
        .map(|&v| grads.param(v).clone())
        .collect();
    Ok((flat, breakdown))
}

fn validation_mpjpe(
    params: &ModelParams,
    data: &Dataset,
    opts: &TrainOptions,
) -> Result<Vec<f64>> {
    if data.val.is_empty() || opts.horizons.is_empty() {
        return Ok(vec![0.0; opts.horizons.len()]);
    }
    let per_sample: Vec<Vec<f64>> = data
        .val
        .par_iter()
        .map(|x| {
            model_horizon_errors(params, opts.hyper, opts.optim.input_scale, x, opts.horizons)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut means = vec![0.0; opts.horizons.len()];
    for errs in &per_sample {
        for (m, e) in means.iter_mut().zip(errs) {
            *m += e;
        }
    }
    for m in means.iter_mut() {
        *m /= per_sample.len() as f64;
    }
    Ok(means)
}

/// Train in place. Per epoch: seeded shuffle, batched gradient accumulation
/// with fresh corruption per sample, one Adam step per batch, then validation
/// MPJPE on rescaled outputs. Per-sample work may run in parallel; gradient
/// sums always reduce in sample-index order, so results are independent of
/// thread count.
pub fn train(
    data: &Dataset,
    params: &mut ModelParams,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    opts.optim.validate()?;
    opts.hyper.validate()?;
    opts.corruption.validate()?;
    params.check_compatible(opts.hyper)?;
    for h in opts.horizons {
        let t_future = data
            .val
            .first()
            .or_else(|| data.train.first())
            .map(|x| x.t_future())
            .unwrap_or(usize::MAX);
        if *h < 1 || *h > t_future {
            return Err(Error::HorizonOutOfRange {
                horizon: *h,
                t_future,
            });
        }
    }

    let mut report = TrainReport {
        horizons: opts.horizons.to_vec(),
        frame_rate: opts.frame_rate,
        rows: Vec::new(),
    };
    if data.train.is_empty() {
        return Ok(report);
    }

    let mut state = AdamState::new(params);
    for epoch in 0..opts.optim.epochs {
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        let mut shuffle_rng = derive_rng(opts.seed, "train/shuffle", &[epoch as u64]);
        order.shuffle(&mut shuffle_rng);

        let mut sums = LossBreakdown {
            total: 0.0,
            pred: 0.0,
            mask: 0.0,
            denoise: 0.0,
        };
        for (batch_index, batch) in order.chunks(opts.optim.batch_size).enumerate() {
            let results: Vec<(Vec<Tensor>, LossBreakdown)> = batch
                .par_iter()
                .map(|&idx| sample_gradients(params, &data.train[idx], opts, epoch, idx))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| match e {
                    Error::NonFinite { context } => Error::NonFinite {
                        context: format!("{context} (epoch {epoch}, batch {batch_index})"),
                    },
                    other => other,
                })?;

            // fixed-order reduction, then mean over the batch
            let mut grad_sum = zeros_like(params);
            for (grads, breakdown) in &results {
                for (acc, g) in grad_sum.iter_mut().zip(grads) {
                    for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += v;
                    }
                }
                sums.total += breakdown.total;
                sums.pred += breakdown.pred;
                sums.mask += breakdown.mask;
                sums.denoise += breakdown.denoise;
            }
            let inv = 1.0 / batch.len() as f64;
            for g in grad_sum.iter_mut() {
                for v in g.data_mut().iter_mut() {
                    *v *= inv;
                }
            }
            adam_step(params, &grad_sum, &mut state, opts.optim)?;
        }

        let n = data.train.len() as f64;
        let val_mpjpe = validation_mpjpe(params, data, opts)?;
        report.rows.push(EpochRow {
            epoch,
            loss_total: sums.total / n,
            loss_pred: sums.pred / n,
            loss_mask: sums.mask / n,
            loss_denoise: sums.denoise / n,
            val_mpjpe,
        });
    }
    Ok(report)
}
