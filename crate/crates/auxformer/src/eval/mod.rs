//! MPJPE evaluation, trivial baselines and the test-time robustness harness.

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::model::{predict_future_masked, HyperConfig, ModelParams};
use crate::motion::{MaskMatrix, MotionSequence};
use crate::numerics::Tensor;
use crate::rng::derive_rng;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::Path;

/// Mean per-joint position error at one future frame. `horizon` is a 1-based
/// frame offset into the future block; distances are unsquared Euclidean.
pub fn mpjpe(pred: &Tensor, gt: &Tensor, horizon: usize) -> Result<f64> {
    if pred.rank() != 3 || pred.shape() != gt.shape() || pred.shape()[2] != 3 {
        return Err(Error::ShapeMismatch {
            op: "mpjpe",
            lhs: pred.shape().to_vec(),
            rhs: gt.shape().to_vec(),
        });
    }
    let t_future = pred.shape()[0];
    if horizon < 1 || horizon > t_future {
        return Err(Error::HorizonOutOfRange { horizon, t_future });
    }
    let joints = pred.shape()[1];
    let t = horizon - 1;
    let mut acc = 0.0;
    for j in 0..joints {
        let mut sq = 0.0;
        for c in 0..3 {
            let d = pred.at3(t, j, c) - gt.at3(t, j, c);
            sq += d * d;
        }
        acc += sq.sqrt();
    }
    Ok(acc / joints as f64)
}

/// Repeat the last observed frame over the future window.
pub fn zero_velocity_baseline(x: &MotionSequence) -> Tensor {
    let joints = x.joints();
    let last = x.t_past() - 1;
    let mut out = Tensor::zeros(&[x.t_future(), joints, 3]);
    for t in 0..x.t_future() {
        for j in 0..joints {
            let c = x.coord(last, j);
            let base = (t * joints + j) * 3;
            out.data_mut()[base..base + 3].copy_from_slice(&c);
        }
    }
    out
}

/// Continue each joint's last-frame velocity linearly. With a single observed
/// frame this degenerates to the zero-velocity baseline.
pub fn linear_extrapolation_baseline(x: &MotionSequence) -> Tensor {
    let joints = x.joints();
    let last = x.t_past() - 1;
    let mut out = Tensor::zeros(&[x.t_future(), joints, 3]);
    for j in 0..joints {
        let end = x.coord(last, j);
        let vel = if x.t_past() >= 2 {
            let prev = x.coord(last - 1, j);
            [end[0] - prev[0], end[1] - prev[1], end[2] - prev[2]]
        } else {
            [0.0; 3]
        };
        for t in 0..x.t_future() {
            let k = (t + 1) as f64;
            let base = (t * joints + j) * 3;
            out.data_mut()[base..base + 3].copy_from_slice(&[
                end[0] + vel[0] * k,
                end[1] + vel[1] * k,
                end[2] + vel[2] * k,
            ]);
        }
    }
    out
}

/// Fill unobserved coordinates per joint and component: linear interpolation
/// between the nearest observed frames, extrapolation with the nearest
/// observed segment's slope at the boundaries. Joints with a single observed
/// frame copy it; joints with none stay zero.
pub fn fill_missing_linear(x: &MotionSequence, observed: &MaskMatrix) -> Result<MotionSequence> {
    let (t_total, joints) = (x.t_total(), x.joints());
    if observed.t_total() != t_total || observed.joints() != joints {
        return Err(Error::InvalidArgument(
            "fill_missing_linear: mask does not match sequence".into(),
        ));
    }
    let mut out = x.clone();
    for j in 0..joints {
        let obs: Vec<usize> = (0..t_total).filter(|&t| observed.get(t, j)).collect();
        match obs.len() {
            0 => {
                for t in 0..t_total {
                    out.set_coord(t, j, [0.0; 3]);
                }
            }
            1 => {
                let only = x.coord(obs[0], j);
                for t in 0..t_total {
                    if !observed.get(t, j) {
                        out.set_coord(t, j, only);
                    }
                }
            }
            _ => {
                // nearest observed frame on each side, precomputed in one sweep
                let mut prev = vec![None; t_total];
                let mut next = vec![None; t_total];
                let mut last = None;
                for t in 0..t_total {
                    if observed.get(t, j) {
                        last = Some(t);
                    }
                    prev[t] = last;
                }
                let mut first = None;
                for t in (0..t_total).rev() {
                    if observed.get(t, j) {
                        first = Some(t);
                    }
                    next[t] = first;
                }
                for t in 0..t_total {
                    if observed.get(t, j) {
                        continue;
                    }
                    let value = match (prev[t], next[t]) {
                        (Some(p), Some(n)) => {
                            let a = x.coord(p, j);
                            let b = x.coord(n, j);
                            let w = (t - p) as f64 / (n - p) as f64;
                            [
                                a[0] + (b[0] - a[0]) * w,
                                a[1] + (b[1] - a[1]) * w,
                                a[2] + (b[2] - a[2]) * w,
                            ]
                        }
                        (None, Some(_)) => {
                            let (o0, o1) = (obs[0], obs[1]);
                            let a = x.coord(o0, j);
                            let b = x.coord(o1, j);
                            let back = (o0 - t) as f64 / (o1 - o0) as f64;
                            [
                                a[0] - (b[0] - a[0]) * back,
                                a[1] - (b[1] - a[1]) * back,
                                a[2] - (b[2] - a[2]) * back,
                            ]
                        }
                        (Some(_), None) => {
                            let (o0, o1) = (obs[obs.len() - 2], obs[obs.len() - 1]);
                            let a = x.coord(o0, j);
                            let b = x.coord(o1, j);
                            let fwd = (t - o1) as f64 / (o1 - o0) as f64;
                            [
                                b[0] + (b[0] - a[0]) * fwd,
                                b[1] + (b[1] - a[1]) * fwd,
                                b[2] + (b[2] - a[2]) * fwd,
                            ]
                        }
                        (None, None) => unreachable!("two observations exist"),
                    };
                    out.set_coord(t, j, value);
                }
            }
        }
    }
    Ok(out)
}

/// A future-motion predictor under evaluation.
pub enum Predictor<'a> {
    Model {
        params: &'a ModelParams,
        hyper: &'a HyperConfig,
        input_scale: f64,
    },
    ZeroVelocity,
    LinearExtrapolation,
}

impl Predictor<'_> {
    /// Predict the future frames from (possibly corrupted) input with an
    /// explicit past observability mask. The model receives the mask
    /// directly; baselines see input repaired by linear filling when
    /// coordinates are missing.
    pub fn predict(&self, x: &MotionSequence, observed: Option<&MaskMatrix>) -> Result<Tensor> {
        match self {
            Predictor::Model {
                params,
                hyper,
                input_scale,
            } => {
                let mask = match observed {
                    Some(m) => m.clone(),
                    None => MaskMatrix::past_only(x.t_past(), x.t_total(), x.joints()),
                };
                let scaled = x.zero_padded().scaled(*input_scale);
                let fut = predict_future_masked(&scaled, &mask, params, hyper)?;
                Ok(fut.scale(1.0 / *input_scale))
            }
            Predictor::ZeroVelocity => {
                let input = self.repaired(x, observed)?;
                Ok(zero_velocity_baseline(&input))
            }
            Predictor::LinearExtrapolation => {
                let input = self.repaired(x, observed)?;
                Ok(linear_extrapolation_baseline(&input))
            }
        }
    }

    fn repaired(&self, x: &MotionSequence, observed: Option<&MaskMatrix>) -> Result<MotionSequence> {
        match observed {
            None => Ok(x.clone()),
            Some(m) => fill_missing_linear(x, m),
        }
    }
}

/// Per-horizon MPJPE of the model on one clean sample, in input units.
pub fn model_horizon_errors(
    params: &ModelParams,
    hyper: &HyperConfig,
    input_scale: f64,
    x: &MotionSequence,
    horizons: &[usize],
) -> Result<Vec<f64>> {
    let predictor = Predictor::Model {
        params,
        hyper,
        input_scale,
    };
    let pred = predictor.predict(x, None)?;
    let gt = x.future();
    horizons.iter().map(|&h| mpjpe(&pred, &gt, h)).collect()
}

/// Per-horizon MPJPE averaged over a test set.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub horizons: Vec<usize>,
    pub frame_rate: f64,
    pub mpjpe: Vec<f64>,
    pub n_samples: usize,
}

impl EvalResult {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("horizon_frames,horizon_ms,mpjpe,n_samples\n");
        for (h, v) in self.horizons.iter().zip(&self.mpjpe) {
            let ms = *h as f64 * 1000.0 / self.frame_rate;
            let _ = writeln!(out, "{h},{ms},{v},{}", self.n_samples);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string().as_bytes())
    }

    pub fn at_horizon(&self, horizon: usize) -> Option<f64> {
        self.horizons
            .iter()
            .position(|&h| h == horizon)
            .map(|i| self.mpjpe[i])
    }
}

/// Clean evaluation over a test set.
pub fn evaluate(
    predictor: &Predictor,
    testset: &[MotionSequence],
    horizons: &[usize],
    frame_rate: f64,
) -> Result<EvalResult> {
    if testset.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let per_sample: Vec<Vec<f64>> = testset
        .par_iter()
        .map(|x| {
            let pred = predictor.predict(x, None)?;
            let gt = x.future();
            horizons.iter().map(|&h| mpjpe(&pred, &gt, h)).collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalResult {
        horizons: horizons.to_vec(),
        frame_rate,
        mpjpe: mean_per_horizon(&per_sample, horizons.len()),
        n_samples: testset.len(),
    })
}

fn mean_per_horizon(per_sample: &[Vec<f64>], horizons: usize) -> Vec<f64> {
    let mut means = vec![0.0; horizons];
    for errs in per_sample {
        for (m, e) in means.iter_mut().zip(errs) {
            *m += e;
        }
    }
    for m in means.iter_mut() {
        *m /= per_sample.len() as f64;
    }
    means
}

/// Test-time corruption modes of the robustness study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionMode {
    Missing,
    Noisy,
}

#[derive(Debug, Clone)]
pub struct RobustnessRow {
    pub ratio: f64,
    pub horizon_frames: usize,
    pub horizon_ms: f64,
    pub mpjpe: f64,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RobustnessTable {
    pub rows: Vec<RobustnessRow>,
}

impl RobustnessTable {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("ratio,horizon_ms,mpjpe,n_samples,seed\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.ratio, r.horizon_ms, r.mpjpe, r.n_samples, r.seed
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string().as_bytes())
    }

    pub fn mpjpe_at(&self, ratio: f64, horizon_frames: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.ratio == ratio && r.horizon_frames == horizon_frames)
            .map(|r| r.mpjpe)
    }
}

/// Corrupt test inputs at each ratio and report per-horizon MPJPE.
///
/// Missing mode removes past coordinates with probability `ratio` (the model
/// is told which via its mask; baselines get linear repair first). Noisy mode
/// adds N(0, sigma) to past coordinates with probability `ratio`, with no
/// indication of where.
#[allow(clippy::too_many_arguments)]
pub fn robustness_sweep(
    predictor: &Predictor,
    testset: &[MotionSequence],
    mode: CorruptionMode,
    ratios: &[f64],
    sigma: f64,
    seed: u64,
    horizons: &[usize],
    frame_rate: f64,
) -> Result<RobustnessTable> {
    if testset.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    for &r in ratios {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidArgument(format!(
                "corruption ratio {r} outside [0,1]"
            )));
        }
    }
    let mode_ix = match mode {
        CorruptionMode::Missing => 0u64,
        CorruptionMode::Noisy => 1u64,
    };
    let mut table = RobustnessTable::default();
    for (ratio_ix, &ratio) in ratios.iter().enumerate() {
        let per_sample: Vec<Vec<f64>> = testset
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let mut rng = derive_rng(
                    seed,
                    "robust/corrupt",
                    &[mode_ix, ratio_ix as u64, i as u64],
                );
                let (corrupted, observed) = match mode {
                    CorruptionMode::Missing => {
                        let mut observed =
                            MaskMatrix::past_only(x.t_past(), x.t_total(), x.joints());
                        let mut corrupted = x.zero_padded();
                        for t in 0..x.t_past() {
                            for j in 0..x.joints() {
                                if rng.random_bool(ratio) {
                                    observed.set(t, j, false);
                                    corrupted.set_coord(t, j, [0.0; 3]);
                                }
                            }
                        }
                        (corrupted, Some(observed))
                    }
                    CorruptionMode::Noisy => {
                        let normal = Normal::new(0.0, sigma).expect("sigma >= 0");
                        let mut corrupted = x.zero_padded();
                        for t in 0..x.t_past() {
                            for j in 0..x.joints() {
                                if rng.random_bool(ratio) {
                                    let mut c = corrupted.coord(t, j);
                                    for comp in c.iter_mut() {
                                        *comp += normal.sample(&mut rng);
                                    }
                                    corrupted.set_coord(t, j, c);
                                }
                            }
                        }
                        (corrupted, None)
                    }
                };
                let pred = predictor.predict(&corrupted, observed.as_ref())?;
                let gt = x.future();
                horizons.iter().map(|&h| mpjpe(&pred, &gt, h)).collect()
            })
            .collect::<Result<Vec<_>>>()?;
        let means = mean_per_horizon(&per_sample, horizons.len());
        for (h, v) in horizons.iter().zip(means) {
            table.rows.push(RobustnessRow {
                ratio,
                horizon_frames: *h,
                horizon_ms: *h as f64 * 1000.0 / frame_rate,
                mpjpe: v,
                n_samples: testset.len(),
                seed,
            });
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::random_motion;
    use crate::oracle;
    use crate::rng::derive_rng;

    #[test]
    fn mpjpe_hand_cases() {
        // exact prediction
        let gt = Tensor::zeros(&[2, 1, 3]);
        assert_eq!(mpjpe(&gt, &gt, 1).unwrap(), 0.0);

        // 3-4-5 triangle at one joint
        let mut pred = Tensor::zeros(&[1, 1, 3]);
        pred.data_mut()[0] = 3.0;
        pred.data_mut()[1] = 4.0;
        let gt = Tensor::zeros(&[1, 1, 3]);
        assert_eq!(mpjpe(&pred, &gt, 1).unwrap(), 5.0);

        // mean of per-joint errors 1 and 2
        let mut pred = Tensor::zeros(&[1, 2, 3]);
        pred.data_mut()[0] = 1.0; // joint 0 offset (1,0,0)
        pred.data_mut()[4] = 2.0; // joint 1 offset (0,2,0)
        let gt = Tensor::zeros(&[1, 2, 3]);
        assert_eq!(mpjpe(&pred, &gt, 1).unwrap(), 1.5);
    }

    #[test]
    fn mpjpe_matches_loop_oracle_and_rejects_bad_horizon() {
        let a = random_motion(1, 3, 4, 1).future();
        let b = random_motion(1, 3, 4, 2).future();
        for h in 1..=3 {
            let got = mpjpe(&a, &b, h).unwrap();
            let want = oracle::mpjpe_loops(&a, &b, h);
            assert!((got - want).abs() < 1e-12);
        }
        assert!(matches!(
            mpjpe(&a, &b, 4),
            Err(Error::HorizonOutOfRange { .. })
        ));
        assert!(matches!(
            mpjpe(&a, &b, 0),
            Err(Error::HorizonOutOfRange { .. })
        ));
    }

    #[test]
    fn mpjpe_translation_invariance() {
        let a = random_motion(1, 3, 4, 3).future();
        let b = random_motion(1, 3, 4, 4).future();
        let shift = [12.5, -3.0, 8.25];
        let shifted = |t: &Tensor| {
            let mut out = t.clone();
            for i in 0..out.numel() {
                out.data_mut()[i] += shift[i % 3];
            }
            out
        };
        for h in 1..=3 {
            let base = mpjpe(&a, &b, h).unwrap();
            let moved = mpjpe(&shifted(&a), &shifted(&b), h).unwrap();
            assert!((base - moved).abs() < 1e-9);
        }
    }

    fn linear_motion(t_past: usize, t_future: usize, joints: usize, vel: f64) -> MotionSequence {
        let t_total = t_past + t_future;
        let mut coords = Tensor::zeros(&[t_total, joints, 3]);
        for t in 0..t_total {
            for j in 0..joints {
                let base = (t * joints + j) * 3;
                coords.data_mut()[base] = vel * t as f64 + j as f64 * 10.0;
                coords.data_mut()[base + 1] = j as f64;
            }
        }
        MotionSequence::new(coords, t_past).unwrap()
    }

    #[test]
    fn zero_velocity_baseline_cases() {
        // constant input: zero error at all horizons
        let x = linear_motion(3, 2, 2, 0.0);
        let pred = zero_velocity_baseline(&x);
        for h in 1..=2 {
            assert_eq!(mpjpe(&pred, &x.future(), h).unwrap(), 0.0);
        }
        // linear motion with speed v: error v*h at horizon h
        let v = 7.0;
        let x = linear_motion(3, 2, 2, v);
        let pred = zero_velocity_baseline(&x);
        for h in 1..=2 {
            let err = mpjpe(&pred, &x.future(), h).unwrap();
            assert!((err - v * h as f64).abs() < 1e-9);
        }
        // random sequence vs loop oracle
        let x = random_motion(3, 2, 4, 5);
        let pred = zero_velocity_baseline(&x);
        let last = x.past();
        for h in 1..=2 {
            let mut want = 0.0;
            for j in 0..4 {
                let mut sq = 0.0;
                for c in 0..3 {
                    let d = last.at3(2, j, c) - x.future().at3(h - 1, j, c);
                    sq += d * d;
                }
                want += sq.sqrt();
            }
            want /= 4.0;
            assert!((mpjpe(&pred, &x.future(), h).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_extrapolation_baseline_cases() {
        // linear motion: exact prediction
        let x = linear_motion(3, 2, 2, 4.0);
        let pred = linear_extrapolation_baseline(&x);
        for h in 1..=2 {
            assert!(mpjpe(&pred, &x.future(), h).unwrap() < 1e-9);
        }
        // constant input: equals the zero-velocity baseline
        let x = linear_motion(3, 2, 2, 0.0);
        assert_eq!(
            linear_extrapolation_baseline(&x).data(),
            zero_velocity_baseline(&x).data()
        );
        // quadratic motion x(t) = t^2: at horizon h the closed-form error is
        // |(T_p-1+h)^2 - ((T_p-1)^2 + h*v)| with v the last past velocity
        let t_past = 4;
        let mut coords = Tensor::zeros(&[6, 1, 3]);
        for t in 0..6 {
            coords.data_mut()[t * 3] = (t * t) as f64;
        }
        let x = MotionSequence::new(coords, t_past).unwrap();
        let pred = linear_extrapolation_baseline(&x);
        let last = (t_past - 1) as f64;
        let v = last * last - (last - 1.0) * (last - 1.0);
        for h in 1..=2 {
            let truth = (last + h as f64) * (last + h as f64);
            let guess = last * last + v * h as f64;
            let want = (truth - guess).abs();
            let got = mpjpe(&pred, &x.future(), h).unwrap();
            assert!((got - want).abs() < 1e-9, "h={h}: got {got}, want {want}");
        }
    }

    #[test]
    fn fill_missing_identity_and_exact_recovery() {
        let x = random_motion(4, 2, 3, 6);
        let all = MaskMatrix::all_ones(6, 3);
        let out = fill_missing_linear(&x, &all).unwrap();
        assert_eq!(out.coords().data(), x.coords().data());

        // one missing interior frame on a linear trajectory: exact recovery
        let lin = linear_motion(4, 2, 2, 3.0);
        let mut mask = MaskMatrix::all_ones(6, 2);
        mask.set(2, 1, false);
        let filled = fill_missing_linear(&lin, &mask).unwrap();
        let max = filled.coords().max_abs_diff(lin.coords());
        assert!(max < 1e-12);
    }

    #[test]
    fn fill_missing_matches_reference_on_random_gaps() {
        for trial in 0..20u64 {
            let x = random_motion(6, 2, 3, 100 + trial);
            let mut mask = MaskMatrix::all_ones(8, 3);
            let mut rng = derive_rng(7, "gaps", &[trial]);
            for t in 0..8 {
                for j in 0..3 {
                    if rng.random_bool(0.4) {
                        mask.set(t, j, false);
                    }
                }
            }
            let got = fill_missing_linear(&x, &mask).unwrap();
            let want = oracle::fill_missing_reference(&x, &mask);
            let max = got.coords().max_abs_diff(want.coords());
            assert!(max < 1e-12, "trial {trial}: {max}");
        }
    }

    #[test]
    fn fill_missing_exact_on_affine_trajectories() {
        // affine-in-time coordinates are recovered exactly for any gap
        // pattern with at least two observations
        for trial in 0..10u64 {
            let lin = linear_motion(5, 3, 2, 2.5);
            let mut mask = MaskMatrix::all_ones(8, 2);
            let mut rng = derive_rng(8, "affine-gaps", &[trial]);
            for j in 0..2 {
                let mut observed = 0;
                for t in 0..8 {
                    if rng.random_bool(0.5) {
                        mask.set(t, j, false);
                    } else {
                        observed += 1;
                    }
                }
                if observed < 2 {
                    mask.set(0, j, true);
                    mask.set(7, j, true);
                }
            }
            let filled = fill_missing_linear(&lin, &mask).unwrap();
            let max = filled.coords().max_abs_diff(lin.coords());
            assert!(max < 1e-9, "trial {trial}: {max}");
        }
    }

    #[test]
    fn robustness_ratio_zero_is_bitwise_clean_eval() {
        let testset: Vec<MotionSequence> =
            (0..4).map(|i| random_motion(3, 2, 2, 200 + i)).collect();
        let predictor = Predictor::ZeroVelocity;
        let clean = evaluate(&predictor, &testset, &[1, 2], 25.0).unwrap();
        let table = robustness_sweep(
            &predictor,
            &testset,
            CorruptionMode::Missing,
            &[0.0],
            50.0,
            9,
            &[1, 2],
            25.0,
        )
        .unwrap();
        for (i, &h) in [1usize, 2].iter().enumerate() {
            assert_eq!(table.mpjpe_at(0.0, h).unwrap(), clean.mpjpe[i]);
        }
    }

    #[test]
    fn robustness_full_missing_hand_trace() {
        // 2 past frames, everything missing: the zero-velocity baseline sees
        // all-zero filled input and predicts the origin for every joint
        let x = linear_motion(2, 1, 1, 5.0);
        let table = robustness_sweep(
            &Predictor::ZeroVelocity,
            &[x.clone()],
            CorruptionMode::Missing,
            &[1.0],
            50.0,
            3,
            &[1],
            25.0,
        )
        .unwrap();
        // ground-truth future position is (10, 0, 0); prediction is (0,0,0)
        let want = 10.0;
        let got = table.mpjpe_at(1.0, 1).unwrap();
        assert!((got - want).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn robustness_median_nondecreasing_for_baseline() {
        // smooth generated motion: corrupting more of the input cannot help
        // a repair-then-extrapolate baseline
        let skel = crate::synth::default_nine_joint_skeleton();
        let cfg = crate::synth::SynthConfig {
            t_past: 5,
            t_future: 3,
            samples: 12,
            seed: 301,
            ..crate::synth::SynthConfig::default()
        };
        let testset = crate::synth::generate_dataset(&skel, &cfg);
        let ratios = [0.0, 0.3, 0.6, 0.9];
        let mut medians = Vec::new();
        for &r in &ratios {
            let mut vals = Vec::new();
            for seed in 0..5u64 {
                let table = robustness_sweep(
                    &Predictor::ZeroVelocity,
                    &testset,
                    CorruptionMode::Missing,
                    &[r],
                    50.0,
                    seed,
                    &[3],
                    25.0,
                )
                .unwrap();
                vals.push(table.mpjpe_at(r, 3).unwrap());
            }
            vals.sort_by(f64::total_cmp);
            medians.push(vals[2]);
        }
        for w in medians.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-9,
                "median MPJPE decreased with corruption: {medians:?}"
            );
        }
    }

    #[test]
    fn sweep_rejects_bad_ratio() {
        let testset = vec![random_motion(3, 2, 2, 400)];
        assert!(robustness_sweep(
            &Predictor::ZeroVelocity,
            &testset,
            CorruptionMode::Missing,
            &[1.5],
            50.0,
            0,
            &[1],
            25.0,
        )
        .is_err());
    }
}
