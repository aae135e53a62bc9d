//! Corruption generators, task masks, loss terms and the joint objective.

mod adam;
mod train;

pub use adam::{adam_step, AdamState};
pub use train::{train, Dataset, EpochRow, TrainOptions, TrainReport};

use crate::error::{Error, Result};
use crate::model::{forward_on_tape, HyperConfig, ModelParams, ModelVars, TaskHead};
use crate::motion::{MaskMatrix, MotionSequence};
use crate::numerics::{Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Masking/noising probabilities and the noise deviation, plus the seed all
/// corruption streams derive from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub p_mask: f64,
    pub p_noise: f64,
    /// Noise standard deviation in millimeters (applied before input scaling).
    pub sigma: f64,
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            p_mask: 0.5,
            p_noise: 0.3,
            sigma: 50.0,
            seed: 0,
        }
    }
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_mask) || !(0.0..=1.0).contains(&self.p_noise) {
            return Err(Error::InvalidArgument(format!(
                "corruption probabilities must lie in [0,1]: p_mask={}, p_noise={}",
                self.p_mask, self.p_noise
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha_mask: f64,
    pub alpha_denoise: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha_mask: 1.0,
            alpha_denoise: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_mask < 0.0 || self.alpha_denoise < 0.0 {
            return Err(Error::InvalidArgument(
                "loss weights must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Distance used inside the training losses. MPJPE evaluation is always
/// unsquared, independent of this switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMetric {
    SquaredL2,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub metric: LossMetric,
    /// Restrict the masking loss to randomly masked past coordinates instead
    /// of the full masked set (which includes all future frames).
    pub mask_past_only: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            weights: LossWeights::default(),
            metric: LossMetric::SquaredL2,
            mask_past_only: false,
        }
    }
}

/// Optimizer and scaling settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Inputs are multiplied by this before entering the network and outputs
    /// divided by it before metric computation.
    pub input_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 12,
            batch_size: 16,
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            input_scale: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.input_scale > 0.0) {
            return Err(Error::InvalidArgument(
                "learning_rate and input_scale must be > 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("betas must lie in [0,1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// The three task masks of one training sample.
#[derive(Debug, Clone)]
pub struct TaskMasks {
    pub pred: MaskMatrix,
    pub mask: MaskMatrix,
    pub denoise: MaskMatrix,
}

/// Build M_P, M_M and M_D. The prediction and denoising masks are 1 exactly
/// on past frames; the masking-task mask additionally zeroes each past entry
/// independently with probability `p_mask`.
pub fn build_task_masks(
    t_past: usize,
    t_future: usize,
    joints: usize,
    spec: &CorruptionSpec,
    rng: &mut ChaCha8Rng,
) -> TaskMasks {
    let t_total = t_past + t_future;
    let pred = MaskMatrix::past_only(t_past, t_total, joints);
    let mut mask = pred.clone();
    for t in 0..t_past {
        for j in 0..joints {
            if rng.random_bool(spec.p_mask) {
                mask.set(t, j, false);
            }
        }
    }
    TaskMasks {
        pred: pred.clone(),
        mask,
        denoise: pred,
    }
}

/// Zero every coordinate whose mask bit is 0 (future frames of a padded
/// input are already zero).
pub fn corrupt_by_masking(x: &MotionSequence, mask: &MaskMatrix) -> MotionSequence {
    let mut out = x.clone();
    for t in 0..x.t_total() {
        for j in 0..x.joints() {
            if !mask.get(t, j) {
                out.set_coord(t, j, [0.0, 0.0, 0.0]);
            }
        }
    }
    out
}

/// Select each past coordinate independently with probability `p_noise` and
/// add i.i.d. Gaussian noise of deviation `sigma` to each of its components.
/// Returns the noised sequence and the selected (t, j) positions.
pub fn corrupt_by_noising(
    x: &MotionSequence,
    spec: &CorruptionSpec,
    rng: &mut ChaCha8Rng,
) -> (MotionSequence, Vec<(usize, usize)>) {
    let normal = Normal::new(0.0, spec.sigma).expect("sigma >= 0");
    let mut out = x.clone();
    let mut selected = Vec::new();
    for t in 0..x.t_past() {
        for j in 0..x.joints() {
            if rng.random_bool(spec.p_noise) {
                let mut c = out.coord(t, j);
                for comp in c.iter_mut() {
                    *comp += normal.sample(rng);
                }
                out.set_coord(t, j, c);
                selected.push((t, j));
            }
        }
    }
    (out, selected)
}

fn position_metric(xhat: &Tensor, x: &MotionSequence, t: usize, j: usize, metric: LossMetric) -> f64 {
    let mut sq = 0.0;
    for c in 0..3 {
        let d = xhat.at3(t, j, c) - x.coords().at3(t, j, c);
        sq += d * d;
    }
    match metric {
        LossMetric::SquaredL2 => sq,
        LossMetric::L2 => sq.sqrt(),
    }
}

fn check_output_shape(xhat: &Tensor, x: &MotionSequence, op: &'static str) -> Result<()> {
    if xhat.shape() != [x.t_total(), x.joints(), 3] {
        return Err(Error::InvalidShape {
            op,
            shape: xhat.shape().to_vec(),
            reason: format!(
                "expected [{}, {}, 3]",
                x.t_total(),
                x.joints()
            ),
        });
    }
    Ok(())
}

/// Future-frame loss: mean over (future frame, joint) of the distance between
/// prediction and ground truth.
pub fn loss_prediction(xhat: &Tensor, x: &MotionSequence, metric: LossMetric) -> Result<f64> {
    check_output_shape(xhat, x, "loss_prediction")?;
    let mut acc = 0.0;
    for t in x.t_past()..x.t_total() {
        for j in 0..x.joints() {
            acc += position_metric(xhat, x, t, j, metric);
        }
    }
    Ok(acc / (x.t_future() * x.joints()) as f64)
}

/// Masked-set loss: mean over positions with mask 0 (including future frames
/// unless `past_only`). Zero when the masked set is empty.
pub fn loss_mask(
    xhat: &Tensor,
    x: &MotionSequence,
    mask: &MaskMatrix,
    past_only: bool,
    metric: LossMetric,
) -> Result<f64> {
    check_output_shape(xhat, x, "loss_mask")?;
    let mut acc = 0.0;
    let mut count = 0usize;
    for t in 0..x.t_total() {
        if past_only && t >= x.t_past() {
            break;
        }
        for j in 0..x.joints() {
            if !mask.get(t, j) {
                acc += position_metric(xhat, x, t, j, metric);
                count += 1;
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { acc / count as f64 })
}

/// Past-frame loss: mean over (past frame, joint) of the distance between the
/// denoised output and the clean input.
pub fn loss_denoise(xhat: &Tensor, x: &MotionSequence, metric: LossMetric) -> Result<f64> {
    check_output_shape(xhat, x, "loss_denoise")?;
    let mut acc = 0.0;
    for t in 0..x.t_past() {
        for j in 0..x.joints() {
            acc += position_metric(xhat, x, t, j, metric);
        }
    }
    Ok(acc / (x.t_past() * x.joints()) as f64)
}

/// Per-term values of one sample's joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub pred: f64,
    pub mask: f64,
    pub denoise: f64,
}

/// Tape handles of one sample's joint objective. Branches with zero weight
/// are skipped entirely.
pub struct SampleLoss {
    pub total: Var,
    pub pred: Var,
    pub mask: Option<Var>,
    pub denoise: Option<Var>,
}

impl SampleLoss {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            total: tape.value(self.total).item(),
            pred: tape.value(self.pred).item(),
            mask: self.mask.map_or(0.0, |v| tape.value(v).item()),
            denoise: self.denoise.map_or(0.0, |v| tape.value(v).item()),
        }
    }
}

fn branch_loss(
    tape: &mut Tape,
    output: Var,
    target: &Tensor,
    row_weights: &[f64],
    denom: f64,
    metric: LossMetric,
) -> Result<Var> {
    match metric {
        LossMetric::SquaredL2 => tape.weighted_sq_loss(output, target, row_weights, denom),
        LossMetric::L2 => tape.weighted_dist_loss(output, target, row_weights, denom),
    }
}

/// Build the three-branch joint objective on a tape: the prediction branch on
/// the clean padded input with M_P, the masking branch on the masked input
/// with M_M, and the denoising branch on the noised input with M_D. Fresh
/// corruption is drawn from `rng`; inputs and targets are scaled by
/// `input_scale`.
#[allow(clippy::too_many_arguments)]
pub fn total_loss_on_tape(
    tape: &mut Tape,
    vars: &ModelVars,
    x: &MotionSequence,
    spec: &CorruptionSpec,
    loss_cfg: &LossConfig,
    hyper: &HyperConfig,
    input_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SampleLoss> {
    spec.validate()?;
    loss_cfg.weights.validate()?;
    let (t_past, t_future, joints) = (x.t_past(), x.t_future(), x.joints());
    let n = x.t_total() * joints;
    let masks = build_task_masks(t_past, t_future, joints, spec, rng);
    let padded = x.zero_padded();

    let target = x.scaled(input_scale).coords().reshaped(&[n, 3])?;

    // primary prediction branch
    let pred_out = forward_on_tape(
        tape,
        vars,
        &padded.scaled(input_scale),
        &masks.pred,
        TaskHead::Pred,
        hyper,
        &mut None,
    )?;
    let pred_weights: Vec<f64> = (0..n)
        .map(|i| if i / joints >= t_past { 1.0 } else { 0.0 })
        .collect();
    let pred = branch_loss(
        tape,
        pred_out,
        &target,
        &pred_weights,
        (t_future * joints) as f64,
        loss_cfg.metric,
    )?;

    let mut total = pred;

    // masking branch
    let alpha1 = loss_cfg.weights.alpha_mask;
    let mask = if alpha1 > 0.0 {
        let masked_input = corrupt_by_masking(&padded, &masks.mask);
        let mask_out = forward_on_tape(
            tape,
            vars,
            &masked_input.scaled(input_scale),
            &masks.mask,
            TaskHead::Mask,
            hyper,
            &mut None,
        )?;
        let mask_weights: Vec<f64> = (0..n)
            .map(|i| {
                let (t, j) = (i / joints, i % joints);
                let in_set = !masks.mask.get(t, j) && (!loss_cfg.mask_past_only || t < t_past);
                if in_set {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let count = mask_weights.iter().filter(|&&w| w > 0.0).count();
        if count > 0 {
            let term = branch_loss(
                tape,
                mask_out,
                &target,
                &mask_weights,
                count as f64,
                loss_cfg.metric,
            )?;
            let weighted = tape.scale(term, alpha1);
            total = tape.add(total, weighted)?;
            Some(term)
        } else {
            None
        }
    } else {
        None
    };

    // denoising branch
    let alpha2 = loss_cfg.weights.alpha_denoise;
    let denoise = if alpha2 > 0.0 {
        let (noised_input, _) = corrupt_by_noising(&padded, spec, rng);
        let denoise_out = forward_on_tape(
            tape,
            vars,
            &noised_input.scaled(input_scale),
            &masks.denoise,
            TaskHead::Denoise,
            hyper,
            &mut None,
        )?;
        let denoise_weights: Vec<f64> = (0..n)
            .map(|i| if i / joints < t_past { 1.0 } else { 0.0 })
            .collect();
        let term = branch_loss(
            tape,
            denoise_out,
            &target,
            &denoise_weights,
            (t_past * joints) as f64,
            loss_cfg.metric,
        )?;
        let weighted = tape.scale(term, alpha2);
        total = tape.add(total, weighted)?;
        Some(term)
    } else {
        None
    };

    Ok(SampleLoss {
        total,
        pred,
        mask,
        denoise,
    })
}

/// Verify the full three-task loss gradient against central finite
/// differences on a freshly drawn instance: random parameters, random input
/// coordinates and one fixed corruption draw, all derived from `seed`.
/// Returns the maximum relative error over every parameter component.
///
/// Central differences of a ReLU network are only meaningful away from the
/// activation kinks; a rare seed may place some preactivation within the
/// step of a kink and report an inflated error for that component.
pub fn full_loss_grad_check(
    hyper: &HyperConfig,
    t_past: usize,
    t_future: usize,
    joints: usize,
    seed: u64,
    step: f64,
) -> Result<f64> {
    use crate::numerics::grad_check;
    use crate::rng::derive_rng;
    use rand::Rng;

    let t_total = t_past + t_future;
    let params = ModelParams::init(t_total, joints, hyper, seed)?;
    let mut rng = derive_rng(seed, "gradcheck/motion", &[]);
    let coords = Tensor::new(
        vec![t_total, joints, 3],
        (0..t_total * joints * 3)
            .map(|_| rng.random_range(-500.0..500.0))
            .collect(),
    )?;
    let x = MotionSequence::new(coords, t_past)?;
    let spec = CorruptionSpec {
        seed,
        ..CorruptionSpec::default()
    };
    let loss_cfg = LossConfig::default();

    let mut tensors = Vec::new();
    params.visit(|_, t| tensors.push(t.clone()));
    let template = params.clone();
    let hyper = *hyper;

    let f = move |tape: &mut Tape, vs: &[Var]| -> Result<Var> {
        let mut i = 0;
        let vars = template.map(|_| {
            let v = vs[i];
            i += 1;
            v
        });
        let mut rng = derive_rng(seed, "gradcheck/draw", &[]);
        let loss = total_loss_on_tape(tape, &vars, &x, &spec, &loss_cfg, &hyper, 0.01, &mut rng)?;
        Ok(loss.total)
    };
    grad_check(&f, &tensors, step)
}

/// Evaluate the joint objective once (no gradients kept).
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    x: &MotionSequence,
    params: &ModelParams,
    spec: &CorruptionSpec,
    loss_cfg: &LossConfig,
    hyper: &HyperConfig,
    input_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let loss = total_loss_on_tape(&mut tape, &vars, x, spec, loss_cfg, hyper, input_scale, rng)?;
    Ok(loss.breakdown(&tape))
}
