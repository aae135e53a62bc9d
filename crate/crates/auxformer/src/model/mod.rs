//! The auxiliary-adapted transformer: coordinate encoding, token embedding,
//! mask-aware spatial/temporal attention iterated over observed-only and full
//! passes, and three prediction heads sharing one backbone.

mod attention;
mod checkpoint;
mod params;

pub use attention::{masked_attention, Instrumentation, SoftmaxRecord};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use params::{Affine, AttnBlock, AttnUnit, Layer, ModelParams, ModelVars, Params};

use crate::error::{Error, Result};
use crate::motion::{MaskMatrix, MotionSequence};
use crate::numerics::{Tape, Tensor, Var};
use attention::{spatial_attention_pass, temporal_attention_pass};

/// Where the observability mask enters the attention weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskingVariant {
    /// Multiply softmax weights elementwise by the observability outer
    /// product after normalization; rows become sub-stochastic.
    PostSoftmaxLiteral,
    /// Exclude masked keys before the softmax, renormalizing over observed
    /// keys only.
    PreSoftmaxAdditive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperConfig {
    pub feature_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub masking_variant: MaskingVariant,
    /// When set, rows with observability 0 receive the residual FFN update
    /// of their zero attention output (h + FFN(0)) instead of passing
    /// through unchanged.
    pub paper_literal_masked_update: bool,
}

impl Default for HyperConfig {
    fn default() -> Self {
        HyperConfig {
            feature_dim: 16,
            layers: 1,
            heads: 4,
            masking_variant: MaskingVariant::PostSoftmaxLiteral,
            paper_literal_masked_update: false,
        }
    }
}

impl HyperConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::InvalidArgument("layers must be >= 1".into()));
        }
        if self.heads < 1 || self.feature_dim % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "feature_dim {} must be divisible by heads {}",
                self.feature_dim, self.heads
            )));
        }
        Ok(())
    }
}

/// Which prediction head reads the backbone features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskHead {
    Pred,
    Mask,
    Denoise,
}

fn check_finite(tape: &Tape, v: Var, context: &str) -> Result<()> {
    if tape.value(v).all_finite() {
        Ok(())
    } else {
        Err(Error::non_finite(context))
    }
}

/// Observed-only spatial-temporal attention: spatial then temporal, both
/// restricted by the task mask. Masked positions pass through unchanged
/// under the default update rule.
pub fn osta_layer(
    tape: &mut Tape,
    block: &AttnBlock<Var>,
    features: Var,
    mask: &MaskMatrix,
    cfg: &HyperConfig,
    context: &str,
    instr: &mut Instrumentation,
) -> Result<Var> {
    let h = spatial_attention_pass(
        tape,
        &block.spatial,
        features,
        mask,
        cfg,
        &format!("{context}.spatial"),
        instr,
    )?;
    temporal_attention_pass(
        tape,
        &block.temporal,
        h,
        mask,
        cfg,
        &format!("{context}.temporal"),
        instr,
    )
}

/// Full spatial-temporal attention: the same mechanism with the all-ones mask.
pub fn fsta_layer(
    tape: &mut Tape,
    block: &AttnBlock<Var>,
    features: Var,
    t_total: usize,
    joints: usize,
    cfg: &HyperConfig,
    context: &str,
    instr: &mut Instrumentation,
) -> Result<Var> {
    let ones = MaskMatrix::all_ones(t_total, joints);
    let h = spatial_attention_pass(
        tape,
        &block.spatial,
        features,
        &ones,
        cfg,
        &format!("{context}.spatial"),
        instr,
    )?;
    temporal_attention_pass(
        tape,
        &block.temporal,
        h,
        &ones,
        cfg,
        &format!("{context}.temporal"),
        instr,
    )
}

/// Build the full network on a tape: encode, embed, L iterations of
/// observed-only and full attention, then the selected head. Returns the
/// (T·J)×3 output variable.
pub fn forward_on_tape(
    tape: &mut Tape,
    vars: &ModelVars,
    x: &MotionSequence,
    mask: &MaskMatrix,
    head: TaskHead,
    cfg: &HyperConfig,
    instr: &mut Instrumentation,
) -> Result<Var> {
    cfg.validate()?;
    let t_total = tape.value(vars.time_dict).shape()[0];
    let joints = tape.value(vars.joint_dict).shape()[0];
    if x.t_total() != t_total || x.joints() != joints {
        return Err(Error::InvalidArgument(format!(
            "model is bound to T={t_total}, J={joints}; input has T={}, J={}",
            x.t_total(),
            x.joints()
        )));
    }
    if mask.t_total() != t_total || mask.joints() != joints {
        return Err(Error::InvalidArgument("mask does not match model dims".into()));
    }
    if !x.coords().all_finite() {
        return Err(Error::non_finite("input coordinates"));
    }

    let n = t_total * joints;
    let coords = tape.constant(x.coords().reshaped(&[n, 3])?);

    // coordinate encoding: each 3-vector through the same affine map
    let encoded = tape.affine(coords, vars.encoder.weight, vars.encoder.bias)?;
    check_finite(tape, encoded, "encoder")?;

    // token embedding: replace masked features with the masked token, then
    // add the timestamp and joint dictionary codes
    let time_idx: Vec<usize> = (0..n).map(|i| i / joints).collect();
    let joint_idx: Vec<usize> = (0..n).map(|i| i % joints).collect();
    let time_codes = tape.gather_rows(vars.time_dict, &time_idx)?;
    let joint_codes = tape.gather_rows(vars.joint_dict, &joint_idx)?;
    let masked_tokens = tape.broadcast_row(vars.masked_token, n)?;
    let base = tape.blend_rows(encoded, masked_tokens, mask.flat())?;
    let with_time = tape.add(base, time_codes)?;
    let mut h = tape.add(with_time, joint_codes)?;

    for (i, layer) in vars.layers.iter().enumerate() {
        let l = i + 1;
        h = osta_layer(
            tape,
            &layer.osta,
            h,
            mask,
            cfg,
            &format!("layer{l}.osta"),
            instr,
        )?;
        check_finite(tape, h, &format!("layer{l}.osta"))?;
        h = fsta_layer(
            tape,
            &layer.fsta,
            h,
            t_total,
            joints,
            cfg,
            &format!("layer{l}.fsta"),
            instr,
        )?;
        check_finite(tape, h, &format!("layer{l}.fsta"))?;
    }

    let head_params = match head {
        TaskHead::Pred => &vars.head_pred,
        TaskHead::Mask => &vars.head_mask,
        TaskHead::Denoise => &vars.head_denoise,
    };
    let out = tape.affine(h, head_params.weight, head_params.bias)?;
    check_finite(tape, out, "head")?;
    Ok(out)
}

/// One inference pass; returns the T×J×3 output of the selected head.
pub fn forward(
    x: &MotionSequence,
    mask: &MaskMatrix,
    head: TaskHead,
    params: &ModelParams,
    cfg: &HyperConfig,
) -> Result<Tensor> {
    params.check_compatible(cfg)?;
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = forward_on_tape(&mut tape, &vars, x, mask, head, cfg, &mut None)?;
    tape.value(out)
        .reshaped(&[x.t_total(), x.joints(), 3])
}

/// Like [`forward`], additionally returning every softmax matrix produced
/// inside the attention calls.
pub fn forward_instrumented(
    x: &MotionSequence,
    mask: &MaskMatrix,
    head: TaskHead,
    params: &ModelParams,
    cfg: &HyperConfig,
) -> Result<(Tensor, Vec<SoftmaxRecord>)> {
    params.check_compatible(cfg)?;
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let mut records = Vec::new();
    let mut instr: Instrumentation = Some(&mut records);
    let out = forward_on_tape(&mut tape, &vars, x, mask, head, cfg, &mut instr)?;
    let tensor = tape.value(out).reshaped(&[x.t_total(), x.joints(), 3])?;
    Ok((tensor, records))
}

/// Run the primary prediction task on zero-padded past motion and return the
/// predicted future frames, shape T_f×J×3.
pub fn predict_future(
    x_past: &MotionSequence,
    params: &ModelParams,
    cfg: &HyperConfig,
) -> Result<Tensor> {
    let mask = MaskMatrix::past_only(x_past.t_past(), x_past.t_total(), x_past.joints());
    predict_future_masked(x_past, &mask, params, cfg)
}

/// Prediction with an explicit observability mask over the past (used when
/// test inputs have missing coordinates). The mask must be zero on all
/// future frames.
pub fn predict_future_masked(
    x: &MotionSequence,
    mask: &MaskMatrix,
    params: &ModelParams,
    cfg: &HyperConfig,
) -> Result<Tensor> {
    let padded = x.zero_padded();
    let out = forward(&padded, mask, TaskHead::Pred, params, cfg)?;
    let joints = x.joints();
    let start = x.t_past() * joints * 3;
    Tensor::new(
        vec![x.t_future(), joints, 3],
        out.data()[start..].to_vec(),
    )
}

/// Coordinate encoding alone: every 3-vector mapped by the shared affine
/// encoder, output T×J×F.
pub fn coordinate_encode(x: &MotionSequence, params: &ModelParams) -> Result<Tensor> {
    let n = x.t_total() * x.joints();
    let mut tape = Tape::new();
    let coords = tape.constant(x.coords().reshaped(&[n, 3])?);
    let w = tape.constant(params.encoder.weight.clone());
    let b = tape.constant(params.encoder.bias.clone());
    let out = tape.affine(coords, w, b)?;
    tape.value(out)
        .reshaped(&[x.t_total(), x.joints(), params.feature_dim()])
}

/// Token embedding alone: input features survive where the mask is 1, the
/// learned masked token replaces them where it is 0, and the timestamp and
/// joint codes are added everywhere.
pub fn token_embed(
    encoded: &Tensor,
    mask: &MaskMatrix,
    params: &ModelParams,
) -> Result<Tensor> {
    if encoded.rank() != 3 {
        return Err(Error::InvalidShape {
            op: "token_embed",
            shape: encoded.shape().to_vec(),
            reason: "T×J×F tensor required".into(),
        });
    }
    let (t_total, joints, feat) = (
        encoded.shape()[0],
        encoded.shape()[1],
        encoded.shape()[2],
    );
    if mask.t_total() != t_total || mask.joints() != joints || feat != params.feature_dim() {
        return Err(Error::InvalidArgument(
            "token_embed: mask or params do not match features".into(),
        ));
    }
    let n = t_total * joints;
    let mut tape = Tape::new();
    let e = tape.constant(encoded.reshaped(&[n, feat])?);
    let time_dict = tape.constant(params.time_dict.clone());
    let joint_dict = tape.constant(params.joint_dict.clone());
    let token = tape.constant(params.masked_token.clone());
    let time_idx: Vec<usize> = (0..n).map(|i| i / joints).collect();
    let joint_idx: Vec<usize> = (0..n).map(|i| i % joints).collect();
    let time_codes = tape.gather_rows(time_dict, &time_idx)?;
    let joint_codes = tape.gather_rows(joint_dict, &joint_idx)?;
    let tokens = tape.broadcast_row(token, n)?;
    let base = tape.blend_rows(e, tokens, mask.flat())?;
    let with_time = tape.add(base, time_codes)?;
    let out = tape.add(with_time, joint_codes)?;
    tape.value(out).reshaped(&[t_total, joints, feat])
}
