//! Naive reference implementations used by the verification suites.
//!
//! Everything here is written as plain scalar loops, independent of the
//! tensor kernels, the tape, and the model code paths it is used to check.
//! Slow on purpose; correctness comes from being obvious.

use crate::motion::{MaskMatrix, MotionSequence};
use crate::numerics::Tensor;

/// Triple-loop matrix product.
pub fn matmul_loops(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    assert_eq!(k, b.shape()[0]);
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for l in 0..k {
                acc += a.at2(i, l) * b.at2(l, j);
            }
            out.data_mut()[i * n + j] = acc;
        }
    }
    out
}

/// Row softmax by direct exp/sum evaluation (no stabilization).
pub fn softmax_rows_direct(x: &Tensor) -> Tensor {
    let (m, n) = (x.shape()[0], x.shape()[1]);
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        let mut sum = 0.0;
        for j in 0..n {
            sum += x.at2(i, j).exp();
        }
        for j in 0..n {
            out.data_mut()[i * n + j] = x.at2(i, j).exp() / sum;
        }
    }
    out
}

/// Weights of one attention unit passed as plain tensors, so the oracle does
/// not depend on the model's parameter structures.
pub struct PlainAttentionWeights<'a> {
    pub q_w: &'a Tensor,
    pub q_b: &'a Tensor,
    pub k_w: &'a Tensor,
    pub k_b: &'a Tensor,
    pub v_w: &'a Tensor,
    pub v_b: &'a Tensor,
    pub ffn1_w: &'a Tensor,
    pub ffn1_b: &'a Tensor,
    pub ffn2_w: &'a Tensor,
    pub ffn2_b: &'a Tensor,
}

fn affine_loops(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (x.shape()[0], x.shape()[1]);
    let n = w.shape()[1];
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        for j in 0..n {
            let mut acc = b.data()[j];
            for l in 0..k {
                acc += x.at2(i, l) * w.at2(l, j);
            }
            out.data_mut()[i * n + j] = acc;
        }
    }
    out
}

/// Plain multi-head self-attention with residual FFN and no mask machinery:
/// per head, `softmax(Q Kᵀ / sqrt(F/H)) V`; heads concatenated, passed
/// through a two-layer ReLU FFN, and added to the input.
pub fn plain_multihead_attention(
    x: &Tensor,
    w: &PlainAttentionWeights,
    heads: usize,
) -> Tensor {
    let (n, feat) = (x.shape()[0], x.shape()[1]);
    let dh = feat / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let q = affine_loops(x, w.q_w, w.q_b);
    let k = affine_loops(x, w.k_w, w.k_b);
    let v = affine_loops(x, w.v_w, w.v_b);

    let mut mixed = Tensor::zeros(&[n, feat]);
    for h in 0..heads {
        let col0 = h * dh;
        for a in 0..n {
            // scores against every key, then direct softmax
            let mut scores = vec![0.0; n];
            for b in 0..n {
                let mut acc = 0.0;
                for l in 0..dh {
                    acc += q.at2(a, col0 + l) * k.at2(b, col0 + l);
                }
                scores[b] = acc * scale;
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                sum += *s;
            }
            for b in 0..n {
                let weight = scores[b] / sum;
                for l in 0..dh {
                    mixed.data_mut()[a * feat + col0 + l] += weight * v.at2(b, col0 + l);
                }
            }
        }
    }

    let hidden = affine_loops(&mixed, w.ffn1_w, w.ffn1_b).map(|v| if v > 0.0 { v } else { 0.0 });
    let ffn = affine_loops(&hidden, w.ffn2_w, w.ffn2_b);
    let mut out = x.clone();
    for (o, f) in out.data_mut().iter_mut().zip(ffn.data()) {
        *o += f;
    }
    out
}

fn coord_sq_dist(a: &Tensor, b: &Tensor, t: usize, j: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..3 {
        let d = a.at3(t, j, c) - b.at3(t, j, c);
        acc += d * d;
    }
    acc
}

/// Future-frame loss by scalar loops: mean over (future frame, joint) of the
/// squared (or plain) Euclidean distance.
pub fn loss_prediction_loops(xhat: &Tensor, x: &MotionSequence, squared: bool) -> f64 {
    let (t_past, t_total, joints) = (x.t_past(), x.t_total(), x.joints());
    let mut acc = 0.0;
    for t in t_past..t_total {
        for j in 0..joints {
            let sq = coord_sq_dist(xhat, x.coords(), t, j);
            acc += if squared { sq } else { sq.sqrt() };
        }
    }
    acc / ((x.t_future() * joints) as f64)
}

/// Masked-position loss by scalar loops: mean over positions with mask 0.
pub fn loss_mask_loops(
    xhat: &Tensor,
    x: &MotionSequence,
    mask: &MaskMatrix,
    past_only: bool,
    squared: bool,
) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for t in 0..x.t_total() {
        if past_only && t >= x.t_past() {
            continue;
        }
        for j in 0..x.joints() {
            if !mask.get(t, j) {
                let sq = coord_sq_dist(xhat, x.coords(), t, j);
                acc += if squared { sq } else { sq.sqrt() };
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        acc / count as f64
    }
}

/// Past-frame loss by scalar loops.
pub fn loss_denoise_loops(xhat: &Tensor, x: &MotionSequence, squared: bool) -> f64 {
    let mut acc = 0.0;
    for t in 0..x.t_past() {
        for j in 0..x.joints() {
            let sq = coord_sq_dist(xhat, x.coords(), t, j);
            acc += if squared { sq } else { sq.sqrt() };
        }
    }
    acc / ((x.t_past() * x.joints()) as f64)
}

/// Mean per-joint position error at one future frame (1-based horizon).
pub fn mpjpe_loops(pred: &Tensor, gt: &Tensor, horizon: usize) -> f64 {
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
    acc / joints as f64
}

/// Gap filling by per-component scalar search: for every missing frame, scan
/// outward for the nearest observed frames and interpolate, or extrapolate
/// with the slope of the nearest observed segment at the boundaries.
pub fn fill_missing_reference(x: &MotionSequence, observed: &MaskMatrix) -> MotionSequence {
    let (t_total, joints) = (x.t_total(), x.joints());
    let mut out = x.clone();
    for j in 0..joints {
        let obs: Vec<usize> = (0..t_total).filter(|&t| observed.get(t, j)).collect();
        for c in 0..3 {
            for t in 0..t_total {
                if observed.get(t, j) {
                    continue;
                }
                let value = match obs.len() {
                    0 => 0.0,
                    1 => x.coords().at3(obs[0], j, c),
                    _ => {
                        let prev = obs.iter().rev().find(|&&o| o < t).copied();
                        let next = obs.iter().find(|&&o| o > t).copied();
                        match (prev, next) {
                            (Some(p), Some(n)) => {
                                let a = x.coords().at3(p, j, c);
                                let b = x.coords().at3(n, j, c);
                                a + (b - a) * ((t - p) as f64) / ((n - p) as f64)
                            }
                            (None, Some(_)) => {
                                // before the first observation: first segment slope
                                let (o0, o1) = (obs[0], obs[1]);
                                let a = x.coords().at3(o0, j, c);
                                let b = x.coords().at3(o1, j, c);
                                let slope = (b - a) / ((o1 - o0) as f64);
                                a - slope * ((o0 - t) as f64)
                            }
                            (Some(_), None) => {
                                // after the last observation: last segment slope
                                let (o0, o1) = (obs[obs.len() - 2], obs[obs.len() - 1]);
                                let a = x.coords().at3(o0, j, c);
                                let b = x.coords().at3(o1, j, c);
                                let slope = (b - a) / ((o1 - o0) as f64);
                                b + slope * ((t - o1) as f64)
                            }
                            (None, None) => unreachable!("obs.len() >= 2"),
                        }
                    }
                };
                out.set_component(t, j, c, value);
            }
        }
    }
    out
}
