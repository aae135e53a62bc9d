//! Mask-aware spatial and temporal attention passes.
//!
//! Feature matrices live on the tape as (T·J)×F with t-major rows. Spatial
//! attention groups rows by timestamp, temporal attention permutes to j-major
//! and groups by joint. Every group attends within itself, restricted by the
//! outer product of its observability bits.

use super::params::AttnUnit;
use super::{HyperConfig, MaskingVariant};
use crate::error::{Error, Result};
use crate::motion::MaskMatrix;
use crate::numerics::{AttnGroup, Tape, Tensor, Var};

/// Softmax matrices captured during a forward pass, for invariant checks.
#[derive(Debug)]
pub struct SoftmaxRecord {
    pub context: String,
    pub weights: Tensor,
}

/// Optional collector for every softmax matrix an attention pass produces.
pub type Instrumentation<'a> = Option<&'a mut Vec<SoftmaxRecord>>;

/// Shared core: project, mix per group, feed forward, residual, and per-row
/// passthrough for masked rows unless the literal update is requested.
fn attention_over_groups(
    tape: &mut Tape,
    unit: &AttnUnit<Var>,
    features: Var,
    groups: Vec<AttnGroup>,
    flat_obs: &[bool],
    cfg: &HyperConfig,
    context: &str,
    instr: &mut Instrumentation,
) -> Result<Var> {
    let q = tape.affine(features, unit.query.weight, unit.query.bias)?;
    let k = tape.affine(features, unit.key.weight, unit.key.bias)?;
    let v = tape.affine(features, unit.value.weight, unit.value.bias)?;
    let pre = matches!(cfg.masking_variant, MaskingVariant::PreSoftmaxAdditive);
    let mixed = tape.attention_mix(q, k, v, groups, cfg.heads, pre)?;
    if let Some(records) = instr.as_deref_mut() {
        for (g, h, weights) in tape
            .attention_softmax_matrices(mixed)
            .expect("attention node")
        {
            records.push(SoftmaxRecord {
                context: format!("{context}[group={g},head={h}]"),
                weights,
            });
        }
    }
    let hidden = tape.affine(mixed, unit.ffn1.weight, unit.ffn1.bias)?;
    let hidden = tape.relu(hidden);
    let ffn = tape.affine(hidden, unit.ffn2.weight, unit.ffn2.bias)?;
    let updated = tape.add(features, ffn)?;
    if cfg.paper_literal_masked_update {
        Ok(updated)
    } else {
        tape.blend_rows(updated, features, flat_obs)
    }
}

/// Validate an attend matrix: binary entries forming the outer product of its
/// own diagonal. Returns the observability bits.
fn attend_bits(attend: &Tensor) -> Result<Vec<bool>> {
    if attend.rank() != 2 || attend.shape()[0] != attend.shape()[1] {
        return Err(Error::InvalidShape {
            op: "masked_attention",
            shape: attend.shape().to_vec(),
            reason: "square attend matrix required".into(),
        });
    }
    let n = attend.shape()[0];
    for (i, &v) in attend.data().iter().enumerate() {
        if v != 0.0 && v != 1.0 {
            return Err(Error::InvalidMask {
                op: "masked_attention",
                index: i,
                value: v,
            });
        }
    }
    let bits: Vec<bool> = (0..n).map(|i| attend.at2(i, i) == 1.0).collect();
    for a in 0..n {
        for b in 0..n {
            let expect = bits[a] && bits[b];
            if (attend.at2(a, b) == 1.0) != expect {
                return Err(Error::InvalidArgument(format!(
                    "masked_attention: attend is not an observability outer product at ({a},{b})"
                )));
            }
        }
    }
    Ok(bits)
}

/// Mask-aware multi-head attention over one feature matrix.
pub fn masked_attention(
    tape: &mut Tape,
    unit: &AttnUnit<Var>,
    features: Var,
    attend: &Tensor,
    cfg: &HyperConfig,
) -> Result<Var> {
    let bits = attend_bits(attend)?;
    let fv = tape.value(features);
    if fv.rank() != 2 || fv.rows() != bits.len() {
        return Err(Error::ShapeMismatch {
            op: "masked_attention",
            lhs: fv.shape().to_vec(),
            rhs: attend.shape().to_vec(),
        });
    }
    let groups = vec![AttnGroup {
        start: 0,
        obs: bits.clone(),
    }];
    attention_over_groups(
        tape,
        unit,
        features,
        groups,
        &bits,
        cfg,
        "masked_attention",
        &mut None,
    )
}

/// Spatial attention: for each timestamp independently, attend over the J
/// joints with A_s(j1,j2) = M(t,j1)·M(t,j2).
pub(super) fn spatial_attention_pass(
    tape: &mut Tape,
    unit: &AttnUnit<Var>,
    features: Var,
    mask: &MaskMatrix,
    cfg: &HyperConfig,
    context: &str,
    instr: &mut Instrumentation,
) -> Result<Var> {
    let (t_total, joints) = (mask.t_total(), mask.joints());
    let groups = (0..t_total)
        .map(|t| AttnGroup {
            start: t * joints,
            obs: mask.row(t).to_vec(),
        })
        .collect();
    attention_over_groups(tape, unit, features, groups, mask.flat(), cfg, context, instr)
}

/// Temporal attention: for each joint independently, attend over the T
/// timestamps with A_t(t1,t2) = M(t1,j)·M(t2,j).
pub(super) fn temporal_attention_pass(
    tape: &mut Tape,
    unit: &AttnUnit<Var>,
    features: Var,
    mask: &MaskMatrix,
    cfg: &HyperConfig,
    context: &str,
    instr: &mut Instrumentation,
) -> Result<Var> {
    let (t_total, joints) = (mask.t_total(), mask.joints());
    // to j-major, attend per joint, back to t-major
    let to_j_major: Vec<usize> = (0..t_total * joints)
        .map(|i| {
            let (j, t) = (i / t_total, i % t_total);
            t * joints + j
        })
        .collect();
    let to_t_major: Vec<usize> = (0..t_total * joints)
        .map(|i| {
            let (t, j) = (i / joints, i % joints);
            j * t_total + t
        })
        .collect();

    let h_jm = tape.gather_rows(features, &to_j_major)?;
    let mut flat_obs = Vec::with_capacity(t_total * joints);
    let groups = (0..joints)
        .map(|j| {
            let obs = mask.col(j);
            flat_obs.extend_from_slice(&obs);
            AttnGroup {
                start: j * t_total,
                obs,
            }
        })
        .collect();
    let out_jm =
        attention_over_groups(tape, unit, h_jm, groups, &flat_obs, cfg, context, instr)?;
    tape.gather_rows(out_jm, &to_t_major)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::{random_features, random_unit, register_unit, tiny_hyper};
    use crate::oracle;

    fn outer_mask(bits: &[bool]) -> Tensor {
        let n = bits.len();
        Tensor::new(
            vec![n, n],
            (0..n * n)
                .map(|i| {
                    let (a, b) = (i / n, i % n);
                    if bits[a] && bits[b] {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_element_attention_is_residual_ffn_of_value() {
        // n=1: softmax of one score is 1, so the mixed output equals V and
        // the result is h + FFN(V).
        let cfg = tiny_hyper();
        let unit = random_unit(cfg.feature_dim, 11);
        let x = random_features(1, cfg.feature_dim, 12);

        let mut tape = Tape::new();
        let uv = register_unit(&mut tape, &unit);
        let xv = tape.constant(x.clone());
        let out = masked_attention(&mut tape, &uv, xv, &outer_mask(&[true]), &cfg).unwrap();

        // independent evaluation with plain tensor ops
        let v = x
            .matmul(&unit.value.weight)
            .unwrap()
            .add(&unit.value.bias.reshaped(&[1, cfg.feature_dim]).unwrap())
            .unwrap();
        let h1 = v
            .matmul(&unit.ffn1.weight)
            .unwrap()
            .add(&unit.ffn1.bias.reshaped(&[1, 2 * cfg.feature_dim]).unwrap())
            .unwrap()
            .map(|t| t.max(0.0));
        let ffn = h1
            .matmul(&unit.ffn2.weight)
            .unwrap()
            .add(&unit.ffn2.bias.reshaped(&[1, cfg.feature_dim]).unwrap())
            .unwrap();
        let expect = x.add(&ffn).unwrap();
        assert!(tape.value(out).max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn all_ones_attend_matches_plain_attention_oracle() {
        for variant in [
            MaskingVariant::PostSoftmaxLiteral,
            MaskingVariant::PreSoftmaxAdditive,
        ] {
            let mut cfg = tiny_hyper();
            cfg.masking_variant = variant;
            let unit = random_unit(cfg.feature_dim, 21);
            let x = random_features(5, cfg.feature_dim, 22);

            let mut tape = Tape::new();
            let uv = register_unit(&mut tape, &unit);
            let xv = tape.constant(x.clone());
            let attend = outer_mask(&[true; 5]);
            let out = masked_attention(&mut tape, &uv, xv, &attend, &cfg).unwrap();

            let plain = oracle::plain_multihead_attention(
                &x,
                &oracle::PlainAttentionWeights {
                    q_w: &unit.query.weight,
                    q_b: &unit.query.bias,
                    k_w: &unit.key.weight,
                    k_b: &unit.key.bias,
                    v_w: &unit.value.weight,
                    v_b: &unit.value.bias,
                    ffn1_w: &unit.ffn1.weight,
                    ffn1_b: &unit.ffn1.bias,
                    ffn2_w: &unit.ffn2.weight,
                    ffn2_b: &unit.ffn2.bias,
                },
                cfg.heads,
            );
            assert!(
                tape.value(out).max_abs_diff(&plain) < 1e-12,
                "variant {variant:?}"
            );
        }
    }

    #[test]
    fn masked_rows_pass_through_and_observed_rows_match_subsequence() {
        // observability (1,0,1): under pre-softmax masking, the observed rows
        // must match a 2-element unmasked attention over those rows alone;
        // the masked row must equal its input under the default update rule.
        let mut cfg = tiny_hyper();
        cfg.masking_variant = MaskingVariant::PreSoftmaxAdditive;
        let unit = random_unit(cfg.feature_dim, 31);
        let x = random_features(3, cfg.feature_dim, 32);

        let mut tape = Tape::new();
        let uv = register_unit(&mut tape, &unit);
        let xv = tape.constant(x.clone());
        let out = masked_attention(
            &mut tape,
            &uv,
            xv,
            &outer_mask(&[true, false, true]),
            &cfg,
        )
        .unwrap();
        let got = tape.value(out);

        // oracle: unmasked attention over the observed sub-sequence
        let f = cfg.feature_dim;
        let sub = Tensor::new(
            vec![2, f],
            x.data()[..f]
                .iter()
                .chain(&x.data()[2 * f..])
                .copied()
                .collect(),
        )
        .unwrap();
        let plain = oracle::plain_multihead_attention(
            &sub,
            &oracle::PlainAttentionWeights {
                q_w: &unit.query.weight,
                q_b: &unit.query.bias,
                k_w: &unit.key.weight,
                k_b: &unit.key.bias,
                v_w: &unit.value.weight,
                v_b: &unit.value.bias,
                ffn1_w: &unit.ffn1.weight,
                ffn1_b: &unit.ffn1.bias,
                ffn2_w: &unit.ffn2.weight,
                ffn2_b: &unit.ffn2.bias,
            },
            cfg.heads,
        );
        for c in 0..f {
            assert!((got.at2(0, c) - plain.at2(0, c)).abs() < 1e-12);
            assert!((got.at2(2, c) - plain.at2(1, c)).abs() < 1e-12);
            // masked row passes through bitwise
            assert_eq!(got.at2(1, c), x.at2(1, c));
        }
    }

    #[test]
    fn non_binary_attend_is_rejected() {
        let cfg = tiny_hyper();
        let unit = random_unit(cfg.feature_dim, 41);
        let x = random_features(2, cfg.feature_dim, 42);
        let mut tape = Tape::new();
        let uv = register_unit(&mut tape, &unit);
        let xv = tape.constant(x);
        let attend = Tensor::new(vec![2, 2], vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        assert!(masked_attention(&mut tape, &uv, xv, &attend, &cfg).is_err());
    }
}
