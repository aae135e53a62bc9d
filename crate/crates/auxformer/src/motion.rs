//! Motion sequences and observability masks.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A skeleton motion clip: T×J×3 joint coordinates in millimeters with a
/// past/future split. The first `t_past` frames are the observation window;
/// the remaining `t_future` frames are the prediction target (or zero padding
/// when the clip was built from past-only data).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    coords: Tensor,
    t_past: usize,
    t_future: usize,
}

impl MotionSequence {
    pub fn new(coords: Tensor, t_past: usize) -> Result<Self> {
        if coords.rank() != 3 || coords.shape()[2] != 3 {
            return Err(Error::InvalidShape {
                op: "MotionSequence::new",
                shape: coords.shape().to_vec(),
                reason: "T×J×3 tensor required".into(),
            });
        }
        let t_total = coords.shape()[0];
        let joints = coords.shape()[1];
        if t_past < 1 || t_past >= t_total || joints < 1 {
            return Err(Error::InvalidArgument(format!(
                "invalid split: t_past={t_past} of {t_total} frames, {joints} joints"
            )));
        }
        Ok(MotionSequence {
            coords,
            t_past,
            t_future: t_total - t_past,
        })
    }

    /// Build from past-only data, zero-filling the future frames.
    pub fn from_past(past: &Tensor, t_future: usize) -> Result<Self> {
        if past.rank() != 3 || past.shape()[2] != 3 {
            return Err(Error::InvalidShape {
                op: "MotionSequence::from_past",
                shape: past.shape().to_vec(),
                reason: "T_p×J×3 tensor required".into(),
            });
        }
        if t_future < 1 {
            return Err(Error::InvalidArgument("t_future must be >= 1".into()));
        }
        let (t_past, joints) = (past.shape()[0], past.shape()[1]);
        let mut data = past.data().to_vec();
        data.resize((t_past + t_future) * joints * 3, 0.0);
        let coords = Tensor::new(vec![t_past + t_future, joints, 3], data)?;
        MotionSequence::new(coords, t_past)
    }

    pub fn t_total(&self) -> usize {
        self.t_past + self.t_future
    }

    pub fn t_past(&self) -> usize {
        self.t_past
    }

    pub fn t_future(&self) -> usize {
        self.t_future
    }

    pub fn joints(&self) -> usize {
        self.coords.shape()[1]
    }

    pub fn coords(&self) -> &Tensor {
        &self.coords
    }

    pub fn coord(&self, t: usize, j: usize) -> [f64; 3] {
        [
            self.coords.at3(t, j, 0),
            self.coords.at3(t, j, 1),
            self.coords.at3(t, j, 2),
        ]
    }

    pub fn set_coord(&mut self, t: usize, j: usize, value: [f64; 3]) {
        let joints = self.joints();
        let base = (t * joints + j) * 3;
        self.coords.data_mut()[base..base + 3].copy_from_slice(&value);
    }

    pub fn set_component(&mut self, t: usize, j: usize, c: usize, value: f64) {
        let joints = self.joints();
        self.coords.data_mut()[(t * joints + j) * 3 + c] = value;
    }

    /// The future frames, shape T_f×J×3.
    pub fn future(&self) -> Tensor {
        let joints = self.joints();
        let start = self.t_past * joints * 3;
        Tensor::new(
            vec![self.t_future, joints, 3],
            self.coords.data()[start..].to_vec(),
        )
        .expect("future slice shape")
    }

    /// The past frames, shape T_p×J×3.
    pub fn past(&self) -> Tensor {
        let joints = self.joints();
        let end = self.t_past * joints * 3;
        Tensor::new(
            vec![self.t_past, joints, 3],
            self.coords.data()[..end].to_vec(),
        )
        .expect("past slice shape")
    }

    /// Copy with the future frames zeroed (the padded model input).
    pub fn zero_padded(&self) -> MotionSequence {
        let mut out = self.clone();
        let joints = self.joints();
        let start = self.t_past * joints * 3;
        out.coords.data_mut()[start..].fill(0.0);
        out
    }

    /// Copy with every coordinate multiplied by `s`.
    pub fn scaled(&self, s: f64) -> MotionSequence {
        MotionSequence {
            coords: self.coords.scale(s),
            t_past: self.t_past,
            t_future: self.t_future,
        }
    }
}

/// Binary T×J observability matrix: 1 = coordinate visible to attention,
/// 0 = masked/unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMatrix {
    t_total: usize,
    joints: usize,
    bits: Vec<bool>,
}

impl MaskMatrix {
    pub fn new(t_total: usize, joints: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != t_total * joints {
            return Err(Error::InvalidShape {
                op: "MaskMatrix::new",
                shape: vec![t_total, joints],
                reason: format!("{} bits provided", bits.len()),
            });
        }
        Ok(MaskMatrix {
            t_total,
            joints,
            bits,
        })
    }

    /// Validate a T×J tensor of {0,1} entries.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.rank() != 2 {
            return Err(Error::InvalidShape {
                op: "MaskMatrix::from_tensor",
                shape: t.shape().to_vec(),
                reason: "rank-2 tensor required".into(),
            });
        }
        let mut bits = Vec::with_capacity(t.numel());
        for (i, &v) in t.data().iter().enumerate() {
            if v == 1.0 {
                bits.push(true);
            } else if v == 0.0 {
                bits.push(false);
            } else {
                return Err(Error::InvalidMask {
                    op: "MaskMatrix::from_tensor",
                    index: i,
                    value: v,
                });
            }
        }
        MaskMatrix::new(t.shape()[0], t.shape()[1], bits)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.t_total, self.joints],
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask tensor shape")
    }

    /// The prediction/denoising mask: 1 exactly on past frames.
    pub fn past_only(t_past: usize, t_total: usize, joints: usize) -> Self {
        let bits = (0..t_total * joints)
            .map(|i| i / joints < t_past)
            .collect();
        MaskMatrix {
            t_total,
            joints,
            bits,
        }
    }

    pub fn all_ones(t_total: usize, joints: usize) -> Self {
        MaskMatrix {
            t_total,
            joints,
            bits: vec![true; t_total * joints],
        }
    }

    pub fn t_total(&self) -> usize {
        self.t_total
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn get(&self, t: usize, j: usize) -> bool {
        self.bits[t * self.joints + j]
    }

    pub fn set(&mut self, t: usize, j: usize, value: bool) {
        self.bits[t * self.joints + j] = value;
    }

    /// Observability bits of one timestamp (over joints).
    pub fn row(&self, t: usize) -> &[bool] {
        &self.bits[t * self.joints..(t + 1) * self.joints]
    }

    /// Observability bits of one joint (over timestamps).
    pub fn col(&self, j: usize) -> Vec<bool> {
        (0..self.t_total).map(|t| self.get(t, j)).collect()
    }

    /// Flat row-major bits (t-major, joint-minor).
    pub fn flat(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_zeros(&self) -> usize {
        self.bits.iter().filter(|&&b| !b).count()
    }
}
