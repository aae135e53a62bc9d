//! Learnable parameters and their canonical naming.
//!
//! `Params<S>` is generic over storage so the same structure describes both
//! the owned tensors (`ModelParams`) and their tape handles (`ModelVars`).
//! Visiting order is fixed and shared by the checkpoint format, the optimizer
//! state and gradient extraction.

use crate::error::{Error, Result};
use crate::model::HyperConfig;
use crate::numerics::{Tape, Tensor, Var};
use crate::rng::derive_rng;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone)]
pub struct Affine<S> {
    pub weight: S,
    pub bias: S,
}

/// One mask-aware attention unit: Q/K/V projections plus the two-layer FFN.
#[derive(Debug, Clone)]
pub struct AttnUnit<S> {
    pub query: Affine<S>,
    pub key: Affine<S>,
    pub value: Affine<S>,
    pub ffn1: Affine<S>,
    pub ffn2: Affine<S>,
}

/// A spatial unit followed by a temporal unit, sharing one mask.
#[derive(Debug, Clone)]
pub struct AttnBlock<S> {
    pub spatial: AttnUnit<S>,
    pub temporal: AttnUnit<S>,
}

/// One depth level: observed-only attention then full attention,
/// with distinct weights.
#[derive(Debug, Clone)]
pub struct Layer<S> {
    pub osta: AttnBlock<S>,
    pub fsta: AttnBlock<S>,
}

#[derive(Debug, Clone)]
pub struct Params<S> {
    pub encoder: Affine<S>,
    pub joint_dict: S,
    pub time_dict: S,
    pub masked_token: S,
    pub layers: Vec<Layer<S>>,
    pub head_pred: Affine<S>,
    pub head_mask: Affine<S>,
    pub head_denoise: Affine<S>,
}

pub type ModelParams = Params<Tensor>;
pub type ModelVars = Params<Var>;

impl<S> Affine<S> {
    pub(crate) fn map<T>(&self, f: &mut impl FnMut(&S) -> T) -> Affine<T> {
        Affine {
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a S)) {
        f(format!("{prefix}.w"), &self.weight);
        f(format!("{prefix}.b"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut S)) {
        f(format!("{prefix}.w"), &mut self.weight);
        f(format!("{prefix}.b"), &mut self.bias);
    }
}

impl<S> AttnUnit<S> {
    pub(crate) fn map<T>(&self, f: &mut impl FnMut(&S) -> T) -> AttnUnit<T> {
        AttnUnit {
            query: self.query.map(f),
            key: self.key.map(f),
            value: self.value.map(f),
            ffn1: self.ffn1.map(f),
            ffn2: self.ffn2.map(f),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a S)) {
        self.query.visit(&format!("{prefix}.q"), f);
        self.key.visit(&format!("{prefix}.k"), f);
        self.value.visit(&format!("{prefix}.v"), f);
        self.ffn1.visit(&format!("{prefix}.ffn1"), f);
        self.ffn2.visit(&format!("{prefix}.ffn2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut S)) {
        self.query.visit_mut(&format!("{prefix}.q"), f);
        self.key.visit_mut(&format!("{prefix}.k"), f);
        self.value.visit_mut(&format!("{prefix}.v"), f);
        self.ffn1.visit_mut(&format!("{prefix}.ffn1"), f);
        self.ffn2.visit_mut(&format!("{prefix}.ffn2"), f);
    }
}

impl<S> AttnBlock<S> {
    fn map<T>(&self, f: &mut impl FnMut(&S) -> T) -> AttnBlock<T> {
        AttnBlock {
            spatial: self.spatial.map(f),
            temporal: self.temporal.map(f),
        }
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a S)) {
        self.spatial.visit(&format!("{prefix}.spatial"), f);
        self.temporal.visit(&format!("{prefix}.temporal"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut S)) {
        self.spatial.visit_mut(&format!("{prefix}.spatial"), f);
        self.temporal.visit_mut(&format!("{prefix}.temporal"), f);
    }
}

impl<S> Params<S> {
    pub fn map<T>(&self, mut f: impl FnMut(&S) -> T) -> Params<T> {
        let f = &mut f;
        Params {
            encoder: self.encoder.map(f),
            joint_dict: f(&self.joint_dict),
            time_dict: f(&self.time_dict),
            masked_token: f(&self.masked_token),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    osta: l.osta.map(f),
                    fsta: l.fsta.map(f),
                })
                .collect(),
            head_pred: self.head_pred.map(f),
            head_mask: self.head_mask.map(f),
            head_denoise: self.head_denoise.map(f),
        }
    }

    /// Visit every parameter with its canonical name, in canonical order.
    pub fn visit<'a>(&'a self, mut f: impl FnMut(String, &'a S)) {
        let f = &mut f;
        self.encoder.visit("encoder", f);
        f("dict.joint".into(), &self.joint_dict);
        f("dict.time".into(), &self.time_dict);
        f("token.masked".into(), &self.masked_token);
        for (i, layer) in self.layers.iter().enumerate() {
            let l = i + 1;
            layer.osta.visit(&format!("layer{l}.osta"), f);
            layer.fsta.visit(&format!("layer{l}.fsta"), f);
        }
        self.head_pred.visit("head.pred", f);
        self.head_mask.visit("head.mask", f);
        self.head_denoise.visit("head.denoise", f);
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(String, &mut S)) {
        let f = &mut f;
        self.encoder.visit_mut("encoder", f);
        f("dict.joint".into(), &mut self.joint_dict);
        f("dict.time".into(), &mut self.time_dict);
        f("token.masked".into(), &mut self.masked_token);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let l = i + 1;
            layer.osta.visit_mut(&format!("layer{l}.osta"), f);
            layer.fsta.visit_mut(&format!("layer{l}.fsta"), f);
        }
        self.head_pred.visit_mut("head.pred", f);
        self.head_mask.visit_mut("head.mask", f);
        self.head_denoise.visit_mut("head.denoise", f);
    }

    /// Flat parameter list in canonical order.
    pub fn flat(&self) -> Vec<&S> {
        let mut out = Vec::new();
        self.visit(|_, s| out.push(s));
        out
    }
}

impl ModelParams {
    /// Fresh parameters for a model bound to `t_total` frames and `joints`
    /// joints. Affine maps use uniform(-1/sqrt(fan_in), 1/sqrt(fan_in));
    /// dictionaries and the masked token use Normal(0, 0.02).
    pub fn init(t_total: usize, joints: usize, cfg: &HyperConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let feat = cfg.feature_dim;
        let mut rng = derive_rng(seed, "model/init", &[]);
        let normal = Normal::new(0.0, 0.02).expect("valid std");

        let mut affine = |fan_in: usize, fan_out: usize| -> Affine<Tensor> {
            let limit = 1.0 / (fan_in as f64).sqrt();
            let mut draw = |n: usize| -> Vec<f64> {
                (0..n).map(|_| rng.random_range(-limit..limit)).collect()
            };
            Affine {
                weight: Tensor::new(vec![fan_in, fan_out], draw(fan_in * fan_out))
                    .expect("affine weight shape"),
                bias: Tensor::new(vec![fan_out], draw(fan_out)).expect("affine bias shape"),
            }
        };

        let encoder = affine(3, feat);
        let mut unit = || AttnUnit {
            query: affine(feat, feat),
            key: affine(feat, feat),
            value: affine(feat, feat),
            ffn1: affine(feat, 2 * feat),
            ffn2: affine(2 * feat, feat),
        };
        let layers = (0..cfg.layers)
            .map(|_| Layer {
                osta: AttnBlock {
                    spatial: unit(),
                    temporal: unit(),
                },
                fsta: AttnBlock {
                    spatial: unit(),
                    temporal: unit(),
                },
            })
            .collect();
        let head_pred = affine(feat, 3);
        let head_mask = affine(feat, 3);
        let head_denoise = affine(feat, 3);

        let mut dict = |n: usize| -> Tensor {
            Tensor::new(
                vec![n, feat],
                (0..n * feat).map(|_| normal.sample(&mut rng)).collect(),
            )
            .expect("dict shape")
        };
        let joint_dict = dict(joints);
        let time_dict = dict(t_total);
        let masked_token = Tensor::new(
            vec![feat],
            (0..feat).map(|_| normal.sample(&mut rng)).collect(),
        )
        .expect("token shape");

        Ok(Params {
            encoder,
            joint_dict,
            time_dict,
            masked_token,
            layers,
            head_pred,
            head_mask,
            head_denoise,
        })
    }

    /// Register every parameter on a tape, preserving structure.
    pub fn register(&self, tape: &mut Tape) -> ModelVars {
        self.map(|t| tape.param(t.clone()))
    }

    /// Frames the time dictionary is bound to.
    pub fn t_total(&self) -> usize {
        self.time_dict.shape()[0]
    }

    pub fn joints(&self) -> usize {
        self.joint_dict.shape()[0]
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.weight.shape()[1]
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.flat().iter().map(|t| t.numel()).sum()
    }

    /// Check structural consistency against a hyperparameter config.
    pub fn check_compatible(&self, cfg: &HyperConfig) -> Result<()> {
        cfg.validate()?;
        if self.feature_dim() != cfg.feature_dim || self.layer_count() != cfg.layers {
            return Err(Error::InvalidArgument(format!(
                "params built for F={}, L={} but config says F={}, L={}",
                self.feature_dim(),
                self.layer_count(),
                cfg.feature_dim,
                cfg.layers
            )));
        }
        Ok(())
    }
}
