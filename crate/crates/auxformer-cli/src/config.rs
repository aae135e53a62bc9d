//! Flat key=value experiment configuration.
//!
//! One text file drives every command: `#` starts a comment, keys are
//! validated against the known set, and CLI `--set KEY=VALUE` flags override
//! file values. Defaults are desk-scale.

use auxformer::model::{HyperConfig, MaskingVariant};
use auxformer::synth::SynthConfig;
use auxformer::tasks::{CorruptionSpec, LossConfig, LossMetric, LossWeights, TrainConfig};
use auxformer::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    // model
    pub feature_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub masking_variant: MaskingVariant,
    pub paper_literal_masked_update: bool,
    // corruption
    pub mask_prob: f64,
    pub noise_prob: f64,
    pub noise_sigma: f64,
    // loss
    pub alpha_mask: f64,
    pub alpha_denoise: f64,
    pub loss_metric: LossMetric,
    pub mask_past_only: bool,
    // training
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub input_scale: f64,
    // synthetic data
    pub t_past: usize,
    pub t_future: usize,
    pub frame_rate: f64,
    pub freq_min: f64,
    pub freq_max: f64,
    pub amp_min: f64,
    pub amp_max: f64,
    pub root_speed_min: f64,
    pub root_speed_max: f64,
    pub n_train: usize,
    pub n_test: usize,
    // evaluation
    pub horizons: Vec<usize>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            feature_dim: 16,
            layers: 1,
            heads: 4,
            masking_variant: MaskingVariant::PostSoftmaxLiteral,
            paper_literal_masked_update: false,
            mask_prob: 0.5,
            noise_prob: 0.3,
            noise_sigma: 50.0,
            alpha_mask: 1.0,
            alpha_denoise: 1.0,
            loss_metric: LossMetric::SquaredL2,
            mask_past_only: false,
            epochs: 12,
            batch_size: 16,
            learning_rate: 3e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            input_scale: 0.01,
            t_past: 10,
            t_future: 10,
            frame_rate: 25.0,
            freq_min: 0.4,
            freq_max: 1.6,
            amp_min: 0.2,
            amp_max: 0.7,
            root_speed_min: 200.0,
            root_speed_max: 800.0,
            n_train: 1000,
            n_test: 200,
            horizons: vec![2, 4, 8, 10],
            seed: 0,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true/false, got {v:?}"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

impl ExperimentConfig {
    /// Load from a file (when given), then apply `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::Config(format!("{}:{}: expected key=value", path.display(), lineno + 1))
                })?;
                cfg.set(key.trim(), value.trim())?;
            }
        }
        for item in overrides {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                Error::Config(format!("--set {item:?}: expected KEY=VALUE"))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "feature_dim" => self.feature_dim = parse_num(key, value)?,
            "layers" => self.layers = parse_num(key, value)?,
            "heads" => self.heads = parse_num(key, value)?,
            "masking_variant" => {
                self.masking_variant = match value {
                    "post_softmax_literal" => MaskingVariant::PostSoftmaxLiteral,
                    "pre_softmax_additive" => MaskingVariant::PreSoftmaxAdditive,
                    _ => {
                        return Err(Error::Config(format!(
                            "masking_variant: unknown value {value:?}"
                        )))
                    }
                }
            }
            "paper_literal_masked_update" => {
                self.paper_literal_masked_update = parse_bool(key, value)?
            }
            "mask_prob" => self.mask_prob = parse_num(key, value)?,
            "noise_prob" => self.noise_prob = parse_num(key, value)?,
            "noise_sigma" => self.noise_sigma = parse_num(key, value)?,
            "alpha_mask" => self.alpha_mask = parse_num(key, value)?,
            "alpha_denoise" => self.alpha_denoise = parse_num(key, value)?,
            "loss_metric" => {
                self.loss_metric = match value {
                    "squared" => LossMetric::SquaredL2,
                    "euclidean" => LossMetric::L2,
                    _ => {
                        return Err(Error::Config(format!(
                            "loss_metric: expected squared or euclidean, got {value:?}"
                        )))
                    }
                }
            }
            "mask_past_only" => self.mask_past_only = parse_bool(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "adam_beta1" => self.adam_beta1 = parse_num(key, value)?,
            "adam_beta2" => self.adam_beta2 = parse_num(key, value)?,
            "adam_eps" => self.adam_eps = parse_num(key, value)?,
            "input_scale" => self.input_scale = parse_num(key, value)?,
            "t_past" => self.t_past = parse_num(key, value)?,
            "t_future" => self.t_future = parse_num(key, value)?,
            "frame_rate" => self.frame_rate = parse_num(key, value)?,
            "freq_min" => self.freq_min = parse_num(key, value)?,
            "freq_max" => self.freq_max = parse_num(key, value)?,
            "amp_min" => self.amp_min = parse_num(key, value)?,
            "amp_max" => self.amp_max = parse_num(key, value)?,
            "root_speed_min" => self.root_speed_min = parse_num(key, value)?,
            "root_speed_max" => self.root_speed_max = parse_num(key, value)?,
            "n_train" => self.n_train = parse_num(key, value)?,
            "n_test" => self.n_test = parse_num(key, value)?,
            "horizons" => {
                self.horizons = value
                    .split(',')
                    .map(|s| parse_num("horizons", s.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "seed" => self.seed = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper().validate()?;
        self.corruption().validate()?;
        self.loss().weights.validate()?;
        self.optim().validate()?;
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        self.synth(1).validate()?;
        if self.n_train < 1 || self.n_test < 1 {
            return Err(Error::Config("n_train and n_test must be >= 1".into()));
        }
        if self.horizons.is_empty() {
            return Err(Error::Config("horizons must not be empty".into()));
        }
        for &h in &self.horizons {
            if h < 1 || h > self.t_future {
                return Err(Error::Config(format!(
                    "horizon {h} outside 1..={}",
                    self.t_future
                )));
            }
        }
        Ok(())
    }

    pub fn hyper(&self) -> HyperConfig {
        HyperConfig {
            feature_dim: self.feature_dim,
            layers: self.layers,
            heads: self.heads,
            masking_variant: self.masking_variant,
            paper_literal_masked_update: self.paper_literal_masked_update,
        }
    }

    pub fn corruption(&self) -> CorruptionSpec {
        CorruptionSpec {
            p_mask: self.mask_prob,
            p_noise: self.noise_prob,
            sigma: self.noise_sigma,
            seed: self.seed,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            weights: LossWeights {
                alpha_mask: self.alpha_mask,
                alpha_denoise: self.alpha_denoise,
            },
            metric: self.loss_metric,
            mask_past_only: self.mask_past_only,
        }
    }

    pub fn optim(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_eps,
            input_scale: self.input_scale,
        }
    }

    pub fn synth(&self, samples: usize) -> SynthConfig {
        SynthConfig {
            t_past: self.t_past,
            t_future: self.t_future,
            frame_rate: self.frame_rate,
            freq_band: (self.freq_min, self.freq_max),
            amp_band: (self.amp_min, self.amp_max),
            root_speed_band: (self.root_speed_min, self.root_speed_max),
            seed: self.seed,
            samples,
        }
    }

    /// Serialize back to the flat format (the effective-config echo).
    pub fn to_flat_string(&self) -> String {
        let mut out = String::new();
        let variant = match self.masking_variant {
            MaskingVariant::PostSoftmaxLiteral => "post_softmax_literal",
            MaskingVariant::PreSoftmaxAdditive => "pre_softmax_additive",
        };
        let metric = match self.loss_metric {
            LossMetric::SquaredL2 => "squared",
            LossMetric::L2 => "euclidean",
        };
        let horizons = self
            .horizons
            .iter()
            .map(|h| h.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let _ = write!(
            out,
            "feature_dim={}\nlayers={}\nheads={}\nmasking_variant={}\n\
             paper_literal_masked_update={}\nmask_prob={}\nnoise_prob={}\nnoise_sigma={}\n\
             alpha_mask={}\nalpha_denoise={}\nloss_metric={}\nmask_past_only={}\n\
             epochs={}\nbatch_size={}\nlearning_rate={}\nadam_beta1={}\nadam_beta2={}\n\
             adam_eps={}\ninput_scale={}\nt_past={}\nt_future={}\nframe_rate={}\n\
             freq_min={}\nfreq_max={}\namp_min={}\namp_max={}\nroot_speed_min={}\n\
             root_speed_max={}\nn_train={}\nn_test={}\nhorizons={}\nseed={}\n",
            self.feature_dim,
            self.layers,
            self.heads,
            variant,
            self.paper_literal_masked_update,
            self.mask_prob,
            self.noise_prob,
            self.noise_sigma,
            self.alpha_mask,
            self.alpha_denoise,
            metric,
            self.mask_past_only,
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.adam_beta1,
            self.adam_beta2,
            self.adam_eps,
            self.input_scale,
            self.t_past,
            self.t_future,
            self.frame_rate,
            self.freq_min,
            self.freq_max,
            self.amp_min,
            self.amp_max,
            self.root_speed_min,
            self.root_speed_max,
            self.n_train,
            self.n_test,
            horizons,
            self.seed,
        );
        out
    }
}
