//! Training configuration and its flat `key = value` text form.

use std::fmt;
use std::str::FromStr;

use crate::kspace::MaskKind;
use crate::models::{AdversaryConfig, PoolChoice, PredictorConfig};
use crate::{Error, Result};

/// What the gradient penalty differentiates with respect to the image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PenaltyTarget {
    Probability,
    Logit,
}

impl fmt::Display for PenaltyTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyTarget::Probability => "probability",
            PenaltyTarget::Logit => "logit",
        })
    }
}

impl FromStr for PenaltyTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probability" => Ok(PenaltyTarget::Probability),
            "logit" => Ok(PenaltyTarget::Logit),
            _ => Err(Error::invalid("penalty target", s)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub pretrain_epochs: usize,
    pub adv_epochs: usize,
    pub lr_pretrain: f64,
    pub lr_adv: f64,
    /// Multiplies `lr_adv` for the adversary's own updates in phase 2.
    pub adv_lr_scale: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub l1_weight: f64,
    pub accel: usize,
    pub n_center: usize,
    pub flip_prob: f64,
    pub seed: u64,
    pub mask: MaskKind,
    pub estimate_sens: bool,
    pub penalty: PenaltyTarget,
    /// When false, the second phase runs without any adversarial term.
    pub adversarial: bool,
    pub predictor: PredictorConfig,
    pub adversary: AdversaryConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::desk()
    }
}

impl TrainConfig {
    /// Schedule and widths sized for a single CPU on 64x64 slices.
    pub fn desk() -> Self {
        TrainConfig {
            pretrain_epochs: 10,
            adv_epochs: 10,
            batch_size: 4,
            predictor: PredictorConfig::default(),
            adversary: AdversaryConfig::desk(),
            ..TrainConfig::paper()
        }
    }

    /// Full-scale schedule and architecture.
    pub fn paper() -> Self {
        TrainConfig {
            pretrain_epochs: 100,
            adv_epochs: 60,
            lr_pretrain: 3e-4,
            lr_adv: 1e-4,
            adv_lr_scale: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 8,
            gamma: 0.1,
            l1_weight: 0.01,
            accel: 4,
            n_center: 16,
            flip_prob: 0.5,
            seed: 0,
            mask: MaskKind::Equispaced,
            estimate_sens: false,
            penalty: PenaltyTarget::Probability,
            adversarial: true,
            predictor: PredictorConfig {
                cascades: 12,
                unet_channels: 12,
                unet_pools: 4,
                norm_groups: 4,
            },
            adversary: AdversaryConfig::default(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(TrainConfig::desk()),
            "paper" => Ok(TrainConfig::paper()),
            _ => Err(Error::invalid("preset", format!("unknown preset `{name}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lr_pretrain", self.lr_pretrain),
            ("lr_adv", self.lr_adv),
            ("adv_lr_scale", self.adv_lr_scale),
            ("adam_eps", self.adam_eps),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid("train config", format!("{name} must be positive")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid("train config", format!("{name} must be in [0, 1)")));
            }
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::invalid("train config", "flip_prob must be in [0, 1]"));
        }
        if !(self.gamma >= 0.0) || !(self.l1_weight >= 0.0) {
            return Err(Error::invalid("train config", "gamma and l1_weight must be nonnegative"));
        }
        if self.batch_size == 0 || self.accel == 0 {
            return Err(Error::invalid("train config", "batch_size and accel must be positive"));
        }
        if self.n_center % 2 != 0 {
            return Err(Error::invalid("train config", "n_center must be even"));
        }
        self.predictor.validate()?;
        self.adversary.validate()
    }

    pub fn total_epochs(&self) -> usize {
        self.pretrain_epochs + self.adv_epochs
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<V: FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .parse()
                .map_err(|_| Error::invalid("config value", format!("{key} = {value}")))
        }
        match key {
            "preset" => *self = TrainConfig::preset(value)?,
            "pretrain_epochs" => self.pretrain_epochs = p(key, value)?,
            "adv_epochs" => self.adv_epochs = p(key, value)?,
            "lr_pretrain" => self.lr_pretrain = p(key, value)?,
            "lr_adv" => self.lr_adv = p(key, value)?,
            "adv_lr_scale" => self.adv_lr_scale = p(key, value)?,
            "beta1" => self.beta1 = p(key, value)?,
            "beta2" => self.beta2 = p(key, value)?,
            "adam_eps" => self.adam_eps = p(key, value)?,
            "batch_size" => self.batch_size = p(key, value)?,
            "gamma" => self.gamma = p(key, value)?,
            "l1_weight" => self.l1_weight = p(key, value)?,
            "accel" => self.accel = p(key, value)?,
            "n_center" => self.n_center = p(key, value)?,
            "flip_prob" => self.flip_prob = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "mask" => self.mask = value.parse()?,
            "estimate_sens" => self.estimate_sens = p(key, value)?,
            "penalty" => self.penalty = value.parse()?,
            "adversarial" => self.adversarial = p(key, value)?,
            "cascades" => self.predictor.cascades = p(key, value)?,
            "unet_channels" => self.predictor.unet_channels = p(key, value)?,
            "unet_pools" => self.predictor.unet_pools = p(key, value)?,
            "norm_groups" => self.predictor.norm_groups = p(key, value)?,
            "adv_stem_channels" => self.adversary.stem_channels = p(key, value)?,
            "adv_block1_channels" => self.adversary.block1_channels = p(key, value)?,
            "adv_block2_channels" => self.adversary.block2_channels = p(key, value)?,
            "adv_groups" => self.adversary.groups = p(key, value)?,
            "adv_pool_window" => self.adversary.pool_window = p(key, value)?,
            "adv_pool" => self.adversary.pool = value.parse::<PoolChoice>()?,
            _ => return Err(Error::invalid("config key", format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Every key in a fixed order, one `key = value` line each.
    pub fn to_text(&self) -> String {
        let p = &self.predictor;
        let a = &self.adversary;
        let pairs: Vec<(&str, String)> = vec![
            ("pretrain_epochs", self.pretrain_epochs.to_string()),
            ("adv_epochs", self.adv_epochs.to_string()),
            ("lr_pretrain", self.lr_pretrain.to_string()),
            ("lr_adv", self.lr_adv.to_string()),
            ("adv_lr_scale", self.adv_lr_scale.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("gamma", self.gamma.to_string()),
            ("l1_weight", self.l1_weight.to_string()),
            ("accel", self.accel.to_string()),
            ("n_center", self.n_center.to_string()),
            ("flip_prob", self.flip_prob.to_string()),
            ("seed", self.seed.to_string()),
            ("mask", self.mask.to_string()),
            ("estimate_sens", self.estimate_sens.to_string()),
            ("penalty", self.penalty.to_string()),
            ("adversarial", self.adversarial.to_string()),
            ("cascades", p.cascades.to_string()),
            ("unet_channels", p.unet_channels.to_string()),
            ("unet_pools", p.unet_pools.to_string()),
            ("norm_groups", p.norm_groups.to_string()),
            ("adv_stem_channels", a.stem_channels.to_string()),
            ("adv_block1_channels", a.block1_channels.to_string()),
            ("adv_block2_channels", a.block2_channels.to_string()),
            ("adv_groups", a.groups.to_string()),
            ("adv_pool_window", a.pool_window.to_string()),
            ("adv_pool", a.pool.to_string()),
        ];
        pairs
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Applies a config file on top of `self`. A `preset` key, wherever it
    /// appears, is applied before the other keys.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let pairs = parse_pairs(text)?;
        if let Some((_, _, v)) = pairs.iter().find(|(_, k, _)| k == "preset") {
            *self = TrainConfig::preset(v)?;
        }
        for (line, k, v) in pairs.iter().filter(|(_, k, _)| k != "preset") {
            self.set(k, v).map_err(|e| Error::Config {
                line: *line,
                detail: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::desk();
        cfg.apply_text(text)?;
        Ok(cfg)
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// repeated keys are rejected.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            line: i + 1,
            detail: format!("expected `key = value`, got `{raw}`"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config {
                line: i + 1,
                detail: "empty key".into(),
            });
        }
        if out.iter().any(|(_, key, _)| key == k) {
            return Err(Error::Config {
                line: i + 1,
                detail: format!("duplicate key `{k}`"),
            });
        }
        out.push((i + 1, k.to_string(), v.to_string()));
    }
    Ok(out)
}
