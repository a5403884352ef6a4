//! `key = value` run configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Keys:
//!
//! - model: `variant`, `encoder`, `decoder`, `embed_dim`, `encoder_hidden`,
//!   `decoder_hidden`, `gat_heads`, `slstm_heads`, `forget_activation`,
//!   `leaky_slope`, `t_obs`, `t_f`, `neighbors`, `position_scale`,
//!   `lateral_scale`, `step_scale`, `speed_scale`, `accel_scale`,
//!   `yaw_rate_scale`, `seed`
//! - training: `batch_size`, `epochs`, `learning_rate`, `clip_norm`,
//!   `aux_weight`, `checkpoint`, `train_seed`, `threads`
//! - data: `dt`, `stride`, `alongside_margin`, `balance_seed`,
//!   `split.train`, `split.val`, `split.test`, `split.seed`,
//!   `synth.count`, `synth.noise`, `synth.neighbor_density`
//! - CSV columns: `format.frame`, `format.id`, `format.x`, `format.y`,
//!   `format.x_velocity`, `format.y_velocity`, `format.x_acceleration`,
//!   `format.y_acceleration`, `format.lane_id`, `format.frame_rate`

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, TrainConfig};
use crate::scenario::{ExtractConfig, FormatConfig, SplitSpec, SynthSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub format: FormatConfig,
    pub dt: f64,
    /// Window start spacing for extraction, seconds.
    pub stride: f64,
    pub alongside_margin: f64,
    pub balance_seed: u64,
    pub split: SplitSpec,
    pub synth_count: usize,
    pub synth_noise: f64,
    pub synth_neighbor_density: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let extract = ExtractConfig::default();
        let synth = SynthSpec::default();
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            format: FormatConfig::default(),
            dt: extract.dt,
            stride: extract.stride,
            alongside_margin: extract.geometry.alongside_margin,
            balance_seed: 0,
            split: SplitSpec::default(),
            synth_count: 256,
            synth_noise: synth.noise,
            synth_neighbor_density: synth.neighbor_density,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(k) = key.strip_prefix("format.") {
            return self.format.set(k, value);
        }
        if self.model.set(key, value)? || self.train.set(key, value)? {
            return Ok(());
        }
        match key {
            "dt" => self.dt = num(key, value)?,
            "stride" => self.stride = num(key, value)?,
            "alongside_margin" => self.alongside_margin = num(key, value)?,
            "balance_seed" => self.balance_seed = num(key, value)?,
            "split.train" => self.split.train = num(key, value)?,
            "split.val" => self.split.val = num(key, value)?,
            "split.test" => self.split.test = num(key, value)?,
            "split.seed" => self.split.seed = num(key, value)?,
            "synth.count" => self.synth_count = num(key, value)?,
            "synth.noise" => self.synth_noise = num(key, value)?,
            "synth.neighbor_density" => self.synth_neighbor_density = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a config file's lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                row: k + 1,
                msg: format!("expected key = value, got '{line}'"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                row: k + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path.as_ref())?)
    }

    pub fn extract(&self) -> ExtractConfig {
        let mut e = ExtractConfig {
            dt: self.dt,
            t_obs: self.model.t_obs,
            t_f: self.model.t_f,
            stride: self.stride,
            ..ExtractConfig::default()
        };
        e.geometry.alongside_margin = self.alongside_margin;
        e
    }

    pub fn synth(&self) -> SynthSpec {
        SynthSpec {
            dt: self.dt,
            t_obs: self.model.t_obs,
            t_f: self.model.t_f,
            noise: self.synth_noise,
            neighbor_density: self.synth_neighbor_density,
            ..SynthSpec::mixed(self.synth_count)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.split.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}
