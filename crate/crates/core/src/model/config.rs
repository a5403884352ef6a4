use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cells::{CellKind, ForgetActivation};
use crate::error::{Error, Result};
use crate::scenario::NUM_SLOTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Decoder emits per-step displacements, added to the constant-velocity
    /// step from the last observed state.
    Xtraj,
    /// Decoder emits bounded controls that drive the kinematic rollout.
    Xtrack,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Xtraj => "xtraj",
            Variant::Xtrack => "xtrack",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xtraj" | "x-traj" => Ok(Variant::Xtraj),
            "xtrack" | "x-track" => Ok(Variant::Xtrack),
            _ => Err(Error::Config(format!("unknown variant '{s}' (expected xtraj or xtrack)"))),
        }
    }
}

/// Architecture and input scaling. Everything except `seed` is part of the
/// checkpoint fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub encoder: CellKind,
    pub decoder: CellKind,
    pub embed_dim: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub gat_heads: usize,
    /// Head count of any sLSTM cell.
    pub slstm_heads: usize,
    pub forget_activation: ForgetActivation,
    pub leaky_slope: f64,
    pub t_obs: usize,
    pub t_f: usize,
    /// Leading grid slots fed to the graph.
    pub neighbors: usize,
    /// Meters per network unit for X-TRAJ input x positions.
    pub position_scale: f64,
    /// Meters per network unit for X-TRAJ input y positions.
    pub lateral_scale: f64,
    /// Meters per network unit for X-TRAJ per-step displacements.
    pub step_scale: f64,
    pub speed_scale: f64,
    /// m/s² per network unit, for inputs and X-TRACK outputs.
    pub accel_scale: f64,
    /// rad/s per network unit, for inputs and X-TRACK outputs.
    pub yaw_rate_scale: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Xtrack,
            encoder: CellKind::SLstm,
            decoder: CellKind::Lstm,
            embed_dim: 32,
            encoder_hidden: 64,
            decoder_hidden: 128,
            gat_heads: 4,
            slstm_heads: 4,
            forget_activation: ForgetActivation::Exp,
            leaky_slope: 0.1,
            t_obs: 15,
            t_f: 25,
            neighbors: NUM_SLOTS,
            position_scale: 50.0,
            lateral_scale: 2.0,
            step_scale: 1.0,
            speed_scale: 10.0,
            accel_scale: 1.0,
            yaw_rate_scale: 0.1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Smallest useful network, for gradient certification.
    pub fn tiny() -> Self {
        Self {
            embed_dim: 4,
            encoder_hidden: 8,
            decoder_hidden: 8,
            gat_heads: 2,
            slstm_heads: 2,
            t_obs: 4,
            t_f: 3,
            neighbors: 2,
            ..Self::default()
        }
    }

    /// Desk-scale widths for quick training runs.
    pub fn toy() -> Self {
        Self {
            embed_dim: 8,
            encoder_hidden: 16,
            decoder_hidden: 16,
            ..Self::default()
        }
    }

    pub fn input_features(&self) -> usize {
        match self.variant {
            Variant::Xtraj => 4,
            Variant::Xtrack => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if [self.embed_dim, self.encoder_hidden, self.decoder_hidden, self.gat_heads, self.slstm_heads, self.t_f]
            .contains(&0)
        {
            return bad("model dimensions must be positive".into());
        }
        if self.t_obs < 3 {
            return bad(format!("t_obs must be at least 3, got {}", self.t_obs));
        }
        if !self.encoder_hidden.is_multiple_of(self.gat_heads) {
            return bad(format!(
                "encoder_hidden {} is not divisible by gat_heads {}",
                self.encoder_hidden, self.gat_heads
            ));
        }
        for (kind, d, name) in [
            (self.encoder, self.encoder_hidden, "encoder_hidden"),
            (self.decoder, self.decoder_hidden, "decoder_hidden"),
        ] {
            if kind == CellKind::SLstm && d % self.slstm_heads != 0 {
                return bad(format!("{name} {d} is not divisible by slstm_heads {}", self.slstm_heads));
            }
        }
        if self.neighbors > NUM_SLOTS {
            return bad(format!("neighbors must be at most {NUM_SLOTS}, got {}", self.neighbors));
        }
        let scales = [self.position_scale, self.lateral_scale, self.step_scale, self.speed_scale, self.accel_scale, self.yaw_rate_scale];
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) || !self.leaky_slope.is_finite() {
            return bad("scales must be positive and finite".into());
        }
        Ok(())
    }

    /// `key=value` view of every field, in a fixed order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("variant", self.variant.to_string()),
            ("encoder", self.encoder.to_string()),
            ("decoder", self.decoder.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("encoder_hidden", self.encoder_hidden.to_string()),
            ("decoder_hidden", self.decoder_hidden.to_string()),
            ("gat_heads", self.gat_heads.to_string()),
            ("slstm_heads", self.slstm_heads.to_string()),
            ("forget_activation", self.forget_activation.to_string()),
            ("leaky_slope", format!("{:?}", self.leaky_slope)),
            ("t_obs", self.t_obs.to_string()),
            ("t_f", self.t_f.to_string()),
            ("neighbors", self.neighbors.to_string()),
            ("position_scale", format!("{:?}", self.position_scale)),
            ("lateral_scale", format!("{:?}", self.lateral_scale)),
            ("step_scale", format!("{:?}", self.step_scale)),
            ("speed_scale", format!("{:?}", self.speed_scale)),
            ("accel_scale", format!("{:?}", self.accel_scale)),
            ("yaw_rate_scale", format!("{:?}", self.yaw_rate_scale)),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Applies one config-file key. Returns `false` for keys that are not
    /// model keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
        }
        match key {
            "variant" => self.variant = value.parse()?,
            "encoder" => self.encoder = value.parse()?,
            "decoder" => self.decoder = value.parse()?,
            "embed_dim" => self.embed_dim = num(key, value)?,
            "encoder_hidden" => self.encoder_hidden = num(key, value)?,
            "decoder_hidden" => self.decoder_hidden = num(key, value)?,
            "gat_heads" => self.gat_heads = num(key, value)?,
            "slstm_heads" => self.slstm_heads = num(key, value)?,
            "forget_activation" => self.forget_activation = value.parse()?,
            "leaky_slope" => self.leaky_slope = num(key, value)?,
            "t_obs" => self.t_obs = num(key, value)?,
            "t_f" => self.t_f = num(key, value)?,
            "neighbors" => self.neighbors = num(key, value)?,
            "position_scale" => self.position_scale = num(key, value)?,
            "lateral_scale" => self.lateral_scale = num(key, value)?,
            "step_scale" => self.step_scale = num(key, value)?,
            "speed_scale" => self.speed_scale = num(key, value)?,
            "accel_scale" => self.accel_scale = num(key, value)?,
            "yaw_rate_scale" => self.yaw_rate_scale = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// SHA-256 over the architecture keys, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.pairs() {
            if k != "seed" {
                h.update(format!("{k}={v}\n"));
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
