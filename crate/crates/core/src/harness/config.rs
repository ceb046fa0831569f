//! Flat `key = value` experiment configuration.

use serde::Serialize;

use crate::channel_model::EvolutionParams;
use crate::error::{Error, Result};
use crate::kl_transform::{selection_registry, BlockShape};
use crate::obfuscation::{scheme_registry, CampaignConfig};
use crate::quantizer::{PartMode, QuantizerConfig};
use crate::reconciliation::digest_registry;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// M: Alice's antennas.
    pub antennas: usize,
    /// N: subcarriers.
    pub subcarriers: usize,
    /// K: probing rounds.
    pub rounds: usize,
    pub snr_db: f64,
    pub rho_t: f64,
    pub tap_count: usize,

    pub mode: String,
    /// L_f; 0 disables filtering.
    pub filter_len: usize,
    pub rr_offset: usize,

    pub block_lx: usize,
    pub block_ly: usize,
    pub eta: f64,
    pub center: bool,
    pub selection: String,

    pub quantizer: QuantizerConfig,

    pub digest: String,
    /// Step up from the rule-selected code to one covering the worst block.
    pub escalate_code: bool,
    /// Raw-key prefix length fed to the randomness tests.
    pub nist_bits: usize,

    pub door_period: usize,
    pub replay_offset: usize,
    pub group_size: usize,
    pub kmeans_restarts: usize,

    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            antennas: 8,
            subcarriers: 512,
            rounds: 1000,
            snr_db: 20.0,
            rho_t: 0.9999,
            tap_count: 16,
            mode: "random".into(),
            filter_len: 8,
            rr_offset: 0,
            block_lx: 256,
            block_ly: 2,
            eta: 0.999,
            center: false,
            selection: "noise_corrected".into(),
            quantizer: QuantizerConfig::default(),
            digest: "md5".into(),
            escalate_code: true,
            nist_bits: 1024,
            door_period: 40,
            replay_offset: 10,
            group_size: 128,
            kmeans_restarts: 50,
            seed: 1,
        }
    }
}

/// Keys in the order they are written out.
pub const KEYS: &[&str] = &[
    "M",
    "N",
    "K",
    "snr_db",
    "rho_t",
    "tap_count",
    "mode",
    "L_f",
    "rr_offset",
    "L_x",
    "L_y",
    "eta",
    "center",
    "selection",
    "first_component_bits",
    "other_component_bits",
    "L_w",
    "beta",
    "part_mode",
    "adaptive_window",
    "digest",
    "escalate_code",
    "nist_bits",
    "door_period",
    "replay_offset",
    "group_size",
    "kmeans_restarts",
    "seed",
];

pub const PRESETS: [&str; 5] = ["default", "desk", "indoor", "corridor", "outdoor"];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::param(format!("invalid value `{value}` for `{key}`")))
}

impl ExperimentConfig {
    /// Small, fast setting: N=128, K=200.
    pub fn desk() -> Self {
        Self {
            subcarriers: 128,
            rounds: 200,
            block_lx: 64,
            block_ly: 2,
            ..Self::default()
        }
    }

    /// Named starting points. The environment presets change only SNR and
    /// tap count and are loose stand-ins for real surroundings.
    pub fn preset(name: &str) -> Result<Self> {
        let env = |snr_db, tap_count| Self {
            snr_db,
            tap_count,
            ..Self::default()
        };
        match name {
            "default" | "paper" => Ok(Self::default()),
            "desk" => Ok(Self::desk()),
            "indoor" => Ok(env(25.0, 16)),
            "corridor" => Ok(env(20.0, 8)),
            "outdoor" => Ok(env(15.0, 24)),
            other => Err(Error::Unknown {
                kind: "preset",
                name: other.to_string(),
                available: PRESETS.join(", "),
            }),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let q = &mut self.quantizer;
        match key.trim() {
            "M" => self.antennas = parse(key, v)?,
            "N" => self.subcarriers = parse(key, v)?,
            "K" => self.rounds = parse(key, v)?,
            "snr_db" => self.snr_db = parse(key, v)?,
            "rho_t" => self.rho_t = parse(key, v)?,
            "tap_count" => self.tap_count = parse(key, v)?,
            "mode" => self.mode = v.to_string(),
            "L_f" => self.filter_len = parse(key, v)?,
            "rr_offset" => self.rr_offset = parse(key, v)?,
            "L_x" => self.block_lx = parse(key, v)?,
            "L_y" => self.block_ly = parse(key, v)?,
            "eta" => self.eta = parse(key, v)?,
            "center" => self.center = parse(key, v)?,
            "selection" => self.selection = v.to_string(),
            "first_component_bits" => q.first_component_bits = parse(key, v)?,
            "other_component_bits" => q.other_component_bits = parse(key, v)?,
            "L_w" => q.window_len = parse(key, v)?,
            "beta" => q.guard_fraction = parse(key, v)?,
            "part_mode" => q.part_mode = v.parse::<PartMode>()?,
            "adaptive_window" => q.adaptive_window = parse(key, v)?,
            "digest" => self.digest = v.to_string(),
            "escalate_code" => self.escalate_code = parse(key, v)?,
            "nist_bits" => self.nist_bits = parse(key, v)?,
            "door_period" => self.door_period = parse(key, v)?,
            "replay_offset" => self.replay_offset = parse(key, v)?,
            "group_size" => self.group_size = parse(key, v)?,
            "kmeans_restarts" => self.kmeans_restarts = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            other => return Err(Error::param(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        let q = &self.quantizer;
        Ok(match key {
            "M" => self.antennas.to_string(),
            "N" => self.subcarriers.to_string(),
            "K" => self.rounds.to_string(),
            "snr_db" => self.snr_db.to_string(),
            "rho_t" => self.rho_t.to_string(),
            "tap_count" => self.tap_count.to_string(),
            "mode" => self.mode.clone(),
            "L_f" => self.filter_len.to_string(),
            "rr_offset" => self.rr_offset.to_string(),
            "L_x" => self.block_lx.to_string(),
            "L_y" => self.block_ly.to_string(),
            "eta" => self.eta.to_string(),
            "center" => self.center.to_string(),
            "selection" => self.selection.clone(),
            "first_component_bits" => q.first_component_bits.to_string(),
            "other_component_bits" => q.other_component_bits.to_string(),
            "L_w" => q.window_len.to_string(),
            "beta" => q.guard_fraction.to_string(),
            "part_mode" => match q.part_mode {
                PartMode::RealImag => "real_imag".into(),
                PartMode::Amplitude => "amplitude".into(),
            },
            "adaptive_window" => q.adaptive_window.to_string(),
            "digest" => self.digest.clone(),
            "escalate_code" => self.escalate_code.to_string(),
            "nist_bits" => self.nist_bits.to_string(),
            "door_period" => self.door_period.to_string(),
            "replay_offset" => self.replay_offset.to_string(),
            "group_size" => self.group_size.to_string(),
            "kmeans_restarts" => self.kmeans_restarts.to_string(),
            "seed" => self.seed.to_string(),
            other => return Err(Error::param(format!("unknown config key `{other}`"))),
        })
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::param(format!("config line {}: expected key = value", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::param(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    pub fn block_shape(&self) -> Result<BlockShape> {
        BlockShape::new(self.block_lx, self.block_ly)
    }

    pub fn campaign(&self) -> Result<CampaignConfig> {
        Ok(CampaignConfig {
            antennas: self.antennas,
            subcarriers: self.subcarriers,
            snr_db: self.snr_db,
            evolution: EvolutionParams::exponential(self.rho_t, self.tap_count)?,
            mode: self.mode.clone(),
            filter_len: self.filter_len,
            rr_offset: self.rr_offset,
            pilot: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 || self.subcarriers == 0 || self.rounds == 0 {
            return Err(Error::param("M, N and K must be at least 1"));
        }
        if self.tap_count == 0 || self.tap_count > self.subcarriers {
            return Err(Error::param("tap_count must lie in 1..=N"));
        }
        if self.snr_db.is_nan() {
            return Err(Error::param("snr_db is NaN"));
        }
        EvolutionParams::exponential(self.rho_t, self.tap_count)?;
        scheme_registry().get(&self.mode)?;
        if self.rr_offset >= self.antennas {
            return Err(Error::param(format!("rr_offset = {} must be below M", self.rr_offset)));
        }
        let shape = self.block_shape()?;
        if !self.subcarriers.is_multiple_of(shape.lx) {
            return Err(Error::param(format!("L_x = {} does not divide N = {}", shape.lx, self.subcarriers)));
        }
        if self.rounds / shape.ly * (self.subcarriers / shape.lx) < 2 {
            return Err(Error::param("block layout leaves fewer than 2 blocks"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::param(format!("eta = {} outside (0, 1]", self.eta)));
        }
        selection_registry().get(&self.selection)?;
        self.quantizer.validate()?;
        digest_registry().get(&self.digest)?;
        if self.group_size == 0 {
            return Err(Error::param("group_size must be at least 1"));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::param("kmeans_restarts must be at least 1"));
        }
        Ok(())
    }
}
