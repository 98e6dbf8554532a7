//! Experiment configuration: a flat key=value text format, one key per
//! line, `#` comments, lowercase snake-case keys. Every module precondition
//! is checked on load, and an invalid config is rejected with the offending
//! key named.

use std::path::Path;

use crate::agent::TrainParams;
use crate::env::{EnvParams, Pathloss};
use crate::error::{Error, Result};
use crate::fed::RoundConfig;
use crate::metrics::Regime;
use crate::policy::PolicyShape;
use crate::selector::EpsilonSchedule;

/// Every knob of a run. Defaults reproduce the reference setup: 8 user
/// pairs, 4 channels, a 400 m square, 300 rounds over 5 seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_pairs: usize,
    pub m_channels: usize,
    pub area_side: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub pathloss_exponent: f64,
    pub reference_distance: f64,
    pub reference_gain: f64,
    pub tx_power: f64,
    pub noise_power: f64,
    pub pu_duty: f64,
    pub pu_block_len: u64,
    /// Received incumbent power on an occupied channel (audible to SUs).
    pub pu_power: f64,
    pub episode_len: usize,
    pub episodes_per_round: usize,
    /// Steps in the fixed-seed evaluation episode (spans several PU
    /// sojourns so the metric is not hostage to one occupancy draw).
    pub eval_episode_len: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub hidden_width: usize,
    pub grad_clip: f64,
    pub participation: usize,
    pub quant_bits: u8,
    /// Joint-reward weights; `None` means uniform 1/N.
    pub agent_weights: Option<Vec<f64>>,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_rounds: u64,
    pub p_drop: f64,
    pub rounds: u64,
    pub seeds: Vec<u64>,
    pub regimes: Vec<Regime>,
    pub selector_enabled: bool,
    pub selector_lr: f64,
    pub selector_gamma: f64,
    pub selector_hidden: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_pairs: 8,
            m_channels: 4,
            area_side: 400.0,
            d_min: 10.0,
            d_max: 50.0,
            pathloss_exponent: 3.0,
            reference_distance: 1.0,
            reference_gain: 1e-3,
            tx_power: 1.0,
            noise_power: 1e-9,
            pu_duty: 0.2,
            pu_block_len: 1,
            pu_power: 1e-6,
            episode_len: 50,
            episodes_per_round: 4,
            eval_episode_len: 200,
            learning_rate: 0.01,
            gamma: 0.95,
            hidden_width: 16,
            grad_clip: 5.0,
            participation: 8,
            quant_bits: 0,
            agent_weights: None,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_rounds: 100,
            p_drop: 0.0,
            rounds: 300,
            seeds: vec![1, 2, 3, 4, 5],
            regimes: vec![Regime::Fl],
            selector_enabled: false,
            selector_lr: 0.05,
            selector_gamma: 0.9,
            selector_hidden: 16,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "n_pairs",
    "m_channels",
    "area_side",
    "d_min",
    "d_max",
    "pathloss_exponent",
    "reference_distance",
    "reference_gain",
    "tx_power",
    "noise_power",
    "pu_duty",
    "pu_block_len",
    "pu_power",
    "episode_len",
    "episodes_per_round",
    "eval_episode_len",
    "learning_rate",
    "gamma",
    "hidden_width",
    "grad_clip",
    "participation",
    "quant_bits",
    "agent_weights",
    "epsilon_start",
    "epsilon_end",
    "epsilon_decay_rounds",
    "p_drop",
    "rounds",
    "seeds",
    "regimes",
    "selector_enabled",
    "selector_lr",
    "selector_gamma",
    "selector_hidden",
];

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        key: key.into(),
        reason: reason.into(),
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| bad(key, format!("cannot parse `{}`", value.trim())))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| bad(key, format!("cannot parse `{s}`")))
        })
        .collect()
}

/// Parse a config document, starting from the defaults. Unknown and
/// duplicated keys are errors.
impl std::str::FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::InvalidConfig {
                key: format!("line {}", line_no + 1),
                reason: format!("expected key = value, got `{line}`"),
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(bad(key, "duplicate key"));
            }
            config.set(key, value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }

    /// Set one key from its textual value. Does not re-validate; callers run
    /// [`ExperimentConfig::validate`] when done.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n_pairs" => self.n_pairs = parse(key, value)?,
            "m_channels" => self.m_channels = parse(key, value)?,
            "area_side" => self.area_side = parse(key, value)?,
            "d_min" => self.d_min = parse(key, value)?,
            "d_max" => self.d_max = parse(key, value)?,
            "pathloss_exponent" => self.pathloss_exponent = parse(key, value)?,
            "reference_distance" => self.reference_distance = parse(key, value)?,
            "reference_gain" => self.reference_gain = parse(key, value)?,
            "tx_power" => self.tx_power = parse(key, value)?,
            "noise_power" => self.noise_power = parse(key, value)?,
            "pu_duty" => self.pu_duty = parse(key, value)?,
            "pu_block_len" => self.pu_block_len = parse(key, value)?,
            "pu_power" => self.pu_power = parse(key, value)?,
            "episode_len" => self.episode_len = parse(key, value)?,
            "episodes_per_round" => self.episodes_per_round = parse(key, value)?,
            "eval_episode_len" => self.eval_episode_len = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "hidden_width" => self.hidden_width = parse(key, value)?,
            "grad_clip" => self.grad_clip = parse(key, value)?,
            "participation" => self.participation = parse(key, value)?,
            "quant_bits" => self.quant_bits = parse(key, value)?,
            "agent_weights" => {
                let weights: Vec<f64> = parse_list(key, value)?;
                self.agent_weights = if weights.is_empty() {
                    None
                } else {
                    Some(weights)
                };
            }
            "epsilon_start" => self.epsilon_start = parse(key, value)?,
            "epsilon_end" => self.epsilon_end = parse(key, value)?,
            "epsilon_decay_rounds" => self.epsilon_decay_rounds = parse(key, value)?,
            "p_drop" => self.p_drop = parse(key, value)?,
            "rounds" => self.rounds = parse(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "regimes" => self.regimes = parse_list(key, value)?,
            "selector_enabled" => self.selector_enabled = parse(key, value)?,
            "selector_lr" => self.selector_lr = parse(key, value)?,
            "selector_gamma" => self.selector_gamma = parse(key, value)?,
            "selector_hidden" => self.selector_hidden = parse(key, value)?,
            other => return Err(bad(other, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(bad(key, "must be positive and finite"))
            }
        };
        let unit = |key: &str, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(bad(key, "must lie in [0, 1]"))
            }
        };

        if self.n_pairs == 0 {
            return Err(bad("n_pairs", "must be at least 1"));
        }
        if self.m_channels == 0 {
            return Err(bad("m_channels", "must be at least 1"));
        }
        positive("area_side", self.area_side)?;
        positive("d_min", self.d_min)?;
        if self.d_min > self.d_max {
            return Err(bad("d_min", "must not exceed d_max"));
        }
        if self.d_max > self.area_side {
            return Err(bad("d_max", "must not exceed area_side"));
        }
        positive("pathloss_exponent", self.pathloss_exponent)?;
        positive("reference_distance", self.reference_distance)?;
        positive("reference_gain", self.reference_gain)?;
        positive("tx_power", self.tx_power)?;
        positive("noise_power", self.noise_power)?;
        unit("pu_duty", self.pu_duty)?;
        if self.pu_block_len == 0 {
            return Err(bad("pu_block_len", "must be at least 1"));
        }
        if !self.pu_power.is_finite() || self.pu_power < 0.0 {
            return Err(bad("pu_power", "must be nonnegative and finite"));
        }
        if self.episode_len == 0 {
            return Err(bad("episode_len", "must be at least 1"));
        }
        if self.episodes_per_round == 0 {
            return Err(bad("episodes_per_round", "must be at least 1"));
        }
        if self.eval_episode_len == 0 {
            return Err(bad("eval_episode_len", "must be at least 1"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(bad("learning_rate", "must be nonnegative and finite"));
        }
        unit("gamma", self.gamma)?;
        if self.hidden_width == 0 {
            return Err(bad("hidden_width", "must be at least 1"));
        }
        positive("grad_clip", self.grad_clip)?;
        if self.participation == 0 || self.participation > self.n_pairs {
            return Err(bad(
                "participation",
                format!("must lie in 1..={}", self.n_pairs),
            ));
        }
        if self.quant_bits == 1 || self.quant_bits > 16 {
            return Err(bad("quant_bits", "must be 0 (off) or in 2..=16"));
        }
        if let Some(weights) = &self.agent_weights {
            if weights.len() != self.n_pairs {
                return Err(bad(
                    "agent_weights",
                    format!("expected {} entries, got {}", self.n_pairs, weights.len()),
                ));
            }
            if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
                return Err(bad("agent_weights", "entries must be nonnegative"));
            }
            if weights.iter().sum::<f64>() <= 0.0 {
                return Err(bad("agent_weights", "must not all be zero"));
            }
        }
        unit("epsilon_start", self.epsilon_start)?;
        unit("epsilon_end", self.epsilon_end)?;
        if self.epsilon_end > self.epsilon_start {
            return Err(bad("epsilon_end", "must not exceed epsilon_start"));
        }
        if self.epsilon_decay_rounds == 0 {
            return Err(bad("epsilon_decay_rounds", "must be at least 1"));
        }
        unit("p_drop", self.p_drop)?;
        if self.rounds == 0 {
            return Err(bad("rounds", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds", "must list at least one seed"));
        }
        if self.regimes.is_empty() {
            return Err(bad("regimes", "must list at least one regime"));
        }
        let mut regimes = self.regimes.clone();
        regimes.sort();
        regimes.dedup();
        if regimes.len() != self.regimes.len() {
            return Err(bad("regimes", "duplicate regime"));
        }
        positive("selector_lr", self.selector_lr)?;
        unit("selector_gamma", self.selector_gamma)?;
        if self.selector_hidden == 0 {
            return Err(bad("selector_hidden", "must be at least 1"));
        }
        Ok(())
    }

    pub fn shape(&self) -> PolicyShape {
        PolicyShape::new(self.m_channels, self.hidden_width)
    }

    pub fn pathloss(&self) -> Pathloss {
        Pathloss {
            exponent: self.pathloss_exponent,
            d_ref: self.reference_distance,
            g0: self.reference_gain,
        }
    }

    pub fn env_params(&self) -> EnvParams {
        EnvParams {
            m_channels: self.m_channels,
            tx_power: self.tx_power,
            noise_power: self.noise_power,
            pu_duty: self.pu_duty,
            pu_block_len: self.pu_block_len,
            pu_power: self.pu_power,
        }
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            episode_len: self.episode_len,
            lr: self.learning_rate,
            gamma: self.gamma,
            grad_clip: self.grad_clip,
        }
    }

    /// Normalized joint-reward weights (uniform when unset).
    pub fn weights(&self) -> Vec<f64> {
        match &self.agent_weights {
            Some(w) => {
                let total: f64 = w.iter().sum();
                w.iter().map(|x| x / total).collect()
            }
            None => vec![1.0 / self.n_pairs as f64; self.n_pairs],
        }
    }

    pub fn round_config(&self) -> Result<RoundConfig> {
        RoundConfig::new(
            self.episodes_per_round,
            self.participation,
            self.quant_bits,
            self.weights(),
            self.n_pairs,
        )
    }

    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            decay_rounds: self.epsilon_decay_rounds,
        }
    }
}
