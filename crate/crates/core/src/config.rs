//! Run configuration.
//!
//! Every field has a default so an empty config file is the reference
//! configuration: CEM 2/64/6, γ = 0.99, τ = 0.005, learning rates 1e-3,
//! batch 128, target/policy updates every 2 steps, target smoothing noise
//! 0.2 clipped at 0.5, and no exploration noise.
//!
//! Files are flat TOML key/value tables using the field names below.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cem::CemConfig;
use crate::error::{Error, Result};
use crate::nn::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Policy network regressed onto CEM actions.
    Cgp,
    /// Policy network trained by ascending the critic's action gradient.
    Qgp,
    Ddpg,
    Td3,
    /// No policy network; the CEM policy acts everywhere.
    Cem,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Cgp, Mode::Qgp, Mode::Ddpg, Mode::Td3, Mode::Cem];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cgp => "cgp",
            Mode::Qgp => "qgp",
            Mode::Ddpg => "ddpg",
            Mode::Td3 => "td3",
            Mode::Cem => "cem",
        }
    }

    /// Whether the behavior policy and bootstrap actions come from CEM.
    pub fn samples_with_cem(self) -> bool {
        matches!(self, Mode::Cgp | Mode::Qgp | Mode::Cem)
    }

    pub fn has_policy_network(self) -> bool {
        self != Mode::Cem
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("mode", format!("unknown mode `{s}`")))
    }
}

/// When the policy network is fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Alongside the critic, on the delayed-update cadence.
    Online,
    /// After the training loop, against the frozen final critic and buffer.
    Offline,
}

impl Schedule {
    pub fn as_str(self) -> &'static str {
        match self {
            Schedule::Online => "online",
            Schedule::Offline => "offline",
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(Schedule::Online),
            "offline" => Ok(Schedule::Offline),
            _ => Err(Error::config("schedule", format!("unknown schedule `{s}`"))),
        }
    }
}

/// How gradient updates are interleaved with environment steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateCadence {
    /// One update after every environment step.
    PerStep,
    /// Roll out a whole episode, then run one update per step it took.
    PerEpisode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub env: String,
    pub mode: Mode,
    pub schedule: Schedule,
    pub update_cadence: UpdateCadence,

    pub discount: f64,
    pub tau: f64,
    pub q_lr: f64,
    pub policy_lr: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub target_update_freq: usize,

    pub policy_noise: f64,
    pub noise_clip: f64,
    pub exploration_noise: f64,
    /// Clipped Gaussian noise on bootstrap target actions.
    pub target_smoothing: bool,
    /// Clipped double-Q: bootstrap from `min(Q1′, Q2′)`; otherwise from `Q1′`.
    pub twin_critics: bool,
    /// Bootstrap through time-limit truncations. Disabling this treats them as
    /// terminal (an ablation).
    pub bootstrap_time_limit: bool,

    pub cem_iterations: usize,
    pub cem_samples: usize,
    pub cem_elites: usize,
    pub cem_variance_floor: f64,

    pub hidden_width: usize,
    pub hidden_layers: usize,

    pub buffer_capacity: usize,
    pub initial_random_steps: usize,
    pub total_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,

    /// Update budget for offline policy fitting.
    pub offline_updates: usize,
    /// Offline fitting stops once the mean loss over one window improves on
    /// the previous window by less than `offline_min_improvement`.
    pub offline_window: usize,
    pub offline_min_improvement: f64,

    /// Stop training at the first evaluation whose mean reaches this value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_reward: Option<f64>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            env: "pendulum-swingup".into(),
            mode: Mode::Cgp,
            schedule: Schedule::Online,
            update_cadence: UpdateCadence::PerStep,
            discount: 0.99,
            tau: 0.005,
            q_lr: 1e-3,
            policy_lr: 1e-3,
            weight_decay: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 128,
            target_update_freq: 2,
            policy_noise: 0.2,
            noise_clip: 0.5,
            exploration_noise: 0.0,
            target_smoothing: true,
            twin_critics: true,
            bootstrap_time_limit: true,
            cem_iterations: 2,
            cem_samples: 64,
            cem_elites: 6,
            cem_variance_floor: 1e-6,
            hidden_width: 256,
            hidden_layers: 2,
            buffer_capacity: 1_000_000,
            initial_random_steps: 10_000,
            total_steps: 1_000_000,
            eval_every: 10_000,
            eval_episodes: 5,
            offline_updates: 200_000,
            offline_window: 1_000,
            offline_min_improvement: 1e-5,
            stop_reward: None,
        }
    }
}

impl AgentConfig {
    /// Reference configuration adjusted for a baseline's usual setup.
    ///
    /// TD3 explores with Gaussian noise 0.1. DDPG is TD3 without twin critics
    /// or target smoothing, updating its targets every step.
    pub fn for_mode(mode: Mode) -> Self {
        let mut c = AgentConfig {
            mode,
            ..Default::default()
        };
        match mode {
            Mode::Td3 => c.exploration_noise = 0.1,
            Mode::Ddpg => {
                c.exploration_noise = 0.1;
                c.twin_critics = false;
                c.target_smoothing = false;
                c.target_update_freq = 1;
            }
            _ => {}
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(field: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive and finite, got {v}")))
            }
        }
        fn non_negative(field: &str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be non-negative and finite, got {v}")))
            }
        }
        fn at_least_one(field: &str, v: usize) -> Result<()> {
            if v >= 1 {
                Ok(())
            } else {
                Err(Error::config(field, "must be at least 1"))
            }
        }

        if !crate::envs::ENV_NAMES.contains(&self.env.as_str()) {
            return Err(Error::config(
                "env",
                format!(
                    "unknown environment `{}` (expected one of {:?})",
                    self.env,
                    crate::envs::ENV_NAMES
                ),
            ));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::config(
                "discount",
                format!("must lie in (0, 1), got {}", self.discount),
            ));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config(
                "tau",
                format!("must lie in (0, 1], got {}", self.tau),
            ));
        }
        positive("q_lr", self.q_lr)?;
        positive("policy_lr", self.policy_lr)?;
        non_negative("weight_decay", self.weight_decay)?;
        for (field, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(field, format!("must lie in [0, 1), got {b}")));
            }
        }
        positive("adam_eps", self.adam_eps)?;
        at_least_one("batch_size", self.batch_size)?;
        at_least_one("target_update_freq", self.target_update_freq)?;
        non_negative("policy_noise", self.policy_noise)?;
        non_negative("noise_clip", self.noise_clip)?;
        non_negative("exploration_noise", self.exploration_noise)?;
        self.cem_config(1).validate()?;
        at_least_one("hidden_width", self.hidden_width)?;
        at_least_one("buffer_capacity", self.buffer_capacity)?;
        at_least_one("eval_every", self.eval_every)?;
        at_least_one("eval_episodes", self.eval_episodes)?;
        at_least_one("offline_window", self.offline_window)?;
        non_negative("offline_min_improvement", self.offline_min_improvement)?;
        if self.schedule == Schedule::Offline && matches!(self.mode, Mode::Ddpg | Mode::Td3) {
            return Err(Error::config(
                "schedule",
                format!("{} trains its policy online only", self.mode),
            ));
        }
        if let Some(r) = self.stop_reward {
            if r.is_nan() {
                return Err(Error::config("stop_reward", "must not be NaN"));
            }
        }
        Ok(())
    }

    pub fn cem_config(&self, action_dim: usize) -> CemConfig {
        CemConfig {
            iterations: self.cem_iterations,
            samples: self.cem_samples,
            elites: self.cem_elites,
            action_dim,
            variance_floor: self.cem_variance_floor,
        }
    }

    pub fn adam(&self, learning_rate: f64) -> AdamConfig {
        AdamConfig {
            learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    /// `[input, hidden_width × hidden_layers, output]`.
    pub fn layer_sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        sizes.push(output);
        sizes
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: AgentConfig =
            toml::from_str(text).map_err(|e| Error::config(&toml_error_field(&e), e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Sets fields by name from TOML values, then validates.
    pub fn with_overrides<'a, I>(&self, overrides: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a toml::Value)>,
    {
        let mut table = toml::Table::try_from(self).expect("config serializes");
        for (key, value) in overrides {
            table.insert(key.to_string(), value.clone());
        }
        let cfg: AgentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(&toml_error_field(&e), e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn toml_error_field(e: &toml::de::Error) -> String {
    // serde messages name the offending key in backticks
    let msg = e.message();
    msg.split('`').nth(1).unwrap_or("config").to_string()
}
