//! Small deterministic continuous-control tasks.
//!
//! Agents always act in `(-1, 1)^d`; each environment maps that box onto its
//! physical actuator range. Episodes end in one of two ways that must not be
//! confused during bootstrapping: a [`EndKind::Terminal`] state-dependent
//! event, or a [`EndKind::TimeLimit`] cut after `max_episode_steps`.

mod pendulum;
mod point_mass;
mod trajectory;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pendulum::{Pendulum, PendulumInit};
pub use point_mass::PointMass;
pub use trajectory::{record_trajectory, write_trajectory_csv, TrajectoryStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndKind {
    NotDone,
    Terminal,
    TimeLimit,
}

impl EndKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            EndKind::NotDone => 0,
            EndKind::Terminal => 1,
            EndKind::TimeLimit => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(EndKind::NotDone),
            1 => Some(EndKind::Terminal),
            2 => Some(EndKind::TimeLimit),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EndKind::NotDone => "not_done",
            EndKind::Terminal => "terminal",
            EndKind::TimeLimit => "time_limit",
        }
    }

    pub fn is_episode_end(self) -> bool {
        self != EndKind::NotDone
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub observation_dim: usize,
    pub action_dim: usize,
    pub max_episode_steps: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

impl EnvSpec {
    /// Affine map from `[-1, 1]^d` onto `[low, high]`.
    pub fn scale_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(a, (lo, hi))| lo + (a + 1.0) * 0.5 * (hi - lo))
            .collect()
    }

    pub fn unscale_action(&self, physical: &[f64]) -> Vec<f64> {
        physical
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(u, (lo, hi))| 2.0 * (u - lo) / (hi - lo) - 1.0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub end: EndKind,
}

pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode drawn from the environment's initial distribution.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Advances one control interval. Actions outside `[-1, 1]` are clamped
    /// and counted in [`Env::clamped_actions`].
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    /// Steps taken in the current episode.
    fn elapsed_steps(&self) -> usize;

    fn clamped_actions(&self) -> u64;
}

pub const ENV_NAMES: [&str; 2] = [Pendulum::NAME, PointMass::NAME];

pub fn make_env(name: &str) -> Result<Box<dyn Env>> {
    match name {
        Pendulum::NAME => Ok(Box::new(Pendulum::new())),
        PointMass::NAME => Ok(Box::new(PointMass::new())),
        other => Err(Error::UnknownEnv(other.to_string())),
    }
}

/// Shared episode bookkeeping: action validation, clamping, and the
/// terminal-versus-time-limit decision.
#[derive(Debug, Clone, Default)]
pub(crate) struct EpisodeClock {
    steps: usize,
    active: bool,
    clamped: u64,
}

impl EpisodeClock {
    pub(crate) fn start(&mut self) {
        self.steps = 0;
        self.active = true;
    }

    pub(crate) fn clamp_action(&mut self, action: &[f64], dim: usize) -> Result<Vec<f64>> {
        if !self.active {
            return Err(Error::Usage(
                "step called without an active episode; call reset first".into(),
            ));
        }
        if action.len() != dim {
            return Err(Error::Shape(format!(
                "expected a {dim}-dimensional action, got {}",
                action.len()
            )));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite(format!("action {action:?}")));
        }
        Ok(action
            .iter()
            .map(|&a| {
                if a.abs() > 1.0 {
                    self.clamped += 1;
                }
                a.clamp(-1.0, 1.0)
            })
            .collect())
    }

    /// Records one step and classifies how (or whether) the episode ended.
    /// A physical termination always wins over the time limit.
    pub(crate) fn finish_step(&mut self, terminal: bool, max_steps: usize) -> EndKind {
        self.steps += 1;
        let end = if terminal {
            EndKind::Terminal
        } else if self.steps >= max_steps {
            EndKind::TimeLimit
        } else {
            EndKind::NotDone
        };
        if end.is_episode_end() {
            self.active = false;
        }
        end
    }

    pub(crate) fn steps(&self) -> usize {
        self.steps
    }

    pub(crate) fn clamped(&self) -> u64 {
        self.clamped
    }
}
