use std::f64::consts::PI;

use rand::{Rng, RngCore};

use super::{Env, EnvSpec, EpisodeClock, StepResult};
use crate::error::Result;

/// Torque-limited pendulum swing-up.
///
/// Angle `θ` is measured from upright (θ = 0) and wrapped to `[-π, π)` for the
/// cost. Observation `(cos θ, sin θ, θ̇)`. With `g = 10`, `m = 1`, `l = 1`,
/// torque `u ∈ [-2, 2]`, and `Δt = 0.05`, one step is semi-implicit Euler:
///
/// ```text
/// θ̇' = clip(θ̇ + (3g/(2l)·sin θ + 3/(m·l²)·u)·Δt, -8, 8)
/// θ'  = θ + θ̇'·Δt
/// ```
///
/// The reward is `-(θ² + 0.1·θ̇² + 0.001·u²)` on the pre-step state, so it is
/// at most 0, reached only when upright at rest with no torque. Episodes last
/// 200 steps and never terminate early. Initial state: `θ ~ U(-π, π)`,
/// `θ̇ ~ U(-1, 1)`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    spec: EnvSpec,
    init: PendulumInit,
    theta: f64,
    theta_dot: f64,
    clock: EpisodeClock,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PendulumInit {
    Uniform,
    /// Hanging straight down at rest.
    DownwardRest,
}

impl Pendulum {
    pub const NAME: &'static str = "pendulum-swingup";
    pub const DT: f64 = 0.05;
    pub const GRAVITY: f64 = 10.0;
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const MAX_SPEED: f64 = 8.0;
    pub const MAX_STEPS: usize = 200;

    pub fn new() -> Self {
        Pendulum {
            spec: EnvSpec {
                name: Self::NAME,
                observation_dim: 3,
                action_dim: 1,
                max_episode_steps: Self::MAX_STEPS,
                action_low: vec![-Self::MAX_TORQUE],
                action_high: vec![Self::MAX_TORQUE],
            },
            init: PendulumInit::Uniform,
            theta: 0.0,
            theta_dot: 0.0,
            clock: EpisodeClock::default(),
        }
    }

    pub fn with_init(mut self, init: PendulumInit) -> Self {
        self.init = init;
        self
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, theta: f64, theta_dot: f64) -> Vec<f64> {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.clock.start();
        self.observation()
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    pub fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    /// `θ̇²/2 + (3g/(2l))·cos θ`, conserved by the torque-free continuous
    /// dynamics.
    pub fn energy(theta: f64, theta_dot: f64) -> f64 {
        0.5 * theta_dot * theta_dot + 1.5 * Self::GRAVITY / Self::LENGTH * theta.cos()
    }

    pub fn wrap_angle(theta: f64) -> f64 {
        (theta + PI).rem_euclid(2.0 * PI) - PI
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let (theta, theta_dot) = match self.init {
            PendulumInit::Uniform => (rng.random_range(-PI..PI), rng.random_range(-1.0..1.0)),
            PendulumInit::DownwardRest => (PI, 0.0),
        };
        self.reset_to(theta, theta_dot)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let a = self.clock.clamp_action(action, 1)?;
        let u = self.spec.scale_action(&a)[0];
        let (th, thd) = (self.theta, self.theta_dot);
        let norm = Self::wrap_angle(th);
        let reward = -(norm * norm + 0.1 * thd * thd + 0.001 * u * u);

        let accel = 3.0 * Self::GRAVITY / (2.0 * Self::LENGTH) * th.sin()
            + 3.0 / (Self::MASS * Self::LENGTH * Self::LENGTH) * u;
        let new_thd = (thd + accel * Self::DT).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        self.theta = th + new_thd * Self::DT;
        self.theta_dot = new_thd;

        let end = self.clock.finish_step(false, Self::MAX_STEPS);
        Ok(StepResult {
            observation: self.observation(),
            reward,
            end,
        })
    }

    fn elapsed_steps(&self) -> usize {
        self.clock.steps()
    }

    fn clamped_actions(&self) -> u64 {
        self.clock.clamped()
    }
}
