use rand::{Rng, RngCore};

use super::{Env, EnvSpec, EpisodeClock, StepResult};
use crate::error::Result;

/// Planar double integrator that must reach a goal.
///
/// Action `u ∈ [-1, 1]²` is an acceleration. With `Δt = 0.1`:
///
/// ```text
/// v' = clip(v + u·Δt, -1, 1)        (per axis)
/// p' = clip(p + v'·Δt, -1.5, 1.5)   (per axis; velocity zeroed on contact)
/// ```
///
/// Reward is `-‖p' − g‖`. The episode terminates once `‖p' − g‖ < 0.1` and
/// is cut at 150 steps otherwise. Observation `(p, v, g − p)`.
/// Initial state: `p ~ U([-1, 1]²)`, `v = 0`, `g ~ U([-1, 1]²)` redrawn until
/// `‖g − p‖ ≥ 0.3`.
#[derive(Debug, Clone)]
pub struct PointMass {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    goal: [f64; 2],
    clock: EpisodeClock,
}

impl PointMass {
    pub const NAME: &'static str = "point-mass-reacher";
    pub const DT: f64 = 0.1;
    pub const MAX_SPEED: f64 = 1.0;
    pub const ARENA: f64 = 1.5;
    pub const GOAL_RADIUS: f64 = 0.1;
    pub const MIN_START_DISTANCE: f64 = 0.3;
    pub const MAX_STEPS: usize = 150;

    pub fn new() -> Self {
        PointMass {
            spec: EnvSpec {
                name: Self::NAME,
                observation_dim: 6,
                action_dim: 2,
                max_episode_steps: Self::MAX_STEPS,
                action_low: vec![-1.0, -1.0],
                action_high: vec![1.0, 1.0],
            },
            pos: [0.0; 2],
            vel: [0.0; 2],
            goal: [0.0; 2],
            clock: EpisodeClock::default(),
        }
    }

    pub fn reset_to(&mut self, pos: [f64; 2], vel: [f64; 2], goal: [f64; 2]) -> Vec<f64> {
        self.pos = pos;
        self.vel = vel;
        self.goal = goal;
        self.clock.start();
        self.observation()
    }

    pub fn state(&self) -> ([f64; 2], [f64; 2], [f64; 2]) {
        (self.pos, self.vel, self.goal)
    }

    pub fn observation(&self) -> Vec<f64> {
        vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            self.goal[0] - self.pos[0],
            self.goal[1] - self.pos[1],
        ]
    }

    fn distance(&self) -> f64 {
        ((self.goal[0] - self.pos[0]).powi(2) + (self.goal[1] - self.pos[1]).powi(2)).sqrt()
    }
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let pos = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let goal = loop {
            let g: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            if ((g[0] - pos[0]).powi(2) + (g[1] - pos[1]).powi(2)).sqrt()
                >= Self::MIN_START_DISTANCE
            {
                break g;
            }
        };
        self.reset_to(pos, [0.0; 2], goal)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let a = self.clock.clamp_action(action, 2)?;
        let u = self.spec.scale_action(&a);
        for i in 0..2 {
            self.vel[i] = (self.vel[i] + u[i] * Self::DT).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
            let p = self.pos[i] + self.vel[i] * Self::DT;
            if p.abs() > Self::ARENA {
                self.pos[i] = p.clamp(-Self::ARENA, Self::ARENA);
                self.vel[i] = 0.0;
            } else {
                self.pos[i] = p;
            }
        }
        let dist = self.distance();
        let end = self
            .clock
            .finish_step(dist < Self::GOAL_RADIUS, Self::MAX_STEPS);
        Ok(StepResult {
            observation: self.observation(),
            reward: -dist,
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
