//! Twin-critic Q-learning agents.
//!
//! Every mode shares the critic machinery: two critics regressed onto one
//! clipped double-Q target, Polyak-averaged target copies, and smoothing
//! noise on the bootstrap actions. Modes differ in who picks actions:
//!
//! | mode | behavior | bootstrap action | policy loss |
//! |------|----------|------------------|-------------|
//! | `cgp` | CEM over `Q1` | CEM over `Q1′` | `‖π(s) − CEM_Q1(s)‖²` |
//! | `qgp` | CEM over `Q1` | CEM over `Q1′` | `−Q1(s, π(s))` |
//! | `td3`, `ddpg` | `π(s)` + noise | `π′(s′)` | `−Q1(s, π(s))` |
//! | `cem` | CEM over `Q1` | CEM over `Q1′` | none |

mod losses;
mod train;

pub use losses::*;
pub use train::*;

use ndarray::{aview1, Array2, ArrayView2, Axis};
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cem::{cem_policy, cem_policy_batch, CemConfig};
use crate::config::{AgentConfig, Mode, Schedule};
use crate::error::{Error, Result};
use crate::nn::{polyak_update, Adam, DenseNet, OutputActivation};
use crate::replay::{Batch, ReplayBuffer};
use crate::seeding::{stream_rng, STREAM_CEM, STREAM_EXPLORE, STREAM_INIT, STREAM_MINIBATCH, STREAM_SMOOTHING};

/// Live critics `Q1, Q2`, their targets, and one optimizer per live critic.
#[derive(Debug, Clone)]
pub struct TwinCritic {
    pub q1: DenseNet,
    pub q2: DenseNet,
    pub q1_target: DenseNet,
    pub q2_target: DenseNet,
    pub opt1: Adam,
    pub opt2: Adam,
}

impl TwinCritic {
    /// Targets start as exact copies of the live critics.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        config: &AgentConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let sizes = config.layer_sizes(obs_dim + action_dim, 1);
        let q1 = DenseNet::new(&sizes, OutputActivation::Identity, rng)?;
        let q2 = DenseNet::new(&sizes, OutputActivation::Identity, rng)?;
        Ok(Self::from_nets(q1, q2, config.adam(config.q_lr)))
    }

    pub fn from_nets(q1: DenseNet, q2: DenseNet, adam: crate::nn::AdamConfig) -> Self {
        TwinCritic {
            opt1: Adam::new(&q1, adam),
            opt2: Adam::new(&q2, adam),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
        }
    }

    pub fn update_targets(&mut self, tau: f64) -> Result<()> {
        polyak_update(&mut self.q1_target, &self.q1, tau)?;
        polyak_update(&mut self.q2_target, &self.q2, tau)
    }
}

/// Deterministic tanh policy `π_φ`, its target `φ′`, and its optimizer.
#[derive(Debug, Clone)]
pub struct PolicyHead {
    pub net: DenseNet,
    pub target: DenseNet,
    pub opt: Adam,
}

impl PolicyHead {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        config: &AgentConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let net = DenseNet::new(
            &config.layer_sizes(obs_dim, action_dim),
            OutputActivation::Tanh,
            rng,
        )?;
        Ok(Self::from_net(net, config.adam(config.policy_lr)))
    }

    pub fn from_net(net: DenseNet, adam: crate::nn::AdamConfig) -> Self {
        PolicyHead {
            opt: Adam::new(&net, adam),
            target: net.clone(),
            net,
        }
    }

    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        let out = self.net.forward(aview1(state).insert_axis(Axis(0)))?;
        Ok(out.row(0).to_vec())
    }
}

/// Losses from one training iteration. Policy loss is `None` on iterations
/// without a policy update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub critic: CriticLosses,
    pub policy: Option<f64>,
}

/// Outcome of post-hoc policy distillation.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillReport {
    pub updates: usize,
    pub stopped_early: bool,
    /// Mean loss of each completed window.
    pub window_losses: Vec<f64>,
}

/// One agent: critics, optional policy, and its private RNG streams.
#[derive(Debug, Clone)]
pub struct Agent {
    pub config: AgentConfig,
    pub cem: CemConfig,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub critic: TwinCritic,
    /// Absent in CEM-only mode.
    pub policy: Option<PolicyHead>,
    rng_cem: ChaCha8Rng,
    rng_explore: ChaCha8Rng,
    rng_minibatch: ChaCha8Rng,
    rng_smoothing: ChaCha8Rng,
    iterations: u64,
    policy_updates: u64,
    target_updates: u64,
}

impl Agent {
    pub fn new(config: &AgentConfig, obs_dim: usize, action_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = stream_rng(seed, STREAM_INIT);
        let critic = TwinCritic::new(obs_dim, action_dim, config, &mut init)?;
        let policy = if config.mode.has_policy_network() {
            Some(PolicyHead::new(obs_dim, action_dim, config, &mut init)?)
        } else {
            None
        };
        Ok(Agent {
            config: config.clone(),
            cem: config.cem_config(action_dim),
            obs_dim,
            action_dim,
            critic,
            policy,
            rng_cem: stream_rng(seed, STREAM_CEM),
            rng_explore: stream_rng(seed, STREAM_EXPLORE),
            rng_minibatch: stream_rng(seed, STREAM_MINIBATCH),
            rng_smoothing: stream_rng(seed, STREAM_SMOOTHING),
            iterations: 0,
            policy_updates: 0,
            target_updates: 0,
        })
    }

    /// Critic updates performed so far.
    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn policy_updates(&self) -> u64 {
        self.policy_updates
    }

    pub fn target_updates(&self) -> u64 {
        self.target_updates
    }

    /// Uniform action in `(-1, 1)^d` from the exploration stream.
    pub fn random_action(&mut self) -> Vec<f64> {
        (0..self.action_dim)
            .map(|_| self.rng_explore.random_range(-1.0..1.0))
            .collect()
    }

    /// Training-time action: CEM over live `Q1`, or the policy network for
    /// TD3/DDPG, plus optional Gaussian exploration noise.
    pub fn act_behavior(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        let mut action = if self.config.mode.samples_with_cem() {
            cem_policy(state, &self.critic.q1, &self.cem, &mut self.rng_cem)?
        } else {
            self.policy_head()?.act(state)?
        };
        let sigma = self.config.exploration_noise;
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).expect("finite noise scale");
            for a in &mut action {
                *a = (*a + noise.sample(&mut self.rng_explore)).clamp(-1.0, 1.0);
            }
        }
        Ok(action)
    }

    /// Noise-free policy network action.
    pub fn act_network(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.policy_head()?.act(state)
    }

    /// CEM over live `Q1` with a caller-owned RNG, so evaluation does not
    /// disturb the training streams.
    pub fn act_cem<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        cem_policy(state, &self.critic.q1, &self.cem, rng)
    }

    pub fn policy_head(&self) -> Result<&PolicyHead> {
        self.policy
            .as_ref()
            .ok_or_else(|| Error::Usage(format!("mode {} has no policy network", self.config.mode)))
    }

    /// Bootstrap actions for a batch of next states.
    fn target_actions(
        mode: Mode,
        cem: &CemConfig,
        policy: Option<&PolicyHead>,
        critic: &TwinCritic,
        next_states: ArrayView2<f64>,
        rng: &mut dyn RngCore,
    ) -> Result<Array2<f64>> {
        if mode.samples_with_cem() {
            cem_policy_batch(next_states, &critic.q1_target, cem, rng)
        } else {
            let head = policy.ok_or_else(|| Error::Usage("baseline without policy".into()))?;
            head.target.forward(next_states)
        }
    }

    /// One critic update on a fresh minibatch; on every
    /// `target_update_freq`-th iteration also a policy update (online
    /// schedule only) and Polyak updates of all targets.
    pub fn train_iteration(&mut self, buffer: &ReplayBuffer) -> Result<IterationStats> {
        let batch = buffer.sample(self.config.batch_size, &mut self.rng_minibatch)?;
        self.train_on_batch(&batch)
    }

    pub fn train_on_batch(&mut self, batch: &Batch) -> Result<IterationStats> {
        let settings = BootstrapSettings::from(&self.config);
        let (mode, cem) = (self.config.mode, self.cem);
        let policy = self.policy.as_ref();
        let rng_cem = &mut self.rng_cem;
        let critic_losses = critic_update(
            batch,
            &mut self.critic,
            |critic, next| Self::target_actions(mode, &cem, policy, critic, next, rng_cem),
            &settings,
            &mut self.rng_smoothing,
        )?;
        self.iterations += 1;

        let mut policy_loss = None;
        if self.iterations % self.config.target_update_freq as u64 == 0 {
            if self.config.schedule == Schedule::Online && self.policy.is_some() {
                policy_loss = Some(self.policy_step(batch.states.view())?);
                self.policy_updates += 1;
            }
            self.critic.update_targets(self.config.tau)?;
            if let Some(head) = self.policy.as_mut() {
                polyak_update(&mut head.target, &head.net, self.config.tau)?;
            }
            self.target_updates += 1;
        }
        Ok(IterationStats {
            critic: critic_losses,
            policy: policy_loss,
        })
    }

    /// One policy-network step using the mode's loss against the live `Q1`.
    pub fn policy_step(&mut self, states: ArrayView2<f64>) -> Result<f64> {
        let head = self
            .policy
            .as_mut()
            .ok_or_else(|| Error::Usage("CEM-only agents have no policy to update".into()))?;
        match self.config.mode {
            Mode::Cgp => {
                let targets = cem_policy_batch(states, &self.critic.q1, &self.cem, &mut self.rng_cem)?;
                cgp_policy_update(states, head, targets.view())
            }
            Mode::Qgp | Mode::Td3 | Mode::Ddpg => qgp_policy_update(states, head, &self.critic.q1),
            Mode::Cem => unreachable!("CEM-only agents have no policy head"),
        }
    }

    /// Fits the policy against the frozen critic and buffer: at most
    /// `offline_updates` steps, stopping once a window's mean loss improves
    /// on the previous window's by less than `offline_min_improvement`.
    pub fn distill_offline(&mut self, buffer: &ReplayBuffer) -> Result<DistillReport> {
        self.policy_head()?;
        let window = self.config.offline_window;
        let mut report = DistillReport {
            updates: 0,
            stopped_early: false,
            window_losses: Vec::new(),
        };
        let mut acc = 0.0;
        for u in 0..self.config.offline_updates {
            let idx = buffer.sample_indices(self.config.batch_size, &mut self.rng_minibatch)?;
            let states = Batch::from_transitions(idx.iter().map(|&i| buffer.get(i).unwrap()))?.states;
            acc += self.policy_step(states.view())?;
            self.policy_updates += 1;
            report.updates = u + 1;
            if report.updates % window == 0 {
                let mean = acc / window as f64;
                acc = 0.0;
                let prev = report.window_losses.last().copied();
                report.window_losses.push(mean);
                if let Some(prev) = prev {
                    if prev - mean < self.config.offline_min_improvement {
                        report.stopped_early = report.updates < self.config.offline_updates;
                        break;
                    }
                }
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests;
