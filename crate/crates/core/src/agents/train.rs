//! The training loop and deterministic evaluation rollouts.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Agent, DistillReport};
use crate::config::{AgentConfig, Mode, Schedule, UpdateCadence};
use crate::envs::{make_env, Env};
use crate::error::{Error, Result};
use crate::record::{EvalPoint, EvalPolicy, RunRecord};
use crate::replay::{ReplayBuffer, Transition};
use crate::seeding::{derive_seed, stream_rng, STREAM_ENV, STREAM_EVAL, STREAM_EVAL_CEM};

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean: f64,
    pub returns: Vec<f64>,
}

/// Runs `episodes` noise-free rollouts. Initial states come from a stream
/// seeded by `seed` alone, so the same seed always replays the same starts.
pub fn evaluate<F>(env: &mut dyn Env, mut policy: F, episodes: usize, seed: u64) -> Result<Evaluation>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(&mut rng);
        let mut total = 0.0;
        loop {
            let action = policy(&obs)?;
            let step = env.step(&action)?;
            total += step.reward;
            obs = step.observation;
            if step.end.is_episode_end() {
                break;
            }
        }
        returns.push(total);
    }
    let mean = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
    Ok(Evaluation { mean, returns })
}

/// Everything a finished (or failed) run leaves behind.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub record: RunRecord,
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    pub steps_completed: usize,
    pub clamped_actions: u64,
    pub distill: Option<DistillReport>,
    pub wall_clock_seconds: f64,
}

/// Which policy the in-loop evaluations roll out.
fn loop_eval_policy(config: &AgentConfig) -> EvalPolicy {
    if config.mode == Mode::Cem || config.schedule == Schedule::Offline {
        EvalPolicy::Cem
    } else {
        EvalPolicy::Network
    }
}

struct Evaluator {
    env: Box<dyn Env>,
    seed: u64,
    episodes: usize,
    rng_cem: ChaCha8Rng,
}

impl Evaluator {
    fn run(&mut self, agent: &Agent, policy: EvalPolicy, step: usize) -> Result<EvalPoint> {
        let eval = match policy {
            EvalPolicy::Network => {
                evaluate(self.env.as_mut(), |s| agent.act_network(s), self.episodes, self.seed)?
            }
            EvalPolicy::Cem => {
                let rng = &mut self.rng_cem;
                evaluate(self.env.as_mut(), |s| agent.act_cem(s, rng), self.episodes, self.seed)?
            }
        };
        Ok(EvalPoint {
            step,
            policy,
            mean: eval.mean,
            returns: eval.returns,
        })
    }
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NonFinite(_) | Error::NonFiniteScore { .. })
}

/// Trains one agent from scratch.
///
/// The first `initial_random_steps` steps act uniformly at random and do not
/// train. Afterwards every environment step yields one critic update
/// (immediately, or batched at episode end under the per-episode cadence).
/// Evaluations run at step 0 and every `eval_every` steps; the run stops
/// early once an evaluation reaches `stop_reward`. Under the offline
/// schedule the policy network is distilled after the loop and evaluated
/// once more.
///
/// Divergence (a non-finite loss, target or score) ends the run with a
/// failed record rather than an error.
pub fn train(config: &AgentConfig, seed: u64) -> Result<TrainOutcome> {
    let start = Instant::now();
    config.validate()?;
    let mut env = make_env(&config.env)?;
    let spec = env.spec().clone();
    let mut agent = Agent::new(config, spec.observation_dim, spec.action_dim, seed)?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity)?;
    let mut record = RunRecord::new(config, seed);
    let mut evaluator = Evaluator {
        env: make_env(&config.env)?,
        seed: derive_seed(seed, &[STREAM_EVAL]),
        episodes: config.eval_episodes,
        rng_cem: stream_rng(seed, STREAM_EVAL_CEM),
    };
    let mut rng_env = stream_rng(seed, STREAM_ENV);
    let mut steps = 0;
    let mut distill = None;

    let result = (|| -> Result<()> {
        let policy = loop_eval_policy(config);
        let point = evaluator.run(&agent, policy, 0)?;
        let reached = |p: &EvalPoint| config.stop_reward.is_some_and(|r| p.mean >= r);
        let mut stop = reached(&point);
        record.push(point);

        let mut obs = env.reset(&mut rng_env);
        let mut pending = 0usize;
        while !stop && steps < config.total_steps {
            let warm = steps >= config.initial_random_steps;
            let action = if warm {
                agent.act_behavior(&obs)?
            } else {
                agent.random_action()
            };
            let out = env.step(&action)?;
            buffer.push(Transition {
                state: std::mem::take(&mut obs),
                action,
                reward: out.reward,
                next_state: out.observation.clone(),
                end: out.end,
            })?;
            obs = if out.end.is_episode_end() {
                env.reset(&mut rng_env)
            } else {
                out.observation
            };
            steps += 1;

            if warm {
                match config.update_cadence {
                    UpdateCadence::PerStep => {
                        agent.train_iteration(&buffer)?;
                    }
                    UpdateCadence::PerEpisode => pending += 1,
                }
            }
            if pending > 0 && (out.end.is_episode_end() || steps == config.total_steps) {
                for _ in 0..pending {
                    agent.train_iteration(&buffer)?;
                }
                pending = 0;
            }
            if steps % config.eval_every == 0 {
                let point = evaluator.run(&agent, policy, steps)?;
                stop = reached(&point);
                record.push(point);
            }
        }

        if config.schedule == Schedule::Offline && agent.policy.is_some() {
            distill = Some(agent.distill_offline(&buffer)?);
            record.push(evaluator.run(&agent, EvalPolicy::Network, steps)?);
        }
        Ok(())
    })();

    match result {
        Ok(()) => {}
        Err(e) if is_divergence(&e) => record.fail(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(TrainOutcome {
        record,
        clamped_actions: env.clamped_actions(),
        agent,
        buffer,
        steps_completed: steps,
        distill,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}
