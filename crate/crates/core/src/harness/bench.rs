//! Wall-clock inference benchmark: mean seconds per evaluation episode for
//! random, CEM and distilled policies on the same starts.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cem::{cem_policy, CemConfig};
use crate::envs::make_env;
use crate::error::{Error, Result};
use crate::nn::DenseNet;
use crate::seeding::{stream_rng, STREAM_EVAL_CEM};

#[derive(Debug, Clone)]
pub enum BenchPolicy {
    Random,
    /// CEM over a critic with the given configuration.
    Cem { critic: DenseNet, cem: CemConfig },
    /// One forward pass of a policy network per step.
    Network { policy: DenseNet },
}

#[derive(Debug, Clone)]
pub struct BenchEntry {
    pub label: String,
    pub policy: BenchPolicy,
}

impl BenchEntry {
    pub fn random() -> Self {
        BenchEntry {
            label: "random".into(),
            policy: BenchPolicy::Random,
        }
    }

    /// `cem-<iterations>` over `critic` with `samples`/`elites` from `base`.
    pub fn cem(critic: DenseNet, base: CemConfig, iterations: usize) -> Self {
        BenchEntry {
            label: format!("cem-{iterations}"),
            policy: BenchPolicy::Cem {
                critic,
                cem: CemConfig { iterations, ..base },
            },
        }
    }

    pub fn network(label: impl Into<String>, policy: DenseNet) -> Self {
        BenchEntry {
            label: label.into(),
            policy: BenchPolicy::Network { policy },
        }
    }

    /// Loads a network artifact, failing with `MissingArtifact` if absent.
    pub fn load_network(label: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::network(label, DenseNet::load(path)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub label: String,
    pub episodes: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
    pub mean_steps: f64,
    pub mean_return: f64,
}

/// Times `episodes` noise-free episodes per policy. Episodes are interleaved
/// across policies (episode `e` of every policy, then `e + 1`) so slow drift
/// in machine load hits all policies alike, and episode `e` starts from the
/// same state for every policy. An untimed warm-up round runs first.
pub fn runtime_bench(env_name: &str, entries: &[BenchEntry], episodes: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if episodes == 0 {
        return Err(Error::Usage("benchmark needs at least one episode".into()));
    }
    let mut env = make_env(env_name)?;
    let spec = env.spec().clone();
    for e in entries {
        let (inputs, outputs) = match &e.policy {
            BenchPolicy::Random => continue,
            BenchPolicy::Cem { critic, .. } => (critic.input_dim(), spec.observation_dim + spec.action_dim),
            BenchPolicy::Network { policy } => (policy.input_dim(), spec.observation_dim),
        };
        if inputs != outputs {
            return Err(Error::Shape(format!(
                "`{}` expects {inputs} inputs, {env_name} provides {outputs}",
                e.label
            )));
        }
    }
    let mut times = vec![Vec::with_capacity(episodes); entries.len()];
    let mut steps = vec![0usize; entries.len()];
    let mut returns = vec![0.0; entries.len()];
    let mut rng_act = stream_rng(seed, STREAM_EVAL_CEM);
    // round 0 warms caches and is not timed
    for ep in 0..=episodes {
        for (i, entry) in entries.iter().enumerate() {
            let mut rng_reset = ChaCha8Rng::seed_from_u64(seed.wrapping_add(ep as u64));
            let start = Instant::now();
            let mut obs = env.reset(&mut rng_reset);
            loop {
                let action = match &entry.policy {
                    BenchPolicy::Random => (0..spec.action_dim)
                        .map(|_| rng_act.random_range(-1.0..1.0))
                        .collect(),
                    BenchPolicy::Cem { critic, cem } => cem_policy(&obs, critic, cem, &mut rng_act)?,
                    BenchPolicy::Network { policy } => policy
                        .forward(ndarray::aview1(&obs).insert_axis(ndarray::Axis(0)))?
                        .row(0)
                        .to_vec(),
                };
                let out = env.step(&action)?;
                if ep > 0 {
                    steps[i] += 1;
                    returns[i] += out.reward;
                }
                obs = out.observation;
                if out.end.is_episode_end() {
                    break;
                }
            }
            if ep > 0 {
                times[i].push(start.elapsed().as_secs_f64());
            }
        }
    }
    Ok(entries
        .iter()
        .zip(times)
        .enumerate()
        .map(|(i, (entry, t))| {
            let n = t.len() as f64;
            let mean = t.iter().sum::<f64>() / n;
            let var = t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            BenchRow {
                label: entry.label.clone(),
                episodes,
                mean_seconds: mean,
                std_seconds: var.sqrt(),
                mean_steps: steps[i] as f64 / n,
                mean_return: returns[i] / n,
            }
        })
        .collect())
}

pub fn write_bench_csv<W: Write + ?Sized>(w: &mut W, rows: &[BenchRow]) -> Result<()> {
    writeln!(w, "# cgp runtime bench v1")?;
    writeln!(w, "policy,episodes,mean_seconds_per_episode,std_seconds,mean_steps,mean_return")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.label, r.episodes, r.mean_seconds, r.std_seconds, r.mean_steps, r.mean_return
        )?;
    }
    Ok(())
}
