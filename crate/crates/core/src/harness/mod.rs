//! Experiment plumbing: persisted single runs, sweeps, stability curves and
//! the inference-time benchmark.
//!
//! A run lives at `<out>/<env>/<mode>-<schedule>/<config hash>/seed-<seed>/`:
//!
//! | file | contents |
//! |------|----------|
//! | `record.csv` | evaluation series ([`crate::record`]) |
//! | `meta.json` | config, seed, status, counters, wall clock |
//! | `critic1.net`, `critic2.net` | live critics |
//! | `critic1_target.net`, `critic2_target.net` | target critics |
//! | `policy.net`, `policy_target.net` | policy and its target (absent in CEM-only mode) |
//! | `buffer.bin` | replay buffer |

mod bench;
mod stability;
mod sweep;

pub use bench::*;
pub use stability::*;
pub use sweep::*;

use std::fs;
use std::path::{Path, PathBuf};

use crate::agents::{train, TrainOutcome};
use crate::config::AgentConfig;
use crate::error::Result;
use crate::nn::DenseNet;
use crate::record::{RunMetadata, RunRecord, META_FILE, METADATA_SCHEMA, RECORD_FILE};
use crate::replay::ReplayBuffer;

pub const CRITIC1_FILE: &str = "critic1.net";
pub const CRITIC2_FILE: &str = "critic2.net";
pub const CRITIC1_TARGET_FILE: &str = "critic1_target.net";
pub const CRITIC2_TARGET_FILE: &str = "critic2_target.net";
pub const POLICY_FILE: &str = "policy.net";
pub const POLICY_TARGET_FILE: &str = "policy_target.net";
pub const BUFFER_FILE: &str = "buffer.bin";

pub fn version_string() -> String {
    format!("cgp {}", env!("CARGO_PKG_VERSION"))
}

/// Directory of a run relative to the output root.
pub fn relative_run_dir(config: &AgentConfig, seed: u64) -> PathBuf {
    PathBuf::from(&config.env)
        .join(format!("{}-{}", config.mode, config.schedule))
        .join(config.hash())
        .join(format!("seed-{seed}"))
}

pub fn run_dir(out_dir: impl AsRef<Path>, config: &AgentConfig, seed: u64) -> PathBuf {
    out_dir.as_ref().join(relative_run_dir(config, seed))
}

/// Trains one run and writes every artifact to its run directory.
pub fn run_single(config: &AgentConfig, seed: u64, out_dir: impl AsRef<Path>) -> Result<RunRecord> {
    config.validate()?;
    let dir = run_dir(out_dir, config, seed);
    fs::create_dir_all(&dir)?;
    let outcome = train(config, seed)?;
    save_outcome(&dir, config, seed, &outcome)?;
    Ok(outcome.record)
}

pub fn save_outcome(dir: &Path, config: &AgentConfig, seed: u64, out: &TrainOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    out.record.save_csv(dir.join(RECORD_FILE))?;
    let critic = &out.agent.critic;
    critic.q1.save(dir.join(CRITIC1_FILE))?;
    critic.q2.save(dir.join(CRITIC2_FILE))?;
    critic.q1_target.save(dir.join(CRITIC1_TARGET_FILE))?;
    critic.q2_target.save(dir.join(CRITIC2_TARGET_FILE))?;
    if let Some(head) = &out.agent.policy {
        head.net.save(dir.join(POLICY_FILE))?;
        head.target.save(dir.join(POLICY_TARGET_FILE))?;
    }
    out.buffer.save(dir.join(BUFFER_FILE))?;
    metadata(config, seed, out).save(dir.join(META_FILE))
}

fn metadata(config: &AgentConfig, seed: u64, out: &TrainOutcome) -> RunMetadata {
    let completed = out.record.status == crate::record::RunStatus::Completed;
    RunMetadata {
        schema: METADATA_SCHEMA,
        version: version_string(),
        config: config.clone(),
        config_hash: config.hash(),
        seed,
        status: out.record.status,
        final_reward: completed.then_some(out.record.final_reward),
        failure: out.record.failure.clone(),
        steps_completed: out.steps_completed,
        critic_updates: out.agent.iterations(),
        policy_updates: out.agent.policy_updates(),
        clamped_actions: out.clamped_actions,
        wall_clock_seconds: out.wall_clock_seconds,
    }
}

/// Networks and metadata reloaded from a run directory.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub metadata: RunMetadata,
    pub critic1: DenseNet,
    pub critic2: DenseNet,
    pub policy: Option<DenseNet>,
}

impl RunArtifacts {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let metadata = RunMetadata::load(dir.join(META_FILE))?;
        let policy = if metadata.config.mode.has_policy_network() {
            Some(DenseNet::load(dir.join(POLICY_FILE))?)
        } else {
            None
        };
        Ok(RunArtifacts {
            critic1: DenseNet::load(dir.join(CRITIC1_FILE))?,
            critic2: DenseNet::load(dir.join(CRITIC2_FILE))?,
            policy,
            metadata,
        })
    }

    pub fn buffer(dir: impl AsRef<Path>) -> Result<ReplayBuffer> {
        ReplayBuffer::load(dir.as_ref().join(BUFFER_FILE))
    }
}
