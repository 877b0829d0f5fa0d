//! Run records: the evaluation series of one training run plus metadata.
//!
//! `record.csv` (schema v1) holds only deterministic content so reruns of the
//! same config and seed are byte-identical:
//!
//! ```text
//! # cgp run record v1
//! step,policy,eval_mean,return_0,...,return_{k-1}
//! ```
//!
//! `policy` is `network` or `cem`. Floats use Rust's shortest round-trip
//! formatting. Wall-clock time and other volatile facts go to the JSON
//! sidecar ([`RunMetadata`]).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{AgentConfig, Mode, Schedule};
use crate::error::{Error, Result};

pub const RECORD_HEADER: &str = "# cgp run record v1";
pub const METADATA_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPolicy {
    Network,
    Cem,
}

impl EvalPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalPolicy::Network => "network",
            EvalPolicy::Cem => "cem",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub step: usize,
    pub policy: EvalPolicy,
    pub mean: f64,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config_hash: String,
    pub env: String,
    pub mode: Mode,
    pub schedule: Schedule,
    pub seed: u64,
    pub series: Vec<EvalPoint>,
    /// Last evaluation mean of a completed run; `-inf` for failed runs.
    pub final_reward: f64,
    pub status: RunStatus,
    pub failure: Option<String>,
}

impl RunRecord {
    pub fn new(config: &AgentConfig, seed: u64) -> Self {
        RunRecord {
            config_hash: config.hash(),
            env: config.env.clone(),
            mode: config.mode,
            schedule: config.schedule,
            seed,
            series: Vec::new(),
            final_reward: f64::NEG_INFINITY,
            status: RunStatus::Completed,
            failure: None,
        }
    }

    pub fn push(&mut self, point: EvalPoint) {
        self.final_reward = point.mean;
        self.series.push(point);
    }

    pub fn fail(&mut self, reason: impl Into<String>) {
        self.status = RunStatus::Failed;
        self.failure = Some(reason.into());
        self.final_reward = f64::NEG_INFINITY;
    }

    /// Best evaluation mean seen during the run.
    pub fn best_reward(&self) -> Option<f64> {
        self.series.iter().map(|p| p.mean).reduce(f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let k = self.series.iter().map(|p| p.returns.len()).max().unwrap_or(0);
        writeln!(w, "{RECORD_HEADER}")?;
        write!(w, "step,policy,eval_mean")?;
        for i in 0..k {
            write!(w, ",return_{i}")?;
        }
        writeln!(w)?;
        for p in &self.series {
            write!(w, "{},{},{}", p.step, p.policy.as_str(), p.mean)?;
            for r in &p.returns {
                write!(w, ",{r}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_series<R: Read>(r: R) -> Result<Vec<EvalPoint>> {
        let mut lines = BufReader::new(r).lines();
        match lines.next().transpose()? {
            Some(l) if l == RECORD_HEADER => {}
            other => {
                return Err(Error::Format(format!(
                    "expected `{RECORD_HEADER}`, found {other:?}"
                )))
            }
        }
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Format("missing column header".into()))?;
        if !header.starts_with("step,policy,eval_mean") {
            return Err(Error::Format(format!("unexpected columns `{header}`")));
        }
        let mut out = Vec::new();
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 3 {
                return Err(Error::Format(format!("short row `{line}`")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad number `{s}` in `{line}`")))
            };
            let policy = match fields[1] {
                "network" => EvalPolicy::Network,
                "cem" => EvalPolicy::Cem,
                other => return Err(Error::Format(format!("unknown policy `{other}`"))),
            };
            out.push(EvalPoint {
                step: fields[0]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad step in `{line}`")))?,
                policy,
                mean: num(fields[2])?,
                returns: fields[3..].iter().map(|s| num(s)).collect::<Result<_>>()?,
            });
        }
        Ok(out)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Loads `record.csv` and `meta.json` from a run directory.
    pub fn load(run_dir: impl AsRef<Path>) -> Result<Self> {
        let dir = run_dir.as_ref();
        let meta = RunMetadata::load(dir.join(META_FILE))?;
        let csv = dir.join(RECORD_FILE);
        if !csv.exists() {
            return Err(Error::MissingArtifact(csv));
        }
        let series = RunRecord::read_series(File::open(csv)?)?;
        Ok(RunRecord {
            config_hash: meta.config_hash,
            env: meta.config.env,
            mode: meta.config.mode,
            schedule: meta.config.schedule,
            seed: meta.seed,
            series,
            final_reward: meta.final_reward.unwrap_or(f64::NEG_INFINITY),
            status: meta.status,
            failure: meta.failure,
        })
    }
}

pub const RECORD_FILE: &str = "record.csv";
pub const META_FILE: &str = "meta.json";

/// JSON sidecar written next to `record.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema: u32,
    pub version: String,
    pub config: AgentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub status: RunStatus,
    /// `None` when the run failed.
    pub final_reward: Option<f64>,
    pub failure: Option<String>,
    pub steps_completed: usize,
    pub critic_updates: u64,
    pub policy_updates: u64,
    pub clamped_actions: u64,
    pub wall_clock_seconds: f64,
}

impl RunMetadata {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}
