//! Hyperparameter sweeps.
//!
//! A sweep file is TOML:
//!
//! ```toml
//! master_seed = 0
//! seeds_per_cell = 4
//! layout = "grid"            # or "one_at_a_time"
//!
//! [base]                     # any AgentConfig fields
//! env = "point-mass-reacher"
//! total_steps = 30000
//!
//! [[axes]]
//! name = "lr_batch"
//! points = [
//!   { q_lr = 0.01, policy_lr = 0.01, batch_size = 32 },
//!   { q_lr = 0.001, policy_lr = 0.001, batch_size = 32 },
//! ]
//! ```
//!
//! `grid` runs the Cartesian product of all axes; `one_at_a_time` varies one
//! axis at a time around the base. Replicate `r` of cell `c` uses seed
//! `derive_seed(master_seed, [c, r])`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{relative_run_dir, save_outcome};
use crate::agents::train;
use crate::config::AgentConfig;
use crate::error::{Error, Result};
use crate::record::{RunRecord, RunStatus};
use crate::seeding::derive_seed;

pub const INDEX_FILE: &str = "index.csv";
pub const INDEX_HEADER: &str = "# cgp sweep index v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepLayout {
    #[default]
    Grid,
    OneAtATime,
}

/// One named axis: each point is a set of config field overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub name: String,
    pub points: Vec<toml::Table>,
}

impl SweepAxis {
    /// One field taking each of `values`.
    pub fn values<V: Into<toml::Value> + Clone>(field: &str, values: &[V]) -> Self {
        SweepAxis {
            name: field.to_string(),
            points: values
                .iter()
                .map(|v| {
                    let mut t = toml::Table::new();
                    t.insert(field.to_string(), v.clone().into());
                    t
                })
                .collect(),
        }
    }

    /// Learning rate (critic and policy together) crossed with batch size.
    pub fn learning_rate_batch(rates: &[f64], batches: &[i64]) -> Self {
        let mut points = Vec::new();
        for &lr in rates {
            for &b in batches {
                let mut t = toml::Table::new();
                t.insert("q_lr".into(), lr.into());
                t.insert("policy_lr".into(), lr.into());
                t.insert("batch_size".into(), b.into());
                points.push(t);
            }
        }
        SweepAxis {
            name: "lr_batch".into(),
            points,
        }
    }

    /// Exploration and target smoothing noise set to the same scale.
    pub fn noise(scales: &[f64]) -> Self {
        let points = scales
            .iter()
            .map(|&n| {
                let mut t = toml::Table::new();
                t.insert("exploration_noise".into(), n.into());
                t.insert("policy_noise".into(), n.into());
                t
            })
            .collect();
        SweepAxis {
            name: "noise".into(),
            points,
        }
    }

    pub fn reference_lr_batch() -> Self {
        Self::learning_rate_batch(&[0.01, 0.001, 0.0001], &[256, 128, 64, 32])
    }

    pub fn reference_width() -> Self {
        Self::values("hidden_width", &[512i64, 256, 128, 32])
    }

    pub fn reference_random_steps() -> Self {
        Self::values("initial_random_steps", &[0i64, 1000, 10000])
    }

    pub fn reference_noise() -> Self {
        Self::noise(&[0.05, 0.1, 0.2, 0.3])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_seeds")]
    pub seeds_per_cell: usize,
    #[serde(default)]
    pub layout: SweepLayout,
    #[serde(default)]
    pub base: AgentConfig,
    #[serde(default)]
    pub axes: Vec<SweepAxis>,
}

fn default_seeds() -> usize {
    4
}

/// A concrete configuration and the overrides that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    pub label: String,
    pub config: AgentConfig,
}

impl SweepSpec {
    pub fn new(base: AgentConfig) -> Self {
        SweepSpec {
            master_seed: 0,
            seeds_per_cell: default_seeds(),
            layout: SweepLayout::Grid,
            base,
            axes: Vec::new(),
        }
    }

    pub fn with_axis(mut self, axis: SweepAxis) -> Self {
        self.axes.push(axis);
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| {
            let field = e.message().split('`').nth(1).unwrap_or("sweep").to_string();
            Error::config(&field, e.message())
        })?;
        spec.cells()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep spec serializes")
    }

    /// Expands the axes into validated cells.
    pub fn cells(&self) -> Result<Vec<SweepCell>> {
        if self.seeds_per_cell == 0 {
            return Err(Error::config("seeds_per_cell", "must be at least 1"));
        }
        self.base.validate()?;
        if let Some(axis) = self.axes.iter().find(|a| a.points.is_empty()) {
            return Err(Error::config("axes", format!("axis `{}` has no points", axis.name)));
        }
        let combos: Vec<Vec<&toml::Table>> = match self.layout {
            SweepLayout::Grid => self.axes.iter().fold(vec![Vec::new()], |acc, axis| {
                acc.iter()
                    .flat_map(|prefix| {
                        axis.points.iter().map(move |p| {
                            let mut v = prefix.clone();
                            v.push(p);
                            v
                        })
                    })
                    .collect()
            }),
            SweepLayout::OneAtATime => {
                let v: Vec<Vec<&toml::Table>> = self
                    .axes
                    .iter()
                    .flat_map(|a| a.points.iter().map(|p| vec![p]))
                    .collect();
                if v.is_empty() {
                    vec![Vec::new()]
                } else {
                    v
                }
            }
        };
        combos
            .into_iter()
            .enumerate()
            .map(|(index, tables)| {
                let pairs: Vec<(&str, &toml::Value)> = tables
                    .iter()
                    .flat_map(|t| t.iter().map(|(k, v)| (k.as_str(), v)))
                    .collect();
                let label = pairs
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(";");
                Ok(SweepCell {
                    index,
                    label: if label.is_empty() { "base".into() } else { label },
                    config: self.base.with_overrides(pairs)?,
                })
            })
            .collect()
    }

    /// Number of runs the sweep will launch.
    pub fn run_count(&self) -> Result<usize> {
        Ok(self.cells()?.len() * self.seeds_per_cell)
    }
}

/// One finished (or failed) sweep run.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub cell: usize,
    pub replicate: usize,
    pub seed: u64,
    pub label: String,
    pub config: AgentConfig,
    pub run_dir: PathBuf,
    pub record: RunRecord,
}

/// Runs every cell × replicate once, `parallelism` runs at a time, and
/// writes `index.csv`. Hard errors inside a run (including IO) mark that run
/// failed; the sweep carries on.
pub fn run_sweep(spec: &SweepSpec, parallelism: usize, out_dir: impl AsRef<Path>) -> Result<Vec<SweepEntry>> {
    let out_dir = out_dir.as_ref();
    let cells = spec.cells()?;
    std::fs::create_dir_all(out_dir)?;
    let jobs: Vec<(&SweepCell, usize)> = cells
        .iter()
        .flat_map(|c| (0..spec.seeds_per_cell).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    let entries: Vec<SweepEntry> = pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, replicate)| run_job(spec, cell, replicate, out_dir))
            .collect()
    });
    let mut w = BufWriter::new(File::create(out_dir.join(INDEX_FILE))?);
    write_index(&mut w, &entries)?;
    w.flush()?;
    Ok(entries)
}

fn run_job(spec: &SweepSpec, cell: &SweepCell, replicate: usize, out_dir: &Path) -> SweepEntry {
    let seed = derive_seed(spec.master_seed, &[cell.index as u64, replicate as u64]);
    let rel = relative_run_dir(&cell.config, seed);
    let dir = out_dir.join(&rel);
    let record = match train(&cell.config, seed) {
        Ok(outcome) => match save_outcome(&dir, &cell.config, seed, &outcome) {
            Ok(()) => outcome.record,
            Err(e) => failed(&cell.config, seed, format!("saving artifacts: {e}")),
        },
        Err(e) => {
            let record = failed(&cell.config, seed, e.to_string());
            // keep a record on disk even when training never started
            let _ = std::fs::create_dir_all(&dir).and_then(|_| {
                record
                    .save_csv(dir.join(crate::record::RECORD_FILE))
                    .map_err(std::io::Error::other)
            });
            record
        }
    };
    SweepEntry {
        cell: cell.index,
        replicate,
        seed,
        label: cell.label.clone(),
        config: cell.config.clone(),
        run_dir: rel,
        record,
    }
}

fn failed(config: &AgentConfig, seed: u64, reason: String) -> RunRecord {
    let mut r = RunRecord::new(config, seed);
    r.fail(reason);
    r
}

/// `index.csv`: one row per run in (cell, replicate) order.
pub fn write_index<W: Write>(w: &mut W, entries: &[SweepEntry]) -> Result<()> {
    writeln!(w, "{INDEX_HEADER}")?;
    writeln!(
        w,
        "cell,replicate,seed,config_hash,env,mode,schedule,status,final_reward,best_reward,label,run_dir"
    )?;
    let mut sorted: Vec<&SweepEntry> = entries.iter().collect();
    sorted.sort_by_key(|e| (e.cell, e.replicate));
    for e in sorted {
        let r = &e.record;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            e.cell,
            e.replicate,
            e.seed,
            r.config_hash,
            r.env,
            r.mode,
            r.schedule,
            r.status.as_str(),
            r.final_reward,
            r.best_reward().unwrap_or(f64::NEG_INFINITY),
            e.label,
            e.run_dir.display()
        )?;
    }
    Ok(())
}

/// Row of `index.csv` as read back by the `stability` verb.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexRow {
    pub cell: usize,
    pub replicate: usize,
    pub seed: u64,
    pub config_hash: String,
    pub mode: String,
    pub status: RunStatus,
    pub final_reward: f64,
    pub best_reward: f64,
    pub run_dir: PathBuf,
}

pub fn read_index(path: impl AsRef<Path>) -> Result<Vec<IndexRow>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(INDEX_HEADER) {
        return Err(Error::Format(format!("{} is not a sweep index", path.display())));
    }
    lines.next();
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 12 {
                return Err(Error::Format(format!("index row `{line}`")));
            }
            let bad = || Error::Format(format!("index row `{line}`"));
            Ok(IndexRow {
                cell: f[0].parse().map_err(|_| bad())?,
                replicate: f[1].parse().map_err(|_| bad())?,
                seed: f[2].parse().map_err(|_| bad())?,
                config_hash: f[3].to_string(),
                mode: f[5].to_string(),
                status: match f[7] {
                    "completed" => RunStatus::Completed,
                    "failed" => RunStatus::Failed,
                    _ => return Err(bad()),
                },
                final_reward: f[8].parse().map_err(|_| bad())?,
                best_reward: f[9].parse().map_err(|_| bad())?,
                run_dir: PathBuf::from(f[11]),
            })
        })
        .collect()
}
