//! Stability curves: the fraction of runs whose final reward reaches each
//! level of a reward grid.

use crate::error::{Error, Result};
use crate::record::{RunRecord, RunStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityPoint {
    pub level: f64,
    pub fraction: f64,
}

/// Final reward used for stability accounting; failed runs count as `-inf`.
pub fn stability_final(record: &RunRecord) -> f64 {
    match record.status {
        RunStatus::Completed => record.final_reward,
        RunStatus::Failed => f64::NEG_INFINITY,
    }
}

/// Fraction of `finals` that are `>= level`.
pub fn fraction_reaching(finals: &[f64], level: f64) -> f64 {
    finals.iter().filter(|&&f| f >= level).count() as f64 / finals.len() as f64
}

/// Empirical survival function of `finals` on an ascending `levels` grid.
/// NaN finals never reach any level.
pub fn stability_curve(finals: &[f64], levels: &[f64]) -> Result<Vec<StabilityPoint>> {
    if finals.is_empty() {
        return Err(Error::Usage("stability curve needs at least one run".into()));
    }
    if levels.iter().any(|l| l.is_nan()) || levels.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Usage("reward levels must be sorted ascending".into()));
    }
    Ok(levels
        .iter()
        .map(|&level| StabilityPoint {
            level,
            fraction: fraction_reaching(finals, level),
        })
        .collect())
}

pub fn stability_curve_records(records: &[RunRecord], levels: &[f64]) -> Result<Vec<StabilityPoint>> {
    let finals: Vec<f64> = records.iter().map(stability_final).collect();
    stability_curve(&finals, levels)
}

/// `count` evenly spaced levels from `low` to `high` inclusive.
pub fn linear_levels(low: f64, high: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![low],
        _ => (0..count)
            .map(|i| low + (high - low) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// The reward sitting `fraction` of the way from `floor` to `best`.
///
/// With negative rewards "half of the best" is ill-posed, so levels are
/// measured relative to a floor such as the random policy's return:
/// `fraction = 0` is the floor and `fraction = 1` is the best run.
pub fn relative_level(best: f64, floor: f64, fraction: f64) -> f64 {
    floor + fraction * (best - floor)
}

pub fn write_stability_csv<W: std::io::Write + ?Sized>(w: &mut W, curve: &[StabilityPoint]) -> Result<()> {
    writeln!(w, "# cgp stability curve v1")?;
    writeln!(w, "level,fraction")?;
    for p in curve {
        writeln!(w, "{},{}", p.level, p.fraction)?;
    }
    Ok(())
}
