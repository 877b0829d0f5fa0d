use std::io::Write;

use rand::RngCore;

use super::{EndKind, Env};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub step: usize,
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub end: EndKind,
}

/// Rolls out one episode, recording the observation each action was taken in.
pub fn record_trajectory<F>(
    env: &mut dyn Env,
    rng: &mut dyn RngCore,
    mut policy: F,
) -> Result<Vec<TrajectoryStep>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut obs = env.reset(rng);
    let mut out = Vec::new();
    loop {
        let action = policy(&obs)?;
        let res = env.step(&action)?;
        out.push(TrajectoryStep {
            step: out.len(),
            observation: obs,
            action,
            reward: res.reward,
            end: res.end,
        });
        if res.end.is_episode_end() {
            return Ok(out);
        }
        obs = res.observation;
    }
}

/// CSV columns: `step, obs_0.., action_0.., reward, end_kind`.
pub fn write_trajectory_csv<W: Write>(w: &mut W, steps: &[TrajectoryStep]) -> Result<()> {
    let (obs, act) = steps
        .first()
        .map_or((0, 0), |s| (s.observation.len(), s.action.len()));
    let mut header = vec!["step".to_string()];
    header.extend((0..obs).map(|i| format!("obs_{i}")));
    header.extend((0..act).map(|i| format!("action_{i}")));
    header.push("reward".into());
    header.push("end_kind".into());
    writeln!(w, "{}", header.join(","))?;
    for s in steps {
        let mut row = vec![s.step.to_string()];
        row.extend(s.observation.iter().map(|v| v.to_string()));
        row.extend(s.action.iter().map(|v| v.to_string()));
        row.push(s.reward.to_string());
        row.push(s.end.as_str().to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
