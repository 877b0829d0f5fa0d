//! Rolls out a hand-written energy-pumping swing-up controller on the
//! pendulum and writes the trajectory as CSV.
//!
//! ```text
//! cargo run --example pendulum_rollout -- trajectory.csv
//! ```

use cgp::envs::{record_trajectory, write_trajectory_csv, Env, Pendulum, PendulumInit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn swing_up(obs: &[f64]) -> Vec<f64> {
    let (cos, sin, vel) = (obs[0], obs[1], obs[2]);
    let theta = sin.atan2(cos);
    let torque = if cos > 0.85 {
        -(10.0 * theta + 2.0 * vel)
    } else {
        // pump toward the upright energy level
        let energy = 0.5 * vel * vel + 15.0 * cos;
        (15.0 - energy) * if vel >= 0.0 { 1.0 } else { -1.0 }
    };
    vec![(torque / Pendulum::MAX_TORQUE).clamp(-1.0, 1.0)]
}

fn main() -> cgp::Result<()> {
    let mut env = Pendulum::new().with_init(PendulumInit::DownwardRest);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let steps = record_trajectory(&mut env, &mut rng, |o| Ok(swing_up(o)))?;
    let total: f64 = steps.iter().map(|s| s.reward).sum();
    println!("{} steps, return {total:.2}, clamped actions {}", steps.len(), env.clamped_actions());
    if let Some(path) = std::env::args().nth(1) {
        let mut file = std::fs::File::create(&path)?;
        write_trajectory_csv(&mut file, &steps)?;
        println!("wrote {path}");
    }
    Ok(())
}
