//! Trains CGP on an environment and prints the evaluation curve.
//!
//! ```text
//! cargo run --release --example train_cgp -- [env] [steps] [seed] [width]
//! ```

use cgp::agents::train;
use cgp::config::AgentConfig;

fn main() -> cgp::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let env = args.first().cloned().unwrap_or_else(|| "point-mass-reacher".into());
    let steps: usize = args.get(1).map_or(20_000, |s| s.parse().expect("steps"));
    let seed: u64 = args.get(2).map_or(0, |s| s.parse().expect("seed"));
    let width: usize = args.get(3).map_or(32, |s| s.parse().expect("width"));

    let config = AgentConfig {
        env,
        hidden_width: width,
        total_steps: steps,
        initial_random_steps: 1_000,
        eval_every: 2_000,
        ..AgentConfig::default()
    };
    let out = train(&config, seed)?;
    for p in &out.record.series {
        println!("{:>7} {:>8} {:>10.2}", p.step, p.policy.as_str(), p.mean);
    }
    println!(
        "status {} after {} steps in {:.1}s",
        out.record.status.as_str(),
        out.steps_completed,
        out.wall_clock_seconds
    );
    Ok(())
}
