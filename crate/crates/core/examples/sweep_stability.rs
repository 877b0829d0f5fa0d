//! A small learning-rate sweep on the point-mass task followed by its
//! stability curve.
//!
//! ```text
//! cargo run --release --example sweep_stability -- out/sweep
//! ```

use cgp::config::AgentConfig;
use cgp::harness::{
    linear_levels, run_sweep, stability_curve_records, write_stability_csv, SweepAxis, SweepSpec,
};

fn main() -> cgp::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "runs/sweep-example".into());
    let spec = SweepSpec {
        seeds_per_cell: 2,
        ..SweepSpec::new(AgentConfig {
            env: "point-mass-reacher".into(),
            hidden_width: 32,
            total_steps: 6_000,
            initial_random_steps: 1_000,
            eval_every: 3_000,
            ..AgentConfig::default()
        })
    }
    .with_axis(SweepAxis::values("q_lr", &[1e-2, 1e-3]));
    println!("{} runs", spec.run_count()?);
    let entries = run_sweep(&spec, 1, &out)?;
    for e in &entries {
        println!("{:<12} seed {:>20}  {:>8.2}  {}", e.label, e.seed, e.record.final_reward, e.record.status.as_str());
    }
    let records: Vec<_> = entries.into_iter().map(|e| e.record).collect();
    let curve = stability_curve_records(&records, &linear_levels(-200.0, 0.0, 11))?;
    write_stability_csv(&mut std::io::stdout(), &curve)?;
    println!("index written to {out}/index.csv");
    Ok(())
}
