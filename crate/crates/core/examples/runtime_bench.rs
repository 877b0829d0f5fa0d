//! Inference cost per episode: random actions, CEM with 2 and 4 iterations
//! over a critic, and the distilled policy network.

use cgp::agents::train;
use cgp::config::AgentConfig;
use cgp::harness::{runtime_bench, write_bench_csv, BenchEntry};

fn main() -> cgp::Result<()> {
    let config = AgentConfig {
        hidden_width: 32,
        total_steps: 3_000,
        initial_random_steps: 1_000,
        eval_every: 3_000,
        ..AgentConfig::default()
    };
    let agent = train(&config, 0)?.agent;
    let entries = [
        BenchEntry::random(),
        BenchEntry::cem(agent.critic.q1.clone(), agent.cem, 2),
        BenchEntry::cem(agent.critic.q1.clone(), agent.cem, 4),
        BenchEntry::network("cgp", agent.policy_head()?.net.clone()),
    ];
    let rows = runtime_bench(&config.env, &entries, 10, 0)?;
    write_bench_csv(&mut std::io::stdout(), &rows)?;
    Ok(())
}
