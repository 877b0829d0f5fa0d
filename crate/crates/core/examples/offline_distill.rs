//! Offline distillation: train the critic with the CEM policy only, then fit
//! CGP and QGP policy networks against the frozen critic and buffer and
//! compare them with the CEM policy they replace.

use cgp::agents::{evaluate, train};
use cgp::config::{AgentConfig, Mode, Schedule};
use cgp::envs::make_env;
use cgp::seeding::{stream_rng, STREAM_EVAL_CEM};

fn main() -> cgp::Result<()> {
    let steps: usize = std::env::args()
        .nth(1)
        .map_or(15_000, |s| s.parse().expect("steps"));
    let base = AgentConfig {
        env: "pendulum-swingup".into(),
        schedule: Schedule::Offline,
        hidden_width: 32,
        total_steps: steps,
        initial_random_steps: 1_000,
        eval_every: 5_000,
        offline_updates: 5_000,
        offline_window: 500,
        ..AgentConfig::default()
    };
    for mode in [Mode::Cgp, Mode::Qgp] {
        let out = train(&AgentConfig { mode, ..base.clone() }, 0)?;
        let report = out.distill.as_ref().expect("offline schedule distills");
        let agent = &out.agent;
        let mut env = make_env(&base.env)?;
        let mut rng = stream_rng(1, STREAM_EVAL_CEM);
        let cem = evaluate(env.as_mut(), |s| agent.act_cem(s, &mut rng), 10, 1)?;
        let net = evaluate(env.as_mut(), |s| agent.act_network(s), 10, 1)?;
        println!(
            "{mode}: {} distillation updates (early stop: {}), CEM policy {:.1}, network {:.1}",
            report.updates, report.stopped_early, cem.mean, net.mean
        );
    }
    Ok(())
}
