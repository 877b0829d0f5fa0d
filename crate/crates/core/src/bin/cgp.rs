use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use cgp::agents::evaluate;
use cgp::config::AgentConfig;
use cgp::envs::make_env;
use cgp::harness::{
    linear_levels, read_index, run_dir, run_single, run_sweep, runtime_bench, stability_curve,
    write_bench_csv, write_stability_csv, BenchEntry, RunArtifacts, SweepSpec, INDEX_FILE,
};
use cgp::record::RunStatus;
use cgp::{Error, Result};

const OUT_ENV: &str = "CGP_OUT_DIR";

fn config_keys() -> Vec<(String, toml::Value)> {
    let mut table = toml::Table::try_from(AgentConfig::default()).expect("config serializes");
    table.insert("stop_reward".into(), toml::Value::Float(0.0));
    table.into_iter().collect()
}

fn field_args(cmd: Command, fields: &[(String, toml::Value)]) -> Command {
    fields.iter().fold(cmd, |cmd, (key, _)| {
        let key: &'static str = Box::leak(key.clone().into_boxed_str());
        cmd.arg(
            Arg::new(key)
                .long(key)
                .value_name("VALUE")
                .help_heading("Config fields")
                .allow_hyphen_values(true),
        )
    })
}

fn out_arg() -> Arg {
    Arg::new("out")
        .long("out")
        .env(OUT_ENV)
        .default_value("runs")
        .help("Output root directory")
}

fn cli() -> Command {
    let fields = config_keys();
    Command::new("cgp")
        .about("Cross-entropy guided policy training, sweeps and benchmarks")
        .subcommand_required(true)
        .subcommand(field_args(
            Command::new("train")
                .about("Train one run and save its artifacts")
                .arg(Arg::new("config").long("config").help("TOML config file"))
                .arg(Arg::new("seed").long("seed").default_value("0"))
                .arg(out_arg()),
            &fields,
        ))
        .subcommand(
            Command::new("eval")
                .about("Roll out a saved run's policy")
                .arg(Arg::new("run").long("run").required(true).help("Run directory"))
                .arg(Arg::new("episodes").long("episodes").default_value("10"))
                .arg(Arg::new("seed").long("seed").default_value("0"))
                .arg(
                    Arg::new("policy")
                        .long("policy")
                        .value_parser(["network", "cem"])
                        .default_value("network"),
                ),
        )
        .subcommand(field_args(
            Command::new("sweep")
                .about("Run a hyperparameter sweep")
                .arg(Arg::new("spec").long("spec").required(true).help("Sweep TOML file"))
                .arg(Arg::new("parallelism").long("parallelism").default_value("1"))
                .arg(Arg::new("master_seed").long("master_seed"))
                .arg(Arg::new("seeds_per_cell").long("seeds_per_cell"))
                .arg(Arg::new("layout").long("layout").value_parser(["grid", "one_at_a_time"]))
                .arg(out_arg()),
            &fields,
        ))
        .subcommand(
            Command::new("stability")
                .about("Stability curve from a sweep index")
                .arg(Arg::new("index").long("index").required(true).help("index.csv or sweep directory"))
                .arg(Arg::new("mode").long("mode").help("Only runs of this mode"))
                .arg(
                    Arg::new("levels")
                        .long("levels")
                        .allow_hyphen_values(true)
                        .help("Comma-separated ascending levels"),
                )
                .arg(Arg::new("low").long("low").allow_hyphen_values(true))
                .arg(Arg::new("high").long("high").allow_hyphen_values(true))
                .arg(Arg::new("count").long("count").default_value("21"))
                .arg(Arg::new("output").long("output").help("CSV path (default stdout)")),
        )
        .subcommand(
            Command::new("bench")
                .about("Time inference per episode")
                .arg(Arg::new("env").long("env").default_value("pendulum-swingup"))
                .arg(Arg::new("critic").long("critic").help("Critic for the CEM rows"))
                .arg(
                    Arg::new("cem_iterations")
                        .long("cem_iterations")
                        .value_delimiter(',')
                        .default_value("2,4"),
                )
                .arg(Arg::new("cem_samples").long("cem_samples").default_value("64"))
                .arg(Arg::new("cem_elites").long("cem_elites").default_value("6"))
                .arg(
                    Arg::new("policy")
                        .long("policy")
                        .action(ArgAction::Append)
                        .help("LABEL=PATH of a policy network"),
                )
                .arg(Arg::new("episodes").long("episodes").default_value("10"))
                .arg(Arg::new("seed").long("seed").default_value("0"))
                .arg(Arg::new("output").long("output").help("CSV path (default stdout)")),
        )
}

fn parse<T: std::str::FromStr>(m: &ArgMatches, name: &str) -> Result<T> {
    let raw = m.get_one::<String>(name).expect("defaulted argument");
    raw.parse()
        .map_err(|_| Error::Usage(format!("--{name}: cannot parse `{raw}`")))
}

/// Reads a flag value as TOML, falling back to a bare string, and widens
/// integers where the field is a float.
fn flag_value(raw: &str, like: &toml::Value) -> toml::Value {
    let parsed = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    match (like, parsed) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    }
}

fn apply_fields(base: AgentConfig, m: &ArgMatches) -> Result<AgentConfig> {
    let overrides: Vec<(String, toml::Value)> = config_keys()
        .into_iter()
        .filter_map(|(key, like)| {
            m.get_one::<String>(&key)
                .map(|raw| (key.clone(), flag_value(raw, &like)))
        })
        .collect();
    base.with_overrides(overrides.iter().map(|(k, v)| (k.as_str(), v)))
}

fn emit(output: Option<&String>, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match output {
        Some(path) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            write(&mut f)?;
            f.flush()?;
        }
        None => write(&mut std::io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_train(m: &ArgMatches) -> Result<()> {
    let base = match m.get_one::<String>("config") {
        Some(path) => AgentConfig::load(path)?,
        None => AgentConfig::default(),
    };
    let config = apply_fields(base, m)?;
    let seed: u64 = parse(m, "seed")?;
    let out = m.get_one::<String>("out").expect("defaulted");
    let record = run_single(&config, seed, out)?;
    println!("run {}", run_dir(out, &config, seed).display());
    println!("status {}", record.status.as_str());
    println!("final_reward {}", record.final_reward);
    if let Some(reason) = &record.failure {
        println!("failure {reason}");
    }
    Ok(())
}

fn cmd_eval(m: &ArgMatches) -> Result<()> {
    let dir = PathBuf::from(m.get_one::<String>("run").expect("required"));
    let art = RunArtifacts::load(&dir)?;
    let config = &art.metadata.config;
    let mut env = make_env(&config.env)?;
    let episodes: usize = parse(m, "episodes")?;
    let seed: u64 = parse(m, "seed")?;
    let use_cem = m.get_one::<String>("policy").map(String::as_str) == Some("cem");
    let eval = if use_cem || art.policy.is_none() {
        let cem = config.cem_config(env.spec().action_dim);
        let mut rng = cgp::seeding::stream_rng(seed, cgp::seeding::STREAM_EVAL_CEM);
        evaluate(env.as_mut(), |s| cgp::cem::cem_policy(s, &art.critic1, &cem, &mut rng), episodes, seed)?
    } else {
        let policy = art.policy.as_ref().expect("checked");
        evaluate(
            env.as_mut(),
            |s| Ok(policy.forward(ndarray::aview1(s).insert_axis(ndarray::Axis(0)))?.row(0).to_vec()),
            episodes,
            seed,
        )?
    };
    println!("episode,return");
    for (i, r) in eval.returns.iter().enumerate() {
        println!("{i},{r}");
    }
    println!("mean,{}", eval.mean);
    Ok(())
}

fn cmd_sweep(m: &ArgMatches) -> Result<()> {
    let mut spec = SweepSpec::load(m.get_one::<String>("spec").expect("required"))?;
    spec.base = apply_fields(spec.base, m)?;
    if m.get_one::<String>("master_seed").is_some() {
        spec.master_seed = parse(m, "master_seed")?;
    }
    if m.get_one::<String>("seeds_per_cell").is_some() {
        spec.seeds_per_cell = parse(m, "seeds_per_cell")?;
    }
    if let Some(layout) = m.get_one::<String>("layout") {
        spec.layout = toml::Value::String(layout.clone())
            .try_into()
            .map_err(|_| Error::Config {
                field: "layout".into(),
                message: format!("unknown layout `{layout}`"),
            })?;
    }
    let cells = spec.cells()?;
    eprintln!(
        "launching {} cells x {} seeds = {} runs",
        cells.len(),
        spec.seeds_per_cell,
        cells.len() * spec.seeds_per_cell
    );
    let out = m.get_one::<String>("out").expect("defaulted");
    let entries = run_sweep(&spec, parse(m, "parallelism")?, out)?;
    let failed = entries.iter().filter(|e| e.record.status == RunStatus::Failed).count();
    println!("index {}", Path::new(out).join(INDEX_FILE).display());
    println!("runs {} failed {}", entries.len(), failed);
    Ok(())
}

fn cmd_stability(m: &ArgMatches) -> Result<()> {
    let mut path = PathBuf::from(m.get_one::<String>("index").expect("required"));
    if path.is_dir() {
        path = path.join(INDEX_FILE);
    }
    let mut rows = read_index(&path)?;
    if let Some(mode) = m.get_one::<String>("mode") {
        rows.retain(|r| &r.mode == mode);
    }
    let finals: Vec<f64> = rows
        .iter()
        .map(|r| match r.status {
            RunStatus::Completed => r.final_reward,
            RunStatus::Failed => f64::NEG_INFINITY,
        })
        .collect();
    let levels = match m.get_one::<String>("levels") {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Usage(format!("bad level `{s}`"))))
            .collect::<Result<Vec<_>>>()?,
        None => {
            let finite: Vec<f64> = finals.iter().copied().filter(|f| f.is_finite()).collect();
            let lo = match m.get_one::<String>("low") {
                Some(_) => parse(m, "low")?,
                None => finite.iter().copied().fold(f64::INFINITY, f64::min),
            };
            let hi = match m.get_one::<String>("high") {
                Some(_) => parse(m, "high")?,
                None => finite.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::Usage("no completed runs; pass --levels".into()));
            }
            linear_levels(lo, hi, parse(m, "count")?)
        }
    };
    let curve = stability_curve(&finals, &levels)?;
    emit(m.get_one::<String>("output"), |w| write_stability_csv(w, &curve))
}

fn cmd_bench(m: &ArgMatches) -> Result<()> {
    let env: String = parse(m, "env")?;
    let mut entries = vec![BenchEntry::random()];
    if let Some(path) = m.get_one::<String>("critic") {
        let critic = cgp::nn::DenseNet::load(path)?;
        let spec = make_env(&env)?.spec().clone();
        let base = cgp::cem::CemConfig {
            samples: parse(m, "cem_samples")?,
            elites: parse(m, "cem_elites")?,
            ..cgp::cem::CemConfig::new(spec.action_dim)
        };
        for it in m.get_many::<String>("cem_iterations").into_iter().flatten() {
            let it: usize = it
                .parse()
                .map_err(|_| Error::Usage(format!("--cem_iterations: bad value `{it}`")))?;
            entries.push(BenchEntry::cem(critic.clone(), base, it));
        }
    }
    for item in m.get_many::<String>("policy").into_iter().flatten() {
        let (label, path) = item
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--policy expects LABEL=PATH, got `{item}`")))?;
        entries.push(BenchEntry::load_network(label, path)?);
    }
    let rows = runtime_bench(&env, &entries, parse(m, "episodes")?, parse(m, "seed")?)?;
    emit(m.get_one::<String>("output"), |w| write_bench_csv(w, &rows))
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let result = match matches.subcommand() {
        Some(("train", m)) => cmd_train(m),
        Some(("eval", m)) => cmd_eval(m),
        Some(("sweep", m)) => cmd_sweep(m),
        Some(("stability", m)) => cmd_stability(m),
        Some(("bench", m)) => cmd_bench(m),
        _ => unreachable!("subcommand required"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
