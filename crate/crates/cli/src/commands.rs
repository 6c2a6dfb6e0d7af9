use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use autopark::config::RunConfig;
use autopark::env::{observe, read_trace, write_trace, EnvConfig, Observation};
use autopark::eval::{
    attention as attention_map, eval_scenarios, evaluate as run_evaluation, replay as replay_trace, run_traced,
    write_grid_csv, DeepController, EvaluationReport, LatencyStats, Policy,
};
use autopark::nn::{Checkpoint, Network};
use autopark::ppo::{EpochMetrics, TrainingLog, Trainer};
use autopark::world::{save_scenarios, Scenario};
use autopark::{Error, Result};
use serde::Serialize;

use crate::Common;

/// 2: bad configuration or input, 3: training diverged, 4: I/O or corrupt files.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ConfigInvalid(_) | Error::GenerationFailed { .. } | Error::ShapeMismatch(_) | Error::ScenarioInvalid(_) => 2,
        Error::DivergenceDetected { .. } => 3,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::TraceCorrupt(_) | Error::CheckpointInvalid(_) => 4,
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))
}

fn print_epoch(m: &EpochMetrics) {
    eprintln!(
        "epoch {:>4}  phase {}  reward {:>8.2}  success {:>5.1}%  collision {:>5.1}%  timeout {:>5.1}%  overspeed {:>5.1}%",
        m.epoch,
        m.phase,
        m.mean_reward,
        100.0 * m.success,
        100.0 * m.collision,
        100.0 * m.timeout,
        100.0 * m.overspeed
    );
}

pub fn train(common: &Common, epochs: Option<usize>, resume: Option<&Path>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(e) = epochs {
        cfg.train.max_epochs = e;
    }
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.toml"), cfg.to_toml())?;

    let mut trainer = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let log_path = cfg.out.join("train_log.csv");
            let history = if log_path.exists() { TrainingLog::read(&log_path)? } else { Vec::new() };
            let done = ck.meta.epoch as usize;
            if history.len() < done {
                return Err(Error::ConfigInvalid(format!(
                    "{} holds {} epochs but the checkpoint is at epoch {done}",
                    log_path.display(),
                    history.len()
                )));
            }
            // Drop log rows written after the checkpoint so the file stays in step.
            let history = history[..done].to_vec();
            let mut log = TrainingLog::open(&log_path, false)?;
            for row in &history {
                log.write(row)?;
            }
            Trainer::resume(cfg.train_setup(), ck, &history)?
        }
        None => Trainer::new(cfg.train_setup())?,
    };
    let outcome = trainer.run(Some(&cfg.out), print_epoch)?;
    eprintln!(
        "finished after {} epochs ({}); outputs in {}",
        outcome.epochs,
        if outcome.converged { "converged" } else { "epoch limit" },
        cfg.out.display()
    );
    Ok(())
}

enum Evaluated {
    Net(Network),
    Controller(Box<DeepController>),
}

impl Evaluated {
    fn policy(&self) -> &dyn Policy {
        match self {
            Evaluated::Net(n) => n,
            Evaluated::Controller(c) => c.as_ref(),
        }
    }

    fn timed_call(&self, obs: &Observation) -> Result<Duration> {
        match self {
            Evaluated::Net(n) => {
                let start = Instant::now();
                n.policy(obs)?;
                Ok(start.elapsed())
            }
            Evaluated::Controller(c) => Ok(c.control(obs)?.latency),
        }
    }
}

fn checkpoint_arg(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(arg);
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| arg.to_string());
            (name, path)
        }
    }
}

#[derive(Serialize)]
struct OutcomeRow<'a> {
    policy: &'a str,
    scenario_seed: u64,
    steps: usize,
    total_reward: f64,
    termination: &'a str,
}

#[derive(Serialize)]
struct LatencyRow<'a> {
    policy: &'a str,
    call: usize,
    scenario_seed: u64,
    micros: f64,
}

/// Upper bound on the single-call latency probes per policy.
const LATENCY_CALLS: usize = 1000;

pub fn evaluate(
    common: &Common,
    checkpoints: &[String],
    controller: Option<&[PathBuf]>,
    tasks: Option<usize>,
    traces: usize,
) -> Result<()> {
    let cfg = load_config(common)?;
    let count = tasks.unwrap_or(cfg.eval.tasks);
    if count == 0 {
        return Err(Error::ConfigInvalid("--tasks must be at least 1".into()));
    }
    let mut policies: Vec<(String, Evaluated)> = Vec::new();
    for arg in checkpoints {
        let (name, path) = checkpoint_arg(arg);
        policies.push((name, Evaluated::Net(Checkpoint::load(&path)?.actor)));
    }
    if let Some([driver, stopper]) = controller {
        let c = DeepController::new(Checkpoint::load(driver)?.actor, Checkpoint::load(stopper)?.actor)?;
        policies.push(("controller".into(), Evaluated::Controller(Box::new(c))));
    }
    if policies.is_empty() {
        return Err(Error::ConfigInvalid("give at least one --checkpoint or --controller".into()));
    }

    let env: EnvConfig = cfg.env();
    let scenarios = eval_scenarios(&cfg.scenario, cfg.seed, count)?;
    let pool = pool(cfg.workers)?;
    let out = &cfg.out;
    fs::create_dir_all(out)?;

    let mut results = Vec::new();
    let mut outcomes = csv::Writer::from_path(out.join("outcomes.csv"))?;
    let mut latency = csv::Writer::from_path(out.join("latency.csv"))?;
    for (name, p) in &policies {
        let res = run_evaluation(p.policy(), &scenarios, &env, &pool)?;
        for o in &res {
            outcomes.serialize(OutcomeRow {
                policy: name,
                scenario_seed: o.scenario_seed,
                steps: o.steps,
                total_reward: o.total_reward,
                termination: o.termination.as_str(),
            })?;
        }
        let mut samples = Vec::new();
        for (i, s) in scenarios.iter().take(LATENCY_CALLS).enumerate() {
            let d = p.timed_call(&observe(&s.start, s, &env))?;
            latency.serialize(LatencyRow { policy: name, call: i, scenario_seed: s.seed, micros: d.as_secs_f64() * 1e6 })?;
            samples.push(d);
        }
        if let Some(l) = LatencyStats::from_samples(&samples) {
            eprintln!(
                "{name}: inference latency over {} calls: mean {:.3} ms, p99 {:.3} ms, max {:.3} ms",
                l.calls, l.mean_ms, l.p99_ms, l.max_ms
            );
        }
        if traces > 0 {
            fs::create_dir_all(out.join("traces"))?;
            fs::create_dir_all(out.join("scenarios"))?;
            for s in scenarios.iter().take(traces) {
                let (_, trace) = run_traced(p.policy(), s, &env)?;
                let file = File::create(out.join("traces").join(format!("{name}-{}.csv", s.seed)))?;
                write_trace(BufWriter::new(file), &trace)?;
                s.save(&out.join("scenarios").join(format!("{}.json", s.seed)))?;
            }
        }
        results.push((name.clone(), res));
    }
    outcomes.flush()?;
    latency.flush()?;

    let report = EvaluationReport::new(&results);
    report.write_csv(File::create(out.join("report.csv"))?)?;
    fs::write(out.join("report.txt"), report.to_string())?;
    print!("{report}");
    Ok(())
}

pub fn replay(common: &Common, trace: &Path, scenario: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    let records = read_trace(File::open(trace)?)?;
    let scenario = Scenario::load(scenario)?;
    let plot = replay_trace(&records, &scenario, &cfg.env())?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("replay.json"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&out, serde_json::to_string_pretty(&plot)?)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

pub fn attention(common: &Common, checkpoint: &Path, scenario: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    let net = Checkpoint::load(checkpoint)?.actor;
    let scenario = Scenario::load(scenario)?;
    let obs = observe(&scenario.start, &scenario, &cfg.env());
    let map = attention_map(&net, &obs)?;
    let out = &cfg.out;
    fs::create_dir_all(out)?;
    write_grid_csv(&obs.grid, File::create(out.join("perception.csv"))?)?;
    map.write_csv(File::create(out.join("attention.csv"))?)?;
    eprintln!("wrote {}x{} attention map to {}", map.rows, map.cols, out.join("attention.csv").display());
    Ok(())
}

pub fn gen_scenarios(common: &Common, tasks: Option<usize>) -> Result<()> {
    let cfg = load_config(common)?;
    let count = tasks.unwrap_or(cfg.eval.tasks);
    let scenarios = eval_scenarios(&cfg.scenario, cfg.seed, count)?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("scenarios.json"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_scenarios(&out, &scenarios)?;
    eprintln!("wrote {count} scenarios to {}", out.display());
    Ok(())
}
