//! `fbft`: run, sweep, replay and check simulated consensus runs.
//!
//! Exit codes: 0 ok, 1 property violation or digest mismatch, 2 usage or
//! config error.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use fallback_bft::analysis::{
    check_safety, fallback_stats, linear_fit, measure, power_fit, AnalysisError, MetricsReport, SafetyReport,
};
use fallback_bft::scenario::{Scenario, ScenarioError};
use fallback_bft::simnet::{replay, run, SimConfig, SimError, Trace, TraceError};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Parser)]
#[command(name = "fbft", version, about = "Simulate and check a chained BFT protocol with asynchronous fallback")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one seed and report safety and metrics.
    Run(RunArgs),
    /// Run every seed and committee size of a scenario and aggregate.
    Sweep(SweepArgs),
    /// Re-execute a trace against its recorded deliveries and compare digests.
    Replay(TraceArgs),
    /// Check a stored trace without re-executing it.
    Check(TraceArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    horizon: Option<u64>,
    /// Directory for traces and reports, one subdirectory per seed.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Half-open range `a..b`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Range<u64>>,
}

#[derive(Args)]
struct TraceArgs {
    trace: PathBuf,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {err}")]
    Io { path: PathBuf, err: std::io::Error },
    #[error("safety violated")]
    Violation,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Violation | CliError::Sim(SimError::DigestMismatch { .. }) => 1,
            _ => 2,
        }
    }
}

fn parse_seeds(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or("expected a..b")?;
    let a: u64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a >= b {
        return Err(format!("empty seed range {a}..{b}"));
    }
    Ok(a..b)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |err| CliError::Io { path: path.to_path_buf(), err }
}

fn load(common: &Common) -> Result<Scenario, CliError> {
    let mut sc = Scenario::load(&common.config)?;
    if let Some(h) = common.horizon {
        sc.sim.horizon = h;
    }
    if common.out.is_some() {
        sc.out.clone_from(&common.out);
    }
    sc.sim.validate().map_err(ScenarioError::from)?;
    Ok(sc)
}

struct Point {
    cfg: SimConfig,
    safety: Result<SafetyReport, AnalysisError>,
    metrics: MetricsReport,
    digest: String,
}

fn execute(cfg: SimConfig, dir: Option<&Path>) -> Result<Point, CliError> {
    let trace = run(cfg.clone())?;
    let safety = check_safety(&trace);
    let metrics = measure(&trace);
    let p = Point { cfg, safety, metrics, digest: trace.digest().to_string() };
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let tp = dir.join("trace.jsonl");
        let f = File::create(&tp).map_err(io_err(&tp))?;
        trace.write_jsonl(BufWriter::new(f)).map_err(io_err(&tp))?;
        let rp = dir.join("report.txt");
        fs::write(&rp, render(&p.report_lines(), false)).map_err(io_err(&rp))?;
    }
    Ok(p)
}

impl Point {
    fn passed(&self) -> bool {
        matches!(&self.safety, Ok(s) if s.passed())
    }

    fn report_lines(&self) -> Vec<(String, String)> {
        let config = serde_json_string(&self.cfg);
        let mut kv = vec![
            ("seed".to_string(), self.cfg.seed().to_string()),
            ("config".to_string(), config),
            ("trace.digest".to_string(), self.digest.clone()),
        ];
        match &self.safety {
            Ok(s) => kv.extend(s.to_kv()),
            Err(e) => kv.push(("safety.error".into(), e.to_string())),
        }
        kv.extend(self.metrics.to_kv());
        kv
    }
}

fn serde_json_string(cfg: &SimConfig) -> String {
    serde_json::to_string(cfg).expect("config serializes")
}

fn timestamp() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    format!("timestamp={secs}\n")
}

fn render(kv: &[(String, String)], stamp: bool) -> String {
    let mut s = if stamp { timestamp() } else { String::new() };
    for (k, v) in kv {
        s.push_str(k);
        s.push('=');
        s.push_str(v);
        s.push('\n');
    }
    s
}

fn emit(quiet: bool, kv: &[(String, String)]) {
    if !quiet {
        let mut out = std::io::stdout().lock();
        let _ = out.write_all(render(kv, true).as_bytes());
    }
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let sc = load(&args.common)?;
    let seed = args.seed.unwrap_or_else(|| sc.seed_list()[0]);
    let dir = sc.out.as_ref().map(|o| o.join(format!("seed-{seed}")));
    let p = execute(sc.config_for(seed), dir.as_deref())?;
    emit(args.common.quiet, &p.report_lines());
    if let Err(e) = &p.safety {
        log::error!("{e}");
    }
    if p.passed() {
        Ok(())
    } else {
        Err(CliError::Violation)
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let mut sc = load(&args.common)?;
    if let Some(r) = args.seeds {
        sc.seeds = Some(r);
    }
    let seeds = sc.seed_list();
    let ns = if sc.sweep_n.is_empty() { vec![sc.sim.replica.n] } else { sc.sweep_n.clone() };
    let mut jobs = Vec::new();
    for &n in &ns {
        for &seed in &seeds {
            jobs.push((n, seed, sc.config_for_n(n, seed)?));
        }
    }
    let multi_n = ns.len() > 1;
    let out = sc.out.clone();
    let results: Vec<(usize, u64, Result<Point, CliError>)> = jobs
        .into_par_iter()
        .map(|(n, seed, cfg)| {
            let dir = out.as_ref().map(|o| {
                if multi_n {
                    o.join(format!("n-{n}")).join(format!("seed-{seed}"))
                } else {
                    o.join(format!("seed-{seed}"))
                }
            });
            (n, seed, execute(cfg, dir.as_deref()))
        })
        .collect();

    let mut kv = Vec::new();
    let mut violations = 0usize;
    let mut errors = 0usize;
    let mut per_n: Vec<(f64, f64)> = Vec::new();
    let mut reports = Vec::new();
    for &n in &ns {
        let mut mpc = Vec::new();
        for (pn, seed, res) in &results {
            if *pn != n {
                continue;
            }
            let key = format!("point.n{n}.seed{seed}");
            match res {
                Ok(p) => {
                    violations += usize::from(!p.passed());
                    let m = &p.metrics;
                    let lat = m.latency_ticks.iter().map(|(t, c)| *t as f64 * *c as f64).sum::<f64>()
                        / m.latency_ticks.values().sum::<usize>().max(1) as f64;
                    kv.push((
                        key,
                        format!(
                            "safety={} commits={} messages_per_commit={} mean_latency_ticks={lat:.2} fallback_instances={}",
                            if p.passed() { "pass" } else { "FAIL" },
                            m.commits_total,
                            m.messages_per_commit.map_or("none".into(), |x| format!("{x:.4}")),
                            m.fallback_instances.len()
                        ),
                    ));
                    mpc.extend(m.messages_per_commit);
                    reports.push(m.clone());
                }
                Err(e) => {
                    errors += 1;
                    kv.push((key, format!("error={e}")));
                }
            }
        }
        if !mpc.is_empty() {
            let mean = mpc.iter().sum::<f64>() / mpc.len() as f64;
            kv.push((format!("aggregate.n{n}.messages_per_commit"), format!("{mean:.4}")));
            per_n.push((n as f64, mean));
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = per_n.into_iter().unzip();
    let fit = |f: Option<fallback_bft::analysis::LinearFit>| {
        f.map_or("n/a".to_string(), |f| format!("a={:.4} b={:.4} r2={:.5}", f.a, f.b, f.r2))
    };
    kv.push(("fit.linear".into(), fit(linear_fit(&xs, &ys))));
    kv.push(("fit.power".into(), fit(power_fit(&xs, &ys))));
    kv.push((
        "fallback.frequency".into(),
        match fallback_stats(&reports) {
            Ok(s) => format!("{:.4} instances={} with_commit={}", s.frequency, s.instances, s.with_commit),
            Err(e) => e.to_string(),
        },
    ));
    kv.push(("sweep.points".into(), results.len().to_string()));
    kv.push(("sweep.violations".into(), violations.to_string()));
    kv.push(("sweep.errors".into(), errors.to_string()));
    kv.push(("config".into(), serde_json_string(&sc.sim)));
    emit(args.common.quiet, &kv);
    if violations > 0 {
        Err(CliError::Violation)
    } else {
        Ok(())
    }
}

fn read_trace(path: &Path) -> Result<Trace, CliError> {
    let f = File::open(path).map_err(io_err(path))?;
    Ok(Trace::read_jsonl(BufReader::new(f))?)
}

fn cmd_replay(args: TraceArgs) -> Result<(), CliError> {
    let trace = read_trace(&args.trace)?;
    let res = replay(&trace);
    let kv = match &res {
        Ok(r) => vec![
            ("replay.match".to_string(), "true".to_string()),
            ("replay.digest".to_string(), r.replayed.clone()),
        ],
        Err(SimError::DigestMismatch { recorded, file, replayed }) => vec![
            ("replay.match".to_string(), "false".to_string()),
            ("replay.recorded".to_string(), recorded.clone()),
            ("replay.file".to_string(), file.clone()),
            ("replay.replayed".to_string(), replayed.clone()),
        ],
        Err(_) => Vec::new(),
    };
    emit(args.quiet, &kv);
    res.map(|_| ()).map_err(CliError::from)
}

fn cmd_check(args: TraceArgs) -> Result<(), CliError> {
    let trace = read_trace(&args.trace)?;
    let s = check_safety(&trace)?;
    let mut kv = vec![("config".to_string(), serde_json_string(trace.config()))];
    kv.extend(s.to_kv());
    kv.extend(measure(&trace).to_kv());
    emit(args.quiet, &kv);
    if s.passed() {
        Ok(())
    } else {
        Err(CliError::Violation)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Replay(a) => cmd_replay(a),
        Cmd::Check(a) => cmd_check(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fbft: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
