//! `rvopt`: solve, benchmark and oracle-compare energy-sharing missions.
//!
//! Exit codes: 0 success, 1 solver did not converge (artifacts still
//! written), 2 bad input or limits exceeded.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rvopt_core::alm::write_trace_csv;
use rvopt_core::benchmark::{
    median, quantile_rows, run_benchmark, worker_count, write_aggregate_csv, write_quantiles_csv, BenchmarkConfig,
};
use rvopt_core::instances::micro;
use rvopt_core::minlp::{solve_exact, MinlpError, OracleLimits, OracleStatus};
use rvopt_core::model::{read_instance, write_instance};
use rvopt_core::transcription::SolutionRecord;
use rvopt_core::{
    generate, solve, warm_start, AlmConfig, GeneratorConfig, ProblemInstance, SmoothingConfig, SoftminMethod,
};

#[derive(Parser)]
#[command(name = "rvopt", version, about = "Energy-sharing UAV-UGV mission optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance file with the smoothed NLP.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        #[command(flatten)]
        alm: AlmArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a range of generated instances and aggregate the traces.
    Benchmark {
        /// Inclusive seed range `A..B`.
        #[arg(long, value_parser = parse_seeds)]
        seeds: (u64, u64),
        #[arg(long = "m-a")]
        m_a: usize,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        #[command(flatten)]
        alm: AlmArgs,
        /// Worker count; defaults to RVOPT_THREADS, then all cores.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the enumeration oracle and the NLP side by side on a tiny instance.
    Oracle {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long = "max-n", default_value_t = 6)]
        max_n: usize,
        #[arg(long = "max-ma", default_value_t = 2)]
        max_ma: usize,
        #[arg(long = "max-mg", default_value_t = 2)]
        max_mg: usize,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a generated instance file.
    Generate {
        #[arg(long)]
        seed: u64,
        #[arg(long = "m-a")]
        m_a: usize,
        /// Build a tiny single-junction instance with this many arms instead
        /// of using the fixture map.
        #[arg(long = "micro-arms")]
        micro_arms: Option<usize>,
        #[arg(long)]
        stamps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct SmoothingArgs {
    #[arg(long, default_value = "lp")]
    method: SoftminMethod,
    #[arg(long = "p-exp")]
    p_exp: Option<u32>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
}

impl SmoothingArgs {
    fn config(&self) -> Result<SmoothingConfig> {
        let mut c = SmoothingConfig::with_method(self.method);
        if let Some(v) = self.p_exp {
            c.p_exp = v;
        }
        if let Some(v) = self.eps {
            c.epsilon = v;
        }
        if let Some(v) = self.tau {
            c.tau = v;
        }
        if let Some(v) = self.delta {
            c.delta = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Clone)]
struct AlmArgs {
    /// Wall-clock budget per solve (s).
    #[arg(long = "budget-s")]
    budget_s: Option<f64>,
    #[arg(long = "max-outer")]
    max_outer: Option<usize>,
    /// Skip the fixed-branch re-solve after the smoothed solve.
    #[arg(long = "no-polish")]
    no_polish: bool,
}

impl AlmArgs {
    fn config(&self) -> Result<AlmConfig> {
        let mut c = AlmConfig { time_budget: self.budget_s, polish: !self.no_polish, ..AlmConfig::default() };
        if let Some(v) = self.max_outer {
            c.max_outer = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn parse_seeds(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got `{s}`"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("bad seed `{a}`: {e}"))?;
    let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|e| format!("bad seed `{b}`: {e}"))?;
    if a > b {
        return Err(format!("empty seed range {a}..{b}"));
    }
    Ok((a, b))
}

/// Written before any long computation and rewritten on completion; a
/// manifest without `finished` marks an interrupted run.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    args: Vec<String>,
    config: serde_json::Value,
    artifacts: Vec<String>,
    tool_version: &'static str,
    started: String,
    finished: Option<String>,
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value, artifacts: &[&str]) -> Self {
        Self {
            command: command.into(),
            args: std::env::args().collect(),
            config,
            artifacts: artifacts.iter().map(|s| s.to_string()).collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
            started: now(),
            finished: None,
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(dir.join("manifest.json"), text).context("writing manifest")
    }

    fn finish(&mut self, dir: &Path) -> Result<()> {
        self.finished = Some(now());
        self.write(dir)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

/// A failure that maps to exit code 2.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

fn load_instance(path: &Path) -> Result<ProblemInstance> {
    read_instance(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(create(path)?, value).with_context(|| format!("writing {}", path.display()))
}

fn cmd_solve(instance: &Path, smoothing: &SmoothingArgs, alm: &AlmArgs, out: &Path) -> Result<u8> {
    let (smoothing, alm) = (
        smoothing.config().map_err(|e| input_error(e.to_string()))?,
        alm.config().map_err(|e| input_error(e.to_string()))?,
    );
    let inst = load_instance(instance)?;
    let x0 = warm_start(&inst).map_err(|e| input_error(e.to_string()))?;
    prepare_out(out)?;
    let config = serde_json::json!({ "instance": instance, "smoothing": smoothing, "alm": alm });
    let mut manifest =
        RunManifest::new("solve", config, &["solution.json", "solution.csv", "trace.csv", "report.json"]);
    manifest.write(out)?;

    let report = solve(&inst, &smoothing, &alm, &x0)?;
    let record = SolutionRecord::new(&report.x_final, &inst)?;
    write_json(&out.join("solution.json"), &record)?;
    record.write_csv(create(&out.join("solution.csv"))?)?;
    write_trace_csv(&report.trace, create(&out.join("trace.csv"))?)?;
    let summary = serde_json::json!({
        "status": report.status,
        "objective": report.objective,
        "violation": report.breakdown,
        "wall_s": report.wall_s,
        "outer": report.trace.last().map_or(0, |p| p.outer),
    });
    write_json(&out.join("report.json"), &summary)?;
    manifest.finish(out)?;
    println!(
        "status {:?}  objective {:.6} h  violation {:.3e}  {:.2} s",
        report.status, report.objective, report.breakdown.total, report.wall_s
    );
    Ok(if report.converged() { 0 } else { 1 })
}

fn cmd_benchmark(
    seeds: (u64, u64),
    m_a: usize,
    smoothing: &SmoothingArgs,
    alm: &AlmArgs,
    threads: Option<usize>,
    out: &Path,
) -> Result<u8> {
    let cfg = BenchmarkConfig {
        seeds: (seeds.0..=seeds.1).collect(),
        m_a,
        smoothing: smoothing.config().map_err(|e| input_error(e.to_string()))?,
        alm: alm.config().map_err(|e| input_error(e.to_string()))?,
        threads,
    };
    prepare_out(out)?;
    let traces = out.join("traces");
    fs::create_dir_all(&traces)?;
    let trace_names: Vec<String> = cfg.seeds.iter().map(|s| format!("traces/seed_{s}.csv")).collect();
    let mut artifacts = vec!["aggregate.csv", "quantiles.csv"];
    artifacts.extend(trace_names.iter().map(String::as_str));
    let config = serde_json::json!({
        "benchmark": cfg,
        "generator": GeneratorConfig::new(seeds.0, m_a),
        "workers": worker_count(threads),
    });
    let mut manifest = RunManifest::new("benchmark", config, &artifacts);
    manifest.write(out)?;

    let runs = run_benchmark(&cfg);
    for (run, name) in runs.iter().zip(&trace_names) {
        write_trace_csv(&run.trace, create(&out.join(name))?)?;
        if let Some(e) = &run.error {
            eprintln!("seed {}: {e}", run.record.seed);
        }
    }
    write_aggregate_csv(&runs, create(&out.join("aggregate.csv"))?)?;
    let end = cfg.alm.time_budget.unwrap_or_else(|| runs.iter().map(|r| r.record.wall_s).fold(0.01, f64::max));
    write_quantiles_csv(&quantile_rows(&runs, end), create(&out.join("quantiles.csv"))?)?;
    manifest.finish(out)?;

    let completed = runs.iter().filter(|r| r.record.completed()).count();
    let converged = runs.iter().filter(|r| r.record.converged()).count();
    let viol: Vec<f64> = runs.iter().filter(|r| r.record.completed()).map(|r| r.record.violation).collect();
    let time: Vec<f64> = runs.iter().filter(|r| r.record.completed()).map(|r| r.record.wall_s).collect();
    println!(
        "{} runs  {completed} completed  {converged} converged  median violation {:.3e}  median time {:.2} s",
        runs.len(),
        median(&viol).unwrap_or(f64::NAN),
        median(&time).unwrap_or(f64::NAN)
    );
    Ok(if completed * 10 >= runs.len() * 9 { 0 } else { 1 })
}

#[derive(Serialize)]
struct ComparisonRow {
    oracle_status: OracleStatus,
    oracle_objective: Option<f64>,
    oracle_wall_s: f64,
    oracle_subproblems: usize,
    oracle_patterns: u64,
    nlp_status: String,
    nlp_objective: f64,
    nlp_violation: f64,
    nlp_wall_s: f64,
}

fn cmd_oracle(instance: &Path, limits: OracleLimits, smoothing: &SmoothingArgs, out: &Path) -> Result<u8> {
    let smoothing = smoothing.config().map_err(|e| input_error(e.to_string()))?;
    let inst = load_instance(instance)?;
    prepare_out(out)?;
    let config = serde_json::json!({ "instance": instance, "limits": limits, "smoothing": smoothing });
    let mut manifest = RunManifest::new("oracle", config, &["oracle.json", "comparison.csv", "nlp_solution.json"]);
    manifest.write(out)?;

    let oracle = match solve_exact(&inst, &limits) {
        Err(e @ MinlpError::Limits { .. }) => return Err(input_error(e.to_string())),
        other => other?,
    };
    write_json(&out.join("oracle.json"), &oracle.record())?;

    let started = Instant::now();
    let (nlp_status, nlp_objective, nlp_violation) = match warm_start(&inst) {
        Ok(x0) => {
            let rep = solve(&inst, &smoothing, &AlmConfig::default(), &x0)?;
            write_json(&out.join("nlp_solution.json"), &SolutionRecord::new(&rep.x_final, &inst)?)?;
            (format!("{:?}", rep.status), rep.objective, rep.breakdown.total)
        }
        Err(e) => (format!("Error: {e}"), f64::NAN, f64::NAN),
    };
    let row = ComparisonRow {
        oracle_status: oracle.status,
        oracle_objective: oracle.objective,
        oracle_wall_s: oracle.wall_s,
        oracle_subproblems: oracle.subproblems,
        oracle_patterns: oracle.patterns,
        nlp_status,
        nlp_objective,
        nlp_violation,
        nlp_wall_s: started.elapsed().as_secs_f64(),
    };
    let mut w = csv::Writer::from_writer(create(&out.join("comparison.csv"))?);
    w.serialize(&row)?;
    w.flush()?;
    manifest.finish(out)?;
    println!(
        "oracle {:?} {}  |  nlp {} {:.6} (violation {:.3e})",
        row.oracle_status,
        row.oracle_objective.map_or_else(|| "-".into(), |v| format!("{v:.6}")),
        row.nlp_status,
        row.nlp_objective,
        row.nlp_violation
    );
    Ok(0)
}

fn cmd_generate(seed: u64, m_a: usize, micro_arms: Option<usize>, stamps: Option<usize>, out: &Path) -> Result<u8> {
    let inst = match micro_arms {
        Some(m_g) => {
            let n = stamps.unwrap_or(6);
            micro(seed, m_a, m_g, n)?
        }
        None => generate(&GeneratorConfig { stamps, ..GeneratorConfig::new(seed, m_a) })?,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        prepare_out(dir)?;
    }
    write_instance(out, &inst)?;
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Solve { instance, smoothing, alm, out } => cmd_solve(&instance, &smoothing, &alm, &out),
        Command::Benchmark { seeds, m_a, smoothing, alm, threads, out } => {
            cmd_benchmark(seeds, m_a, &smoothing, &alm, threads, &out)
        }
        Command::Oracle { instance, max_n, max_ma, max_mg, smoothing, out } => {
            cmd_oracle(&instance, OracleLimits { max_n, max_ma, max_mg }, &smoothing, &out)
        }
        Command::Generate { seed, m_a, micro_arms, stamps, out } => {
            if micro_arms == Some(0) {
                return Err(input_error("--micro-arms must be at least 1"));
            }
            cmd_generate(seed, m_a, micro_arms, stamps, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InputError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
