//! Batch solves over seeded instances and the time-grid statistics used to
//! compare convergence across methods.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::alm::{solve, AlmConfig, SolveStatus, TracePoint};
use crate::instances::{generate, warm_start, GeneratorConfig};
use crate::smoothing::SmoothingConfig;

/// Grid points per decade of the shared time axis.
pub const POINTS_PER_DECADE: usize = 50;
/// Left end of the shared time axis (s).
pub const GRID_START_S: f64 = 0.01;
/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "RVOPT_THREADS";

/// Log-spaced times from 0.01 s up to and including `end_s`.
pub fn time_grid(end_s: f64) -> Vec<f64> {
    if !(end_s > GRID_START_S) {
        return vec![GRID_START_S];
    }
    let decades = (end_s / GRID_START_S).log10();
    let steps = (decades * POINTS_PER_DECADE as f64).ceil() as usize;
    let mut grid: Vec<f64> =
        (0..steps).map(|i| GRID_START_S * 10f64.powf(i as f64 / POINTS_PER_DECADE as f64)).collect();
    grid.push(end_s);
    grid
}

/// Value of a trace at time `t`: the latest point recorded at or before `t`,
/// or the starting point when `t` precedes it.
pub fn sample_trace(trace: &[TracePoint], t: f64) -> Option<TracePoint> {
    let idx = trace.partition_point(|p| p.wall_s <= t);
    trace.get(idx.saturating_sub(1)).copied()
}

/// Linear-interpolation quantile of unsorted data; `None` when empty.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// What to run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub seeds: Vec<u64>,
    pub m_a: usize,
    pub smoothing: SmoothingConfig,
    pub alm: AlmConfig,
    /// Worker count; when absent, `RVOPT_THREADS` or all cores.
    pub threads: Option<usize>,
}

/// One row of the aggregate CSV. `status` is a [`SolveStatus`] name, or
/// `Error` when the instance could not be built or started.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub objective: f64,
    pub violation: f64,
    pub wall_s: f64,
    pub status: String,
}

impl RunRecord {
    pub fn converged(&self) -> bool {
        self.status == "Converged"
    }

    pub fn completed(&self) -> bool {
        self.status != "Error"
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub trace: Vec<TracePoint>,
    pub error: Option<String>,
}

/// Quartiles of objective and violation across runs at one grid time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub t_s: f64,
    pub runs: usize,
    pub objective_q25: f64,
    pub objective_q50: f64,
    pub objective_q75: f64,
    pub violation_q25: f64,
    pub violation_q50: f64,
    pub violation_q75: f64,
}

fn status_name(s: SolveStatus) -> String {
    format!("{s:?}")
}

/// Generates, warm-starts and solves one seeded instance.
pub fn run_seed(seed: u64, m_a: usize, smoothing: &SmoothingConfig, alm: &AlmConfig) -> RunOutcome {
    let fail = |msg: String| RunOutcome {
        record: RunRecord { seed, objective: f64::NAN, violation: f64::NAN, wall_s: 0.0, status: "Error".into() },
        trace: Vec::new(),
        error: Some(msg),
    };
    let inst = match generate(&GeneratorConfig::new(seed, m_a)) {
        Ok(i) => i,
        Err(e) => return fail(e.to_string()),
    };
    let x0 = match warm_start(&inst) {
        Ok(x) => x,
        Err(e) => return fail(e.to_string()),
    };
    match solve(&inst, smoothing, alm, &x0) {
        Ok(rep) => RunOutcome {
            record: RunRecord {
                seed,
                objective: rep.objective,
                violation: rep.breakdown.total,
                wall_s: rep.wall_s,
                status: status_name(rep.status),
            },
            trace: rep.trace,
            error: None,
        },
        Err(e) => fail(e.to_string()),
    }
}

/// Worker count: explicit, else `RVOPT_THREADS`, else rayon's default.
pub fn worker_count(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Solves every seed, one instance per worker. Results come back in seed order.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Vec<RunOutcome> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(cfg.threads))
        .build()
        .expect("thread pool construction");
    pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(s, cfg.m_a, &cfg.smoothing, &cfg.alm)).collect())
}

/// Quartiles of the runs' traces on the shared grid ending at `end_s`.
/// Failed runs contribute nothing.
pub fn quantile_rows(runs: &[RunOutcome], end_s: f64) -> Vec<QuantileRow> {
    time_grid(end_s)
        .into_iter()
        .map(|t| {
            let points: Vec<TracePoint> = runs.iter().filter_map(|r| sample_trace(&r.trace, t)).collect();
            let obj: Vec<f64> = points.iter().map(|p| p.objective_h).collect();
            let vio: Vec<f64> = points.iter().map(|p| p.violation).collect();
            let q = |v: &[f64], p| quantile(v, p).unwrap_or(f64::NAN);
            QuantileRow {
                t_s: t,
                runs: points.len(),
                objective_q25: q(&obj, 0.25),
                objective_q50: q(&obj, 0.5),
                objective_q75: q(&obj, 0.75),
                violation_q25: q(&vio, 0.25),
                violation_q50: q(&vio, 0.5),
                violation_q75: q(&vio, 0.75),
            }
        })
        .collect()
}

pub fn write_aggregate_csv<W: Write>(runs: &[RunOutcome], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in runs {
        out.serialize(&r.record)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_aggregate_csv<R: std::io::Read>(r: R) -> csv::Result<Vec<RunRecord>> {
    csv::Reader::from_reader(r).deserialize().collect()
}

pub fn write_quantiles_csv<W: Write>(rows: &[QuantileRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tp(wall_s: f64, v: f64) -> TracePoint {
        TracePoint { wall_s, objective_h: v, violation: v, rho: 1.0, outer: 0, inner_iters: 0 }
    }

    #[test]
    fn grid_density_and_ends() {
        let g = time_grid(100.0);
        assert_eq!(g.len(), 4 * POINTS_PER_DECADE + 1);
        assert!((g[0] - 0.01).abs() < 1e-15);
        assert_eq!(*g.last().unwrap(), 100.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let ratio = g[1] / g[0];
        assert!((ratio.log10() - 1.0 / POINTS_PER_DECADE as f64).abs() < 1e-12);
    }

    #[test]
    fn step_sampling() {
        let trace = [tp(0.5, 3.0), tp(1.0, 2.0), tp(4.0, 1.0)];
        assert_eq!(sample_trace(&trace, 0.1).unwrap().violation, 3.0);
        assert_eq!(sample_trace(&trace, 1.0).unwrap().violation, 2.0);
        assert_eq!(sample_trace(&trace, 3.9).unwrap().violation, 2.0);
        assert_eq!(sample_trace(&trace, 50.0).unwrap().violation, 1.0);
        assert!(sample_trace(&[], 1.0).is_none());
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), Some(1.0));
        assert_eq!(quantile(&v, 1.0), Some(4.0));
        assert_eq!(median(&v), Some(2.5));
        assert_eq!(quantile(&v, 0.25), Some(1.75));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn aggregate_round_trip() {
        let runs = vec![RunOutcome {
            record: RunRecord { seed: 3, objective: 1.25, violation: 1e-7, wall_s: 0.5, status: "Converged".into() },
            trace: vec![],
            error: None,
        }];
        let mut buf = Vec::new();
        write_aggregate_csv(&runs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("seed,objective,violation,wall_s,status\n"));
        assert_eq!(read_aggregate_csv(&buf[..]).unwrap(), vec![runs[0].record.clone()]);
    }

    #[test]
    fn quantile_rows_skip_failed_runs() {
        let ok = RunOutcome {
            record: RunRecord { seed: 1, objective: 1.0, violation: 0.0, wall_s: 1.0, status: "Converged".into() },
            trace: vec![tp(0.0, 2.0), tp(1.0, 1.0)],
            error: None,
        };
        let bad = RunOutcome { trace: vec![], error: Some("x".into()), ..ok.clone() };
        let rows = quantile_rows(&[ok, bad], 2.0);
        assert!(rows.iter().all(|r| r.runs == 1));
        assert_eq!(rows.last().unwrap().violation_q50, 1.0);
        assert_eq!(rows[0].objective_q50, 2.0);
    }
}
