//! Powell–Hestenes–Rockafellar augmented Lagrangian with an L-BFGS inner
//! solver.

mod lbfgs;

use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use lbfgs::{inner_minimize, InnerError, InnerResult, InnerStatus, LbfgsConfig};

use crate::model::{DecisionVector, ProblemInstance};
use crate::problem::{ConstrainedProblem, Evaluation};
use crate::smoothing::{SmoothingConfig, SmoothingError};
use crate::transcription::{violation_report, Transcription, ViolationBreakdown};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlmConfig {
    pub rho0: f64,
    pub gamma: f64,
    /// Penalty stays put when the violation shrinks below `theta` times
    /// its previous value.
    pub theta: f64,
    pub rho_max: f64,
    pub max_outer: usize,
    /// Inner gradient tolerance decays geometrically from `inner_tol_start`
    /// to `inner_tol_end` over `max_outer` iterations.
    pub inner_tol_start: f64,
    pub inner_tol_end: f64,
    pub inner_max_iters: usize,
    pub memory: usize,
    /// Wall-clock budget in seconds; unlimited when absent.
    pub time_budget: Option<f64>,
    /// Exact-violation threshold for convergence.
    pub target_violation: f64,
    /// After the smoothed solve, re-solve with every disjunction pinned to
    /// its active branch when the exact violation is still above target.
    pub polish: bool,
}

impl Default for AlmConfig {
    fn default() -> Self {
        Self {
            rho0: 10.0,
            gamma: 10.0,
            theta: 0.25,
            rho_max: 1e10,
            max_outer: 30,
            inner_tol_start: 1e-2,
            inner_tol_end: 1e-8,
            inner_max_iters: 2000,
            memory: 10,
            time_budget: None,
            target_violation: 1e-6,
            polish: true,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AlmError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Smoothing(#[from] SmoothingError),
    #[error("starting point has dimension {got}, problem has {expected}")]
    Dimension { expected: usize, got: usize },
}

impl AlmConfig {
    pub fn validate(&self) -> Result<(), AlmError> {
        let bad = |m: &str| Err(AlmError::Config(m.to_string()));
        if !(self.rho0 > 0.0) {
            return bad("rho0 must be positive");
        }
        if !(self.gamma > 1.0) {
            return bad("gamma must exceed 1");
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad("theta must lie in (0, 1)");
        }
        if !(self.rho_max >= self.rho0) {
            return bad("rho_max must be at least rho0");
        }
        if !(self.inner_tol_start > 0.0 && self.inner_tol_end > 0.0 && self.inner_tol_end <= self.inner_tol_start) {
            return bad("inner tolerances must be positive and nonincreasing");
        }
        if self.max_outer == 0 || self.inner_max_iters == 0 {
            return bad("iteration limits must be positive");
        }
        if self.time_budget.is_some_and(|b| !(b > 0.0)) {
            return bad("time budget must be positive");
        }
        if !(self.target_violation >= 0.0) {
            return bad("target violation must be nonnegative");
        }
        Ok(())
    }

    pub fn inner_tol(&self, outer: usize) -> f64 {
        if self.max_outer <= 1 {
            return self.inner_tol_end;
        }
        let frac = (outer.min(self.max_outer - 1)) as f64 / (self.max_outer - 1) as f64;
        self.inner_tol_start * (self.inner_tol_end / self.inner_tol_start).powf(frac)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    TimeBudget,
    MaxOuter,
    InnerFailure,
}

/// One row of a convergence trace. Row `outer = 0` is the starting point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub wall_s: f64,
    pub objective_h: f64,
    pub violation: f64,
    pub rho: f64,
    pub outer: usize,
    pub inner_iters: usize,
}

/// Result of [`minimize`] on a generic problem.
#[derive(Clone, Debug, PartialEq)]
pub struct AlmOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub violation: f64,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub rho: f64,
    pub trace: Vec<TracePoint>,
    pub status: SolveStatus,
}

struct Lagrangian<'p, P> {
    problem: &'p P,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    rho: f64,
    eval: Evaluation,
    weights: crate::problem::Weights,
}

impl<P: ConstrainedProblem> Lagrangian<'_, P> {
    /// Value and gradient of `L_ρ(x, λ, μ)`.
    fn value_and_gradient(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.problem.evaluate(x, &mut self.eval);
        let rho = self.rho;
        let mut value = self.eval.objective;
        for ((w, &h), &l) in self.weights.eq.iter_mut().zip(self.eval.eq.values()).zip(&self.lambda) {
            value += l * h + 0.5 * rho * h * h;
            *w = l + rho * h;
        }
        for ((w, &g), &m) in self.weights.ineq.iter_mut().zip(self.eval.ineq.values()).zip(&self.mu) {
            let shifted = (m / rho + g).max(0.0);
            value += 0.5 * rho * (shifted * shifted - (m / rho) * (m / rho));
            *w = rho * shifted;
        }
        self.eval.weighted_gradient(&self.weights, grad);
        value
    }
}

/// Runs the augmented-Lagrangian loop on `problem` from `x0`.
pub fn minimize<P: ConstrainedProblem>(problem: &P, x0: &[f64], cfg: &AlmConfig) -> Result<AlmOutcome, AlmError> {
    cfg.validate()?;
    if x0.len() != problem.dim() {
        return Err(AlmError::Dimension { expected: problem.dim(), got: x0.len() });
    }
    let start = Instant::now();
    let deadline = cfg.time_budget.map(|b| start + Duration::from_secs_f64(b));
    let mut eval = Evaluation::default();
    problem.evaluate(x0, &mut eval);
    let (n_eq, n_ineq) = (eval.eq.len(), eval.ineq.len());
    let mut lag = Lagrangian {
        problem,
        lambda: vec![0.0; n_eq],
        mu: vec![0.0; n_ineq],
        rho: cfg.rho0,
        weights: crate::problem::Weights::objective_only(n_eq, n_ineq),
        eval,
    };

    let mut x = x0.to_vec();
    let mut violation = problem.violation(&x);
    let mut trace = Vec::with_capacity(cfg.max_outer + 1);
    let push_trace = |trace: &mut Vec<TracePoint>, objective, violation, rho, outer, inner_iters| {
        let mut wall_s = start.elapsed().as_secs_f64();
        if let Some(last) = trace.last() {
            let last: &TracePoint = last;
            wall_s = wall_s.max(last.wall_s + 1e-9);
        }
        trace.push(TracePoint { wall_s, objective_h: objective, violation, rho, outer, inner_iters });
    };
    push_trace(&mut trace, lag.eval.objective, violation, lag.rho, 0, 0);

    if !lag.eval.is_finite() || !violation.is_finite() {
        return Ok(AlmOutcome {
            objective: lag.eval.objective,
            x,
            violation,
            lambda: lag.lambda,
            mu: lag.mu,
            rho: lag.rho,
            trace,
            status: SolveStatus::InnerFailure,
        });
    }

    let mut status = SolveStatus::MaxOuter;
    let mut last_failed = false;
    for outer in 1..=cfg.max_outer {
        let inner_cfg = LbfgsConfig {
            memory: cfg.memory,
            max_iters: cfg.inner_max_iters,
            tol: cfg.inner_tol(outer - 1),
            deadline,
            ..LbfgsConfig::default()
        };
        let result = inner_minimize(|x, g| lag.value_and_gradient(x, g), &x, &inner_cfg);
        let (iters, inner_status) = match result {
            Ok(r) => {
                x = r.x;
                (r.iterations, r.status)
            }
            Err(_) => (0, InnerStatus::LineSearchFailed),
        };
        last_failed = inner_status == InnerStatus::LineSearchFailed;

        lag.problem.evaluate(&x, &mut lag.eval);
        let new_violation = problem.violation(&x);
        for (l, &h) in lag.lambda.iter_mut().zip(lag.eval.eq.values()) {
            *l += lag.rho * h;
        }
        for (m, &g) in lag.mu.iter_mut().zip(lag.eval.ineq.values()) {
            *m = (*m + lag.rho * g).max(0.0);
        }
        push_trace(&mut trace, lag.eval.objective, new_violation, lag.rho, outer, iters);

        // A failed line search means no further descent is possible from x.
        let stationary = matches!(inner_status, InnerStatus::Converged | InnerStatus::LineSearchFailed);
        if new_violation <= cfg.target_violation && stationary {
            violation = new_violation;
            status = SolveStatus::Converged;
            break;
        }
        if inner_status == InnerStatus::Deadline || deadline.is_some_and(|d| Instant::now() >= d) {
            violation = new_violation;
            status = SolveStatus::TimeBudget;
            break;
        }
        if new_violation > cfg.theta * violation {
            lag.rho = (lag.rho * cfg.gamma).min(cfg.rho_max);
        }
        violation = new_violation;
    }
    if status == SolveStatus::MaxOuter && last_failed {
        status = SolveStatus::InnerFailure;
    }
    Ok(AlmOutcome {
        objective: lag.eval.objective,
        x,
        violation,
        lambda: lag.lambda,
        mu: lag.mu,
        rho: lag.rho,
        trace,
        status,
    })
}

/// Outcome of an NLP solve on a mission instance.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub x_final: DecisionVector,
    pub objective: f64,
    pub breakdown: ViolationBreakdown,
    pub trace: Vec<TracePoint>,
    pub status: SolveStatus,
    pub wall_s: f64,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Solves the smoothed mission problem from `x0`.
pub fn solve(
    inst: &ProblemInstance,
    cfg: &SmoothingConfig,
    alm: &AlmConfig,
    x0: &DecisionVector,
) -> Result<SolveReport, AlmError> {
    if x0.layout() != inst.layout() {
        return Err(AlmError::Dimension { expected: inst.layout().len(), got: x0.as_slice().len() });
    }
    let start = Instant::now();
    let problem = Transcription::new(inst, cfg)?;
    let mut out = minimize(&problem, x0.as_slice(), alm)?;
    if alm.polish && out.violation > alm.target_violation && out.violation.is_finite() {
        let remaining = alm.time_budget.map(|b| b - start.elapsed().as_secs_f64());
        if remaining.is_none_or(|r| r > 0.0) {
            let cfg = AlmConfig { time_budget: remaining, ..alm.clone() };
            let polished = crate::minlp::polish(inst, &out.x, &cfg)?;
            if polished.violation < out.violation {
                let last = *out.trace.last().expect("trace has the start point");
                for p in &polished.trace[1..] {
                    out.trace.push(TracePoint {
                        wall_s: (last.wall_s + p.wall_s).max(out.trace.last().unwrap().wall_s + 1e-9),
                        outer: last.outer + p.outer,
                        ..*p
                    });
                }
                out.status =
                    if polished.violation <= alm.target_violation { SolveStatus::Converged } else { polished.status };
                out.x = polished.x;
                out.violation = polished.violation;
            }
        }
    }
    let x_final = DecisionVector::from_flat(inst.layout(), out.x).expect("layout preserved by the solver");
    let breakdown = violation_report(&x_final, inst).expect("layout checked above");
    Ok(SolveReport {
        objective: crate::transcription::objective(&x_final),
        x_final,
        breakdown,
        trace: out.trace,
        status: out.status,
        wall_s: start.elapsed().as_secs_f64(),
    })
}

/// Writes a trace as CSV with columns
/// `wall_s,objective_h,violation,rho,outer,inner_iters`.
pub fn write_trace_csv<W: Write>(trace: &[TracePoint], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in trace {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: std::io::Read>(r: R) -> csv::Result<Vec<TracePoint>> {
    csv::Reader::from_reader(r).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{ConstraintKind, Label};

    /// `min f(x)` subject to residual rows, all with hand-coded gradients.
    struct Toy {
        dim: usize,
        f: fn(&[f64], &mut Vec<(usize, f64)>) -> f64,
        eq: Vec<fn(&[f64]) -> (f64, Vec<(usize, f64)>)>,
        ineq: Vec<fn(&[f64]) -> (f64, Vec<(usize, f64)>)>,
    }

    impl ConstrainedProblem for Toy {
        fn dim(&self) -> usize {
            self.dim
        }

        fn evaluate(&self, x: &[f64], out: &mut Evaluation) {
            out.clear();
            out.objective = (self.f)(x, &mut out.objective_grad);
            for r in &self.eq {
                let (v, g) = r(x);
                out.eq.push(Label::new(ConstraintKind::Generic), v, &g);
            }
            for r in &self.ineq {
                let (v, g) = r(x);
                out.ineq.push(Label::new(ConstraintKind::Generic), v, &g);
            }
        }

        fn violation(&self, x: &[f64]) -> f64 {
            self.eq.iter().map(|r| r(x).0.abs()).sum::<f64>() + self.ineq.iter().map(|r| r(x).0.max(0.0)).sum::<f64>()
        }
    }

    fn square(x: &[f64], g: &mut Vec<(usize, f64)>) -> f64 {
        g.extend(x.iter().enumerate().map(|(i, v)| (i, 2.0 * v)));
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn lower_bound_toy() {
        let toy = Toy { dim: 1, f: square, eq: vec![], ineq: vec![|x| (1.0 - x[0], vec![(0, -1.0)])] };
        let out = minimize(&toy, &[5.0], &AlmConfig::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6, "{}", out.x[0]);
        assert!((out.mu[0] - 2.0).abs() < 1e-3, "{}", out.mu[0]);
    }

    #[test]
    fn linear_equality_toy() {
        let toy = Toy { dim: 2, f: square, eq: vec![|x| (x[0] + x[1] - 1.0, vec![(0, 1.0), (1, 1.0)])], ineq: vec![] };
        let out = minimize(&toy, &[0.0, 0.0], &AlmConfig::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
        assert!((out.x[0] - 0.5).abs() < 1e-6 && (out.x[1] - 0.5).abs() < 1e-6);
        assert!((out.lambda[0] + 1.0).abs() < 1e-3, "{}", out.lambda[0]);
    }

    #[test]
    fn trace_times_increase_and_multipliers_stay_nonnegative() {
        let toy = Toy {
            dim: 2,
            f: square,
            eq: vec![],
            ineq: vec![|x| (1.0 - x[0] - x[1], vec![(0, -1.0), (1, -1.0)]), |x| (x[0] - 5.0, vec![(0, 1.0)])],
        };
        let out = minimize(&toy, &[3.0, -2.0], &AlmConfig::default()).unwrap();
        assert!(out.trace.windows(2).all(|w| w[1].wall_s > w[0].wall_s));
        assert!(out.mu.iter().all(|&m| m >= 0.0));
        assert_eq!(out.trace[0].outer, 0);
    }

    #[test]
    fn tolerance_schedule_is_geometric() {
        let cfg = AlmConfig::default();
        assert!((cfg.inner_tol(0) - 1e-2).abs() < 1e-15);
        assert!((cfg.inner_tol(29) - 1e-8).abs() < 1e-20);
        assert!((0..29).all(|k| cfg.inner_tol(k + 1) < cfg.inner_tol(k)));
    }

    #[test]
    fn rejects_bad_config() {
        for cfg in [
            AlmConfig { rho0: 0.0, ..AlmConfig::default() },
            AlmConfig { gamma: 1.0, ..AlmConfig::default() },
            AlmConfig { theta: 1.0, ..AlmConfig::default() },
            AlmConfig { inner_tol_end: 1.0, ..AlmConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn trace_csv_round_trip() {
        let trace = vec![
            TracePoint { wall_s: 0.001, objective_h: 1.5, violation: 20.0, rho: 10.0, outer: 0, inner_iters: 0 },
            TracePoint { wall_s: 0.25, objective_h: 3.25, violation: 1e-7, rho: 100.0, outer: 1, inner_iters: 117 },
        ];
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("wall_s,objective_h,violation,rho,outer,inner_iters\n"));
        assert_eq!(read_trace_csv(buf.as_slice()).unwrap(), trace);
    }
}
