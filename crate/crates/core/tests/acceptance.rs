//! Acceptance suite. Each criterion prints one PASS/FAIL line; the binary
//! exits non-zero when any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rvopt_core::benchmark::median;
use rvopt_core::instances::micro;
use rvopt_core::minlp::{solve_exact, OracleLimits, OracleStatus};
use rvopt_core::problem::Weights;
use rvopt_core::smoothing::{softmin_lp, softmin_lse};
use rvopt_core::transcription::{
    disjunction_detail, disjunctive_residuals, full_gradient, objective, smooth_residuals,
};
use rvopt_core::{
    generate, solve, warm_start, AlmConfig, DecisionVector, GeneratorConfig, Point, ProblemInstance, SmoothingConfig,
    SoftminMethod, SolveReport,
};

const SEMANTIC_TOL: f64 = 1e-3;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// Converged solves collected for the semantics check.
type Solved = Vec<(ProblemInstance, SolveReport)>;

fn solve_from_warm(inst: &ProblemInstance, smoothing: &SmoothingConfig, alm: &AlmConfig) -> SolveReport {
    let x0 = warm_start(inst).expect("warm start");
    solve(inst, smoothing, alm, &x0).expect("solve")
}

fn fixture_runs(
    m_a: usize,
    seeds: std::ops::RangeInclusive<u64>,
    smoothing: &SmoothingConfig,
    alm: &AlmConfig,
) -> Solved {
    seeds
        .map(|seed| {
            let inst = generate(&GeneratorConfig::new(seed, m_a)).expect("instance");
            let rep = solve_from_warm(&inst, smoothing, alm);
            (inst, rep)
        })
        .collect()
}

fn medians(runs: &Solved) -> (f64, f64, f64) {
    let pick = |f: fn(&SolveReport) -> f64| median(&runs.iter().map(|(_, r)| f(r)).collect::<Vec<_>>()).unwrap();
    (pick(|r| r.breakdown.total), pick(|r| r.objective), pick(|r| r.wall_s))
}

fn random_point(inst: &ProblemInstance, rng: &mut ChaCha8Rng) -> DecisionVector {
    let l = inst.layout();
    let (lo, hi) = inst.graph().bounding_box();
    let pm = inst.graph().p_max();
    let mut x = DecisionVector::zeros(l);
    for k in 0..l.stamps() {
        x.set_uav(k, Point::new(rng.random_range(lo.x - 1.0..hi.x + 1.0), rng.random_range(lo.y - 1.0..hi.y + 1.0)));
        x.set_battery(k, rng.random_range(-0.1..0.5));
        for (j, v) in x.arm_positions_mut(k).iter_mut().enumerate() {
            *v = rng.random_range(-0.2..pm[j] + 0.2);
        }
        if k + 1 < l.stamps() {
            x.set_duration(k, rng.random_range(-0.05..0.5));
        }
    }
    x
}

/// Weighted Lagrangian-like sum whose gradient `full_gradient` returns.
fn weighted_value(x: &DecisionVector, inst: &ProblemInstance, cfg: &SmoothingConfig, w: &Weights) -> f64 {
    let s = smooth_residuals(x, inst).unwrap();
    let d = disjunctive_residuals(x, inst, cfg).unwrap();
    let eq: f64 = s.eq.values().iter().chain(d.eq.values()).zip(&w.eq).map(|(h, w)| h * w).sum();
    let ineq: f64 = s.ineq.values().iter().zip(&w.ineq).map(|(h, w)| h * w).sum();
    w.objective * objective(x) + eq + ineq
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (idx, (seed, m_a)) in [(11u64, 2usize), (12, 5), (13, 10)].into_iter().enumerate() {
        let inst = generate(&GeneratorConfig::new(seed, m_a)).unwrap();
        let method = if idx == 1 { SoftminMethod::LogSumExp } else { SoftminMethod::LpNorm };
        let cfg = SmoothingConfig::with_method(method);
        for _ in 0..20 {
            let x = random_point(&inst, &mut rng);
            let n_eq = smooth_residuals(&x, &inst).unwrap().eq.len()
                + disjunctive_residuals(&x, &inst, &cfg).unwrap().eq.len();
            let n_ineq = smooth_residuals(&x, &inst).unwrap().ineq.len();
            let w = Weights {
                objective: 1.0,
                eq: (0..n_eq).map(|_| rng.random_range(-2.0..2.0)).collect(),
                ineq: (0..n_ineq).map(|_| rng.random_range(0.0..2.0)).collect(),
            };
            let g = full_gradient(&x, &inst, &cfg, &w).unwrap();
            let h = 1e-6;
            for i in 0..g.len() {
                let mut up = x.clone();
                let mut dn = x.clone();
                up.as_mut_slice()[i] += h;
                dn.as_mut_slice()[i] -= h;
                let fd = (weighted_value(&up, &inst, &cfg, &w) - weighted_value(&dn, &inst, &cfg, &w)) / (2.0 * h);
                worst = worst.max((fd - g[i]).abs() / g[i].abs().max(fd.abs()).max(1.0));
            }
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict::new(
        worst <= 1e-5 && secs <= 60.0,
        format!("{checked} vectors, worst relative error {worst:.2e}, {secs:.1} s"),
    )
}

fn sandwiches() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut lse_bad = 0;
    let mut lp_bad = 0;
    let mut monotone_bad = 0;
    let mut limit_bad = 0;
    let mut worst_limit: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=10);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let tau = rng.random_range(0.5..500.0);
        let min = c.iter().copied().fold(f64::INFINITY, f64::min);
        let v = softmin_lse(&c, tau).unwrap();
        if v > min + 1e-12 || v < min - (n as f64).ln() / tau - 1e-12 {
            lse_bad += 1;
        }
    }
    for _ in 0..1000 {
        let n = rng.random_range(1..=10);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0..20.0)).collect();
        let p = rng.random_range(1..8u32);
        let eps = rng.random_range(1e-6..0.1);
        let min_abs = c.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        let v = softmin_lp(&c, p, eps).unwrap();
        let upper = (n as f64).powf(1.0 / (2.0 * p as f64)) * min_abs.hypot(eps) - eps;
        if v < min_abs - eps - 1e-12 || v > upper + 1e-12 * (1.0 + upper.abs()) {
            lp_bad += 1;
        }
    }
    for _ in 0..1000 {
        let n = rng.random_range(1..=10);
        let base = rng.random_range(0.1..10.0);
        let c: Vec<f64> = (0..n).map(|_| base * rng.random_range(1.0..10.0)).collect();
        let min = c.iter().copied().fold(f64::INFINITY, f64::min);
        let mut last = f64::INFINITY;
        for p in [1u32, 2, 4, 8, 16, 32] {
            let err = (softmin_lp(&c, p, 1e-12).unwrap() - min).abs();
            if err > last + 1e-12 * min {
                monotone_bad += 1;
            }
            last = err;
        }
        worst_limit = worst_limit.max(last / min);
        if last > 1e-3 * min {
            limit_bad += 1;
        }
    }
    let pass = lse_bad + lp_bad + monotone_bad + limit_bad == 0;
    Verdict::new(
        pass,
        format!(
            "lse sandwich misses {lse_bad}/1000, lp sandwich misses {lp_bad}/1000, non-monotone steps {monotone_bad}, \
             p=32 error above 1e-3*min on {limit_bad}/1000 (worst {worst_limit:.3e}*min)"
        ),
    )
}

fn micro_cases() -> Vec<(u64, usize, usize)> {
    (1..=10u64).map(|seed| (seed, 1 + (seed % 2) as usize, 1 + (seed / 2 % 2) as usize)).collect()
}

fn oracle_equivalence(solved: &mut Solved) -> Verdict {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst_gap: f64 = 0.0;
    for (seed, m_a, m_g) in micro_cases() {
        let inst = micro(seed, m_a, m_g, 6).unwrap();
        let oracle = solve_exact(&inst, &OracleLimits::default()).unwrap();
        let rep = solve_from_warm(&inst, &SmoothingConfig::default(), &AlmConfig::default());
        let ok = match (oracle.status, oracle.objective) {
            (OracleStatus::Optimal, Some(best)) => {
                worst_gap = worst_gap.max((rep.objective - best).abs() / best);
                (rep.objective - best).abs() <= 0.02 * best
                    && rep.objective >= best - 1e-4
                    && rep.breakdown.total <= 1e-5
            }
            _ => false,
        };
        if !ok {
            failures.push(format!(
                "seed {seed}: oracle {:?} nlp {:.5} violation {:.1e}",
                oracle.objective, rep.objective, rep.breakdown.total
            ));
        }
        solved.push((inst, rep));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs <= 900.0;
    Verdict::new(pass, format!("10 micro instances, worst relative gap {worst_gap:.2e}, {secs:.1} s {failures:?}"))
}

fn desk_table(runs: &Solved) -> Verdict {
    let ok = runs.iter().filter(|(_, r)| r.converged()).count();
    let rate = ok as f64 / runs.len() as f64;
    let (vio, obj, t) = medians(runs);
    Verdict::new(
        rate >= 0.9 && vio <= 1e-5 && t <= 120.0,
        format!(
            "success {ok}/{}, median violation {vio:.2e}, median objective {obj:.4}, median time {t:.1} s",
            runs.len()
        ),
    )
}

fn smoothing_comparison(lp: &Solved, lse: &Solved, secs: f64) -> Verdict {
    let (lp_vio, lp_obj, _) = medians(lp);
    let (lse_vio, lse_obj, _) = medians(lse);
    let ratio = lp_obj.max(lse_obj) / lp_obj.min(lse_obj);
    let pass = lp_vio <= lse_vio && lp_vio <= 1e-1 && lse_vio <= 1e-1 && ratio <= 1.5 && secs <= 3600.0;
    Verdict::new(
        pass,
        format!(
            "median violation lp {lp_vio:.2e} lse {lse_vio:.2e}, median objective lp {lp_obj:.4} lse {lse_obj:.4}, {secs:.0} s"
        ),
    )
}

fn scaling(small: &Solved, large: &Solved) -> Verdict {
    let (_, _, t_small) = medians(small);
    let (_, _, t_large) = medians(large);
    let growth = t_large / t_small;
    let mut space = [0u64; 2];
    let mut patterns = [Vec::new(), Vec::new()];
    let mut times = [Vec::new(), Vec::new()];
    for seed in 1..=10u64 {
        for (slot, m_a) in [1usize, 2].into_iter().enumerate() {
            let inst = micro(seed, m_a, 2, 6).unwrap();
            let rep = solve_exact(&inst, &OracleLimits::default()).unwrap();
            space[slot] = rep.space;
            patterns[slot].push(rep.patterns as f64);
            times[slot].push(rep.wall_s);
        }
    }
    let p = [median(&patterns[0]).unwrap(), median(&patterns[1]).unwrap()];
    let t = [median(&times[0]).unwrap(), median(&times[1]).unwrap()];
    // Linear growth would double the pattern space when m^A goes from 1 to 2.
    let superlinear = space[1] as f64 / space[0] as f64 > 2.0;
    Verdict::new(
        growth < 10.0 && superlinear,
        format!(
            "NLP median time {t_small:.1} s -> {t_large:.1} s ({growth:.2}x); oracle pattern space {} -> {} ({:.1}x), \
             median patterns after pruning {} -> {} ({:.1}x), median time {:.3} s -> {:.3} s",
            space[0],
            space[1],
            space[1] as f64 / space[0] as f64,
            p[0],
            p[1],
            p[1] / p[0],
            t[0],
            t[1]
        ),
    )
}

fn semantics(solved: &Solved) -> Verdict {
    let mut converged = 0;
    let mut worst = [0.0f64; 3];
    for (inst, rep) in solved.iter().filter(|(_, r)| r.converged()) {
        converged += 1;
        let d = disjunction_detail(inst, rep.x_final.as_slice());
        for (slot, values) in [&d.battery, &d.task_visit, &d.arm_visit].into_iter().enumerate() {
            worst[slot] = values.iter().copied().fold(worst[slot], f64::max);
        }
    }
    Verdict::new(
        converged > 0 && worst.iter().all(|&w| w <= SEMANTIC_TOL),
        format!(
            "{converged} converged solutions, worst battery {:.1e} h, task {:.1e} km, arm {:.1e} km",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn report(name: &str, v: &Verdict) -> bool {
    println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    v.pass
}

fn main() -> ExitCode {
    let mut all = true;
    let mut solved = Solved::new();
    all &= report("gradient correctness", &gradients());
    all &= report("softmin sandwiches and lp limit", &sandwiches());
    all &= report("oracle equivalence", &oracle_equivalence(&mut solved));

    let defaults = AlmConfig::default();
    let table = fixture_runs(2, 1..=20, &SmoothingConfig::default(), &defaults);
    all &= report("desk-scale table (m^A = 2)", &desk_table(&table));

    // Polishing pins the branches and would hide the smoothing under test.
    let start = Instant::now();
    let budget = AlmConfig { time_budget: Some(100.0), polish: false, ..defaults.clone() };
    let lp = fixture_runs(10, 1..=20, &SmoothingConfig::with_method(SoftminMethod::LpNorm), &budget);
    let lse = fixture_runs(10, 1..=20, &SmoothingConfig::with_method(SoftminMethod::LogSumExp), &budget);
    all &= report("lp vs log-sum-exp (m^A = 10)", &smoothing_comparison(&lp, &lse, start.elapsed().as_secs_f64()));
    let small: Solved = table.iter().take(10).cloned().collect();
    let large = fixture_runs(10, 1..=10, &SmoothingConfig::default(), &defaults);
    all &= report("scaling trend", &scaling(&small, &large));

    solved.extend(table);
    solved.extend(lp);
    solved.extend(lse);
    solved.extend(large);
    all &= report("solution semantics", &semantics(&solved));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
