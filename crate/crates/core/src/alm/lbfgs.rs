//! Limited-memory BFGS with a strong Wolfe line search.

use std::collections::VecDeque;
use std::time::Instant;

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop once `‖∇f‖_∞ ≤ tol`.
    pub tol: f64,
    pub c1: f64,
    pub c2: f64,
    /// Function evaluations allowed per line search.
    pub max_line_evals: usize,
    pub deadline: Option<Instant>,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { memory: 10, max_iters: 2000, tol: 1e-8, c1: 1e-4, c2: 0.9, max_line_evals: 40, deadline: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum InnerStatus {
    Converged,
    MaxIters,
    LineSearchFailed,
    Deadline,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: InnerStatus,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum InnerError {
    #[error("objective or gradient is not finite at the starting point")]
    NonFiniteStart,
    #[error("gradient buffer length {got} differs from the dimension {expected}")]
    Dimension { expected: usize, got: usize },
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizer of the cubic through (a, fa, da) and (b, fb, db), kept at
/// least 10% away from both ends; bisection when the cubic degenerates.
fn cubic_step(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (hi - lo);
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let mid = 0.5 * (a + b);
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    if t.is_finite() && t >= lo + margin && t <= hi - margin {
        t
    } else {
        mid
    }
}

struct Trial {
    alpha: f64,
    f: f64,
    d: f64,
}

/// Evaluates `f` and `∇f` at `x + α·dir`, leaving the point and gradient in
/// `xt`, `gt`.
struct LineFn<'a, F> {
    f: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    xt: &'a mut [f64],
    gt: &'a mut [f64],
    evals: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> LineFn<'_, F> {
    fn eval(&mut self, alpha: f64) -> Trial {
        for ((t, &x), &d) in self.xt.iter_mut().zip(self.x).zip(self.dir) {
            *t = x + alpha * d;
        }
        self.evals += 1;
        let f = (self.f)(self.xt, self.gt);
        let d = dot(self.gt, self.dir);
        if f.is_finite() && d.is_finite() {
            Trial { alpha, f, d }
        } else {
            Trial { alpha, f: f64::INFINITY, d: f64::NAN }
        }
    }
}

/// Strong Wolfe search after Nocedal and Wright (Alg. 3.5 with a cubic
/// zoom). On success the accepted point is the last one evaluated.
/// On failure returns the lowest trial seen, which may not be last.
fn strong_wolfe<F: FnMut(&[f64], &mut [f64]) -> f64>(
    phi: &mut LineFn<'_, F>,
    f0: f64,
    d0: f64,
    alpha0: f64,
    cfg: &LbfgsConfig,
) -> Result<Trial, Option<Trial>> {
    let armijo = |t: &Trial| t.f <= f0 + cfg.c1 * t.alpha * d0;
    let curvature = |t: &Trial| t.d.abs() <= -cfg.c2 * d0;
    let mut best: Option<Trial> = None;
    let keep = |t: &Trial, best: &mut Option<Trial>| {
        if t.f < best.as_ref().map_or(f0, |b| b.f) {
            *best = Some(Trial { alpha: t.alpha, f: t.f, d: t.d });
        }
    };

    let mut prev = Trial { alpha: 0.0, f: f0, d: d0 };
    let mut alpha = alpha0;
    let mut budget = cfg.max_line_evals;
    let (mut lo, mut hi);
    loop {
        if budget == 0 {
            return Err(best);
        }
        budget -= 1;
        let t = phi.eval(alpha);
        keep(&t, &mut best);
        if !t.f.is_finite() {
            // Step left the domain: shrink towards the last good point.
            alpha = prev.alpha + 0.25 * (alpha - prev.alpha);
            continue;
        }
        if !armijo(&t) || (prev.alpha > 0.0 && t.f >= prev.f) {
            lo = prev;
            hi = t;
            break;
        }
        if curvature(&t) {
            return Ok(t);
        }
        if t.d >= 0.0 {
            hi = prev;
            lo = t;
            break;
        }
        alpha = (4.0 * t.alpha).min(t.alpha + 1e3 * (t.alpha - prev.alpha).max(t.alpha));
        prev = t;
    }

    while budget > 0 {
        budget -= 1;
        if (hi.alpha - lo.alpha).abs() <= 1e-16 * lo.alpha.abs().max(1e-300) {
            break;
        }
        let a = if hi.f.is_finite() && hi.d.is_finite() {
            cubic_step(lo.alpha, lo.f, lo.d, hi.alpha, hi.f, hi.d)
        } else {
            0.5 * (lo.alpha + hi.alpha)
        };
        let t = phi.eval(a);
        keep(&t, &mut best);
        if !t.f.is_finite() || !armijo(&t) || t.f >= lo.f {
            hi = t;
        } else {
            if curvature(&t) {
                return Ok(t);
            }
            if t.d * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
    }
    Err(best)
}

/// Minimizes `f` from `x0`. The closure writes the gradient into its second
/// argument and returns the value.
pub fn inner_minimize<F>(mut f: F, x0: &[f64], cfg: &LbfgsConfig) -> Result<InnerResult, InnerError>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(InnerError::NonFiniteStart);
    }
    let mut evaluations = 1;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut dir = vec![0.0; n];
    let mut alpha_buf = vec![0.0; cfg.memory.max(1)];
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut status = InnerStatus::MaxIters;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if inf_norm(&g) <= cfg.tol {
            status = InnerStatus::Converged;
            break;
        }
        if cfg.deadline.is_some_and(|d| Instant::now() >= d) {
            status = InnerStatus::Deadline;
            break;
        }

        // Two-loop recursion: dir = -H g.
        dir.copy_from_slice(&g);
        for (i, (s, y, rho)) in history.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alpha_buf[i] = a;
            dir.iter_mut().zip(y).for_each(|(d, yi)| *d -= a * yi);
        }
        let gamma = history.back().map_or(1.0, |(s, y, _)| dot(s, y) / dot(y, y));
        dir.iter_mut().for_each(|d| *d *= gamma);
        for (i, (s, y, rho)) in history.iter().enumerate() {
            let b = rho * dot(y, &dir);
            let a = alpha_buf[i];
            dir.iter_mut().zip(s).for_each(|(d, si)| *d += (a - b) * si);
        }
        dir.iter_mut().for_each(|d| *d = -*d);
        let mut d0 = dot(&g, &dir);
        if !(d0 < 0.0) {
            history.clear();
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            d0 = dot(&g, &dir);
        }
        let alpha0 = if history.is_empty() { (1.0 / inf_norm(&g)).min(1.0) } else { 1.0 };

        let mut phi = LineFn { f: &mut f, x: &x, dir: &dir, xt: &mut xt, gt: &mut gt, evals: 0 };
        let outcome = strong_wolfe(&mut phi, fx, d0, alpha0, cfg);
        evaluations += phi.evals;
        let accepted = match outcome {
            Ok(t) => Some(t),
            Err(Some(best)) if best.f < fx => {
                // Re-evaluate so xt/gt hold the best point.
                let mut phi = LineFn { f: &mut f, x: &x, dir: &dir, xt: &mut xt, gt: &mut gt, evals: 0 };
                let t = phi.eval(best.alpha);
                evaluations += 1;
                Some(t)
            }
            Err(_) => None,
        };
        let Some(t) = accepted else {
            if history.is_empty() {
                status = InnerStatus::LineSearchFailed;
                break;
            }
            history.clear();
            iterations += 1;
            continue;
        };

        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            if cfg.memory > 0 {
                history.push_back((s, y, 1.0 / sy));
            }
        }
        x.copy_from_slice(&xt);
        g.copy_from_slice(&gt);
        fx = t.f;
        iterations += 1;
    }
    if status == InnerStatus::MaxIters && inf_norm(&g) <= cfg.tol {
        status = InnerStatus::Converged;
    }
    Ok(InnerResult { grad_norm: inf_norm(&g), x, f: fx, iterations, evaluations, status })
}
