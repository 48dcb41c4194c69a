//! The optimization in residual form: mission-time objective, the smooth
//! constraint group, the smoothed disjunctions, and the exact violation
//! metric every reported number is based on.

use serde::{Deserialize, Serialize};

use crate::model::{DecisionVector, Layout, Point, ProblemInstance};
use crate::problem::{ConstrainedProblem, ConstraintKind as K, Evaluation, Label, Rows, Weights};
use crate::smoothing::{Hinge, SmoothingConfig, SmoothingError, Softmin};

/// Regularizer of every norm and absolute value inside a constraint.
pub const NU: f64 = 1e-9;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TranscriptionError {
    #[error(transparent)]
    Smoothing(#[from] SmoothingError),
    #[error("decision vector layout does not match the instance")]
    LayoutMismatch,
    #[error("weights have shape ({eq}, {ineq}), residuals have ({want_eq}, {want_ineq})")]
    WeightShape { eq: usize, ineq: usize, want_eq: usize, want_ineq: usize },
}

/// Equality and inequality residuals with labels and gradients.
#[derive(Clone, Debug, Default)]
pub struct ResidualBundle {
    pub eq: Rows,
    pub ineq: Rows,
}

/// Exact violation split by constraint family. All components are ≥ 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationBreakdown {
    pub smooth_eq: f64,
    pub smooth_ineq: f64,
    pub task_visit: f64,
    pub arm_visit: f64,
    pub battery: f64,
    pub total: f64,
}

/// Per-constraint exact violations of the disjunctive group.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DisjunctionDetail {
    /// Distance from each task to its nearest UAV stamp (km).
    pub task_visit: Vec<f64>,
    /// Shortfall of each arm's deepest stamp from the arm end (km).
    pub arm_visit: Vec<f64>,
    /// Branch-min violation of each interval's battery disjunction.
    pub battery: Vec<f64>,
    /// Whether the charge branch attains the branch-min on each interval.
    pub charging: Vec<bool>,
}

fn smooth_norm(v: Point) -> (f64, Point) {
    let r = (v.norm_sq() + NU * NU).sqrt();
    (r - NU, v * (1.0 / r))
}

fn smooth_abs(a: f64) -> (f64, f64) {
    let r = a.hypot(NU);
    (r - NU, a / r)
}

fn point_at(x: &[f64], i: usize) -> Point {
    Point::new(x[i], x[i + 1])
}

/// Network positions and their Jacobians at every stamp.
pub(crate) struct UgvCache {
    pub(crate) pos: Vec<Point>,
    jac: Vec<Point>,
}

impl UgvCache {
    pub(crate) fn new(inst: &ProblemInstance, layout: Layout, x: &[f64]) -> Self {
        let m = layout.arms();
        let n = layout.stamps();
        let mut pos = Vec::with_capacity(n);
        let mut jac = vec![Point::ORIGIN; n * m];
        for k in 0..n {
            let p = &x[layout.arm_pos(k)..layout.arm_pos(k) + m];
            pos.push(inst.graph().position(p));
            inst.graph().jacobian_into(p, &mut jac[k * m..(k + 1) * m]);
        }
        Self { pos, jac }
    }

    pub(crate) fn jac(&self, k: usize, m: usize) -> &[Point] {
        &self.jac[k * m..(k + 1) * m]
    }
}

/// The smoothed optimization of one instance under one smoothing config.
#[derive(Clone, Debug)]
pub struct Transcription<'a> {
    inst: &'a ProblemInstance,
    layout: Layout,
    softmin: Softmin,
    hinge: Hinge,
}

impl<'a> Transcription<'a> {
    pub fn new(inst: &'a ProblemInstance, cfg: &SmoothingConfig) -> Result<Self, SmoothingError> {
        cfg.validate()?;
        Ok(Self { inst, layout: inst.layout(), softmin: cfg.softmin(), hinge: cfg.hinge() })
    }

    pub fn instance(&self) -> &ProblemInstance {
        self.inst
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn softmin(&self) -> Softmin {
        self.softmin
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        x[self.layout.durations()].iter().sum()
    }

    pub(crate) fn objective_gradient(&self, out: &mut Vec<(usize, f64)>) {
        out.extend(self.layout.durations().map(|i| (i, 1.0)));
    }

    pub(crate) fn emit_smooth(&self, x: &[f64], ugv: &UgvCache, eq: &mut Rows, ineq: &mut Rows) {
        let l = self.layout;
        let n = l.stamps();
        let m = l.arms();
        let prm = self.inst.params();
        let last = n - 1;

        for (kind, k, target) in [(K::InitialUav, 0, self.inst.r0()), (K::FinalUav, last, self.inst.rf())] {
            let i = l.uav(k);
            eq.push(Label::at_item(kind, k, 0), x[i] - target.x, &[(i, 1.0)]);
            eq.push(Label::at_item(kind, k, 1), x[i + 1] - target.y, &[(i + 1, 1.0)]);
        }
        let mut partials = Vec::with_capacity(m + 3);
        for (kind, k, target) in [(K::InitialUgv, 0, self.inst.r0()), (K::FinalUgv, last, self.inst.rf())] {
            let d = ugv.pos[k] - target;
            let jac = ugv.jac(k, m);
            for (c, v) in [(0, d.x), (1, d.y)] {
                partials.clear();
                partials.extend((0..m).map(|j| (l.arm_pos(k) + j, if c == 0 { jac[j].x } else { jac[j].y })));
                eq.push(Label::at_item(kind, k, c), v, &partials);
            }
        }
        eq.push(Label::at(K::InitialBattery, 0), x[l.battery(0)] - prm.e_max, &[(l.battery(0), 1.0)]);
        for k in 0..n {
            let p = &x[l.arm_pos(k)..l.arm_pos(k) + m];
            let sum: f64 = p.iter().sum();
            let sq: f64 = p.iter().map(|v| v * v).sum();
            partials.clear();
            partials.extend(p.iter().enumerate().map(|(j, &pj)| (l.arm_pos(k) + j, 2.0 * (sum - pj))));
            eq.push(Label::at(K::Complementarity, k), sum * sum - sq, &partials);
        }

        for k in 0..last {
            let (a, b) = (l.uav(k), l.uav(k + 1));
            let (len, u) = smooth_norm(point_at(x, b) - point_at(x, a));
            let sk = l.duration(k);
            ineq.push(
                Label::at(K::UavSpeed, k),
                len - prm.v_max_uav * x[sk],
                &[(b, u.x), (b + 1, u.y), (a, -u.x), (a + 1, -u.y), (sk, -prm.v_max_uav)],
            );
        }
        for k in 0..last {
            let sk = l.duration(k);
            partials.clear();
            let mut total = 0.0;
            for j in 0..m {
                let (v, d) = smooth_abs(x[l.arm_pos(k + 1) + j] - x[l.arm_pos(k) + j]);
                total += v;
                partials.push((l.arm_pos(k + 1) + j, d));
                partials.push((l.arm_pos(k) + j, -d));
            }
            partials.push((sk, -prm.v_max_ugv));
            ineq.push(Label::at(K::UgvSpeed, k), total - prm.v_max_ugv * x[sk], &partials);
        }
        for k in 0..n {
            let i = l.battery(k);
            ineq.push(Label::at(K::BatteryLower, k), prm.e_min - x[i], &[(i, -1.0)]);
            ineq.push(Label::at(K::BatteryUpper, k), x[i] - prm.e_max, &[(i, 1.0)]);
        }
        for k in 0..last {
            let i = l.duration(k);
            ineq.push(Label::at(K::DurationLower, k), prm.s_min - x[i], &[(i, -1.0)]);
            ineq.push(Label::at(K::DurationUpper, k), x[i] - prm.s_max, &[(i, 1.0)]);
        }
        let p_max = self.inst.graph().p_max();
        for k in 0..n {
            for (j, &pm) in p_max.iter().enumerate() {
                let i = l.arm_pos(k) + j;
                ineq.push(Label::at_item(K::ArmLower, k, j), -x[i], &[(i, -1.0)]);
                ineq.push(Label::at_item(K::ArmUpper, k, j), x[i] - pm, &[(i, 1.0)]);
            }
        }
    }

    fn emit_disjunctive(&self, x: &[f64], ugv: &UgvCache, eq: &mut Rows) {
        let l = self.layout;
        let n = l.stamps();
        let m = l.arms();
        let kappa = self.inst.params().kappa;
        let mut c = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut dirs = vec![Point::ORIGIN; n];
        let mut partials = Vec::with_capacity(2 * n + 4 * m + 8);

        for (i, &a) in self.inst.uav_tasks().iter().enumerate() {
            for k in 0..n {
                let (v, u) = smooth_norm(point_at(x, l.uav(k)) - a);
                c[k] = v;
                dirs[k] = u;
            }
            let value = self.softmin.eval(&c, &mut w);
            partials.clear();
            for k in 0..n {
                partials.push((l.uav(k), w[k] * dirs[k].x));
                partials.push((l.uav(k) + 1, w[k] * dirs[k].y));
            }
            eq.push(Label::item(K::TaskVisit, i), value, &partials);
        }

        let p_max = self.inst.graph().p_max();
        for (j, &pm) in p_max.iter().enumerate() {
            for k in 0..n {
                let (v, d) = smooth_abs(x[l.arm_pos(k) + j] - pm);
                c[k] = v;
                dirs[k].x = d;
            }
            let value = self.softmin.eval(&c, &mut w);
            partials.clear();
            partials.extend((0..n).map(|k| (l.arm_pos(k) + j, w[k] * dirs[k].x)));
            eq.push(Label::item(K::ArmVisit, j), value, &partials);
        }

        let mut bw = [0.0; 2];
        for k in 0..n - 1 {
            let (e0, e1, s) = (l.battery(k), l.battery(k + 1), l.duration(k));
            let alpha = x[e1] - x[e0] - kappa * x[s];
            let sig = self.hinge.value(alpha);
            let dsig = self.hinge.derivative(alpha);
            let d0 = point_at(x, l.uav(k)) - ugv.pos[k];
            let d1 = point_at(x, l.uav(k + 1)) - ugv.pos[k + 1];
            let r = (sig * sig + d0.norm_sq() + d1.norm_sq() + NU * NU).sqrt();
            let b1 = r - NU;
            let (b2, db2) = smooth_abs(x[e1] - x[e0] + x[s]);
            let value = self.softmin.eval(&[b1, b2], &mut bw);

            let g1 = bw[0] / r;
            let hs = g1 * sig * dsig;
            partials.clear();
            partials.push((e1, hs + bw[1] * db2));
            partials.push((e0, -hs - bw[1] * db2));
            partials.push((s, -kappa * hs + bw[1] * db2));
            for (kk, d) in [(k, d0), (k + 1, d1)] {
                let u = l.uav(kk);
                partials.push((u, g1 * d.x));
                partials.push((u + 1, g1 * d.y));
                for (jj, t) in ugv.jac(kk, m).iter().enumerate() {
                    partials.push((l.arm_pos(kk) + jj, -g1 * d.dot(*t)));
                }
            }
            eq.push(Label::at(K::Battery, k), value, &partials);
        }
    }

    /// Smooth constraint group at `x`.
    pub fn smooth_bundle(&self, x: &[f64]) -> ResidualBundle {
        let ugv = UgvCache::new(self.inst, self.layout, x);
        let mut out = ResidualBundle::default();
        self.emit_smooth(x, &ugv, &mut out.eq, &mut out.ineq);
        out
    }

    /// Smoothed disjunctive residuals at `x` (all equalities).
    pub fn disjunctive_bundle(&self, x: &[f64]) -> ResidualBundle {
        let ugv = UgvCache::new(self.inst, self.layout, x);
        let mut out = ResidualBundle::default();
        self.emit_disjunctive(x, &ugv, &mut out.eq);
        out
    }
}

impl ConstrainedProblem for Transcription<'_> {
    fn dim(&self) -> usize {
        self.layout.len()
    }

    /// Equalities are the smooth group's followed by the disjunctions.
    fn evaluate(&self, x: &[f64], out: &mut Evaluation) {
        out.clear();
        out.objective = self.objective(x);
        self.objective_gradient(&mut out.objective_grad);
        let ugv = UgvCache::new(self.inst, self.layout, x);
        self.emit_smooth(x, &ugv, &mut out.eq, &mut out.ineq);
        self.emit_disjunctive(x, &ugv, &mut out.eq);
    }

    fn violation(&self, x: &[f64]) -> f64 {
        exact_breakdown(self.inst, x).total
    }
}

/// Exact violation of the smooth group as (equality part, inequality part).
pub(crate) fn exact_smooth(inst: &ProblemInstance, x: &[f64]) -> (f64, f64) {
    let l = inst.layout();
    let n = l.stamps();
    let m = l.arms();
    let prm = inst.params();
    let g = inst.graph();
    let arm = |k: usize| &x[l.arm_pos(k)..l.arm_pos(k) + m];
    let pos = |k: usize| point_at(x, l.uav(k));

    let mut eq = 0.0;
    for (k, target) in [(0, inst.r0()), (n - 1, inst.rf())] {
        let d = pos(k) - target;
        let dg = g.position(arm(k)) - target;
        eq += d.x.abs() + d.y.abs() + dg.x.abs() + dg.y.abs();
    }
    eq += (x[l.battery(0)] - prm.e_max).abs();
    for k in 0..n {
        let p = arm(k);
        let sum: f64 = p.iter().sum();
        let sq: f64 = p.iter().map(|v| v * v).sum();
        eq += (sum * sum - sq).abs();
    }

    let pos_part = |v: f64| v.max(0.0);
    let mut ineq = 0.0;
    for k in 0..n - 1 {
        let s = x[l.duration(k)];
        ineq += pos_part(pos(k + 1).distance(pos(k)) - prm.v_max_uav * s);
        let ugv: f64 = arm(k + 1).iter().zip(arm(k)).map(|(a, b)| (a - b).abs()).sum();
        ineq += pos_part(ugv - prm.v_max_ugv * s);
        ineq += pos_part(prm.s_min - s) + pos_part(s - prm.s_max);
    }
    for k in 0..n {
        let e = x[l.battery(k)];
        ineq += pos_part(prm.e_min - e) + pos_part(e - prm.e_max);
    }
    let p_max = g.p_max();
    for k in 0..n {
        for (&pj, &pm) in arm(k).iter().zip(&p_max) {
            ineq += pos_part(-pj) + pos_part(pj - pm);
        }
    }
    (eq, ineq)
}

/// Exact branch-min violations of every disjunction.
pub fn disjunction_detail(inst: &ProblemInstance, x: &[f64]) -> DisjunctionDetail {
    let l = inst.layout();
    let n = l.stamps();
    let m = l.arms();
    let g = inst.graph();
    let kappa = inst.params().kappa;
    let pos = |k: usize| point_at(x, l.uav(k));
    let ugv: Vec<Point> = (0..n).map(|k| g.position(&x[l.arm_pos(k)..l.arm_pos(k) + m])).collect();

    let task_visit =
        inst.uav_tasks().iter().map(|&a| (0..n).map(|k| pos(k).distance(a)).fold(f64::INFINITY, f64::min)).collect();
    let arm_visit = g
        .p_max()
        .iter()
        .enumerate()
        .map(|(j, &pm)| (0..n).map(|k| (x[l.arm_pos(k) + j] - pm).abs()).fold(f64::INFINITY, f64::min))
        .collect();
    let mut battery = Vec::with_capacity(n - 1);
    let mut charging = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let (e0, e1, s) = (x[l.battery(k)], x[l.battery(k + 1)], x[l.duration(k)]);
        let over = (e1 - e0 - kappa * s).max(0.0);
        let charge = (over * over + pos(k).distance(ugv[k]).powi(2) + pos(k + 1).distance(ugv[k + 1]).powi(2)).sqrt();
        let discharge = (e1 - e0 + s).abs();
        battery.push(charge.min(discharge));
        charging.push(charge < discharge);
    }
    DisjunctionDetail { task_visit, arm_visit, battery, charging }
}

pub(crate) fn exact_breakdown(inst: &ProblemInstance, x: &[f64]) -> ViolationBreakdown {
    let (smooth_eq, smooth_ineq) = exact_smooth(inst, x);
    let d = disjunction_detail(inst, x);
    let task_visit: f64 = d.task_visit.iter().sum();
    let arm_visit: f64 = d.arm_visit.iter().sum();
    let battery: f64 = d.battery.iter().sum();
    ViolationBreakdown {
        smooth_eq,
        smooth_ineq,
        task_visit,
        arm_visit,
        battery,
        total: smooth_eq + smooth_ineq + task_visit + arm_visit + battery,
    }
}

fn check_layout(x: &DecisionVector, inst: &ProblemInstance) -> Result<(), TranscriptionError> {
    if x.layout() == inst.layout() {
        Ok(())
    } else {
        Err(TranscriptionError::LayoutMismatch)
    }
}

/// Total mission time `Σ s_k` in hours.
pub fn objective(x: &DecisionVector) -> f64 {
    x.durations().iter().sum()
}

pub fn smooth_residuals(x: &DecisionVector, inst: &ProblemInstance) -> Result<ResidualBundle, TranscriptionError> {
    check_layout(x, inst)?;
    let t = Transcription::new(inst, &SmoothingConfig::default())?;
    Ok(t.smooth_bundle(x.as_slice()))
}

pub fn disjunctive_residuals(
    x: &DecisionVector,
    inst: &ProblemInstance,
    cfg: &SmoothingConfig,
) -> Result<ResidualBundle, TranscriptionError> {
    check_layout(x, inst)?;
    Ok(Transcription::new(inst, cfg)?.disjunctive_bundle(x.as_slice()))
}

/// Exact, unsmoothed violation of every constraint.
pub fn violation_report(x: &DecisionVector, inst: &ProblemInstance) -> Result<ViolationBreakdown, TranscriptionError> {
    check_layout(x, inst)?;
    Ok(exact_breakdown(inst, x.as_slice()))
}

/// Gradient of a weighted sum of the objective and all residuals, with
/// weights ordered as in [`ConstrainedProblem::evaluate`].
pub fn full_gradient(
    x: &DecisionVector,
    inst: &ProblemInstance,
    cfg: &SmoothingConfig,
    weights: &Weights,
) -> Result<Vec<f64>, TranscriptionError> {
    check_layout(x, inst)?;
    let t = Transcription::new(inst, cfg)?;
    let mut ev = Evaluation::default();
    t.evaluate(x.as_slice(), &mut ev);
    if weights.eq.len() != ev.eq.len() || weights.ineq.len() != ev.ineq.len() {
        return Err(TranscriptionError::WeightShape {
            eq: weights.eq.len(),
            ineq: weights.ineq.len(),
            want_eq: ev.eq.len(),
            want_ineq: ev.ineq.len(),
        });
    }
    let mut out = vec![0.0; t.dim()];
    ev.weighted_gradient(weights, &mut out);
    Ok(out)
}

/// One row of a solution file. `k` is zero-based; `s` is absent on the
/// last stamp; `charging` describes the interval that starts at `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StampRecord {
    pub k: usize,
    pub t: f64,
    pub uav: Point,
    pub ugv: Point,
    pub p: Vec<f64>,
    pub e: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charging: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub objective: f64,
    pub breakdown: ViolationBreakdown,
    pub stamps: Vec<StampRecord>,
}

impl SolutionRecord {
    pub fn new(x: &DecisionVector, inst: &ProblemInstance) -> Result<Self, TranscriptionError> {
        let breakdown = violation_report(x, inst)?;
        let detail = disjunction_detail(inst, x.as_slice());
        let n = inst.stamps();
        let mut t = 0.0;
        let mut stamps = Vec::with_capacity(n);
        for k in 0..n {
            let p = x.arm_positions(k).to_vec();
            let s = (k + 1 < n).then(|| x.duration(k));
            stamps.push(StampRecord {
                k,
                t,
                uav: x.uav(k),
                ugv: inst.graph().position(&p),
                p,
                e: x.battery(k),
                s,
                charging: detail.charging.get(k).copied(),
            });
            t += s.unwrap_or(0.0);
        }
        Ok(Self { objective: objective(x), breakdown, stamps })
    }

    /// Flat CSV: `k,t,uav_x,uav_y,ugv_x,ugv_y,p_0..p_{m-1},e,s,charging`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let arms = self.stamps.first().map_or(0, |s| s.p.len());
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["k", "t", "uav_x", "uav_y", "ugv_x", "ugv_y"].map(String::from).to_vec();
        header.extend((0..arms).map(|j| format!("p_{j}")));
        header.extend(["e", "s", "charging"].map(String::from));
        out.write_record(&header)?;
        for s in &self.stamps {
            let mut row = vec![
                s.k.to_string(),
                s.t.to_string(),
                s.uav.x.to_string(),
                s.uav.y.to_string(),
                s.ugv.x.to_string(),
                s.ugv.y.to_string(),
            ];
            row.extend(s.p.iter().map(f64::to_string));
            row.push(s.e.to_string());
            row.push(s.s.map_or_else(String::new, |v| v.to_string()));
            row.push(s.charging.map_or_else(String::new, |c| u8::from(c).to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}
