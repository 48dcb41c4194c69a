//! Big-M mixed-integer encoding of the mission and an enumeration oracle
//! for tiny instances.
//!
//! Binary conventions: `u[k][i] = 1` puts task `i` at stamp `k`, `v[k][j] = 1`
//! puts the end of arm `j` at stamp `k`, and `w[k] = 1` selects the
//! discharge branch on interval `k` (`w[k] = 0` means riding and charging).
//! With an assignment fixed, the remaining problem is a smooth NLP solved by
//! the same augmented-Lagrangian loop as the relaxation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alm::{minimize, AlmConfig, AlmError, AlmOutcome};
use crate::model::{DecisionVector, NetworkPoint, Point, ProblemInstance};
use crate::problem::{ConstrainedProblem, ConstraintKind as K, Evaluation, Label, Rows};
use crate::smoothing::SmoothingConfig;
use crate::transcription::{disjunction_detail, exact_breakdown, ResidualBundle, Transcription, UgvCache};

/// Positions closer than this are treated as coincident by the pruning rules.
const COINCIDE: f64 = 1e-9;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MinlpError {
    #[error("big-M constant {mu} does not exceed the required {required}")]
    MuTooSmall { mu: f64, required: f64 },
    #[error("assignment shape does not match {stamps} stamps, {tasks} tasks, {arms} arms")]
    Shape { stamps: usize, tasks: usize, arms: usize },
    #[error("assignment entries must be 0 or 1")]
    NotBinary,
    #[error("{what} {index} is assigned to {count} stamps instead of one")]
    RowSum { what: &'static str, index: usize, count: usize },
    #[error("decision vector layout does not match the instance")]
    LayoutMismatch,
    #[error("instance exceeds oracle limits: N = {stamps} (max {max_n}), m_A = {tasks} (max {max_ma}), m_G = {arms} (max {max_mg})")]
    Limits { stamps: usize, tasks: usize, arms: usize, max_n: usize, max_ma: usize, max_mg: usize },
    #[error(transparent)]
    Alm(#[from] AlmError),
}

/// The big-M program of one instance.
#[derive(Clone, Copy, Debug)]
pub struct MinlpModel<'a> {
    inst: &'a ProblemInstance,
    mu: f64,
}

impl<'a> MinlpModel<'a> {
    /// Smallest constant that leaves every deactivated row slack: it covers
    /// the instance diameter, the longest arm, and any battery swing.
    pub fn required_mu(inst: &ProblemInstance) -> f64 {
        let (lo, hi) = inst.bounding_box();
        let prm = inst.params();
        let longest = inst.graph().p_max().into_iter().fold(0.0, f64::max);
        let swing = prm.e_max + prm.kappa * prm.s_max * inst.stamps() as f64;
        (hi - lo).norm().max(longest).max(swing)
    }

    pub fn new(inst: &'a ProblemInstance) -> Self {
        Self { inst, mu: 10.0 * Self::required_mu(inst) }
    }

    pub fn with_mu(inst: &'a ProblemInstance, mu: f64) -> Result<Self, MinlpError> {
        let required = Self::required_mu(inst);
        if mu > required {
            Ok(Self { inst, mu })
        } else {
            Err(MinlpError::MuTooSmall { mu, required })
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn instance(&self) -> &'a ProblemInstance {
        self.inst
    }
}

/// One setting of the binaries, stored as 0/1 matrices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryAssignment {
    /// `u[k][i]`, shape N × m_A.
    pub u: Vec<Vec<u8>>,
    /// `v[k][j]`, shape N × m_G.
    pub v: Vec<Vec<u8>>,
    /// `w[k]`, length N − 1; 1 is discharge.
    pub w: Vec<u8>,
}

impl BinaryAssignment {
    /// Builds the matrices from the stamp of every task and arm end.
    pub fn from_choices(stamps: usize, task_stamps: &[usize], arm_stamps: &[usize], discharge: &[bool]) -> Self {
        let mut u = vec![vec![0; task_stamps.len()]; stamps];
        for (i, &k) in task_stamps.iter().enumerate() {
            u[k][i] = 1;
        }
        let mut v = vec![vec![0; arm_stamps.len()]; stamps];
        for (j, &k) in arm_stamps.iter().enumerate() {
            v[k][j] = 1;
        }
        Self { u, v, w: discharge.iter().map(|&d| u8::from(d)).collect() }
    }

    /// Reads the active branch of every disjunction off a continuous point:
    /// each task and arm goes to its closest stamp, and an interval charges
    /// when the charge branch is the less violated one.
    pub fn identify(inst: &ProblemInstance, x: &[f64]) -> Self {
        let l = inst.layout();
        let n = l.stamps();
        let argmin =
            |f: &dyn Fn(usize) -> f64| (0..n).min_by(|&a, &b| f(a).total_cmp(&f(b))).expect("at least two stamps");
        let tasks: Vec<usize> = inst
            .uav_tasks()
            .iter()
            .map(|&a| argmin(&|k| Point::new(x[l.uav(k)], x[l.uav(k) + 1]).distance(a)))
            .collect();
        let arms: Vec<usize> = inst
            .graph()
            .p_max()
            .iter()
            .enumerate()
            .map(|(j, &pm)| argmin(&|k| (x[l.arm_pos(k) + j] - pm).abs()))
            .collect();
        let detail = disjunction_detail(inst, x);
        let discharge: Vec<bool> = detail.charging.iter().map(|c| !c).collect();
        Self::from_choices(n, &tasks, &arms, &discharge)
    }

    pub fn validate(&self, stamps: usize, tasks: usize, arms: usize) -> Result<(), MinlpError> {
        let shape = MinlpError::Shape { stamps, tasks, arms };
        if self.u.len() != stamps || self.v.len() != stamps || self.w.len() + 1 != stamps {
            return Err(shape);
        }
        if self.u.iter().any(|r| r.len() != tasks) || self.v.iter().any(|r| r.len() != arms) {
            return Err(shape);
        }
        let all = self.u.iter().flatten().chain(self.v.iter().flatten()).chain(&self.w);
        if all.into_iter().any(|&b| b > 1) {
            return Err(MinlpError::NotBinary);
        }
        for i in 0..tasks {
            let count = self.u.iter().filter(|r| r[i] == 1).count();
            if count != 1 {
                return Err(MinlpError::RowSum { what: "task", index: i, count });
            }
        }
        for j in 0..arms {
            let count = self.v.iter().filter(|r| r[j] == 1).count();
            if count != 1 {
                return Err(MinlpError::RowSum { what: "arm", index: j, count });
            }
        }
        Ok(())
    }

    /// Stamp of task `i` (the first one set, if several are).
    pub fn task_stamp(&self, i: usize) -> usize {
        self.u.iter().position(|r| r[i] == 1).unwrap_or(0)
    }

    pub fn arm_stamp(&self, j: usize) -> usize {
        self.v.iter().position(|r| r[j] == 1).unwrap_or(0)
    }

    fn discharges(&self, k: usize) -> bool {
        self.w[k] == 1
    }
}

fn comp(p: Point, c: usize) -> f64 {
    if c == 0 {
        p.x
    } else {
        p.y
    }
}

/// Emits the gated inequalities `(row) − M·slack ≤ 0`, with every ∞-norm
/// bound split into componentwise pairs.
fn emit_gates(
    inst: &ProblemInstance,
    mu: f64,
    assign: &BinaryAssignment,
    gate_battery: bool,
    x: &[f64],
    ugv: &UgvCache,
    out: &mut Rows,
) {
    let l = inst.layout();
    let n = l.stamps();
    let m = l.arms();
    let kappa = inst.params().kappa;
    for k in 0..n {
        for (i, &a) in inst.uav_tasks().iter().enumerate() {
            let slack = mu * f64::from(1 - assign.u[k][i]);
            for c in 0..2 {
                let col = l.uav(k) + c;
                let d = x[col] - comp(a, c);
                out.push(Label::at_item(K::TaskGate, k, i), d - slack, &[(col, 1.0)]);
                out.push(Label::at_item(K::TaskGate, k, i), -d - slack, &[(col, -1.0)]);
            }
        }
        for (j, &pm) in inst.graph().p_max().iter().enumerate() {
            let slack = mu * f64::from(1 - assign.v[k][j]);
            let col = l.arm_pos(k) + j;
            let d = x[col] - pm;
            out.push(Label::at_item(K::ArmGate, k, j), d - slack, &[(col, 1.0)]);
            out.push(Label::at_item(K::ArmGate, k, j), -d - slack, &[(col, -1.0)]);
        }
    }
    if !gate_battery {
        return;
    }
    let mut partials = Vec::with_capacity(m + 1);
    for k in 0..n - 1 {
        let w = f64::from(assign.w[k]);
        let (i0, i1, is) = (l.battery(k), l.battery(k + 1), l.duration(k));
        let d = x[i1] - x[i0] + x[is];
        let label = Label::at(K::DischargeGate, k);
        out.push(label, d - mu * (1.0 - w), &[(i1, 1.0), (i0, -1.0), (is, 1.0)]);
        out.push(label, -d - mu * (1.0 - w), &[(i1, -1.0), (i0, 1.0), (is, -1.0)]);
        let rate = x[i1] - x[i0] - kappa * x[is];
        out.push(Label::at(K::ChargeRateGate, k), rate - mu * w, &[(i1, 1.0), (i0, -1.0), (is, -kappa)]);
        for (side, kk) in [k, k + 1].into_iter().enumerate() {
            let jac = ugv.jac(kk, m);
            for c in 0..2 {
                let d = x[l.uav(kk) + c] - comp(ugv.pos[kk], c);
                let label = Label::at_item(K::RendezvousGate, k, 2 * side + c);
                for sign in [1.0, -1.0] {
                    partials.clear();
                    partials.push((l.uav(kk) + c, sign));
                    partials.extend(jac.iter().enumerate().map(|(j, g)| (l.arm_pos(kk) + j, -sign * comp(*g, c))));
                    out.push(label, sign * d - mu * w, &partials);
                }
            }
        }
    }
}

/// Big-M inequality residuals of `assign` at `x` (all rows are `≤ 0`).
pub fn big_m_residuals(
    x: &DecisionVector,
    assign: &BinaryAssignment,
    model: &MinlpModel<'_>,
) -> Result<ResidualBundle, MinlpError> {
    let inst = model.inst;
    if x.layout() != inst.layout() {
        return Err(MinlpError::LayoutMismatch);
    }
    assign.validate(inst.stamps(), inst.task_count(), inst.arm_count())?;
    let ugv = UgvCache::new(inst, inst.layout(), x.as_slice());
    let mut out = ResidualBundle::default();
    emit_gates(inst, model.mu, assign, true, x.as_slice(), &ugv, &mut out.ineq);
    Ok(out)
}

/// The smooth group plus the gated rows of one assignment. With
/// `gate_battery` off the battery disjunctions are dropped entirely, which
/// relaxes every completion of the task and arm choices.
#[derive(Clone, Debug)]
pub struct FixedAssignment<'a> {
    smooth: Transcription<'a>,
    mu: f64,
    assign: BinaryAssignment,
    gate_battery: bool,
}

impl<'a> FixedAssignment<'a> {
    pub fn new(model: &MinlpModel<'a>, assign: BinaryAssignment, gate_battery: bool) -> Result<Self, MinlpError> {
        let inst = model.inst;
        assign.validate(inst.stamps(), inst.task_count(), inst.arm_count())?;
        let smooth = Transcription::new(inst, &SmoothingConfig::default()).expect("default smoothing is valid");
        Ok(Self { smooth, mu: model.mu, assign, gate_battery })
    }

    pub fn assignment(&self) -> &BinaryAssignment {
        &self.assign
    }
}

impl ConstrainedProblem for FixedAssignment<'_> {
    fn dim(&self) -> usize {
        self.smooth.layout().len()
    }

    fn evaluate(&self, x: &[f64], out: &mut Evaluation) {
        out.clear();
        out.objective = self.smooth.objective(x);
        self.smooth.objective_gradient(&mut out.objective_grad);
        let inst = self.smooth.instance();
        let ugv = UgvCache::new(inst, self.smooth.layout(), x);
        self.smooth.emit_smooth(x, &ugv, &mut out.eq, &mut out.ineq);
        emit_gates(inst, self.mu, &self.assign, self.gate_battery, x, &ugv, &mut out.ineq);
    }

    /// The exact violation of the original program: a point that satisfies
    /// its gates is feasible there, and a feasible point is all that matters.
    fn violation(&self, x: &[f64]) -> f64 {
        if self.gate_battery {
            exact_breakdown(self.smooth.instance(), x).total
        } else {
            let b = exact_breakdown(self.smooth.instance(), x);
            b.total - b.battery
        }
    }
}

/// Re-solves the smooth program with every disjunction pinned to the branch
/// `x` already favours. Removes the residual violation the softmin cannot
/// see, such as a slight overcharge on a charging interval.
pub(crate) fn polish(inst: &ProblemInstance, x: &[f64], cfg: &AlmConfig) -> Result<AlmOutcome, AlmError> {
    let model = MinlpModel::new(inst);
    let assign = BinaryAssignment::identify(inst, x);
    let problem = FixedAssignment::new(&model, assign, true).expect("identified assignments are well formed");
    minimize(&problem, x, cfg)
}

/// Size limits of the enumeration oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleLimits {
    pub max_n: usize,
    pub max_ma: usize,
    pub max_mg: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self { max_n: 6, max_ma: 2, max_mg: 2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleStatus {
    Optimal,
    Infeasible,
}

/// Result of [`solve_exact`].
#[derive(Clone, Debug)]
pub struct OracleReport {
    pub status: OracleStatus,
    pub objective: Option<f64>,
    pub x: Option<DecisionVector>,
    pub assignment: Option<BinaryAssignment>,
    /// Continuous subproblems solved.
    pub subproblems: usize,
    /// Complete binary assignments meeting the row sums, `N^(m^A + m^G) · 2^(N−1)`;
    /// an exhaustive enumeration covers all of them.
    pub space: u64,
    /// Complete binary patterns left after static pruning.
    pub patterns: u64,
    /// Patterns discarded by bounds without a solve.
    pub pruned: u64,
    pub wall_s: f64,
}

/// Serializable summary of an [`OracleReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub status: OracleStatus,
    pub objective: Option<f64>,
    pub assignment: Option<BinaryAssignment>,
    pub subproblems: usize,
    pub space: u64,
    pub patterns: u64,
    pub pruned: u64,
    pub wall_s: f64,
}

impl OracleReport {
    pub fn record(&self) -> OracleRecord {
        OracleRecord {
            status: self.status,
            objective: self.objective,
            assignment: self.assignment.clone(),
            subproblems: self.subproblems,
            space: self.space,
            patterns: self.patterns,
            pruned: self.pruned,
            wall_s: self.wall_s,
        }
    }
}

/// Exact violation a subproblem solution may keep and still count as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-6;

fn subproblem_config() -> AlmConfig {
    AlmConfig { target_violation: 1e-8, polish: false, ..AlmConfig::default() }
}

fn end_point(inst: &ProblemInstance, j: usize) -> NetworkPoint {
    NetworkPoint { arm: j, t: inst.graph().arms()[j].length() }
}

/// Static facts used to prune patterns before any solve.
struct Statics {
    n: usize,
    /// Tasks farther than this from the network cannot be reached by a riding UAV.
    off_network: Vec<bool>,
    allowed_task: Vec<Vec<bool>>,
    allowed_arm: Vec<Vec<bool>>,
}

impl Statics {
    fn new(inst: &ProblemInstance) -> Self {
        let n = inst.stamps();
        let g = inst.graph();
        let fixed = |k: usize| -> Option<Point> {
            if k == 0 {
                Some(inst.r0())
            } else if k == n - 1 {
                Some(inst.rf())
            } else {
                None
            }
        };
        let ok = |target: Point, k: usize| fixed(k).is_none_or(|q| q.distance(target) <= COINCIDE);
        let allowed_task = inst.uav_tasks().iter().map(|&a| (0..n).map(|k| ok(a, k)).collect()).collect();
        let allowed_arm =
            (0..inst.arm_count()).map(|j| (0..n).map(|k| ok(g.point(end_point(inst, j)), k)).collect()).collect();
        let off_network = inst.uav_tasks().iter().map(|&a| g.distance_to_network(a) > COINCIDE).collect();
        Self { n, off_network, allowed_task, allowed_arm }
    }

    /// Whether the UAV and UGV can share a position at stamp `k`.
    fn can_meet(&self, inst: &ProblemInstance, tasks: &[usize], arms: &[usize], k: usize) -> bool {
        let g = inst.graph();
        for (i, &ki) in tasks.iter().enumerate() {
            if ki != k {
                continue;
            }
            if self.off_network[i] {
                return false;
            }
            let a = inst.uav_tasks()[i];
            if arms.iter().enumerate().any(|(j, &kj)| kj == k && g.point(end_point(inst, j)).distance(a) > COINCIDE) {
                return false;
            }
        }
        true
    }

    /// Intervals on which charging is statically possible.
    fn chargeable(&self, inst: &ProblemInstance, tasks: &[usize], arms: &[usize]) -> Vec<bool> {
        let meet: Vec<bool> = (0..self.n).map(|k| self.can_meet(inst, tasks, arms, k)).collect();
        (0..self.n - 1).map(|k| meet[k] && meet[k + 1]).collect()
    }
}

/// Mission-time lower bound of a task and arm schedule: both vehicles must
/// traverse their visits in stamp order at full speed.
fn schedule_bound(inst: &ProblemInstance, tasks: &[usize], arms: &[usize]) -> f64 {
    let prm = inst.params();
    let g = inst.graph();
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.sort_by_key(|&i| tasks[i]);
    let mut uav = 0.0;
    let mut at = inst.r0();
    for &i in &order {
        uav += at.distance(inst.uav_tasks()[i]);
        at = inst.uav_tasks()[i];
    }
    uav += at.distance(inst.rf());

    let mut order: Vec<usize> = (0..arms.len()).collect();
    order.sort_by_key(|&j| arms[j]);
    let mut ugv = 0.0;
    let mut at = g.project(inst.r0()).network_point();
    for &j in &order {
        ugv += at.network_distance(end_point(inst, j));
        at = end_point(inst, j);
    }
    ugv += at.network_distance(g.project(inst.rf()).network_point());

    let floor = prm.s_min * (inst.stamps() - 1) as f64;
    (uav / prm.v_max_uav).max(ugv / prm.v_max_ugv).max(floor)
}

/// A task whose round trip from the network exceeds the usable battery can
/// never be served: charging needs the UGV, and the UGV stays on the network.
fn energy_infeasible(inst: &ProblemInstance) -> bool {
    let prm = inst.params();
    let budget = prm.e_max - prm.e_min;
    inst.uav_tasks().iter().any(|&a| 2.0 * inst.graph().distance_to_network(a) / prm.v_max_uav > budget + 1e-12)
}

/// A starting point that honours an assignment: visits sit at their stamps,
/// the gaps are interpolated, and the battery follows the branch choices.
/// `jitter` perturbs the free positions and the durations.
pub fn assignment_seed(inst: &ProblemInstance, assign: &BinaryAssignment, jitter: Option<u64>) -> DecisionVector {
    let n = inst.stamps();
    let m = inst.arm_count();
    let g = inst.graph();
    let prm = inst.params();
    let mut uav: Vec<Option<Point>> = vec![None; n];
    let mut ugv: Vec<Option<NetworkPoint>> = vec![None; n];
    uav[0] = Some(inst.r0());
    uav[n - 1] = Some(inst.rf());
    ugv[0] = Some(g.project(inst.r0()).network_point());
    ugv[n - 1] = Some(g.project(inst.rf()).network_point());
    let mut pinned = vec![false; n];
    for (i, &a) in inst.uav_tasks().iter().enumerate() {
        let k = assign.task_stamp(i);
        uav[k] = Some(a);
        pinned[k] = true;
    }
    for j in 0..m {
        ugv[assign.arm_stamp(j)] = Some(end_point(inst, j));
    }
    for k in 0..n {
        match (uav[k], ugv[k]) {
            (Some(q), None) => ugv[k] = Some(g.project(q).network_point()),
            (None, Some(p)) => uav[k] = Some(g.point(p)),
            _ => {}
        }
    }
    let anchors: Vec<usize> = (0..n).filter(|&k| uav[k].is_some()).collect();
    for w in anchors.windows(2) {
        let (a, b) = (w[0], w[1]);
        for k in a + 1..b {
            let frac = (k - a) as f64 / (b - a) as f64;
            uav[k] = Some(uav[a].unwrap().lerp(uav[b].unwrap(), frac));
            ugv[k] = Some(ugv[a].unwrap().interpolate(ugv[b].unwrap(), frac));
        }
    }
    let mut uav: Vec<Point> = uav.into_iter().map(|p| p.expect("every stamp filled")).collect();
    let ugv: Vec<NetworkPoint> = ugv.into_iter().map(|p| p.expect("every stamp filled")).collect();

    let mut rng = jitter.map(ChaCha8Rng::seed_from_u64);
    if let Some(rng) = rng.as_mut() {
        for k in 1..n - 1 {
            if !pinned[k] {
                uav[k] = uav[k] + Point::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
            }
        }
    }

    let mut x = DecisionVector::zeros(inst.layout());
    for k in 0..n {
        x.set_uav(k, uav[k]);
        x.arm_positions_mut(k).copy_from_slice(&ugv[k].to_arm_vector(m));
    }
    let mut e = prm.e_max;
    x.set_battery(0, e);
    for k in 0..n - 1 {
        let leg =
            (uav[k].distance(uav[k + 1]) / prm.v_max_uav).max(ugv[k].network_distance(ugv[k + 1]) / prm.v_max_ugv);
        let scale = rng.as_mut().map_or(1.0, |r| r.random_range(0.8..1.25));
        let s = (leg * scale + 1e-3).clamp(prm.s_min, prm.s_max);
        x.set_duration(k, s);
        e = if assign.discharges(k) { e - s } else { e + prm.kappa * s };
        e = e.clamp(prm.e_min, prm.e_max);
        x.set_battery(k + 1, e);
    }
    x
}

/// Rewrites the battery of `x` to follow the branches of `assign`.
fn rebattery(inst: &ProblemInstance, x: &mut DecisionVector, assign: &BinaryAssignment) {
    let prm = inst.params();
    let mut e = prm.e_max;
    x.set_battery(0, e);
    for k in 0..inst.stamps() - 1 {
        let s = x.duration(k);
        e = if assign.discharges(k) { e - s } else { e + prm.kappa * s };
        x.set_battery(k + 1, e.clamp(prm.e_min, prm.e_max));
    }
}

struct Best {
    objective: f64,
    x: DecisionVector,
    assign: BinaryAssignment,
}

/// Solves one subproblem from several starts and keeps the best feasible result.
fn solve_multistart(
    model: &MinlpModel<'_>,
    assign: &BinaryAssignment,
    gate_battery: bool,
    starts: &[DecisionVector],
    count: &mut usize,
) -> Result<Option<(f64, DecisionVector)>, MinlpError> {
    let inst = model.inst;
    let problem = FixedAssignment::new(model, assign.clone(), gate_battery)?;
    let cfg = subproblem_config();
    let mut best: Option<(f64, DecisionVector)> = None;
    for x0 in starts {
        *count += 1;
        let out = minimize(&problem, x0.as_slice(), &cfg)?;
        if out.violation <= FEASIBILITY_TOL && best.as_ref().is_none_or(|(f, _)| out.objective < *f) {
            let x = DecisionVector::from_flat(inst.layout(), out.x).expect("layout preserved");
            best = Some((out.objective, x));
        }
    }
    Ok(best)
}

fn schedules(statics: &Statics, tasks: usize, arms: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    fn rec(
        statics: &Statics,
        inst_tasks: usize,
        arms: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, Vec<usize>)>,
    ) {
        let depth = cur.len();
        if depth == inst_tasks + arms {
            out.push((cur[..inst_tasks].to_vec(), cur[inst_tasks..].to_vec()));
            return;
        }
        for k in 0..statics.n {
            let allowed = if depth < inst_tasks {
                statics.allowed_task[depth][k]
            } else {
                let j = depth - inst_tasks;
                // Two arm ends at one stamp would break complementarity.
                statics.allowed_arm[j][k] && !cur[inst_tasks..].contains(&k)
            };
            if allowed {
                cur.push(k);
                rec(statics, inst_tasks, arms, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(statics, tasks, arms, &mut Vec::new(), &mut out);
    out
}

/// Global optimum of a tiny instance by enumerating binary patterns.
///
/// Task and arm schedules are visited in order of a travel-time lower
/// bound; each surviving schedule gets a relaxation with the battery
/// disjunctions dropped, whose value bounds every completion. When the
/// relaxed trajectory admits a battery schedule it is optimal for that
/// schedule; otherwise the battery patterns are enumerated depth-first.
/// Every subproblem is solved from three starts, so the result is exact up
/// to the local solver finding each subproblem's optimum.
pub fn solve_exact(inst: &ProblemInstance, limits: &OracleLimits) -> Result<OracleReport, MinlpError> {
    let (n, ma, mg) = (inst.stamps(), inst.task_count(), inst.arm_count());
    if n > limits.max_n || ma > limits.max_ma || mg > limits.max_mg {
        return Err(MinlpError::Limits {
            stamps: n,
            tasks: ma,
            arms: mg,
            max_n: limits.max_n,
            max_ma: limits.max_ma,
            max_mg: limits.max_mg,
        });
    }
    let start = Instant::now();
    let model = MinlpModel::new(inst);
    let statics = Statics::new(inst);

    let mut cands: Vec<(f64, Vec<usize>, Vec<usize>, Vec<bool>)> = schedules(&statics, ma, mg)
        .into_iter()
        .filter(|(t, _)| {
            // Distinct tasks at one stamp must coincide.
            t.iter().enumerate().all(|(i, &ki)| {
                t.iter()
                    .enumerate()
                    .skip(i + 1)
                    .all(|(i2, &k2)| k2 != ki || inst.uav_tasks()[i].distance(inst.uav_tasks()[i2]) <= COINCIDE)
            })
        })
        .map(|(t, a)| {
            let chargeable = statics.chargeable(inst, &t, &a);
            (schedule_bound(inst, &t, &a), t, a, chargeable)
        })
        .collect();
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pattern_count = |c: &[bool]| 1u64 << c.iter().filter(|&&b| b).count();
    let patterns: u64 = cands.iter().map(|c| pattern_count(&c.3)).sum();

    let mut report = OracleReport {
        status: OracleStatus::Infeasible,
        objective: None,
        x: None,
        assignment: None,
        subproblems: 0,
        space: (n as u64).pow((ma + mg) as u32) << (n - 1),
        patterns,
        pruned: 0,
        wall_s: 0.0,
    };
    if energy_infeasible(inst) {
        report.pruned = patterns;
        report.wall_s = start.elapsed().as_secs_f64();
        return Ok(report);
    }

    let mut best: Option<Best> = None;
    let improves = |best: &Option<Best>, bound: f64| best.as_ref().is_none_or(|b| bound < b.objective - 1e-9);
    for (idx, (bound, tasks, arms, chargeable)) in cands.iter().enumerate() {
        if !improves(&best, *bound) {
            report.pruned += cands[idx..].iter().map(|c| pattern_count(&c.3)).sum::<u64>();
            break;
        }
        let all_discharge = vec![true; n - 1];
        let relax_assign = BinaryAssignment::from_choices(n, tasks, arms, &all_discharge);
        let starts: Vec<DecisionVector> =
            [None, Some(1), Some(2)].into_iter().map(|j| assignment_seed(inst, &relax_assign, j)).collect();
        let relaxed = solve_multistart(&model, &relax_assign, false, &starts, &mut report.subproblems)?;
        let Some((relax_obj, relax_x)) = relaxed else {
            report.pruned += pattern_count(chargeable);
            continue;
        };
        if !improves(&best, relax_obj) {
            report.pruned += pattern_count(chargeable);
            continue;
        }

        // Charge wherever the relaxed vehicles ride together; that branch
        // only loosens the battery.
        let l = inst.layout();
        let together = |k: usize| {
            let p = &relax_x.as_slice()[l.arm_pos(k)..l.arm_pos(k) + mg];
            relax_x.uav(k).distance(inst.graph().position(p)) <= 1e-4
        };
        let discharge: Vec<bool> = (0..n - 1).map(|k| !(chargeable[k] && together(k) && together(k + 1))).collect();
        let assign = BinaryAssignment::from_choices(n, tasks, arms, &discharge);
        let mut seed = relax_x.clone();
        rebattery(inst, &mut seed, &assign);
        if let Some((obj, x)) = solve_multistart(&model, &assign, true, &[seed], &mut report.subproblems)? {
            if obj <= relax_obj + 1e-6 * (1.0 + relax_obj.abs()) {
                report.pruned += pattern_count(chargeable) - 1;
                if improves(&best, obj) {
                    best = Some(Best { objective: obj, x, assign });
                }
                continue;
            }
            if improves(&best, obj) {
                best = Some(Best { objective: obj, x, assign: assign.clone() });
            }
        }

        // Depth-first over the chargeable intervals, discharge first.
        let free: Vec<usize> = (0..n - 1).filter(|&k| chargeable[k]).collect();
        for mask in 0..(1u64 << free.len()) {
            let mut discharge = vec![true; n - 1];
            for (bit, &k) in free.iter().enumerate() {
                discharge[k] = mask >> (free.len() - 1 - bit) & 1 == 0;
            }
            let assign = BinaryAssignment::from_choices(n, tasks, arms, &discharge);
            if !improves(&best, relax_obj) {
                report.pruned += 1;
                continue;
            }
            let mut warm = relax_x.clone();
            rebattery(inst, &mut warm, &assign);
            let starts = [warm, assignment_seed(inst, &assign, None), assignment_seed(inst, &assign, Some(3))];
            if let Some((obj, x)) = solve_multistart(&model, &assign, true, &starts, &mut report.subproblems)? {
                if improves(&best, obj) {
                    best = Some(Best { objective: obj, x, assign });
                }
            }
        }
    }

    if let Some(b) = best {
        report.status = OracleStatus::Optimal;
        report.objective = Some(b.objective);
        report.x = Some(b.x);
        report.assignment = Some(b.assign);
    }
    report.wall_s = start.elapsed().as_secs_f64();
    Ok(report)
}
