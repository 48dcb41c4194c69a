//! Paper-default constants, the shipped fixture map, seeded random
//! instances and the projection-based warm start.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    default_stamp_count, Arm, DecisionVector, ModelError, NetworkPoint, PhysicalParams, Point, ProblemInstance,
    StarGraph,
};

/// `e_max = 0.4 h`, `v_A = 36 km/h`, `v_G = 16.2 km/h`, `κ = 1.5`,
/// `e_min = s_min = 0`, `s_max = 10 h`.
pub fn paper_default_params() -> PhysicalParams {
    PhysicalParams { v_max_uav: 36.0, v_max_ugv: 16.2, kappa: 1.5, e_min: 0.0, e_max: 0.4, s_min: 0.0, s_max: 10.0 }
}

/// Road networks shipped with the crate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureMap {
    /// Three arms on a ~10 km square: one straight road running east and
    /// two curved roads to the north-west and south-west. Approximate
    /// coordinates; the start lies on the south-west arm, the goal on the
    /// east arm.
    #[default]
    ThreeArm,
}

impl FixtureMap {
    pub fn graph(self) -> StarGraph {
        match self {
            FixtureMap::ThreeArm => {
                let j = Point::new(5.0, 5.0);
                let arms = vec![
                    Arm::straight(j, Point::new(1.0, -0.25), 4.2).expect("fixture arm"),
                    Arm::polyline(j, &[Point::new(4.6, 6.4), Point::new(3.6, 7.7), Point::new(3.9, 9.3)], None)
                        .expect("fixture arm"),
                    Arm::polyline(j, &[Point::new(4.1, 4.1), Point::new(2.6, 3.6), Point::new(1.2, 2.2)], None)
                        .expect("fixture arm"),
                ];
                StarGraph::new(j, arms).expect("fixture graph")
            }
        }
    }

    /// Mission endpoints `(r0, rf)` on the network.
    pub fn endpoints(self, graph: &StarGraph) -> (Point, Point) {
        match self {
            FixtureMap::ThreeArm => {
                let r0 = graph.point(NetworkPoint { arm: 2, t: 0.6 * graph.arms()[2].length() });
                let rf = graph.point(NetworkPoint { arm: 0, t: 0.55 * graph.arms()[0].length() });
                (r0, rf)
            }
        }
    }
}

/// Inputs of [`generate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub m_a: usize,
    /// Task sampling rectangle `(lo, hi)`; the map's bounding box inflated
    /// by 20% when absent.
    #[serde(default)]
    pub sampling_box: Option<(Point, Point)>,
    #[serde(default)]
    pub map: FixtureMap,
    #[serde(default)]
    pub stamps: Option<usize>,
}

impl GeneratorConfig {
    pub fn new(seed: u64, m_a: usize) -> Self {
        Self { seed, m_a, sampling_box: None, map: FixtureMap::ThreeArm, stamps: None }
    }
}

/// `(lo, hi)` grown by `frac` of its size on every side combined.
pub fn inflate(lo: Point, hi: Point, frac: f64) -> (Point, Point) {
    let pad = (hi - lo) * (0.5 * frac);
    (lo - pad, hi + pad)
}

/// Uniform points in `[lo, hi]` from a ChaCha stream keyed by `seed`.
pub fn sample_box(seed: u64, count: usize, lo: Point, hi: Point) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| Point::new(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y))).collect()
}

pub fn generate(cfg: &GeneratorConfig) -> Result<ProblemInstance, ModelError> {
    let graph = cfg.map.graph();
    let (lo, hi) = match cfg.sampling_box {
        Some(b) => b,
        None => {
            let (lo, hi) = graph.bounding_box();
            inflate(lo, hi, 0.2)
        }
    };
    if !(lo.x < hi.x && lo.y < hi.y) {
        return Err(ModelError::InvalidParams("sampling box is empty".into()));
    }
    let tasks = sample_box(cfg.seed, cfg.m_a, lo, hi);
    let (r0, rf) = cfg.map.endpoints(&graph);
    ProblemInstance::new(graph, tasks, r0, rf, paper_default_params(), cfg.stamps)
}

/// A tiny random instance for the enumeration oracle: `m_g` straight arms
/// of length 0.3–1.5 km around the origin, `m_a` tasks within 1.2 km of it,
/// and a mission that starts and ends at the junction.
pub fn micro(seed: u64, m_a: usize, m_g: usize, stamps: usize) -> Result<ProblemInstance, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d69_6372_6f00_0000);
    let offset = rng.random_range(0.0..std::f64::consts::TAU);
    let arms = (0..m_g)
        .map(|j| {
            let angle = offset + std::f64::consts::TAU * j as f64 / m_g as f64 + rng.random_range(-0.4..0.4);
            let length = rng.random_range(0.3..1.5);
            Arm::straight(Point::ORIGIN, Point::new(angle.cos(), angle.sin()), length)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let tasks = (0..m_a)
        .map(|_| {
            let r = 1.2 * rng.random_range(0.0f64..1.0).sqrt();
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            Point::new(r * a.cos(), r * a.sin())
        })
        .collect();
    let graph = StarGraph::new(Point::ORIGIN, arms)?;
    ProblemInstance::new(graph, tasks, Point::ORIGIN, Point::ORIGIN, paper_default_params(), Some(stamps))
}

/// Order in which the warm start visits tasks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskOrdering {
    /// Repeatedly fly to the closest unvisited task.
    #[default]
    NearestNeighbor,
    /// Tasks in the order the instance lists them.
    AsListed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Waypoint {
    uav: Point,
    ugv: NetworkPoint,
}

fn order_tasks(inst: &ProblemInstance, ordering: TaskOrdering) -> Vec<usize> {
    let tasks = inst.uav_tasks();
    match ordering {
        TaskOrdering::AsListed => (0..tasks.len()).collect(),
        TaskOrdering::NearestNeighbor => {
            let mut left: Vec<usize> = (0..tasks.len()).collect();
            let mut at = inst.r0();
            let mut out = Vec::with_capacity(tasks.len());
            while !left.is_empty() {
                let (pos, _) = left
                    .iter()
                    .enumerate()
                    .min_by(|a, b| at.distance(tasks[*a.1]).total_cmp(&at.distance(tasks[*b.1])))
                    .expect("nonempty");
                let i = left.remove(pos);
                at = tasks[i];
                out.push(i);
            }
            out
        }
    }
}

/// Arm ends no waypoint reaches yet, visited greedily by network distance.
fn append_arm_ends(inst: &ProblemInstance, route: &mut Vec<Waypoint>) {
    let g = inst.graph();
    let mut missing: Vec<usize> = (0..g.arm_count())
        .filter(|&j| !route.iter().any(|w| w.ugv.arm == j && w.ugv.t >= g.arms()[j].length() - 1e-9))
        .collect();
    while !missing.is_empty() {
        let here = route.last().expect("route starts at r0").ugv;
        let (pos, _) = missing
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = here.network_distance(NetworkPoint { arm: *a.1, t: g.arms()[*a.1].length() });
                let db = here.network_distance(NetworkPoint { arm: *b.1, t: g.arms()[*b.1].length() });
                da.total_cmp(&db)
            })
            .expect("nonempty");
        let j = missing.remove(pos);
        let end = NetworkPoint { arm: j, t: g.arms()[j].length() };
        route.push(Waypoint { uav: g.point(end), ugv: end });
    }
}

fn leg_time(inst: &ProblemInstance, a: &Waypoint, b: &Waypoint) -> f64 {
    let p = inst.params();
    (a.uav.distance(b.uav) / p.v_max_uav).max(a.ugv.network_distance(b.ugv) / p.v_max_ugv)
}

fn build_route(inst: &ProblemInstance, ordering: TaskOrdering, compact: bool) -> Vec<Waypoint> {
    let g = inst.graph();
    let start = g.project(inst.r0()).network_point();
    let finish = g.project(inst.rf()).network_point();
    let mut route = vec![Waypoint { uav: inst.r0(), ugv: start }];
    for i in order_tasks(inst, ordering) {
        let a = inst.uav_tasks()[i];
        let q = g.project(a).network_point();
        if compact {
            route.push(Waypoint { uav: a, ugv: q });
        } else {
            let qp = g.point(q);
            route.push(Waypoint { uav: qp, ugv: q });
            route.push(Waypoint { uav: a, ugv: q });
            route.push(Waypoint { uav: qp, ugv: q });
        }
    }
    append_arm_ends(inst, &mut route);
    route.push(Waypoint { uav: inst.rf(), ugv: finish });
    route
}

/// Splits the longest leg at its midpoint until the route has `n` points.
fn refine(inst: &ProblemInstance, route: &mut Vec<Waypoint>, n: usize) {
    while route.len() < n {
        let (k, _) = route
            .windows(2)
            .map(|w| leg_time(inst, &w[0], &w[1]) + 1e-12 * w[0].uav.distance(w[1].uav))
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("route has at least two points");
        let (a, b) = (route[k], route[k + 1]);
        let ugv = a.ugv.interpolate(b.ugv, 0.5);
        // A riding UAV follows the road; a flying one takes the chord.
        let g = inst.graph();
        let riding = a.uav.distance(g.point(a.ugv)) <= 1e-9 && b.uav.distance(g.point(b.ugv)) <= 1e-9;
        let uav = if riding { g.point(ugv) } else { a.uav.lerp(b.uav, 0.5) };
        let mid = Waypoint { uav, ugv };
        route.insert(k + 1, mid);
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum WarmStartError {
    #[error("{stamps} time stamps cannot hold the mission; at least {minimum} are needed")]
    TooFewStamps { stamps: usize, minimum: usize },
}

/// Stamp count below which [`warm_start`] fails for `inst`.
pub fn minimal_stamps(inst: &ProblemInstance) -> usize {
    build_route(inst, TaskOrdering::NearestNeighbor, true).len()
}

/// Largest visit count whose orderings are searched exhaustively.
const EXHAUSTIVE_ORDER: usize = 7;

/// Visit order minimizing `cost`: exhaustive for short lists, greedy by
/// `step` from `start` otherwise.
fn best_order<T: Copy>(items: &[T], start: T, step: impl Fn(T, T) -> f64, cost: impl Fn(&[T]) -> f64) -> Vec<T> {
    use itertools::Itertools;
    if items.len() <= EXHAUSTIVE_ORDER {
        return items
            .iter()
            .copied()
            .permutations(items.len())
            .min_by(|a, b| cost(a).total_cmp(&cost(b)))
            .unwrap_or_default();
    }
    let mut left = items.to_vec();
    let mut at = start;
    let mut out = Vec::with_capacity(items.len());
    while !left.is_empty() {
        let (pos, _) =
            left.iter().enumerate().min_by(|a, b| step(at, *a.1).total_cmp(&step(at, *b.1))).expect("nonempty");
        at = left.remove(pos);
        out.push(at);
    }
    out
}

/// Cumulative arrival fractions along a tour of leg lengths.
fn arrival_fractions(legs: &[f64]) -> Vec<f64> {
    let total: f64 = legs.iter().sum();
    let mut acc = 0.0;
    let mut out = vec![0.0];
    for &l in legs {
        acc += l;
        out.push(if total > 0.0 { acc / total } else { 1.0 });
    }
    out
}

/// Position at fraction `f` of a tour with waypoint fractions `at`.
fn along<T: Copy>(points: &[T], at: &[f64], f: f64, lerp: impl Fn(T, T, f64) -> T) -> T {
    let k = at.partition_point(|&a| a <= f).clamp(1, points.len().max(2) - 1);
    if points.len() == 1 {
        return points[0];
    }
    let span = at[k] - at[k - 1];
    let frac = if span > 0.0 { ((f - at[k - 1]) / span).clamp(0.0, 1.0) } else { 1.0 };
    lerp(points[k - 1], points[k], frac)
}

/// Both vehicles run their own shortest tours, stretched to a common end
/// time, with stamps at every visit of either. Only valid when the UAV can
/// fly the whole mission on one battery; `None` otherwise.
fn decoupled_route(inst: &ProblemInstance) -> Option<Vec<Waypoint>> {
    let g = inst.graph();
    let prm = inst.params();
    let tasks = inst.uav_tasks();
    let start = g.project(inst.r0()).network_point();
    let finish = g.project(inst.rf()).network_point();

    let idx: Vec<usize> = (0..tasks.len()).collect();
    let uav_pts = |order: &[usize]| -> Vec<Point> {
        std::iter::once(inst.r0()).chain(order.iter().map(|&i| tasks[i])).chain(std::iter::once(inst.rf())).collect()
    };
    let uav_len = |pts: &[Point]| pts.windows(2).map(|w| w[0].distance(w[1])).collect::<Vec<_>>();
    let order = best_order(
        &idx,
        usize::MAX,
        |a, b| if a == usize::MAX { inst.r0().distance(tasks[b]) } else { tasks[a].distance(tasks[b]) },
        |o| uav_len(&uav_pts(o)).iter().sum(),
    );
    let uav = uav_pts(&order);
    let uav_legs = uav_len(&uav);

    let ends: Vec<NetworkPoint> =
        (0..g.arm_count()).map(|j| NetworkPoint { arm: j, t: g.arms()[j].length() }).collect();
    let ugv_pts = |order: &[NetworkPoint]| -> Vec<NetworkPoint> {
        std::iter::once(start).chain(order.iter().copied()).chain(std::iter::once(finish)).collect()
    };
    let ugv_len = |pts: &[NetworkPoint]| pts.windows(2).map(|w| w[0].network_distance(w[1])).collect::<Vec<_>>();
    let order = best_order(&ends, start, |a, b| a.network_distance(b), |o| ugv_len(&ugv_pts(o)).iter().sum());
    let ugv = ugv_pts(&order);
    let ugv_legs = ugv_len(&ugv);

    let span = (uav_legs.iter().sum::<f64>() / prm.v_max_uav).max(ugv_legs.iter().sum::<f64>() / prm.v_max_ugv);
    if !(span > 0.0) || span > prm.e_max - prm.e_min {
        return None;
    }
    let (ua, ga) = (arrival_fractions(&uav_legs), arrival_fractions(&ugv_legs));
    let mut events: Vec<f64> = ua.iter().chain(&ga).copied().collect();
    events.sort_by(f64::total_cmp);
    events.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    if events.len() > inst.stamps() {
        return None;
    }
    let route = events
        .iter()
        .map(|&f| Waypoint {
            uav: along(&uav, &ua, f, |a, b, t| a.lerp(b, t)),
            ugv: along(&ugv, &ga, f, |a, b, t| a.interpolate(b, t)),
        })
        .collect();
    Some(route)
}

/// Decoupled tours when one battery covers the mission, otherwise the
/// nearest-neighbour rendezvous route of [`warm_start_with`].
pub fn warm_start(inst: &ProblemInstance) -> Result<DecisionVector, WarmStartError> {
    match decoupled_route(inst) {
        Some(route) => Ok(from_route(inst, route)),
        None => warm_start_with(inst, TaskOrdering::NearestNeighbor),
    }
}

/// Builds an initial decision vector from the task projections.
///
/// Each task becomes a rendezvous triple (both vehicles at the projection
/// `q`, UAV at the task while the UGV waits at `q`, both back at `q`);
/// unreached arm ends follow, then the goal. Long legs are split until the
/// route has exactly `N` stamps. When `N` is too small for the triples,
/// each task gets a single stamp instead.
pub fn warm_start_with(inst: &ProblemInstance, ordering: TaskOrdering) -> Result<DecisionVector, WarmStartError> {
    let n = inst.stamps();
    let mut route = build_route(inst, ordering, false);
    if route.len() > n {
        route = build_route(inst, ordering, true);
    }
    if route.len() > n {
        return Err(WarmStartError::TooFewStamps { stamps: n, minimum: route.len() });
    }
    Ok(from_route(inst, route))
}

fn from_route(inst: &ProblemInstance, mut route: Vec<Waypoint>) -> DecisionVector {
    let n = inst.stamps();
    refine(inst, &mut route, n);

    let prm = inst.params();
    let m = inst.arm_count();
    let mut x = DecisionVector::zeros(inst.layout());
    for (k, w) in route.iter().enumerate() {
        x.set_uav(k, w.uav);
        x.arm_positions_mut(k).copy_from_slice(&w.ugv.to_arm_vector(m));
    }
    let together = |w: &Waypoint| w.uav.distance(inst.graph().point(w.ugv)) <= 1e-9;
    let durations: Vec<f64> =
        (0..n - 1).map(|k| leg_time(inst, &route[k], &route[k + 1]).clamp(prm.s_min, prm.s_max)).collect();
    // Discharging while riding satisfies both battery branches at once, which
    // leaves the vehicles free to split up; charge only when the battery
    // would otherwise run out.
    let ride_charges = durations.iter().sum::<f64>() > prm.e_max - prm.e_min;
    let mut e = prm.e_max;
    x.set_battery(0, e);
    for (k, &s) in durations.iter().enumerate() {
        x.set_duration(k, s);
        let riding = together(&route[k]) && together(&route[k + 1]);
        e = if ride_charges && riding { e + prm.kappa * s } else { e - s };
        e = e.clamp(prm.e_min, prm.e_max);
        x.set_battery(k + 1, e);
    }
    // Endpoints exactly as given rather than via projection.
    x.set_uav(0, inst.r0());
    x.set_uav(n - 1, inst.rf());
    x
}

/// Default stamp count for a generated instance.
pub fn default_stamps(cfg: &GeneratorConfig) -> usize {
    cfg.stamps.unwrap_or_else(|| default_stamp_count(cfg.m_a, cfg.map.graph().arm_count()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcription::{disjunction_detail, exact_smooth};

    #[test]
    fn paper_constants() {
        let p = paper_default_params();
        assert_eq!(p.e_max, 0.4);
        assert_eq!(p.kappa, 1.5);
        assert_eq!(p.s_max, 10.0);
        assert_eq!((p.v_max_uav, p.v_max_ugv), (36.0, 16.2));
        assert_eq!((p.e_min, p.s_min), (0.0, 0.0));
    }

    #[test]
    fn fixture_is_valid() {
        let inst = generate(&GeneratorConfig::new(1, 0)).unwrap();
        assert_eq!(inst.arm_count(), 3);
        assert!(inst.r0().distance(inst.rf()) > 1.0);
        for arm in inst.graph().arms() {
            assert!(arm.length() > 2.0 && arm.length() < 6.0, "{}", arm.length());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&GeneratorConfig::new(42, 10)).unwrap();
        let b = generate(&GeneratorConfig::new(42, 10)).unwrap();
        let bits =
            |i: &ProblemInstance| i.uav_tasks().iter().flat_map(|p| [p.x.to_bits(), p.y.to_bits()]).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = generate(&GeneratorConfig::new(43, 10)).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn zero_tasks() {
        let inst = generate(&GeneratorConfig::new(3, 0)).unwrap();
        assert_eq!(inst.task_count(), 0);
        let x = warm_start(&inst).unwrap();
        assert_eq!(disjunction_detail(&inst, x.as_slice()).task_visit.len(), 0);
        assert!(disjunction_detail(&inst, x.as_slice()).arm_visit.iter().all(|&v| v < 1e-9));
    }

    #[test]
    fn sample_mean_is_centered() {
        let pts = sample_box(11, 1000, Point::new(0.0, 0.0), Point::new(10.0, 10.0));
        let mean = pts.iter().fold(Point::ORIGIN, |s, &p| s + p) * (1.0 / 1000.0);
        assert!((mean.x - 5.0).abs() < 0.3 && (mean.y - 5.0).abs() < 0.3, "{mean:?}");
    }

    #[test]
    fn warm_start_structure() {
        for seed in 0..5 {
            let inst = generate(&GeneratorConfig::new(seed, 4)).unwrap();
            let x = warm_start(&inst).unwrap();
            let (eq, ineq_box) = exact_smooth(&inst, x.as_slice());
            assert!(eq < 1e-9, "boundary/complementarity violated: {eq}");
            // Speeds hold by construction of s, boxes by clipping.
            assert!(ineq_box < 1e-9, "{ineq_box}");
            let d = disjunction_detail(&inst, x.as_slice());
            assert!(d.task_visit.iter().all(|&v| v < 1e-12));
            assert!(d.arm_visit.iter().all(|&v| v < 1e-9));
        }
    }

    #[test]
    fn task_on_network_gives_shared_path() {
        let g = FixtureMap::ThreeArm.graph();
        let (r0, rf) = FixtureMap::ThreeArm.endpoints(&g);
        let a = g.point(NetworkPoint { arm: 1, t: 2.0 });
        let inst = ProblemInstance::new(g, vec![a], r0, rf, paper_default_params(), None).unwrap();
        let x = warm_start(&inst).unwrap();
        for k in 0..inst.stamps() {
            let ugv = inst.graph().position(x.arm_positions(k));
            assert!(x.uav(k).distance(ugv) < 1e-6, "stamp {k}");
        }
        let d = disjunction_detail(&inst, x.as_slice());
        assert!(d.battery.iter().all(|&v| v < 1e-12), "{:?}", d.battery);
    }

    #[test]
    fn compact_fallback_and_rejection() {
        let inst = generate(&GeneratorConfig::new(5, 3)).unwrap();
        let min = minimal_stamps(&inst);
        assert!(warm_start(&inst.clone().with_stamps(min).unwrap()).is_ok());
        let err = warm_start(&inst.with_stamps(min - 1).unwrap()).unwrap_err();
        assert_eq!(err, WarmStartError::TooFewStamps { stamps: min - 1, minimum: min });
    }

    #[test]
    fn decoupled_tours_meet_the_travel_bound() {
        let inst = micro(9, 2, 1, 6).unwrap();
        let prm = inst.params();
        let x = warm_start(&inst).unwrap();
        let (eq, ineq_box) = exact_smooth(&inst, x.as_slice());
        assert!(eq < 1e-9 && ineq_box < 1e-9, "{eq} {ineq_box}");
        let d = disjunction_detail(&inst, x.as_slice());
        assert!(d.task_visit.iter().all(|&v| v < 1e-12));
        assert!(d.arm_visit.iter().all(|&v| v < 1e-9));
        assert!(d.battery.iter().all(|&v| v < 1e-12), "{:?}", d.battery);
        let [a, b] = [inst.uav_tasks()[0], inst.uav_tasks()[1]];
        let o = Point::ORIGIN;
        let uav = (o.distance(a) + a.distance(b) + b.distance(o)) / prm.v_max_uav;
        let ugv = 2.0 * inst.graph().arms()[0].length() / prm.v_max_ugv;
        let total: f64 = (0..inst.stamps() - 1).map(|k| x.duration(k)).sum();
        assert!((total - uav.max(ugv)).abs() < 1e-12, "{total} vs {}", uav.max(ugv));
    }

    #[test]
    fn micro_instances_are_small() {
        let inst = micro(9, 2, 2, 6).unwrap();
        assert_eq!((inst.task_count(), inst.arm_count(), inst.stamps()), (2, 2, 6));
        assert!(inst.uav_tasks().iter().all(|a| a.norm() <= 1.2));
    }
}
