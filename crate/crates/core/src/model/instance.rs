use serde::{Deserialize, Serialize};

use super::geometry::Point;
use super::graph::StarGraph;
use super::ModelError;

/// Vehicle and battery constants. Lengths in km, times in h.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    #[serde(rename = "v_max_A")]
    pub v_max_uav: f64,
    #[serde(rename = "v_max_G")]
    pub v_max_ugv: f64,
    /// Charging rate: hours of flight gained per hour docked.
    pub kappa: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |what: &str| Err(ModelError::InvalidParams(what.to_string()));
        let all = [self.v_max_uav, self.v_max_ugv, self.kappa, self.e_min, self.e_max, self.s_min, self.s_max];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("all parameters must be finite");
        }
        if !(self.v_max_uav > 0.0 && self.v_max_ugv > 0.0) {
            return bad("maximum speeds must be positive");
        }
        if !(self.kappa > 0.0) {
            return bad("kappa must be positive");
        }
        if !(0.0 <= self.e_min && self.e_min < self.e_max) {
            return bad("need 0 <= e_min < e_max");
        }
        if !(0.0 <= self.s_min && self.s_min < self.s_max) {
            return bad("need 0 <= s_min < s_max");
        }
        Ok(())
    }
}

/// Stamp count used when an instance does not fix one: one stamp per task
/// visit, arm endpoint and rendezvous, with slack.
pub fn default_stamp_count(uav_tasks: usize, arms: usize) -> usize {
    3 * (uav_tasks + arms) + 2
}

/// A complete mission: road network, UAV tasks, shared endpoints,
/// physical constants and the number of time stamps.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    graph: StarGraph,
    uav_tasks: Vec<Point>,
    r0: Point,
    rf: Point,
    params: PhysicalParams,
    stamps: usize,
}

impl ProblemInstance {
    /// `stamps = None` selects [`default_stamp_count`].
    pub fn new(
        graph: StarGraph,
        uav_tasks: Vec<Point>,
        r0: Point,
        rf: Point,
        params: PhysicalParams,
        stamps: Option<usize>,
    ) -> Result<Self, ModelError> {
        params.validate()?;
        for (name, q) in [("r0", r0), ("rf", rf)] {
            let d = graph.distance_to_network(q);
            if !(d <= 1e-6) {
                return Err(ModelError::EndpointOffNetwork { which: name, distance: d });
            }
        }
        if uav_tasks.iter().any(|a| !a.is_finite()) {
            return Err(ModelError::InvalidParams("task locations must be finite".into()));
        }
        let stamps = stamps.unwrap_or_else(|| default_stamp_count(uav_tasks.len(), graph.arm_count()));
        if stamps < 2 {
            return Err(ModelError::TooFewStamps(stamps));
        }
        Ok(Self { graph, uav_tasks, r0, rf, params, stamps })
    }

    pub fn graph(&self) -> &StarGraph {
        &self.graph
    }

    pub fn uav_tasks(&self) -> &[Point] {
        &self.uav_tasks
    }

    pub fn r0(&self) -> Point {
        self.r0
    }

    pub fn rf(&self) -> Point {
        self.rf
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn stamps(&self) -> usize {
        self.stamps
    }

    pub fn task_count(&self) -> usize {
        self.uav_tasks.len()
    }

    pub fn arm_count(&self) -> usize {
        self.graph.arm_count()
    }

    pub fn with_stamps(mut self, stamps: usize) -> Result<Self, ModelError> {
        if stamps < 2 {
            return Err(ModelError::TooFewStamps(stamps));
        }
        self.stamps = stamps;
        Ok(self)
    }

    pub fn layout(&self) -> super::Layout {
        super::Layout::new(self.stamps, self.graph.arm_count())
    }

    /// Bounding box of the network, tasks and endpoints.
    pub fn bounding_box(&self) -> (Point, Point) {
        let (mut lo, mut hi) = self.graph.bounding_box();
        for q in self.uav_tasks.iter().chain([&self.r0, &self.rf]) {
            lo = Point::new(lo.x.min(q.x), lo.y.min(q.y));
            hi = Point::new(hi.x.max(q.x), hi.y.max(q.y));
        }
        (lo, hi)
    }
}
