use super::arm::Arm;
use super::geometry::Point;
use super::ModelError;

/// A location on the network: arc length `t` along arm `arm`.
///
/// `t == 0` is the junction regardless of the arm index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkPoint {
    pub arm: usize,
    pub t: f64,
}

impl NetworkPoint {
    pub const JUNCTION: NetworkPoint = NetworkPoint { arm: 0, t: 0.0 };

    /// Length of the shortest network path between two points.
    pub fn network_distance(self, other: NetworkPoint) -> f64 {
        if self.arm == other.arm {
            (self.t - other.t).abs()
        } else {
            self.t + other.t
        }
    }

    /// Point a fraction `frac` of the way along the shortest network path
    /// from `self` to `other` (through the junction when arms differ).
    pub fn interpolate(self, other: NetworkPoint, frac: f64) -> NetworkPoint {
        if self.arm == other.arm || self.t == 0.0 || other.t == 0.0 {
            let arm = if self.t == 0.0 { other.arm } else { self.arm };
            return NetworkPoint { arm, t: self.t + (other.t - self.t) * frac };
        }
        let travelled = (self.t + other.t) * frac;
        if travelled <= self.t {
            NetworkPoint { arm: self.arm, t: self.t - travelled }
        } else {
            NetworkPoint { arm: other.arm, t: travelled - self.t }
        }
    }

    /// The arm-position vector `p` with this point's entry set.
    pub fn to_arm_vector(self, arm_count: usize) -> Vec<f64> {
        let mut p = vec![0.0; arm_count];
        if self.t > 0.0 {
            p[self.arm] = self.t;
        }
        p
    }
}

/// Closest network point to a query location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub arm: usize,
    pub t: f64,
    pub distance: f64,
}

impl Projection {
    pub fn network_point(&self) -> NetworkPoint {
        NetworkPoint { arm: self.arm, t: self.t }
    }
}

/// The UGV road network: arms meeting at a single junction.
#[derive(Clone, Debug)]
pub struct StarGraph {
    junction: Point,
    arms: Vec<Arm>,
}

impl StarGraph {
    pub fn new(junction: Point, arms: Vec<Arm>) -> Result<Self, ModelError> {
        if arms.is_empty() {
            return Err(ModelError::EmptyGraph);
        }
        if !junction.is_finite() {
            return Err(ModelError::InvalidArm("junction must be finite".into()));
        }
        for (j, arm) in arms.iter().enumerate() {
            if arm.position(0.0).distance(junction) > 1e-9 {
                return Err(ModelError::InvalidArm(format!("arm {j} does not start at the junction")));
            }
        }
        Ok(Self { junction, arms })
    }

    pub fn junction(&self) -> Point {
        self.junction
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn arm_count(&self) -> usize {
        self.arms.len()
    }

    /// Arm lengths: the upper bound on each entry of `p`.
    pub fn p_max(&self) -> Vec<f64> {
        self.arms.iter().map(Arm::length).collect()
    }

    pub fn point(&self, at: NetworkPoint) -> Point {
        self.arms[at.arm].position(at.t)
    }

    /// `junction + Σ_j (arm_j(p_j) - junction)`, without box checks.
    ///
    /// Summing over arms keeps the map differentiable on the whole box; it
    /// agrees with branch selection whenever at most one entry is positive.
    pub fn position(&self, p: &[f64]) -> Point {
        debug_assert_eq!(p.len(), self.arms.len());
        self.arms.iter().zip(p).fold(self.junction, |acc, (arm, &t)| acc + (arm.position(t) - self.junction))
    }

    /// Column `j` of the Jacobian of [`StarGraph::position`], written to `out[j]`.
    pub fn jacobian_into(&self, p: &[f64], out: &mut [Point]) {
        for ((arm, &t), col) in self.arms.iter().zip(p).zip(out.iter_mut()) {
            *col = arm.tangent(t);
        }
    }

    fn check_box(&self, p: &[f64]) -> Result<(), ModelError> {
        if p.len() != self.arms.len() {
            return Err(ModelError::DimensionMismatch { expected: self.arms.len(), got: p.len() });
        }
        for (j, (&v, arm)) in p.iter().zip(&self.arms).enumerate() {
            if !(v >= 0.0 && v <= arm.length()) {
                return Err(ModelError::OutOfBox { arm: j, value: v, max: arm.length() });
            }
        }
        Ok(())
    }

    /// Checked network map `g(p)`.
    pub fn graph_position(&self, p: &[f64]) -> Result<Point, ModelError> {
        self.check_box(p)?;
        Ok(self.position(p))
    }

    /// Checked 2 × m^G Jacobian of `g`, one column per arm.
    pub fn graph_position_jacobian(&self, p: &[f64]) -> Result<Vec<Point>, ModelError> {
        self.check_box(p)?;
        let mut cols = vec![Point::ORIGIN; p.len()];
        self.jacobian_into(p, &mut cols);
        Ok(cols)
    }

    /// Closest network point to `q`; ties go to the lowest arm, then lowest `t`.
    pub fn project(&self, q: Point) -> Projection {
        let mut best: Option<Projection> = None;
        for (j, arm) in self.arms.iter().enumerate() {
            let (t, distance) = project_onto_arm(arm, q);
            let better = match best {
                None => true,
                Some(b) => distance < b.distance - 1e-12,
            };
            if better {
                best = Some(Projection { arm: j, t, distance });
            }
        }
        let mut best = best.expect("star graph has at least one arm");
        if best.t <= 1e-12 {
            // The junction belongs to every arm.
            best.arm = 0;
            best.t = 0.0;
        }
        best
    }

    pub fn distance_to_network(&self, q: Point) -> f64 {
        self.project(q).distance
    }

    /// Axis-aligned bounding box of the network, from dense sampling.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = self.junction;
        let mut hi = self.junction;
        for arm in &self.arms {
            for i in 0..=200 {
                let p = arm.position(arm.length() * i as f64 / 200.0);
                lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
                hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
            }
        }
        (lo, hi)
    }
}

fn project_onto_arm(arm: &Arm, q: Point) -> (f64, f64) {
    let l = arm.length();
    if let super::arm::ArmSource::Straight { direction } = arm.source() {
        let t = (q - arm.position(0.0)).dot(*direction).clamp(0.0, l);
        return (t, arm.position(t).distance(q));
    }
    const SAMPLES: usize = 512;
    let dist = |t: f64| arm.position(t).distance(q);
    let mut best_i = 0;
    let mut best_d = f64::INFINITY;
    for i in 0..=SAMPLES {
        let d = dist(l * i as f64 / SAMPLES as f64);
        if d < best_d - 1e-12 {
            best_d = d;
            best_i = i;
        }
    }
    // Golden-section refinement on the bracketing pair of samples.
    let mut a = l * best_i.saturating_sub(1) as f64 / SAMPLES as f64;
    let mut b = l * (best_i + 1).min(SAMPLES) as f64 / SAMPLES as f64;
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (dist(c), dist(d));
    while b - a > 1e-13 * (1.0 + l) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = dist(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = dist(d);
        }
    }
    let t = 0.5 * (a + b);
    let candidates = [(0.0, dist(0.0)), (t, dist(t)), (l, dist(l))];
    candidates.into_iter().fold((f64::NAN, f64::INFINITY), |acc, c| if c.1 < acc.1 - 1e-12 { c } else { acc })
}
