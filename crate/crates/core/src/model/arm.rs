use std::fmt;
use std::sync::Arc;

use super::geometry::Point;
use super::ModelError;

/// A smooth planar curve parameterized by arc length on `[0, length()]`.
pub trait ArcCurve: Send + Sync + fmt::Debug {
    fn length(&self) -> f64;
    fn point(&self, t: f64) -> Point;
    /// Unit tangent `d point / dt`.
    fn tangent(&self, t: f64) -> Point;
}

/// How an arm was described, kept so instances can be written back out.
#[derive(Clone, Debug, PartialEq)]
pub enum ArmSource {
    Straight { direction: Point },
    Polyline { points: Vec<Point> },
    Custom,
}

#[derive(Clone, Debug)]
enum Shape {
    Straight { origin: Point, direction: Point },
    Curve(Arc<dyn ArcCurve>),
}

/// One arm of the star-shaped road network.
///
/// Positions outside `[0, length]` are extended linearly along the end
/// tangents so the map stays C¹ when an optimizer steps slightly out of the
/// box.
#[derive(Clone, Debug)]
pub struct Arm {
    shape: Shape,
    length: f64,
    source: ArmSource,
}

impl Arm {
    pub fn straight(junction: Point, direction: Point, length: f64) -> Result<Self, ModelError> {
        check_length(length)?;
        let norm = direction.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(ModelError::InvalidArm("straight arm direction must be nonzero".into()));
        }
        let direction = direction * (1.0 / norm);
        Ok(Self {
            shape: Shape::Straight { origin: junction, direction },
            length,
            source: ArmSource::Straight { direction },
        })
    }

    /// Cubic-spline arm through `points`, reparameterized by arc length.
    ///
    /// The junction is prepended when `points` does not already start there.
    /// `length` truncates the arm; `None` uses the full spline length.
    pub fn polyline(junction: Point, points: &[Point], length: Option<f64>) -> Result<Self, ModelError> {
        let mut nodes = Vec::with_capacity(points.len() + 1);
        if points.first().map_or(true, |p| p.distance(junction) > 1e-9) {
            nodes.push(junction);
        }
        nodes.extend_from_slice(points);
        nodes[0] = junction;
        let spline = SplineCurve::new(&nodes)?;
        let full = spline.length();
        let length = match length {
            Some(l) => {
                check_length(l)?;
                if l > full * (1.0 + 1e-9) {
                    return Err(ModelError::InvalidArm(format!(
                        "requested arm length {l} exceeds polyline arc length {full}"
                    )));
                }
                l.min(full)
            }
            None => full,
        };
        Ok(Self { shape: Shape::Curve(Arc::new(spline)), length, source: ArmSource::Polyline { points: nodes } })
    }

    /// Wraps an arbitrary arc-length curve, checking that it starts at the
    /// junction and has unit speed at 100 sampled parameters.
    pub fn custom(junction: Point, curve: Arc<dyn ArcCurve>) -> Result<Self, ModelError> {
        let length = curve.length();
        check_length(length)?;
        if curve.point(0.0).distance(junction) > 1e-9 {
            return Err(ModelError::InvalidArm("curve does not start at the junction".into()));
        }
        let h = 1e-6 * length.max(1.0);
        for i in 0..100 {
            let t = length * (i as f64 + 0.5) / 100.0;
            let (lo, hi) = ((t - h).max(0.0), (t + h).min(length));
            let speed = curve.point(hi).distance(curve.point(lo)) / (hi - lo);
            if (speed - 1.0).abs() > 1e-6 {
                return Err(ModelError::InvalidArm(format!(
                    "curve is not arc-length parameterized (speed {speed} at t = {t})"
                )));
            }
        }
        Ok(Self { shape: Shape::Curve(curve), length, source: ArmSource::Custom })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn source(&self) -> &ArmSource {
        &self.source
    }

    /// Position at arc length `t`, linearly extended beyond the ends.
    pub fn position(&self, t: f64) -> Point {
        match &self.shape {
            Shape::Straight { origin, direction } => *origin + *direction * t,
            Shape::Curve(c) => {
                if t < 0.0 {
                    c.point(0.0) + c.tangent(0.0) * t
                } else if t > self.length {
                    c.point(self.length) + c.tangent(self.length) * (t - self.length)
                } else {
                    c.point(t)
                }
            }
        }
    }

    /// Derivative of [`Arm::position`] with respect to `t`.
    pub fn tangent(&self, t: f64) -> Point {
        match &self.shape {
            Shape::Straight { direction, .. } => *direction,
            Shape::Curve(c) => c.tangent(t.clamp(0.0, self.length)),
        }
    }

    pub fn end(&self) -> Point {
        self.position(self.length)
    }
}

fn check_length(length: f64) -> Result<(), ModelError> {
    if length.is_finite() && length > 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidArm(format!("arm length must be positive, got {length}")))
    }
}

// 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_27,
    0.362_683_783_378_361_98,
    0.362_683_783_378_361_98,
    0.313_706_645_877_887_27,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

const PIECES_PER_SEGMENT: usize = 32;

#[derive(Clone, Debug)]
struct CubicSegment {
    u0: f64,
    // Per axis: value, slope, half curvature, cubic coefficient.
    cx: [f64; 4],
    cy: [f64; 4],
}

impl CubicSegment {
    fn eval(&self, u: f64) -> Point {
        let d = u - self.u0;
        let f = |c: &[f64; 4]| c[0] + d * (c[1] + d * (c[2] + d * c[3]));
        Point::new(f(&self.cx), f(&self.cy))
    }

    fn deriv(&self, u: f64) -> Point {
        let d = u - self.u0;
        let f = |c: &[f64; 4]| c[1] + d * (2.0 * c[2] + 3.0 * d * c[3]);
        Point::new(f(&self.cx), f(&self.cy))
    }
}

/// Natural cubic spline through a list of nodes, reparameterized by arc
/// length through a Gauss-Legendre table and Newton inversion.
#[derive(Clone, Debug)]
struct SplineCurve {
    segments: Vec<CubicSegment>,
    // (spline parameter, arc length) at piece boundaries, strictly increasing.
    table: Vec<(f64, f64)>,
}

impl SplineCurve {
    fn new(nodes: &[Point]) -> Result<Self, ModelError> {
        if nodes.len() < 2 {
            return Err(ModelError::InvalidArm("polyline needs at least one point past the junction".into()));
        }
        let mut knots = vec![0.0];
        for w in nodes.windows(2) {
            let h = w[0].distance(w[1]);
            if !(h > 1e-12) || !h.is_finite() {
                return Err(ModelError::InvalidArm("polyline has repeated or non-finite points".into()));
            }
            knots.push(knots.last().unwrap() + h);
        }
        let xs: Vec<f64> = nodes.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = nodes.iter().map(|p| p.y).collect();
        let mx = natural_second_derivatives(&knots, &xs);
        let my = natural_second_derivatives(&knots, &ys);
        let coeffs = |v: &[f64], m: &[f64], i: usize| {
            let h = knots[i + 1] - knots[i];
            [v[i], (v[i + 1] - v[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0, m[i] / 2.0, (m[i + 1] - m[i]) / (6.0 * h)]
        };
        let segments: Vec<CubicSegment> = (0..nodes.len() - 1)
            .map(|i| CubicSegment { u0: knots[i], cx: coeffs(&xs, &mx, i), cy: coeffs(&ys, &my, i) })
            .collect();

        let mut curve = Self { segments, table: Vec::new() };
        let mut table = vec![(0.0, 0.0)];
        for i in 0..nodes.len() - 1 {
            let (a, b) = (knots[i], knots[i + 1]);
            for j in 0..PIECES_PER_SEGMENT {
                let lo = a + (b - a) * j as f64 / PIECES_PER_SEGMENT as f64;
                let hi = a + (b - a) * (j + 1) as f64 / PIECES_PER_SEGMENT as f64;
                let s = table.last().unwrap().1 + curve.integrate_speed(lo, hi);
                table.push((hi, s));
            }
        }
        curve.table = table;
        Ok(curve)
    }

    fn segment(&self, u: f64) -> &CubicSegment {
        let idx = self.segments.partition_point(|s| s.u0 <= u).saturating_sub(1);
        &self.segments[idx]
    }

    fn speed(&self, u: f64) -> f64 {
        self.segment(u).deriv(u).norm()
    }

    fn integrate_speed(&self, lo: f64, hi: f64) -> f64 {
        let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
        half * GL_NODES.iter().zip(GL_WEIGHTS).map(|(x, w)| w * self.speed(mid + half * x)).sum::<f64>()
    }

    /// Spline parameter at arc length `t`.
    fn parameter(&self, t: f64) -> f64 {
        let total = self.table.last().unwrap().1;
        let t = t.clamp(0.0, total);
        let j = self.table.partition_point(|&(_, s)| s <= t).clamp(1, self.table.len() - 1);
        let (u_lo, s_lo) = self.table[j - 1];
        let (u_hi, s_hi) = self.table[j];
        let mut u = u_lo + (t - s_lo) / (s_hi - s_lo) * (u_hi - u_lo);
        for _ in 0..20 {
            let residual = s_lo + self.integrate_speed(u_lo, u) - t;
            let step = residual / self.speed(u);
            u = (u - step).clamp(u_lo, u_hi);
            if step.abs() < 1e-15 * (1.0 + u.abs()) {
                break;
            }
        }
        u
    }
}

impl ArcCurve for SplineCurve {
    fn length(&self) -> f64 {
        self.table.last().unwrap().1
    }

    fn point(&self, t: f64) -> Point {
        let u = self.parameter(t);
        self.segment(u).eval(u)
    }

    fn tangent(&self, t: f64) -> Point {
        let u = self.parameter(t);
        let d = self.segment(u).deriv(u);
        d * (1.0 / d.norm())
    }
}

/// Second derivatives of the natural cubic spline (zero at both ends),
/// via the Thomas algorithm.
fn natural_second_derivatives(knots: &[f64], values: &[f64]) -> Vec<f64> {
    let n = knots.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    let inner = n - 2;
    let mut diag = vec![0.0; inner];
    let mut rhs = vec![0.0; inner];
    for i in 0..inner {
        diag[i] = 2.0 * (h[i] + h[i + 1]);
        rhs[i] = 6.0 * ((values[i + 2] - values[i + 1]) / h[i + 1] - (values[i + 1] - values[i]) / h[i]);
    }
    for i in 1..inner {
        let w = h[i] / diag[i - 1];
        diag[i] -= w * h[i];
        rhs[i] -= w * rhs[i - 1];
    }
    m[inner] = rhs[inner - 1] / diag[inner - 1];
    for i in (0..inner - 1).rev() {
        m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_unit_speed(arm: &Arm) {
        let l = arm.length();
        for i in 0..100 {
            let t = l * (i as f64 + 0.5) / 100.0;
            let h = 1e-6;
            let fd = (arm.position(t + h) - arm.position(t - h)) * (0.5 / h);
            assert!((fd.norm() - 1.0).abs() < 1e-6, "speed {} at t = {t}", fd.norm());
            assert!((fd - arm.tangent(t)).norm() < 1e-6);
        }
    }

    #[test]
    fn straight_arm_normalizes_direction() {
        let arm = Arm::straight(Point::new(1.0, 1.0), Point::new(0.0, 3.0), 2.0).unwrap();
        assert_eq!(arm.end(), Point::new(1.0, 3.0));
        assert_eq!(arm.tangent(0.7), Point::new(0.0, 1.0));
        check_unit_speed(&arm);
    }

    #[test]
    fn rejects_bad_arms() {
        assert!(Arm::straight(Point::ORIGIN, Point::ORIGIN, 1.0).is_err());
        assert!(Arm::straight(Point::ORIGIN, Point::new(1.0, 0.0), 0.0).is_err());
        assert!(Arm::polyline(Point::ORIGIN, &[], None).is_err());
        assert!(Arm::polyline(Point::ORIGIN, &[Point::new(1.0, 0.0), Point::new(1.0, 0.0)], None).is_err());
        assert!(Arm::polyline(Point::ORIGIN, &[Point::new(1.0, 0.0)], Some(2.0)).is_err());
    }

    #[test]
    fn two_point_polyline_is_a_segment() {
        let arm = Arm::polyline(Point::ORIGIN, &[Point::new(3.0, 4.0)], None).unwrap();
        assert!((arm.length() - 5.0).abs() < 1e-12);
        assert!((arm.position(2.5) - Point::new(1.5, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn curved_polyline_is_arc_length_parameterized() {
        let pts: Vec<Point> = (1..=8)
            .map(|i| {
                let a = i as f64 * 0.2;
                Point::new(3.0 * a.sin(), 3.0 - 3.0 * a.cos())
            })
            .collect();
        let arm = Arm::polyline(Point::ORIGIN, &pts, None).unwrap();
        check_unit_speed(&arm);
        // Nearly a circle of radius 3 through angle 1.6.
        let expected = 3.0 * 1.6;
        assert!(((arm.length() - expected) / expected).abs() < 1e-3);
        assert!(arm.position(0.0).norm() < 1e-12);
        assert!((arm.end() - pts[7]).norm() < 1e-9);
    }

    #[test]
    fn arc_length_matches_dense_chord_sum() {
        let pts = [Point::new(1.0, 0.5), Point::new(2.0, 2.0), Point::new(4.0, 2.5)];
        let arm = Arm::polyline(Point::ORIGIN, &pts, None).unwrap();
        // Dense chord sum along the (arc-length) curve underestimates by O(h²).
        let n = 20_000;
        let chord: f64 = (0..n)
            .map(|i| {
                let a = arm.length() * i as f64 / n as f64;
                let b = arm.length() * (i + 1) as f64 / n as f64;
                arm.position(a).distance(arm.position(b))
            })
            .sum();
        assert!(((chord - arm.length()) / arm.length()).abs() < 1e-4);
    }

    #[test]
    fn extension_beyond_ends_is_linear() {
        let arm = Arm::polyline(Point::ORIGIN, &[Point::new(1.0, 1.0), Point::new(2.0, 1.5)], None).unwrap();
        let l = arm.length();
        let beyond = arm.position(l + 0.5);
        assert!((beyond - (arm.end() + arm.tangent(l) * 0.5)).norm() < 1e-12);
        let before = arm.position(-0.25);
        assert!((before - arm.tangent(0.0) * -0.25).norm() < 1e-12);
    }

    #[test]
    fn truncated_polyline() {
        let arm = Arm::polyline(Point::ORIGIN, &[Point::new(10.0, 0.0)], Some(4.0)).unwrap();
        assert_eq!(arm.length(), 4.0);
        assert!((arm.end() - Point::new(4.0, 0.0)).norm() < 1e-12);
    }
}
