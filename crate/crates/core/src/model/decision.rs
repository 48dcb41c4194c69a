use super::geometry::Point;
use super::ModelError;

/// Offsets of the structured blocks inside the flat decision vector.
///
/// Order: UAV positions (2 per stamp), battery levels (1 per stamp), arm
/// positions (m^G per stamp), durations (1 per interval). UGV planar
/// positions are not stored; they are recovered through the network map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    stamps: usize,
    arms: usize,
}

impl Layout {
    pub fn new(stamps: usize, arms: usize) -> Self {
        Self { stamps, arms }
    }

    pub fn stamps(&self) -> usize {
        self.stamps
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn len(&self) -> usize {
        2 * self.stamps + self.stamps + self.stamps * self.arms + (self.stamps - 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the x coordinate of the UAV at stamp `k`; y follows it.
    pub fn uav(&self, k: usize) -> usize {
        2 * k
    }

    pub fn battery(&self, k: usize) -> usize {
        2 * self.stamps + k
    }

    /// Index of arm 0's position at stamp `k`; the other arms follow.
    pub fn arm_pos(&self, k: usize) -> usize {
        3 * self.stamps + k * self.arms
    }

    pub fn duration(&self, k: usize) -> usize {
        3 * self.stamps + self.stamps * self.arms + k
    }

    pub fn durations(&self) -> std::ops::Range<usize> {
        self.duration(0)..self.len()
    }
}

/// Structured form of a decision vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub uav: Vec<Point>,
    pub battery: Vec<f64>,
    pub arm_positions: Vec<Vec<f64>>,
    pub durations: Vec<f64>,
}

/// The flat optimization variable plus its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionVector {
    layout: Layout,
    values: Vec<f64>,
}

impl DecisionVector {
    pub fn zeros(layout: Layout) -> Self {
        Self { layout, values: vec![0.0; layout.len()] }
    }

    pub fn from_flat(layout: Layout, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != layout.len() {
            return Err(ModelError::DimensionMismatch { expected: layout.len(), got: values.len() });
        }
        Ok(Self { layout, values })
    }

    pub fn from_trajectory(traj: &Trajectory) -> Result<Self, ModelError> {
        let n = traj.uav.len();
        let arms = traj.arm_positions.first().map_or(0, Vec::len);
        let mismatch = |expected, got| ModelError::DimensionMismatch { expected, got };
        if n < 2 {
            return Err(ModelError::TooFewStamps(n));
        }
        if traj.battery.len() != n {
            return Err(mismatch(n, traj.battery.len()));
        }
        if traj.arm_positions.len() != n {
            return Err(mismatch(n, traj.arm_positions.len()));
        }
        if let Some(bad) = traj.arm_positions.iter().find(|p| p.len() != arms) {
            return Err(mismatch(arms, bad.len()));
        }
        if traj.durations.len() != n - 1 {
            return Err(mismatch(n - 1, traj.durations.len()));
        }
        let layout = Layout::new(n, arms);
        let mut values = Vec::with_capacity(layout.len());
        values.extend(traj.uav.iter().flat_map(|p| [p.x, p.y]));
        values.extend_from_slice(&traj.battery);
        for p in &traj.arm_positions {
            values.extend_from_slice(p);
        }
        values.extend_from_slice(&traj.durations);
        Ok(Self { layout, values })
    }

    pub fn to_trajectory(&self) -> Trajectory {
        let n = self.layout.stamps();
        Trajectory {
            uav: (0..n).map(|k| self.uav(k)).collect(),
            battery: (0..n).map(|k| self.battery(k)).collect(),
            arm_positions: (0..n).map(|k| self.arm_positions(k).to_vec()).collect(),
            durations: self.durations().to_vec(),
        }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }

    pub fn uav(&self, k: usize) -> Point {
        let i = self.layout.uav(k);
        Point::new(self.values[i], self.values[i + 1])
    }

    pub fn set_uav(&mut self, k: usize, p: Point) {
        let i = self.layout.uav(k);
        self.values[i] = p.x;
        self.values[i + 1] = p.y;
    }

    pub fn battery(&self, k: usize) -> f64 {
        self.values[self.layout.battery(k)]
    }

    pub fn set_battery(&mut self, k: usize, e: f64) {
        let i = self.layout.battery(k);
        self.values[i] = e;
    }

    pub fn arm_positions(&self, k: usize) -> &[f64] {
        let i = self.layout.arm_pos(k);
        &self.values[i..i + self.layout.arms()]
    }

    pub fn arm_positions_mut(&mut self, k: usize) -> &mut [f64] {
        let i = self.layout.arm_pos(k);
        let m = self.layout.arms();
        &mut self.values[i..i + m]
    }

    pub fn duration(&self, k: usize) -> f64 {
        self.values[self.layout.duration(k)]
    }

    pub fn set_duration(&mut self, k: usize, s: f64) {
        let i = self.layout.duration(k);
        self.values[i] = s;
    }

    pub fn durations(&self) -> &[f64] {
        &self.values[self.layout.durations()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn offsets_partition_the_vector() {
        let l = Layout::new(5, 3);
        let mut seen = vec![0u8; l.len()];
        for k in 0..5 {
            seen[l.uav(k)] += 1;
            seen[l.uav(k) + 1] += 1;
            seen[l.battery(k)] += 1;
            for j in 0..3 {
                seen[l.arm_pos(k) + j] += 1;
            }
        }
        for k in 0..4 {
            seen[l.duration(k)] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(l.len(), 2 * 5 + 5 + 15 + 4);
    }

    #[test]
    fn rejects_wrong_lengths() {
        assert!(DecisionVector::from_flat(Layout::new(3, 1), vec![0.0; 3]).is_err());
        let t = Trajectory {
            uav: vec![Point::ORIGIN; 3],
            battery: vec![0.0; 3],
            arm_positions: vec![vec![0.0]; 3],
            durations: vec![0.0; 3],
        };
        assert!(DecisionVector::from_trajectory(&t).is_err());
    }

    proptest! {
        #[test]
        fn flat_structured_round_trip(
            stamps in 2usize..8,
            arms in 1usize..4,
            seed in proptest::collection::vec(-1e3f64..1e3, 100),
        ) {
            let layout = Layout::new(stamps, arms);
            let values: Vec<f64> = (0..layout.len()).map(|i| seed[i % seed.len()] * (i as f64 + 0.5)).collect();
            let x = DecisionVector::from_flat(layout, values.clone()).unwrap();
            let back = DecisionVector::from_trajectory(&x.to_trajectory()).unwrap();
            prop_assert_eq!(back.layout(), layout);
            let bits: Vec<u64> = back.as_slice().iter().map(|v| v.to_bits()).collect();
            let orig: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, orig);
        }
    }
}
