//! JSON instance files.
//!
//! ```json
//! {
//!   "junction": [5.0, 5.0],
//!   "arms": [
//!     {"type": "straight", "direction": [1.0, 0.0], "length": 4.0},
//!     {"type": "polyline", "points": [[4.0, 6.0], [2.5, 8.0]]}
//!   ],
//!   "uav_tasks": [[7.0, 7.5]],
//!   "r0": [5.0, 5.0],
//!   "rf": [9.0, 5.0],
//!   "params": {"v_max_A": 36.0, "v_max_G": 16.2, "kappa": 1.5,
//!              "e_min": 0.0, "e_max": 0.4, "s_min": 0.0, "s_max": 10.0},
//!   "N": 9
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arm::{Arm, ArmSource};
use super::geometry::Point;
use super::graph::StarGraph;
use super::instance::{PhysicalParams, ProblemInstance};
use super::ModelError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ArmRecord {
    Straight {
        direction: Point,
        length: f64,
    },
    Polyline {
        points: Vec<Point>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        length: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub junction: Point,
    pub arms: Vec<ArmRecord>,
    pub uav_tasks: Vec<Point>,
    pub r0: Point,
    pub rf: Point,
    pub params: PhysicalParams,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub stamps: Option<usize>,
}

impl InstanceRecord {
    pub fn build(&self) -> Result<ProblemInstance, ModelError> {
        let arms = self
            .arms
            .iter()
            .map(|a| match a {
                ArmRecord::Straight { direction, length } => Arm::straight(self.junction, *direction, *length),
                ArmRecord::Polyline { points, length } => Arm::polyline(self.junction, points, *length),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let graph = StarGraph::new(self.junction, arms)?;
        ProblemInstance::new(graph, self.uav_tasks.clone(), self.r0, self.rf, self.params, self.stamps)
    }

    pub fn from_instance(inst: &ProblemInstance) -> Result<Self, ModelError> {
        let arms = inst
            .graph()
            .arms()
            .iter()
            .map(|arm| match arm.source() {
                ArmSource::Straight { direction } => {
                    Ok(ArmRecord::Straight { direction: *direction, length: arm.length() })
                }
                ArmSource::Polyline { points } => {
                    Ok(ArmRecord::Polyline { points: points.clone(), length: Some(arm.length()) })
                }
                ArmSource::Custom => Err(ModelError::Unserializable),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            junction: inst.graph().junction(),
            arms,
            uav_tasks: inst.uav_tasks().to_vec(),
            r0: inst.r0(),
            rf: inst.rf(),
            params: *inst.params(),
            stamps: Some(inst.stamps()),
        })
    }
}

pub fn parse_instance(text: &str) -> Result<ProblemInstance, ModelError> {
    let record: InstanceRecord = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    record.build()
}

pub fn read_instance(path: &Path) -> Result<ProblemInstance, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    parse_instance(&text)
}

pub fn instance_to_json(inst: &ProblemInstance) -> Result<String, ModelError> {
    let record = InstanceRecord::from_instance(inst)?;
    serde_json::to_string_pretty(&record).map_err(|e| ModelError::Parse(e.to_string()))
}

pub fn write_instance(path: &Path, inst: &ProblemInstance) -> Result<(), ModelError> {
    let text = instance_to_json(inst)?;
    std::fs::write(path, text).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "junction": [5.0, 5.0],
        "arms": [
            {"type": "straight", "direction": [1.0, 0.0], "length": 4.0},
            {"type": "polyline", "points": [[4.0, 6.0], [2.5, 8.0]]}
        ],
        "uav_tasks": [[7.0, 7.5]],
        "r0": [5.0, 5.0],
        "rf": [9.0, 5.0],
        "params": {"v_max_A": 36.0, "v_max_G": 16.2, "kappa": 1.5,
                   "e_min": 0.0, "e_max": 0.4, "s_min": 0.0, "s_max": 10.0},
        "N": 9
    }"#;

    #[test]
    fn parses_sample() {
        let inst = parse_instance(SAMPLE).unwrap();
        assert_eq!(inst.stamps(), 9);
        assert_eq!(inst.arm_count(), 2);
        assert_eq!(inst.params().v_max_ugv, 16.2);
        assert_eq!(inst.graph().arms()[0].end(), Point::new(9.0, 5.0));
    }

    #[test]
    fn write_then_read() {
        let inst = parse_instance(SAMPLE).unwrap();
        let text = instance_to_json(&inst).unwrap();
        let back = parse_instance(&text).unwrap();
        assert_eq!(back.stamps(), inst.stamps());
        assert_eq!(back.uav_tasks(), inst.uav_tasks());
        for (a, b) in back.graph().arms().iter().zip(inst.graph().arms()) {
            assert!((a.length() - b.length()).abs() < 1e-12);
            assert!(a.end().distance(b.end()) < 1e-9);
        }
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(parse_instance("{"), Err(ModelError::Parse(_))));
        let missing_params = SAMPLE.replace("\"params\"", "\"parameters\"");
        assert!(matches!(parse_instance(&missing_params), Err(ModelError::Parse(_))));
        let bad_type = SAMPLE.replace("\"straight\"", "\"circle\"");
        assert!(parse_instance(&bad_type).is_err());
    }

    #[test]
    fn optional_stamp_count() {
        let text = SAMPLE.replace(",\n        \"N\": 9", "");
        let inst = parse_instance(&text).unwrap();
        assert_eq!(inst.stamps(), 3 * (1 + 2) + 2);
    }
}
