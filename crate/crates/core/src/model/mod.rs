//! Mission geometry, physical constants and the decision-vector layout.

mod arm;
mod decision;
mod file;
mod geometry;
mod graph;
mod instance;

pub use arm::{ArcCurve, Arm, ArmSource};
pub use decision::{DecisionVector, Layout, Trajectory};
pub use file::{instance_to_json, parse_instance, read_instance, write_instance, ArmRecord, InstanceRecord};
pub use geometry::Point;
pub use graph::{NetworkPoint, Projection, StarGraph};
pub use instance::{default_stamp_count, PhysicalParams, ProblemInstance};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("star graph needs at least one arm")]
    EmptyGraph,
    #[error("invalid arm: {0}")]
    InvalidArm(String),
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("arm {arm} position {value} outside [0, {max}]")]
    OutOfBox { arm: usize, value: f64, max: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("{which} lies {distance} km from the road network")]
    EndpointOffNetwork { which: &'static str, distance: f64 },
    #[error("need at least 2 time stamps, got {0}")]
    TooFewStamps(usize),
    #[error("instance contains a custom arm that has no file representation")]
    Unserializable,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}
