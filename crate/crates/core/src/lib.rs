//! Smooth trajectory optimization for energy-sharing UAV–UGV missions.
//!
//! The UAV must visit every task point, the UGV must reach the end of every
//! road arm, and the UAV may only recharge while riding the UGV. Which
//! branch of each battery disjunction holds is left to the optimizer by
//! replacing every `min` with a smooth softmin; the resulting nonlinear
//! program is solved by an augmented-Lagrangian method with an L-BFGS inner
//! loop. A big-M mixed-integer encoding with an enumeration solver serves as
//! the exact reference on tiny instances.

pub mod alm;
pub mod benchmark;
pub mod instances;
pub mod minlp;
pub mod model;
pub mod problem;
pub mod smoothing;
pub mod transcription;

pub use alm::{solve, AlmConfig, SolveReport, SolveStatus, TracePoint};
pub use instances::{generate, paper_default_params, warm_start, GeneratorConfig};
pub use minlp::{solve_exact, BinaryAssignment, MinlpModel, OracleLimits, OracleReport, OracleStatus};
pub use model::{
    DecisionVector, Layout, ModelError, NetworkPoint, PhysicalParams, Point, ProblemInstance, StarGraph, Trajectory,
};
pub use smoothing::{SmoothingConfig, SoftminMethod};
pub use transcription::{Transcription, ViolationBreakdown};
