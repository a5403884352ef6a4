//! Highway trajectory prediction with xLSTM encoders, star-graph attention
//! over eight neighbor slots, and a differentiable kinematic rollout layer.

pub mod cells;
pub mod error;
pub mod evalcli;
pub mod graph;
pub mod kinematics;
pub mod model;
pub mod numcore;
pub mod parallel;
pub mod scenario;

pub use error::{Error, Result};
