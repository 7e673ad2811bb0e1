//! Deterministic fixed-timestep kinematic simulation of the mobile base and
//! the arm, with their sensors and collision checks.

pub mod arm;
pub mod drive;
pub mod geometry;
pub mod raycast;
mod world;

pub use arm::{check_arm_collision, forward_kinematics, step_joint_controller, ArmConfig, CollisionReport};
pub use drive::{check_base_collision, step_diff_drive, BoxObstacle, Walls};
pub use geometry::{normalize_angle, Pose2D};
pub use raycast::raycast_scan;
pub use world::{ArmScene, MobileScene, RobotModel, Scene, WorldState};

use crate::command::Mode;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("{mode:?} command cannot drive a {model} world")]
    ModelMismatch { model: RobotModel, mode: Mode },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}
