//! Agent observations derived from robot-server state vectors.
//!
//! Target coordinates are recomputed from the pose fields and the target the
//! environment installed, so they do not depend on the server's own polar
//! conversion.

use super::{EnvError, Task};
use crate::robot_server::layout;
use crate::sim::geometry::{cartesian_to_spherical, distance3, Pose2D};

pub const MOBILE_OBS_LEN: usize = 20;
pub const ARM_OBS_LEN: usize = 15;

pub fn obs_len(task: Task) -> usize {
    match task {
        Task::MirNav => MOBILE_OBS_LEN,
        Task::UrReach => ARM_OBS_LEN,
    }
}

fn check_layout(task: Task, state: &[f64]) -> Result<(), EnvError> {
    let expected = layout::len(task.model());
    if state.len() != expected {
        return Err(EnvError::LayoutMismatch {
            expected,
            got: state.len(),
        });
    }
    Ok(())
}

fn mobile_pose(state: &[f64]) -> Pose2D {
    Pose2D {
        x: state[layout::MOBILE_POSE_X],
        y: state[layout::MOBILE_POSE_Y],
        theta: state[layout::MOBILE_POSE_THETA],
    }
}

fn arm_ee(state: &[f64]) -> [f64; 3] {
    let e = layout::ARM_EE;
    [state[e], state[e + 1], state[e + 2]]
}

/// Mobile: `[target r, target θ (robot frame), v, ω, 16 sector ranges]`.
/// Arm: `[target r, polar, azimuth, 6 joint positions, 6 joint velocities]`.
/// For the mobile task only `target[0..2]` is used.
pub fn build_observation(task: Task, state: &[f64], target: [f64; 3]) -> Result<Vec<f64>, EnvError> {
    check_layout(task, state)?;
    let mut obs = Vec::with_capacity(obs_len(task));
    match task {
        Task::MirNav => {
            let (r, theta) = mobile_pose(state).polar_to(target[0], target[1]);
            obs.extend_from_slice(&[r, theta]);
            obs.extend_from_slice(&state[layout::MOBILE_LIN_VEL..layout::MOBILE_SCAN + 16]);
        }
        Task::UrReach => {
            obs.extend_from_slice(&cartesian_to_spherical(target));
            obs.extend_from_slice(&state[layout::ARM_JOINTS..layout::ARM_JOINT_VELS + 6]);
        }
    }
    if let Some(v) = obs.iter().find(|v| !v.is_finite()) {
        return Err(EnvError::InvalidState(format!("non-finite observation value {v}")));
    }
    Ok(obs)
}

/// Distance to the target: planar for the mobile base, 3-D from the end
/// effector for the arm.
pub fn target_distance(task: Task, state: &[f64], target: [f64; 3]) -> Result<f64, EnvError> {
    check_layout(task, state)?;
    Ok(match task {
        Task::MirNav => {
            let p = mobile_pose(state);
            (target[0] - p.x).hypot(target[1] - p.y)
        }
        Task::UrReach => distance3(arm_ee(state), target),
    })
}

pub fn collided(task: Task, state: &[f64]) -> Result<bool, EnvError> {
    check_layout(task, state)?;
    Ok(match task {
        Task::MirNav => state[layout::MOBILE_COLLISION] != 0.0,
        Task::UrReach => {
            state[layout::ARM_SELF_COLLISION] != 0.0 || state[layout::ARM_GROUND_COLLISION] != 0.0
        }
    })
}
