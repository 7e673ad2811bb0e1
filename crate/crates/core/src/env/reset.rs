//! Initial-condition samplers for both tasks. Each function makes a single
//! attempt and returns `None` on rejection; the environment retries.

use std::f64::consts::PI;

use rand::Rng;

use crate::command::TimingConfig;
use crate::robot_server::DesiredState;
use crate::sim::arm::{
    check_arm_collision, forward_kinematics, solve_position_ik, step_joint_controller, ArmConfig, Joints,
    JOINT_LIMIT, MAX_JOINT_VEL,
};
use crate::sim::geometry::{cartesian_to_spherical, distance3, spherical_to_cartesian, Pose2D};

/// Robot and target x range within their half of the map.
pub const HALF_X: (f64, f64) = (0.5, 3.5);
pub const SPAWN_Y: f64 = 2.5;
/// Obstacles are dropped in the band |x| ≤ this.
pub const OBSTACLE_BAND_X: f64 = 1.0;
/// Minimum centre distance between an obstacle and the robot, the target or
/// another obstacle.
pub const MIN_CLEARANCE: f64 = 0.8;

pub const TARGET_BALL_R: f64 = 1.2;
pub const TARGET_MIN_RHO: f64 = 0.25;
pub const TARGET_MAX_R: f64 = 1.15;
pub const TARGET_MIN_Z: f64 = 0.1;

/// One draw of a navigation scene: robot in one half of the map, target in
/// the other, obstacles in the middle band.
pub fn sample_mobile_scene<R: Rng + ?Sized>(rng: &mut R, n_obstacles: usize) -> Option<DesiredState> {
    let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let robot = Pose2D::new(
        side * rng.gen_range(HALF_X.0..=HALF_X.1),
        rng.gen_range(-SPAWN_Y..=SPAWN_Y),
        rng.gen_range(-PI..PI),
    );
    let target = Pose2D::new(
        -side * rng.gen_range(HALF_X.0..=HALF_X.1),
        rng.gen_range(-SPAWN_Y..=SPAWN_Y),
        0.0,
    );
    let mut obstacles: Vec<(f64, f64)> = Vec::with_capacity(n_obstacles);
    for _ in 0..n_obstacles {
        let o = (
            rng.gen_range(-OBSTACLE_BAND_X..=OBSTACLE_BAND_X),
            rng.gen_range(-SPAWN_Y..=SPAWN_Y),
        );
        let clear = |x: f64, y: f64| (o.0 - x).hypot(o.1 - y) >= MIN_CLEARANCE;
        if !clear(robot.x, robot.y) || !clear(target.x, target.y) || !obstacles.iter().all(|p| clear(p.0, p.1)) {
            return None;
        }
        obstacles.push(o);
    }
    Some(DesiredState::Mobile {
        robot,
        target,
        obstacles,
    })
}

/// Whether a Cartesian point lies in the arm's target workspace: the upper
/// half-ball minus the regions near the base axis, near full extension and
/// near the floor.
pub fn in_target_workspace(p: [f64; 3]) -> bool {
    let rho = p[0].hypot(p[1]);
    let r = rho.hypot(p[2]);
    rho > TARGET_MIN_RHO && r <= TARGET_MAX_R && p[2] >= TARGET_MIN_Z
}

/// Uniform point of the target workspace, in spherical coordinates
/// `(r, polar, azimuth)`.
pub fn sample_target_semisphere<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let p = [
            rng.gen_range(-TARGET_BALL_R..=TARGET_BALL_R),
            rng.gen_range(-TARGET_BALL_R..=TARGET_BALL_R),
            rng.gen_range(0.0..=TARGET_BALL_R),
        ];
        if distance3(p, [0.0; 3]) > TARGET_BALL_R || !in_target_workspace(p) {
            continue;
        }
        return cartesian_to_spherical(p);
    }
}

fn random_joints<R: Rng + ?Sized>(rng: &mut R) -> Joints {
    std::array::from_fn(|_| rng.gen_range(-JOINT_LIMIT..=JOINT_LIMIT))
}

/// Joint target the robot server actually receives when an agent sends
/// `goal / π` as its normalized action.
pub fn commanded_joints(goal: &Joints) -> Joints {
    std::array::from_fn(|i| (goal[i] / PI) * PI)
}

/// Simulates the joint controller from `start` to `goal` and reports whether
/// every intermediate configuration is collision free.
pub fn joint_path_is_clear(start: &Joints, goal: &Joints, timing: &TimingConfig) -> bool {
    let dt = timing.actuation_cycle();
    let mut cfg = ArmConfig::at_rest(*start);
    let max_ticks = (2.0 * JOINT_LIMIT / (MAX_JOINT_VEL * dt)).ceil() as usize + 2;
    for _ in 0..max_ticks {
        cfg = step_joint_controller(&cfg, goal, dt, MAX_JOINT_VEL);
        if check_arm_collision(&cfg).any() {
            return false;
        }
        if cfg.joints == *goal {
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmEpisode {
    pub start: Joints,
    pub target_spherical: [f64; 3],
    /// Joint configuration whose end effector lies on the target.
    pub goal_joints: Joints,
}

impl ArmEpisode {
    pub fn desired_state(&self) -> DesiredState {
        DesiredState::Arm {
            joints: self.start,
            target_spherical: self.target_spherical,
        }
    }
}

const START_DRAWS: usize = 1000;
const IK_SEEDS: usize = 4;
const IK_TOL: f64 = 1e-9;

/// One draw of a reaching episode: a collision-free start, a workspace
/// target, and an IK solution reachable from the start along a
/// collision-free straight joint path.
pub fn sample_arm_episode<R: Rng + ?Sized>(
    rng: &mut R,
    timing: &TimingConfig,
    success_radius: f64,
) -> Option<ArmEpisode> {
    let start = (0..START_DRAWS)
        .map(|_| random_joints(rng))
        .find(|q| !check_arm_collision(&ArmConfig::at_rest(*q)).any())?;
    let target_spherical = sample_target_semisphere(rng);
    let target = spherical_to_cartesian(target_spherical);
    let seeds: Vec<Joints> = std::iter::once(start)
        .chain((0..IK_SEEDS).map(|_| random_joints(rng)))
        .collect();
    for seed in seeds {
        let Some(goal) = solve_position_ik(target, &seed, IK_TOL) else {
            continue;
        };
        let commanded = commanded_joints(&goal);
        if distance3(forward_kinematics(&commanded), target) > success_radius {
            continue;
        }
        if joint_path_is_clear(&start, &commanded, timing) {
            return Some(ArmEpisode {
                start,
                target_spherical,
                goal_joints: goal,
            });
        }
    }
    None
}

/// Largest number of actions the joint controller needs to cover any
/// start-to-goal move inside the joint limits.
pub fn worst_case_arm_actions(timing: &TimingConfig) -> u32 {
    let ticks = (2.0 * JOINT_LIMIT / (MAX_JOINT_VEL * timing.actuation_cycle())).ceil() as u32;
    ticks.div_ceil(timing.repeats())
}
