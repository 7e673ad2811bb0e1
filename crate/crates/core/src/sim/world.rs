use std::fmt;
use std::str::FromStr;

use super::arm::{self, ArmConfig, CollisionReport, Joints, Vec3, N_JOINTS};
use super::drive::{self, BoxObstacle, Walls, ROBOT_RADIUS};
use super::geometry::Pose2D;
use super::raycast::{raycast_scan, MAX_RANGE, N_SECTORS};
use super::SimError;
use crate::command::{Command, Mode};
use crate::wire::{from_text, to_canonical_text, Payload, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RobotModel {
    Mir100,
    Ur10,
}

impl RobotModel {
    pub fn as_str(self) -> &'static str {
        match self {
            RobotModel::Mir100 => "mir100",
            RobotModel::Ur10 => "ur10",
        }
    }

    pub fn command_mode(self) -> Mode {
        match self {
            RobotModel::Mir100 => Mode::Velocity,
            RobotModel::Ur10 => Mode::JointPosition,
        }
    }
}

impl fmt::Display for RobotModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RobotModel {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mir100" => Ok(RobotModel::Mir100),
            "ur10" => Ok(RobotModel::Ur10),
            other => Err(SimError::InvalidScene(format!("unknown robot model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobileScene {
    pub pose: Pose2D,
    pub linear_vel: f64,
    pub angular_vel: f64,
    pub obstacles: Vec<BoxObstacle>,
    pub target: Pose2D,
    pub walls: Walls,
    pub scan: [f64; N_SECTORS],
    pub collision: CollisionReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmScene {
    pub arm: ArmConfig,
    pub target: Vec3,
    pub ee: Vec3,
    pub collision: CollisionReport,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scene {
    Mobile(MobileScene),
    Arm(ArmScene),
}

/// Complete simulated world: one robot, its scene and the simulation clock.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub scene: Scene,
    pub ticks: u64,
    /// Simulation time, always `ticks · dt`.
    pub clock: f64,
}

impl WorldState {
    /// Mobile world at rest. Sensors and collision flags are computed but
    /// collision is not latched: a fresh world always starts clear.
    pub fn mobile(pose: Pose2D, target: Pose2D, obstacles: Vec<BoxObstacle>, walls: Walls) -> Self {
        let scan = raycast_scan(pose, &walls, &obstacles, MAX_RANGE);
        WorldState {
            scene: Scene::Mobile(MobileScene {
                pose,
                linear_vel: 0.0,
                angular_vel: 0.0,
                obstacles,
                target,
                walls,
                scan,
                collision: CollisionReport::default(),
            }),
            ticks: 0,
            clock: 0.0,
        }
    }

    pub fn arm(joints: Joints, target: Vec3) -> Self {
        WorldState {
            scene: Scene::Arm(ArmScene {
                arm: ArmConfig::at_rest(joints),
                target,
                ee: arm::forward_kinematics(&joints),
                collision: CollisionReport::default(),
            }),
            ticks: 0,
            clock: 0.0,
        }
    }

    pub fn model(&self) -> RobotModel {
        match self.scene {
            Scene::Mobile(_) => RobotModel::Mir100,
            Scene::Arm(_) => RobotModel::Ur10,
        }
    }

    pub fn collision(&self) -> CollisionReport {
        match &self.scene {
            Scene::Mobile(m) => m.collision,
            Scene::Arm(a) => a.collision,
        }
    }

    /// The command that stops the robot where it is.
    pub fn default_command(&self) -> Command {
        match &self.scene {
            Scene::Mobile(_) => Command::Velocity {
                linear: 0.0,
                angular: 0.0,
            },
            Scene::Arm(a) => Command::JointPosition(a.arm.joints),
        }
    }

    /// Advances the world by one actuation cycle under `cmd`. Once a
    /// collision is latched the robot stays put until the world is replaced.
    pub fn tick(&self, cmd: &Command, dt: f64) -> Result<WorldState, SimError> {
        let scene = match (&self.scene, cmd) {
            (Scene::Mobile(m), Command::Velocity { linear, angular }) => {
                let mut next = m.clone();
                if m.collision.base_collision {
                    next.linear_vel = 0.0;
                    next.angular_vel = 0.0;
                } else {
                    next.pose = drive::step_diff_drive(m.pose, *linear, *angular, dt);
                    next.linear_vel = *linear;
                    next.angular_vel = *angular;
                    next.collision.base_collision = drive::check_base_collision(
                        next.pose,
                        ROBOT_RADIUS,
                        &m.walls,
                        &m.obstacles,
                    );
                }
                next.scan = raycast_scan(next.pose, &next.walls, &next.obstacles, MAX_RANGE);
                Scene::Mobile(next)
            }
            (Scene::Arm(a), Command::JointPosition(target)) => {
                let mut next = a.clone();
                let goal = if a.collision.any() { a.arm.joints } else { *target };
                next.arm = arm::step_joint_controller(&a.arm, &goal, dt, arm::MAX_JOINT_VEL);
                next.ee = arm::forward_kinematics(&next.arm.joints);
                next.collision = a.collision.merge(arm::check_arm_collision(&next.arm));
                Scene::Arm(next)
            }
            _ => {
                return Err(SimError::ModelMismatch {
                    model: self.model(),
                    mode: cmd.mode(),
                })
            }
        };
        let ticks = self.ticks + 1;
        Ok(WorldState {
            scene,
            ticks,
            clock: ticks as f64 * dt,
        })
    }

    /// Scene description in canonical text form.
    pub fn to_scene_text(&self) -> String {
        let mut p = Payload::new();
        p.insert("model".into(), Value::from(self.model().as_str()));
        match &self.scene {
            Scene::Mobile(m) => {
                p.insert("walls".into(), vec![m.walls.length, m.walls.width].into());
                p.insert("robot".into(), vec![m.pose.x, m.pose.y, m.pose.theta].into());
                p.insert("target".into(), vec![m.target.x, m.target.y, m.target.theta].into());
                let obs: Vec<f64> = m
                    .obstacles
                    .iter()
                    .flat_map(|b| [b.center_x, b.center_y, b.edge])
                    .collect();
                p.insert("obstacles".into(), obs.into());
            }
            Scene::Arm(a) => {
                p.insert("joints".into(), a.arm.joints.to_vec().into());
                p.insert("target".into(), a.target.to_vec().into());
            }
        }
        to_canonical_text(&p)
    }

    /// Parses a scene description. The world starts at rest with clock 0.
    pub fn from_scene_text(text: &str) -> Result<WorldState, SimError> {
        let p = from_text(text).map_err(SimError::InvalidScene)?;
        let model: RobotModel = p
            .get("model")
            .and_then(Value::as_str)
            .ok_or_else(|| SimError::InvalidScene("missing \"model\"".into()))?
            .parse()?;
        let arr = |key: &str, len: Option<usize>| -> Result<Vec<f64>, SimError> {
            let a = p
                .get(key)
                .and_then(Value::as_array)
                .ok_or_else(|| SimError::InvalidScene(format!("missing array {key:?}")))?;
            if let Some(n) = len {
                if a.len() != n {
                    return Err(SimError::InvalidScene(format!("{key:?} needs {n} values")));
                }
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(SimError::InvalidScene(format!("{key:?} has non-finite values")));
            }
            Ok(a.to_vec())
        };
        let world = match model {
            RobotModel::Mir100 => {
                let walls = match p.get("walls") {
                    Some(_) => {
                        let w = arr("walls", Some(2))?;
                        Walls {
                            length: w[0],
                            width: w[1],
                        }
                    }
                    None => Walls::default(),
                };
                let r = arr("robot", Some(3))?;
                let t = arr("target", Some(3))?;
                let o = if p.contains_key("obstacles") {
                    arr("obstacles", None)?
                } else {
                    Vec::new()
                };
                if o.len() % 3 != 0 {
                    return Err(SimError::InvalidScene(
                        "\"obstacles\" must be (x, y, edge) triples".into(),
                    ));
                }
                let obstacles = o
                    .chunks(3)
                    .map(|c| BoxObstacle {
                        center_x: c[0],
                        center_y: c[1],
                        edge: c[2],
                    })
                    .collect();
                WorldState::mobile(
                    Pose2D::new(r[0], r[1], r[2]),
                    Pose2D::new(t[0], t[1], t[2]),
                    obstacles,
                    walls,
                )
            }
            RobotModel::Ur10 => {
                let j = arr("joints", Some(N_JOINTS))?;
                let t = arr("target", Some(3))?;
                let mut joints = [0.0; N_JOINTS];
                joints.copy_from_slice(&j);
                WorldState::arm(joints, [t[0], t[1], t[2]])
            }
        };
        world.validate()?;
        Ok(world)
    }

    /// Checks that every pose lies in the map and the arm is within limits.
    pub fn validate(&self) -> Result<(), SimError> {
        match &self.scene {
            Scene::Mobile(m) => {
                if !(m.walls.length > 0.0 && m.walls.width > 0.0) {
                    return Err(SimError::InvalidScene("walls must have positive size".into()));
                }
                let inside = |x: f64, y: f64| x.is_finite() && y.is_finite() && m.walls.contains(x, y);
                if !inside(m.pose.x, m.pose.y) {
                    return Err(SimError::InvalidScene("robot outside the map".into()));
                }
                if !inside(m.target.x, m.target.y) {
                    return Err(SimError::InvalidScene("target outside the map".into()));
                }
                for b in &m.obstacles {
                    if !(b.edge > 0.0) {
                        return Err(SimError::InvalidScene("obstacle edge must be positive".into()));
                    }
                    let h = b.half();
                    if !(inside(b.center_x - h, b.center_y - h) && inside(b.center_x + h, b.center_y + h)) {
                        return Err(SimError::InvalidScene(format!(
                            "obstacle at ({}, {}) outside the map",
                            b.center_x, b.center_y
                        )));
                    }
                }
            }
            Scene::Arm(a) => {
                if !a.arm.joints.iter().all(|q| q.is_finite()) || !arm::within_limits(&a.arm.joints) {
                    return Err(SimError::InvalidScene("joints outside ±π".into()));
                }
                if !a.target.iter().all(|v| v.is_finite()) {
                    return Err(SimError::InvalidScene("target not finite".into()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_mobile() -> WorldState {
        WorldState::mobile(
            Pose2D::new(-2.0, 0.5, 0.3),
            Pose2D::new(2.5, -1.0, 0.0),
            vec![BoxObstacle::cube(0.0, 0.0), BoxObstacle::cube(0.5, 1.5)],
            Walls::default(),
        )
    }

    #[test]
    fn zero_command_holds_pose_and_advances_clock() {
        let w = sample_mobile();
        let stop = w.default_command();
        let next = w.tick(&stop, 0.1).unwrap();
        let (Scene::Mobile(a), Scene::Mobile(b)) = (&w.scene, &next.scene) else { unreachable!() };
        assert_eq!(a.pose, b.pose);
        assert_eq!(next.clock, 0.1);
        assert_eq!(next.ticks, 1);
    }

    #[test]
    fn model_mismatch() {
        let w = sample_mobile();
        let err = w.tick(&Command::JointPosition([0.0; 6]), 0.1).unwrap_err();
        assert!(matches!(err, SimError::ModelMismatch { .. }));
    }

    #[test]
    fn collision_latches_and_freezes_base() {
        let w = WorldState::mobile(
            Pose2D::new(3.58, 0.0, 0.0),
            Pose2D::new(-3.0, 0.0, 0.0),
            vec![],
            Walls::default(),
        );
        let go = Command::Velocity { linear: 0.5, angular: 0.0 };
        let hit = w.tick(&go, 0.1).unwrap();
        assert!(hit.collision().base_collision);
        let after = hit.tick(&go, 0.1).unwrap();
        assert!(after.collision().base_collision);
        let (Scene::Mobile(a), Scene::Mobile(b)) = (&hit.scene, &after.scene) else { unreachable!() };
        assert_eq!(a.pose, b.pose);
        assert_eq!(b.linear_vel, 0.0);
    }

    #[test]
    fn scene_text_round_trip() {
        let w = sample_mobile();
        let text = w.to_scene_text();
        assert_eq!(WorldState::from_scene_text(&text).unwrap(), w);
        let arm = WorldState::arm([0.1, -1.5, 1.0, 0.0, 0.5, 0.0], [0.5, 0.2, 0.6]);
        assert_eq!(WorldState::from_scene_text(&arm.to_scene_text()).unwrap(), arm);
    }

    #[test]
    fn scene_outside_map_rejected() {
        let text = r#"{"model":"mir100","obstacles":[5.0,0.0,0.5],"robot":[0.0,0.0,0.0],"target":[1.0,0.0,0.0]}"#;
        assert!(matches!(
            WorldState::from_scene_text(text),
            Err(SimError::InvalidScene(_))
        ));
    }
}
