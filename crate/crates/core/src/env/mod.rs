//! Gym-style environments over a robot-server connection.
//!
//! An [`Environment`] reaches its robot server either directly or through a
//! server manager, which spawns a dedicated cluster for it. `step` sends one
//! normalized action, waits for it to finish executing, then reads the
//! latest state and turns it into an observation, a reward and an outcome.

pub mod observation;
pub mod reset;
pub mod reward;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use observation::{build_observation, collided, obs_len, target_distance, ARM_OBS_LEN, MOBILE_OBS_LEN};
pub use reset::{
    commanded_joints, in_target_workspace, joint_path_is_clear, sample_arm_episode, sample_mobile_scene,
    sample_target_semisphere, worst_case_arm_actions, ArmEpisode, HALF_X, MIN_CLEARANCE, OBSTACLE_BAND_X,
    SPAWN_Y, TARGET_BALL_R, TARGET_MAX_R, TARGET_MIN_RHO, TARGET_MIN_Z,
};
pub use reward::{compute_reward, Outcome, RewardParams};

use crate::command::TimingConfig;
use crate::manager::{ClusterStatus, ManagerClient};
use crate::robot_server::{ClockMode, DesiredState};
use crate::sim::arm::Joints;
use crate::sim::geometry::spherical_to_cartesian;
use crate::sim::RobotModel;
use crate::wire::{self, payload, Client, Payload, Value, WireError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    /// Drive the mobile base to a target across the map.
    MirNav,
    /// Bring the arm's end effector to a target point.
    UrReach,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::MirNav => "mir_nav",
            Task::UrReach => "ur_reach",
        }
    }

    pub fn model(self) -> RobotModel {
        match self {
            Task::MirNav => RobotModel::Mir100,
            Task::UrReach => RobotModel::Ur10,
        }
    }

    pub fn action_len(self) -> usize {
        self.model().command_mode().arity()
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mir_nav" => Ok(Task::MirNav),
            "ur_reach" => Ok(Task::UrReach),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddressKind {
    /// A server manager that spawns a cluster for the environment.
    Manager,
    /// A robot server started by other means.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub task: Task,
    pub address: String,
    pub address_kind: AddressKind,
    pub timing: TimingConfig,
    pub max_steps: u32,
    pub seed: Option<u64>,
    pub reward: RewardParams,
    /// Obstacles placed by mobile resets.
    pub n_obstacles: usize,
    /// Clock mode requested for manager-spawned clusters.
    pub mode: ClockMode,
}

impl EnvConfig {
    pub fn new(task: Task, address: impl Into<String>, address_kind: AddressKind) -> Self {
        let (timing, max_steps, reward) = match task {
            Task::MirNav => (TimingConfig::mir100(), 500, RewardParams::mobile()),
            Task::UrReach => (TimingConfig::ur10(), 300, RewardParams::arm()),
        };
        EnvConfig {
            task,
            address: address.into(),
            address_kind,
            timing,
            max_steps,
            seed: None,
            reward,
            n_obstacles: 3,
            mode: ClockMode::Fast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("connection error: {0}")]
    Connection(WireError),
    #[error("spawn failed: {0}")]
    SpawnFailed(String),
    #[error("reset failed: {0}")]
    ResetFailed(String),
    #[error("episode aborted: {0}")]
    EpisodeAborted(WireError),
    #[error("episode is over; call reset")]
    EpisodeDone,
    #[error("no episode in progress; call reset")]
    NotReset,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("state layout mismatch: expected {expected} values, got {got}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
    pub outcome: Outcome,
}

impl Transition {
    pub fn to_payload(&self) -> Payload {
        payload([
            ("s", Value::from(self.s.clone())),
            ("a", Value::from(self.a.clone())),
            ("r", Value::Number(self.r)),
            ("s_next", Value::from(self.s_next.clone())),
            ("done", Value::Bool(self.done)),
            ("outcome", Value::from(self.outcome.as_str())),
        ])
    }

    pub fn to_text(&self) -> String {
        wire::to_canonical_text(&self.to_payload())
    }
}

struct Episode {
    target: [f64; 3],
    goal_joints: Option<Joints>,
    steps: u32,
    prev_dist: f64,
    obs: Vec<f64>,
    state: Vec<f64>,
    outcome: Outcome,
}

const RESET_ATTEMPTS: usize = 100;
/// How long `reset` waits for a restarting cluster to come back.
const RECONNECT_WAIT: Duration = Duration::from_secs(15);

pub struct Environment {
    cfg: EnvConfig,
    client: Option<Client>,
    address: String,
    cluster: Option<(ManagerClient, String)>,
    rng: ChaCha8Rng,
    episode: Option<Episode>,
}

impl Environment {
    /// Connects to a robot server, spawning one through the manager when
    /// `cfg.address_kind` is [`AddressKind::Manager`].
    pub fn make(cfg: EnvConfig) -> Result<Environment, EnvError> {
        cfg.reward.validate().map_err(EnvError::InvalidConfig)?;
        if cfg.max_steps == 0 {
            return Err(EnvError::InvalidConfig("max_steps must be positive".into()));
        }
        let (address, cluster) = match cfg.address_kind {
            AddressKind::Direct => (cfg.address.clone(), None),
            AddressKind::Manager => {
                let mc = ManagerClient::connect(&cfg.address).map_err(EnvError::Connection)?;
                let (id, address) = mc.spawn(cfg.task.model(), cfg.mode, None).map_err(|e| match e {
                    WireError::Remote { message, .. } => EnvError::SpawnFailed(message),
                    other => EnvError::Connection(other),
                })?;
                (address, Some((mc, id)))
            }
        };
        let client = Client::connect(&address, wire::DEFAULT_DEADLINE).map_err(EnvError::Connection)?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or_else(rand::random));
        Ok(Environment {
            cfg,
            client: Some(client),
            address,
            cluster,
            rng,
            episode: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Address of the robot server currently in use.
    pub fn address(&self) -> &str {
        &self.address
    }

    /// Manager cluster id, for manager-backed environments.
    pub fn cluster_id(&self) -> Option<&str> {
        self.cluster.as_ref().map(|(_, id)| id.as_str())
    }

    /// Joint configuration that places the end effector on the current
    /// target (arm task only). Exposed for scripted agents and tests.
    pub fn goal_joints(&self) -> Option<Joints> {
        self.episode.as_ref().and_then(|e| e.goal_joints)
    }

    /// Target position the current episode was reset with (z = 0 for the
    /// mobile task).
    pub fn target(&self) -> Option<[f64; 3]> {
        self.episode.as_ref().map(|e| e.target)
    }

    /// Raw robot-server state after the latest reset or step.
    pub fn last_state(&self) -> Option<&[f64]> {
        self.episode.as_ref().map(|e| e.state.as_slice())
    }

    pub fn steps(&self) -> u32 {
        self.episode.as_ref().map_or(0, |e| e.steps)
    }

    fn call(&self, service: &str, p: Payload, deadline: Duration) -> Result<Payload, WireError> {
        match &self.client {
            Some(c) => c.call(service, p, deadline),
            None => Err(WireError::Connection("not connected".into())),
        }
    }

    /// Re-establishes the connection after the server went away, following
    /// the cluster to its new address when a manager restarted it.
    fn reconnect(&mut self) -> Result<(), EnvError> {
        if let Some((mc, id)) = &self.cluster {
            let until = Instant::now() + RECONNECT_WAIT;
            loop {
                match mc.check(id) {
                    Ok((ClusterStatus::Healthy, address)) => {
                        self.address = address;
                        break;
                    }
                    Ok((ClusterStatus::Dead, _)) => {
                        return Err(EnvError::Connection(WireError::Connection(format!(
                            "cluster {id} is dead"
                        ))))
                    }
                    Ok(_) if Instant::now() < until => std::thread::sleep(Duration::from_millis(50)),
                    Ok((status, _)) => {
                        return Err(EnvError::Connection(WireError::Connection(format!(
                            "cluster {id} still {status}"
                        ))))
                    }
                    Err(e) => return Err(EnvError::Connection(e)),
                }
            }
        }
        self.client = Some(Client::connect(&self.address, wire::DEFAULT_DEADLINE).map_err(EnvError::Connection)?);
        Ok(())
    }

    fn get_state(&self) -> Result<Vec<f64>, WireError> {
        let reply = self.call("get_state", Payload::new(), wire::DEFAULT_DEADLINE)?;
        reply
            .get("state")
            .and_then(Value::as_array)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| WireError::MalformedBody("get_state reply without state".into()))
    }

    /// Starts a new episode. With `seed`, the episode's initial conditions
    /// depend only on that seed.
    pub fn reset(&mut self, seed: Option<u64>) -> Result<Vec<f64>, EnvError> {
        if let Some(s) = seed {
            self.rng = ChaCha8Rng::seed_from_u64(s);
        }
        self.episode = None;
        if self.client.as_ref().map_or(true, Client::is_closed) {
            self.reconnect()?;
        }
        let task = self.cfg.task;
        let mut drawn = None;
        for _ in 0..RESET_ATTEMPTS {
            drawn = match task {
                Task::MirNav => sample_mobile_scene(&mut self.rng, self.cfg.n_obstacles).map(|d| (d, None)),
                Task::UrReach => sample_arm_episode(&mut self.rng, &self.cfg.timing, self.cfg.reward.success_radius)
                    .map(|ep| (ep.desired_state(), Some(ep.goal_joints))),
            };
            if drawn.is_some() {
                break;
            }
        }
        let Some((desired, goal_joints)) = drawn else {
            return Err(EnvError::ResetFailed(format!(
                "no valid {task} initial condition in {RESET_ATTEMPTS} attempts"
            )));
        };
        let target = match &desired {
            DesiredState::Mobile { target, .. } => [target.x, target.y, 0.0],
            DesiredState::Arm { target_spherical, .. } => spherical_to_cartesian(*target_spherical),
        };
        self.call(
            "set_state",
            payload([("desired", desired.to_array())]),
            wire::DEFAULT_DEADLINE,
        )
        .map_err(|e| match e {
            WireError::Remote { code, message } if code == "InvalidState" => EnvError::ResetFailed(message),
            other => EnvError::Connection(other),
        })?;
        let state = self.get_state().map_err(EnvError::Connection)?;
        let obs = build_observation(task, &state, target)?;
        let prev_dist = target_distance(task, &state, target)?;
        self.episode = Some(Episode {
            target,
            goal_joints,
            steps: 0,
            prev_dist,
            obs: obs.clone(),
            state,
            outcome: Outcome::Running,
        });
        Ok(obs)
    }

    /// Executes one normalized action and returns the resulting transition.
    pub fn step(&mut self, action: &[f64]) -> Result<Transition, EnvError> {
        let task = self.cfg.task;
        let ep = self.episode.as_ref().ok_or(EnvError::NotReset)?;
        if ep.outcome.is_done() {
            return Err(EnvError::EpisodeDone);
        }
        if action.len() != task.action_len() {
            return Err(EnvError::InvalidAction(format!(
                "{task} takes {} values, got {}",
                task.action_len(),
                action.len()
            )));
        }
        if let Some(v) = action.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(EnvError::InvalidAction(format!("value {v} outside [-1, 1]")));
        }
        let target = ep.target;
        let result = self
            .call(
                "send_action",
                payload([("action", action.to_vec())]),
                wire::send_action_deadline(self.cfg.timing.action_duration()),
            )
            .and_then(|_| self.get_state());
        let state = match result {
            Ok(s) => s,
            Err(e) => {
                self.episode = None;
                return Err(EnvError::EpisodeAborted(e));
            }
        };
        let obs = build_observation(task, &state, target)?;
        let dist = target_distance(task, &state, target)?;
        let hit = collided(task, &state)?;
        let ep = self.episode.as_mut().expect("episode checked above");
        ep.steps += 1;
        let outcome = Outcome::classify(hit, dist, self.cfg.reward.success_radius, ep.steps, self.cfg.max_steps);
        let r = compute_reward(ep.prev_dist, dist, outcome, &self.cfg.reward);
        let t = Transition {
            s: std::mem::replace(&mut ep.obs, obs.clone()),
            a: action.to_vec(),
            r,
            s_next: obs,
            done: outcome.is_done(),
            outcome,
        };
        ep.prev_dist = dist;
        ep.state = state;
        ep.outcome = outcome;
        Ok(t)
    }

    /// Releases the robot server; manager-spawned clusters are killed.
    pub fn close(&mut self) {
        if let Some(c) = self.client.take() {
            c.close();
        }
        if let Some((mc, id)) = self.cluster.take() {
            if let Err(e) = mc.kill(&id) {
                log::warn!("killing cluster {id}: {e}");
            }
        }
    }
}

impl Drop for Environment {
    fn drop(&mut self) {
        self.close();
    }
}
