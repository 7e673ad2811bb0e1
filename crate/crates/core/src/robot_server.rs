//! Per-robot RPC service.
//!
//! A robot server owns one simulated world and the loop that steps it every
//! actuation cycle. RPC handlers never touch the world directly: actions go
//! through the [`CommandHandler`] queue, state reads come from a snapshot
//! buffer replaced once per tick, and `set_state` requests are handed to the
//! loop through a one-entry request slot.
//!
//! Services: `get_state`, `set_state`, `send_action`, `health`, plus
//! `inject_fault` used by the chaos tests.

use std::collections::VecDeque;
use std::fmt;
use std::net::{SocketAddr, TcpListener};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use crate::command::{Command, CommandHandler, Emission, TimingConfig};
use crate::sim::arm::{JOINT_LIMIT, N_JOINTS};
use crate::sim::drive::{BoxObstacle, Walls, MAX_ANGULAR_VEL, MAX_LINEAR_VEL};
use crate::sim::geometry::{cartesian_to_spherical, spherical_to_cartesian, Pose2D};
use crate::sim::{RobotModel, Scene, WorldState};
use crate::wire::{self, payload, Handler, Payload, PayloadExt, ServerHandle, ServiceError, Value};

/// Flat state layouts served by `get_state`.
pub mod layout {
    pub const MOBILE_LEN: usize = 25;
    pub const MOBILE_TARGET_R: usize = 0;
    pub const MOBILE_TARGET_THETA: usize = 1;
    pub const MOBILE_LIN_VEL: usize = 2;
    pub const MOBILE_ANG_VEL: usize = 3;
    pub const MOBILE_SCAN: usize = 4;
    pub const MOBILE_POSE_X: usize = 20;
    pub const MOBILE_POSE_Y: usize = 21;
    pub const MOBILE_POSE_THETA: usize = 22;
    pub const MOBILE_COLLISION: usize = 23;
    pub const MOBILE_CLOCK: usize = 24;

    pub const ARM_LEN: usize = 21;
    pub const ARM_TARGET_R: usize = 0;
    pub const ARM_TARGET_POLAR: usize = 1;
    pub const ARM_TARGET_AZIMUTH: usize = 2;
    pub const ARM_JOINTS: usize = 3;
    pub const ARM_JOINT_VELS: usize = 9;
    pub const ARM_EE: usize = 15;
    pub const ARM_SELF_COLLISION: usize = 18;
    pub const ARM_GROUND_COLLISION: usize = 19;
    pub const ARM_CLOCK: usize = 20;

    pub fn len(model: crate::sim::RobotModel) -> usize {
        match model {
            crate::sim::RobotModel::Mir100 => MOBILE_LEN,
            crate::sim::RobotModel::Ur10 => ARM_LEN,
        }
    }

    pub fn clock_index(model: crate::sim::RobotModel) -> usize {
        len(model) - 1
    }
}

/// Largest distance from the arm base accepted for a target.
pub const ARM_TARGET_MAX_R: f64 = 1.3;

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Flattens a world into the per-model state layout.
pub fn state_vector(world: &WorldState) -> Vec<f64> {
    match &world.scene {
        Scene::Mobile(m) => {
            let (r, bearing) = m.pose.polar_to(m.target.x, m.target.y);
            let mut s = Vec::with_capacity(layout::MOBILE_LEN);
            s.extend_from_slice(&[r, bearing, m.linear_vel, m.angular_vel]);
            s.extend_from_slice(&m.scan);
            s.extend_from_slice(&[m.pose.x, m.pose.y, m.pose.theta]);
            s.push(flag(m.collision.base_collision));
            s.push(world.clock);
            s
        }
        Scene::Arm(a) => {
            let mut s = Vec::with_capacity(layout::ARM_LEN);
            s.extend_from_slice(&cartesian_to_spherical(a.target));
            s.extend_from_slice(&a.arm.joints);
            s.extend_from_slice(&a.arm.joint_vels);
            s.extend_from_slice(&a.ee);
            s.push(flag(a.collision.self_collision));
            s.push(flag(a.collision.ground_collision));
            s.push(world.clock);
            s
        }
    }
}

/// Scene requested by `set_state`.
///
/// Flat encodings: mobile `[robot x, y, θ, target x, y, θ, (obstacle x, y)*]`
/// with 0.5 m cubes; arm `[q0..q5, target r, polar, azimuth]`.
#[derive(Debug, Clone, PartialEq)]
pub enum DesiredState {
    Mobile {
        robot: Pose2D,
        target: Pose2D,
        obstacles: Vec<(f64, f64)>,
    },
    Arm {
        joints: [f64; N_JOINTS],
        target_spherical: [f64; 3],
    },
}

impl DesiredState {
    pub fn to_array(&self) -> Vec<f64> {
        match self {
            DesiredState::Mobile {
                robot,
                target,
                obstacles,
            } => {
                let mut v = vec![robot.x, robot.y, robot.theta, target.x, target.y, target.theta];
                for (x, y) in obstacles {
                    v.extend_from_slice(&[*x, *y]);
                }
                v
            }
            DesiredState::Arm {
                joints,
                target_spherical,
            } => {
                let mut v = joints.to_vec();
                v.extend_from_slice(target_spherical);
                v
            }
        }
    }

    pub fn from_array(model: RobotModel, a: &[f64]) -> Result<DesiredState, ServerError> {
        let invalid = |m: String| Err(ServerError::InvalidState(m));
        if a.iter().any(|v| !v.is_finite()) {
            return invalid("desired state has non-finite values".into());
        }
        match model {
            RobotModel::Mir100 => {
                if a.len() < 6 || (a.len() - 6) % 2 != 0 {
                    return invalid(format!(
                        "mobile desired state is 6 values plus obstacle pairs, got {}",
                        a.len()
                    ));
                }
                Ok(DesiredState::Mobile {
                    robot: Pose2D::new(a[0], a[1], a[2]),
                    target: Pose2D::new(a[3], a[4], a[5]),
                    obstacles: a[6..].chunks(2).map(|c| (c[0], c[1])).collect(),
                })
            }
            RobotModel::Ur10 => {
                if a.len() != N_JOINTS + 3 {
                    return invalid(format!("arm desired state is 9 values, got {}", a.len()));
                }
                let mut joints = [0.0; N_JOINTS];
                joints.copy_from_slice(&a[..N_JOINTS]);
                Ok(DesiredState::Arm {
                    joints,
                    target_spherical: [a[6], a[7], a[8]],
                })
            }
        }
    }

    /// Builds the world this desired state describes, rejecting anything
    /// outside the map, the joint limits or the arm workspace.
    pub fn to_world(&self) -> Result<WorldState, ServerError> {
        let world = match self {
            DesiredState::Mobile {
                robot,
                target,
                obstacles,
            } => WorldState::mobile(
                *robot,
                *target,
                obstacles.iter().map(|&(x, y)| BoxObstacle::cube(x, y)).collect(),
                Walls::default(),
            ),
            DesiredState::Arm {
                joints,
                target_spherical,
            } => {
                let [r, polar, _] = *target_spherical;
                if !(0.0..=ARM_TARGET_MAX_R).contains(&r) || !(0.0..=std::f64::consts::PI).contains(&polar) {
                    return Err(ServerError::InvalidState(format!(
                        "target {target_spherical:?} outside the arm workspace"
                    )));
                }
                WorldState::arm(*joints, spherical_to_cartesian(*target_spherical))
            }
        };
        world
            .validate()
            .map_err(|e| ServerError::InvalidState(e.to_string()))?;
        Ok(world)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    /// The loop sleeps so that one tick takes one actuation cycle of wall time.
    RealTime,
    /// Ticks run back to back; simulated time only advances while a command
    /// is being executed.
    Fast,
}

impl ClockMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ClockMode::RealTime => "realtime",
            ClockMode::Fast => "fast",
        }
    }
}

impl fmt::Display for ClockMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "realtime" => Ok(ClockMode::RealTime),
            "fast" => Ok(ClockMode::Fast),
            other => Err(format!("unknown clock mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ServerError {
    #[error("no state has been set since the server started")]
    NotInitialized,
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("command rejected: the previous action is still executing")]
    RejectedCommand,
    #[error("action execution interrupted")]
    ExecutionInterrupted,
    #[error("io: {0}")]
    Io(String),
}

impl ServerError {
    pub fn code(&self) -> &'static str {
        match self {
            ServerError::NotInitialized => "NotInitialized",
            ServerError::InvalidState(_) => "InvalidState",
            ServerError::InvalidAction(_) => "InvalidAction",
            ServerError::RejectedCommand => "RejectedCommand",
            ServerError::ExecutionInterrupted => "ExecutionInterrupted",
            ServerError::Io(_) => "Io",
        }
    }
}

impl From<ServerError> for ServiceError {
    fn from(e: ServerError) -> Self {
        ServiceError::new(e.code(), e.to_string())
    }
}

/// Scales a normalized action in [−1, 1]ⁿ to a robot command.
pub fn denormalize_action(model: RobotModel, action: &[f64]) -> Result<Command, ServerError> {
    let n = model.command_mode().arity();
    if action.len() != n {
        return Err(ServerError::InvalidAction(format!(
            "{model} actions have {n} values, got {}",
            action.len()
        )));
    }
    if let Some(v) = action.iter().find(|v| !(v.abs() <= 1.0)) {
        return Err(ServerError::InvalidAction(format!("value {v} outside [-1, 1]")));
    }
    let cmd = match model {
        RobotModel::Mir100 => Command::Velocity {
            linear: action[0] * MAX_LINEAR_VEL,
            angular: action[1] * MAX_ANGULAR_VEL,
        },
        RobotModel::Ur10 => {
            Command::JointPosition(std::array::from_fn(|i| action[i] * JOINT_LIMIT))
        }
    };
    Ok(cmd)
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub model: RobotModel,
    pub mode: ClockMode,
    pub timing: TimingConfig,
    /// Initial world; without one the server answers `NotInitialized` until
    /// the first `set_state`.
    pub scene: Option<WorldState>,
    /// `inject_fault {fault: "crash"}` terminates the process instead of
    /// just closing the endpoint.
    pub exit_on_crash: bool,
}

impl ServerConfig {
    pub fn new(model: RobotModel, mode: ClockMode) -> Self {
        ServerConfig {
            model,
            mode,
            timing: match model {
                RobotModel::Mir100 => TimingConfig::mir100(),
                RobotModel::Ur10 => TimingConfig::ur10(),
            },
            scene: None,
            exit_on_crash: false,
        }
    }
}

/// Clock values bracketing one executed action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionReport {
    /// Clock when the first publication of the command began.
    pub start_clock: f64,
    /// Clock after the last publication.
    pub end_clock: f64,
}

type ActionResult = Result<ActionReport, ServerError>;

struct Waiter {
    tx: mpsc::Sender<ActionResult>,
    start_clock: f64,
}

#[derive(Default)]
struct Control {
    pending_reset: Option<(WorldState, mpsc::Sender<()>)>,
    queued: VecDeque<Waiter>,
    active: Option<Waiter>,
}

#[derive(Default)]
struct Faults {
    freeze: AtomicBool,
    hang: AtomicBool,
    corrupt: AtomicBool,
}

struct Core {
    model: RobotModel,
    mode: ClockMode,
    timing: TimingConfig,
    handler: CommandHandler,
    snapshot: RwLock<Option<Arc<Vec<f64>>>>,
    ctl: Mutex<Control>,
    wake: Condvar,
    heartbeat: AtomicU64,
    faults: Faults,
    stop: AtomicBool,
    exit_on_crash: bool,
    endpoint: Mutex<Option<ServerHandle>>,
}

const IDLE_POLL: Duration = Duration::from_millis(10);

impl Core {
    fn publish(&self, world: &WorldState) {
        let mut state = state_vector(world);
        if self.faults.corrupt.load(Ordering::SeqCst) {
            state[0] = f64::NAN;
        }
        *self.snapshot.write().unwrap() = Some(Arc::new(state));
    }

    fn snapshot(&self) -> Result<Arc<Vec<f64>>, ServerError> {
        self.snapshot
            .read()
            .unwrap()
            .clone()
            .ok_or(ServerError::NotInitialized)
    }

    fn set_state(&self, world: WorldState) -> Result<(), ServerError> {
        let (tx, rx) = mpsc::channel();
        {
            let mut ctl = self.ctl.lock().unwrap();
            ctl.pending_reset = Some((world, tx));
        }
        self.wake.notify_all();
        rx.recv().map_err(|_| ServerError::ExecutionInterrupted)
    }

    fn send_action(&self, action: &[f64]) -> ActionResult {
        let cmd = denormalize_action(self.model, action)?;
        let rx = {
            let mut ctl = self.ctl.lock().unwrap();
            if self.snapshot.read().unwrap().is_none() {
                return Err(ServerError::NotInitialized);
            }
            // The slot empties on the last publication, but the action only
            // ends when that tick has run.
            if ctl.active.is_some() || !ctl.queued.is_empty() {
                return Err(ServerError::RejectedCommand);
            }
            let accepted = self
                .handler
                .offer(cmd)
                .map_err(|e| ServerError::InvalidAction(e.to_string()))?;
            if !accepted {
                return Err(ServerError::RejectedCommand);
            }
            let (tx, rx) = mpsc::channel();
            ctl.queued.push_back(Waiter {
                tx,
                start_clock: 0.0,
            });
            rx
        };
        self.wake.notify_all();
        rx.recv().unwrap_or(Err(ServerError::ExecutionInterrupted))
    }

    /// Installs a pending `set_state`, aborting any in-flight action.
    fn take_reset(&self) -> Option<WorldState> {
        let mut ctl = self.ctl.lock().unwrap();
        let (world, ack) = ctl.pending_reset.take()?;
        self.handler.clear();
        if let Some(w) = ctl.active.take() {
            let _ = w.tx.send(Err(ServerError::ExecutionInterrupted));
        }
        for w in ctl.queued.drain(..) {
            let _ = w.tx.send(Err(ServerError::ExecutionInterrupted));
        }
        self.publish(&world);
        let _ = ack.send(());
        Some(world)
    }

    fn idle_wait(&self, timeout: Duration) {
        let ctl = self.ctl.lock().unwrap();
        if ctl.pending_reset.is_some() || self.handler.is_busy() {
            return;
        }
        let _ = self.wake.wait_timeout(ctl, timeout).unwrap();
    }

    fn run_loop(&self, initial: Option<WorldState>) {
        let dt = self.timing.actuation_cycle();
        let period = self.timing.actuation_duration();
        let mut world = initial;
        if let Some(w) = &world {
            self.publish(w);
        }
        let mut next_due = Instant::now() + period;
        while !self.stop.load(Ordering::SeqCst) {
            if self.faults.freeze.load(Ordering::SeqCst) {
                thread::sleep(IDLE_POLL);
                continue;
            }
            self.heartbeat.fetch_add(1, Ordering::SeqCst);
            if let Some(w) = self.take_reset() {
                world = Some(w);
                next_due = Instant::now() + period;
                continue;
            }
            let Some(current) = world.as_ref() else {
                self.idle_wait(IDLE_POLL);
                continue;
            };

            let busy = self.handler.is_busy();
            let tick_start = match (busy, self.mode) {
                (false, ClockMode::Fast) => {
                    self.idle_wait(IDLE_POLL);
                    continue;
                }
                (false, ClockMode::RealTime) => {
                    let now = Instant::now();
                    if now < next_due {
                        self.idle_wait((next_due - now).min(IDLE_POLL));
                        if self.handler.is_busy() {
                            // Start the action right away instead of on the idle grid.
                            next_due = Instant::now();
                        }
                        continue;
                    }
                    next_due
                }
                (true, _) => next_due.min(Instant::now()),
            };

            let emission = {
                let mut ctl = self.ctl.lock().unwrap();
                let e = self.handler.tick();
                if let Emission::Agent { first: true, .. } = e {
                    ctl.active = ctl.queued.pop_front();
                    if let Some(a) = ctl.active.as_mut() {
                        a.start_clock = current.clock;
                    }
                }
                e
            };
            let (cmd, paced) = match emission {
                Emission::Agent { cmd, .. } => (cmd, self.mode == ClockMode::RealTime),
                Emission::Default => (current.default_command(), false),
            };
            // A command offered while an idle tick was starting still gets a
            // full period of wall time.
            let tick_start = if paced && !busy { Instant::now() } else { tick_start };
            let next = match current.tick(&cmd, dt) {
                Ok(w) => w,
                Err(e) => {
                    log::error!("tick failed: {e}");
                    continue;
                }
            };

            if paced {
                let end = tick_start + period;
                let now = Instant::now();
                if end > now {
                    thread::sleep(end - now);
                }
            }
            self.publish(&next);
            next_due = tick_start + period;
            if next_due + period < Instant::now() {
                next_due = Instant::now();
            }
            if let Emission::Agent { last: true, .. } = emission {
                if let Some(a) = self.ctl.lock().unwrap().active.take() {
                    let _ = a.tx.send(Ok(ActionReport {
                        start_clock: a.start_clock,
                        end_clock: next.clock,
                    }));
                }
            }
            world = Some(next);
        }
        let mut ctl = self.ctl.lock().unwrap();
        ctl.active = None;
        ctl.queued.clear();
        ctl.pending_reset = None;
    }

    fn inject_fault(self: &Arc<Self>, fault: &str) -> Result<(), ServiceError> {
        match fault {
            "freeze" => self.faults.freeze.store(true, Ordering::SeqCst),
            "hang" => self.faults.hang.store(true, Ordering::SeqCst),
            "corrupt" => {
                self.faults.corrupt.store(true, Ordering::SeqCst);
                let mut snap = self.snapshot.write().unwrap();
                if let Some(s) = snap.as_mut() {
                    let mut v = (**s).clone();
                    v[0] = f64::NAN;
                    *s = Arc::new(v);
                }
            }
            "crash" => {
                let core = Arc::clone(self);
                thread::spawn(move || {
                    thread::sleep(Duration::from_millis(20));
                    if core.exit_on_crash {
                        std::process::exit(70);
                    }
                    core.stop.store(true, Ordering::SeqCst);
                    core.wake.notify_all();
                    if let Some(mut h) = core.endpoint.lock().unwrap().take() {
                        h.shutdown();
                    }
                });
            }
            "clear" => {
                self.faults.freeze.store(false, Ordering::SeqCst);
                self.faults.hang.store(false, Ordering::SeqCst);
                self.faults.corrupt.store(false, Ordering::SeqCst);
            }
            other => {
                return Err(ServiceError::new("BadRequest", format!("unknown fault {other:?}")))
            }
        }
        log::warn!("fault injected: {fault}");
        Ok(())
    }
}

struct RobotService(Arc<Core>);

impl Handler for RobotService {
    fn services(&self) -> &[&'static str] {
        &["get_state", "set_state", "send_action", "health", "inject_fault"]
    }

    fn handle(&self, service: &str, p: &Payload) -> Result<Payload, ServiceError> {
        let core = &self.0;
        while core.faults.hang.load(Ordering::SeqCst) && !core.stop.load(Ordering::SeqCst) {
            thread::sleep(Duration::from_millis(50));
        }
        match service {
            "get_state" => {
                let state = core.snapshot()?;
                Ok(payload([
                    ("state", Value::Array(state.to_vec())),
                    ("model", Value::from(core.model.as_str())),
                ]))
            }
            "set_state" => {
                let desired = DesiredState::from_array(core.model, p.req_array("desired")?)?;
                core.set_state(desired.to_world()?)?;
                Ok(payload([("ok", true)]))
            }
            "send_action" => {
                let report = core.send_action(p.req_array("action")?)?;
                Ok(payload([
                    ("success", Value::Bool(true)),
                    ("start_clock", Value::Number(report.start_clock)),
                    ("end_clock", Value::Number(report.end_clock)),
                ]))
            }
            "health" => {
                let snap = core.snapshot.read().unwrap().clone();
                let clock = snap
                    .as_ref()
                    .map(|s| s[layout::clock_index(core.model)])
                    .unwrap_or(0.0);
                Ok(payload([
                    ("ok", Value::Bool(true)),
                    ("clock", Value::Number(clock)),
                    ("heartbeat", Value::Number(core.heartbeat.load(Ordering::SeqCst) as f64)),
                    ("initialized", Value::Bool(snap.is_some())),
                    ("model", Value::from(core.model.as_str())),
                    ("mode", Value::from(core.mode.as_str())),
                    ("actuation_cycle", Value::Number(core.timing.actuation_cycle())),
                    ("action_cycle", Value::Number(core.timing.action_cycle())),
                ]))
            }
            "inject_fault" => {
                core.inject_fault(p.req_str("fault")?)?;
                Ok(payload([("ok", true)]))
            }
            _ => unreachable!("dispatcher filters unknown services"),
        }
    }
}

/// A running robot server: RPC endpoint plus simulation loop.
pub struct RobotServer {
    core: Arc<Core>,
    addr: SocketAddr,
    sim_loop: Option<thread::JoinHandle<()>>,
}

impl RobotServer {
    /// Binds `address` (port 0 picks a free port) and starts serving.
    pub fn bind(cfg: ServerConfig, address: &str) -> Result<RobotServer, ServerError> {
        let listener = TcpListener::bind(address).map_err(|e| ServerError::Io(format!("{address}: {e}")))?;
        RobotServer::start(cfg, listener)
    }

    pub fn start(cfg: ServerConfig, listener: TcpListener) -> Result<RobotServer, ServerError> {
        if let Some(w) = &cfg.scene {
            if w.model() != cfg.model {
                return Err(ServerError::InvalidState(format!(
                    "scene is for {}, server runs {}",
                    w.model(),
                    cfg.model
                )));
            }
        }
        let core = Arc::new(Core {
            model: cfg.model,
            mode: cfg.mode,
            timing: cfg.timing,
            handler: CommandHandler::new(cfg.timing.repeats()),
            snapshot: RwLock::new(None),
            ctl: Mutex::new(Control::default()),
            wake: Condvar::new(),
            heartbeat: AtomicU64::new(0),
            faults: Faults::default(),
            stop: AtomicBool::new(false),
            exit_on_crash: cfg.exit_on_crash,
            endpoint: Mutex::new(None),
        });
        if let Some(w) = &cfg.scene {
            core.publish(w);
        }
        let loop_core = Arc::clone(&core);
        let scene = cfg.scene.clone();
        let sim_loop = thread::Builder::new()
            .name("sim-loop".into())
            .spawn(move || loop_core.run_loop(scene))
            .map_err(|e| ServerError::Io(e.to_string()))?;
        let handle = wire::serve(listener, Arc::new(RobotService(Arc::clone(&core))))
            .map_err(|e| ServerError::Io(e.to_string()))?;
        let addr = handle.local_addr();
        *core.endpoint.lock().unwrap() = Some(handle);
        Ok(RobotServer {
            core,
            addr,
            sim_loop: Some(sim_loop),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn model(&self) -> RobotModel {
        self.core.model
    }

    /// Blocks until the server stops (for the standalone binary).
    pub fn wait(mut self) {
        if let Some(h) = self.sim_loop.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(&mut self) {
        self.core.stop.store(true, Ordering::SeqCst);
        self.core.wake.notify_all();
        if let Some(mut h) = self.core.endpoint.lock().unwrap().take() {
            h.shutdown();
        }
        if let Some(h) = self.sim_loop.take() {
            let _ = h.join();
        }
    }
}

impl Drop for RobotServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}
