//! Server manager: spawns robot servers as child processes ("clusters"),
//! answers spawn/kill/check/restart requests and runs one watchdog per
//! cluster that restarts it when it stops behaving.
//!
//! Restart triggers, checked in this order on every watchdog tick:
//! a pending manual request, a connection error, an exceeded call deadline,
//! a heartbeat that did not move between two consecutive probes, and a state
//! vector outside the model's bounds.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::robot_server::{layout, ClockMode, ARM_TARGET_MAX_R};
use crate::sim::arm::{JOINT_LIMIT, MAX_JOINT_VEL};
use crate::sim::drive::{MAX_ANGULAR_VEL, MAX_LINEAR_VEL};
use crate::sim::raycast::MAX_RANGE;
use crate::sim::{RobotModel, Walls, WorldState};
use crate::wire::{
    self, payload, Client, Handler, Payload, PayloadExt, ServerHandle, ServiceError, Value, WireError,
};

/// Environment variable holding the default manager address for clients.
pub const MANAGER_ADDR_ENV: &str = "GYMLINK_MANAGER_ADDR";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ManagerError {
    #[error("spawn failed: {0}")]
    SpawnFailed(String),
    #[error("unknown cluster {0:?}")]
    UnknownHandle(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("io: {0}")]
    Io(String),
}

impl ManagerError {
    pub fn code(&self) -> &'static str {
        match self {
            ManagerError::SpawnFailed(_) => "SpawnFailed",
            ManagerError::UnknownHandle(_) => "UnknownHandle",
            ManagerError::BadRequest(_) => "BadRequest",
            ManagerError::Io(_) => "Io",
        }
    }
}

impl From<ManagerError> for ServiceError {
    fn from(e: ManagerError) -> Self {
        ServiceError::new(e.code(), e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterStatus {
    Starting,
    Healthy,
    Restarting,
    Dead,
}

impl ClusterStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ClusterStatus::Starting => "starting",
            ClusterStatus::Healthy => "healthy",
            ClusterStatus::Restarting => "restarting",
            ClusterStatus::Dead => "dead",
        }
    }
}

impl fmt::Display for ClusterStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClusterStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "starting" => Ok(ClusterStatus::Starting),
            "healthy" => Ok(ClusterStatus::Healthy),
            "restarting" => Ok(ClusterStatus::Restarting),
            "dead" => Ok(ClusterStatus::Dead),
            other => Err(format!("unknown cluster status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterHandle {
    pub id: String,
    pub address: String,
    pub model: RobotModel,
    pub mode: ClockMode,
    pub status: ClusterStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartReason {
    Manual,
    ConnectionError,
    DeadlineExceeded,
    FrozenSimulation,
    OutOfBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WatchdogAction {
    None,
    Restart(RestartReason),
    GiveUp(RestartReason),
}

/// Closed per-field ranges of a robot state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl StateBounds {
    /// Ranges implied by the simulator limits for `model`.
    pub fn for_model(model: RobotModel) -> StateBounds {
        use std::f64::consts::PI;
        const EPS: f64 = 1e-9;
        let n = layout::len(model);
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        let mut set = |i: usize, l: f64, h: f64| {
            lo[i] = l - EPS;
            hi[i] = h + EPS;
        };
        match model {
            RobotModel::Mir100 => {
                let walls = Walls::default();
                set(layout::MOBILE_TARGET_R, 0.0, walls.diagonal());
                set(layout::MOBILE_TARGET_THETA, -PI, PI);
                set(layout::MOBILE_LIN_VEL, -MAX_LINEAR_VEL, MAX_LINEAR_VEL);
                set(layout::MOBILE_ANG_VEL, -MAX_ANGULAR_VEL, MAX_ANGULAR_VEL);
                for k in 0..16 {
                    set(layout::MOBILE_SCAN + k, 0.0, MAX_RANGE);
                }
                set(layout::MOBILE_POSE_X, -walls.half_x(), walls.half_x());
                set(layout::MOBILE_POSE_Y, -walls.half_y(), walls.half_y());
                set(layout::MOBILE_POSE_THETA, -PI, PI);
                set(layout::MOBILE_COLLISION, 0.0, 1.0);
                set(layout::MOBILE_CLOCK, 0.0, f64::MAX);
            }
            RobotModel::Ur10 => {
                set(layout::ARM_TARGET_R, 0.0, ARM_TARGET_MAX_R);
                set(layout::ARM_TARGET_POLAR, 0.0, PI);
                set(layout::ARM_TARGET_AZIMUTH, -PI, PI);
                for j in 0..6 {
                    set(layout::ARM_JOINTS + j, -JOINT_LIMIT, JOINT_LIMIT);
                    set(layout::ARM_JOINT_VELS + j, -MAX_JOINT_VEL, MAX_JOINT_VEL);
                }
                // The end effector stays within the fully stretched arm.
                for k in 0..3 {
                    set(layout::ARM_EE + k, -1.5, 1.5);
                }
                set(layout::ARM_EE + 2, -1.4, 1.6);
                set(layout::ARM_SELF_COLLISION, 0.0, 1.0);
                set(layout::ARM_GROUND_COLLISION, 0.0, 1.0);
                set(layout::ARM_CLOCK, 0.0, f64::MAX);
            }
        }
        StateBounds { lo, hi }
    }

    /// Index of the first field outside its range (NaN included).
    pub fn violation(&self, state: &[f64]) -> Option<usize> {
        if state.len() != self.lo.len() {
            return Some(state.len().min(self.lo.len()));
        }
        state
            .iter()
            .enumerate()
            .position(|(i, v)| !(*v >= self.lo[i] && *v <= self.hi[i]))
    }
}

#[derive(Debug, Clone)]
pub struct WatchdogPolicy {
    pub health_period: Duration,
    pub call_deadline: Duration,
    pub max_restarts: u32,
}

impl Default for WatchdogPolicy {
    fn default() -> Self {
        WatchdogPolicy {
            health_period: Duration::from_secs(1),
            call_deadline: Duration::from_secs(1),
            max_restarts: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManagerConfig {
    /// Path of the `robot-server` executable.
    pub server_binary: PathBuf,
    pub host: String,
    pub max_clusters: usize,
    pub spawn_grace: Duration,
    pub policy: WatchdogPolicy,
    /// Run a background watchdog per cluster. Disabled, ticks only happen
    /// through [`ServerManager::watchdog_tick`].
    pub watchdog: bool,
}

impl ManagerConfig {
    pub fn new(server_binary: impl Into<PathBuf>) -> Self {
        ManagerConfig {
            server_binary: server_binary.into(),
            host: "127.0.0.1".into(),
            max_clusters: 32,
            spawn_grace: Duration::from_secs(10),
            policy: WatchdogPolicy::default(),
            watchdog: true,
        }
    }

    /// Looks for `robot-server` next to the running executable (and one
    /// directory up, which covers test binaries under `deps/`).
    pub fn default_server_binary() -> PathBuf {
        let name = format!("robot-server{}", std::env::consts::EXE_SUFFIX);
        if let Ok(exe) = std::env::current_exe() {
            for dir in exe.ancestors().skip(1).take(2) {
                let candidate = dir.join(&name);
                if candidate.is_file() {
                    return candidate;
                }
            }
        }
        PathBuf::from(name)
    }
}

struct Info {
    address: String,
    status: ClusterStatus,
}

struct Work {
    child: Option<Child>,
    last_heartbeat: Option<f64>,
    consecutive_restarts: u32,
}

struct Cluster {
    id: String,
    model: RobotModel,
    mode: ClockMode,
    scene_file: Option<PathBuf>,
    info: Mutex<Info>,
    work: Mutex<Work>,
    killed: AtomicBool,
    manual: AtomicBool,
    restarts: AtomicU64,
    wake: (Mutex<()>, Condvar),
}

impl Cluster {
    fn handle(&self) -> ClusterHandle {
        let info = self.info.lock().unwrap();
        ClusterHandle {
            id: self.id.clone(),
            address: info.address.clone(),
            model: self.model,
            mode: self.mode,
            status: info.status,
        }
    }

    fn set_status(&self, status: ClusterStatus) {
        self.info.lock().unwrap().status = status;
    }

    fn notify(&self) {
        let _g = self.wake.0.lock().unwrap();
        self.wake.1.notify_all();
    }
}

fn stop_child(child: &mut Option<Child>) {
    if let Some(mut c) = child.take() {
        let _ = c.kill();
        let _ = c.wait();
    }
}

struct Inner {
    cfg: ManagerConfig,
    clusters: Mutex<BTreeMap<String, Arc<Cluster>>>,
    next_id: AtomicU64,
    spawned: AtomicU64,
    stop: AtomicBool,
    watchdogs: Mutex<Vec<thread::JoinHandle<()>>>,
}

impl Inner {
    fn cluster(&self, id: &str) -> Result<Arc<Cluster>, ManagerError> {
        self.clusters
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ManagerError::UnknownHandle(id.to_owned()))
    }

    /// Starts one robot-server process and waits for its first health reply.
    fn launch(
        &self,
        model: RobotModel,
        mode: ClockMode,
        scene: Option<&PathBuf>,
        port: u16,
    ) -> Result<(Child, String), ManagerError> {
        let mut cmd = Command::new(&self.cfg.server_binary);
        cmd.arg("--model")
            .arg(model.as_str())
            .arg("--mode")
            .arg(mode.as_str())
            .arg("--host")
            .arg(&self.cfg.host)
            .arg("--port")
            .arg(port.to_string())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        if let Some(path) = scene {
            cmd.arg("--scene").arg(path);
        }
        let mut child = cmd.spawn().map_err(|e| {
            ManagerError::SpawnFailed(format!("{}: {e}", self.cfg.server_binary.display()))
        })?;
        self.spawned.fetch_add(1, Ordering::SeqCst);
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut lines = BufReader::new(stdout).lines();
            while let Some(Ok(line)) = lines.next() {
                if let Some(addr) = line.strip_prefix("robot-server listening on ") {
                    let _ = tx.send(addr.trim().to_owned());
                }
            }
        });
        let deadline = Instant::now() + self.cfg.spawn_grace;
        let fail = |child: &mut Child, why: String| {
            let _ = child.kill();
            let _ = child.wait();
            Err(ManagerError::SpawnFailed(why))
        };
        let address = match rx.recv_timeout(self.cfg.spawn_grace) {
            Ok(a) => a,
            Err(_) => {
                let why = match child.try_wait() {
                    Ok(Some(status)) => format!("robot-server exited with {status}"),
                    _ => "robot-server did not report its address".to_owned(),
                };
                return fail(&mut child, why);
            }
        };
        loop {
            let reply = wire::call(&address, "health", Payload::new(), self.cfg.policy.call_deadline);
            if reply.is_ok() {
                return Ok((child, address));
            }
            if let Ok(Some(status)) = child.try_wait() {
                return fail(&mut child, format!("robot-server exited with {status}"));
            }
            if Instant::now() >= deadline {
                return fail(&mut child, format!("no health reply from {address}"));
            }
            thread::sleep(Duration::from_millis(20));
        }
    }

    fn probe(&self, c: &Cluster, work: &mut Work) -> Option<RestartReason> {
        let deadline = self.cfg.policy.call_deadline;
        let classify = |e: WireError| match e {
            WireError::DeadlineExceeded(_) => RestartReason::DeadlineExceeded,
            _ => RestartReason::ConnectionError,
        };
        if work.child.is_none() {
            return Some(RestartReason::ConnectionError);
        }
        let address = c.info.lock().unwrap().address.clone();
        let client = match Client::connect(&address, deadline) {
            Ok(cl) => cl,
            Err(e) => return Some(classify(e)),
        };
        let health = match client.call("health", Payload::new(), deadline) {
            Ok(h) => h,
            Err(e) => return Some(classify(e)),
        };
        let heartbeat = health.get("heartbeat").and_then(Value::as_f64);
        if heartbeat.is_some() && heartbeat == work.last_heartbeat {
            return Some(RestartReason::FrozenSimulation);
        }
        work.last_heartbeat = heartbeat;
        match client.call("get_state", Payload::new(), deadline) {
            Ok(p) => {
                let state = p.get("state").and_then(Value::as_array).unwrap_or(&[]);
                if let Some(i) = StateBounds::for_model(c.model).violation(state) {
                    log::warn!("cluster {}: state field {i} out of bounds", c.id);
                    return Some(RestartReason::OutOfBounds);
                }
            }
            Err(e) if e.remote_code() == Some("NotInitialized") => {}
            Err(e) => return Some(classify(e)),
        }
        None
    }

    /// Kills the current process and starts a new one with the same model,
    /// mode and scene, on the same port when it is free.
    fn restart(&self, c: &Cluster, work: &mut Work) {
        c.set_status(ClusterStatus::Restarting);
        stop_child(&mut work.child);
        work.last_heartbeat = None;
        work.consecutive_restarts += 1;
        c.restarts.fetch_add(1, Ordering::SeqCst);
        let old = c.info.lock().unwrap().address.clone();
        let port = old
            .rsplit(':')
            .next()
            .and_then(|p| p.parse::<u16>().ok())
            .unwrap_or(0);
        let launched = self
            .launch(c.model, c.mode, c.scene_file.as_ref(), port)
            .or_else(|_| self.launch(c.model, c.mode, c.scene_file.as_ref(), 0));
        match launched {
            Ok((child, address)) => {
                work.child = Some(child);
                if c.killed.load(Ordering::SeqCst) {
                    stop_child(&mut work.child);
                    c.set_status(ClusterStatus::Dead);
                    return;
                }
                let mut info = c.info.lock().unwrap();
                info.address = address;
                info.status = ClusterStatus::Healthy;
            }
            Err(e) => log::error!("cluster {}: respawn failed: {e}", c.id),
        }
    }

    fn watchdog_tick(&self, c: &Cluster) -> WatchdogAction {
        let mut work = c.work.lock().unwrap();
        if c.killed.load(Ordering::SeqCst) || c.info.lock().unwrap().status == ClusterStatus::Dead {
            return WatchdogAction::None;
        }
        let reason = if c.manual.swap(false, Ordering::SeqCst) {
            Some(RestartReason::Manual)
        } else {
            self.probe(c, &mut work)
        };
        let Some(reason) = reason else {
            work.consecutive_restarts = 0;
            return WatchdogAction::None;
        };
        if work.consecutive_restarts >= self.cfg.policy.max_restarts {
            log::error!("cluster {}: giving up after {reason:?}", c.id);
            stop_child(&mut work.child);
            c.set_status(ClusterStatus::Dead);
            return WatchdogAction::GiveUp(reason);
        }
        log::warn!("cluster {}: restarting ({reason:?})", c.id);
        self.restart(c, &mut work);
        WatchdogAction::Restart(reason)
    }

    fn watchdog_loop(self: Arc<Self>, c: Arc<Cluster>) {
        let period = self.cfg.policy.health_period;
        loop {
            {
                let g = c.wake.0.lock().unwrap();
                let _ = c
                    .wake
                    .1
                    .wait_timeout_while(g, period, |_| {
                        !self.stop.load(Ordering::SeqCst)
                            && !c.killed.load(Ordering::SeqCst)
                            && !c.manual.load(Ordering::SeqCst)
                    })
                    .unwrap();
            }
            if self.stop.load(Ordering::SeqCst) || c.killed.load(Ordering::SeqCst) {
                return;
            }
            if let WatchdogAction::GiveUp(_) = self.watchdog_tick(&c) {
                return;
            }
        }
    }

    fn spawn_cluster(
        self: &Arc<Self>,
        model: RobotModel,
        mode: ClockMode,
        scene: Option<WorldState>,
    ) -> Result<ClusterHandle, ManagerError> {
        if let Some(w) = &scene {
            if w.model() != model {
                return Err(ManagerError::BadRequest(format!(
                    "scene is for {}, cluster runs {model}",
                    w.model()
                )));
            }
        }
        let id = format!("c{}", self.next_id.fetch_add(1, Ordering::SeqCst) + 1);
        let placeholder = Arc::new(Cluster {
            id: id.clone(),
            model,
            mode,
            scene_file: None,
            info: Mutex::new(Info {
                address: String::new(),
                status: ClusterStatus::Starting,
            }),
            work: Mutex::new(Work {
                child: None,
                last_heartbeat: None,
                consecutive_restarts: 0,
            }),
            killed: AtomicBool::new(false),
            manual: AtomicBool::new(false),
            restarts: AtomicU64::new(0),
            wake: (Mutex::new(()), Condvar::new()),
        });
        {
            let mut map = self.clusters.lock().unwrap();
            let live = map
                .values()
                .filter(|c| c.info.lock().unwrap().status != ClusterStatus::Dead)
                .count();
            if live >= self.cfg.max_clusters {
                return Err(ManagerError::SpawnFailed(format!(
                    "capacity of {} clusters reached",
                    self.cfg.max_clusters
                )));
            }
            // Reserve the slot while the process starts.
            map.insert(id.clone(), Arc::clone(&placeholder));
        }
        let result = self.start_cluster(placeholder, scene);
        if result.is_err() {
            self.clusters.lock().unwrap().remove(&id);
        }
        result
    }

    fn start_cluster(
        self: &Arc<Self>,
        reserved: Arc<Cluster>,
        scene: Option<WorldState>,
    ) -> Result<ClusterHandle, ManagerError> {
        let scene_file = match &scene {
            Some(w) => {
                let path = std::env::temp_dir().join(format!(
                    "gymlink-scene-{}-{}.txt",
                    std::process::id(),
                    reserved.id
                ));
                std::fs::write(&path, w.to_scene_text()).map_err(|e| ManagerError::Io(e.to_string()))?;
                Some(path)
            }
            None => None,
        };
        let (child, address) = self.launch(reserved.model, reserved.mode, scene_file.as_ref(), 0)?;
        let cluster = Arc::new(Cluster {
            id: reserved.id.clone(),
            model: reserved.model,
            mode: reserved.mode,
            scene_file,
            info: Mutex::new(Info {
                address,
                status: ClusterStatus::Healthy,
            }),
            work: Mutex::new(Work {
                child: Some(child),
                last_heartbeat: None,
                consecutive_restarts: 0,
            }),
            killed: AtomicBool::new(false),
            manual: AtomicBool::new(false),
            restarts: AtomicU64::new(0),
            wake: (Mutex::new(()), Condvar::new()),
        });
        let handle = cluster.handle();
        {
            let mut map = self.clusters.lock().unwrap();
            if self.stop.load(Ordering::SeqCst) || reserved.killed.load(Ordering::SeqCst) {
                drop(map);
                stop_child(&mut cluster.work.lock().unwrap().child);
                return Err(ManagerError::SpawnFailed("manager shutting down".into()));
            }
            map.insert(cluster.id.clone(), Arc::clone(&cluster));
        }
        if self.cfg.watchdog {
            let me = Arc::clone(self);
            let c = Arc::clone(&cluster);
            let t = thread::Builder::new()
                .name(format!("watchdog-{}", cluster.id))
                .spawn(move || me.watchdog_loop(c))
                .map_err(|e| ManagerError::Io(e.to_string()))?;
            self.watchdogs.lock().unwrap().push(t);
        }
        log::info!("cluster {} ({}) at {}", handle.id, handle.model, handle.address);
        Ok(handle)
    }

    fn kill_cluster(&self, id: &str) -> Result<(), ManagerError> {
        let c = self.cluster(id)?;
        if c.killed.swap(true, Ordering::SeqCst) {
            return Err(ManagerError::UnknownHandle(id.to_owned()));
        }
        c.notify();
        let mut work = c.work.lock().unwrap();
        stop_child(&mut work.child);
        c.set_status(ClusterStatus::Dead);
        if let Some(p) = &c.scene_file {
            let _ = std::fs::remove_file(p);
        }
        Ok(())
    }

    fn shutdown(&self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        let clusters: Vec<_> = self.clusters.lock().unwrap().values().cloned().collect();
        for c in &clusters {
            c.notify();
        }
        for t in self.watchdogs.lock().unwrap().drain(..) {
            let _ = t.join();
        }
        for c in clusters {
            let _ = self.kill_cluster(&c.id);
        }
    }
}

/// Owns every cluster it spawned; dropping it kills them all.
pub struct ServerManager {
    inner: Arc<Inner>,
    endpoint: Option<ServerHandle>,
}

impl ServerManager {
    pub fn new(cfg: ManagerConfig) -> ServerManager {
        ServerManager {
            inner: Arc::new(Inner {
                cfg,
                clusters: Mutex::new(BTreeMap::new()),
                next_id: AtomicU64::new(0),
                spawned: AtomicU64::new(0),
                stop: AtomicBool::new(false),
                watchdogs: Mutex::new(Vec::new()),
            }),
            endpoint: None,
        }
    }

    /// Starts answering the manager services on `address`.
    pub fn serve(&mut self, address: &str) -> Result<SocketAddr, ManagerError> {
        let listener =
            std::net::TcpListener::bind(address).map_err(|e| ManagerError::Io(format!("{address}: {e}")))?;
        let handle = wire::serve(listener, Arc::new(ManagerService(Arc::clone(&self.inner))))
            .map_err(|e| ManagerError::Io(e.to_string()))?;
        let addr = handle.local_addr();
        self.endpoint = Some(handle);
        Ok(addr)
    }

    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.endpoint.as_ref().map(ServerHandle::local_addr)
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.inner.cfg
    }

    pub fn spawn_cluster(
        &self,
        model: RobotModel,
        mode: ClockMode,
        scene: Option<WorldState>,
    ) -> Result<ClusterHandle, ManagerError> {
        self.inner.spawn_cluster(model, mode, scene)
    }

    pub fn kill_cluster(&self, id: &str) -> Result<(), ManagerError> {
        self.inner.kill_cluster(id)
    }

    pub fn check_cluster(&self, id: &str) -> Result<ClusterStatus, ManagerError> {
        Ok(self.inner.cluster(id)?.info.lock().unwrap().status)
    }

    pub fn cluster(&self, id: &str) -> Result<ClusterHandle, ManagerError> {
        Ok(self.inner.cluster(id)?.handle())
    }

    /// Queues a manual restart; the cluster's watchdog performs it.
    pub fn request_restart(&self, id: &str) -> Result<(), ManagerError> {
        let c = self.inner.cluster(id)?;
        if c.killed.load(Ordering::SeqCst) {
            return Err(ManagerError::UnknownHandle(id.to_owned()));
        }
        c.manual.store(true, Ordering::SeqCst);
        c.notify();
        Ok(())
    }

    pub fn watchdog_tick(&self, id: &str) -> Result<WatchdogAction, ManagerError> {
        let c = self.inner.cluster(id)?;
        Ok(self.inner.watchdog_tick(&c))
    }

    /// Restarts performed for this cluster so far.
    pub fn restart_count(&self, id: &str) -> Result<u64, ManagerError> {
        Ok(self.inner.cluster(id)?.restarts.load(Ordering::SeqCst))
    }

    /// Robot-server processes launched over the manager's lifetime.
    pub fn spawn_count(&self) -> u64 {
        self.inner.spawned.load(Ordering::SeqCst)
    }

    pub fn clusters(&self) -> Vec<ClusterHandle> {
        let all: Vec<_> = self.inner.clusters.lock().unwrap().values().cloned().collect();
        all.iter().map(|c| c.handle()).collect()
    }

    pub fn shutdown(&mut self) {
        if let Some(mut h) = self.endpoint.take() {
            h.shutdown();
        }
        self.inner.shutdown();
    }
}

impl Drop for ServerManager {
    fn drop(&mut self) {
        self.shutdown();
    }
}

struct ManagerService(Arc<Inner>);

impl Handler for ManagerService {
    fn services(&self) -> &[&'static str] {
        &["spawn", "kill", "check", "restart_cluster"]
    }

    fn handle(&self, service: &str, p: &Payload) -> Result<Payload, ServiceError> {
        let inner = &self.0;
        let bad = |e: String| ServiceError::from(ManagerError::BadRequest(e));
        match service {
            "spawn" => {
                let model: RobotModel = p.req_str("model")?.parse().map_err(|e| bad(format!("{e}")))?;
                let mode: ClockMode = match p.opt_str("mode") {
                    Some(m) => m.parse().map_err(bad)?,
                    None => ClockMode::RealTime,
                };
                let scene = match p.opt_str("scene") {
                    Some(text) => Some(WorldState::from_scene_text(text).map_err(|e| bad(e.to_string()))?),
                    None => None,
                };
                let h = inner.spawn_cluster(model, mode, scene)?;
                Ok(payload([("id", h.id), ("address", h.address)]))
            }
            "kill" => {
                inner.kill_cluster(p.req_str("id")?)?;
                Ok(payload([("ok", true)]))
            }
            "check" => {
                let c = inner.cluster(p.req_str("id")?)?;
                let h = c.handle();
                Ok(payload([
                    ("status", Value::from(h.status.as_str())),
                    ("address", Value::from(h.address)),
                    ("restarts", Value::Number(c.restarts.load(Ordering::SeqCst) as f64)),
                ]))
            }
            "restart_cluster" => {
                let id = p.req_str("id")?;
                let c = inner.cluster(id)?;
                if c.killed.load(Ordering::SeqCst) {
                    return Err(ManagerError::UnknownHandle(id.to_owned()).into());
                }
                c.manual.store(true, Ordering::SeqCst);
                c.notify();
                if !inner.cfg.watchdog {
                    inner.watchdog_tick(&c);
                }
                Ok(payload([("ok", true)]))
            }
            _ => unreachable!("dispatcher filters unknown services"),
        }
    }
}

/// Client side of the manager services.
pub struct ManagerClient {
    client: Client,
    deadline: Duration,
}

impl ManagerClient {
    pub fn connect(address: &str) -> Result<ManagerClient, WireError> {
        Ok(ManagerClient {
            client: Client::connect(address, wire::DEFAULT_DEADLINE)?,
            deadline: wire::DEFAULT_DEADLINE,
        })
    }

    /// Address from `GYMLINK_MANAGER_ADDR`, if set.
    pub fn default_address() -> Option<String> {
        std::env::var(MANAGER_ADDR_ENV).ok().filter(|s| !s.is_empty())
    }

    /// Spawns a cluster and returns `(id, address)`. Spawning waits for the
    /// child's first health reply, so the deadline covers the spawn grace.
    pub fn spawn(
        &self,
        model: RobotModel,
        mode: ClockMode,
        scene: Option<&WorldState>,
    ) -> Result<(String, String), WireError> {
        let mut p = payload([("model", model.as_str()), ("mode", mode.as_str())]);
        if let Some(w) = scene {
            p.insert("scene".into(), Value::from(w.to_scene_text()));
        }
        let reply = self
            .client
            .call("spawn", p, Duration::from_secs(12) + self.deadline)?;
        let get = |k: &str| {
            reply
                .get(k)
                .and_then(Value::as_str)
                .map(str::to_owned)
                .ok_or_else(|| WireError::MalformedBody(format!("spawn reply without {k:?}")))
        };
        Ok((get("id")?, get("address")?))
    }

    pub fn kill(&self, id: &str) -> Result<(), WireError> {
        self.client.call("kill", payload([("id", id)]), self.deadline)?;
        Ok(())
    }

    pub fn check(&self, id: &str) -> Result<(ClusterStatus, String), WireError> {
        let reply = self.client.call("check", payload([("id", id)]), self.deadline)?;
        let status = reply
            .get("status")
            .and_then(Value::as_str)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| WireError::MalformedBody("check reply without status".into()))?;
        let address = reply.get("address").and_then(Value::as_str).unwrap_or("").to_owned();
        Ok((status, address))
    }

    pub fn restart(&self, id: &str) -> Result<(), WireError> {
        self.client
            .call("restart_cluster", payload([("id", id)]), self.deadline)?;
        Ok(())
    }
}
