mod common;

use std::thread;
use std::time::{Duration, Instant};

use gymlink::manager::{
    ClusterStatus, ManagerClient, ManagerConfig, ManagerError, RestartReason, ServerManager, WatchdogAction,
};
use gymlink::robot_server::ClockMode;
use gymlink::sim::drive::Walls;
use gymlink::sim::{Pose2D, RobotModel, WorldState};
use gymlink::wire::{self, payload, Payload, WireError};

fn manual_manager() -> ServerManager {
    let mut cfg = common::manager_config(Duration::from_secs(1));
    cfg.watchdog = false;
    ServerManager::new(cfg)
}

fn scene() -> WorldState {
    WorldState::mobile(Pose2D::new(-2.0, 0.0, 0.0), Pose2D::new(2.0, 0.0, 0.0), vec![], Walls::default())
}

fn fault(address: &str, name: &str) {
    let _ = wire::call(address, "inject_fault", payload([("fault", name)]), Duration::from_secs(1));
}

fn healthy(address: &str) -> bool {
    wire::call(address, "health", Payload::new(), Duration::from_secs(1)).is_ok()
}

#[test]
fn each_fault_maps_to_its_restart_reason() {
    let m = manual_manager();
    let cases = [
        ("crash", RestartReason::ConnectionError),
        ("hang", RestartReason::DeadlineExceeded),
        ("freeze", RestartReason::FrozenSimulation),
        ("corrupt", RestartReason::OutOfBounds),
    ];
    for (name, reason) in cases {
        let h = m.spawn_cluster(RobotModel::Mir100, ClockMode::Fast, Some(scene())).unwrap();
        // First probe records the heartbeat.
        assert_eq!(m.watchdog_tick(&h.id).unwrap(), WatchdogAction::None);
        fault(&h.address, name);
        thread::sleep(Duration::from_millis(100));
        assert_eq!(m.watchdog_tick(&h.id).unwrap(), WatchdogAction::Restart(reason), "{name}");
        let after = m.cluster(&h.id).unwrap();
        assert_eq!(after.status, ClusterStatus::Healthy);
        assert!(healthy(&after.address));
        assert_eq!(m.restart_count(&h.id).unwrap(), 1);
        // The scene comes back with the restarted process.
        let st = wire::call(&after.address, "get_state", Payload::new(), Duration::from_secs(1)).unwrap();
        assert!(st.get("state").is_some());
        assert_eq!(m.watchdog_tick(&h.id).unwrap(), WatchdogAction::None);
        m.kill_cluster(&h.id).unwrap();
    }
}

#[test]
fn uninitialized_servers_are_not_out_of_bounds() {
    let m = manual_manager();
    let h = m.spawn_cluster(RobotModel::Ur10, ClockMode::Fast, None).unwrap();
    for _ in 0..3 {
        assert_eq!(m.watchdog_tick(&h.id).unwrap(), WatchdogAction::None);
        thread::sleep(Duration::from_millis(20));
    }
}

#[test]
fn manual_restarts_exhaust_the_budget() {
    let m = manual_manager();
    let h = m.spawn_cluster(RobotModel::Mir100, ClockMode::Fast, None).unwrap();
    let budget = m.config().policy.max_restarts;
    for _ in 0..budget {
        m.request_restart(&h.id).unwrap();
        assert_eq!(m.watchdog_tick(&h.id).unwrap(), WatchdogAction::Restart(RestartReason::Manual));
    }
    m.request_restart(&h.id).unwrap();
    assert_eq!(m.watchdog_tick(&h.id).unwrap(), WatchdogAction::GiveUp(RestartReason::Manual));
    assert_eq!(m.check_cluster(&h.id).unwrap(), ClusterStatus::Dead);
    assert_eq!(m.restart_count(&h.id).unwrap(), budget as u64);
    assert_eq!(m.spawn_count(), 1 + budget as u64);
}

#[test]
fn healthy_probe_resets_the_consecutive_count() {
    let m = manual_manager();
    let h = m.spawn_cluster(RobotModel::Mir100, ClockMode::Fast, None).unwrap();
    for _ in 0..6 {
        m.request_restart(&h.id).unwrap();
        assert!(matches!(m.watchdog_tick(&h.id).unwrap(), WatchdogAction::Restart(_)));
        thread::sleep(Duration::from_millis(20));
        assert_eq!(m.watchdog_tick(&h.id).unwrap(), WatchdogAction::None);
    }
    assert_eq!(m.check_cluster(&h.id).unwrap(), ClusterStatus::Healthy);
}

#[test]
fn capacity_is_enforced_and_freed_by_kill() {
    let mut cfg = common::manager_config(Duration::from_secs(1));
    cfg.max_clusters = 2;
    let m = ServerManager::new(cfg);
    let a = m.spawn_cluster(RobotModel::Mir100, ClockMode::Fast, None).unwrap();
    let _b = m.spawn_cluster(RobotModel::Ur10, ClockMode::Fast, None).unwrap();
    let e = m.spawn_cluster(RobotModel::Mir100, ClockMode::Fast, None).unwrap_err();
    assert_eq!(e.code(), "SpawnFailed");
    m.kill_cluster(&a.id).unwrap();
    assert!(m.spawn_cluster(RobotModel::Mir100, ClockMode::Fast, None).is_ok());
}

#[test]
fn spawn_failures_are_reported() {
    let m = ServerManager::new(ManagerConfig::new("/nonexistent/robot-server"));
    assert!(matches!(
        m.spawn_cluster(RobotModel::Mir100, ClockMode::Fast, None),
        Err(ManagerError::SpawnFailed(_))
    ));
    assert!(m.clusters().is_empty());
    let arm_scene = WorldState::arm([0.0; 6], [0.5, 0.0, 0.5]);
    let m = manual_manager();
    assert_eq!(
        m.spawn_cluster(RobotModel::Mir100, ClockMode::Fast, Some(arm_scene)).unwrap_err().code(),
        "BadRequest"
    );
}

#[test]
fn services_over_the_wire() {
    let (mut m, addr) = common::served_manager(common::manager_config(Duration::from_secs(1)));
    let c = ManagerClient::connect(&addr).unwrap();
    let (id, address) = c.spawn(RobotModel::Mir100, ClockMode::Fast, Some(&scene())).unwrap();
    assert_eq!(c.check(&id).unwrap(), (ClusterStatus::Healthy, address.clone()));
    assert!(healthy(&address));

    c.kill(&id).unwrap();
    assert_eq!(c.kill(&id).unwrap_err().remote_code(), Some("UnknownHandle"));
    assert_eq!(c.restart(&id).unwrap_err().remote_code(), Some("UnknownHandle"));
    assert_eq!(c.check(&id).unwrap().0, ClusterStatus::Dead);
    assert!(matches!(
        wire::call(&address, "health", Payload::new(), Duration::from_secs(1)),
        Err(WireError::Connection(_))
    ));
    assert_eq!(c.check("nope").unwrap_err().remote_code(), Some("UnknownHandle"));
    let bad = wire::call(&addr, "spawn", payload([("model", "r2d2")]), Duration::from_secs(1)).unwrap_err();
    assert_eq!(bad.remote_code(), Some("BadRequest"));
    m.shutdown();
}

#[test]
fn manual_restart_over_the_wire_restarts_exactly_once() {
    let (m, addr) = common::served_manager(common::manager_config(Duration::from_secs(1)));
    let c = ManagerClient::connect(&addr).unwrap();
    let (id, _) = c.spawn(RobotModel::Ur10, ClockMode::Fast, None).unwrap();
    let spawned = m.spawn_count();
    c.restart(&id).unwrap();
    let t = Instant::now();
    while m.restart_count(&id).unwrap() == 0 || c.check(&id).unwrap().0 != ClusterStatus::Healthy {
        assert!(t.elapsed() < Duration::from_secs(5));
        thread::sleep(Duration::from_millis(20));
    }
    // Let a few more health periods pass; nothing else should restart it.
    thread::sleep(Duration::from_millis(2500));
    assert_eq!(m.restart_count(&id).unwrap(), 1);
    assert_eq!(m.spawn_count(), spawned + 1);
    assert!(healthy(&c.check(&id).unwrap().1));
}

#[test]
fn dropping_the_manager_kills_its_servers() {
    let m = manual_manager();
    let h = m.spawn_cluster(RobotModel::Mir100, ClockMode::Fast, None).unwrap();
    assert!(healthy(&h.address));
    drop(m);
    assert!(!healthy(&h.address));
}
