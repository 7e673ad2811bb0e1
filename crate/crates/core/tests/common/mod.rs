#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Duration;

use gymlink::manager::{ManagerConfig, ServerManager};
use gymlink::robot_server::{ClockMode, RobotServer, ServerConfig};
use gymlink::sim::RobotModel;

pub fn server_binary() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_robot-server"))
}

/// In-process robot server on a free loopback port.
pub fn robot_server(model: RobotModel, mode: ClockMode) -> RobotServer {
    RobotServer::bind(ServerConfig::new(model, mode), "127.0.0.1:0").expect("bind robot server")
}

pub fn manager_config(health_period: Duration) -> ManagerConfig {
    let mut cfg = ManagerConfig::new(server_binary());
    cfg.policy.health_period = health_period;
    cfg
}

/// Manager serving on a free loopback port.
pub fn served_manager(cfg: ManagerConfig) -> (ServerManager, String) {
    let mut m = ServerManager::new(cfg);
    let addr = m.serve("127.0.0.1:0").expect("serve manager");
    (m, addr.to_string())
}
