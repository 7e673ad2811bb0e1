use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use gymlink::manager::{ManagerConfig, ServerManager};

/// Spawn, supervise and restart robot-server clusters.
#[derive(Parser, Debug)]
#[command(name = "server-manager", version)]
struct Args {
    #[arg(long, default_value_t = 0)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 32)]
    max_clusters: usize,
    /// Seconds between watchdog probes of each cluster.
    #[arg(long, default_value_t = 1.0)]
    health_period: f64,
    /// Path of the robot-server executable (default: next to this binary).
    #[arg(long)]
    server_binary: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    if !(args.health_period > 0.0) {
        eprintln!("server-manager: --health-period must be positive");
        return ExitCode::from(2);
    }
    let mut cfg = ManagerConfig::new(
        args.server_binary
            .unwrap_or_else(ManagerConfig::default_server_binary),
    );
    cfg.max_clusters = args.max_clusters;
    cfg.policy.health_period = Duration::from_secs_f64(args.health_period);
    let mut manager = ServerManager::new(cfg);
    let addr = match manager.serve(&format!("{}:{}", args.host, args.port)) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("server-manager: {e}");
            return ExitCode::from(1);
        }
    };
    println!("server-manager listening on {addr}");
    loop {
        std::thread::park();
    }
}
