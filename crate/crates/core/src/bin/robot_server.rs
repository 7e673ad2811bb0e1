use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use gymlink::robot_server::{ClockMode, RobotServer, ServerConfig};
use gymlink::sim::{RobotModel, WorldState};

/// Serve one simulated robot over the framed protocol.
#[derive(Parser, Debug)]
#[command(name = "robot-server", version)]
struct Args {
    /// Robot model: mir100 or ur10.
    #[arg(long)]
    model: RobotModel,
    /// TCP port; 0 picks a free one.
    #[arg(long, default_value_t = 0)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Clock mode: realtime or fast.
    #[arg(long, default_value = "realtime")]
    mode: ClockMode,
    /// Initial scene file (canonical text); without it the server waits for set_state.
    #[arg(long)]
    scene: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let mut cfg = ServerConfig::new(args.model, args.mode);
    cfg.exit_on_crash = true;
    if let Some(path) = &args.scene {
        let scene = std::fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|t| WorldState::from_scene_text(&t).map_err(|e| e.to_string()));
        match scene {
            Ok(w) => cfg.scene = Some(w),
            Err(e) => {
                eprintln!("robot-server: {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
    }
    let server = match RobotServer::bind(cfg, &format!("{}:{}", args.host, args.port)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("robot-server: {e}");
            return ExitCode::from(1);
        }
    };
    println!("robot-server listening on {}", server.local_addr());
    let _ = std::io::stdout().flush();
    server.wait();
    ExitCode::SUCCESS
}
