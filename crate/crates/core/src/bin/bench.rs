use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gymlink::bench::{run_benchmark, write_episode_log, AgentKind, BenchConfig, BenchmarkReport};
use gymlink::env::Task;
use gymlink::manager::ManagerClient;

/// Run seeded evaluation episodes and report outcome statistics.
#[derive(Parser, Debug)]
#[command(name = "bench", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run a benchmark in fast clock mode.
    Run {
        /// mir_nav or ur_reach.
        #[arg(long)]
        task: Task,
        /// random or scripted.
        #[arg(long)]
        agent: AgentKind,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Environments (and clusters) run in parallel.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Server manager address; defaults to GYMLINK_MANAGER_ADDR, else a
        /// local manager is started.
        #[arg(long)]
        manager: Option<String>,
        /// Obstacles per navigation episode.
        #[arg(long, default_value_t = 3)]
        obstacles: usize,
        #[arg(long, default_value = "bench_report.txt")]
        report: PathBuf,
        /// Per-step transition log.
        #[arg(long, default_value = "bench_episodes.log")]
        log: PathBuf,
    },
    /// Pretty-print a stored report.
    Report { file: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Run {
            task,
            agent,
            episodes,
            seed,
            parallel,
            manager,
            obstacles,
            report,
            log,
        } => {
            let mut cfg = BenchConfig::new(task, agent, episodes, seed);
            cfg.parallel = parallel;
            cfg.manager = manager.or_else(ManagerClient::default_address);
            cfg.obstacles = obstacles;
            let (summary, results) = match run_benchmark(&cfg) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("bench: {e}");
                    return ExitCode::from(1);
                }
            };
            let written = std::fs::write(&report, summary.to_text() + "\n").and_then(|_| {
                let mut out = BufWriter::new(File::create(&log)?);
                write_episode_log(&mut out, &results)
            });
            if let Err(e) = written {
                eprintln!("bench: writing results: {e}");
                return ExitCode::from(1);
            }
            println!("{summary}");
            if summary.aborted == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Cmd::Report { file } => {
            let parsed = std::fs::read_to_string(&file)
                .map_err(|e| e.to_string())
                .and_then(|t| BenchmarkReport::from_text(&t));
            match parsed {
                Ok(r) => {
                    println!("{r}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("bench: {}: {e}", file.display());
                    ExitCode::from(1)
                }
            }
        }
    }
}
