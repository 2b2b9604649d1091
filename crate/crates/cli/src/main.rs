use std::path::PathBuf;
use std::process::ExitCode;

use aderdg::config::RunConfig;
use aderdg::driver;
use aderdg::scenarios::SCENARIOS;
use aderdg::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aderdg", version, about = "ADER-DG solver with subcell limiting and cell-by-cell AMR")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a configuration to its end time.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
        /// Extra `key=value` settings applied after the file.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Scenario catalogue.
    Scenarios {
        #[command(subcommand)]
        cmd: ScenarioCmd,
    },
    /// Validate a configuration without running it.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    List,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownScenario(_) | Error::InvalidArgument(_) => 2,
        Error::Io(_) => 1,
        _ => 3,
    }
}

fn load(path: &PathBuf, overrides: &[String]) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    RunConfig::from_text_with(&text, overrides)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Scenarios { cmd: ScenarioCmd::List } => {
            for (name, desc) in SCENARIOS {
                println!("{name:<24} {desc}");
            }
            ExitCode::SUCCESS
        }
        Cmd::Check { config, overrides } => match load(&config, &overrides).and_then(|c| driver::build_solver(&c).map(|_| c)) {
            Ok(c) => {
                println!("ok: scenario {} (N = {}, lmax = {})", c.scenario, c.solver.degree, c.solver.amr.lmax);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        },
        Cmd::Solve { config, out, max_steps, threads, overrides } => {
            let mut cfg = match load(&config, &overrides) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(exit_code(&e));
                }
            };
            if let Some(d) = out {
                cfg.output.dir = d;
            }
            if max_steps.is_some() {
                cfg.max_steps = max_steps;
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            match driver::run(&cfg) {
                Ok(r) => {
                    println!(
                        "done: {} steps, t = {:.6e}, wall {:.2} s, snapshots {}",
                        r.steps, r.t, r.wall_seconds, r.snapshots
                    );
                    let s = &r.stats;
                    println!(
                        "troubled {} (first order {}), fv fallback faces {}, predictor failures {} / unconverged {}, retries {}, refined {}, coarsened {}",
                        s.troubled,
                        s.first_order,
                        s.fv_fallback_faces,
                        s.predictor_failures,
                        s.predictor_unconverged,
                        s.retries,
                        s.refined,
                        s.coarsened
                    );
                    ExitCode::SUCCESS
                }
                Err(f) => {
                    eprintln!("error at step {} (t = {:.6e}): {}", f.step, f.t, f.error);
                    ExitCode::from(exit_code(&f.error))
                }
            }
        }
    }
}
