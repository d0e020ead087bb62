use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mpoc::cli::{cmd_gradcheck, cmd_optimize, cmd_penalty, cmd_solve, exit_code};
use mpoc::config::ProblemConfig;

/// Micropolar flow solver and boundary-control optimizer.
#[derive(Parser)]
#[command(name = "mpoc", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the state system and write fields plus a convergence report.
    Solve {
        config: PathBuf,
        /// Run a refinement series of N levels with level-tagged outputs.
        #[arg(long)]
        refine: Option<usize>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare adjoint directional derivatives with finite differences.
    Gradcheck {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the projected-gradient control optimization.
    Optimize {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the penalty-path experiment around a computed optimum.
    Penalty {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (config, run): (&PathBuf, Box<dyn FnOnce(&ProblemConfig) -> mpoc::Result<i32>>) = match &cli.cmd {
        Cmd::Solve { config, refine, out } => {
            let (refine, out) = (*refine, out.clone());
            (config, Box::new(move |cfg| cmd_solve(cfg, refine, out).map(|_| 0)))
        }
        Cmd::Gradcheck { config, out } => {
            let out = out.clone();
            (
                config,
                Box::new(move |cfg| {
                    let worst = cmd_gradcheck(cfg, out)?;
                    Ok(if worst <= 1e-4 { 0 } else { 1 })
                }),
            )
        }
        Cmd::Optimize { config, out } => {
            let out = out.clone();
            (config, Box::new(move |cfg| cmd_optimize(cfg, out).map(|_| 0)))
        }
        Cmd::Penalty { config, out } => {
            let out = out.clone();
            (config, Box::new(move |cfg| cmd_penalty(cfg, out).map(|_| 0)))
        }
    };

    let cfg = match ProblemConfig::load(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
