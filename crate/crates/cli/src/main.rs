//! `softsplat`: command-line experiments comparing hard and soft projection
//! of point clouds.
//!
//! Exit codes: 0 success, 2 invalid input, 3 internal consistency failure
//! (including failed built-in checks), 4 I/O.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use softsplat_core::{Exec, Result};

use args::{Cli, Command};

fn run(cli: &Cli) -> Result<()> {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    match &cli.command {
        Command::GenSynth(a) => commands::gen_synth(a),
        Command::Project(a) => commands::project(a),
        Command::Splat(a) => commands::splat(a, exec),
        Command::Analyze(a) => commands::analyze(a),
        Command::Gradcheck(a) => commands::gradcheck(a, exec),
        Command::Probe(a) => commands::probe(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Loss(a) => commands::loss(a, exec),
        Command::NormalizeKitti(a) => commands::normalize_kitti_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.sequential {
        // kernels without an explicit mode still go through rayon; a single
        // worker makes them sequential too
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(1).build_global() {
            eprintln!("softsplat: {e}");
            return ExitCode::from(3);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("softsplat: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
