//! Command-line front end: mesh generation, operator verification,
//! conservation verification, and full simulation runs.

use axmhd::config::{self, Mode, RunConfig};
use axmhd::mesh::Mesh;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "axmhd", about = "Axisymmetric MHD on mimetic triangular meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a config file.
    Run { config: PathBuf },
    /// Check the discrete operator identities on a mesh file.
    VerifyOperators { mesh: PathBuf },
    /// Run the conservation suites for a config file.
    VerifyConservation { config: PathBuf },
    /// Generate a structured triangular mesh on [r0,r1] x [z0,z1].
    MeshRect {
        r0: f64,
        r1: f64,
        z0: f64,
        z1: f64,
        /// Target edge length.
        h: f64,
        /// Output path (defaults to rect.mesh in the working directory).
        #[arg(long, default_value = "rect.mesh")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => RunConfig::load(&config)
            .map_err(Into::into)
            .and_then(|cfg| config::run(&cfg)),
        Command::VerifyOperators { mesh } => Mesh::load(&mesh)
            .map_err(Into::into)
            .and_then(|m| config::verify_operators(&m)),
        Command::VerifyConservation { config } => RunConfig::load(&config)
            .map_err(Into::into)
            .and_then(|mut cfg| {
                cfg.mode = Mode::VerifyConservation;
                config::run(&cfg)
            }),
        Command::MeshRect { r0, r1, z0, z1, h, out } => {
            config::generate_mesh_file(r0, r1, z0, z1, h, &out).map(|()| true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
