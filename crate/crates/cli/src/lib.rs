//! Command-line harness for keyhole imaging: single pipeline stages and
//! resumable experiment sweeps over objects, trajectories and noise levels.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod sidecar;
pub mod sweep;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{ExperimentSpec, Method};
pub use error::{CliResult, Failure};

#[derive(Debug, Parser)]
#[command(
    name = "keyhole",
    version,
    about = "Keyhole imaging simulation and reconstruction"
)]
pub struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render noisy transient measurements of an object moving along a trajectory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the noise seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reconstruct the albedo from a measurement sidecar.
    Reconstruct {
        #[arg(long, value_enum)]
        method: Method,
        /// `measurements.json` written by `simulate`.
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the initialization seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a reconstruction and append a row to a report CSV.
    Evaluate {
        /// `recon.json` from `reconstruct`, or an albedo image (KHT1 or PGM).
        #[arg(long)]
        recon: PathBuf,
        /// Ground truth image; taken from the measurement sidecar when omitted.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Most probable pose per measurement from an EM reconstruction.
    EstimateTrajectory {
        /// `recon.json` from an EM reconstruction.
        #[arg(long)]
        recon: PathBuf,
        /// Trajectory JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run or resume an experiment sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `output_dir` of the experiment file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Rerun only the cells whose hash starts with this prefix.
        #[arg(long)]
        cell: Option<String>,
    },
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(error::config_error("--threads must be at least 1"));
        }
        // fails only if the pool already exists, as in repeated in-process calls
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            log::warn!("thread pool already initialized; --threads ignored");
        }
    }
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let s = commands::simulate(&config, &out, seed)?;
            println!(
                "wrote {} x {} measurements to {}",
                s.dims[0],
                s.dims[1],
                out.display()
            );
        }
        Command::Reconstruct {
            method,
            measurements,
            config,
            out,
            seed,
        } => {
            let r = commands::reconstruct(method, &measurements, config.as_deref(), &out, seed)?;
            println!(
                "{} reconstruction in {:.1} s written to {}",
                r.method.name(),
                r.wall_time_s,
                out.display()
            );
        }
        Command::Evaluate {
            recon,
            truth,
            config,
            out,
        } => {
            let r = commands::evaluate(truth.as_deref(), &recon, config.as_deref(), &out)?;
            println!("ssim {:.6}", r.ssim.unwrap_or(f64::NAN));
        }
        Command::EstimateTrajectory { recon, out } => {
            let e = commands::estimate_trajectory_file(&recon, &out)?;
            println!("{} poses written to {}", e.trajectory.len(), out.display());
        }
        Command::Sweep {
            config,
            out,
            seed,
            cell,
        } => {
            let o = sweep::sweep(&config, out.as_deref(), seed, cell.as_deref())?;
            print!("{}", o.summary);
            let failed = o.records.iter().filter(|r| !r.is_ok()).count();
            if failed > 0 {
                eprintln!(
                    "{failed} cells failed; see {}",
                    o.out_dir.join(sweep::RUNS_FILE).display()
                );
            }
        }
    }
    Ok(())
}
