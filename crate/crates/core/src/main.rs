use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qhydro::cli::{cmd_analyze, cmd_compare, cmd_run, Analysis, Mode};
use qhydro::config::{load_config, load_config_file, RunConfig};
use qhydro::model::Case;
use qhydro::Error;

/// Quantum trajectory hydrodynamics: decoherence of a two-Gaussian
/// superposition coupled to a harmonic bath mode.
#[derive(Parser)]
#[command(name = "qhydro", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; every key is optional.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Use the coupled case (c > 0).
    #[arg(long, conflicts_with = "uncoupled")]
    coupled: bool,
    /// Use the uncoupled case.
    #[arg(long)]
    uncoupled: bool,
    /// Output directory (default: output.directory from the config).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trajectory engine or the reference solver.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "qtm", value_parser = ["qtm", "oracle"])]
        mode: String,
        /// Write every N-th regrid snapshot.
        #[arg(long, value_name = "N")]
        snapshot_stride: Option<usize>,
    },
    /// Compute analysis fields from snapshot files or run directories.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Comma-separated: flux, stress, nsresidual, divergence, metrics, all.
        #[arg(long, value_name = "LIST", default_value = "all")]
        fields: String,
        #[arg(required = true, value_name = "SNAPSHOTS")]
        inputs: Vec<PathBuf>,
    },
    /// Compare engine snapshots with reference snapshots at matching times.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Engine snapshot files or run directory.
        #[arg(long, required = true, num_args = 1.., value_name = "PATH")]
        qtm: Vec<PathBuf>,
        /// Reference snapshot files or run directory.
        #[arg(long, required = true, num_args = 1.., value_name = "PATH")]
        oracle: Vec<PathBuf>,
    },
}

fn config(common: &Common) -> qhydro::Result<RunConfig> {
    let case = if common.coupled {
        Some(Case::Coupled)
    } else if common.uncoupled {
        Some(Case::Uncoupled)
    } else {
        None
    };
    match &common.config {
        Some(path) => load_config_file(path, case),
        None => load_config("", case),
    }
}

fn threads(common: &Common) -> qhydro::Result<()> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> qhydro::Result<()> {
    let (common, manifest) = match &cli.command {
        Command::Run {
            common,
            mode,
            snapshot_stride,
        } => {
            threads(common)?;
            let mut cfg = config(common)?;
            if let Some(s) = snapshot_stride {
                cfg.output.snapshot_stride = *s;
            }
            let out = common.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
            (common, cmd_run(&cfg, mode.parse::<Mode>()?, &out)?)
        }
        Command::Analyze { common, fields, inputs } => {
            threads(common)?;
            let cfg = config(common)?;
            let out = common
                .out
                .clone()
                .unwrap_or_else(|| cfg.output.directory.join("analysis"));
            (common, cmd_analyze(inputs, &Analysis::parse_list(fields)?, &cfg, &out)?)
        }
        Command::Compare { common, qtm, oracle } => {
            threads(common)?;
            let cfg = config(common)?;
            let out = common
                .out
                .clone()
                .unwrap_or_else(|| cfg.output.directory.join("compare"));
            (common, cmd_compare(qtm, oracle, &out)?)
        }
    };
    let _ = common;
    println!("{} files written, run id {}", manifest.files.len(), manifest.run_id);
    for note in &manifest.notes {
        println!("{note}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
