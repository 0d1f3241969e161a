//! `extremal` — branch tracing, extremal-parameter bounds, estimate
//! verification, critical-dimension sweeps and energy comparison for the
//! singular radial problem with advection.

mod commands;
mod config;
mod jsonfmt;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::{EXIT_CONFIG, EXIT_OK};
use config::{parse_dims, RunConfig};

#[derive(Parser)]
#[command(name = "extremal", version, about = "radial extremal-branch solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (flat dotted key = value lines)
    #[arg(long)]
    config: PathBuf,
    /// Output directory for result files
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker pool size for sweeps and batch verification (0 = default)
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Trace the solution branch; writes branch.csv and summary.json
    Branch(CommonArgs),
    /// Two-sided bounds on the extremal parameter; writes bounds.json
    Bounds(CommonArgs),
    /// Run the estimate suite on semi-stable points; writes estimates.json
    Verify(CommonArgs),
    /// Critical-dimension sweep; writes sweep.csv
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Dimensions, e.g. `2..9` or `2,4,8` (overrides sweep.dimensions)
        #[arg(long)]
        dims: Option<String>,
    },
    /// Energy comparison of the two branches near the fold; writes energy.json
    Energy(CommonArgs),
}

fn init_logging() {
    let level = match std::env::var("EXTREMAL_BRANCH_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Error,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
}

fn run(common: &CommonArgs, f: impl FnOnce(&RunConfig, &std::path::Path) -> i32 + Send) -> i32 {
    let cfg = match RunConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = std::fs::create_dir_all(&common.out) {
        eprintln!("error: cannot create output dir {}: {e}", common.out.display());
        return EXIT_CONFIG;
    }
    extremal_core::parallel::with_jobs(common.jobs, || f(&cfg, &common.out))
}

fn main() {
    init_logging();
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Branch(c) => run(c, commands::cmd_branch),
        Command::Bounds(c) => run(c, commands::cmd_bounds),
        Command::Verify(c) => run(c, commands::cmd_verify),
        Command::Sweep { common, dims } => run(common, |cfg, out| {
            let dims = match dims {
                Some(text) => match parse_dims(text) {
                    Ok(d) => d,
                    Err(e) => {
                        eprintln!("error: {e:#}");
                        return EXIT_CONFIG;
                    }
                },
                None => match cfg.dims() {
                    Ok(d) => d,
                    Err(e) => {
                        eprintln!("error: {e:#}");
                        return EXIT_CONFIG;
                    }
                },
            };
            commands::cmd_sweep(cfg, out, &dims)
        }),
        Command::Energy(c) => run(c, commands::cmd_energy),
    };
    if code != EXIT_OK {
        std::process::exit(code);
    }
}
