//! `fbmc-sim`: batch runs of the hybrid-coupling study.

mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use fbmc_core::grid::save_grid;
use fbmc_core::grid::synthetic::{generate, NetworkParams};
use pipeline::{Failure, RunPlan};

#[derive(Parser)]
#[command(name = "fbmc-sim", version, about = "Flow-based market coupling under standard and advanced hybrid coupling")]
struct Cli {
    /// Increase log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one stage or the full paired study.
    Run(RunArgs),
    /// Write the bundled synthetic test network to a directory.
    GenerateNetwork(GenerateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageArg {
    D2,
    Capacity,
    D1Shc,
    D1Ahc,
    D0,
    FullStudy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetupArg {
    Shc,
    Ahc,
    Both,
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// JSON manifest; command-line flags take precedence over its fields.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Grid directory holding the network CSV files and config.json
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Output directory; stage artifacts go to <out>/artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of the D-2 forecast error draw
    #[arg(long)]
    seed: Option<u64>,
    /// Number of hours to simulate.
    #[arg(long)]
    hours: Option<usize>,
    /// First simulated hour (1-based).
    #[arg(long)]
    first_hour: Option<usize>,
    /// Stage to run; each stage reads the artifacts of the one before
    #[arg(long, value_enum)]
    stage: Option<StageArg>,
    /// Shorthand for `--stage full-study`.
    #[arg(long, conflicts_with = "stage")]
    study: bool,
    /// Branches to run in the D-0 stage.
    #[arg(long, value_enum)]
    setup: Option<SetupArg>,
    /// Zone-to-zone PTDF threshold for CNE selection
    #[arg(long)]
    threshold: Option<f64>,
    /// Minimum RAM share of fmax
    #[arg(long)]
    minram: Option<f64>,
    /// Floor on the final RAM as a share of fmax
    #[arg(long)]
    core_floor: Option<f64>,
    /// FRM share of fmax for lines without an explicit frm
    #[arg(long)]
    frm_default: Option<f64>,
    /// Curtailment penalty in congestion management (EUR/MWh).
    #[arg(long)]
    curt_penalty: Option<f64>,
    /// Write every hourly LP to <out>/lp.
    #[arg(long)]
    export_lp: bool,
    /// Write PTDF, LODF and CNEC tables to <out>/sensitivities.
    #[arg(long)]
    dump_sensitivities: bool,
}

/// Fields accepted in a `--manifest` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunManifest {
    grid: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    hours: Option<usize>,
    first_hour: Option<usize>,
    stage: Option<StageArg>,
    setup: Option<SetupArg>,
    threshold: Option<f64>,
    minram: Option<f64>,
    core_floor: Option<f64>,
    frm_default: Option<f64>,
    curt_penalty: Option<f64>,
    #[serde(default)]
    export_lp: bool,
    #[serde(default)]
    dump_sensitivities: bool,
    verbosity: Option<u8>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Directory to write the network files into
    #[arg(long)]
    out: PathBuf,
    /// Seed of the network generator.
    #[arg(long, default_value_t = NetworkParams::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = 168)]
    hours: usize,
    #[arg(long, default_value_t = NetworkParams::default().nodes_per_zone)]
    nodes_per_zone: usize,
}

fn plan(args: RunArgs) -> Result<(RunPlan, u8), Failure> {
    let manifest = match &args.manifest {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("manifest {}: {e}", path.display())))?;
            serde_json::from_str::<RunManifest>(&text)
                .map_err(|e| Failure::Usage(format!("manifest {}: {e}", path.display())))?
        }
        None => RunManifest::default(),
    };
    let grid = args
        .grid
        .or(manifest.grid)
        .ok_or_else(|| Failure::Usage("--grid is required".into()))?;
    let out = args
        .out
        .or(manifest.out)
        .ok_or_else(|| Failure::Usage("--out is required".into()))?;
    let stage = if args.study {
        StageArg::FullStudy
    } else {
        args.stage.or(manifest.stage).unwrap_or(StageArg::FullStudy)
    };
    if matches!(args.hours.or(manifest.hours), Some(0)) {
        return Err(Failure::Usage("--hours must be positive".into()));
    }
    if matches!(args.first_hour.or(manifest.first_hour), Some(0)) {
        return Err(Failure::Usage("--first-hour is 1-based".into()));
    }
    let plan = RunPlan {
        grid,
        out,
        stage,
        setup: args.setup.or(manifest.setup).unwrap_or(SetupArg::Both),
        seed: args.seed.or(manifest.seed),
        hours: args.hours.or(manifest.hours),
        first_hour: args.first_hour.or(manifest.first_hour),
        threshold: args.threshold.or(manifest.threshold),
        minram: args.minram.or(manifest.minram),
        core_floor: args.core_floor.or(manifest.core_floor),
        frm_default: args.frm_default.or(manifest.frm_default),
        curt_penalty: args.curt_penalty.or(manifest.curt_penalty),
        export_lp: args.export_lp || manifest.export_lp,
        dump_sensitivities: args.dump_sensitivities || manifest.dump_sensitivities,
    };
    Ok((plan, manifest.verbosity.unwrap_or(0)))
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("FBMC_SIM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("FBMC_SIM_THREADS={raw} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))
}

fn generate_network(args: GenerateArgs) -> Result<(), Failure> {
    if args.hours == 0 || args.nodes_per_zone < 2 {
        return Err(Failure::Usage("need at least one hour and two nodes per zone".into()));
    }
    let params = NetworkParams {
        seed: args.seed,
        hours: args.hours,
        nodes_per_zone: args.nodes_per_zone,
        ..NetworkParams::default()
    };
    let grid = generate(&params).map_err(|e| Failure::Data("generate-network".into(), e.into()))?;
    save_grid(&grid, &args.out).map_err(|e| Failure::Data("generate-network".into(), e.into()))?;
    println!(
        "wrote {} nodes, {} lines, {} plants to {}",
        grid.nodes.len(),
        grid.lines.len(),
        grid.plants.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => plan(args).and_then(|(plan, manifest_verbosity)| {
            init_logging(cli.verbose.max(manifest_verbosity));
            init_threads()?;
            pipeline::execute(&plan)
        }),
        Command::GenerateNetwork(args) => {
            init_logging(cli.verbose);
            generate_network(args)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}
