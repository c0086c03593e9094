use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use pipeline_cli::{ablate, config::RunConfig, stages};

#[derive(Parser)]
#[command(
    name = "garment-pipeline",
    about = "Collision-aware garment deformation learning pipeline",
    version
)]
struct Cli {
    /// JSON config file layered over the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact root (overrides config and GARMENT_DATA_ROOT).
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,
    /// Root seed (overrides config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Rerun the stage even when its stamp is up to date.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the body, settle the garment template, simulate the datasets.
    GenData,
    /// Train the diffused field network and the canonical-body SDF.
    TrainFields,
    /// Project simulated frames into the canonical space.
    Project,
    /// Train the generative garment space.
    TrainVae,
    /// Train the recurrent regressor on encoded projections.
    TrainRegressor,
    /// Regress → decode → pose a test sequence; report collisions/timing.
    Eval {
        /// Sequence id, e.g. test_000_walk or train_002_sway.
        #[arg(long)]
        sequence: Option<String>,
    },
    /// Paired ablation of the collision-loss terms.
    Ablate,
    /// Eval with per-frame OBJ export enabled.
    Export {
        #[arg(long)]
        sequence: Option<String>,
    },
    /// Run every stage in order.
    All,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(root) = cli.data_root {
        cfg.data_root = root;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let force = cli.force;
    match cli.command {
        Command::GenData => {
            stages::gen_data(&cfg, force)?;
        }
        Command::TrainFields => {
            stages::train_fields(&cfg, force)?;
        }
        Command::Project => {
            stages::project(&cfg, force)?;
        }
        Command::TrainVae => {
            stages::stage_train_vae(&cfg, force)?;
        }
        Command::TrainRegressor => {
            stages::stage_train_regressor(&cfg, force)?;
        }
        Command::Eval { sequence } => {
            if let Some(seq) = sequence {
                cfg.eval.sequence = seq;
            }
            stages::eval(&cfg, force)?;
        }
        Command::Ablate => {
            ablate::ablate(&cfg, force)?;
        }
        Command::Export { sequence } => {
            if let Some(seq) = sequence {
                cfg.eval.sequence = seq;
            }
            stages::export(&cfg, force)?;
        }
        Command::All => {
            stages::gen_data(&cfg, force)?;
            stages::train_fields(&cfg, force)?;
            stages::project(&cfg, force)?;
            stages::stage_train_vae(&cfg, force)?;
            stages::stage_train_regressor(&cfg, force)?;
            stages::eval(&cfg, force)?;
            ablate::ablate(&cfg, force)?;
        }
    }
    Ok(())
}
