use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sps_cli::config::ExperimentConfig;
use sps_cli::pipeline::Pipeline;

/// Gridworld social-perception workbench: generate belief-driven actor
/// datasets, train Beliefs/NoBeliefs perception networks, and evaluate
/// target-prediction accuracy across conditions.
#[derive(Parser)]
#[command(name = "sps", version)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, default_value = "experiment.toml")]
    config: PathBuf,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Skip stages whose artifacts verify against the manifest.
    #[arg(long, global = true)]
    resume: bool,
    /// Master-seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the map set only (text files under <out>/maps).
    GenMaps,
    /// Generate all datasets (and maps/renders).
    GenData,
    /// Train the configured sweep of networks.
    Train,
    /// Evaluate trained checkpoints across conditions.
    Eval,
    /// Aggregate evaluation results into report.csv / report.md.
    Report,
    /// Print ASCII renders of trajectories from a dataset.
    Render {
        /// Dataset file name under <out>/datasets.
        #[arg(default_value = "train.tomg")]
        dataset: String,
        /// Number of trajectories to render.
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Run the whole pipeline: gen, train, eval, report.
    Run,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: setting --jobs: {}", e);
            return ExitCode::from(2);
        }
    }

    let config_text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: reading config {}: {}", cli.config.display(), e);
            return ExitCode::from(2);
        }
    };
    let config = match ExperimentConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid config: {:#}", e);
            return ExitCode::from(2);
        }
    };
    let out_dir = config.out_dir(cli.out.as_deref());
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: creating output dir {}: {}", out_dir.display(), e);
        return ExitCode::from(1);
    }
    let pipeline = Pipeline { config, out_dir, seed_override: cli.seed, resume: cli.resume };
    let mut manifest = match pipeline.manifest(&config_text) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {:#}", e);
            return ExitCode::from(2);
        }
    };

    let result = match cli.command {
        Command::GenMaps | Command::GenData => pipeline.stage_gen(&mut manifest),
        Command::Train => pipeline.stage_train(&mut manifest),
        Command::Eval => pipeline.stage_eval(&mut manifest),
        Command::Report => pipeline.stage_report(&mut manifest),
        Command::Render { dataset, count } => pipeline
            .render_dataset(&dataset, count)
            .map(|text| print!("{}", text)),
        Command::Run => pipeline.run_all(&mut manifest),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(1)
        }
    }
}
