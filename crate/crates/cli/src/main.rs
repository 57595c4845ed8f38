//! `rawnp`: split, pretrain, train, evaluate and inspect few-shot inductive
//! link prediction runs.
//!
//! Every command reads a flat `key = value` config (`--config`), applies
//! `--set key=value` overrides and writes under the configured output
//! directory (`splits/`, `checkpoints/`, `metrics/`, `traces/`).

mod commands;
mod error;
mod layout;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;
use rawnp::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "rawnp", version, about = "Few-shot inductive link prediction on knowledge graphs")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration key (repeatable), e.g. `--set train.k=1`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Run seed; shorthand for `--set seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select unseen entities and write the split artifact.
    Split {
        /// Overwrite an existing split artifact.
        #[arg(long)]
        force: bool,
    },
    /// Pretrain TransE embeddings on the background graph.
    Pretrain,
    /// Meta-train the model, keeping the best-validation checkpoint.
    Train {
        /// full, no-raw (motif pathway removed) or no-np (deterministic latent).
        #[arg(long)]
        ablation: Option<String>,
    },
    /// Rank held-out queries and write a metrics CSV.
    Eval {
        /// Model checkpoint; defaults to the one `train` wrote for the configured ablation.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Entity partition to evaluate: valid or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// raw or filtered ranking; defaults to the config's eval.mode.
        #[arg(long)]
        mode: Option<String>,
        /// all, seen-to-unseen or unseen-to-unseen.
        #[arg(long, default_value = "all")]
        class: String,
    },
    /// Hits@1 and latent entropy of test tasks across support sizes.
    Uncertainty {
        /// Support sizes, e.g. `1..5` or `1,3`.
        #[arg(long, default_value = "1..5")]
        k_range: String,
        /// Task-sampling seeds, comma separated; defaults to the run seed.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Most frequent motifs around an entity's support, query and corrupted neighbors.
    Motifs {
        /// Entity name or numeric id.
        entity: String,
        /// Rows kept per table.
        #[arg(long, default_value_t = 3)]
        top: usize,
    },
    /// Write the planted-pattern synthetic graph as a triple file.
    Synth {
        /// Destination file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        entities: usize,
        #[arg(long, default_value_t = 3)]
        out_degree: usize,
    },
}

fn load_config(global: &GlobalArgs) -> error::Result<RunConfig> {
    let mut config = match &global.config {
        Some(path) => RunConfig::load(path).map_err(|e| CliError::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    for o in &global.overrides {
        config
            .apply_override(o)
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> error::Result<()> {
    let mut config = load_config(&cli.global)?;
    match cli.command {
        Command::Split { force } => commands::split(&config, force),
        Command::Pretrain => commands::pretrain(&config),
        Command::Train { ablation } => {
            if let Some(a) = ablation {
                config.ablation = a.parse().map_err(|e: rawnp::Error| CliError::Usage(e.to_string()))?;
            }
            commands::train(&config)
        }
        Command::Eval {
            checkpoint,
            split,
            mode,
            class,
        } => {
            if let Some(m) = mode {
                config.eval_mode = m.parse().map_err(|e: rawnp::Error| CliError::Usage(e.to_string()))?;
            }
            let class = class
                .parse()
                .map_err(|e: rawnp::Error| CliError::Usage(e.to_string()))?;
            commands::eval(&config, checkpoint, &split, class)
        }
        Command::Uncertainty {
            k_range,
            seeds,
            checkpoint,
        } => {
            let ks = commands::parse_k_range(&k_range)?;
            let seeds = match seeds {
                Some(s) => s
                    .split(',')
                    .map(|x| {
                        x.trim()
                            .parse()
                            .map_err(|_| CliError::Usage(format!("bad seed '{x}'")))
                    })
                    .collect::<error::Result<Vec<u64>>>()?,
                None => vec![config.seed],
            };
            commands::uncertainty(&config, checkpoint, &ks, &seeds)
        }
        Command::Motifs { entity, top } => commands::motifs(&config, &entity, top),
        Command::Synth {
            out,
            entities,
            out_degree,
        } => commands::synth(&config, &out, entities, out_degree),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
