use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use masker_cli::commands::{self, Method, Run};
use masker_cli::{CliError, EvalTarget, ExperimentConfig};

/// Masked keyword regularization experiments on text classifiers.
#[derive(Debug, Parser)]
#[command(name = "masker", version)]
struct Cli {
    /// TOML experiment config; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run only this seed instead of the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override a config value, e.g. `--set train.lambda_mer=0.01`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Start MASKER from the vanilla checkpoint.
    #[arg(long, global = true)]
    share_init: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic benchmark corpora.
    GenSynthetic,
    /// Build a vocabulary from paths.train and re-encode the configured splits.
    BuildVocab {
        #[arg(long, default_value_t = 1)]
        min_count: usize,
    },
    /// Select keywords (trains the vanilla model first for attention keywords).
    SelectKeywords,
    /// Train a model and write its checkpoint and step log.
    Train {
        #[arg(long, value_enum)]
        method: Method,
    },
    /// OOD detection metrics on test_id vs test_ood.
    EvalOod {
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Accuracy gap between test_id and test_crossdomain.
    EvalCrossDomain {
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Keyword substitution attack on test_id.
    Attack {
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Aggregate per-seed reports into CSV and markdown.
    Report,
    /// Every step above for all seeds, then the report.
    Pipeline {
        /// Run seeds concurrently; results do not depend on it.
        #[arg(long)]
        parallel: bool,
    },
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = ExperimentConfig::load_with(cli.config.as_deref(), &cli.overrides)?;
    if cli.share_init {
        cfg.train.share_init = true;
    }
    let seeds = match cli.seed {
        Some(s) => vec![s],
        None => cfg.seed_list(),
    };
    let run = Run::new(cfg, cli.out)?;
    match cli.command {
        Command::GenSynthetic => commands::gen_synthetic(&run),
        Command::BuildVocab { min_count } => commands::build_vocab(&run, min_count),
        Command::SelectKeywords => commands::select_keywords(&run, &seeds),
        Command::Train { method } => commands::train(&run, &seeds, method),
        Command::EvalOod { method } => commands::evaluate(&run, &seeds, method, EvalTarget::Ood),
        Command::EvalCrossDomain { method } => commands::evaluate(&run, &seeds, method, EvalTarget::CrossDomain),
        Command::Attack { method } => commands::evaluate(&run, &seeds, method, EvalTarget::Substitution),
        Command::Report => commands::report(&run, &seeds),
        Command::Pipeline { parallel } => commands::run_pipeline(&run, &seeds, parallel),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            commands::print_paths(&paths);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
