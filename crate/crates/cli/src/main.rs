use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use vulnrank_cli::{generate, load_config, run_all, run_stage, CliResult, Outcome, RunOptions, Stage};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Extract,
    Bpe,
    Encode,
    TrainLm,
    Embed,
    Simrows,
    Features,
    Sample,
    Train,
    Score,
    Evaluate,
    Report,
    /// Every stage in order
    All,
    /// Write a synthetic corpus from the [generate] section
    Generate,
}

/// Rate C-family functions for vulnerability risk.
#[derive(Debug, Parser)]
#[command(name = "vulnrank", version)]
struct Cli {
    #[arg(value_enum)]
    stage: Command,
    #[arg(long, short)]
    config: PathBuf,
    /// Overwrite artifacts produced under a different config
    #[arg(long)]
    force: bool,
    /// Override the global seed
    #[arg(long)]
    seed: Option<u64>,
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let cfg = load_config(&cli.config, cli.seed)?;
    let opts = RunOptions { force: cli.force };
    let stage = match cli.stage {
        Command::All => {
            let ran = run_all(&cfg, opts)?;
            println!("all: {ran} stage(s) ran");
            return Ok(());
        }
        Command::Generate => return generate(&cfg),
        Command::Extract => Stage::Extract,
        Command::Bpe => Stage::Bpe,
        Command::Encode => Stage::Encode,
        Command::TrainLm => Stage::TrainLm,
        Command::Embed => Stage::Embed,
        Command::Simrows => Stage::Simrows,
        Command::Features => Stage::Features,
        Command::Sample => Stage::Sample,
        Command::Train => Stage::Train,
        Command::Score => Stage::Score,
        Command::Evaluate => Stage::Evaluate,
        Command::Report => Stage::Report,
    };
    match run_stage(stage, &cfg, opts)? {
        Outcome::Ran => println!("{}: done", stage.name()),
        Outcome::UpToDate => println!("{}: up to date", stage.name()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
