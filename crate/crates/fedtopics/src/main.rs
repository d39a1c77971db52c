use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedtopics::{Pipeline, PipelineConfig, PipelineError, Stage};

#[derive(Parser)]
#[command(name = "fedtopics", version, about = "Statement topics, yield-curve factors and event regressions")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, default_value = "fedtopics.toml")]
    config: PathBuf,
    /// Output directory; overrides the config file and FEDTOPICS_OUTPUT_DIR.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Rerun a stage even when its outputs are current (repeatable; `all` forces every stage).
    #[arg(long = "stage-force", value_name = "NAME", global = true)]
    stage_force: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Validate inputs and write coverage tables.
    Ingest,
    /// Sweep k and score topics by coherence.
    SelectK,
    /// Document-term matrices, NMF and LDA fits, theme weights.
    Topics,
    /// Two-step and state-space factor estimates.
    Curve,
    /// Event-study and theme regressions.
    Regress,
    /// Figure data and regression tables.
    Report,
    /// Every stage in order.
    All,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        match self {
            Command::Ingest => Some(Stage::Ingest),
            Command::SelectK => Some(Stage::SelectK),
            Command::Topics => Some(Stage::Topics),
            Command::Curve => Some(Stage::Curve),
            Command::Regress => Some(Stage::Regress),
            Command::Report => Some(Stage::Report),
            Command::All => None,
        }
    }
}

fn forced(names: &[String]) -> Result<Vec<Stage>, PipelineError> {
    let mut stages = Vec::new();
    for name in names {
        if name == "all" {
            stages.extend(Stage::ALL);
            continue;
        }
        let stage = Stage::from_name(name)
            .ok_or_else(|| PipelineError::Config(format!("--stage-force: unknown stage `{name}`")))?;
        stages.push(stage);
    }
    Ok(stages)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let mut pipeline = Pipeline::new(cfg, &forced(&cli.stage_force)?)?;
    let stages = match cli.command.stage() {
        Some(s) => vec![s],
        None => Stage::ALL.to_vec(),
    };
    for stage in stages {
        let outcome = pipeline.run(stage)?;
        println!("{}: {}", stage.name(), outcome.as_str());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
