use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ekg_core::gradsuite::run_grad_suite;
use ekg_core::pipeline::{run_all, run_stage, PipelineConfig, Preset, Stage, Workspace};

#[derive(Parser, Debug)]
#[command(
    name = "ekg",
    version,
    about = "Build evolutionary knowledge graphs and generate passage comments"
)]
struct Cli {
    /// JSON config file; keys it omits keep the preset's values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config value, e.g. `--set generator.beam=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Run directory holding one subdirectory per stage.
    #[arg(long, default_value = "ekg-run", global = true)]
    workspace: PathBuf,

    /// Master seed; takes precedence over the config file and `--set`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, value_enum, default_value_t = PresetArg::Desk, global = true)]
    preset: PresetArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Paper => Preset::Paper,
        }
    }
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Write a synthetic novel, lexicon and commented passages.
    Synth,
    /// Parse, cluster, match mentions, merge and filter passages.
    Ingest,
    /// Dataset statistics of the ingested corpus.
    Stats,
    /// One co-occurrence graph per chapter.
    BuildEkg,
    /// Train temporal vertex and edge embeddings.
    TrainEkg,
    /// Train the comment generator.
    TrainG2s,
    /// Beam-search comments for every passage.
    Generate,
    /// BLEU and ROUGE-L of the generated comments.
    Evaluate,
    /// Every stage from synth to evaluate.
    All,
    /// Finite-difference check of every differentiable op, layer and loss.
    GradCheck,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        Some(match self {
            Command::Synth => Stage::Synth,
            Command::Ingest => Stage::Ingest,
            Command::Stats => Stage::Stats,
            Command::BuildEkg => Stage::BuildEkg,
            Command::TrainEkg => Stage::TrainEkg,
            Command::TrainG2s => Stage::TrainG2s,
            Command::Generate => Stage::Generate,
            Command::Evaluate => Stage::Evaluate,
            Command::All | Command::GradCheck => return None,
        })
    }
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig> {
    let preset = Preset::from(cli.preset);
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path, preset)?,
        None => PipelineConfig::preset(preset),
    };
    config.apply_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn grad_check(seed: u64) -> Result<bool> {
    let started = Instant::now();
    let cases = run_grad_suite(seed).context("gradient suite could not run")?;
    let mut failures = 0;
    for case in &cases {
        let r = &case.report;
        let status = if case.passed() { "ok" } else { "FAIL" };
        println!(
            "{status:4} {:<28} {:<9} max_rel {:.3e} (tol {:.0e}, {} coords)",
            case.name,
            format!("{:?}", case.kind),
            r.max_rel_error,
            r.tolerance,
            r.checked
        );
        failures += usize::from(!case.passed());
    }
    println!(
        "{} cases, {failures} failed, {:.1}s",
        cases.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(failures == 0)
}

fn run(cli: &Cli) -> Result<bool> {
    if let Command::GradCheck = cli.command {
        return grad_check(cli.seed.unwrap_or(0));
    }
    let config = resolve_config(cli)?;
    let ws = Workspace::open(&cli.workspace)?;
    let outputs = match cli.command.stage() {
        Some(stage) => vec![run_stage(&ws, stage, &config)?],
        None => run_all(&ws, &config)?,
    };
    for out in outputs {
        println!("{}", out.summary);
        for a in &out.artifacts {
            log::info!("wrote {}", a.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
