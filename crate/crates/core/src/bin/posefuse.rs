use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use posefuse::io::records::scene_artifacts;
use posefuse::io::{
    encode_predictions, json_bytes, load_predictions, load_scenes, manifest, write_all_atomic, Artifact, RunConfig,
};
use posefuse::pipeline::{eval_report, loss_report, match_report, refine_frames, simulate_frames};
use posefuse::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

/// Set-prediction pose matching, losses, depth refinement and evaluation.
#[derive(Parser, Debug)]
#[command(name = "posefuse", version)]
struct Cli {
    /// Flat TOML configuration; unset keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `jobs` from the configuration.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Output directory for `simulate`, refined predictions for `refine`,
    /// report file for the other commands (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate scenes and noisy predictions.
    Simulate,
    /// Optimal assignment of predictions to ground truth.
    Match { scene: PathBuf, predictions: PathBuf },
    /// Set loss of the matched predictions.
    Loss { scene: PathBuf, predictions: PathBuf },
    /// Fuse depth-derived translations into the predictions.
    Refine {
        scene: PathBuf,
        predictions: PathBuf,
        /// Also write the before/after report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// ADD, ADD-S and threshold accuracy per class.
    Eval { scene: PathBuf, predictions: PathBuf },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn render(format: Format, json: Value, text: String) -> Vec<u8> {
    match format {
        Format::Json => json_bytes(&json),
        Format::Text => text.into_bytes(),
    }
}

fn emit(out: Option<&Path>, bytes: Vec<u8>) -> Result<()> {
    match out {
        Some(path) => write_all_atomic(&[Artifact::new(path.to_path_buf(), "report", bytes)]),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(&bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                })
        }
    }
}

fn simulate(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let dir = cli
        .out
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("simulate needs --out <dir>".into()))?;
    let (scenes, preds) = simulate_frames(cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut artifacts = scene_artifacts(&dir.join("scene.jsonl"), &scenes, cfg.depth_scale)?;
    artifacts.insert(
        1,
        Artifact::new(dir.join("predictions.jsonl"), "predictions", encode_predictions(&preds)),
    );
    let manifest = manifest(dir, &artifacts, &cfg.digest(), cfg.seed);
    let mut all = artifacts.clone();
    all.push(Artifact::new(dir.join("manifest.json"), "manifest", json_bytes(&manifest)));
    write_all_atomic(&all)?;

    let mut text = String::new();
    for a in &artifacts {
        text.push_str(&format!("{}  {}\n", a.digest(), a.path.display()));
    }
    let bytes = render(cli.format, manifest, text);
    emit(None, bytes)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Simulate => simulate(cli, &cfg),
        Command::Match { scene, predictions } => {
            let r = match_report(&load_scenes(scene)?, &load_predictions(predictions)?, &cfg)?;
            emit(cli.out.as_deref(), render(cli.format, r.to_json(), r.to_text()))
        }
        Command::Loss { scene, predictions } => {
            let r = loss_report(&load_scenes(scene)?, &load_predictions(predictions)?, &cfg)?;
            emit(cli.out.as_deref(), render(cli.format, r.to_json(), r.to_text()))
        }
        Command::Eval { scene, predictions } => {
            let r = eval_report(&load_scenes(scene)?, &load_predictions(predictions)?, &cfg)?;
            emit(cli.out.as_deref(), render(cli.format, r.to_json(), r.to_text()))
        }
        Command::Refine {
            scene,
            predictions,
            report,
        } => {
            let out = cli
                .out
                .as_deref()
                .ok_or_else(|| Error::InvalidConfig("refine needs --out <predictions file>".into()))?;
            let r = refine_frames(&load_scenes(scene)?, &load_predictions(predictions)?, &cfg)?;
            let bytes = render(cli.format, r.to_json(), r.to_text());
            let mut artifacts = vec![Artifact::new(out.to_path_buf(), "predictions", encode_predictions(&r.frames))];
            if let Some(path) = report {
                artifacts.push(Artifact::new(path.clone(), "report", bytes.clone()));
            }
            write_all_atomic(&artifacts)?;
            emit(None, bytes)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
