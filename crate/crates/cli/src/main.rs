//! Stage-oriented driver for the KGQA awakening pipeline.
//!
//! One TOML config names the dataset, backends, and parameters; every stage
//! writes its artifact under `runs/<fingerprint>/` and refuses to clobber
//! completed work unless `--force`. Exit codes: 0 success, 2 config error,
//! 3 missing prerequisite, 4 backend failure.

mod config;
mod errors;
mod records;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use crate::errors::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    /// Validate and register the dataset.
    Ingest,
    /// Split questions by three-attempt answerability.
    SelectUnanswerable,
    /// Build and rerank knowledge variants for unanswerable questions.
    Forge,
    /// Test which forged knowledge the model already holds.
    Probe,
    /// Answer each question with and without the surviving knowledge.
    Awaken,
    /// Mask question heads out of the graph and index relations.
    BuildIndex,
    /// Retrieval-based answering over the masked graph.
    UnseenQa,
    /// Sequence-embedding retrieval baselines over the masked graph.
    Baseline,
    /// Aggregate all answer cells into report.md / report.csv.
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::SelectUnanswerable => "select-unanswerable",
            Stage::Forge => "forge",
            Stage::Probe => "probe",
            Stage::Awaken => "awaken",
            Stage::BuildIndex => "build-index",
            Stage::UnseenQa => "unseen-qa",
            Stage::Baseline => "baseline",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "awaken-kgqa",
    version,
    about = "Knowledge-graph QA awakening pipeline"
)]
struct Args {
    /// Pipeline stage to execute.
    #[arg(value_enum)]
    stage: Stage,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Redo the stage even if its artifact exists, and accept upstream
    /// artifacts minted under a different fingerprint.
    #[arg(long)]
    force: bool,
    /// Override the config seed; changes the run fingerprint.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(args: &Args) -> Result<(), CliError> {
    let cfg = config::load(&args.config, args.seed)?;
    let fingerprint = cfg.fingerprint();
    let dir = cfg.output_dir.join(&fingerprint);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Other(anyhow::anyhow!("creating {}: {e}", dir.display())))?;
    log::info!("run {fingerprint}: {}", args.stage.name());
    let ctx = stages::StageCtx {
        cfg: &cfg,
        dir: &dir,
        fingerprint: &fingerprint,
        force: args.force,
    };
    stages::run(args.stage, &ctx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_match_cli_values() {
        use clap::CommandFactory;
        Args::command().debug_assert();
        for (stage, name) in [
            (Stage::Ingest, "ingest"),
            (Stage::SelectUnanswerable, "select-unanswerable"),
            (Stage::BuildIndex, "build-index"),
            (Stage::UnseenQa, "unseen-qa"),
        ] {
            assert_eq!(stage.name(), name);
            let parsed = Stage::from_str(name, false).unwrap();
            assert_eq!(parsed, stage);
        }
    }
}
