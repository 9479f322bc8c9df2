//! Stage dispatch and the plumbing every stage shares: artifact paths,
//! completion checks, dataset loading, and backend construction.

mod report;
mod task1;
mod task2;

use std::path::{Path, PathBuf};

use awaken_core::gateway::{
    ChatBackend, EmbeddingProvider, MockEmbedder, RemoteChatBackend, RemoteConfig, RemoteEmbedder,
    ScriptedBackend,
};
use awaken_core::kg::{load_triples, KnowledgeGraph, LoadStats};
use awaken_core::probe::{load_questions, QuestionRecord};

use crate::config::{BackendKind, EmbedderKind, RunConfig};
use crate::errors::CliError;
use crate::records;
use crate::Stage;

/// Everything a stage body receives.
pub struct StageCtx<'a> {
    pub cfg: &'a RunConfig,
    pub dir: &'a Path,
    pub fingerprint: &'a str,
    pub force: bool,
}

pub fn run(stage: Stage, ctx: &StageCtx) -> Result<(), CliError> {
    if !ctx.force && is_complete(stage, ctx.dir) {
        log::info!(
            "{} already complete under {}; nothing to do",
            stage.name(),
            ctx.dir.display()
        );
        return Ok(());
    }
    match stage {
        Stage::Ingest => task1::ingest(ctx),
        Stage::SelectUnanswerable => task1::select_unanswerable(ctx),
        Stage::Forge => task1::forge(ctx),
        Stage::Probe => task1::probe(ctx),
        Stage::Awaken => task1::awaken(ctx),
        Stage::BuildIndex => task2::build_index(ctx),
        Stage::UnseenQa => task2::unseen_qa(ctx),
        Stage::Baseline => task2::baseline(ctx),
        Stage::Report => report::report(ctx),
    }
}

fn is_complete(stage: Stage, dir: &Path) -> bool {
    match stage {
        Stage::Report => dir.join("report.md").is_file() && dir.join("report.csv").is_file(),
        Stage::BuildIndex => {
            records::artifact_path(dir, stage.name()).is_file()
                && masked_graph_path(dir).is_file()
                && relation_index_path(dir).is_file()
        }
        _ => records::artifact_path(dir, stage.name()).is_file(),
    }
}

pub fn masked_graph_path(dir: &Path) -> PathBuf {
    dir.join("masked.tsv")
}

pub fn relation_index_path(dir: &Path) -> PathBuf {
    dir.join("relations.aivf")
}

pub fn load_dataset(cfg: &RunConfig) -> Result<(KnowledgeGraph, LoadStats), CliError> {
    load_triples(&cfg.dataset.triples, cfg.dataset.format).map_err(CliError::input)
}

pub fn load_question_set(cfg: &RunConfig) -> Result<Vec<QuestionRecord>, CliError> {
    load_questions(&cfg.dataset.questions).map_err(CliError::input)
}

pub fn make_backend(cfg: &RunConfig) -> Result<Box<dyn ChatBackend>, CliError> {
    match cfg.backend.kind {
        BackendKind::Scripted => {
            let rules = cfg.backend.rules.as_ref().ok_or_else(|| {
                CliError::Config(anyhow::anyhow!(
                    "backend.rules is required with kind = \"scripted\""
                ))
            })?;
            let backend = ScriptedBackend::from_file(rules).map_err(CliError::input)?;
            Ok(Box::new(backend))
        }
        BackendKind::Remote => {
            let rc = remote_config(
                cfg.backend.endpoint.as_deref(),
                cfg.backend.model.as_deref(),
                cfg.backend.timeout_secs,
                cfg.backend.max_in_flight,
                cfg.backend.retry,
            )?;
            let backend = RemoteChatBackend::new(rc).map_err(CliError::from_core)?;
            Ok(Box::new(backend))
        }
    }
}

pub fn make_embedder(cfg: &RunConfig) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    match cfg.embedder.kind {
        EmbedderKind::Mock => Ok(Box::new(MockEmbedder::new(
            cfg.seed,
            cfg.embedder.dimension,
        ))),
        EmbedderKind::Remote => {
            let rc = remote_config(
                cfg.embedder.endpoint.as_deref(),
                cfg.embedder.model.as_deref(),
                cfg.embedder.timeout_secs,
                cfg.embedder.max_in_flight,
                cfg.embedder.retry,
            )?;
            let embedder =
                RemoteEmbedder::new(rc, cfg.embedder.dimension).map_err(CliError::from_core)?;
            Ok(Box::new(embedder))
        }
    }
}

/// A stage where every single model call failed is a dead backend, not a
/// result worth recording as progress.
pub fn fail_if_all_failed(
    mut failed_flags: impl Iterator<Item = bool>,
    what: &str,
) -> Result<(), CliError> {
    let mut any = false;
    let mut all = true;
    for f in &mut failed_flags {
        any = true;
        all &= f;
    }
    if any && all {
        return Err(CliError::Backend(anyhow::anyhow!("every {what} failed")));
    }
    Ok(())
}

fn remote_config(
    endpoint: Option<&str>,
    model: Option<&str>,
    timeout_secs: u64,
    max_in_flight: usize,
    retry: awaken_core::gateway::RetryPolicy,
) -> Result<RemoteConfig, CliError> {
    let endpoint = endpoint.ok_or_else(|| {
        CliError::Config(anyhow::anyhow!(
            "endpoint is required with kind = \"remote\""
        ))
    })?;
    let model = model.ok_or_else(|| {
        CliError::Config(anyhow::anyhow!("model is required with kind = \"remote\""))
    })?;
    let mut rc = RemoteConfig::new(endpoint, model);
    rc.timeout = std::time::Duration::from_secs(timeout_secs);
    rc.max_in_flight = max_in_flight;
    rc.retry = retry;
    Ok(rc)
}
