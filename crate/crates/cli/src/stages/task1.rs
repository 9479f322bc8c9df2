//! Awakening pipeline stages: validate inputs, split questions by
//! answerability, forge knowledge variants, probe what the model already
//! holds, and measure answer quality with each surviving context.

use std::collections::{HashMap, HashSet};

use anyhow::Context;
use awaken_core::eval::{evaluate_awakening, Arm, AwakenCase, AwakenOptions};
use awaken_core::forge::{
    filter_answer, generate_variants, gold_knowledge, rerank_top1, AwakeningKnowledge,
    CosineScorer, KnowledgeType,
};
use awaken_core::probe::{
    probe_knowledge, select_unanswerable as select_all, ProbeOutcome, SelectionRecord, SplitTag,
};
use serde::{Deserialize, Serialize};

use super::StageCtx;
use crate::errors::CliError;
use crate::records::{require_stage, write_records, RunRecord};

pub fn ingest(ctx: &StageCtx) -> Result<(), CliError> {
    let (kg, stats) = super::load_dataset(ctx.cfg)?;
    let questions = super::load_question_set(ctx.cfg)?;
    if questions.is_empty() {
        return Err(CliError::Config(anyhow::anyhow!(
            "{} holds no questions",
            ctx.cfg.dataset.questions.display()
        )));
    }

    let mut records = Vec::with_capacity(questions.len() + 1);
    for q in &questions {
        let payload = serde_json::json!({
            "question": q.question,
            "head_entity": q.head_entity.label,
            "answers": q.answers.len(),
            "gold_path_hops": q.gold_path.as_ref().map(|p| p.hops().len()),
        });
        records.push(RunRecord::new(
            "ingest",
            q.id.clone(),
            None,
            payload,
            ctx.fingerprint,
        ));
    }
    let summary = serde_json::json!({
        "questions": questions.len(),
        "triples": kg.len(),
        "triple_records": stats.records,
        "duplicate_triples": stats.duplicates,
    });
    records.push(RunRecord::new(
        "ingest",
        "*",
        None,
        summary,
        ctx.fingerprint,
    ));

    let path = write_records(ctx.dir, "ingest", &records).map_err(CliError::Other)?;
    log::info!(
        "ingested {} questions, {} triples -> {}",
        questions.len(),
        kg.len(),
        path.display()
    );
    Ok(())
}

pub fn select_unanswerable(ctx: &StageCtx) -> Result<(), CliError> {
    require_stage(ctx.dir, "ingest", ctx.fingerprint, ctx.force)?;
    let questions = super::load_question_set(ctx.cfg)?;
    let backend = super::make_backend(ctx.cfg)?;

    let selections = select_all(backend.as_ref(), &questions, ctx.cfg.seed);
    super::fail_if_all_failed(selections.iter().map(|s| s.failed), "selection attempt")?;

    let records: Vec<RunRecord> = selections
        .iter()
        .map(|s| {
            let payload = serde_json::to_value(s).expect("selection serializes");
            RunRecord::new(
                "select-unanswerable",
                s.question_id.clone(),
                None,
                payload,
                ctx.fingerprint,
            )
        })
        .collect();
    let unanswerable = selections
        .iter()
        .filter(|s| s.split == SplitTag::Unanswerable)
        .count();
    let answerable = selections
        .iter()
        .filter(|s| s.split == SplitTag::Answerable)
        .count();
    let path = write_records(ctx.dir, "select-unanswerable", &records).map_err(CliError::Other)?;
    log::info!(
        "split: {unanswerable} unanswerable, {answerable} answerable, {} unknown -> {}",
        selections.len() - unanswerable - answerable,
        path.display()
    );
    Ok(())
}

/// Per-(question, ktype) forge output. `knowledge` is absent when the graph
/// offered no candidate of that shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForgePayload {
    pub candidates: usize,
    pub knowledge: Option<AwakeningKnowledge>,
}

pub fn forge(ctx: &StageCtx) -> Result<(), CliError> {
    require_stage(ctx.dir, "ingest", ctx.fingerprint, ctx.force)?;
    let selections = require_stage(ctx.dir, "select-unanswerable", ctx.fingerprint, ctx.force)?;
    let unanswerable = unanswerable_ids(&selections)?;

    let (kg, _) = super::load_dataset(ctx.cfg)?;
    let questions = super::load_question_set(ctx.cfg)?;
    let embedder = super::make_embedder(ctx.cfg)?;
    let scorer = CosineScorer::new(embedder.as_ref());
    let arms = ctx.cfg.knowledge.arms().map_err(CliError::Config)?;

    let mut records = Vec::new();
    for q in &questions {
        if !unanswerable.contains(&q.id) {
            continue;
        }
        let Some(path) = &q.gold_path else {
            log::warn!(
                "question {} is unanswerable but has no gold path; skipping forge",
                q.id
            );
            continue;
        };
        let root = gold_knowledge(path).rendered;
        for &ktype in &arms {
            let (candidates, picked) = if ktype == KnowledgeType::T1 {
                (1, Some(gold_knowledge(path)))
            } else {
                let found = generate_variants(&kg, path, ktype).map_err(CliError::from_core)?;
                let n = found.len();
                if found.is_empty() {
                    (0, None)
                } else {
                    (
                        n,
                        Some(rerank_top1(&found, &root, &scorer).map_err(CliError::from_core)?),
                    )
                }
            };
            let payload = ForgePayload {
                candidates,
                knowledge: picked.map(|k| filter_answer(k, &q.answers)),
            };
            records.push(RunRecord::new(
                "forge",
                q.id.clone(),
                Some(ktype.to_string()),
                serde_json::to_value(&payload).expect("forge payload serializes"),
                ctx.fingerprint,
            ));
        }
    }

    let kept = records
        .iter()
        .filter(|r| r.payload["knowledge"].is_object())
        .filter(|r| r.payload["knowledge"]["filtered"] == false)
        .count();
    let path = write_records(ctx.dir, "forge", &records).map_err(CliError::Other)?;
    log::info!(
        "forged {} snippets ({kept} past the answer filter) -> {}",
        records.len(),
        path.display()
    );
    Ok(())
}

pub fn probe(ctx: &StageCtx) -> Result<(), CliError> {
    let forged = require_stage(ctx.dir, "forge", ctx.fingerprint, ctx.force)?;
    let backend = super::make_backend(ctx.cfg)?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for rec in &forged {
        let payload: ForgePayload = serde_json::from_value(rec.payload.clone())
            .context("decoding forge record")
            .map_err(CliError::Other)?;
        let Some(knowledge) = payload.knowledge else {
            continue;
        };
        if knowledge.filtered {
            continue;
        }
        let outcome = probe_knowledge(
            backend.as_ref(),
            &rec.question_id,
            &knowledge,
            ctx.cfg.probe.mode,
            ctx.cfg.seed,
        );
        failures.push(outcome.failed);
        records.push(RunRecord::new(
            "probe",
            rec.question_id.clone(),
            Some(outcome.ktype.clone()),
            serde_json::to_value(&outcome).expect("probe outcome serializes"),
            ctx.fingerprint,
        ));
    }
    super::fail_if_all_failed(failures.into_iter(), "probe attempt")?;

    let embedded = records
        .iter()
        .filter(|r| r.payload["embedded"] == true)
        .count();
    let path = write_records(ctx.dir, "probe", &records).map_err(CliError::Other)?;
    log::info!(
        "probed {} snippets ({embedded} already embedded) -> {}",
        records.len(),
        path.display()
    );
    Ok(())
}

pub fn awaken(ctx: &StageCtx) -> Result<(), CliError> {
    require_stage(ctx.dir, "ingest", ctx.fingerprint, ctx.force)?;
    let selections = require_stage(ctx.dir, "select-unanswerable", ctx.fingerprint, ctx.force)?;
    let forged = require_stage(ctx.dir, "forge", ctx.fingerprint, ctx.force)?;
    let probed = require_stage(ctx.dir, "probe", ctx.fingerprint, ctx.force)?;

    let unanswerable = unanswerable_ids(&selections)?;
    let questions = super::load_question_set(ctx.cfg)?;
    let arms = ctx.cfg.knowledge.arms().map_err(CliError::Config)?;

    let mut knowledge: HashMap<(String, String), AwakeningKnowledge> = HashMap::new();
    for rec in &forged {
        let payload: ForgePayload = serde_json::from_value(rec.payload.clone())
            .context("decoding forge record")
            .map_err(CliError::Other)?;
        if let (Some(kt), Some(k)) = (&rec.ktype, payload.knowledge) {
            knowledge.insert((rec.question_id.clone(), kt.clone()), k);
        }
    }
    let mut verdicts: HashMap<(String, String), ProbeOutcome> = HashMap::new();
    for rec in &probed {
        let outcome: ProbeOutcome = serde_json::from_value(rec.payload.clone())
            .context("decoding probe record")
            .map_err(CliError::Other)?;
        verdicts.insert((rec.question_id.clone(), outcome.ktype.clone()), outcome);
    }

    let mut cases = Vec::new();
    for q in &questions {
        if !unanswerable.contains(&q.id) {
            continue;
        }
        cases.push(AwakenCase {
            question_id: q.id.clone(),
            question: q.question.clone(),
            golds: q.answers.clone(),
            arm: Arm::NoRag.to_string(),
            knowledge: None,
        });
        for &ktype in &arms {
            let key = (q.id.clone(), ktype.to_string());
            let Some(k) = knowledge.get(&key) else {
                continue;
            };
            if k.filtered {
                continue;
            }
            let Some(verdict) = verdicts.get(&key) else {
                continue;
            };
            if verdict.failed || verdict.embedded {
                continue;
            }
            cases.push(AwakenCase {
                question_id: q.id.clone(),
                question: q.question.clone(),
                golds: q.answers.clone(),
                arm: ktype.to_string(),
                knowledge: Some(k.rendered.clone()),
            });
        }
    }

    let opts = AwakenOptions {
        temperature: ctx.cfg.awaken.temperature,
        k_max: ctx.cfg.awaken.k_max,
        elicit_candidates: ctx.cfg.awaken.elicit_candidates,
        max_tokens: ctx.cfg.awaken.max_tokens,
    };
    let backend = super::make_backend(ctx.cfg)?;
    let results = evaluate_awakening(backend.as_ref(), &cases, &opts, ctx.cfg.seed);
    super::fail_if_all_failed(results.iter().map(|r| r.failed), "awaken cell")?;

    let records: Vec<RunRecord> = results
        .iter()
        .map(|r| {
            RunRecord::new(
                "awaken",
                r.question_id.clone(),
                Some(r.arm.clone()),
                serde_json::to_value(r).expect("awaken result serializes"),
                ctx.fingerprint,
            )
        })
        .collect();
    let path = write_records(ctx.dir, "awaken", &records).map_err(CliError::Other)?;
    log::info!(
        "evaluated {} (question, arm) cells -> {}",
        records.len(),
        path.display()
    );
    Ok(())
}

fn unanswerable_ids(selections: &[RunRecord]) -> Result<HashSet<String>, CliError> {
    let mut out = HashSet::new();
    for rec in selections {
        let sel: SelectionRecord = serde_json::from_value(rec.payload.clone())
            .context("decoding selection record")
            .map_err(CliError::Other)?;
        if sel.split == SplitTag::Unanswerable {
            out.insert(sel.question_id);
        }
    }
    Ok(out)
}
