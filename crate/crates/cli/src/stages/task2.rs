//! Masked-graph stages: build the incomplete KG and its relation index,
//! answer questions through retrieval + disambiguation + context
//! construction, and run the sequence-embedding retrieval baselines.

use std::collections::HashSet;

use awaken_core::eval::{evaluate_awakening, AwakenCase, AwakenOptions, AwakenResult};
use awaken_core::forge::render_knowledge;
use awaken_core::index::{load_index, save_index};
use awaken_core::kg::{load_triples, serialize_tsv, KnowledgeGraph, Triple, TripleFormat};
use awaken_core::probe::QuestionRecord;
use awaken_core::unseen::{
    baseline_difar, build_incomplete_kg, build_sequence_index, construct_contexts, difar_query,
    disambiguate, embed_relations, extract_entity_relation, qd_decompose, retrieve_by_relation,
    DifarMode, ExtractionResult, TypeCatalog,
};
use awaken_core::CoreError;
use serde::{Deserialize, Serialize};

use super::StageCtx;
use crate::errors::CliError;
use crate::records::{require_stage, write_atomic, write_records, RunRecord};

pub fn build_index(ctx: &StageCtx) -> Result<(), CliError> {
    require_stage(ctx.dir, "ingest", ctx.fingerprint, ctx.force)?;
    let (kg, _) = super::load_dataset(ctx.cfg)?;
    let questions = super::load_question_set(ctx.cfg)?;

    let (masked, stats) = build_incomplete_kg(&questions, &kg);
    if masked.is_empty() {
        return Err(CliError::Config(anyhow::anyhow!(
            "masking produced an empty graph; no question head entity has a subgraph in {}",
            ctx.cfg.dataset.triples.display()
        )));
    }
    let embedder = super::make_embedder(ctx.cfg)?;
    let index = embed_relations(&masked, embedder.as_ref(), &ctx.cfg.index, ctx.cfg.seed)
        .map_err(CliError::from_core)?;

    let mut tsv = Vec::new();
    serialize_tsv(&masked, &mut tsv)
        .map_err(|e| CliError::Other(anyhow::anyhow!("serializing masked graph: {e}")))?;
    write_atomic(&super::masked_graph_path(ctx.dir), &tsv).map_err(CliError::Other)?;

    let index_path = super::relation_index_path(ctx.dir);
    let tmp = ctx.dir.join(".relations.aivf.tmp");
    save_index(&index, &tmp).map_err(CliError::from_core)?;
    std::fs::rename(&tmp, &index_path)
        .map_err(|e| CliError::Other(anyhow::anyhow!("renaming index into place: {e}")))?;

    let summary = serde_json::json!({
        "triples_in": kg.len(),
        "masked_triples": masked.len(),
        "mask": stats,
        "indexed": index.len(),
        "cells": index.nlist(),
    });
    let records = vec![RunRecord::new(
        "build-index",
        "*",
        None,
        summary,
        ctx.fingerprint,
    )];
    let path = write_records(ctx.dir, "build-index", &records).map_err(CliError::Other)?;
    log::info!(
        "masked {} triples into {} and indexed {} relations -> {}",
        kg.len(),
        masked.len(),
        index.len(),
        path.display()
    );
    Ok(())
}

/// Per-question trace of the retrieval path plus the answer cell. A failed
/// `result` with no extraction means the question never reached retrieval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnseenPayload {
    pub extraction: Option<ExtractionResult>,
    pub retrieved: Vec<String>,
    pub selected: Vec<String>,
    pub context: Option<String>,
    pub result: AwakenResult,
}

struct QuestionTrace {
    question_id: String,
    extraction: Option<ExtractionResult>,
    retrieved: Vec<String>,
    selected: Vec<String>,
    context: Option<String>,
}

fn load_masked(ctx: &StageCtx) -> Result<KnowledgeGraph, CliError> {
    let path = super::masked_graph_path(ctx.dir);
    if !path.is_file() {
        return Err(CliError::Prerequisite(format!(
            "masked graph {} is missing; run `awaken-kgqa build-index` first",
            path.display()
        )));
    }
    let (kg, _) = load_triples(&path, TripleFormat::Tsv).map_err(CliError::from_core)?;
    Ok(kg)
}

fn failed_result(q: &QuestionRecord, arm: &str, err: &CoreError) -> AwakenResult {
    AwakenResult {
        question_id: q.id.clone(),
        arm: arm.to_string(),
        response: String::new(),
        candidates: Vec::new(),
        hits: Default::default(),
        acc: 0,
        failed: true,
        error: Some(err.to_string()),
    }
}

pub fn unseen_qa(ctx: &StageCtx) -> Result<(), CliError> {
    require_stage(ctx.dir, "ingest", ctx.fingerprint, ctx.force)?;
    require_stage(ctx.dir, "build-index", ctx.fingerprint, ctx.force)?;
    let masked = load_masked(ctx)?;
    let index_path = super::relation_index_path(ctx.dir);
    if !index_path.is_file() {
        return Err(CliError::Prerequisite(format!(
            "relation index {} is missing; run `awaken-kgqa build-index` first",
            index_path.display()
        )));
    }
    let index = load_index(&index_path).map_err(CliError::from_core)?;

    let questions = super::load_question_set(ctx.cfg)?;
    let backend = super::make_backend(ctx.cfg)?;
    let embedder = super::make_embedder(ctx.cfg)?;
    let contexts = ctx.cfg.unseen.contexts().map_err(CliError::Config)?;
    let catalog = match &ctx.cfg.unseen.type_catalog {
        Some(p) => TypeCatalog::load(p).map_err(CliError::input)?,
        None => TypeCatalog::default_curated(),
    };
    let arm = contexts
        .iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join("+");
    let nprobe = ctx.cfg.index.nprobe.min(index.nlist());

    let mut cases = Vec::new();
    let mut traces: Vec<QuestionTrace> = Vec::new();
    let mut prewritten: Vec<(String, UnseenPayload)> = Vec::new();
    for q in &questions {
        let extraction = match extract_entity_relation(q, backend.as_ref(), ctx.cfg.seed) {
            Ok(e) => e,
            Err(e @ CoreError::Backend { .. }) => return Err(CliError::from_core(e)),
            Err(e) => {
                log::warn!("question {}: {e}; skipping retrieval", q.id);
                prewritten.push((
                    q.id.clone(),
                    UnseenPayload {
                        extraction: None,
                        retrieved: Vec::new(),
                        selected: Vec::new(),
                        context: None,
                        result: failed_result(q, &arm, &e),
                    },
                ));
                continue;
            }
        };
        let retrieved = retrieve_by_relation(
            &index,
            &masked,
            &extraction.relation,
            embedder.as_ref(),
            ctx.cfg.retrieval.k,
            nprobe,
        )
        .map_err(CliError::from_core)?;
        let selected = disambiguate(
            &retrieved,
            &extraction.entity,
            &q.question,
            backend.as_ref(),
            ctx.cfg.retrieval.m,
            ctx.cfg.seed,
            &q.id,
        );
        let bundle = match construct_contexts(
            &extraction.entity,
            &q.question,
            &selected,
            &contexts,
            Some(&catalog),
            backend.as_ref(),
            ctx.cfg.seed,
            &q.id,
        ) {
            Ok(b) => b,
            Err(e @ CoreError::Backend { .. }) => return Err(CliError::from_core(e)),
            Err(e) => {
                log::warn!("question {}: context construction failed: {e}", q.id);
                prewritten.push((
                    q.id.clone(),
                    UnseenPayload {
                        extraction: Some(extraction),
                        retrieved: rendered(&retrieved),
                        selected: rendered(&selected),
                        context: None,
                        result: failed_result(q, &arm, &e),
                    },
                ));
                continue;
            }
        };
        let context = bundle.text();
        cases.push(AwakenCase {
            question_id: q.id.clone(),
            question: q.question.clone(),
            golds: q.answers.clone(),
            arm: arm.clone(),
            knowledge: Some(context.clone()),
        });
        traces.push(QuestionTrace {
            question_id: q.id.clone(),
            extraction: Some(extraction),
            retrieved: rendered(&retrieved),
            selected: rendered(&selected),
            context: Some(context),
        });
    }

    let results = evaluate_awakening(backend.as_ref(), &cases, &awaken_options(ctx), ctx.cfg.seed);
    let mut payloads: Vec<(String, UnseenPayload)> = traces
        .into_iter()
        .zip(results)
        .map(|(t, result)| {
            (
                t.question_id,
                UnseenPayload {
                    extraction: t.extraction,
                    retrieved: t.retrieved,
                    selected: t.selected,
                    context: t.context,
                    result,
                },
            )
        })
        .collect();
    payloads.extend(prewritten);
    let order: std::collections::HashMap<&str, usize> = questions
        .iter()
        .enumerate()
        .map(|(i, q)| (q.id.as_str(), i))
        .collect();
    payloads.sort_by_key(|(qid, _)| order.get(qid.as_str()).copied().unwrap_or(usize::MAX));

    super::fail_if_all_failed(
        payloads.iter().map(|(_, p)| p.result.failed),
        "unseen question",
    )?;
    let records: Vec<RunRecord> = payloads
        .iter()
        .map(|(qid, p)| {
            RunRecord::new(
                "unseen-qa",
                qid.clone(),
                Some(p.result.arm.clone()),
                serde_json::to_value(p).expect("unseen payload serializes"),
                ctx.fingerprint,
            )
        })
        .collect();
    let path = write_records(ctx.dir, "unseen-qa", &records).map_err(CliError::Other)?;
    log::info!(
        "answered {} questions over the masked graph -> {}",
        records.len(),
        path.display()
    );
    Ok(())
}

/// What a baseline retrieved for one question, plus the answer cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselinePayload {
    pub retrieved: Vec<String>,
    pub result: AwakenResult,
}

pub fn baseline(ctx: &StageCtx) -> Result<(), CliError> {
    require_stage(ctx.dir, "ingest", ctx.fingerprint, ctx.force)?;
    require_stage(ctx.dir, "build-index", ctx.fingerprint, ctx.force)?;
    if ctx.cfg.unseen.baselines.is_empty() {
        return Err(CliError::Config(anyhow::anyhow!(
            "unseen.baselines lists no modes"
        )));
    }
    let masked = load_masked(ctx)?;
    let questions = super::load_question_set(ctx.cfg)?;
    let backend = super::make_backend(ctx.cfg)?;
    let embedder = super::make_embedder(ctx.cfg)?;

    let index = build_sequence_index(&masked, embedder.as_ref(), &ctx.cfg.index, ctx.cfg.seed)
        .map_err(CliError::from_core)?;
    let nprobe = ctx.cfg.index.nprobe.min(index.nlist());
    let k = ctx.cfg.retrieval.k;

    let mut cases = Vec::new();
    let mut retrieved_texts = Vec::new();
    for mode in &ctx.cfg.unseen.baselines {
        for q in &questions {
            let (arm, triples) = match mode.as_str() {
                "difar-question" => (
                    "DIFAR_QUESTION",
                    baseline_difar(
                        &index,
                        &masked,
                        difar_query(q, DifarMode::Question),
                        embedder.as_ref(),
                        k,
                        nprobe,
                    )
                    .map_err(CliError::from_core)?,
                ),
                "difar-entity" => (
                    "DIFAR_ENTITY",
                    baseline_difar(
                        &index,
                        &masked,
                        difar_query(q, DifarMode::Entity),
                        embedder.as_ref(),
                        k,
                        nprobe,
                    )
                    .map_err(CliError::from_core)?,
                ),
                "qd" => {
                    let subs = qd_decompose(&q.question, backend.as_ref(), ctx.cfg.seed, &q.id);
                    let mut seen = HashSet::new();
                    let mut union = Vec::new();
                    for sub in &subs {
                        let hits =
                            baseline_difar(&index, &masked, sub, embedder.as_ref(), k, nprobe)
                                .map_err(CliError::from_core)?;
                        for t in hits {
                            if seen.insert(t.dedup_key()) {
                                union.push(t);
                            }
                        }
                    }
                    ("QD", union)
                }
                other => {
                    return Err(CliError::Config(anyhow::anyhow!(
                        "unknown baseline mode {other:?}"
                    )))
                }
            };
            let texts = rendered(&triples);
            cases.push(AwakenCase {
                question_id: q.id.clone(),
                question: q.question.clone(),
                golds: q.answers.clone(),
                arm: arm.to_string(),
                knowledge: if triples.is_empty() {
                    None
                } else {
                    Some(render_knowledge(&triples))
                },
            });
            retrieved_texts.push(texts);
        }
    }

    let results = evaluate_awakening(backend.as_ref(), &cases, &awaken_options(ctx), ctx.cfg.seed);
    super::fail_if_all_failed(results.iter().map(|r| r.failed), "baseline cell")?;
    let records: Vec<RunRecord> = results
        .iter()
        .zip(retrieved_texts)
        .map(|(r, retrieved)| {
            let payload = BaselinePayload {
                retrieved,
                result: r.clone(),
            };
            RunRecord::new(
                "baseline",
                r.question_id.clone(),
                Some(r.arm.clone()),
                serde_json::to_value(&payload).expect("baseline payload serializes"),
                ctx.fingerprint,
            )
        })
        .collect();
    let path = write_records(ctx.dir, "baseline", &records).map_err(CliError::Other)?;
    log::info!("ran {} baseline cells -> {}", records.len(), path.display());
    Ok(())
}

fn awaken_options(ctx: &StageCtx) -> AwakenOptions {
    AwakenOptions {
        temperature: ctx.cfg.awaken.temperature,
        k_max: ctx.cfg.awaken.k_max,
        elicit_candidates: ctx.cfg.awaken.elicit_candidates,
        max_tokens: ctx.cfg.awaken.max_tokens,
    }
}

fn rendered(triples: &[Triple]) -> Vec<String> {
    triples
        .iter()
        .map(|t| render_knowledge(std::slice::from_ref(t)))
        .collect()
}
