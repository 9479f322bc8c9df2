//! Question answering over a graph that has never seen the question's head
//! entity.
//!
//! The pipeline: union the two-hop neighborhoods of every question's head
//! entity into one graph, mask the heads out of it, index every triple by
//! the embedding of its relation label, retrieve candidates for a question
//! by its extracted first-hop relation, let the model pick the useful ones,
//! and turn the picks into contexts (the retrieved triples as they are, the
//! retrieved triples re-anchored on the head entity, and an inferred type
//! assertion). Retrieval deliberately keys on relations alone: the head
//! entity is absent from the graph by construction, so entity similarity
//! has nothing to match.
//!
//! A sequence-embedding baseline (whole rendered triples as keys, question
//! or entity text as query) and a query-decomposition wrapper around it are
//! included for comparison runs.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::eval::parse_numbered_line;
use crate::forge::{render_knowledge, AwakeningKnowledge, KnowledgeType, Provenance};
use crate::gateway::{ChatBackend, ChatRequest, EmbeddingProvider};
use crate::index::{IndexParams, IvfFlatIndex};
use crate::kg::{
    mask_entities, two_hop_subgraph, Entity, KnowledgeGraph, MaskStats, Node, Relation, Triple,
    INSTANCE_OF,
};
use crate::probe::QuestionRecord;
use crate::templates;
use crate::text::{derive_seed, normalize};

/// Per-question cap on extracted two-hop subgraph size.
pub const SUBGRAPH_CAP: usize = 40_000;

/// Temperature for the extraction, disambiguation, type-inference, and
/// decomposition calls.
pub const EXTRACTION_TEMPERATURE: f64 = 0.7;

/// The label every curated catalog should end in: the type of last resort.
pub const FALLBACK_TYPE: &str = "thing";

/// A small closed set of top-level entity types.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypeCatalog {
    pub types: Vec<String>,
    /// Where the list came from, carried into run records.
    pub source: String,
}

impl TypeCatalog {
    pub fn new(types: Vec<String>, source: impl Into<String>) -> Result<Self> {
        if types.is_empty() {
            return Err(CoreError::EmptyCatalog);
        }
        if types.len() > 40 {
            return Err(CoreError::Invalid(format!(
                "type catalog holds at most 40 types, got {}",
                types.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &types {
            let key = normalize(t);
            if key.is_empty() {
                return Err(CoreError::Invalid(format!("blank type label {t:?}")));
            }
            if !seen.insert(key) {
                return Err(CoreError::Invalid(format!("duplicate type label {t:?}")));
            }
        }
        Ok(TypeCatalog {
            types,
            source: source.into(),
        })
    }

    /// Reads one label per line; `#` starts a comment, blank lines are
    /// skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
        let mut types = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| CoreError::io(path, e))?;
            let label = match line.find('#') {
                Some(i) => line[..i].trim(),
                None => line.trim(),
            };
            if !label.is_empty() {
                types.push(label.to_string());
            }
        }
        TypeCatalog::new(types, format!("loaded from {}", path.display()))
    }

    /// Built-in default: forty broad entity types, ending in the
    /// catch-all.
    pub fn default_curated() -> Self {
        let types = [
            "human",
            "organization",
            "company",
            "country",
            "city",
            "place",
            "building",
            "event",
            "creative work",
            "film",
            "television series",
            "music album",
            "song",
            "book",
            "video game",
            "software",
            "product",
            "vehicle",
            "food",
            "animal",
            "plant",
            "chemical substance",
            "astronomical object",
            "educational institution",
            "government agency",
            "sports team",
            "sports league",
            "athlete",
            "politician",
            "musician",
            "actor",
            "writer",
            "scientist",
            "language",
            "religion",
            "disease",
            "gene",
            "protein",
            "profession",
            FALLBACK_TYPE,
        ];
        TypeCatalog::new(
            types.iter().map(|s| s.to_string()).collect(),
            "built-in default catalog of broad top-level types",
        )
        .expect("default catalog is valid")
    }

    /// Case- and whitespace-insensitive lookup returning the canonical
    /// catalog spelling.
    pub fn resolve(&self, label: &str) -> Option<&str> {
        let key = normalize(label);
        self.types
            .iter()
            .find(|t| normalize(t) == key)
            .map(String::as_str)
    }

    /// The catch-all type: `thing` when present, otherwise the first entry.
    pub fn fallback(&self) -> &str {
        self.resolve(FALLBACK_TYPE).unwrap_or(&self.types[0])
    }
}

/// What the extraction prompt pulled out of a question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub entity: String,
    pub relation: String,
}

/// Unions the two-hop neighborhoods of every question's head entity
/// (capped per question) and masks all head entities out of the result.
/// Questions whose head entity is absent from the graph contribute nothing
/// and are logged.
pub fn build_incomplete_kg(
    questions: &[QuestionRecord],
    kg: &KnowledgeGraph,
) -> (KnowledgeGraph, MaskStats) {
    let mut union = KnowledgeGraph::new();
    let mut heads: Vec<Entity> = Vec::new();
    for q in questions {
        let resolved = kg
            .resolve_entity(&q.head_entity.id)
            .or_else(|| kg.resolve_entity(&q.head_entity.label));
        match resolved {
            Some(e) => {
                for t in two_hop_subgraph(kg, &e.id, SUBGRAPH_CAP) {
                    union.insert(t);
                }
                heads.push(e.clone());
            }
            None => {
                log::warn!(
                    "head entity {} ({}) of question {} is not in the graph",
                    q.head_entity.label,
                    q.head_entity.id,
                    q.id
                );
                heads.push(q.head_entity.clone());
            }
        }
    }
    mask_entities(&union, &heads)
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    s.strip_prefix('"')
        .and_then(|rest| rest.strip_suffix('"'))
        .unwrap_or(s)
        .trim()
}

fn after_last_marker<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    text.rfind(marker).map(|i| &text[i + marker.len()..])
}

/// Parses the `**Output:** entity, relation` reply form. The split happens
/// at the last comma so entity surface forms may contain commas themselves.
pub fn parse_extraction(response: &str) -> Option<ExtractionResult> {
    let segment = after_last_marker(response, "**Output:**").unwrap_or(response);
    let line = segment.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = strip_quotes(line);
    let cut = line.rfind(',')?;
    let entity = strip_quotes(&line[..cut]);
    let relation = strip_quotes(&line[cut + 1..]);
    if entity.is_empty() || relation.is_empty() {
        return None;
    }
    Some(ExtractionResult {
        entity: entity.to_string(),
        relation: relation.to_string(),
    })
}

/// Asks the model for the question's head entity and first-hop relation.
/// Only that one relation is used as the retrieval signal.
pub fn extract_entity_relation(
    q: &QuestionRecord,
    backend: &dyn ChatBackend,
    master_seed: u64,
) -> Result<ExtractionResult> {
    let prompt = templates::extract_relation_prompt(&q.question, &q.head_entity.label);
    let seed = derive_seed(master_seed, &["extract", &q.id]);
    let req = ChatRequest::new(prompt, EXTRACTION_TEMPERATURE)?.with_seed(seed);
    let resp = backend.complete(&req)?;
    parse_extraction(&resp.text).ok_or_else(|| CoreError::ExtractionFailed {
        question: q.id.clone(),
        msg: format!("unparseable reply {:?}", resp.text),
    })
}

/// Indexes every triple under the embedding of its relation label; triples
/// sharing a label share one embedding, computed once. Ids are the triple's
/// position in `kg`.
pub fn embed_relations(
    kg: &KnowledgeGraph,
    provider: &dyn EmbeddingProvider,
    params: &IndexParams,
    seed: u64,
) -> Result<IvfFlatIndex> {
    if kg.is_empty() {
        return Err(CoreError::Invalid("cannot index an empty graph".into()));
    }
    let mut labels: Vec<String> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for t in kg.triples() {
        if !slot.contains_key(t.relation.label.as_str()) {
            slot.insert(t.relation.label.as_str(), labels.len());
            labels.push(t.relation.label.clone());
        }
    }
    let unique = provider.embed(&labels)?;
    let keys: Vec<(u64, crate::index::Embedding)> = kg
        .triples()
        .iter()
        .enumerate()
        .map(|(i, t)| (i as u64, unique[slot[t.relation.label.as_str()]].clone()))
        .collect();
    let samples: Vec<crate::index::Embedding> = keys.iter().map(|(_, e)| e.clone()).collect();
    let clamped = params.clamped_to(samples.len());
    let mut index = IvfFlatIndex::train(&samples, &clamped, seed)?;
    index.add_batch(&keys, clamped.batch)?;
    Ok(index)
}

/// Top-k triples whose relation embedding is closest to the embedding of
/// `r_q`.
pub fn retrieve_by_relation(
    index: &IvfFlatIndex,
    kg: &KnowledgeGraph,
    r_q: &str,
    provider: &dyn EmbeddingProvider,
    k: usize,
    nprobe: usize,
) -> Result<Vec<Triple>> {
    if k == 0 {
        return Err(CoreError::Invalid("retrieval needs k >= 1".into()));
    }
    let query = provider
        .embed(&[r_q.to_string()])?
        .into_iter()
        .next()
        .ok_or_else(|| CoreError::Invalid("embedding provider returned nothing".into()))?;
    let hits = index.search(&query, k, nprobe)?;
    hits.iter()
        .map(|h| {
            kg.triples().get(h.id as usize).cloned().ok_or_else(|| {
                CoreError::Invalid(format!("index id {} is not a triple in the graph", h.id))
            })
        })
        .collect()
}

fn integer_tokens(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut current: Option<usize> = None;
    for c in text.chars() {
        if let Some(d) = c.to_digit(10) {
            current = Some(current.unwrap_or(0).saturating_mul(10) + d as usize);
        } else if let Some(n) = current.take() {
            out.push(n);
        }
    }
    if let Some(n) = current {
        out.push(n);
    }
    out
}

/// Shows the model the numbered candidate facts and keeps the ones it
/// picks, at most `m`, in the picked order. Anything that goes wrong
/// (backend failure, unparseable reply, out-of-range picks) falls back to
/// the first `m` candidates in retrieval order.
pub fn disambiguate(
    triples: &[Triple],
    a_q: &str,
    q: &str,
    backend: &dyn ChatBackend,
    m: usize,
    master_seed: u64,
    question_id: &str,
) -> Vec<Triple> {
    if triples.is_empty() || m == 0 {
        return Vec::new();
    }
    let fallback = || triples.iter().take(m).cloned().collect::<Vec<_>>();

    let facts: Vec<String> = triples
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, render_knowledge(std::slice::from_ref(t))))
        .collect();
    let prompt = templates::disambiguate_prompt(q, a_q, &facts.join("\n"));
    let seed = derive_seed(master_seed, &["disambiguate", question_id]);
    let reply = ChatRequest::new(prompt, EXTRACTION_TEMPERATURE)
        .map(|r| r.with_seed(seed))
        .and_then(|req| backend.complete(&req));
    let reply = match reply {
        Ok(r) => r.text,
        Err(e) => {
            log::warn!("disambiguation failed for {question_id}, keeping top-{m}: {e}");
            return fallback();
        }
    };

    let segment = after_last_marker(&reply, "**Selected:**").unwrap_or(&reply);
    let mut picked: Vec<usize> = Vec::new();
    for n in integer_tokens(segment) {
        if n >= 1 && n <= triples.len() && !picked.contains(&(n - 1)) {
            picked.push(n - 1);
        }
        if picked.len() == m {
            break;
        }
    }
    if picked.is_empty() {
        log::warn!("disambiguation reply for {question_id} named no valid facts, keeping top-{m}");
        return fallback();
    }
    picked.into_iter().map(|i| triples[i].clone()).collect()
}

/// The contexts built for one question, in presentation order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextBundle {
    pub parts: Vec<AwakeningKnowledge>,
}

impl ContextBundle {
    /// One knowledge string, the parts joined by newlines.
    pub fn text(&self) -> String {
        self.parts
            .iter()
            .map(|p| p.rendered.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

fn infer_type(
    a_q: &str,
    question: &str,
    catalog: &TypeCatalog,
    backend: &dyn ChatBackend,
    master_seed: u64,
    question_id: &str,
) -> String {
    let prompt = templates::infer_type_prompt(question, a_q, &catalog.types.join(", "));
    for attempt in 0..2 {
        let tag = attempt.to_string();
        let seed = derive_seed(master_seed, &["infer-type", question_id, &tag]);
        let reply = ChatRequest::new(prompt.clone(), EXTRACTION_TEMPERATURE)
            .map(|r| r.with_seed(seed))
            .and_then(|req| backend.complete(&req));
        match reply {
            Ok(resp) => {
                let segment = after_last_marker(&resp.text, "Type:").unwrap_or(&resp.text);
                if let Some(line) = segment.lines().map(str::trim).find(|l| !l.is_empty()) {
                    if let Some(label) = catalog.resolve(strip_quotes(line)) {
                        return label.to_string();
                    }
                }
                log::info!(
                    "type inference attempt {attempt} for {question_id} gave no catalog type"
                );
            }
            Err(e) => {
                log::warn!("type inference attempt {attempt} failed for {question_id}: {e}");
            }
        }
    }
    catalog.fallback().to_string()
}

/// Turns the selected triples into contexts. Requested types always come
/// out in the fixed order: the triples as retrieved, the triples
/// re-anchored on the head entity, then the inferred type assertion.
/// Re-anchoring replaces the subject with `a_q` and therefore skips triples
/// whose object is masked; re-anchored contexts never contain the mask
/// sentinel.
#[allow(clippy::too_many_arguments)]
pub fn construct_contexts(
    a_q: &str,
    question: &str,
    selected: &[Triple],
    ktypes: &[KnowledgeType],
    catalog: Option<&TypeCatalog>,
    backend: &dyn ChatBackend,
    master_seed: u64,
    question_id: &str,
) -> Result<ContextBundle> {
    for t in ktypes {
        if !matches!(
            t,
            KnowledgeType::T7 | KnowledgeType::T1Star | KnowledgeType::T4
        ) {
            return Err(CoreError::UnsupportedKnowledgeType(t.to_string()));
        }
    }
    let wants = |t: KnowledgeType| ktypes.contains(&t);
    if selected.is_empty() && (wants(KnowledgeType::T7) || wants(KnowledgeType::T1Star)) {
        return Err(CoreError::Invalid(
            "context construction needs selected triples".into(),
        ));
    }

    let mut parts = Vec::new();
    if wants(KnowledgeType::T7) {
        parts.push(AwakeningKnowledge::new(
            KnowledgeType::T7,
            selected.to_vec(),
            Provenance::Retrieved,
        ));
    }
    if wants(KnowledgeType::T1Star) {
        let subject = Entity::from_label(a_q)?;
        let rebased: Vec<Triple> = selected
            .iter()
            .filter(|t| !t.object.is_masked())
            .map(|t| {
                Triple::new(
                    Node::Entity(subject.clone()),
                    t.relation.clone(),
                    t.object.clone(),
                )
            })
            .collect::<Result<_>>()?;
        if rebased.is_empty() {
            log::warn!(
                "every selected triple for {question_id} has a masked object; no re-anchored context"
            );
        } else {
            if rebased.len() < selected.len() {
                log::info!(
                    "skipped {} masked-object triples re-anchoring for {question_id}",
                    selected.len() - rebased.len()
                );
            }
            parts.push(AwakeningKnowledge::new(
                KnowledgeType::T1Star,
                rebased,
                Provenance::Retrieved,
            ));
        }
    }
    if wants(KnowledgeType::T4) {
        let catalog = catalog.ok_or(CoreError::EmptyCatalog)?;
        let label = infer_type(a_q, question, catalog, backend, master_seed, question_id);
        let triple = Triple::of_entities(
            Entity::from_label(a_q)?,
            Relation::from_label(INSTANCE_OF)?,
            Entity::from_label(label)?,
        );
        parts.push(AwakeningKnowledge::new(
            KnowledgeType::T4,
            vec![triple],
            Provenance::Inferred,
        ));
    }
    Ok(ContextBundle { parts })
}

/// Indexes every triple under the embedding of its full rendered sequence.
/// The persisted header flags these indexes so they are never confused with
/// relation-keyed ones.
pub fn build_sequence_index(
    kg: &KnowledgeGraph,
    provider: &dyn EmbeddingProvider,
    params: &IndexParams,
    seed: u64,
) -> Result<IvfFlatIndex> {
    if kg.is_empty() {
        return Err(CoreError::Invalid("cannot index an empty graph".into()));
    }
    let texts: Vec<String> = kg
        .triples()
        .iter()
        .map(|t| render_knowledge(std::slice::from_ref(t)))
        .collect();
    let embeddings = provider.embed(&texts)?;
    let keys: Vec<(u64, crate::index::Embedding)> = embeddings
        .into_iter()
        .enumerate()
        .map(|(i, e)| (i as u64, e))
        .collect();
    let samples: Vec<crate::index::Embedding> = keys.iter().map(|(_, e)| e.clone()).collect();
    let clamped = params.clamped_to(samples.len());
    let mut index = IvfFlatIndex::train(&samples, &clamped, seed)?;
    index.add_batch(&keys, clamped.batch)?;
    index.difar = true;
    Ok(index)
}

/// What the sequence-embedding baseline uses as its query text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifarMode {
    /// Embed the whole question.
    Question,
    /// Embed the head entity's surface form.
    Entity,
}

/// The baseline's query text for a question under the given mode.
pub fn difar_query(q: &QuestionRecord, mode: DifarMode) -> &str {
    match mode {
        DifarMode::Question => &q.question,
        DifarMode::Entity => &q.head_entity.label,
    }
}

/// Top-k triples by similarity between the query text and whole-triple
/// sequence embeddings.
pub fn baseline_difar(
    index: &IvfFlatIndex,
    kg: &KnowledgeGraph,
    query: &str,
    provider: &dyn EmbeddingProvider,
    k: usize,
    nprobe: usize,
) -> Result<Vec<Triple>> {
    if k == 0 {
        return Err(CoreError::Invalid("retrieval needs k >= 1".into()));
    }
    let q = provider
        .embed(&[query.to_string()])?
        .into_iter()
        .next()
        .ok_or_else(|| CoreError::Invalid("embedding provider returned nothing".into()))?;
    let hits = index.search(&q, k, nprobe)?;
    hits.iter()
        .map(|h| {
            kg.triples().get(h.id as usize).cloned().ok_or_else(|| {
                CoreError::Invalid(format!("index id {} is not a triple in the graph", h.id))
            })
        })
        .collect()
}

/// Breaks a multi-hop question into numbered single-hop sub-questions. Any
/// failure falls back to the original question as the single sub-question.
pub fn qd_decompose(
    q: &str,
    backend: &dyn ChatBackend,
    master_seed: u64,
    question_id: &str,
) -> Vec<String> {
    let seed = derive_seed(master_seed, &["qd", question_id]);
    let reply = ChatRequest::new(templates::qd_decompose_prompt(q), EXTRACTION_TEMPERATURE)
        .map(|r| r.with_seed(seed))
        .and_then(|req| backend.complete(&req));
    match reply {
        Ok(resp) => {
            let subs: Vec<String> = resp.text.lines().filter_map(parse_numbered_line).collect();
            if subs.is_empty() {
                log::warn!("decomposition reply for {question_id} had no numbered lines");
                vec![q.to_string()]
            } else {
                subs
            }
        }
        Err(e) => {
            log::warn!("decomposition failed for {question_id}: {e}");
            vec![q.to_string()]
        }
    }
}
