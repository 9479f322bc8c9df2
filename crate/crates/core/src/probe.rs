//! Question records, unanswerable-question selection, and parametric
//! knowledge probes.
//!
//! Selection asks each question three times at three distinct sampled
//! temperatures; a question counts as unanswerable only when every attempt
//! misses every gold answer. Probing checks whether a knowledge snippet is
//! already stored in the model's parameters, either by asking for a
//! True/False verdict on the rendered claim or by turning each triple into
//! a cloze question and checking the object comes back.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::eval::acc_r;
use crate::forge::AwakeningKnowledge;
use crate::gateway::{sample_temperatures, ChatBackend, ChatRequest};
use crate::kg::{Entity, GoldPath, Relation};
use crate::templates;
use crate::text::{derive_seed, word_tokens};

/// Where a question landed after selection. `Unknown` marks questions whose
/// selection could not complete; they are excluded rather than guessed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Answerable,
    Unanswerable,
    Unknown,
}

/// One benchmark question.
#[derive(Debug, Clone)]
pub struct QuestionRecord {
    pub id: String,
    pub question: String,
    pub head_entity: Entity,
    pub answers: Vec<String>,
    pub gold_path: Option<GoldPath>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum NodeSpec {
    Label(String),
    Full { id: String, label: String },
}

impl NodeSpec {
    fn entity(self) -> Result<Entity> {
        match self {
            NodeSpec::Label(l) => Entity::from_label(l),
            NodeSpec::Full { id, label } => Entity::new(id, label),
        }
    }

    fn relation(self) -> Result<Relation> {
        match self {
            NodeSpec::Label(l) => Relation::from_label(l),
            NodeSpec::Full { id, label } => Relation::new(id, label),
        }
    }
}

#[derive(Debug, Deserialize)]
struct HopSpec {
    s: NodeSpec,
    r: NodeSpec,
    o: NodeSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionSpec {
    id: String,
    question: String,
    head_entity: NodeSpec,
    answers: Vec<String>,
    #[serde(default)]
    gold_path: Option<Vec<HopSpec>>,
}

/// Loads questions from a JSONL file, one object per line. Malformed lines
/// and unchained gold paths are reported with their line number. When a
/// gold path is present its start must be the head entity.
pub fn load_questions(path: &Path) -> Result<Vec<QuestionRecord>> {
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| CoreError::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let spec: QuestionSpec =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if spec.question.trim().is_empty() {
            return Err(parse_err(format!("question {} has empty text", spec.id)));
        }
        if spec.answers.iter().all(|a| a.trim().is_empty()) {
            return Err(parse_err(format!(
                "question {} has no gold answers",
                spec.id
            )));
        }
        let head_entity = spec
            .head_entity
            .entity()
            .map_err(|e| parse_err(e.to_string()))?;
        let gold_path = match spec.gold_path {
            None => None,
            Some(hops) => {
                let hops: Vec<(Entity, Relation, Entity)> = hops
                    .into_iter()
                    .map(|h| Ok((h.s.entity()?, h.r.relation()?, h.o.entity()?)))
                    .collect::<Result<_>>()
                    .map_err(|e: CoreError| parse_err(e.to_string()))?;
                let path = GoldPath::new(hops).map_err(|e| parse_err(e.to_string()))?;
                if path.start().id != head_entity.id {
                    return Err(parse_err(format!(
                        "question {}: gold path starts at {} but the head entity is {}",
                        spec.id,
                        path.start().id,
                        head_entity.id
                    )));
                }
                Some(path)
            }
        };
        out.push(QuestionRecord {
            id: spec.id,
            question: spec.question,
            head_entity,
            answers: spec.answers,
            gold_path,
        });
    }
    Ok(out)
}

/// Result of the three-attempt answerability check for one question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub question_id: String,
    pub temperatures: Vec<f64>,
    pub responses: Vec<String>,
    pub accs: Vec<u8>,
    pub split: SplitTag,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Asks a question three times at distinct sampled temperatures and tags it
/// unanswerable only when every attempt scores zero relaxed accuracy.
/// Backend failures tag the question unknown so it is excluded from both
/// splits instead of being guessed into one.
pub fn select_one(
    backend: &dyn ChatBackend,
    q: &QuestionRecord,
    master_seed: u64,
) -> SelectionRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master_seed, &["select", &q.id]));
    let temps = sample_temperatures(&mut rng);
    let prompt = templates::short_answer_prompt(&q.question);
    let mut responses = Vec::with_capacity(3);
    let mut accs = Vec::with_capacity(3);
    for (i, t) in temps.iter().enumerate() {
        let attempt = i.to_string();
        let seed = derive_seed(master_seed, &["select", &q.id, &attempt]);
        let outcome = ChatRequest::new(prompt.clone(), *t)
            .map(|r| r.with_seed(seed))
            .and_then(|req| backend.complete(&req));
        match outcome {
            Ok(resp) => {
                accs.push(acc_r(&resp.text, &q.answers));
                responses.push(resp.text);
            }
            Err(e) => {
                log::warn!("selection attempt {i} failed for {}: {e}", q.id);
                return SelectionRecord {
                    question_id: q.id.clone(),
                    temperatures: temps.to_vec(),
                    responses,
                    accs,
                    split: SplitTag::Unknown,
                    failed: true,
                    error: Some(e.to_string()),
                };
            }
        }
    }
    let split = if accs.iter().all(|&a| a == 0) {
        SplitTag::Unanswerable
    } else {
        SplitTag::Answerable
    };
    SelectionRecord {
        question_id: q.id.clone(),
        temperatures: temps.to_vec(),
        responses,
        accs,
        split,
        failed: false,
        error: None,
    }
}

/// Sequentially selects over all questions; scripted backends replay
/// response cycles, so order must not depend on thread schedule.
pub fn select_unanswerable(
    backend: &dyn ChatBackend,
    questions: &[QuestionRecord],
    master_seed: u64,
) -> Vec<SelectionRecord> {
    questions
        .iter()
        .map(|q| select_one(backend, q, master_seed))
        .collect()
}

/// How to test whether knowledge is already parametric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    /// True/False verdict on the rendered claim.
    Nli,
    /// Cloze question built from the triple; the object must come back.
    Qa,
}

/// Verdict for one knowledge snippet.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub question_id: String,
    pub ktype: String,
    pub mode: ProbeMode,
    pub temperatures: Vec<f64>,
    /// Raw model responses, one per attempt.
    pub responses: Vec<String>,
    /// One vote per attempt; `true` means the attempt said the knowledge is
    /// already known.
    pub votes: Vec<bool>,
    /// Set only when every attempt voted `true`.
    pub embedded: bool,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Reads a True/False verdict: the first standalone `true` or `false` word
/// decides (case-insensitive, punctuation-tolerant); anything else,
/// including silence or hedging, counts as not-True.
pub fn parse_true_false(response: &str) -> Option<bool> {
    for token in word_tokens(response) {
        match token.as_str() {
            "true" => return Some(true),
            "false" => return Some(false),
            _ => {}
        }
    }
    None
}

fn failed_outcome(
    q_id: &str,
    ktype: String,
    mode: ProbeMode,
    temps: &[f64],
    responses: Vec<String>,
    votes: Vec<bool>,
    err: &CoreError,
) -> ProbeOutcome {
    ProbeOutcome {
        question_id: q_id.to_string(),
        ktype,
        mode,
        temperatures: temps.to_vec(),
        responses,
        votes,
        embedded: false,
        failed: true,
        error: Some(err.to_string()),
    }
}

/// Probes a snippet with three True/False checks at distinct temperatures;
/// embedded only when all three come back True.
pub fn probe_knowledge_nli(
    backend: &dyn ChatBackend,
    question_id: &str,
    knowledge: &AwakeningKnowledge,
    master_seed: u64,
) -> ProbeOutcome {
    let ktype = knowledge.ktype.to_string();
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(master_seed, &["probe", question_id, &ktype]));
    let temps = sample_temperatures(&mut rng);
    let prompt = templates::probe_claim_prompt(&knowledge.rendered);
    let mut responses = Vec::with_capacity(3);
    let mut votes = Vec::with_capacity(3);
    for (i, t) in temps.iter().enumerate() {
        let attempt = i.to_string();
        let seed = derive_seed(master_seed, &["probe", question_id, &ktype, &attempt]);
        let outcome = ChatRequest::new(prompt.clone(), *t)
            .map(|r| r.with_seed(seed))
            .and_then(|req| backend.complete(&req));
        match outcome {
            Ok(resp) => {
                votes.push(parse_true_false(&resp.text) == Some(true));
                responses.push(resp.text);
            }
            Err(e) => {
                log::warn!("probe attempt {i} failed for {question_id} [{ktype}]: {e}");
                return failed_outcome(
                    question_id,
                    ktype,
                    ProbeMode::Nli,
                    &temps,
                    responses,
                    votes,
                    &e,
                );
            }
        }
    }
    let embedded = votes.iter().all(|&v| v);
    ProbeOutcome {
        question_id: question_id.to_string(),
        ktype,
        mode: ProbeMode::Nli,
        temperatures: temps.to_vec(),
        responses,
        votes,
        embedded,
        failed: false,
        error: None,
    }
}

/// The cloze question asked about one triple.
pub fn cloze_question(subject_label: &str, relation_label: &str) -> String {
    format!("What is the {relation_label} of {subject_label}?")
}

/// Probes a single-triple snippet by asking its cloze question three times
/// at distinct temperatures; embedded only when the object label comes back
/// in all three answers. Chains and masked objects cannot be probed this
/// way.
pub fn probe_knowledge_qa(
    backend: &dyn ChatBackend,
    question_id: &str,
    knowledge: &AwakeningKnowledge,
    master_seed: u64,
) -> ProbeOutcome {
    let ktype = knowledge.ktype.to_string();
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(master_seed, &["probe", question_id, &ktype]));
    let temps = sample_temperatures(&mut rng);

    let triple = match knowledge.triples.as_slice() {
        [t] if !t.object.is_masked() => t,
        [_] => {
            return failed_outcome(
                question_id,
                ktype,
                ProbeMode::Qa,
                &temps,
                Vec::new(),
                Vec::new(),
                &CoreError::ClozeNeedsObject,
            )
        }
        _ => {
            return failed_outcome(
                question_id,
                ktype,
                ProbeMode::Qa,
                &temps,
                Vec::new(),
                Vec::new(),
                &CoreError::Invalid(format!(
                    "qa probe needs exactly one triple, got {}",
                    knowledge.triples.len()
                )),
            )
        }
    };

    let question = cloze_question(triple.subject.label(), &triple.relation.label);
    let prompt = templates::short_answer_prompt(&question);
    let gold = vec![triple.object.label().to_string()];
    let mut responses = Vec::with_capacity(3);
    let mut votes = Vec::with_capacity(3);
    for (i, temp) in temps.iter().enumerate() {
        let attempt = i.to_string();
        let seed = derive_seed(master_seed, &["probe", question_id, &ktype, &attempt]);
        let outcome = ChatRequest::new(prompt.clone(), *temp)
            .map(|r| r.with_seed(seed))
            .and_then(|req| backend.complete(&req));
        match outcome {
            Ok(resp) => {
                votes.push(acc_r(&resp.text, &gold) == 1);
                responses.push(resp.text);
            }
            Err(e) => {
                log::warn!("qa probe attempt {i} failed for {question_id} [{ktype}]: {e}");
                return failed_outcome(
                    question_id,
                    ktype,
                    ProbeMode::Qa,
                    &temps,
                    responses,
                    votes,
                    &e,
                );
            }
        }
    }
    let embedded = votes.iter().all(|&v| v);
    ProbeOutcome {
        question_id: question_id.to_string(),
        ktype,
        mode: ProbeMode::Qa,
        temperatures: temps.to_vec(),
        responses,
        votes,
        embedded,
        failed: false,
        error: None,
    }
}

/// Dispatches on mode.
pub fn probe_knowledge(
    backend: &dyn ChatBackend,
    question_id: &str,
    knowledge: &AwakeningKnowledge,
    mode: ProbeMode,
    master_seed: u64,
) -> ProbeOutcome {
    match mode {
        ProbeMode::Nli => probe_knowledge_nli(backend, question_id, knowledge, master_seed),
        ProbeMode::Qa => probe_knowledge_qa(backend, question_id, knowledge, master_seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::{KnowledgeType, Provenance};
    use crate::gateway::{ScriptRule, ScriptedBackend};
    use crate::kg::Triple;
    use std::io::Write;

    fn rule(m: &str, responses: &[&str]) -> ScriptRule {
        ScriptRule {
            matcher: m.to_string(),
            responses: responses.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn question(id: &str, text: &str, answers: &[&str]) -> QuestionRecord {
        QuestionRecord {
            id: id.to_string(),
            question: text.to_string(),
            head_entity: Entity::from_label("head").unwrap(),
            answers: answers.iter().map(|s| s.to_string()).collect(),
            gold_path: None,
        }
    }

    fn knowledge(ktype: KnowledgeType, s: &str, r: &str, o: &str) -> AwakeningKnowledge {
        AwakeningKnowledge::new(
            ktype,
            vec![Triple::of_entities(
                Entity::from_label(s).unwrap(),
                Relation::from_label(r).unwrap(),
                Entity::from_label(o).unwrap(),
            )],
            Provenance::Subgraph,
        )
    }

    #[test]
    fn loads_questions_with_and_without_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.jsonl");
        let mut f = File::create(&path).unwrap();
        writeln!(
            f,
            r#"{{"id":"q1","question":"Which team does Tom Gores own?","head_entity":{{"id":"e1","label":"Tom Gores"}},"answers":["Detroit Pistons"],"gold_path":[{{"s":{{"id":"e1","label":"Tom Gores"}},"r":"owne_s","o":"Detroit Pistons"}}]}}"#
        )
        .unwrap();
        writeln!(f).unwrap();
        writeln!(
            f,
            r#"{{"id":"q2","question":"Who?","head_entity":"Somebody","answers":["X"]}}"#
        )
        .unwrap();
        drop(f);
        let qs = load_questions(&path).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0].head_entity.id, "e1");
        let p = qs[0].gold_path.as_ref().unwrap();
        assert_eq!(p.answer().label, "Detroit Pistons");
        assert_eq!(p.first_relation().label, "owne_s");
        assert!(qs[1].gold_path.is_none());
    }

    #[test]
    fn rejects_path_not_starting_at_head() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.jsonl");
        std::fs::write(
            &path,
            r#"{"id":"q1","question":"Who?","head_entity":"A","answers":["B"],"gold_path":[{"s":"X","r":"r","o":"B"}]}"#,
        )
        .unwrap();
        let err = load_questions(&path).unwrap_err().to_string();
        assert!(err.contains(":1:"), "unexpected error: {err}");
        assert!(err.contains("head entity"), "unexpected error: {err}");
    }

    #[test]
    fn rejects_malformed_line_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.jsonl");
        std::fs::write(&path, "{\"id\":\"q1\"}\n").unwrap();
        let err = load_questions(&path).unwrap_err().to_string();
        assert!(err.contains(":1:"), "unexpected error: {err}");
    }

    #[test]
    fn unanswerable_needs_all_three_misses() {
        let q = question("q1", "What is the capital of France?", &["Paris"]);
        let wrong = ScriptedBackend::new(vec![rule("", &["London"])]);
        let rec = select_one(&wrong, &q, 42);
        assert_eq!(rec.split, SplitTag::Unanswerable);
        assert_eq!(rec.responses.len(), 3);
        assert_eq!(rec.accs, vec![0, 0, 0]);
        assert_eq!(rec.temperatures.len(), 3);
        assert!(!rec.failed);

        let flaky = ScriptedBackend::new(vec![rule("", &["London", "Paris", "London"])]);
        let rec = select_one(&flaky, &q, 42);
        assert_eq!(rec.split, SplitTag::Answerable);
        assert_eq!(rec.accs, vec![0, 1, 0]);
    }

    #[test]
    fn selection_temperatures_are_reproducible_per_question() {
        let q = question("q1", "Q?", &["A"]);
        let backend = ScriptedBackend::new(vec![rule("", &["nope"])]);
        let a = select_one(&backend, &q, 42);
        let b = select_one(&backend, &q, 42);
        assert_eq!(a.temperatures, b.temperatures);
        let other = select_one(&backend, &question("q2", "Q?", &["A"]), 42);
        assert_ne!(a.temperatures, other.temperatures);
    }

    #[test]
    fn true_false_parsing_finds_the_first_standalone_verdict() {
        assert_eq!(parse_true_false("True. The claim holds."), Some(true));
        assert_eq!(parse_true_false("  FALSE, because..."), Some(false));
        assert_eq!(parse_true_false("**True**"), Some(true));
        assert_eq!(
            parse_true_false("- **Conclusion**: False. While large..."),
            Some(false)
        );
        assert_eq!(parse_true_false("Conclusion: true."), Some(true));
        assert_eq!(parse_true_false("The claim is untrue"), None);
        assert_eq!(parse_true_false("I cannot verify this"), None);
        assert_eq!(parse_true_false(""), None);
    }

    #[test]
    fn nli_probe_requires_three_trues() {
        let k = knowledge(KnowledgeType::T1, "Tom Gores", "owne_s", "Detroit Pistons");
        let yes = ScriptedBackend::new(vec![rule(
            "**Claim**: Tom Gores, owne_s, Detroit Pistons",
            &["True."],
        )]);
        let out = probe_knowledge_nli(&yes, "q1", &k, 42);
        assert!(out.embedded);
        assert_eq!(out.votes, vec![true, true, true]);

        let wobbly = ScriptedBackend::new(vec![rule("**Claim**", &["True.", "False.", "True."])]);
        let out = probe_knowledge_nli(&wobbly, "q1", &k, 42);
        assert!(!out.embedded);
        assert_eq!(out.votes, vec![true, false, true]);
    }

    #[test]
    fn qa_probe_needs_all_three_objects_back() {
        let k = knowledge(KnowledgeType::T1, "Tom Gores", "owne_s", "Detroit Pistons");
        let good = ScriptedBackend::new(vec![rule(
            "What is the owne_s of Tom Gores?",
            &["- Short Answer: Detroit Pistons."],
        )]);
        let out = probe_knowledge_qa(&good, "q1", &k, 42);
        assert!(out.embedded, "{out:?}");
        assert_eq!(out.votes, vec![true, true, true]);
        assert_eq!(out.responses.len(), 3);

        let flaky = ScriptedBackend::new(vec![rule(
            "What is the owne_s of Tom Gores?",
            &[
                "- Short Answer: Detroit Pistons.",
                "- Short Answer: Hooper.",
            ],
        )]);
        let out = probe_knowledge_qa(&flaky, "q1", &k, 42);
        assert!(!out.embedded);
        assert_eq!(out.votes, vec![true, false, true]);
    }

    #[test]
    fn qa_probe_rejects_masked_objects_and_chains() {
        let masked = AwakeningKnowledge::new(
            KnowledgeType::T7,
            vec![Triple::new(
                crate::kg::Node::Entity(Entity::from_label("X").unwrap()),
                Relation::from_label("r").unwrap(),
                crate::kg::Node::Masked,
            )
            .unwrap()],
            Provenance::Retrieved,
        );
        let backend = ScriptedBackend::new(vec![rule("", &["anything"])]);
        let out = probe_knowledge_qa(&backend, "q1", &masked, 42);
        assert!(out.failed);
        assert!(!out.embedded);

        let chain = AwakeningKnowledge::new(
            KnowledgeType::T6,
            vec![
                Triple::of_entities(
                    Entity::from_label("a").unwrap(),
                    Relation::from_label("r").unwrap(),
                    Entity::from_label("z").unwrap(),
                ),
                Triple::of_entities(
                    Entity::from_label("z").unwrap(),
                    Relation::from_label("s").unwrap(),
                    Entity::from_label("b").unwrap(),
                ),
            ],
            Provenance::Subgraph,
        );
        let out = probe_knowledge_qa(&backend, "q1", &chain, 42);
        assert!(out.failed);
        assert!(out.error.unwrap().contains("exactly one triple"));
    }

    #[test]
    fn probe_failure_is_recorded_not_fatal() {
        struct Broken;
        impl ChatBackend for Broken {
            fn complete(
                &self,
                _req: &ChatRequest,
            ) -> crate::error::Result<crate::gateway::ChatResponse> {
                Err(CoreError::Backend {
                    msg: "down".into(),
                    retryable: false,
                })
            }
            fn name(&self) -> &str {
                "broken"
            }
        }
        let k = knowledge(KnowledgeType::T2, "a", "r", "b");
        let out = probe_knowledge_nli(&Broken, "q1", &k, 42);
        assert!(out.failed);
        assert!(!out.embedded);
        assert!(out.error.unwrap().contains("down"));

        let rec = select_one(&Broken, &question("q1", "Q?", &["A"]), 42);
        assert!(rec.failed);
        assert_eq!(rec.split, SplitTag::Unknown);
    }
}
