//! Answer scoring, candidate extraction, and evaluation over context arms.
//!
//! An *arm* is one way of prompting for a question: no context at all, a
//! single knowledge snippet, an ordered bundle of snippets, or an external
//! baseline's context. Every question is scored per arm with relaxed
//! accuracy (a gold answer appears somewhere in the response) and Hits@k
//! over an extracted candidate list, then aggregated into per-arm tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::forge::KnowledgeType;
use crate::gateway::{ChatBackend, ChatRequest, DEFAULT_MAX_TOKENS};
use crate::templates;
use crate::text::{contains_normalized, derive_seed};

/// Temperature used for answer generation; probing and selection draw their
/// own sampled temperatures instead.
pub const ANSWER_TEMPERATURE: f64 = 0.7;

/// Relaxed accuracy: 1 when any gold answer occurs in the response after
/// normalization, 0 otherwise.
pub fn acc_r(response: &str, golds: &[String]) -> u8 {
    u8::from(golds.iter().any(|g| contains_normalized(response, g)))
}

/// Pulls an ordered candidate answer list of up to `k` entries out of a
/// model response.
///
/// Precedence: numbered list lines (`1.` / `1)`) win; otherwise bullet
/// lines (`-`, `*`, `•`) that are not the short-answer line itself;
/// otherwise the text after the last `short answer:` marker; otherwise the
/// whole trimmed response. Candidates keep their raw surface form, so
/// `"Paris."` stays `"Paris."`; normalization happens at match time.
pub fn extract_candidates(response: &str, k: usize) -> Vec<String> {
    let numbered: Vec<String> = response
        .lines()
        .filter_map(parse_numbered_line)
        .take(k)
        .collect();
    if !numbered.is_empty() {
        return numbered;
    }

    let bullets: Vec<String> = response
        .lines()
        .filter_map(parse_bullet_line)
        .filter(|c| !is_short_answer_content(c))
        .take(k)
        .collect();
    if !bullets.is_empty() {
        return bullets;
    }

    if let Some(tail) = after_last_marker(response, "short answer:") {
        let tail = tail.trim();
        if !tail.is_empty() {
            return vec![tail.to_string()];
        }
    }

    let whole = response.trim();
    if whole.is_empty() {
        Vec::new()
    } else {
        vec![whole.to_string()]
    }
}

pub(crate) fn parse_numbered_line(line: &str) -> Option<String> {
    let rest = line.trim_start();
    let digits = rest.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        return None;
    }
    let after = &rest[digits..];
    let after = after
        .strip_prefix('.')
        .or_else(|| after.strip_prefix(')'))?;
    let content = after.strip_prefix(' ')?.trim();
    if content.is_empty() {
        None
    } else {
        Some(content.to_string())
    }
}

fn parse_bullet_line(line: &str) -> Option<String> {
    let rest = line.trim_start();
    let after = rest
        .strip_prefix("- ")
        .or_else(|| rest.strip_prefix("* "))
        .or_else(|| rest.strip_prefix("• "))?;
    let content = after.trim();
    if content.is_empty() {
        None
    } else {
        Some(content.to_string())
    }
}

fn is_short_answer_content(content: &str) -> bool {
    let stripped: String = content
        .chars()
        .skip_while(|c| !c.is_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    stripped.starts_with("short answer")
}

fn after_last_marker<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    let lower = text.to_lowercase();
    let pos = lower.rfind(marker)?;
    Some(&text[pos + marker.len()..])
}

/// Hits@k: 1 when any of the first `k` candidates contains a gold answer
/// under the same normalization as [`acc_r`].
pub fn hits_at_k(candidates: &[String], golds: &[String], k: usize) -> u8 {
    u8::from(
        candidates
            .iter()
            .take(k)
            .any(|c| golds.iter().any(|g| contains_normalized(c, g))),
    )
}

/// One way of prompting for a question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arm {
    /// Plain short-answer prompting, no context.
    NoRag,
    /// A single knowledge snippet of the given type.
    Single(KnowledgeType),
    /// An ordered bundle of snippet types shown together.
    Combo(Vec<KnowledgeType>),
    /// An external baseline, named by its label.
    Baseline(String),
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Arm::NoRag => f.write_str("NO_RAG"),
            Arm::Single(t) => write!(f, "{t}"),
            Arm::Combo(ts) => {
                let parts: Vec<String> = ts.iter().map(|t| t.to_string()).collect();
                f.write_str(&parts.join("+"))
            }
            Arm::Baseline(label) => f.write_str(label),
        }
    }
}

/// Builds the generation prompt for an arm: the bare short-answer prompt
/// when there is no context, the knowledge-conditioned prompt otherwise,
/// optionally extended with the candidate-list instruction.
pub fn build_awaken_prompt(
    question: &str,
    knowledge: Option<&str>,
    elicit_candidates: bool,
) -> String {
    let prompt = match knowledge {
        None => templates::short_answer_prompt(question),
        Some(k) => templates::awaken_prompt(k, question),
    };
    if elicit_candidates {
        templates::with_candidate_list(&prompt)
    } else {
        prompt
    }
}

/// Joins multiple rendered snippets into one knowledge string for a combo
/// arm, keeping the snippet order.
pub fn join_knowledge(rendered: &[String]) -> String {
    rendered.join("; ")
}

/// Everything needed to run one (question, arm) cell.
#[derive(Debug, Clone)]
pub struct AwakenCase {
    pub question_id: String,
    pub question: String,
    pub golds: Vec<String>,
    pub arm: String,
    /// Joined rendered knowledge; `None` means no context.
    pub knowledge: Option<String>,
}

/// Outcome of one (question, arm) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AwakenResult {
    pub question_id: String,
    pub arm: String,
    pub response: String,
    pub candidates: Vec<String>,
    /// Hits@k for every k in `1..=k_max`.
    pub hits: BTreeMap<usize, u8>,
    pub acc: u8,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AwakenOptions {
    pub temperature: f64,
    pub k_max: usize,
    pub elicit_candidates: bool,
    pub max_tokens: u32,
}

impl Default for AwakenOptions {
    fn default() -> Self {
        AwakenOptions {
            temperature: ANSWER_TEMPERATURE,
            k_max: 10,
            elicit_candidates: false,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

/// Runs one cell: prompt, complete, extract, score. Backend failures come
/// back as a failed record instead of an error so one flaky call cannot
/// sink a whole run.
pub fn evaluate_one(
    backend: &dyn ChatBackend,
    case: &AwakenCase,
    opts: &AwakenOptions,
    master_seed: u64,
) -> AwakenResult {
    let prompt = build_awaken_prompt(
        &case.question,
        case.knowledge.as_deref(),
        opts.elicit_candidates,
    );
    let seed = derive_seed(master_seed, &["awaken", &case.question_id, &case.arm]);
    let outcome = ChatRequest::new(prompt, opts.temperature)
        .map(|r| r.with_max_tokens(opts.max_tokens).with_seed(seed))
        .and_then(|req| backend.complete(&req));
    match outcome {
        Ok(resp) => {
            let candidates = extract_candidates(&resp.text, opts.k_max);
            let hits: BTreeMap<usize, u8> = (1..=opts.k_max)
                .map(|k| (k, hits_at_k(&candidates, &case.golds, k)))
                .collect();
            AwakenResult {
                question_id: case.question_id.clone(),
                arm: case.arm.clone(),
                acc: acc_r(&resp.text, &case.golds),
                response: resp.text,
                candidates,
                hits,
                failed: false,
                error: None,
            }
        }
        Err(e) => {
            log::warn!(
                "completion failed for {} [{}]: {e}",
                case.question_id,
                case.arm
            );
            AwakenResult {
                question_id: case.question_id.clone(),
                arm: case.arm.clone(),
                response: String::new(),
                candidates: Vec::new(),
                hits: BTreeMap::new(),
                acc: 0,
                failed: true,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Runs all cells in order. Intentionally sequential: scripted backends
/// replay response cycles whose order must not depend on thread schedule.
pub fn evaluate_awakening(
    backend: &dyn ChatBackend,
    cases: &[AwakenCase],
    opts: &AwakenOptions,
    master_seed: u64,
) -> Vec<AwakenResult> {
    cases
        .iter()
        .map(|c| evaluate_one(backend, c, opts, master_seed))
        .collect()
}

/// How to pick the question population when arms answered different sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Each arm over every question it answered.
    Original,
    /// Every arm restricted to the questions all arms answered.
    Intersection,
}

/// One aggregated report row. Percentages are stored in tenths of a percent
/// so rendering never touches floating point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmRow {
    pub label: String,
    pub f: usize,
    pub hits1_pct10: u32,
    pub hits10_pct10: u32,
}

impl ArmRow {
    pub fn hits1_display(&self) -> String {
        fmt_pct10(self.hits1_pct10)
    }

    pub fn hits10_display(&self) -> String {
        fmt_pct10(self.hits10_pct10)
    }
}

/// Integer half-up percentage in tenths: `round(100 * hits / n, 1)` without
/// floats.
pub fn pct10(hits: usize, n: usize) -> u32 {
    if n == 0 {
        return 0;
    }
    ((1000 * hits + n / 2) / n) as u32
}

fn fmt_pct10(p: u32) -> String {
    format!("{}.{}", p / 10, p % 10)
}

fn hit_of(r: &AwakenResult, k: usize) -> usize {
    r.hits.get(&k).copied().unwrap_or(0) as usize
}

/// Sort key giving reports the conventional table order: the no-context
/// row first, then single knowledge types in their natural order, then
/// combos, then named baselines. Within a class, labels sort
/// lexicographically, which makes aggregation independent of result order.
fn arm_rank(label: &str) -> (u8, usize, String) {
    if label == "NO_RAG" {
        return (0, 0, label.to_string());
    }
    if let Ok(t) = label.parse::<KnowledgeType>() {
        let idx = KnowledgeType::ALL
            .iter()
            .position(|x| *x == t)
            .unwrap_or(usize::MAX);
        return (1, idx, label.to_string());
    }
    if label.contains('+') {
        return (2, 0, label.to_string());
    }
    (3, 0, label.to_string())
}

/// Groups results by arm label and computes F, Hits@1, and Hits@10. Rows
/// come out in canonical arm order, so the table is the same no matter how
/// the results were ordered. Failed records never count toward F. In
/// intersection mode every arm is restricted to the question ids all arms
/// answered; an empty intersection keeps the rows with F = 0 and warns.
pub fn aggregate(results: &[AwakenResult], mode: AggregationMode) -> Vec<ArmRow> {
    let mut by_arm: HashMap<String, Vec<&AwakenResult>> = HashMap::new();
    for r in results {
        if r.failed {
            continue;
        }
        by_arm.entry(r.arm.clone()).or_default().push(r);
    }
    let mut order: Vec<String> = by_arm.keys().cloned().collect();
    order.sort_by_key(|l| arm_rank(l));

    let common: Option<BTreeSet<String>> = match mode {
        AggregationMode::Original => None,
        AggregationMode::Intersection => {
            let mut sets = order.iter().map(|label| {
                by_arm[label]
                    .iter()
                    .map(|r| r.question_id.clone())
                    .collect::<BTreeSet<String>>()
            });
            let first = sets.next();
            let common =
                first.map(|f| sets.fold(f, |acc, s| acc.intersection(&s).cloned().collect()));
            if let Some(c) = &common {
                if c.is_empty() && !order.is_empty() {
                    log::warn!("intersection of arms is empty; every row reports F = 0");
                }
            }
            common
        }
    };

    order
        .iter()
        .map(|label| {
            let rows: Vec<&&AwakenResult> = by_arm[label]
                .iter()
                .filter(|r| common.as_ref().is_none_or(|c| c.contains(&r.question_id)))
                .collect();
            let n = rows.len();
            let h1: usize = rows.iter().map(|r| hit_of(r, 1)).sum();
            let h10: usize = rows.iter().map(|r| hit_of(r, 10)).sum();
            ArmRow {
                label: label.clone(),
                f: n,
                hits1_pct10: pct10(h1, n),
                hits10_pct10: pct10(h10, n),
            }
        })
        .collect()
}

/// Markdown report: one table, no timestamps, byte-stable across reruns.
pub fn render_report_md(rows: &[ArmRow], mode: AggregationMode) -> String {
    let mut out = String::from("# Awakening evaluation\n\n");
    out.push_str(match mode {
        AggregationMode::Original => "Population: every question each arm answered.\n\n",
        AggregationMode::Intersection => "Population: questions answered by all arms.\n\n",
    });
    out.push_str("| ktype | F | Hits@1 | Hits@10 |\n|---|---|---|---|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            r.label,
            r.f,
            r.hits1_display(),
            r.hits10_display()
        ));
    }
    out
}

/// CSV report with a fixed header.
pub fn render_report_csv(rows: &[ArmRow]) -> String {
    let mut out = String::from("ktype,F,hits1_pct,hits10_pct\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.label,
            r.f,
            r.hits1_display(),
            r.hits10_display()
        ));
    }
    out
}
