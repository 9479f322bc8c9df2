//! Prompt templates and slot filling.
//!
//! Template text lives in `templates/*.txt` and is compiled in verbatim;
//! `{}` marks a slot, filled left to right. The four templates that drive
//! the pipeline's core behaviors (short answer, claim probing, awakening,
//! entity-relation extraction) are fixed wording, including their original
//! orthography, and are pinned byte-for-byte by golden-file tests; edit them
//! only if you mean to shift every recorded run. The remaining templates
//! (candidate-list extension, disambiguation, type inference, query
//! decomposition) are local conventions and safe to reword.

use crate::error::{CoreError, Result};

pub const SHORT_ANSWER: &str = include_str!("../templates/short_answer.txt");
pub const PROBE_CLAIM: &str = include_str!("../templates/probe_claim.txt");
pub const AWAKEN: &str = include_str!("../templates/awaken.txt");
pub const EXTRACT_RELATION: &str = include_str!("../templates/extract_relation.txt");
pub const CANDIDATE_LIST_EXTENSION: &str =
    include_str!("../templates/candidate_list_extension.txt");
pub const DISAMBIGUATE: &str = include_str!("../templates/disambiguate.txt");
pub const INFER_TYPE: &str = include_str!("../templates/infer_type.txt");
pub const QD_DECOMPOSE: &str = include_str!("../templates/qd_decompose.txt");

/// Replaces each `{}` in `template` with the corresponding entry of `args`.
/// The number of slots must match exactly.
pub fn fill(template: &str, args: &[&str]) -> Result<String> {
    let parts: Vec<&str> = template.split("{}").collect();
    if parts.len() != args.len() + 1 {
        return Err(CoreError::Invalid(format!(
            "template has {} slots but {} arguments were given",
            parts.len() - 1,
            args.len()
        )));
    }
    let mut out =
        String::with_capacity(template.len() + args.iter().map(|a| a.len()).sum::<usize>());
    for (i, part) in parts.iter().enumerate() {
        out.push_str(part);
        if i < args.len() {
            out.push_str(args[i]);
        }
    }
    Ok(out)
}

/// The bare short-answer prompt used for answerability selection and
/// knowledge-free evaluation.
pub fn short_answer_prompt(question: &str) -> String {
    fill(SHORT_ANSWER, &[question]).expect("short-answer template has one slot")
}

/// The awakening prompt: knowledge plus question.
pub fn awaken_prompt(knowledge: &str, question: &str) -> String {
    fill(AWAKEN, &[knowledge, question]).expect("awaken template has two slots")
}

/// The claim-verification prompt for knowledge probing.
pub fn probe_claim_prompt(claim: &str) -> String {
    fill(PROBE_CLAIM, &[claim]).expect("probe template has one slot")
}

/// The entity-relation extraction prompt.
pub fn extract_relation_prompt(question: &str, entity: &str) -> String {
    fill(EXTRACT_RELATION, &[question, entity]).expect("extraction template has two slots")
}

/// Appends the candidate-list elicitation to a prompt.
pub fn with_candidate_list(prompt: &str) -> String {
    format!("{prompt}\n{CANDIDATE_LIST_EXTENSION}")
}

pub fn disambiguate_prompt(question: &str, entity: &str, numbered_facts: &str) -> String {
    fill(DISAMBIGUATE, &[question, entity, numbered_facts])
        .expect("disambiguation template has three slots")
}

pub fn infer_type_prompt(question: &str, entity: &str, types: &str) -> String {
    fill(INFER_TYPE, &[question, entity, types]).expect("type template has three slots")
}

pub fn qd_decompose_prompt(question: &str) -> String {
    fill(QD_DECOMPOSE, &[question]).expect("decomposition template has one slot")
}
