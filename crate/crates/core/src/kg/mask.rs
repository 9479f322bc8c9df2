//! Entity hiding.

use std::collections::HashSet;

use crate::kg::{Entity, KnowledgeGraph, Node, Triple};
use crate::text::normalize_light;

/// Counts of what a masking pass touched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct MaskStats {
    pub subjects_masked: usize,
    pub objects_masked: usize,
    /// Triples whose two endpoints both matched a target; these are dropped
    /// outright because a triple may hide at most one endpoint and a
    /// relation-only fragment carries no signal.
    pub dropped: usize,
}

/// Returns a copy of `kg` with every subject/object that matches a target
/// replaced by the mask sentinel. A node matches when its id equals a target
/// id or its label equals a target label case-insensitively after whitespace
/// normalization. Relations are never masked, and triples that mention no
/// target are carried over unchanged.
pub fn mask_entities(kg: &KnowledgeGraph, targets: &[Entity]) -> (KnowledgeGraph, MaskStats) {
    let ids: HashSet<&str> = targets.iter().map(|e| e.id.as_str()).collect();
    let labels: HashSet<String> = targets.iter().map(|e| normalize_light(&e.label)).collect();

    let matches = |node: &Node| -> bool {
        match node {
            Node::Entity(e) => {
                ids.contains(e.id.as_str()) || labels.contains(&normalize_light(&e.label))
            }
            Node::Masked => false,
        }
    };

    let mut out = KnowledgeGraph::new();
    let mut stats = MaskStats::default();
    for t in kg.triples() {
        let hide_subject = matches(&t.subject);
        let hide_object = matches(&t.object);
        match (hide_subject, hide_object) {
            (true, true) => {
                stats.dropped += 1;
                log::warn!(
                    "dropping triple ({}, {}, {}): both endpoints are mask targets",
                    t.subject.id(),
                    t.relation.label,
                    t.object.id()
                );
            }
            (true, false) => {
                stats.subjects_masked += 1;
                out.insert(Triple {
                    subject: Node::Masked,
                    relation: t.relation.clone(),
                    object: t.object.clone(),
                });
            }
            (false, true) => {
                stats.objects_masked += 1;
                out.insert(Triple {
                    subject: t.subject.clone(),
                    relation: t.relation.clone(),
                    object: Node::Masked,
                });
            }
            (false, false) => {
                out.insert(t.clone());
            }
        }
    }
    (out, stats)
}
