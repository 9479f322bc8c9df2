//! Two-hop neighborhood extraction.

use std::collections::HashSet;

use crate::kg::{KnowledgeGraph, Triple};

/// Collects every triple within two undirected-incidence hops of `center`:
/// first the triples touching `center` on either end, then the triples
/// touching any entity those first-hop triples introduced.
///
/// The result is ordered by `(hop distance, subject id, relation id,
/// object id)` and truncated at `cap`, so truncation keeps the nearest and
/// lexicographically smallest triples and is stable across runs.
pub fn two_hop_subgraph(kg: &KnowledgeGraph, center: &str, cap: usize) -> Vec<Triple> {
    let mut picked: Vec<(u8, usize)> = Vec::new();
    let mut seen: HashSet<usize> = HashSet::new();

    let hop1 = kg.incident(center);
    let mut frontier: HashSet<String> = HashSet::new();
    for &idx in &hop1 {
        if seen.insert(idx) {
            picked.push((1, idx));
        }
        let t = kg.triple(idx);
        for node in [&t.subject, &t.object] {
            if !node.is_masked() && node.id() != center {
                frontier.insert(node.id().to_string());
            }
        }
    }

    let mut frontier: Vec<String> = frontier.into_iter().collect();
    frontier.sort();
    for node_id in &frontier {
        for idx in kg.incident(node_id) {
            if seen.insert(idx) {
                picked.push((2, idx));
            }
        }
    }

    picked.sort_by(|a, b| {
        let ta = kg.triple(a.1);
        let tb = kg.triple(b.1);
        (a.0, ta.subject.id(), &ta.relation.id, ta.object.id()).cmp(&(
            b.0,
            tb.subject.id(),
            &tb.relation.id,
            tb.object.id(),
        ))
    });
    picked.truncate(cap);
    picked
        .into_iter()
        .map(|(_, idx)| kg.triple(idx).clone())
        .collect()
}
