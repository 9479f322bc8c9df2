//! Knowledge-graph store: triples, adjacency, two-hop neighborhoods, and
//! entity masking.
//!
//! Graphs are flat lists of labeled triples with id-keyed adjacency on both
//! endpoints. Everything downstream (variant generation, retrieval, masking)
//! works on this one representation; iteration order is the load order, and
//! all derived orderings are made explicit so runs are reproducible.

mod load;
mod mask;
mod subgraph;

pub use load::{load_triples, serialize_tsv, LoadStats, TripleFormat};
pub use mask::{mask_entities, MaskStats};
pub use subgraph::two_hop_subgraph;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::text::normalize_light;

/// The literal that stands in for a hidden entity in serialized triples and
/// rendered knowledge.
pub const MASK_SENTINEL: &str = "[MASKED]";

/// A graph node with a stable identifier and a human-readable surface form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub label: String,
}

impl Entity {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let label = label.into();
        if id.is_empty() {
            return Err(CoreError::Invalid("entity id must be non-empty".into()));
        }
        if label.trim().is_empty() {
            return Err(CoreError::Invalid(format!(
                "entity {id} has an empty label"
            )));
        }
        Ok(Entity { id, label })
    }

    /// Both id and label set to the same string; used by loaders when a
    /// format carries no separate ids.
    pub fn from_label(label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        Entity::new(label.clone(), label)
    }
}

/// A relation with a stable identifier and a surface form. Loaders without a
/// relation-id column use the label as the id. The label `instance-of` is
/// reserved for type assertions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub id: String,
    pub label: String,
}

impl Relation {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let label = label.into();
        if id.is_empty() || label.trim().is_empty() {
            return Err(CoreError::Invalid(
                "relation id/label must be non-empty".into(),
            ));
        }
        Ok(Relation { id, label })
    }

    pub fn from_label(label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        Relation::new(label.clone(), label)
    }
}

/// Relation label reserved for type assertions.
pub const INSTANCE_OF: &str = "instance-of";

/// A triple endpoint: a concrete entity or the mask sentinel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Node {
    Entity(Entity),
    Masked,
}

impl Node {
    pub fn id(&self) -> &str {
        match self {
            Node::Entity(e) => &e.id,
            Node::Masked => MASK_SENTINEL,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Node::Entity(e) => &e.label,
            Node::Masked => MASK_SENTINEL,
        }
    }

    pub fn is_masked(&self) -> bool {
        matches!(self, Node::Masked)
    }

    pub fn as_entity(&self) -> Option<&Entity> {
        match self {
            Node::Entity(e) => Some(e),
            Node::Masked => None,
        }
    }
}

/// A directed, labeled edge. At most one endpoint may be masked.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: Node,
    pub relation: Relation,
    pub object: Node,
}

impl Triple {
    pub fn new(subject: Node, relation: Relation, object: Node) -> Result<Self> {
        if subject.is_masked() && object.is_masked() {
            return Err(CoreError::Invalid(
                "a triple may mask at most one endpoint".into(),
            ));
        }
        Ok(Triple {
            subject,
            relation,
            object,
        })
    }

    pub fn of_entities(subject: Entity, relation: Relation, object: Entity) -> Self {
        Triple {
            subject: Node::Entity(subject),
            relation,
            object: Node::Entity(object),
        }
    }

    /// Key under which duplicates are collapsed at load time.
    pub fn dedup_key(&self) -> (String, String, String) {
        (
            self.subject.id().to_string(),
            self.relation.id.clone(),
            self.object.id().to_string(),
        )
    }
}

/// An in-memory triple store with adjacency on both endpoints.
///
/// `out_adjacency` maps a node id to the indices of triples where it is the
/// subject; `in_adjacency` does the same for objects. Every triple appears in
/// exactly one list of each map, so the total number of adjacency entries is
/// twice the triple count.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    out_adjacency: HashMap<String, Vec<usize>>,
    in_adjacency: HashMap<String, Vec<usize>>,
    seen: HashSet<(String, String, String)>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        KnowledgeGraph::default()
    }

    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut kg = KnowledgeGraph::new();
        for t in triples {
            kg.insert(t);
        }
        kg
    }

    /// Adds a triple unless an identical one (by ids) is already present.
    /// Returns true when the triple was new.
    pub fn insert(&mut self, triple: Triple) -> bool {
        let key = triple.dedup_key();
        if !self.seen.insert(key) {
            return false;
        }
        let idx = self.triples.len();
        self.out_adjacency
            .entry(triple.subject.id().to_string())
            .or_default()
            .push(idx);
        self.in_adjacency
            .entry(triple.object.id().to_string())
            .or_default()
            .push(idx);
        self.triples.push(triple);
        true
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple(&self, idx: usize) -> &Triple {
        &self.triples[idx]
    }

    /// Indices of triples with `node_id` as subject, in insertion order.
    pub fn outgoing(&self, node_id: &str) -> &[usize] {
        self.out_adjacency.get(node_id).map_or(&[], Vec::as_slice)
    }

    /// Indices of triples with `node_id` as object, in insertion order.
    pub fn incoming(&self, node_id: &str) -> &[usize] {
        self.in_adjacency.get(node_id).map_or(&[], Vec::as_slice)
    }

    /// Indices of triples touching `node_id` on either end, deduplicated
    /// (self-loops appear once), in ascending order.
    pub fn incident(&self, node_id: &str) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .outgoing(node_id)
            .iter()
            .chain(self.incoming(node_id))
            .copied()
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Looks up an entity by id, falling back to a case- and
    /// whitespace-insensitive label scan.
    pub fn resolve_entity(&self, id_or_label: &str) -> Option<&Entity> {
        let norm = normalize_light(id_or_label);
        let mut by_label = None;
        for t in &self.triples {
            for node in [&t.subject, &t.object] {
                if let Node::Entity(e) = node {
                    if e.id == id_or_label {
                        return Some(e);
                    }
                    if by_label.is_none() && normalize_light(&e.label) == norm {
                        by_label = Some(e);
                    }
                }
            }
        }
        by_label
    }
}

/// The annotated reasoning chain behind a question: one or two hops that join
/// end to end. The final object is the answer entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldPath {
    hops: Vec<(Entity, Relation, Entity)>,
}

impl GoldPath {
    pub fn new(hops: Vec<(Entity, Relation, Entity)>) -> Result<Self> {
        if hops.is_empty() || hops.len() > 2 {
            return Err(CoreError::Invalid(format!(
                "gold path must have 1 or 2 hops, got {}",
                hops.len()
            )));
        }
        if hops.len() == 2 && hops[0].2.id != hops[1].0.id {
            return Err(CoreError::Invalid(format!(
                "gold path does not chain: hop 1 ends at {} but hop 2 starts at {}",
                hops[0].2.id, hops[1].0.id
            )));
        }
        Ok(GoldPath { hops })
    }

    pub fn hops(&self) -> &[(Entity, Relation, Entity)] {
        &self.hops
    }

    /// The question's head entity.
    pub fn start(&self) -> &Entity {
        &self.hops[0].0
    }

    /// The entity the path terminates at.
    pub fn answer(&self) -> &Entity {
        &self.hops[self.hops.len() - 1].2
    }

    pub fn first_relation(&self) -> &Relation {
        &self.hops[0].1
    }

    pub fn second_relation(&self) -> Option<&Relation> {
        self.hops.get(1).map(|h| &h.1)
    }

    /// The entity bridging hop 1 and hop 2; for single-hop paths this is the
    /// answer itself.
    pub fn bridge(&self) -> &Entity {
        &self.hops[0].2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ent(s: &str) -> Entity {
        Entity::from_label(s).unwrap()
    }

    pub(crate) fn rel(s: &str) -> Relation {
        Relation::from_label(s).unwrap()
    }

    pub(crate) fn tr(s: &str, r: &str, o: &str) -> Triple {
        Triple::of_entities(ent(s), rel(r), ent(o))
    }

    #[test]
    fn insert_dedups_by_ids() {
        let mut kg = KnowledgeGraph::new();
        assert!(kg.insert(tr("a", "r1", "b")));
        assert!(!kg.insert(tr("a", "r1", "b")));
        assert!(kg.insert(tr("a", "r1", "c")));
        assert_eq!(kg.len(), 2);
    }

    #[test]
    fn adjacency_covers_every_triple_twice() {
        let kg = KnowledgeGraph::from_triples([
            tr("a", "r1", "b"),
            tr("b", "r2", "c"),
            tr("c", "r3", "a"),
        ]);
        let out_total: usize = ["a", "b", "c"].iter().map(|n| kg.outgoing(n).len()).sum();
        let in_total: usize = ["a", "b", "c"].iter().map(|n| kg.incoming(n).len()).sum();
        assert_eq!(out_total, kg.len());
        assert_eq!(in_total, kg.len());
    }

    #[test]
    fn incident_includes_both_directions_once() {
        let kg = KnowledgeGraph::from_triples([
            tr("a", "r1", "b"),
            tr("c", "r2", "a"),
            tr("a", "loop", "a"),
        ]);
        assert_eq!(kg.incident("a"), vec![0, 1, 2]);
    }

    #[test]
    fn double_mask_is_rejected() {
        let t = Triple::new(Node::Masked, rel("r"), Node::Masked);
        assert!(t.is_err());
    }

    #[test]
    fn gold_path_must_chain() {
        let ok = GoldPath::new(vec![
            (ent("a"), rel("r1"), ent("b")),
            (ent("b"), rel("r2"), ent("c")),
        ])
        .unwrap();
        assert_eq!(ok.start().id, "a");
        assert_eq!(ok.answer().id, "c");
        assert_eq!(ok.bridge().id, "b");
        assert_eq!(ok.second_relation().unwrap().label, "r2");

        let broken = GoldPath::new(vec![
            (ent("a"), rel("r1"), ent("b")),
            (ent("x"), rel("r2"), ent("c")),
        ]);
        assert!(broken.is_err());
    }

    #[test]
    fn single_hop_path_answer_is_bridge() {
        let p = GoldPath::new(vec![(ent("a"), rel("r"), ent("b"))]).unwrap();
        assert_eq!(p.answer().id, "b");
        assert_eq!(p.bridge().id, "b");
        assert!(p.second_relation().is_none());
    }

    #[test]
    fn resolve_entity_prefers_id_then_label() {
        let kg = KnowledgeGraph::from_triples([tr("Tom Gores", "owne_s", "Detroit Pistons")]);
        assert_eq!(kg.resolve_entity("Tom Gores").unwrap().id, "Tom Gores");
        assert_eq!(kg.resolve_entity("tom  gores").unwrap().id, "Tom Gores");
        assert!(kg.resolve_entity("nobody").is_none());
    }
}
