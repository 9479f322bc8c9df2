//! Knowledge forging: turning a question's gold reasoning path and its
//! two-hop neighborhood into typed context snippets.
//!
//! Eight knowledge shapes are distinguished, all relative to a question with
//! head entity `A` (the entity the question is about), first-hop relation
//! `R1`, intermediate entity `B`, and (for two-hop questions) second-hop
//! relation `R2`:
//!
//! | type | shape                               | description                                |
//! |------|-------------------------------------|--------------------------------------------|
//! | T1   | `(A, R1, B)`                        | the gold first hop                         |
//! | T2   | `(A, Rx, X)`                        | head entity, non-gold outgoing relation    |
//! | T3   | `(X, Rx, A)`                        | head entity, non-gold incoming relation    |
//! | T4   | `(A, instance-of, X)`               | type assertion for the head entity         |
//! | T5   | `(B, Rx, X)`                        | intermediate entity, non-gold outgoing     |
//! | T6   | `(A, Rx, Z); (Z, Ry, B)`            | two-triple chain from head to intermediate |
//! | T7   | `(X, R1, Y)`, `X != A`              | gold first-hop relation, other entities    |
//! | T8   | `(X, R2, Y)`                        | gold second-hop relation, any entities     |
//! | T1*  | `(A, Rt, Y)` from a retrieved `(X, Rt, Y)` | retrieved triple re-anchored on A   |
//!
//! "Non-gold" means the relation label is outside `{R1}` when anchored at
//! the head entity and outside `{R1, R2}` when anchored at the intermediate
//! entity. Candidates are generated in graph order, reranked by similarity
//! to the gold hop's rendering, and any snippet whose rendering contains a
//! gold answer is flagged so it never reaches evaluation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::kg::{GoldPath, KnowledgeGraph, Relation, Triple, INSTANCE_OF};
use crate::text::contains_normalized;

/// The knowledge shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KnowledgeType {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
    T8,
    T1Star,
}

impl KnowledgeType {
    pub const ALL: [KnowledgeType; 9] = [
        KnowledgeType::T1,
        KnowledgeType::T2,
        KnowledgeType::T3,
        KnowledgeType::T4,
        KnowledgeType::T5,
        KnowledgeType::T6,
        KnowledgeType::T7,
        KnowledgeType::T8,
        KnowledgeType::T1Star,
    ];

    /// The types [`generate_variants`] can search for.
    pub const VARIANTS: [KnowledgeType; 7] = [
        KnowledgeType::T2,
        KnowledgeType::T3,
        KnowledgeType::T4,
        KnowledgeType::T5,
        KnowledgeType::T6,
        KnowledgeType::T7,
        KnowledgeType::T8,
    ];
}

impl fmt::Display for KnowledgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KnowledgeType::T1 => "T1",
            KnowledgeType::T2 => "T2",
            KnowledgeType::T3 => "T3",
            KnowledgeType::T4 => "T4",
            KnowledgeType::T5 => "T5",
            KnowledgeType::T6 => "T6",
            KnowledgeType::T7 => "T7",
            KnowledgeType::T8 => "T8",
            KnowledgeType::T1Star => "T1STAR",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for KnowledgeType {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_uppercase().as_str() {
            "T1" => Ok(KnowledgeType::T1),
            "T2" => Ok(KnowledgeType::T2),
            "T3" => Ok(KnowledgeType::T3),
            "T4" => Ok(KnowledgeType::T4),
            "T5" => Ok(KnowledgeType::T5),
            "T6" => Ok(KnowledgeType::T6),
            "T7" => Ok(KnowledgeType::T7),
            "T8" => Ok(KnowledgeType::T8),
            "T1STAR" | "T1*" => Ok(KnowledgeType::T1Star),
            other => Err(CoreError::Invalid(format!(
                "unknown knowledge type {other:?}"
            ))),
        }
    }
}

/// Where a knowledge snippet came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Taken straight from the question's annotated reasoning path.
    GoldPath,
    /// Found in the two-hop neighborhood by pattern search.
    Subgraph,
    /// Returned by embedding retrieval over an incomplete graph.
    Retrieved,
    /// Produced by asking the model (type inference).
    Inferred,
}

/// A typed, rendered context snippet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AwakeningKnowledge {
    pub ktype: KnowledgeType,
    pub triples: Vec<Triple>,
    pub rendered: String,
    pub provenance: Provenance,
    /// Set when the rendering contains a gold answer; filtered snippets
    /// never reach probing or evaluation.
    pub filtered: bool,
}

impl AwakeningKnowledge {
    pub fn new(ktype: KnowledgeType, triples: Vec<Triple>, provenance: Provenance) -> Self {
        let rendered = render_knowledge(&triples);
        AwakeningKnowledge {
            ktype,
            triples,
            rendered,
            provenance,
            filtered: false,
        }
    }
}

/// Renders triples as `subject, relation, object`, joining multiple triples
/// with `"; "`. Labels containing the delimiters `,` or `;` have them
/// replaced by `/` so the rendering parses back unambiguously.
pub fn render_knowledge(triples: &[Triple]) -> String {
    triples
        .iter()
        .map(|t| {
            format!(
                "{}, {}, {}",
                sanitize_label(t.subject.label()),
                sanitize_label(&t.relation.label),
                sanitize_label(t.object.label())
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn sanitize_label(label: &str) -> String {
    label.replace([',', ';'], "/")
}

/// Pulls the gold first hop out of a reasoning path: the T1 triple and, for
/// two-hop paths, the second-hop relation.
pub fn extract_gold_hop(path: &GoldPath) -> (Triple, Option<Relation>) {
    let (s, r, o) = &path.hops()[0];
    let t1 = Triple::of_entities(s.clone(), r.clone(), o.clone());
    (t1, path.second_relation().cloned())
}

/// The gold first hop as knowledge.
pub fn gold_knowledge(path: &GoldPath) -> AwakeningKnowledge {
    let (t1, _) = extract_gold_hop(path);
    AwakeningKnowledge::new(KnowledgeType::T1, vec![t1], Provenance::GoldPath)
}

/// Scans `kg` for every candidate of the requested variant shape, in a
/// deterministic order (graph order; for chains, ordered by first leg then
/// second leg).
///
/// `kg` is expected to already be the relevant neighborhood (the union of
/// the head and intermediate entities' two-hop subgraphs); the scan itself
/// considers every triple it is given.
pub fn generate_variants(
    kg: &KnowledgeGraph,
    path: &GoldPath,
    ktype: KnowledgeType,
) -> Result<Vec<AwakeningKnowledge>> {
    let a = path.start();
    let b = path.bridge();
    let r1 = &path.first_relation().label;
    let r2 = path.second_relation().map(|r| r.label.clone());

    let single = |pred: &dyn Fn(&Triple) -> bool| -> Vec<AwakeningKnowledge> {
        kg.triples()
            .iter()
            .filter(|t| pred(t))
            .map(|t| AwakeningKnowledge::new(ktype, vec![t.clone()], Provenance::Subgraph))
            .collect()
    };

    let out = match ktype {
        KnowledgeType::T2 => single(&|t| t.subject.id() == a.id && t.relation.label != *r1),
        KnowledgeType::T3 => single(&|t| t.object.id() == a.id && t.relation.label != *r1),
        KnowledgeType::T4 => single(&|t| t.subject.id() == a.id && t.relation.label == INSTANCE_OF),
        KnowledgeType::T5 => single(&|t| {
            t.subject.id() == b.id
                && t.relation.label != *r1
                && r2.as_deref() != Some(t.relation.label.as_str())
        }),
        KnowledgeType::T6 => {
            let mut chains = Vec::new();
            for first in kg.triples() {
                if first.subject.id() != a.id {
                    continue;
                }
                let z = first.object.id();
                if first.object.is_masked() || z == a.id || z == b.id {
                    continue;
                }
                for second in kg.triples() {
                    if second.subject.id() == z && second.object.id() == b.id {
                        chains.push(AwakeningKnowledge::new(
                            ktype,
                            vec![first.clone(), second.clone()],
                            Provenance::Subgraph,
                        ));
                    }
                }
            }
            chains
        }
        KnowledgeType::T7 => single(&|t| t.relation.label == *r1 && t.subject.id() != a.id),
        KnowledgeType::T8 => match &r2 {
            Some(r2) => single(&|t| t.relation.label == *r2),
            None => Vec::new(),
        },
        KnowledgeType::T1 | KnowledgeType::T1Star => {
            return Err(CoreError::UnsupportedKnowledgeType(ktype.to_string()))
        }
    };
    Ok(out)
}

/// Scores string similarity; used to pick the variant closest to the gold
/// hop.
pub trait SimilarityScorer: Send + Sync {
    fn score(&self, root: &str, candidate: &str) -> Result<f64>;
}

/// Cosine similarity over an embedding provider.
pub struct CosineScorer<'a> {
    provider: &'a dyn crate::gateway::EmbeddingProvider,
}

impl<'a> CosineScorer<'a> {
    pub fn new(provider: &'a dyn crate::gateway::EmbeddingProvider) -> Self {
        CosineScorer { provider }
    }
}

impl SimilarityScorer for CosineScorer<'_> {
    fn score(&self, root: &str, candidate: &str) -> Result<f64> {
        let vs = self
            .provider
            .embed(&[root.to_string(), candidate.to_string()])?;
        Ok(crate::index::dot(vs[0].as_slice(), vs[1].as_slice()) as f64)
    }
}

/// Picks the candidate most similar to `root`. Ties keep the earliest
/// candidate, so generation order decides among equals.
pub fn rerank_top1(
    candidates: &[AwakeningKnowledge],
    root: &str,
    scorer: &dyn SimilarityScorer,
) -> Result<AwakeningKnowledge> {
    if candidates.is_empty() {
        return Err(CoreError::EmptyCandidates);
    }
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let s = scorer.score(root, &c.rendered)?;
        if s > best_score {
            best_score = s;
            best = i;
        }
    }
    Ok(candidates[best].clone())
}

/// Flags knowledge whose rendering contains any gold answer (normalized
/// substring match). Flagged snippets are excluded downstream, so no context
/// handed to evaluation ever leaks the answer.
pub fn filter_answer(mut knowledge: AwakeningKnowledge, golds: &[String]) -> AwakeningKnowledge {
    knowledge.filtered = golds
        .iter()
        .any(|g| contains_normalized(&knowledge.rendered, g));
    knowledge
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Entity, Node};

    fn ent(s: &str) -> Entity {
        Entity::from_label(s).unwrap()
    }

    fn rel(s: &str) -> Relation {
        Relation::from_label(s).unwrap()
    }

    fn tr(s: &str, r: &str, o: &str) -> Triple {
        Triple::of_entities(ent(s), rel(r), ent(o))
    }

    fn two_hop_path() -> GoldPath {
        GoldPath::new(vec![
            (ent("Tom Gores"), rel("owne_s"), ent("Detroit Pistons")),
            (
                ent("Detroit Pistons"),
                rel("championships"),
                ent("2004 NBA Finals"),
            ),
        ])
        .unwrap()
    }

    #[test]
    fn renders_single_triple_with_comma_separators() {
        let k = AwakeningKnowledge::new(
            KnowledgeType::T2,
            vec![tr("Tom Gores", "Organizations founded", "Platinum Equity")],
            Provenance::Subgraph,
        );
        assert_eq!(
            k.rendered,
            "Tom Gores, Organizations founded, Platinum Equity"
        );
    }

    #[test]
    fn renders_chains_with_semicolons() {
        let k = AwakeningKnowledge::new(
            KnowledgeType::T6,
            vec![
                tr("Tom Gores", "type", "Agent"),
                tr("Agent", "Instance", "Detroit Pistons"),
            ],
            Provenance::Subgraph,
        );
        assert_eq!(
            k.rendered,
            "Tom Gores, type, Agent; Agent, Instance, Detroit Pistons"
        );
    }

    #[test]
    fn delimiters_inside_labels_are_replaced() {
        let k = AwakeningKnowledge::new(
            KnowledgeType::T7,
            vec![tr("Greenville Drive", "owne_s", "RB3, LLC")],
            Provenance::Subgraph,
        );
        assert_eq!(k.rendered, "Greenville Drive, owne_s, RB3/ LLC");
    }

    #[test]
    fn rendering_round_trips_for_clean_labels() {
        let triples = vec![
            tr("Tom Gores", "type", "Agent"),
            tr("Agent", "Instance", "Detroit Pistons"),
        ];
        let rendered = render_knowledge(&triples);
        let parsed: Vec<Vec<&str>> = rendered
            .split("; ")
            .map(|part| part.split(", ").collect())
            .collect();
        assert_eq!(
            parsed,
            vec![
                vec!["Tom Gores", "type", "Agent"],
                vec!["Agent", "Instance", "Detroit Pistons"]
            ]
        );
    }

    #[test]
    fn masked_subject_renders_the_sentinel() {
        let t = Triple::new(
            Node::Masked,
            rel("owne_s"),
            Node::Entity(ent("Detroit Pistons")),
        )
        .unwrap();
        assert_eq!(render_knowledge(&[t]), "[MASKED], owne_s, Detroit Pistons");
    }

    #[test]
    fn gold_hop_extraction() {
        let path = two_hop_path();
        let (t1, r2) = extract_gold_hop(&path);
        assert_eq!(t1.subject.label(), "Tom Gores");
        assert_eq!(t1.relation.label, "owne_s");
        assert_eq!(t1.object.label(), "Detroit Pistons");
        assert_eq!(r2.unwrap().label, "championships");

        let single = GoldPath::new(vec![(ent("a"), rel("r"), ent("b"))]).unwrap();
        let (t1, r2) = extract_gold_hop(&single);
        assert_eq!(t1.object.label(), "b");
        assert!(r2.is_none());
    }

    fn sample_kg() -> KnowledgeGraph {
        KnowledgeGraph::from_triples([
            // gold path
            tr("Tom Gores", "owne_s", "Detroit Pistons"),
            tr("Detroit Pistons", "championships", "2004 NBA Finals"),
            // head-entity fodder
            tr("Tom Gores", "Organizations founded", "Platinum Equity"),
            tr("Tom Gores", "instance-of", "Sports Team Owner"),
            tr("Financier", "People With This Profession", "Tom Gores"),
            // chain
            tr("Tom Gores", "type", "Agent"),
            tr("Agent", "Instance", "Detroit Pistons"),
            // intermediate-entity fodder
            tr("Detroit Pistons", "Team Mascot", "Hooper"),
            // same-relation fodder
            tr("Greenville Drive", "owne_s", "RB3, LLC"),
            tr(
                "US men's soccer team",
                "championships",
                "2005 CONCACAF Gold Cup",
            ),
        ])
    }

    fn renderings(ks: &[AwakeningKnowledge]) -> Vec<String> {
        ks.iter().map(|k| k.rendered.clone()).collect()
    }

    #[test]
    fn t2_finds_non_gold_outgoing() {
        let ks = generate_variants(&sample_kg(), &two_hop_path(), KnowledgeType::T2).unwrap();
        let r = renderings(&ks);
        assert!(r.contains(&"Tom Gores, Organizations founded, Platinum Equity".to_string()));
        assert!(
            !r.iter().any(|s| s.contains("owne_s")),
            "gold relation must be excluded: {r:?}"
        );
    }

    #[test]
    fn t3_finds_non_gold_incoming() {
        let ks = generate_variants(&sample_kg(), &two_hop_path(), KnowledgeType::T3).unwrap();
        assert_eq!(
            renderings(&ks),
            vec!["Financier, People With This Profession, Tom Gores"]
        );
    }

    #[test]
    fn t4_finds_type_assertions() {
        let ks = generate_variants(&sample_kg(), &two_hop_path(), KnowledgeType::T4).unwrap();
        assert_eq!(
            renderings(&ks),
            vec!["Tom Gores, instance-of, Sports Team Owner"]
        );
    }

    #[test]
    fn t5_finds_intermediate_outgoing_excluding_gold() {
        let ks = generate_variants(&sample_kg(), &two_hop_path(), KnowledgeType::T5).unwrap();
        assert_eq!(
            renderings(&ks),
            vec!["Detroit Pistons, Team Mascot, Hooper"]
        );
    }

    #[test]
    fn t6_finds_chains_through_a_third_entity() {
        let ks = generate_variants(&sample_kg(), &two_hop_path(), KnowledgeType::T6).unwrap();
        assert_eq!(
            renderings(&ks),
            vec!["Tom Gores, type, Agent; Agent, Instance, Detroit Pistons"]
        );
    }

    #[test]
    fn t7_requires_other_subject_with_gold_relation() {
        let ks = generate_variants(&sample_kg(), &two_hop_path(), KnowledgeType::T7).unwrap();
        assert_eq!(renderings(&ks), vec!["Greenville Drive, owne_s, RB3/ LLC"]);
    }

    #[test]
    fn t8_matches_second_hop_relation_anywhere() {
        let ks = generate_variants(&sample_kg(), &two_hop_path(), KnowledgeType::T8).unwrap();
        let r = renderings(&ks);
        assert!(
            r.contains(&"US men's soccer team, championships, 2005 CONCACAF Gold Cup".to_string())
        );
        // The gold second hop itself matches the shape; the answer filter
        // catches it later.
        assert!(r.contains(&"Detroit Pistons, championships, 2004 NBA Finals".to_string()));
    }

    #[test]
    fn t8_is_empty_for_single_hop_questions() {
        let path = GoldPath::new(vec![(
            ent("Tom Gores"),
            rel("owne_s"),
            ent("Detroit Pistons"),
        )])
        .unwrap();
        let ks = generate_variants(&sample_kg(), &path, KnowledgeType::T8).unwrap();
        assert!(ks.is_empty());
    }

    #[test]
    fn t1_is_not_a_variant() {
        assert!(generate_variants(&sample_kg(), &two_hop_path(), KnowledgeType::T1).is_err());
    }

    struct LengthScorer;

    impl SimilarityScorer for LengthScorer {
        fn score(&self, _root: &str, candidate: &str) -> Result<f64> {
            Ok(candidate.len() as f64)
        }
    }

    struct ConstScorer;

    impl SimilarityScorer for ConstScorer {
        fn score(&self, _root: &str, _candidate: &str) -> Result<f64> {
            Ok(0.5)
        }
    }

    #[test]
    fn rerank_picks_highest_and_breaks_ties_by_order() {
        let ks = vec![
            AwakeningKnowledge::new(
                KnowledgeType::T2,
                vec![tr("a", "r", "bb")],
                Provenance::Subgraph,
            ),
            AwakeningKnowledge::new(
                KnowledgeType::T2,
                vec![tr("aaaa", "rrrr", "bbbb")],
                Provenance::Subgraph,
            ),
        ];
        let top = rerank_top1(&ks, "root", &LengthScorer).unwrap();
        assert_eq!(top.rendered, "aaaa, rrrr, bbbb");

        let top = rerank_top1(&ks, "root", &ConstScorer).unwrap();
        assert_eq!(
            top.rendered, "a, r, bb",
            "ties must keep the earliest candidate"
        );

        assert!(rerank_top1(&[], "root", &ConstScorer).is_err());
    }

    #[test]
    fn rerank_is_invariant_under_positive_scaling() {
        struct Scaled(f64);
        impl SimilarityScorer for Scaled {
            fn score(&self, _root: &str, candidate: &str) -> Result<f64> {
                Ok(self.0 * candidate.len() as f64)
            }
        }
        let ks: Vec<AwakeningKnowledge> = [("a", "r", "b"), ("aa", "rr", "bb"), ("x", "y", "zzz")]
            .iter()
            .map(|(s, r, o)| {
                AwakeningKnowledge::new(KnowledgeType::T5, vec![tr(s, r, o)], Provenance::Subgraph)
            })
            .collect();
        let base = rerank_top1(&ks, "root", &Scaled(1.0)).unwrap();
        for scale in [0.001, 2.0, 1000.0] {
            assert_eq!(rerank_top1(&ks, "root", &Scaled(scale)).unwrap(), base);
        }
    }

    #[test]
    fn filter_flags_answer_leaks() {
        let leak = AwakeningKnowledge::new(
            KnowledgeType::T8,
            vec![tr("Detroit Pistons", "championships", "2004 NBA Finals")],
            Provenance::Subgraph,
        );
        let flagged = filter_answer(leak, &["2004 NBA Finals".to_string()]);
        assert!(flagged.filtered);

        let clean = AwakeningKnowledge::new(
            KnowledgeType::T2,
            vec![tr("Tom Gores", "Organizations founded", "Platinum Equity")],
            Provenance::Subgraph,
        );
        let kept = filter_answer(clean, &["2004 NBA Finals".to_string()]);
        assert!(!kept.filtered);
    }

    #[test]
    fn filter_matches_across_case_and_whitespace() {
        let k = AwakeningKnowledge::new(
            KnowledgeType::T5,
            vec![tr("x", "r", "The  GREAT Answer")],
            Provenance::Subgraph,
        );
        assert!(filter_answer(k, &["great answer".to_string()]).filtered);
    }
}
