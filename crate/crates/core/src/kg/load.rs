//! Triple loading and serialization.
//!
//! Two interchangeable on-disk formats:
//!
//! * TSV: one triple per line,
//!   `subject_id <TAB> subject_label <TAB> relation_label <TAB> object_id <TAB> object_label`.
//!   Three-field lines (`subject_label <TAB> relation_label <TAB> object_label`)
//!   are accepted, with each label doubling as its id.
//! * JSONL: one object per line with the same five fields; the `*_id` fields
//!   are optional.
//!
//! An endpoint whose label is the mask sentinel loads as a masked node, so
//! masked graphs round-trip.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{CoreError, Result};
use crate::kg::{Entity, KnowledgeGraph, Node, Relation, Triple, MASK_SENTINEL};

/// On-disk triple encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripleFormat {
    Tsv,
    Jsonl,
}

/// What a load saw: total records, triples kept, duplicates collapsed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct LoadStats {
    pub records: usize,
    pub loaded: usize,
    pub duplicates: usize,
}

/// Reads a triple file into a graph, collapsing duplicate triples.
pub fn load_triples(path: &Path, format: TripleFormat) -> Result<(KnowledgeGraph, LoadStats)> {
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut kg = KnowledgeGraph::new();
    let mut stats = LoadStats::default();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| CoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let triple = match format {
            TripleFormat::Tsv => parse_tsv_line(path, lineno, &line)?,
            TripleFormat::Jsonl => parse_jsonl_line(path, lineno, &line)?,
        };
        stats.records += 1;
        if kg.insert(triple) {
            stats.loaded += 1;
        } else {
            stats.duplicates += 1;
        }
    }
    log::info!(
        "loaded {} triples from {} ({} duplicates collapsed)",
        stats.loaded,
        path.display(),
        stats.duplicates
    );
    Ok((kg, stats))
}

fn parse_tsv_line(path: &Path, lineno: usize, line: &str) -> Result<Triple> {
    let fields: Vec<&str> = line.split('\t').collect();
    let (sid, slabel, rlabel, oid, olabel) = match fields.as_slice() {
        [sl, rl, ol] => (*sl, *sl, *rl, *ol, *ol),
        [si, sl, rl, oi, ol] => (
            if si.is_empty() { *sl } else { *si },
            *sl,
            *rl,
            if oi.is_empty() { *ol } else { *oi },
            *ol,
        ),
        _ => {
            return Err(CoreError::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: format!("expected 3 or 5 tab-separated fields, got {}", fields.len()),
            })
        }
    };
    build_triple(path, lineno, sid, slabel, rlabel, oid, olabel)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonTriple {
    subject_id: Option<String>,
    subject_label: String,
    relation_label: String,
    object_id: Option<String>,
    object_label: String,
}

fn parse_jsonl_line(path: &Path, lineno: usize, line: &str) -> Result<Triple> {
    let rec: JsonTriple = serde_json::from_str(line).map_err(|e| CoreError::Parse {
        path: path.to_path_buf(),
        line: lineno,
        msg: e.to_string(),
    })?;
    build_triple(
        path,
        lineno,
        rec.subject_id.as_deref().unwrap_or(&rec.subject_label),
        &rec.subject_label,
        &rec.relation_label,
        rec.object_id.as_deref().unwrap_or(&rec.object_label),
        &rec.object_label,
    )
}

fn build_triple(
    path: &Path,
    lineno: usize,
    sid: &str,
    slabel: &str,
    rlabel: &str,
    oid: &str,
    olabel: &str,
) -> Result<Triple> {
    let wrap = |e: CoreError| CoreError::Parse {
        path: path.to_path_buf(),
        line: lineno,
        msg: e.to_string(),
    };
    let subject = node_from(sid, slabel).map_err(wrap)?;
    let object = node_from(oid, olabel).map_err(wrap)?;
    let relation = Relation::from_label(rlabel).map_err(wrap)?;
    Triple::new(subject, relation, object).map_err(wrap)
}

fn node_from(id: &str, label: &str) -> Result<Node> {
    if label == MASK_SENTINEL || id == MASK_SENTINEL {
        return Ok(Node::Masked);
    }
    Ok(Node::Entity(Entity::new(id, label)?))
}

/// Writes a graph in canonical five-field TSV, in triple order. Masked
/// endpoints serialize both id and label as the mask sentinel.
pub fn serialize_tsv(kg: &KnowledgeGraph, out: &mut dyn Write) -> std::io::Result<()> {
    for t in kg.triples() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            t.subject.id(),
            t.subject.label(),
            t.relation.label,
            t.object.id(),
            t.object.label()
        )?;
    }
    Ok(())
}
