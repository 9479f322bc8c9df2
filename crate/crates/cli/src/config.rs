//! Run configuration: one TOML file drives every stage.
//!
//! Unknown keys are rejected so typos never silently fall back to defaults.
//! Defaults follow the recorded pipeline parameters (awaken temperature 0.7,
//! retrieval k=10 / m=3, IVF nlist=4096, train factor 40, batch 20000).
//! The fingerprint is a stable hash of the parsed, defaulted config; paths
//! hash as written, so renaming a referenced file changes the run identity
//! only if the config text changes. `--seed` replaces the seed before the
//! fingerprint is computed, giving each seed its own artifact directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use awaken_core::eval::AggregationMode;
use awaken_core::forge::KnowledgeType;
use awaken_core::gateway::RetryPolicy;
use awaken_core::index::IndexParams;
use awaken_core::kg::TripleFormat;
use awaken_core::probe::ProbeMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::errors::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub embedder: EmbedderSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub awaken: AwakenSection,
    #[serde(default)]
    pub index: IndexParams,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub knowledge: KnowledgeSection,
    #[serde(default)]
    pub unseen: UnseenSection,
    #[serde(default)]
    pub report: ReportSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub triples: PathBuf,
    pub questions: PathBuf,
    #[serde(default = "default_format")]
    pub format: TripleFormat,
}

fn default_format() -> TripleFormat {
    TripleFormat::Tsv
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSection {
    pub kind: BackendKind,
    /// Rules file for the scripted backend.
    pub rules: Option<PathBuf>,
    /// Base URL for the remote backend, up to but excluding `/chat/completions`.
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: BackendKind::Scripted,
            rules: None,
            endpoint: None,
            model: None,
            timeout_secs: 60,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedderSection {
    pub kind: EmbedderKind,
    pub dimension: usize,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for EmbedderSection {
    fn default() -> Self {
        EmbedderSection {
            kind: EmbedderKind::Mock,
            dimension: 64,
            endpoint: None,
            model: None,
            timeout_secs: 60,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub mode: ProbeMode,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            mode: ProbeMode::Nli,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AwakenSection {
    pub temperature: f64,
    pub k_max: usize,
    pub elicit_candidates: bool,
    pub max_tokens: u32,
}

impl Default for AwakenSection {
    fn default() -> Self {
        AwakenSection {
            temperature: 0.7,
            k_max: 10,
            elicit_candidates: true,
            max_tokens: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalSection {
    /// Triples fetched per relation query.
    pub k: usize,
    /// Triples kept after disambiguation.
    pub m: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection { k: 10, m: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnowledgeSection {
    /// Arms forged and evaluated in the awakening pipeline, in table order.
    pub types: Vec<String>,
}

impl Default for KnowledgeSection {
    fn default() -> Self {
        KnowledgeSection {
            types: ["T1", "T2", "T3", "T4", "T5", "T6", "T7", "T8"]
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

impl KnowledgeSection {
    pub fn arms(&self) -> anyhow::Result<Vec<KnowledgeType>> {
        parse_types(&self.types, "knowledge.types", |t| {
            *t != KnowledgeType::T1Star
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnseenSection {
    /// Context parts built for every question, rendered in this order.
    pub context_types: Vec<String>,
    /// Catalog of allowed entity types, one label per line. Defaults to the
    /// built-in curated list when omitted.
    pub type_catalog: Option<PathBuf>,
    /// Retrieval baselines to run: `difar-question`, `difar-entity`, `qd`.
    pub baselines: Vec<String>,
}

impl Default for UnseenSection {
    fn default() -> Self {
        UnseenSection {
            context_types: ["T7", "T1STAR", "T4"]
                .into_iter()
                .map(String::from)
                .collect(),
            type_catalog: None,
            baselines: ["difar-question", "difar-entity", "qd"]
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

impl UnseenSection {
    pub fn contexts(&self) -> anyhow::Result<Vec<KnowledgeType>> {
        parse_types(&self.context_types, "unseen.context_types", |t| {
            matches!(
                t,
                KnowledgeType::T7 | KnowledgeType::T1Star | KnowledgeType::T4
            )
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    pub mode: AggregationMode,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            mode: AggregationMode::Original,
        }
    }
}

fn parse_types(
    raw: &[String],
    field: &str,
    allowed: impl Fn(&KnowledgeType) -> bool,
) -> anyhow::Result<Vec<KnowledgeType>> {
    if raw.is_empty() {
        bail!("{field} must list at least one knowledge type");
    }
    let mut out = Vec::with_capacity(raw.len());
    for s in raw {
        let t: KnowledgeType = s
            .parse()
            .map_err(|_| anyhow!("{field}: unknown knowledge type {s:?}"))?;
        if !allowed(&t) {
            bail!("{field}: {t} is not usable here");
        }
        if out.contains(&t) {
            bail!("{field}: {t} listed twice");
        }
        out.push(t);
    }
    Ok(out)
}

/// Reads, defaults, optionally overrides the seed, and validates.
pub fn load(path: &Path, seed_override: Option<u64>) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(CliError::Config)?;
    let mut cfg: RunConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(anyhow!("parsing {}: {e}", path.display())))?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        require_file(&self.dataset.triples, "dataset.triples")?;
        require_file(&self.dataset.questions, "dataset.questions")?;

        match self.backend.kind {
            BackendKind::Scripted => {
                let rules =
                    self.backend.rules.as_ref().ok_or_else(|| {
                        anyhow!("backend.rules is required with kind = \"scripted\"")
                    })?;
                require_file(rules, "backend.rules")?;
            }
            BackendKind::Remote => {
                require_remote(&self.backend.endpoint, &self.backend.model, "backend")?;
            }
        }
        match self.embedder.kind {
            EmbedderKind::Mock => {}
            EmbedderKind::Remote => {
                require_remote(&self.embedder.endpoint, &self.embedder.model, "embedder")?;
            }
        }
        if self.embedder.dimension < 2 {
            bail!(
                "embedder.dimension must be >= 2, got {}",
                self.embedder.dimension
            );
        }

        if !(0.0..=2.0).contains(&self.awaken.temperature) {
            bail!(
                "awaken.temperature must be in [0, 2], got {}",
                self.awaken.temperature
            );
        }
        if self.awaken.k_max == 0 {
            bail!("awaken.k_max must be >= 1");
        }
        if self.awaken.max_tokens == 0 {
            bail!("awaken.max_tokens must be >= 1");
        }
        self.index.validate().map_err(|e| anyhow!("index: {e}"))?;
        if self.retrieval.k == 0 {
            bail!("retrieval.k must be >= 1");
        }
        if self.retrieval.m == 0 {
            bail!("retrieval.m must be >= 1");
        }
        self.knowledge.arms()?;
        self.unseen.contexts()?;
        if let Some(p) = &self.unseen.type_catalog {
            require_file(p, "unseen.type_catalog")?;
        }
        for b in &self.unseen.baselines {
            if !matches!(b.as_str(), "difar-question" | "difar-entity" | "qd") {
                bail!(
                    "unseen.baselines: unknown mode {b:?} \
                     (expected difar-question, difar-entity, or qd)"
                );
            }
        }
        let mut seen = std::collections::HashSet::new();
        for b in &self.unseen.baselines {
            if !seen.insert(b.as_str()) {
                bail!("unseen.baselines: {b:?} listed twice");
            }
        }
        Ok(())
    }

    /// Sixteen hex characters identifying this exact configuration.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut out = String::with_capacity(16);
        for byte in &digest[..8] {
            write!(out, "{byte:02x}").expect("writing to a String cannot fail");
        }
        out
    }
}

fn require_file(path: &Path, field: &str) -> anyhow::Result<()> {
    if !path.is_file() {
        bail!("{field}: {} does not exist", path.display());
    }
    Ok(())
}

fn require_remote(
    endpoint: &Option<String>,
    model: &Option<String>,
    section: &str,
) -> anyhow::Result<()> {
    if endpoint.as_deref().is_none_or(str::is_empty) {
        bail!("{section}.endpoint is required with kind = \"remote\"");
    }
    if model.as_deref().is_none_or(str::is_empty) {
        bail!("{section}.model is required with kind = \"remote\"");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, contents).unwrap();
        p
    }

    fn minimal_config(dir: &Path) -> String {
        write(dir, "t.tsv", "a\tr\tb\n");
        write(
            dir,
            "q.jsonl",
            "{\"id\":\"q1\",\"question\":\"?\",\"head_entity\":\"a\",\"answers\":[\"b\"]}\n",
        );
        write(
            dir,
            "rules.jsonl",
            "{\"match\":\"\",\"responses\":[\"ok\"]}\n",
        );
        format!(
            "seed = 7\n[dataset]\ntriples = \"{}/t.tsv\"\nquestions = \"{}/q.jsonl\"\n\
             [backend]\nrules = \"{}/rules.jsonl\"\n",
            dir.display(),
            dir.display(),
            dir.display()
        )
    }

    #[test]
    fn defaults_fill_in() {
        let dir = tempfile::tempdir().unwrap();
        let cfg: RunConfig = toml::from_str(&minimal_config(dir.path())).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.awaken.temperature, 0.7);
        assert_eq!(cfg.awaken.k_max, 10);
        assert_eq!(cfg.retrieval.k, 10);
        assert_eq!(cfg.retrieval.m, 3);
        assert_eq!(cfg.index.nlist, 4096);
        assert_eq!(cfg.index.train_factor, 40);
        assert_eq!(cfg.index.batch, 20_000);
        assert_eq!(cfg.probe.mode, ProbeMode::Nli);
        assert_eq!(cfg.knowledge.arms().unwrap().len(), 8);
        assert_eq!(cfg.unseen.contexts().unwrap().len(), 3);
        assert_eq!(cfg.output_dir, PathBuf::from("runs"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let toml_text = format!("{}typo_key = true\n", minimal_config(dir.path()));
        let err = toml::from_str::<RunConfig>(&toml_text)
            .unwrap_err()
            .to_string();
        assert!(err.contains("typo_key"), "{err}");
    }

    #[test]
    fn nprobe_above_nlist_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let toml_text = format!(
            "{}[index]\nnlist = 64\nnprobe = 128\n",
            minimal_config(dir.path())
        );
        let cfg: RunConfig = toml::from_str(&toml_text).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("nprobe"), "{err}");
    }

    #[test]
    fn missing_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = minimal_config(dir.path());
        text = text.replace("t.tsv", "absent.tsv");
        let cfg: RunConfig = toml::from_str(&text).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("dataset.triples"), "{err}");
    }

    #[test]
    fn t1star_is_not_a_forgeable_arm() {
        let dir = tempfile::tempdir().unwrap();
        let toml_text = format!(
            "{}[knowledge]\ntypes = [\"T1STAR\"]\n",
            minimal_config(dir.path())
        );
        let cfg: RunConfig = toml::from_str(&toml_text).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn context_types_limited_to_task2_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let toml_text = format!(
            "{}[unseen]\ncontext_types = [\"T2\"]\n",
            minimal_config(dir.path())
        );
        let cfg: RunConfig = toml::from_str(&toml_text).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fingerprint_ignores_key_order_and_tracks_values() {
        let dir = tempfile::tempdir().unwrap();
        let base = minimal_config(dir.path());
        let backend_at = base.find("[backend]").unwrap();
        let (head, backend) = base.split_at(backend_at);
        let seed_end = head.find('\n').unwrap() + 1;
        let reordered = format!(
            "{}{}{}[awaken]\nk_max = 10\n",
            &head[..seed_end],
            backend,
            &head[seed_end..]
        );
        let a: RunConfig = toml::from_str(&base).unwrap();
        let b: RunConfig = toml::from_str(&reordered).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());

        let mut c: RunConfig = toml::from_str(&base).unwrap();
        c.seed = 8;
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
        assert!(a.fingerprint().chars().all(|ch| ch.is_ascii_hexdigit()));
    }

    #[test]
    fn seed_override_lands_before_fingerprinting() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "config.toml", &minimal_config(dir.path()));
        let plain = load(&path, None).unwrap();
        let overridden = load(&path, Some(99)).unwrap();
        assert_eq!(overridden.seed, 99);
        assert_ne!(plain.fingerprint(), overridden.fingerprint());
    }
}
