//! Inverted-file flat (IVF-Flat) approximate nearest-neighbor index.
//!
//! A k-means coarse quantizer partitions the vector space into `nlist`
//! cells; every added vector is stored verbatim (flat) in the inverted list
//! of its nearest centroid. A search ranks centroids against the query,
//! scans the `nprobe` best lists exhaustively, and merges. With
//! `nprobe == nlist` every list is scanned, so results coincide with
//! exhaustive search; smaller `nprobe` trades recall for speed.
//!
//! All orderings are total: candidates sort by score descending with ties
//! broken by ascending id, and centroid ranking breaks ties by ascending
//! centroid index. The same tie-breaks apply to [`brute_force_search`], the
//! exhaustive reference implementation used as the accuracy oracle.

mod io;
pub mod kmeans;

pub use io::{load_index, save_index};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::parallel;

/// Distance flavor. Cosine assumes unit-norm inputs and scores by dot
/// product; L2 scores by negative Euclidean distance. Higher is better for
/// both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    L2,
}

impl Metric {
    pub fn score(&self, a: &[f32], b: &[f32]) -> f32 {
        match self {
            Metric::Cosine => dot(a, b),
            Metric::L2 => -kmeans::squared_l2(a, b).sqrt(),
        }
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// A finite, unit-norm vector. Construction normalizes and rejects
/// non-finite input and zero vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(CoreError::InvalidVector("empty vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidVector("non-finite component".into()));
        }
        let norm = dot(&values, &values).sqrt();
        if norm < 1e-12 {
            return Err(CoreError::InvalidVector(
                "zero vector cannot be normalized".into(),
            ));
        }
        if (norm - 1.0).abs() <= 1e-6 {
            return Ok(Embedding(values));
        }
        Ok(Embedding(values.iter().map(|v| v / norm).collect()))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

/// Index shape and scan parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexParams {
    /// Number of coarse cells (inverted lists).
    pub nlist: usize,
    /// Lists scanned per query.
    pub nprobe: usize,
    /// Training uses at most `train_factor * nlist` sample vectors.
    pub train_factor: usize,
    /// Vectors assigned per batch during bulk adds.
    pub batch: usize,
    pub metric: Metric,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            nlist: 4096,
            nprobe: 8,
            train_factor: 40,
            batch: 20_000,
            metric: Metric::Cosine,
        }
    }
}

impl IndexParams {
    pub fn validate(&self) -> Result<()> {
        if self.nlist == 0 {
            return Err(CoreError::InvalidParams("nlist must be >= 1".into()));
        }
        if self.nprobe == 0 || self.nprobe > self.nlist {
            return Err(CoreError::InvalidParams(format!(
                "nprobe must be in 1..={}, got {}",
                self.nlist, self.nprobe
            )));
        }
        if self.train_factor == 0 {
            return Err(CoreError::InvalidParams("train_factor must be >= 1".into()));
        }
        if self.batch == 0 {
            return Err(CoreError::InvalidParams("batch must be >= 1".into()));
        }
        Ok(())
    }

    /// Shrinks `nlist`/`nprobe` to fit a small collection so that training
    /// never sees fewer samples than cells. Used when indexing graphs far
    /// below the configured scale.
    pub fn clamped_to(&self, available: usize) -> IndexParams {
        let nlist = self.nlist.min(available.max(1));
        let nprobe = self.nprobe.min(nlist);
        if nlist != self.nlist {
            log::warn!(
                "clamping nlist {} -> {nlist} (only {available} vectors available)",
                self.nlist
            );
        }
        IndexParams {
            nlist,
            nprobe,
            ..*self
        }
    }
}

/// One scored hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchHit {
    pub id: u64,
    pub score: f32,
}

#[derive(Debug, Clone, Default)]
struct InvertedList {
    ids: Vec<u64>,
    vectors: Vec<f32>,
}

/// The IVF-Flat index proper.
#[derive(Debug, Clone)]
pub struct IvfFlatIndex {
    dim: usize,
    metric: Metric,
    centroids: Vec<Vec<f32>>,
    lists: Vec<InvertedList>,
    locations: HashMap<u64, (u32, u32)>,
    /// Marks indexes keyed by whole-fact embeddings rather than relation
    /// embeddings; persisted in the header so files are distinguishable.
    pub difar: bool,
}

impl IvfFlatIndex {
    /// Trains the coarse quantizer on `samples` (at most
    /// `train_factor * nlist` of them are used, in input order).
    ///
    /// Fewer samples than `nlist` is an error; fewer than the recommended
    /// `train_factor * nlist` trains anyway with a warning.
    pub fn train(samples: &[Embedding], params: &IndexParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if samples.is_empty() {
            return Err(CoreError::InsufficientTrainingData {
                have: 0,
                need: params.nlist,
            });
        }
        let dim = samples[0].dim();
        for s in samples {
            if s.dim() != dim {
                return Err(CoreError::DimensionMismatch {
                    expected: dim,
                    got: s.dim(),
                });
            }
        }
        if samples.len() < params.nlist {
            return Err(CoreError::InsufficientTrainingData {
                have: samples.len(),
                need: params.nlist,
            });
        }
        let want = params.train_factor.saturating_mul(params.nlist);
        if samples.len() < want {
            log::warn!(
                "training on {} vectors; {} recommended for nlist={}",
                samples.len(),
                want,
                params.nlist
            );
        }
        let take = samples.len().min(want);
        let train_set: Vec<Vec<f32>> = samples[..take]
            .iter()
            .map(|e| e.as_slice().to_vec())
            .collect();
        let centroids = kmeans::run(&train_set, &kmeans::KMeansConfig::new(params.nlist, seed));
        Ok(IvfFlatIndex {
            dim,
            metric: params.metric,
            centroids,
            lists: vec![InvertedList::default(); params.nlist],
            locations: HashMap::new(),
            difar: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn nlist(&self) -> usize {
        self.centroids.len()
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub(crate) fn centroids(&self) -> &[Vec<f32>] {
        &self.centroids
    }

    pub(crate) fn raw_lists(&self) -> impl Iterator<Item = (&[u64], &[f32])> {
        self.lists
            .iter()
            .map(|l| (l.ids.as_slice(), l.vectors.as_slice()))
    }

    pub(crate) fn from_parts(
        dim: usize,
        metric: Metric,
        centroids: Vec<Vec<f32>>,
        list_parts: Vec<(Vec<u64>, Vec<f32>)>,
        difar: bool,
    ) -> Result<Self> {
        let mut index = IvfFlatIndex {
            dim,
            metric,
            centroids,
            lists: list_parts
                .into_iter()
                .map(|(ids, vectors)| InvertedList { ids, vectors })
                .collect(),
            locations: HashMap::new(),
            difar,
        };
        for (li, list) in index.lists.iter().enumerate() {
            if list.vectors.len() != list.ids.len() * dim {
                return Err(CoreError::Invalid(format!(
                    "list {li}: {} ids but {} vector components",
                    list.ids.len(),
                    list.vectors.len()
                )));
            }
            for (off, &id) in list.ids.iter().enumerate() {
                if index
                    .locations
                    .insert(id, (li as u32, off as u32))
                    .is_some()
                {
                    return Err(CoreError::Invalid(format!(
                        "duplicate id {id} across lists"
                    )));
                }
            }
        }
        Ok(index)
    }

    /// The centroid whose cell `v` falls in, by the index metric.
    pub fn assign_cell(&self, v: &Embedding) -> usize {
        let mut best = 0usize;
        let mut best_score = f32::NEG_INFINITY;
        for (c, centroid) in self.centroids.iter().enumerate() {
            let s = self.metric.score(v.as_slice(), centroid);
            if s > best_score {
                best_score = s;
                best = c;
            }
        }
        best
    }

    /// Inserts `v` under `id`, replacing (and logging) any previous vector
    /// with the same id.
    pub fn add(&mut self, id: u64, v: &Embedding) -> Result<()> {
        if v.dim() != self.dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim,
                got: v.dim(),
            });
        }
        if self.locations.contains_key(&id) {
            log::warn!("id {id} already indexed; replacing");
            self.remove(id);
        }
        let cell = self.assign_cell(v);
        let list = &mut self.lists[cell];
        let offset = list.ids.len() as u32;
        list.ids.push(id);
        list.vectors.extend_from_slice(v.as_slice());
        self.locations.insert(id, (cell as u32, offset));
        Ok(())
    }

    /// Bulk insert. Cell assignment runs data-parallel in `params.batch`
    /// chunks; insertion itself happens in input order.
    pub fn add_batch(&mut self, items: &[(u64, Embedding)], batch: usize) -> Result<()> {
        let batch = batch.max(1);
        for chunk in items.chunks(batch) {
            for (_, v) in chunk {
                if v.dim() != self.dim {
                    return Err(CoreError::DimensionMismatch {
                        expected: self.dim,
                        got: v.dim(),
                    });
                }
            }
            let cells = parallel::map_slice(chunk, |(_, v)| self.assign_cell(v));
            for ((id, v), cell) in chunk.iter().zip(cells) {
                if self.locations.contains_key(id) {
                    log::warn!("id {id} already indexed; replacing");
                    self.remove(*id);
                }
                let list = &mut self.lists[cell];
                let offset = list.ids.len() as u32;
                list.ids.push(*id);
                list.vectors.extend_from_slice(v.as_slice());
                self.locations.insert(*id, (cell as u32, offset));
            }
        }
        Ok(())
    }

    fn remove(&mut self, id: u64) {
        if let Some((cell, offset)) = self.locations.remove(&id) {
            let list = &mut self.lists[cell as usize];
            let offset = offset as usize;
            let last = list.ids.len() - 1;
            list.ids.swap_remove(offset);
            let start = offset * self.dim;
            let last_start = last * self.dim;
            if offset != last {
                for j in 0..self.dim {
                    list.vectors[start + j] = list.vectors[last_start + j];
                }
                let moved = list.ids[offset];
                self.locations.insert(moved, (cell, offset as u32));
            }
            list.vectors.truncate(last_start);
        }
    }

    /// Top-`k` hits scanning the `nprobe` most promising lists. Data-parallel
    /// across probed lists.
    pub fn search(&self, query: &Embedding, k: usize, nprobe: usize) -> Result<Vec<SearchHit>> {
        let probes = self.probe_order(query, nprobe)?;
        let per_list: Vec<Vec<SearchHit>> =
            parallel::map_slice(&probes, |&cell| self.scan_list(cell, query));
        Ok(merge_hits(per_list, k))
    }

    /// Sequential twin of [`search`]; always compiled, byte-identical
    /// results.
    pub fn search_sequential(
        &self,
        query: &Embedding,
        k: usize,
        nprobe: usize,
    ) -> Result<Vec<SearchHit>> {
        let probes = self.probe_order(query, nprobe)?;
        let per_list: Vec<Vec<SearchHit>> =
            parallel::map_slice_seq(&probes, |&cell| self.scan_list(cell, query));
        Ok(merge_hits(per_list, k))
    }

    fn probe_order(&self, query: &Embedding, nprobe: usize) -> Result<Vec<usize>> {
        if self.centroids.is_empty() {
            return Err(CoreError::Untrained);
        }
        if query.dim() != self.dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        if nprobe == 0 || nprobe > self.nlist() {
            return Err(CoreError::InvalidParams(format!(
                "nprobe must be in 1..={}, got nprobe={nprobe}",
                self.nlist()
            )));
        }
        let mut ranked: Vec<(usize, f32)> = self
            .centroids
            .iter()
            .enumerate()
            .map(|(c, centroid)| (c, self.metric.score(query.as_slice(), centroid)))
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        Ok(ranked.into_iter().take(nprobe).map(|(c, _)| c).collect())
    }

    fn scan_list(&self, cell: usize, query: &Embedding) -> Vec<SearchHit> {
        let list = &self.lists[cell];
        let mut hits = Vec::with_capacity(list.ids.len());
        for (i, &id) in list.ids.iter().enumerate() {
            let v = &list.vectors[i * self.dim..(i + 1) * self.dim];
            hits.push(SearchHit {
                id,
                score: self.metric.score(query.as_slice(), v),
            });
        }
        hits
    }
}

fn merge_hits(per_list: Vec<Vec<SearchHit>>, k: usize) -> Vec<SearchHit> {
    let mut all: Vec<SearchHit> = per_list.into_iter().flatten().collect();
    sort_hits(&mut all);
    all.truncate(k);
    all
}

fn sort_hits(hits: &mut [SearchHit]) {
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then(a.id.cmp(&b.id))
    });
}

/// Exhaustive top-`k` over an explicit collection; the accuracy oracle for
/// [`IvfFlatIndex::search`]. Same score and tie-break conventions, but no
/// quantizer involved. Data-parallel over the collection.
pub fn brute_force_search(
    items: &[(u64, Embedding)],
    query: &Embedding,
    k: usize,
    metric: Metric,
) -> Vec<SearchHit> {
    let mut hits: Vec<SearchHit> = parallel::map_slice(items, |(id, v)| SearchHit {
        id: *id,
        score: metric.score(query.as_slice(), v.as_slice()),
    });
    sort_hits(&mut hits);
    hits.truncate(k);
    hits
}

/// Sequential twin of [`brute_force_search`].
pub fn brute_force_search_sequential(
    items: &[(u64, Embedding)],
    query: &Embedding,
    k: usize,
    metric: Metric,
) -> Vec<SearchHit> {
    let mut hits: Vec<SearchHit> = parallel::map_slice_seq(items, |(id, v)| SearchHit {
        id: *id,
        score: metric.score(query.as_slice(), v.as_slice()),
    });
    sort_hits(&mut hits);
    hits.truncate(k);
    hits
}
