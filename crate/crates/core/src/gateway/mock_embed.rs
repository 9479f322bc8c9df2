//! Deterministic hash-based text embedder.
//!
//! Each text is lowercased and whitespace-collapsed, split into character
//! 3-grams (texts shorter than three characters become a single gram), and
//! every gram is FNV-hashed together with the seed. The hash picks one of
//! `dim` buckets and a sign, the signed counts are accumulated, and the
//! result is L2-normalized. Identical texts embed identically, and texts
//! sharing many 3-grams land near each other in cosine space, so string
//! similarity loosely tracks lexical overlap. No tokenizers, no network.

use crate::error::Result;
use crate::gateway::EmbeddingProvider;
use crate::index::Embedding;
use crate::parallel;
use crate::text::{fnv1a64, normalize_light};

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    seed: u64,
    dim: usize,
}

impl MockEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim >= 1, "embedding dimension must be >= 1");
        MockEmbedder { seed, dim }
    }

    pub fn embed_one(&self, text: &str) -> Embedding {
        let mut acc = vec![0.0f32; self.dim];
        let norm = normalize_light(text);
        let chars: Vec<char> = norm.chars().collect();

        let mut bump = |gram: &str| {
            let mut bytes = Vec::with_capacity(8 + gram.len());
            bytes.extend_from_slice(&self.seed.to_le_bytes());
            bytes.extend_from_slice(gram.as_bytes());
            let h = fnv1a64(&bytes);
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
            acc[bucket] += sign;
        };

        if chars.len() < 3 {
            bump(&norm);
        } else {
            for w in chars.windows(3) {
                bump(&w.iter().collect::<String>());
            }
        }

        if acc.iter().all(|&v| v == 0.0) {
            // Signed counts can cancel; fall back to a single deterministic
            // bucket so every text still has a direction.
            let mut bytes = self.seed.to_le_bytes().to_vec();
            bytes.extend_from_slice(norm.as_bytes());
            let h = fnv1a64(&bytes);
            acc[(h % self.dim as u64) as usize] = 1.0;
        }
        Embedding::new(acc).expect("mock embedding is finite and non-zero")
    }

    /// Sequential twin of the batch path, for benches.
    pub fn embed_batch_sequential(&self, texts: &[String]) -> Vec<Embedding> {
        parallel::map_slice_seq(texts, |t| self.embed_one(t))
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        Ok(parallel::map_slice(texts, |t| self.embed_one(t)))
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn name(&self) -> &str {
        "mock"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::dot;

    fn cos(e: &MockEmbedder, a: &str, b: &str) -> f32 {
        dot(e.embed_one(a).as_slice(), e.embed_one(b).as_slice())
    }

    #[test]
    fn identical_text_has_unit_self_similarity() {
        let e = MockEmbedder::new(42, 64);
        assert!((cos(&e, "owner of", "owner of") - 1.0).abs() < 1e-6);
    }

    #[test]
    fn case_and_spacing_do_not_matter() {
        let e = MockEmbedder::new(42, 64);
        assert!((cos(&e, "Owner  Of", "owner of") - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lexical_overlap_beats_unrelated_text() {
        let e = MockEmbedder::new(42, 64);
        let near = cos(&e, "organizations founded", "organization founded");
        let far = cos(&e, "organizations founded", "team mascot");
        assert!(
            near > far + 0.2,
            "overlapping strings should be far closer: near={near}, far={far}"
        );
    }

    #[test]
    fn short_texts_embed() {
        let e = MockEmbedder::new(1, 16);
        let v = e.embed_one("ab");
        assert_eq!(v.dim(), 16);
        let w = e.embed_one("");
        assert_eq!(w.dim(), 16);
    }

    #[test]
    fn different_seeds_give_different_spaces() {
        let a = MockEmbedder::new(1, 64).embed_one("tom gores");
        let b = MockEmbedder::new(2, 64).embed_one("tom gores");
        assert!((dot(a.as_slice(), b.as_slice()) - 1.0).abs() > 1e-3);
    }

    #[test]
    fn batch_matches_single_and_sequential() {
        let e = MockEmbedder::new(7, 32);
        let texts: Vec<String> = ["a", "bb", "ccc", "owner of", "team mascot"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let batch = e.embed(&texts).unwrap();
        let seq = e.embed_batch_sequential(&texts);
        for (i, t) in texts.iter().enumerate() {
            assert_eq!(batch[i], e.embed_one(t));
            assert_eq!(batch[i], seq[i]);
        }
    }
}
