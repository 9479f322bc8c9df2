//! Knowledge-graph question answering with awakening contexts.
//!
//! The crate covers two pipelines that share one substrate. The first
//! selects questions a model cannot answer unaided, forges candidate
//! knowledge snippets from two-hop subgraphs around the question head,
//! reranks and filters those candidates, probes whether the model already
//! holds each snippet, and finally measures how much each snippet wakes
//! the model up. The second pipeline works over an incomplete graph whose
//! head entities are masked: it extracts an entity/relation pair from the
//! question, retrieves masked facts by relation similarity through an
//! IVF-Flat index, disambiguates them, and assembles a fixed-order context
//! bundle for answering.
//!
//! Layering, bottom to top:
//!
//! - [`text`], [`error`], [`parallel`]: normalization, error enum, and the
//!   rayon/sequential execution switch.
//! - [`kg`]: triples, graph storage, two-hop expansion, entity masking.
//! - [`index`]: the IVF-Flat vector index with on-disk persistence.
//! - [`gateway`]: chat/embedding traits plus scripted, mock, and remote
//!   implementations.
//! - [`templates`]: prompt texts and slot-filling builders.
//! - [`forge`], [`probe`], [`eval`]: knowledge construction, embedding
//!   probes and the unanswerable split, answer scoring and reports.
//! - [`unseen`]: the masked-graph retrieval pipeline and its baselines.

pub mod error;
pub mod eval;
pub mod forge;
pub mod gateway;
pub mod index;
pub mod kg;
pub mod parallel;
pub mod probe;
pub mod templates;
pub mod text;
pub mod unseen;

pub use error::{CoreError, Result};
