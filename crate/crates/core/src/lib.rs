//! Entity-linking toolkit: mention detection, candidate selection, and
//! latent-relation entity disambiguation over a single-file knowledge store.
//!
//! The pipeline has three stages:
//!
//! 1. **Mention detection** ([`mention`]) — a gazetteer n-gram detector over
//!    the store's surface forms, or externally supplied spans.
//! 2. **Candidate selection** ([`candidates`]) — up to `k1` entities by
//!    `P(e|m)` prior plus up to `k2` by context similarity, drawn from the
//!    top-`k` prior entities.
//! 3. **Disambiguation** ([`model`]) — local attention scores, pairwise
//!    latent-relation coherence, max-product loopy belief propagation, a
//!    two-layer final scorer, and logistic confidence calibration.
//!
//! [`store`] holds the embeddings and the prior index, [`index`] builds the
//! prior index from anchor corpora, [`train`] fits the disambiguation model
//! with a max-margin loss, and [`eval`] scores predictions with strong
//! matching.

pub mod candidates;
pub mod dataset;
pub mod eval;
pub mod index;
pub mod mention;
pub mod model;
pub mod store;
pub mod tokenize;
pub mod train;

pub use candidates::{CandidateSet, SelectionParams};
pub use mention::{DetectorConfig, Span};
pub use model::{Annotation, EdHyperParams, EdParams};
pub use store::{EntityId, KnowledgeStore, PriorEntry};
