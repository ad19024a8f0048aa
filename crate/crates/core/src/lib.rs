//! Core engine for user-controlled feed filtering.
//!
//! The crate is organized around the life of a feed item:
//!
//! - [`model`]: rules, feed items, visual evidence and judge verdicts.
//! - [`embedding`]: text embeddings and cross-modal similarity behind a
//!   provider boundary, with a deterministic hashing provider.
//! - [`profile`]: the explicit tag profile with user bias and session decay.
//! - [`graph`]: the semantic rule graph and personalized PageRank.
//! - [`pipeline`]: per-item adjudication, fallback routing, star scoring and
//!   dossiers.
//! - [`agents`]: intent parsing, proposals, appeals and dispute resolution.
//! - [`telemetry`]: the append-only event log and the tables derived from it.
//! - [`eval`]: confusion-count metrics and the offline evaluation harness.
//!
//! Batch work (offline evaluation, pairwise edge tests, batch adjudication)
//! runs on rayon when the `parallel` feature is enabled and sequentially
//! otherwise; see [`exec`].

pub mod agents;
pub mod clock;
pub mod embedding;
pub mod eval;
pub mod exec;
pub mod fault;
pub mod graph;
pub mod model;
pub mod pipeline;
pub mod profile;
pub mod telemetry;

pub use clock::{Clock, ManualClock, SystemClock};
pub use embedding::{cosine, CrossModal, Embedding, OfflineEmbedder, Similarity, TextEmbedder};
pub use exec::ExecMode;
pub use model::{
    FeedItem, IntensityBand, JudgeVerdict, Label, Modality, Persona, Rule, RuleDraft,
    VisualEvidence,
};
