//! Evaluation of instruction-following retrieval systems.
//!
//! Each instructed query is evaluated in three modes (original, instructed,
//! reversed) and scored with nDCG@k, MRR@1, Robustness@k, p-MRR, SICR and
//! WISE. The crate also ships a BM25 reference retriever, a list-wise
//! reranker prompt/parse adapter and a synthetic data generator with an
//! independent reference implementation of every metric.

pub mod bm25;
pub mod harness;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod report;
pub mod rerank;
pub mod synth;
