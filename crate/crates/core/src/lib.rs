//! Automatic construction of functionality-embedded provenance graphs from
//! heterogeneous log streams: streaming log-type discovery, LLM-assisted
//! provenance extraction distilled into regex rules, functional node
//! enrichment, anomaly-driven attack graphs, natural-language attack
//! summaries, and the evaluation harness around them.

pub mod assistant;
pub mod cluster;
pub mod cpe;
pub mod detect;
pub mod embed;
pub mod enrich;
pub mod eval;
pub mod graph;
pub mod jsonl;
pub mod llm;
pub mod rules;
pub mod synthgen;
pub mod types;

pub use types::{LogRecord, ProvenanceRecord, RecordOrigin, Timestamp, TimestampFormat};
