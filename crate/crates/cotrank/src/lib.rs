//! Listwise passage reranking toolkit.
//!
//! The crate covers the full loop of an LLM-backed reranker:
//!
//! * [`types`]: queries, passages, candidate lists, and validated rankings
//!   over 1-based candidate indices.
//! * [`promptgen`]: prompt rendering in three output formats (direct list,
//!   explicit stepwise trace, final-answer-only) plus SFT/preference dataset
//!   emission with a seeded split.
//! * [`cotparse`]: parsing of model output back into rankings, either
//!   strictly or through a total repair pipeline.
//! * [`slidewin`]: sliding-window orchestration that reranks long candidate
//!   lists back-to-front so good passages bubble toward the head.
//! * [`llmgate`]: a chat-completions gateway with retry/backoff, a bounded
//!   concurrency limiter, transcript record/replay, and a deterministic mock
//!   oracle for offline runs.
//! * [`rpo`]: preference-pair construction from ranking divergence and a
//!   reference-anchored pairwise logistic loss over an exact Plackett-Luce
//!   policy, with analytic gradients and a small batch optimizer.
//! * [`evalkit`]: TREC-style run/qrels I/O, nDCG@k, and a paired t-test.
//!
//! All randomized behavior is seeded and reproducible; all file writers go
//! through an atomic write-then-rename path.

pub mod cotparse;
pub mod evalkit;
pub mod ioutil;
pub mod llmgate;
pub mod promptgen;
pub mod rpo;
pub mod slidewin;
pub mod types;

pub use types::{apply_ranking, CandidateList, CoreError, Passage, Query, Ranking};
