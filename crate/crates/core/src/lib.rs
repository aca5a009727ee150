//! Corpus construction and training-planning toolkit for scientific LaTeX.
//!
//! The pipeline turns arXiv-style metadata plus source archives into
//! filtered, deduplicated, curriculum-tagged training shards:
//!
//! ```text
//! metadata ─┐
//!           ├─ archive ─ latexnorm ─ metadata filters ─ dedup ─ mixture ─ shards + manifest
//! archives ─┘                                                        └─ yield report
//! ```
//!
//! Alongside it sit desk-scale analyzers: [`tokenlab`] (BPE training,
//! compression and fragmentation metrics, config linting), [`budget`]
//! (token budgets and parameter counts) and [`telemetry`] (loss-curve and
//! gradient-norm analyses).
//!
//! Data-parallel stages go through [`par::Executor`], which uses rayon when
//! the `parallel` feature is enabled and a plain sequential loop otherwise.

pub mod archive;
pub mod budget;
pub mod dedup;
pub mod hashing;
pub mod langid;
pub mod latexnorm;
pub mod metadata;
pub mod mixture;
pub mod par;
pub mod pipeline;
pub mod synth;
pub mod telemetry;
pub mod tokenlab;

/// Toolkit version recorded in manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
