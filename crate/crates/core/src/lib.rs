//! Minimum conditional dependence rationalization.
//!
//! * [`graph`]: DAGs, d-separation, and an executable check that the direct
//!   causes of a label are exactly the sets that separate it from the rest.
//! * [`scm`]: discrete structural causal models with exact inference, and a
//!   synthetic corpus generator with gold rationales.
//! * [`text`]: vocabulary, JSON-lines datasets, embeddings.
//! * [`rationale`]: explainer/predictor models trained under MMI or MCD.
//! * [`eval`]: token-level precision/recall/F1, sparsity, accuracy, reports.

pub mod cli;
pub mod eval;
pub mod graph;
pub mod nn;
pub mod rationale;
pub mod rng;
pub mod scm;
pub mod text;
