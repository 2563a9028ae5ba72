//! Corpus compilation and evaluation toolkit for tabular language models.
//!
//! The pipeline turns raw tables into filtered, serialized and packed
//! training sequences:
//!
//! 1. [`table`]: ingestion, typing, content hashing.
//! 2. [`filter`]: table, column and row rules with per-rule accounting.
//! 3. [`task`]: target-column selection and quantile binning.
//! 4. [`serialize`]: the prompt grammar and shot concatenation.
//! 5. [`tokenpack`]: tokenizers, row-causal packing, masks and loss spans.
//!
//! [`eval`] scores externally generated completions with strict exact match,
//! [`contam`] checks evaluation schemas against a training corpus and
//! [`pipeline`] runs everything over sharded inputs.

pub mod contam;
pub mod eval;
pub mod filter;
pub mod pipeline;
pub mod serialize;
pub mod synth;
pub mod table;
pub mod task;
pub mod tokenpack;
