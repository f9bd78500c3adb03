//! Batch pipeline and evaluation toolkit for multi-region grounded
//! visual question answering.
//!
//! The pipeline filters VQA samples by complexity rules, grounds each
//! question to multiple OCR-corrected image regions, builds relation-aware
//! reasoning chains through an iterative model-in-the-loop state machine,
//! emits two-stage training records, runs six inference strategies, and
//! scores them with a robust answer matcher split by single- and
//! multi-region questions.
//!
//! Stages communicate through line-delimited record files (see
//! `docs/FORMATS.md`); model and OCR services are pluggable behind the
//! [`clients`] traits, with deterministic scripted clients for offline runs.

pub mod chains;
pub mod clients;
pub mod emitter;
pub mod error;
pub mod eval;
pub mod filter;
pub mod geometry;
pub mod grounding;
pub mod pipeline;
pub mod prompts;
pub mod records;
pub mod types;

pub use error::{Error, Result};
