//! Demonstration-based few-shot named entity recognition, framed as
//! machine-reading-comprehension span extraction.
//!
//! The pipeline: parse IOB2 corpora ([`corpus`]), draw k-shot samples
//! ([`fewshot`]), pick a demonstration per sentence and type ([`demos`]),
//! assemble `[CLS] context [SEP] demo [SEP]` instances ([`spanconv`]), train
//! start/end span heads ([`model`]), pair predicted indices into spans
//! ([`decode`]) and score them ([`eval`]).

pub mod cli;
pub mod corpus;
pub mod decode;
pub mod demos;
pub mod error;
pub mod eval;
pub mod fewshot;
pub mod model;
pub mod spanconv;
pub mod synth;

pub use error::{Error, Result};
