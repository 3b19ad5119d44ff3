//! Masked keyword regularization for text classifiers.
//!
//! The crate is split along the lines of the training recipe:
//!
//! - [`corpus`]: vocabulary, tokenization, JSONL corpora and the synthetic
//!   planted-keyword benchmark generator.
//! - [`keywords`]: frequency (TF-IDF over class documents) and attention based
//!   keyword scoring, top-K selection and keyword/class cross tabulation.
//! - [`model`]: a small bi-directional attention encoder with a document head
//!   and a token head, exact hand-written gradients and an Adam optimizer.
//! - [`masker`]: keyword / context masking, the reconstruction and entropy
//!   regularizers, and the vanilla and regularized training drivers.
//! - [`eval`]: OOD detection metrics, cross-domain accuracy, keyword
//!   substitution and embedding export.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod keywords;
pub mod masker;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
