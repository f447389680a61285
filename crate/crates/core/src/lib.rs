//! Crisis tweet classification toolkit.
//!
//! The crate covers the whole pipeline used for binary crisis detection and
//! multi-class crisis recognition:
//!
//! - [`corpus`]: labeled tweet ingestion, class tables, splits and synthetic corpora
//! - [`tokenizer`]: subword vocabulary training and greedy longest-match tokenization
//! - [`encoder`]: a post-norm transformer encoder with hand-written backpropagation
//! - [`heads`]: the `[CLS]` linear classifier and mean-pooled document embeddings
//! - [`baselines`]: logistic regression, linear SVM, Gaussian naive Bayes, LSTM and CNN
//! - [`train`]: optimizers, word dropout, the training loop and random hyperparameter search
//! - [`metrics`]: confusion counts, accuracy and macro-F1
//! - [`checkpoint`]: the binary parameter container shared by every model

pub mod baselines;
pub mod checkpoint;
pub mod corpus;
pub mod encoder;
mod error;
pub mod heads;
pub mod metrics;
pub mod params;
pub mod seed;
pub mod tokenizer;
pub mod train;

pub use error::{Error, ErrorKind, Result};
