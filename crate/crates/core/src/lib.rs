//! Code-mixing aware text classification.
//!
//! Word-level language tagging and the code-mixing index, a hashed
//! character n-gram encoder with dot or cosine heads, cross-entropy, focal
//! and CMI-scaled focal losses, Adam training with optional pseudo-labeling,
//! classification metrics and the Stuart-Maxwell test.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cmi;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod rng;
pub mod synth;
pub mod textlang;
pub mod train;

pub use cmi::{corpus_profile, sentence_cmi, CmiScore, CorpusCmiProfile};
pub use dataio::{LabelVocabulary, LabeledExample, Prediction};
pub use error::{Error, Result};
pub use eval::{metrics, stuart_maxwell, ConfusionMatrix, MetricsReport, PairedTable, SmResult};
pub use loss::{ClassWeights, CmiMode, LossConfig, LossKind};
pub use model::{FeatureConfig, Head, HeadKind, ModelParams, SparseVec};
pub use textlang::{Dictionary, LangTag, Language, TaggedSentence};
pub use train::{TrainConfig, TrainHistory};
