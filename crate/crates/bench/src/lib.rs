//! Shared inputs for the benchmarks.

use cmifl_core::dataio::LabeledExample;
use cmifl_core::model::{featurize, HeadKind, ModelParams, SparseVec};
use cmifl_core::train::{prepare, Prepared, TrainConfig};
use cmifl_core::{rng, synth, Dictionary, Language};

pub fn labels() -> Vec<String> {
    synth::KEYWORD_LABELS.iter().map(|s| s.to_string()).collect()
}

pub fn corpus(per_class: usize) -> Vec<LabeledExample> {
    synth::keyword_corpus(per_class, 42)
}

pub fn prepared(per_class: usize, cfg: &TrainConfig) -> Vec<Prepared> {
    prepare(
        &corpus(per_class),
        &labels(),
        &Dictionary::builtin_english(),
        Language::Tamil,
        &cfg.features,
    )
    .expect("synthetic corpus uses its own labels")
}

pub fn model(head: HeadKind, cfg: &TrainConfig) -> ModelParams {
    ModelParams::init(
        cfg.features,
        cfg.emb_dim,
        head,
        cfg.scale,
        labels(),
        &mut rng::seeded(cfg.seed),
    )
    .expect("default configuration is valid")
}

pub fn features(cfg: &TrainConfig, n: usize) -> Vec<SparseVec> {
    corpus(n.div_ceil(4))
        .iter()
        .take(n)
        .map(|e| featurize(&e.text, &cfg.features))
        .collect()
}

/// A k×k paired table with mostly diagonal mass.
pub fn paired_counts(k: usize) -> Vec<Vec<u64>> {
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i == j {
                        50 + i as u64
                    } else {
                        ((i * 7 + j * 3) % 11) as u64 + 1
                    }
                })
                .collect()
        })
        .collect()
}
