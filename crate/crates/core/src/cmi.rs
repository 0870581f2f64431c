//! Code-Mixing Index.
//!
//! For a sentence with `N` tokens of which `U` are language-independent, the
//! index is `1 - dominant / (N - U)` where `dominant` is the token count of
//! the more frequent language, and `0` when every token is universal. Native
//! and romanized native tokens count as one language, English as the other.
//! Values are kept as fractions in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textlang::{LangTag, TaggedSentence};

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmiScore {
    pub value: f64,
    pub n_tokens: usize,
    pub n_universal: usize,
    pub dominant_count: usize,
}

impl CmiScore {
    pub const ZERO: CmiScore = CmiScore {
        value: 0.0,
        n_tokens: 0,
        n_universal: 0,
        dominant_count: 0,
    };

    /// The index as an unreduced fraction `(numerator, denominator)`.
    /// `(0, 1)` when there are no language tokens.
    pub fn as_ratio(&self) -> (usize, usize) {
        let lang = self.n_tokens - self.n_universal;
        if lang == 0 {
            (0, 1)
        } else {
            (lang - self.dominant_count, lang)
        }
    }
}

/// CMI of a bare tag sequence.
pub fn cmi_from_tags<I>(tags: I) -> CmiScore
where
    I: IntoIterator<Item = LangTag>,
{
    let (mut native, mut english, mut universal) = (0usize, 0usize, 0usize);
    for tag in tags {
        match tag {
            LangTag::Native | LangTag::RomanizedNative => native += 1,
            LangTag::English => english += 1,
            LangTag::Universal => universal += 1,
        }
    }
    let lang = native + english;
    let dominant = native.max(english);
    let value = if lang == 0 {
        0.0
    } else {
        // one rounding step from the exact rational
        (lang - dominant) as f64 / lang as f64
    };
    CmiScore {
        value,
        n_tokens: lang + universal,
        n_universal: universal,
        dominant_count: dominant,
    }
}

pub fn sentence_cmi(sentence: &TaggedSentence) -> CmiScore {
    cmi_from_tags(sentence.tags())
}

/// Mean CMI over a batch.
pub fn batch_cmi(scores: &[CmiScore]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let sum: f64 = scores.iter().map(|s| s.value).sum();
    Ok((sum / scores.len() as f64).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusCmiProfile {
    pub mean: f64,
    pub histogram: [usize; HISTOGRAM_BINS],
    pub per_sentence: Vec<CmiScore>,
}

impl CorpusCmiProfile {
    pub fn len(&self) -> usize {
        self.per_sentence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_sentence.is_empty()
    }
}

/// Histogram bin of a value: `[k/10, (k+1)/10)`, with 1.0 in the last bin.
pub fn histogram_bin(value: f64) -> usize {
    ((value * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1)
}

pub fn corpus_profile(sentences: &[TaggedSentence]) -> CorpusCmiProfile {
    profile_from_scores(sentences.iter().map(sentence_cmi).collect())
}

pub fn profile_from_scores(per_sentence: Vec<CmiScore>) -> CorpusCmiProfile {
    let mut histogram = [0usize; HISTOGRAM_BINS];
    for s in &per_sentence {
        histogram[histogram_bin(s.value)] += 1;
    }
    let mean = if per_sentence.is_empty() {
        0.0
    } else {
        per_sentence.iter().map(|s| s.value).sum::<f64>() / per_sentence.len() as f64
    };
    CorpusCmiProfile {
        mean,
        histogram,
        per_sentence,
    }
}
