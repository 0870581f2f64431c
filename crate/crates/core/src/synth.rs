//! Synthetic code-mixed corpora for tests, benchmarks and demos.
//!
//! Sentences mix romanized Dravidian filler, native-script filler and
//! common English words. Class identity is carried only by keyword stems.

use crate::dataio::LabeledExample;
use crate::rng::{self, Rng};

pub const KEYWORD_LABELS: [&str; 4] = ["cinema", "sports", "politics", "music"];

/// Three stems per class; no stem is a substring of another class's stem.
const STEMS: [[&str; 3]; 4] = [
    ["padamzx", "trailerq", "heroqz"],
    ["kriketv", "goalvk", "matchkw"],
    ["votejh", "partijx", "netajq"],
    ["paattuy", "isaiyv", "ragamyj"],
];

const SUFFIXES: [&str; 4] = ["", "u", "la", "kku"];

const ROMANIZED: [&str; 24] = [
    "nalla", "romba", "semma", "enna", "ithu", "athu", "vera", "level", "mass", "thalaiva", "anna", "machan",
    "kandippa", "sollunga", "paakanum", "pola", "illa", "iruku", "varum", "ponga", "namma", "unga", "sema", "kalakku",
];

const NATIVE: [&str; 12] = [
    "நல்ல",
    "இது",
    "அது",
    "என்ன",
    "வேற",
    "நம்ம",
    "ഇത്",
    "നല്ല",
    "ಇದು",
    "ಒಳ್ಳೆಯ",
    "சூப்பர்",
    "அருமை",
];

const ENGLISH: [&str; 16] = [
    "the", "is", "very", "good", "this", "what", "waiting", "for", "super", "best", "and", "one", "all", "time",
    "really", "nice",
];

const UNIVERSAL: [&str; 5] = ["!!", "2024", "...", "100%", "@fan"];

const RARE_CUES: [&str; 3] = ["kevalamzq", "mokkaiqx", "waste9x"];

fn filler_word(r: &mut Rng) -> &'static str {
    match rng::below(r, 20) {
        0..=8 => rng::choose(r, &ROMANIZED),
        9..=12 => rng::choose(r, &NATIVE),
        13..=18 => rng::choose(r, &ENGLISH),
        _ => rng::choose(r, &UNIVERSAL),
    }
}

fn filler(r: &mut Rng, min: usize, max: usize) -> Vec<String> {
    let n = min + rng::below(r, max - min + 1);
    (0..n).map(|_| filler_word(r).to_string()).collect()
}

fn insert_at_random(r: &mut Rng, words: &mut Vec<String>, word: String) {
    let at = rng::below(r, words.len() + 1);
    words.insert(at, word);
}

/// Balanced 4-class corpus, `per_class` sentences per label, shuffled.
/// Every sentence holds one or two keyword variants of its class among
/// 4 to 10 filler tokens.
pub fn keyword_corpus(per_class: usize, seed: u64) -> Vec<LabeledExample> {
    let mut r = rng::seeded(seed);
    let mut out = Vec::with_capacity(per_class * KEYWORD_LABELS.len());
    for (class, label) in KEYWORD_LABELS.iter().enumerate() {
        for _ in 0..per_class {
            let mut words = filler(&mut r, 4, 10);
            let keywords = 1 + rng::below(&mut r, 2);
            for _ in 0..keywords {
                let stem = rng::choose(&mut r, &STEMS[class]);
                let suffix = rng::choose(&mut r, &SUFFIXES);
                insert_at_random(&mut r, &mut words, format!("{stem}{suffix}"));
            }
            out.push(LabeledExample::new(words.join(" "), *label));
        }
    }
    rng::shuffle(&mut r, &mut out);
    out
}

/// Texts drawn like [`keyword_corpus`] with labels dropped.
pub fn unlabeled_texts(n: usize, seed: u64) -> Vec<String> {
    let per_class = n.div_ceil(KEYWORD_LABELS.len());
    keyword_corpus(per_class, seed)
        .into_iter()
        .take(n)
        .map(|e| e.text)
        .collect()
}

pub const IMBALANCED_LABELS: [&str; 2] = ["common", "rare"];

/// Binary corpus of `n` sentences where about `rare_fraction` belong to
/// `rare`. The rare class carries a cue word in 70% of its sentences; the
/// common class carries one in 10% of its sentences, so the classes overlap.
pub fn imbalanced_corpus(n: usize, rare_fraction: f64, seed: u64) -> Vec<LabeledExample> {
    let mut r = rng::seeded(seed);
    let rare = ((n as f64) * rare_fraction).round() as usize;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let is_rare = i < rare;
        let cue_rate = if is_rare { 0.7 } else { 0.1 };
        let mut words = filler(&mut r, 4, 10);
        if rng::unit(&mut r) < cue_rate {
            let cue = rng::choose(&mut r, &RARE_CUES);
            insert_at_random(&mut r, &mut words, cue.to_string());
        }
        let label = IMBALANCED_LABELS[usize::from(is_rare)];
        out.push(LabeledExample::new(words.join(" "), label));
    }
    rng::shuffle(&mut r, &mut out);
    out
}
