//! Tokenization and word-level language tagging for Dravidian-English
//! code-mixed text.
//!
//! Tags come from two signals: the Unicode script of each token's letters and
//! a plain English wordlist. Native-script tokens are native, Latin tokens are
//! English when the wordlist knows them and romanized native otherwise.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUILTIN_ENGLISH: &str = include_str!("../data/english_words.txt");

/// Script class of a token, decided by its letters only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScriptClass {
    Latin,
    NativeDravidian,
    Mixed,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LangTag {
    English,
    Native,
    RomanizedNative,
    Universal,
}

/// The native language of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Language {
    Tamil,
    Malayalam,
    Kannada,
}

impl Language {
    pub fn code(self) -> &'static str {
        match self {
            Language::Tamil => "ta",
            Language::Malayalam => "ml",
            Language::Kannada => "kn",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Language::Tamil => "Tamil",
            Language::Malayalam => "Malayalam",
            Language::Kannada => "Kannada",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ta" | "tamil" => Ok(Language::Tamil),
            "ml" | "malayalam" => Ok(Language::Malayalam),
            "kn" | "kannada" => Ok(Language::Kannada),
            other => Err(Error::InvalidConfig(format!("unknown language {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub script: ScriptClass,
    pub index: usize,
}

impl Token {
    /// Builds a token, classifying its script.
    ///
    /// Panics if `surface` is empty or contains whitespace.
    pub fn new(surface: impl Into<String>, index: usize) -> Self {
        let surface = surface.into();
        assert!(
            !surface.is_empty() && !surface.chars().any(char::is_whitespace),
            "token surface must be non-empty and whitespace-free"
        );
        let script = script_of(&surface);
        Token { surface, script, index }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedToken {
    pub token: Token,
    pub tag: LangTag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<TaggedToken>,
    pub target_language: Language,
}

impl TaggedSentence {
    pub fn tags(&self) -> impl Iterator<Item = LangTag> + '_ {
        self.tokens.iter().map(|t| t.tag)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A case-insensitive wordlist.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    entries: HashSet<String>,
    source_path: PathBuf,
}

impl Dictionary {
    /// Parses a word-per-line list. `#` lines are comments, blank lines are
    /// skipped, surrounding whitespace is trimmed.
    pub fn parse(text: &str, source_path: impl Into<PathBuf>) -> Self {
        let entries = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Dictionary {
            entries,
            source_path: source_path.into(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(text.trim_start_matches('\u{feff}'), path))
    }

    /// The small English wordlist shipped with the crate.
    pub fn builtin_english() -> Self {
        Self::parse(BUILTIN_ENGLISH, "<builtin:english_words.txt>")
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source_path(&self) -> &Path {
        &self.source_path
    }
}

fn is_dravidian(c: char) -> bool {
    matches!(c, '\u{0B80}'..='\u{0BFF}' | '\u{0C80}'..='\u{0CFF}' | '\u{0D00}'..='\u{0D7F}')
}

fn is_latin_letter(c: char) -> bool {
    c.is_alphabetic()
        && matches!(c,
            'A'..='Z' | 'a'..='z'
            | '\u{00C0}'..='\u{024F}'
            | '\u{1E00}'..='\u{1EFF}')
        && c != '\u{00D7}'
        && c != '\u{00F7}'
}

fn script_of(s: &str) -> ScriptClass {
    let (mut native, mut latin) = (false, false);
    for c in s.chars().filter(|c| c.is_alphabetic()) {
        if is_dravidian(c) {
            native = true;
        } else if is_latin_letter(c) {
            latin = true;
        }
    }
    match (native, latin) {
        (true, true) => ScriptClass::Mixed,
        (true, false) => ScriptClass::NativeDravidian,
        (false, true) => ScriptClass::Latin,
        (false, false) => ScriptClass::Other,
    }
}

/// Splits on whitespace. Punctuation stays attached to its token.
pub fn tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace()
        .enumerate()
        .map(|(i, s)| Token::new(s, i))
        .collect()
}

pub fn classify_script(token: &Token) -> ScriptClass {
    script_of(&token.surface)
}

/// Trims leading and trailing characters that are neither alphanumeric nor
/// part of a Dravidian block (vowel signs and viramas are not alphanumeric).
fn strip_edges(s: &str) -> &str {
    s.trim_matches(|c: char| !(c.is_alphanumeric() || is_dravidian(c)))
}

pub fn tag_token(token: &Token, dict: &Dictionary) -> LangTag {
    let surface = token.surface.as_str();
    if surface.starts_with('@') || surface.to_lowercase().starts_with("http") {
        return LangTag::Universal;
    }
    let body = surface.trim_start_matches('#');
    if !body.chars().any(char::is_alphabetic) {
        return LangTag::Universal;
    }
    match script_of(body) {
        ScriptClass::NativeDravidian | ScriptClass::Mixed => LangTag::Native,
        ScriptClass::Latin => {
            if dict.contains(strip_edges(body)) {
                LangTag::English
            } else {
                LangTag::RomanizedNative
            }
        }
        // Letters from some other script: neither English nor language-free.
        ScriptClass::Other => LangTag::Native,
    }
}

pub fn tag_sentence(text: &str, dict: &Dictionary, lang: Language) -> TaggedSentence {
    let tokens = tokenize(text)
        .into_iter()
        .map(|token| {
            let tag = tag_token(&token, dict);
            TaggedToken { token, tag }
        })
        .collect();
    TaggedSentence {
        tokens,
        target_language: lang,
    }
}
