//! Datasets, label vocabularies, prediction files and the binary model file.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureConfig, Head, ModelParams};
use crate::textlang::Language;

const CLASS_COUNTS: &str = include_str!("../data/class_counts.tsv");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: String,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, label: impl Into<String>) -> Self {
        LabeledExample {
            text: text.into(),
            label: label.into(),
        }
    }
}

/// Ordered, duplicate-free class names. A class's index is its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVocabulary {
    names: Vec<String>,
}

impl LabelVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::InvalidConfig(format!("duplicate label {dup:?}")));
        }
        Ok(LabelVocabulary { names })
    }

    /// The shared-task classes. Malayalam has no
    /// `Offensive_Targeted_Insult_Other` examples and so no such class.
    pub fn for_language(lang: Language) -> Self {
        let mut names = vec![
            "Not_offensive".to_string(),
            format!("not-{}", lang.name()),
            "Offensive_Targeted_Insult_Individual".to_string(),
            "Offensive_Targeted_Insult_Group".to_string(),
            "Offensive_Untargeted".to_string(),
        ];
        if lang != Language::Malayalam {
            names.push("Offensive_Targeted_Insult_Other".to_string());
        }
        LabelVocabulary { names }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.names.iter().position(|n| n == label)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Per-class example counts of the shared-task datasets, in vocabulary order.
pub fn class_count_fixture(lang: Language) -> Vec<(String, u64)> {
    let column = match lang {
        Language::Kannada => 1,
        Language::Malayalam => 2,
        Language::Tamil => 3,
    };
    CLASS_COUNTS
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .filter_map(|l| {
            let fields: Vec<&str> = l.split('\t').collect();
            let count = fields.get(column)?.parse().ok()?;
            let name = fields[0].replace("<Language>", lang.name());
            Some((name, count))
        })
        .collect()
}

fn read_text(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(match text.strip_prefix('\u{feff}') {
        Some(rest) => rest.to_string(),
        None => text,
    })
}

/// A raw `text<TAB>label` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsvRecord {
    pub line: usize,
    pub text: String,
    pub label: String,
}

/// Splits `text<TAB>label` lines at the final TAB. Blank lines are skipped;
/// a TAB left inside the text, or an empty text, is an error.
pub fn parse_tsv(contents: &str, has_header: bool, path: &Path) -> Result<Vec<TsvRecord>> {
    let mut out = Vec::new();
    for (i, raw) in contents.split('\n').enumerate() {
        let line_no = i + 1;
        if has_header && i == 0 {
            continue;
        }
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: &str| Error::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            reason: reason.to_string(),
        };
        let (text, label) = line
            .rsplit_once('\t')
            .ok_or_else(|| malformed("expected text<TAB>label"))?;
        if text.contains('\t') {
            return Err(malformed("embedded TAB in text"));
        }
        if text.trim().is_empty() {
            return Err(malformed("empty text"));
        }
        let label = label.trim();
        if label.is_empty() {
            return Err(malformed("empty label"));
        }
        out.push(TsvRecord {
            line: line_no,
            text: text.to_string(),
            label: label.to_string(),
        });
    }
    Ok(out)
}

pub fn load_tsv(path: impl AsRef<Path>, has_header: bool, vocab: &LabelVocabulary) -> Result<Vec<LabeledExample>> {
    let path = path.as_ref();
    let records = parse_tsv(&read_text(path)?, has_header, path)?;
    records
        .into_iter()
        .map(|r| {
            if vocab.index_of(&r.label).is_none() {
                return Err(Error::UnknownLabel {
                    line: Some(r.line),
                    label: r.label,
                });
            }
            Ok(LabeledExample::new(r.text, r.label))
        })
        .collect()
}

pub fn write_tsv(path: impl AsRef<Path>, examples: &[LabeledExample]) -> Result<()> {
    let path = path.as_ref();
    write_lines(path, examples.iter().map(|e| format!("{}\t{}", e.text, e.label)))
}

/// The text column of every line: everything before the final TAB, or the
/// whole line when it has none. Produces one entry per line, blank lines
/// included (a trailing newline does not start a new line).
pub fn read_texts(path: impl AsRef<Path>, has_header: bool) -> Result<Vec<String>> {
    let path = path.as_ref();
    let contents = read_text(path)?;
    let body = contents.strip_suffix('\n').unwrap_or(&contents);
    if body.is_empty() {
        return Ok(Vec::new());
    }
    Ok(body
        .split('\n')
        .skip(usize::from(has_header))
        .map(|raw| {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            match line.rsplit_once('\t') {
                Some((text, _)) => text.to_string(),
                None => line.to_string(),
            }
        })
        .collect())
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub prob: f64,
}

pub fn format_prediction(p: &Prediction) -> String {
    format!("{}\t{:.6}", p.label, p.prob)
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[Prediction]) -> Result<()> {
    write_lines(path.as_ref(), preds.iter().map(format_prediction))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let contents = read_text(path)?;
    contents
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let malformed = |reason: &str| Error::MalformedLine {
                path: path.to_path_buf(),
                line: i + 1,
                reason: reason.to_string(),
            };
            let (label, prob) = l.split_once('\t').ok_or_else(|| malformed("expected label<TAB>prob"))?;
            let prob = prob
                .trim()
                .parse()
                .map_err(|_| malformed("probability is not a number"))?;
            Ok(Prediction {
                label: label.to_string(),
                prob,
            })
        })
        .collect()
}

/// Labels from either a prediction file (`label<TAB>prob`) or a dataset
/// (`text<TAB>label`). A line whose last field parses as a number is read
/// as a prediction, any other line as a dataset record.
pub fn read_labels(path: impl AsRef<Path>, has_header: bool) -> Result<Vec<String>> {
    let path = path.as_ref();
    let contents = read_text(path)?;
    let mut labels = Vec::new();
    for (i, raw) in contents.lines().enumerate() {
        if has_header && i == 0 {
            continue;
        }
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (head, tail) = line.rsplit_once('\t').ok_or_else(|| Error::MalformedLine {
            path: path.to_path_buf(),
            line: i + 1,
            reason: "expected two TAB-separated fields".into(),
        })?;
        let label = if tail.trim().parse::<f64>().is_ok() {
            head.split('\t').next().unwrap_or(head)
        } else {
            tail
        };
        labels.push(label.trim().to_string());
    }
    Ok(labels)
}

const MAGIC: &[u8; 4] = b"CMFL";
const VERSION: u32 = 1;

/// Serializes a model to the little-endian binary layout:
/// magic, version, head type, dimensions, feature settings, scale,
/// projection, head weights, bias (dot head only), label vocabulary.
pub fn encode_model(params: &ModelParams) -> Vec<u8> {
    let f = &params.features;
    let c = params.num_classes();
    let mut out = Vec::with_capacity(48 + 8 * (params.projection.len() + params.head.weights().len() + c));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let (head_type, scale) = match &params.head {
        Head::Dot { .. } => (0u8, 1.0),
        Head::Cosine { scale, .. } => (1u8, *scale),
    };
    out.push(head_type);
    out.extend_from_slice(&(f.feature_dim as u32).to_le_bytes());
    out.extend_from_slice(&(params.emb_dim as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    out.push(f.n_min);
    out.push(f.n_max);
    out.push(u8::from(f.lowercase));
    out.extend_from_slice(&f64::to_le_bytes(scale));
    for v in params.projection.iter().chain(params.head.weights()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Head::Dot { b, .. } = &params.head {
        for v in b {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(c as u32).to_le_bytes());
    for label in &params.labels {
        out.extend_from_slice(&(label.len() as u32).to_le_bytes());
        out.extend_from_slice(label.as_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or(Error::Truncated)?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { buf: bytes };
    let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let head_type = r.u8()?;
    let feature_dim = r.u32()? as usize;
    let emb_dim = r.u32()? as usize;
    let classes = r.u32()? as usize;
    let features = FeatureConfig {
        n_min: r.u8()?,
        n_max: r.u8()?,
        lowercase: r.u8()? != 0,
        feature_dim,
    };
    features.validate()?;
    let scale = r.f64()?;
    let projection = r.f64s(feature_dim.checked_mul(emb_dim).ok_or(Error::Truncated)?)?;
    let w = r.f64s(classes.checked_mul(emb_dim).ok_or(Error::Truncated)?)?;
    let head = match head_type {
        0 => Head::Dot { w, b: r.f64s(classes)? },
        1 => Head::Cosine { w, scale },
        other => return Err(Error::InvalidConfig(format!("unknown head type {other}"))),
    };
    let n_labels = r.u32()? as usize;
    if n_labels != classes {
        return Err(Error::ShapeMismatch(format!("{n_labels} labels for {classes} classes")));
    }
    let mut labels = Vec::with_capacity(n_labels);
    for _ in 0..n_labels {
        let len = r.u32()? as usize;
        let raw = r.take(len)?;
        labels.push(String::from_utf8(raw.to_vec()).map_err(|_| Error::InvalidConfig("label is not UTF-8".into()))?);
    }
    if !r.buf.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{} trailing bytes after model",
            r.buf.len()
        )));
    }
    let params = ModelParams {
        features,
        emb_dim,
        projection,
        head,
        labels,
    };
    params.validate()?;
    Ok(params)
}

pub fn save_model(path: impl AsRef<Path>, params: &ModelParams) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(params)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
