//! Hashed character n-gram features and the classifier built on them.
//!
//! The network is `x -> e = Pᵀx -> head -> softmax`. The dot head computes
//! `W e + b`. The cosine head squashes `e` to a norm below one, unit-normalizes
//! every class row of `W` and takes scaled inner products; it has no bias.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const BOUNDARY_START: char = '\u{2402}';
pub const BOUNDARY_END: char = '\u{2403}';

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub n_min: u8,
    pub n_max: u8,
    pub feature_dim: usize,
    pub lowercase: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            n_min: 1,
            n_max: 4,
            feature_dim: 1 << 16,
            lowercase: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.n_min && self.n_min <= self.n_max && self.n_max <= 8) {
            return Err(Error::InvalidConfig(format!(
                "n-gram range {}..={} must satisfy 1 <= n_min <= n_max <= 8",
                self.n_min, self.n_max
            )));
        }
        if !self.feature_dim.is_power_of_two() || self.feature_dim < 256 || self.feature_dim > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "feature_dim {} must be a power of two >= 256",
                self.feature_dim
            )));
        }
        Ok(())
    }
}

/// 64-bit FNV-1a over `[n] ++ bytes`.
pub fn ngram_hash(n: u8, bytes: &[u8]) -> u64 {
    let mut h = (FNV_OFFSET ^ n as u64).wrapping_mul(FNV_PRIME);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Sparse vector with strictly increasing indices and no zero values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    pub entries: Vec<(u32, f64)>,
}

impl SparseVec {
    pub fn from_sorted(entries: Vec<(u32, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        SparseVec { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().copied()
    }
}

pub fn featurize(text: &str, cfg: &FeatureConfig) -> SparseVec {
    let lowered;
    let text = if cfg.lowercase {
        lowered = text.to_lowercase();
        lowered.as_str()
    } else {
        text
    };

    let mask = cfg.feature_dim as u64 - 1;
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    let mut chars: Vec<char> = Vec::new();
    let mut buf = String::new();
    for word in text.split_whitespace() {
        chars.clear();
        chars.push(BOUNDARY_START);
        chars.extend(word.chars());
        chars.push(BOUNDARY_END);
        for n in cfg.n_min..=cfg.n_max {
            for gram in chars.windows(n as usize) {
                buf.clear();
                buf.extend(gram);
                // feature_dim is a power of two
                let idx = (ngram_hash(n, buf.as_bytes()) & mask) as u32;
                *counts.entry(idx).or_insert(0.0) += 1.0;
            }
        }
    }

    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    SparseVec {
        entries: counts.into_iter().map(|(i, c)| (i, c / norm)).collect(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `‖e‖ / (1 + ‖e‖²)`: the factor that maps `e` to its squashed form.
fn squash_factor(r: f64) -> f64 {
    r / (1.0 + r * r)
}

/// Capsule squash: keeps the direction of `e` and maps its norm `r` to
/// `r² / (1 + r²)`.
pub fn squash(e: &[f64]) -> Vec<f64> {
    let f = squash_factor(l2(e));
    e.iter().map(|v| v * f).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / sum).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    Dot,
    Cosine,
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadKind::Dot => "dot",
            HeadKind::Cosine => "cosine",
        })
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(HeadKind::Dot),
            "cosine" => Ok(HeadKind::Cosine),
            _ => Err(Error::InvalidConfig(format!(
                "unknown head {s:?} (expected dot or cosine)"
            ))),
        }
    }
}

/// Classifier head. Weight matrices are row-major `C × emb_dim`.
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Dot { w: Vec<f64>, b: Vec<f64> },
    Cosine { w: Vec<f64>, scale: f64 },
}

impl Head {
    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Dot { .. } => HeadKind::Dot,
            Head::Cosine { .. } => HeadKind::Cosine,
        }
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            Head::Dot { w, .. } | Head::Cosine { w, .. } => w,
        }
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        match self {
            Head::Dot { w, .. } | Head::Cosine { w, .. } => w,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub features: FeatureConfig,
    pub emb_dim: usize,
    /// Row-major `feature_dim × emb_dim`.
    pub projection: Vec<f64>,
    pub head: Head,
    pub labels: Vec<String>,
}

impl ModelParams {
    /// Random initialization, uniform in `±1/√emb_dim`. The projection is
    /// drawn first, then the head weights; the dot-head bias starts at zero.
    pub fn init(
        features: FeatureConfig,
        emb_dim: usize,
        head: HeadKind,
        scale: f64,
        labels: Vec<String>,
        rng: &mut impl RngCore,
    ) -> Result<Self> {
        features.validate()?;
        if emb_dim == 0 {
            return Err(Error::InvalidConfig("emb_dim must be positive".into()));
        }
        let bound = 1.0 / (emb_dim as f64).sqrt();
        let projection = (0..features.feature_dim * emb_dim)
            .map(|_| rng::symmetric(rng, bound))
            .collect();
        let w: Vec<f64> = (0..labels.len() * emb_dim)
            .map(|_| rng::symmetric(rng, bound))
            .collect();
        let head = match head {
            HeadKind::Dot => Head::Dot {
                w,
                b: vec![0.0; labels.len()],
            },
            HeadKind::Cosine => Head::Cosine { w, scale },
        };
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

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn projection_row(&self, index: u32) -> &[f64] {
        let start = index as usize * self.emb_dim;
        &self.projection[start..start + self.emb_dim]
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        let c = self.num_classes();
        if c < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 classes, got {c}")));
        }
        if self.projection.len() != self.features.feature_dim * self.emb_dim {
            return Err(Error::ShapeMismatch(format!(
                "projection has {} entries, expected {}",
                self.projection.len(),
                self.features.feature_dim * self.emb_dim
            )));
        }
        if self.head.weights().len() != c * self.emb_dim {
            return Err(Error::ShapeMismatch(format!(
                "head weights have {} entries, expected {}",
                self.head.weights().len(),
                c * self.emb_dim
            )));
        }
        match &self.head {
            Head::Dot { b, .. } if b.len() != c => Err(Error::ShapeMismatch(format!(
                "bias has {} entries, expected {c}",
                b.len()
            ))),
            Head::Cosine { w, scale } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidConfig(format!("cosine scale {scale} must be positive")));
                }
                if w.chunks(self.emb_dim).any(|row| l2(row) == 0.0) {
                    return Err(Error::InvalidConfig("cosine head has a zero weight row".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub x: SparseVec,
    /// Embedding after the (optional) dropout mask.
    pub e: Vec<f64>,
    /// Squashed embedding; only the cosine head has one.
    pub e_norm: Option<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// Per-coordinate multipliers applied to `Pᵀx` (0 or `1/(1-p)`).
    pub dropout_mask: Option<Vec<f64>>,
}

pub fn forward(params: &ModelParams, x: &SparseVec) -> Result<ForwardTrace> {
    forward_masked(params, x, None)
}

pub fn forward_masked(params: &ModelParams, x: &SparseVec, dropout_mask: Option<Vec<f64>>) -> Result<ForwardTrace> {
    let dim = params.emb_dim;
    let mut e = vec![0.0; dim];
    for (idx, val) in x.iter() {
        if idx as usize >= params.features.feature_dim {
            return Err(Error::IndexOutOfRange {
                index: idx,
                dim: params.features.feature_dim,
            });
        }
        for (acc, p) in e.iter_mut().zip(params.projection_row(idx)) {
            *acc += val * p;
        }
    }
    if let Some(mask) = &dropout_mask {
        if mask.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "dropout mask has {} entries, expected {dim}",
                mask.len()
            )));
        }
        e.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
    }

    let (logits, e_norm): (Vec<f64>, _) = match &params.head {
        Head::Dot { w, b } => {
            let logits = w.chunks(dim).zip(b).map(|(row, bias)| dot(row, &e) + bias).collect();
            (logits, None)
        }
        Head::Cosine { w, scale } => {
            let u = squash(&e);
            let logits = w.chunks(dim).map(|row| scale * dot(row, &u) / l2(row)).collect();
            (logits, Some(u))
        }
    };
    let probs = softmax(&logits);
    Ok(ForwardTrace {
        x: x.clone(),
        e,
        e_norm,
        logits,
        probs,
        dropout_mask,
    })
}

/// Gradients of a scalar loss with respect to the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    /// Rows of the projection gradient, sorted by feature index. Rows not
    /// listed are zero.
    pub projection: Vec<(u32, Vec<f64>)>,
    pub w: Vec<f64>,
    pub b: Option<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        ParamGrads {
            projection: Vec::new(),
            w: vec![0.0; params.head.weights().len()],
            b: match &params.head {
                Head::Dot { b, .. } => Some(vec![0.0; b.len()]),
                Head::Cosine { .. } => None,
            },
        }
    }
}

pub fn backward(params: &ModelParams, trace: &ForwardTrace, dlogits: &[f64]) -> Result<ParamGrads> {
    let dim = params.emb_dim;
    let c = params.num_classes();
    if dlogits.len() != c || trace.logits.len() != c || trace.e.len() != dim {
        return Err(Error::ShapeMismatch(format!(
            "dlogits {} / logits {} / embedding {} vs classes {c}, emb_dim {dim}",
            dlogits.len(),
            trace.logits.len(),
            trace.e.len()
        )));
    }

    let mut dw = vec![0.0; c * dim];
    let mut de = vec![0.0; dim];
    let db = match &params.head {
        Head::Dot { w, .. } => {
            for ((g, row), drow) in dlogits.iter().zip(w.chunks(dim)).zip(dw.chunks_mut(dim)) {
                for k in 0..dim {
                    drow[k] = g * trace.e[k];
                    de[k] += g * row[k];
                }
            }
            Some(dlogits.to_vec())
        }
        Head::Cosine { w, scale } => {
            let u = trace
                .e_norm
                .as_ref()
                .ok_or_else(|| Error::ShapeMismatch("cosine trace without squashed embedding".into()))?;
            let mut du = vec![0.0; dim];
            for ((g, row), drow) in dlogits.iter().zip(w.chunks(dim)).zip(dw.chunks_mut(dim)) {
                let rn = l2(row);
                let cos = dot(u, row) / rn;
                let coef = scale * g / rn;
                for k in 0..dim {
                    let unit = row[k] / rn;
                    du[k] += scale * g * unit;
                    drow[k] = coef * (u[k] - cos * unit);
                }
            }
            // squash Jacobian: f(r) I + (f'(r)/r) e eᵀ, zero at the origin
            let r = l2(&trace.e);
            if r > 0.0 {
                let f = squash_factor(r);
                let r2 = r * r;
                let fprime_over_r = (1.0 - r2) / ((1.0 + r2) * (1.0 + r2) * r);
                let proj = fprime_over_r * dot(&trace.e, &du);
                for k in 0..dim {
                    de[k] = f * du[k] + proj * trace.e[k];
                }
            }
            None
        }
    };

    if let Some(mask) = &trace.dropout_mask {
        de.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
    }

    let projection = trace
        .x
        .iter()
        .map(|(idx, val)| (idx, de.iter().map(|d| d * val).collect()))
        .collect();

    Ok(ParamGrads {
        projection,
        w: dw,
        b: db,
    })
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

pub fn predict(params: &ModelParams, x: &SparseVec) -> Result<(usize, Vec<f64>)> {
    let trace = forward(params, x)?;
    Ok((argmax(&trace.probs), trace.probs))
}
