//! Losses and their gradients with respect to the logits.
//!
//! All three kinds are class-weighted cross-entropy at heart:
//!
//! * `Ce`: `-w_y ln p_y`
//! * `Focal`: `-w_y (1 - p_y)^γ ln p_y`
//! * `CmiFl`: `α·CE·(1 - CMI)^γ + α·CE·CMI^γ`, i.e. cross-entropy times a
//!   multiplier that depends only on how code-mixed the input is. It is
//!   smallest (`α`) for monolingual text and largest (`α·2^(1-γ)`) at
//!   `CMI = 0.5`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cmi::{batch_cmi, CmiScore};
use crate::error::{Error, Result};
use crate::model::ForwardTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Ce,
    Focal,
    CmiFl,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Ce => "ce",
            LossKind::Focal => "focal",
            LossKind::CmiFl => "cmi-fl",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(LossKind::Ce),
            "focal" => Ok(LossKind::Focal),
            "cmi-fl" => Ok(LossKind::CmiFl),
            _ => Err(Error::InvalidConfig(format!(
                "unknown loss {s:?} (expected ce, focal or cmi-fl)"
            ))),
        }
    }
}

/// Which CMI feeds the CMI-FL multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmiMode {
    /// Mean CMI of the batch, shared by every example in it.
    PerBatch,
    PerSentence,
}

impl fmt::Display for CmiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmiMode::PerBatch => "batch",
            CmiMode::PerSentence => "sentence",
        })
    }
}

impl FromStr for CmiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(CmiMode::PerBatch),
            "sentence" => Ok(CmiMode::PerSentence),
            _ => Err(Error::InvalidConfig(format!(
                "unknown cmi mode {s:?} (expected batch or sentence)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    pub alpha: f64,
    pub gamma: f64,
    pub use_class_weights: bool,
    pub cmi_mode: CmiMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            kind: LossKind::CmiFl,
            alpha: 1.7,
            gamma: 0.25,
            use_class_weights: true,
            cmi_mode: CmiMode::PerBatch,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha {} must be positive", self.alpha)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma {} must be non-negative",
                self.gamma
            )));
        }
        if self.kind == LossKind::CmiFl && self.gamma == 0.0 {
            log::warn!("cmi-fl with gamma = 0 ignores code-mixing: the loss is 2·alpha·CE everywhere");
        }
        Ok(())
    }
}

/// Per-class loss weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(classes: usize) -> Self {
        ClassWeights { w: vec![1.0; classes] }
    }

    /// Inverse-frequency weights `N / (C · N_c)`, so that the
    /// frequency-weighted mean weight is one.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        if let Some(class) = counts.iter().position(|&n| n == 0) {
            return Err(Error::ZeroCount { class });
        }
        let total: u64 = counts.iter().sum();
        let c = counts.len() as f64;
        Ok(ClassWeights {
            w: counts.iter().map(|&n| total as f64 / (c * n as f64)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub dlogits: Vec<f64>,
}

fn target_prob(probs: &[f64], y: usize, w: &ClassWeights) -> Result<f64> {
    if y >= probs.len() {
        return Err(Error::UnknownLabel {
            line: None,
            label: format!("class index {y}"),
        });
    }
    if w.len() != probs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} class weights for {} classes",
            w.len(),
            probs.len()
        )));
    }
    let p = probs[y];
    if !(p > 0.0) {
        return Err(Error::NonFiniteProb { prob: p });
    }
    Ok(p)
}

fn scaled_residual(probs: &[f64], y: usize, scale: f64) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(j, &p)| scale * (p - if j == y { 1.0 } else { 0.0 }))
        .collect()
}

pub fn weighted_ce(probs: &[f64], y: usize, w: &ClassWeights) -> Result<LossValue> {
    let p = target_prob(probs, y, w)?;
    let wy = w.w[y];
    Ok(LossValue {
        value: -wy * p.ln(),
        dlogits: scaled_residual(probs, y, wy),
    })
}

/// Focal loss. With `p = p_y`, the logit gradient is
/// `w_y · [(1-p)^γ - γ p (1-p)^(γ-1) ln p] · (probs - onehot(y))`.
pub fn focal(probs: &[f64], y: usize, w: &ClassWeights, gamma: f64) -> Result<LossValue> {
    let p = target_prob(probs, y, w)?;
    let wy = w.w[y];
    let q = 1.0 - p;
    let modulator = pow_zero(q, gamma);
    let ln_p = p.ln();
    // the second term vanishes at q = 0 for every γ > 0 (ln p ~ -q)
    let correction = if gamma == 0.0 || q == 0.0 {
        0.0
    } else {
        gamma * p * q.powf(gamma - 1.0) * ln_p
    };
    Ok(LossValue {
        value: wy * modulator * -ln_p,
        dlogits: scaled_residual(probs, y, wy * (modulator - correction)),
    })
}

/// `base^exp` with `0^0 = 1` and `0^γ = 0` for `γ > 0`.
fn pow_zero(base: f64, exp: f64) -> f64 {
    if base == 0.0 {
        if exp == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        base.powf(exp)
    }
}

/// `α · [(1 - cmi)^γ + cmi^γ]`.
pub fn cmi_multiplier(cmi: f64, alpha: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&cmi) {
        return Err(Error::Domain(format!("CMI {cmi} outside [0, 1]")));
    }
    Ok(alpha * (pow_zero(1.0 - cmi, gamma) + pow_zero(cmi, gamma)))
}

/// Scales a cross-entropy value and its gradient by the CMI multiplier. CMI
/// does not depend on the parameters, so the gradient scales the same way.
pub fn cmi_fl(ce: &LossValue, cmi: f64, alpha: f64, gamma: f64) -> Result<LossValue> {
    let m = cmi_multiplier(cmi, alpha, gamma)?;
    Ok(LossValue {
        value: m * ce.value,
        dlogits: ce.dlogits.iter().map(|d| m * d).collect(),
    })
}

/// Loss of one example under `cfg`, given the CMI that applies to it.
pub fn example_loss(probs: &[f64], y: usize, cfg: &LossConfig, w: &ClassWeights, cmi: f64) -> Result<LossValue> {
    match cfg.kind {
        LossKind::Ce => weighted_ce(probs, y, w),
        LossKind::Focal => focal(probs, y, w, cfg.gamma),
        LossKind::CmiFl => cmi_fl(&weighted_ce(probs, y, w)?, cmi, cfg.alpha, cfg.gamma),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub mean: f64,
    /// Per-example logit gradients of the batch mean (already divided by the
    /// batch size).
    pub dlogits: Vec<Vec<f64>>,
}

pub fn batch_loss(
    traces: &[ForwardTrace],
    labels: &[usize],
    cfg: &LossConfig,
    w: &ClassWeights,
    cmis: &[CmiScore],
) -> Result<BatchLoss> {
    if traces.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for len in [labels.len(), cmis.len()] {
        if len != traces.len() {
            return Err(Error::LengthMismatch {
                left: traces.len(),
                right: len,
            });
        }
    }
    let shared = match cfg.cmi_mode {
        CmiMode::PerBatch => Some(batch_cmi(cmis)?),
        CmiMode::PerSentence => None,
    };
    let n = traces.len() as f64;
    let mut total = 0.0;
    let mut dlogits = Vec::with_capacity(traces.len());
    for ((trace, &y), score) in traces.iter().zip(labels).zip(cmis) {
        let cmi = shared.unwrap_or(score.value);
        let lv = example_loss(&trace.probs, y, cfg, w, cmi)?;
        total += lv.value;
        dlogits.push(lv.dlogits.into_iter().map(|d| d / n).collect());
    }
    Ok(BatchLoss {
        mean: total / n,
        dlogits,
    })
}
