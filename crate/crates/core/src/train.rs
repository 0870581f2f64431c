//! Mini-batch training with Adam, and two-phase pseudo-label training.
//!
//! The projection matrix is large and each batch touches only a few of its
//! rows, so its Adam moments are updated lazily: a row is brought up to date
//! (zero-gradient steps included) only when a batch touches it or when the
//! optimizer is flushed. The result equals dense Adam.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cmi::{sentence_cmi, CmiScore};
use crate::dataio::LabeledExample;
use crate::error::{Error, Result};
use crate::loss::{batch_loss, ClassWeights, LossConfig};
use crate::model::{
    argmax, backward, featurize, forward, forward_masked, FeatureConfig, Head, HeadKind, ModelParams, ParamGrads,
    SparseVec,
};
use crate::rng;
use crate::textlang::{tag_sentence, Dictionary, Language};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub seed: u64,
    pub loss: LossConfig,
    pub head: HeadKind,
    /// Logit scale of the cosine head.
    pub scale: f64,
    pub emb_dim: usize,
    pub features: FeatureConfig,
    /// Dropout probability on the embedding during training.
    pub dropout: f64,
    /// Minimum max-probability for a pseudo-label to be kept.
    pub pseudo_threshold: f64,
    /// Continue from the phase-1 model in pseudo-label training instead of
    /// starting phase 2 from a fresh initialization.
    pub continue_training: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            adam: AdamHyper::default(),
            seed: 42,
            loss: LossConfig::default(),
            head: HeadKind::Cosine,
            scale: 1.0,
            emb_dim: 32,
            features: FeatureConfig::default(),
            dropout: 0.0,
            pseudo_threshold: 0.0,
            continue_training: false,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("bad boolean {value:?} for {key}"))),
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "epochs",
        "batch_size",
        "learning_rate",
        "adam.beta1",
        "adam.beta2",
        "adam.epsilon",
        "seed",
        "loss.kind",
        "loss.alpha",
        "loss.gamma",
        "loss.class_weights",
        "loss.cmi_mode",
        "head",
        "head.scale",
        "emb_dim",
        "feature.n_min",
        "feature.n_max",
        "feature.dim",
        "feature.lowercase",
        "dropout",
        "pseudo_threshold",
        "pseudo.continue",
    ];

    /// Sets one field from its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "epochs" => self.epochs = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "learning_rate" | "lr" => self.adam.learning_rate = parse_value(key, v)?,
            "adam.beta1" => self.adam.beta1 = parse_value(key, v)?,
            "adam.beta2" => self.adam.beta2 = parse_value(key, v)?,
            "adam.epsilon" => self.adam.epsilon = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "loss.kind" => self.loss.kind = v.parse()?,
            "loss.alpha" => self.loss.alpha = parse_value(key, v)?,
            "loss.gamma" => self.loss.gamma = parse_value(key, v)?,
            "loss.class_weights" => self.loss.use_class_weights = parse_bool(key, v)?,
            "loss.cmi_mode" => self.loss.cmi_mode = v.parse()?,
            "head" => self.head = v.parse()?,
            "head.scale" => self.scale = parse_value(key, v)?,
            "emb_dim" => self.emb_dim = parse_value(key, v)?,
            "feature.n_min" => self.features.n_min = parse_value(key, v)?,
            "feature.n_max" => self.features.n_max = parse_value(key, v)?,
            "feature.dim" => self.features.feature_dim = parse_value(key, v)?,
            "feature.lowercase" => self.features.lowercase = parse_bool(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "pseudo_threshold" => self.pseudo_threshold = parse_value(key, v)?,
            "pseudo.continue" => self.continue_training = parse_bool(key, v)?,
            other => return Err(Error::InvalidConfig(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file on top of `self`. `#` starts a comment.
    pub fn apply_file_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        let a = &self.adam;
        // zero is accepted: it freezes the parameters
        if !(a.learning_rate >= 0.0 && a.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return Err(Error::InvalidConfig(
                "adam betas must lie in [0, 1) and epsilon be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.pseudo_threshold) {
            return Err(Error::InvalidConfig("pseudo_threshold must lie in [0, 1]".into()));
        }
        if self.emb_dim == 0 {
            return Err(Error::InvalidConfig("emb_dim must be positive".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidConfig("head.scale must be positive".into()));
        }
        self.features.validate()?;
        self.loss.validate()
    }
}

/// Adam moments for every parameter, with a per-row clock for the
/// projection.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m_projection: Vec<f64>,
    pub v_projection: Vec<f64>,
    /// Step up to which each projection row has been updated.
    pub row_step: Vec<u64>,
    pub m_w: Vec<f64>,
    pub v_w: Vec<f64>,
    pub m_b: Vec<f64>,
    pub v_b: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let np = params.projection.len();
        let nw = params.head.weights().len();
        let nb = match &params.head {
            Head::Dot { b, .. } => b.len(),
            Head::Cosine { .. } => 0,
        };
        AdamState {
            m_projection: vec![0.0; np],
            v_projection: vec![0.0; np],
            row_step: vec![0; params.features.feature_dim],
            m_w: vec![0.0; nw],
            v_w: vec![0.0; nw],
            m_b: vec![0.0; nb],
            v_b: vec![0.0; nb],
            t: 0,
        }
    }
}

struct StepConsts {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    corr1: f64,
    corr2: f64,
}

impl StepConsts {
    fn at(h: &AdamHyper, step: u64) -> Self {
        let s = step as f64;
        StepConsts {
            lr: h.learning_rate,
            b1: h.beta1,
            b2: h.beta2,
            eps: h.epsilon,
            corr1: 1.0 - h.beta1.powf(s),
            corr2: 1.0 - h.beta2.powf(s),
        }
    }

    #[inline]
    fn update(&self, theta: &mut f64, m: &mut f64, v: &mut f64, g: f64) -> f64 {
        *m = self.b1 * *m + (1.0 - self.b1) * g;
        *v = self.b2 * *v + (1.0 - self.b2) * g * g;
        let delta = self.lr * (*m / self.corr1) / ((*v / self.corr2).sqrt() + self.eps);
        *theta -= delta;
        delta
    }
}

/// Below this per-step movement a row's remaining zero-gradient steps are
/// skipped. The movement shrinks geometrically (ratio `β1/√β2`), so the
/// skipped total is a small multiple of this.
const CATCH_UP_CUTOFF: f64 = 1e-17;

/// Applies the zero-gradient steps `row_step+1 ..= upto` to one row.
fn catch_up_row(params: &mut ModelParams, state: &mut AdamState, h: &AdamHyper, row: usize, upto: u64) {
    let from = state.row_step[row];
    if from >= upto {
        return;
    }
    state.row_step[row] = upto;
    let dim = params.emb_dim;
    let span = row * dim..(row + 1) * dim;
    let m = &mut state.m_projection[span.clone()];
    let v = &mut state.v_projection[span.clone()];
    if m.iter().all(|&x| x == 0.0) && v.iter().all(|&x| x == 0.0) {
        return;
    }
    let theta = &mut params.projection[span];
    let can_cut = h.beta1 < h.beta2.sqrt();
    let mut step = from + 1;
    while step <= upto {
        let k = StepConsts::at(h, step);
        let mut largest = 0.0f64;
        for i in 0..dim {
            let d = k.update(&mut theta[i], &mut m[i], &mut v[i], 0.0);
            largest = largest.max(d.abs());
        }
        step += 1;
        if can_cut && largest < CATCH_UP_CUTOFF && step <= upto {
            let rest = (upto - step + 1) as i32;
            let (d1, d2) = (h.beta1.powi(rest), h.beta2.powi(rest));
            m.iter_mut().for_each(|x| *x *= d1);
            v.iter_mut().for_each(|x| *x *= d2);
            break;
        }
    }
}

/// One Adam step. Projection rows in `grads` are brought up to date and
/// stepped; other rows are left for later catch-up.
pub fn adam_step(params: &mut ModelParams, grads: &ParamGrads, state: &mut AdamState, h: &AdamHyper) -> Result<()> {
    let dim = params.emb_dim;
    if grads.w.len() != params.head.weights().len()
        || state.m_w.len() != grads.w.len()
        || state.row_step.len() != params.features.feature_dim
    {
        return Err(Error::ShapeMismatch(
            "gradients or optimizer state do not match the model".into(),
        ));
    }
    if grads.projection.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::ShapeMismatch(
            "projection gradient rows must be strictly increasing".into(),
        ));
    }
    for (idx, row) in &grads.projection {
        if *idx as usize >= params.features.feature_dim || row.len() != dim {
            return Err(Error::ShapeMismatch(format!("bad projection gradient row {idx}")));
        }
    }

    state.t += 1;
    let t = state.t;
    let k = StepConsts::at(h, t);

    for (idx, g) in &grads.projection {
        let row = *idx as usize;
        catch_up_row(params, state, h, row, t - 1);
        let base = row * dim;
        for i in 0..dim {
            k.update(
                &mut params.projection[base + i],
                &mut state.m_projection[base + i],
                &mut state.v_projection[base + i],
                g[i],
            );
        }
        state.row_step[row] = t;
    }

    let w = params.head.weights_mut();
    for i in 0..w.len() {
        k.update(&mut w[i], &mut state.m_w[i], &mut state.v_w[i], grads.w[i]);
    }
    match (&mut params.head, &grads.b) {
        (Head::Dot { b, .. }, Some(gb)) if gb.len() == b.len() && state.m_b.len() == b.len() => {
            for i in 0..b.len() {
                k.update(&mut b[i], &mut state.m_b[i], &mut state.v_b[i], gb[i]);
            }
        }
        (Head::Cosine { .. }, None) => {}
        _ => return Err(Error::ShapeMismatch("bias gradient does not match the head".into())),
    }
    Ok(())
}

/// Brings every projection row up to the current step.
pub fn flush(params: &mut ModelParams, state: &mut AdamState, h: &AdamHyper) {
    let t = state.t;
    for row in 0..params.features.feature_dim {
        catch_up_row(params, state, h, row, t);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1 for ordinary training and pseudo-label phase 1, 2 for phase 2.
    pub phase: u32,
    pub epoch: usize,
    pub mean_loss: f64,
    /// Accuracy on the training set with the parameters at the end of the
    /// epoch.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub wall_seconds: f64,
}

impl TrainHistory {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.accuracy)
    }
}

/// A training example after featurization and tagging.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub x: SparseVec,
    pub cmi: CmiScore,
    pub label: usize,
}

pub fn prepare(
    examples: &[LabeledExample],
    labels: &[String],
    dict: &Dictionary,
    lang: Language,
    features: &FeatureConfig,
) -> Result<Vec<Prepared>> {
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    examples
        .iter()
        .map(|ex| {
            let label = *index.get(ex.label.as_str()).ok_or_else(|| Error::UnknownLabel {
                line: None,
                label: ex.label.clone(),
            })?;
            Ok(Prepared {
                x: featurize(&ex.text, features),
                cmi: sentence_cmi(&tag_sentence(&ex.text, dict, lang)),
                label,
            })
        })
        .collect()
}

/// Inverse-frequency weights over the classes present in the data. Classes
/// with no examples never appear as targets and get weight one.
pub fn class_weights_for(data: &[Prepared], classes: usize) -> Result<ClassWeights> {
    let mut counts = vec![0u64; classes];
    for ex in data {
        counts[ex.label] += 1;
    }
    let present: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
    let mut present_w = ClassWeights::from_counts(&present)?.w.into_iter();
    Ok(ClassWeights {
        w: counts
            .iter()
            .map(|&c| if c > 0 { present_w.next().unwrap_or(1.0) } else { 1.0 })
            .collect(),
    })
}

fn accumulate(total: &mut ParamGrads, rows: &mut BTreeMap<u32, Vec<f64>>, g: ParamGrads) {
    for (idx, row) in g.projection {
        match rows.get_mut(&idx) {
            Some(acc) => acc.iter_mut().zip(&row).for_each(|(a, r)| *a += r),
            None => {
                rows.insert(idx, row);
            }
        }
    }
    total.w.iter_mut().zip(&g.w).for_each(|(a, r)| *a += r);
    if let (Some(acc), Some(b)) = (total.b.as_mut(), g.b.as_ref()) {
        acc.iter_mut().zip(b).for_each(|(a, r)| *a += r);
    }
}

fn accuracy(params: &ModelParams, data: &[Prepared]) -> Result<f64> {
    let mut correct = 0usize;
    for ex in data {
        if argmax(&forward(params, &ex.x)?.probs) == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Trains on prepared data. With `start = None` the parameters are freshly
/// initialized from `cfg.seed`; otherwise training continues from `start`
/// (the seed then only drives shuffling and dropout).
pub fn train_prepared(
    data: &[Prepared],
    labels: &[String],
    cfg: &TrainConfig,
    start: Option<ModelParams>,
    phase: u32,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(ex) = data.iter().find(|ex| ex.label >= labels.len()) {
        return Err(Error::UnknownLabel {
            line: None,
            label: format!("class index {}", ex.label),
        });
    }
    let clock = Instant::now();
    let mut rng = rng::seeded(cfg.seed);
    let mut params = match start {
        Some(p) => p,
        None => ModelParams::init(
            cfg.features,
            cfg.emb_dim,
            cfg.head,
            cfg.scale,
            labels.to_vec(),
            &mut rng,
        )?,
    };
    let weights = if cfg.loss.use_class_weights {
        class_weights_for(data, labels.len())?
    } else {
        ClassWeights::uniform(labels.len())
    };
    let mut state = AdamState::new(&params);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=cfg.epochs {
        rng::shuffle(&mut rng, &mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut traces = Vec::with_capacity(batch.len());
            for &i in batch {
                let mask = (cfg.dropout > 0.0).then(|| {
                    let keep = 1.0 / (1.0 - cfg.dropout);
                    (0..params.emb_dim)
                        .map(|_| if rng::unit(&mut rng) < cfg.dropout { 0.0 } else { keep })
                        .collect()
                });
                traces.push(forward_masked(&params, &data[i].x, mask)?);
            }
            let ys: Vec<usize> = batch.iter().map(|&i| data[i].label).collect();
            let cmis: Vec<CmiScore> = batch.iter().map(|&i| data[i].cmi).collect();
            let loss = batch_loss(&traces, &ys, &cfg.loss, &weights, &cmis)?;
            loss_sum += loss.mean * batch.len() as f64;

            let mut grads = ParamGrads::zeros_like(&params);
            let mut rows = BTreeMap::new();
            for (trace, dl) in traces.iter().zip(&loss.dlogits) {
                accumulate(&mut grads, &mut rows, backward(&params, trace, dl)?);
            }
            grads.projection = rows.into_iter().collect();
            adam_step(&mut params, &grads, &mut state, &cfg.adam)?;
        }
        flush(&mut params, &mut state, &cfg.adam);
        let stats = EpochStats {
            phase,
            epoch,
            mean_loss: loss_sum / data.len() as f64,
            accuracy: accuracy(&params, data)?,
        };
        log::debug!(
            "epoch {epoch}: loss {:.6} accuracy {:.4}",
            stats.mean_loss,
            stats.accuracy
        );
        history.epochs.push(stats);
    }
    history.wall_seconds = clock.elapsed().as_secs_f64();
    Ok((params, history))
}

pub fn train(
    labeled: &[LabeledExample],
    labels: &[String],
    dict: &Dictionary,
    lang: Language,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    if labeled.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let data = prepare(labeled, labels, dict, lang, &cfg.features)?;
    train_prepared(&data, labels, cfg, None, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub text: String,
    pub label: String,
    pub class: usize,
    pub prob: f64,
}

/// Predicts every text and keeps those whose top probability reaches
/// `threshold`, in input order.
pub fn pseudo_label<S: AsRef<str>>(params: &ModelParams, unlabeled: &[S], threshold: f64) -> Result<Vec<PseudoLabel>> {
    let mut kept = Vec::new();
    for text in unlabeled {
        let text = text.as_ref();
        let probs = forward(params, &featurize(text, &params.features))?.probs;
        let class = argmax(&probs);
        if probs[class] >= threshold {
            kept.push(PseudoLabel {
                text: text.to_string(),
                label: params.labels[class].clone(),
                class,
                prob: probs[class],
            });
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone)]
pub struct PseudoLabelRun {
    pub params: ModelParams,
    /// Phase-1 epochs followed by phase-2 epochs.
    pub history: TrainHistory,
    pub accepted: Vec<PseudoLabel>,
    pub phase2_size: usize,
}

/// Trains on `labeled`, pseudo-labels `unlabeled` with that model, then
/// trains again on the labeled data followed by the accepted pseudo-labels.
pub fn train_with_pseudo<S: AsRef<str>>(
    labeled: &[LabeledExample],
    unlabeled: &[S],
    labels: &[String],
    dict: &Dictionary,
    lang: Language,
    cfg: &TrainConfig,
) -> Result<PseudoLabelRun> {
    if labeled.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut data = prepare(labeled, labels, dict, lang, &cfg.features)?;
    let (phase1, mut history) = train_prepared(&data, labels, cfg, None, 1)?;
    let accepted = pseudo_label(&phase1, unlabeled, cfg.pseudo_threshold)?;
    for p in &accepted {
        data.push(Prepared {
            x: featurize(&p.text, &cfg.features),
            cmi: sentence_cmi(&tag_sentence(&p.text, dict, lang)),
            label: p.class,
        });
    }
    let start = cfg.continue_training.then_some(phase1);
    let (params, phase2) = train_prepared(&data, labels, cfg, start, 2)?;
    history.epochs.extend(phase2.epochs);
    history.wall_seconds += phase2.wall_seconds;
    Ok(PseudoLabelRun {
        params,
        history,
        accepted,
        phase2_size: data.len(),
    })
}
