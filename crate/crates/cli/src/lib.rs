//! Command-line front-end: corpus statistics, training, prediction,
//! pseudo-labeling, evaluation and significance testing.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data or format
//! errors.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cmifl_core::cmi::{profile_from_scores, HISTOGRAM_BINS};
use cmifl_core::dataio::{self, LabelVocabulary, Prediction};
use cmifl_core::eval::{confusion, metrics, stuart_maxwell, PairedTable};
use cmifl_core::model::{featurize, predict, ModelParams};
use cmifl_core::textlang::tag_sentence;
use cmifl_core::train::{self, pseudo_label, train_with_pseudo, EpochStats, TrainConfig};
use cmifl_core::{sentence_cmi, Dictionary, Error, Language};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "cmifl",
    version,
    about = "Code-mixing aware offensive-language classification"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Code-mixing index profile of a corpus.
    CmiStats(CmiStatsArgs),
    /// Train a model and write it to a file.
    Train(Box<TrainArgs>),
    /// Predict a label for every line of a file.
    Predict(PredictArgs),
    /// Label an unlabeled pool with a trained model.
    PseudoLabel(PseudoLabelArgs),
    /// Score predictions against gold labels (JSON).
    Eval(EvalArgs),
    /// Stuart-Maxwell test between two prediction files (JSON).
    Significance(SignificanceArgs),
}

#[derive(Debug, Args)]
struct CmiStatsArgs {
    /// Texts, one per line, optionally `text<TAB>label`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    lang: Language,
    /// English wordlist, one word per line.
    #[arg(long)]
    dict: PathBuf,
    /// Skip the first line of the data file.
    #[arg(long)]
    header: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training set as `text<TAB>label` lines.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    lang: Language,
    #[arg(long)]
    dict: PathBuf,
    /// `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["ce", "focal", "cmi-fl"])]
    loss: Option<String>,
    #[arg(long, value_parser = ["dot", "cosine"])]
    head: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    emb_dim: Option<String>,
    /// Override any config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Comma-separated class names, replacing the language's class set.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    #[arg(long)]
    header: bool,
    /// Unlabeled texts for a second, pseudo-labeled training phase.
    #[arg(long)]
    unlabeled: Option<PathBuf>,
    /// Minimum confidence for a pseudo-label.
    #[arg(long, requires = "unlabeled")]
    threshold: Option<String>,
    /// Start phase 2 from the phase-1 model.
    #[arg(long = "continue", requires = "unlabeled")]
    continue_training: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Texts, one per line; a trailing `<TAB>label` column is ignored.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    header: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PseudoLabelArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    unlabeled: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    #[arg(long)]
    header: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Gold labels: a dataset or a prediction file.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    preds: PathBuf,
    /// Include per-class scores and the confusion matrix.
    #[arg(long)]
    classwise: bool,
    /// Use this language's class set instead of the labels seen in the files.
    #[arg(long)]
    lang: Option<Language>,
    /// Skip the first line of the gold file.
    #[arg(long)]
    header: bool,
    /// Accepted for symmetry; output is always JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SignificanceArgs {
    #[arg(long)]
    preds_a: PathBuf,
    #[arg(long)]
    preds_b: PathBuf,
    #[arg(long)]
    lang: Option<Language>,
    /// Accepted for symmetry; output is always JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) => f.write_str(m),
        }
    }
}

/// Tags a library error with the file it came from, unless the message
/// already names it.
fn in_file(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| match e {
        Error::Io { .. } | Error::MalformedLine { .. } => Failure::Data(e.to_string()),
        other => Failure::Data(format!("{}: {other}", path.display())),
    }
}

fn data_err(e: Error) -> Failure {
    Failure::Data(e.to_string())
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::Data(format!("writing output: {e}")))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .format_timestamp(None)
        .try_init();
}

/// Runs one invocation; `argv` excludes the program name.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = std::iter::once(OsString::from("cmifl")).chain(argv.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(rendered.as_bytes())
            } else {
                out.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::CmiStats(a) => cmi_stats(a, out),
        Command::Train(a) => train_cmd(*a, out),
        Command::Predict(a) => predict_cmd(a, out),
        Command::PseudoLabel(a) => pseudo_label_cmd(a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Significance(a) => significance_cmd(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {f}");
            match f {
                Failure::Usage(_) => EXIT_USAGE,
                Failure::Data(_) => EXIT_DATA,
            }
        }
    }
}

#[derive(Serialize)]
struct CmiStatsReport {
    sentences: usize,
    mean: f64,
    histogram: [usize; HISTOGRAM_BINS],
}

fn cmi_stats(a: CmiStatsArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let dict = Dictionary::load(&a.dict).map_err(data_err)?;
    let texts = dataio::read_texts(&a.data, a.header).map_err(in_file(&a.data))?;
    let scores = texts
        .iter()
        .filter(|t| !t.trim().is_empty())
        .map(|t| sentence_cmi(&tag_sentence(t, &dict, a.lang)))
        .collect();
    let profile = profile_from_scores(scores);
    let report = CmiStatsReport {
        sentences: profile.len(),
        mean: profile.mean,
        histogram: profile.histogram,
    };
    if a.json {
        return write_out(out, &json(&report));
    }
    let mut s = format!("sentences\t{}\nmean_cmi\t{:.6}\n", report.sentences, report.mean);
    for (k, count) in report.histogram.iter().enumerate() {
        let close = if k + 1 == HISTOGRAM_BINS { ']' } else { ')' };
        s.push_str(&format!(
            "[{:.1}, {:.1}{close}\t{count}\n",
            k as f64 / 10.0,
            (k + 1) as f64 / 10.0
        ));
    }
    write_out(out, &s)
}

fn build_config(a: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        cfg.apply_file_text(&text)
            .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    }
    let flags = [
        ("loss.kind", &a.loss),
        ("head", &a.head),
        ("seed", &a.seed),
        ("epochs", &a.epochs),
        ("batch_size", &a.batch_size),
        ("learning_rate", &a.lr),
        ("emb_dim", &a.emb_dim),
        ("pseudo_threshold", &a.threshold),
    ];
    let usage = |e: Error| Failure::Usage(e.to_string());
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v).map_err(usage)?;
        }
    }
    for kv in &a.overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(key, value).map_err(usage)?;
    }
    if a.continue_training {
        cfg.continue_training = true;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

#[derive(Serialize)]
struct TrainReport<'a> {
    examples: usize,
    labels: &'a [String],
    pseudo_labeled: Option<usize>,
    epochs: &'a [EpochStats],
    final_accuracy: Option<f64>,
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = build_config(&a)?;
    let vocab = if a.labels.is_empty() {
        LabelVocabulary::for_language(a.lang)
    } else {
        LabelVocabulary::new(a.labels.clone()).map_err(|e| Failure::Usage(e.to_string()))?
    };
    let dict = Dictionary::load(&a.dict).map_err(data_err)?;
    let labeled = dataio::load_tsv(&a.data, a.header, &vocab).map_err(in_file(&a.data))?;
    if labeled.is_empty() {
        return Err(Failure::Data(format!("{}: no training examples", a.data.display())));
    }
    let labels = vocab.names();
    log::info!("training on {} examples, {} classes", labeled.len(), labels.len());
    let (params, history, pseudo) = match &a.unlabeled {
        Some(path) => {
            let pool: Vec<String> = dataio::read_texts(path, false)
                .map_err(in_file(path))?
                .into_iter()
                .filter(|t| !t.trim().is_empty())
                .collect();
            let run = train_with_pseudo(&labeled, &pool, labels, &dict, a.lang, &cfg).map_err(data_err)?;
            (run.params, run.history, Some(run.accepted.len()))
        }
        None => {
            let (p, h) = train::train(&labeled, labels, &dict, a.lang, &cfg).map_err(data_err)?;
            (p, h, None)
        }
    };
    log::info!("trained in {:.2}s", history.wall_seconds);
    dataio::save_model(&a.out, &params).map_err(data_err)?;

    let report = TrainReport {
        examples: labeled.len(),
        labels,
        pseudo_labeled: pseudo,
        epochs: &history.epochs,
        final_accuracy: history.final_accuracy(),
    };
    if a.json {
        return write_out(out, &json(&report));
    }
    let mut s = format!("examples\t{}\n", report.examples);
    if let Some(n) = pseudo {
        s.push_str(&format!("pseudo_labeled\t{n}\n"));
    }
    s.push_str("phase\tepoch\tloss\taccuracy\n");
    for e in report.epochs {
        s.push_str(&format!(
            "{}\t{}\t{:.6}\t{:.6}\n",
            e.phase, e.epoch, e.mean_loss, e.accuracy
        ));
    }
    if let Some(acc) = report.final_accuracy {
        s.push_str(&format!("final_accuracy\t{acc:.6}\n"));
    }
    s.push_str(&format!("model\t{}\n", a.out.display()));
    write_out(out, &s)
}

fn load_model(path: &Path) -> Result<ModelParams, Failure> {
    dataio::load_model(path).map_err(in_file(path))
}

/// Label and top probability for every text.
pub fn predict_texts<S: AsRef<str>>(params: &ModelParams, texts: &[S]) -> cmifl_core::Result<Vec<Prediction>> {
    texts
        .iter()
        .map(|t| {
            let (class, probs) = predict(params, &featurize(t.as_ref(), &params.features))?;
            Ok(Prediction {
                label: params.labels[class].clone(),
                prob: probs[class],
            })
        })
        .collect()
}

fn predict_cmd(a: PredictArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let params = load_model(&a.model)?;
    let texts = dataio::read_texts(&a.data, a.header).map_err(in_file(&a.data))?;
    let preds = predict_texts(&params, &texts).map_err(data_err)?;
    dataio::write_predictions(&a.out, &preds).map_err(data_err)?;
    write_out(out, &format!("predictions\t{}\n", preds.len()))
}

#[derive(Serialize)]
struct PseudoReport {
    pool: usize,
    accepted: usize,
    threshold: f64,
}

fn pseudo_label_cmd(a: PseudoLabelArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Failure::Usage(format!(
            "--threshold must lie in [0, 1], got {}",
            a.threshold
        )));
    }
    let params = load_model(&a.model)?;
    let pool: Vec<String> = dataio::read_texts(&a.unlabeled, a.header)
        .map_err(in_file(&a.unlabeled))?
        .into_iter()
        .filter(|t| !t.trim().is_empty())
        .collect();
    let kept = pseudo_label(&params, &pool, a.threshold).map_err(data_err)?;
    let examples: Vec<_> = kept
        .iter()
        .map(|p| dataio::LabeledExample::new(p.text.clone(), p.label.clone()))
        .collect();
    dataio::write_tsv(&a.out, &examples).map_err(data_err)?;
    let report = PseudoReport {
        pool: pool.len(),
        accepted: kept.len(),
        threshold: a.threshold,
    };
    if a.json {
        write_out(out, &json(&report))
    } else {
        write_out(out, &format!("pool\t{}\naccepted\t{}\n", report.pool, report.accepted))
    }
}

/// Labels in order of first appearance across the given lists.
fn vocabulary_of(lists: &[&[String]]) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for list in lists {
        for l in list.iter() {
            if !seen.contains(l) {
                seen.push(l.clone());
            }
        }
    }
    seen
}

/// Attributes an unknown label to whichever of two label files holds it.
fn unknown_in<'a>(first: &'a Path, first_labels: &'a [String], second: &'a Path) -> impl Fn(Error) -> Failure + 'a {
    move |e| match e {
        Error::UnknownLabel {
            line: Some(entry),
            label,
        } => {
            let file = if first_labels.get(entry - 1) == Some(&label) {
                first
            } else {
                second
            };
            Failure::Data(format!("{}: entry {entry}: unknown label {label:?}", file.display()))
        }
        other => data_err(other),
    }
}

#[derive(Serialize)]
struct EvalReport {
    n: u64,
    accuracy: f64,
    macro_avg: cmifl_core::eval::Averages,
    weighted: cmifl_core::eval::Averages,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_class: Option<Vec<cmifl_core::eval::ClassMetrics>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    confusion: Option<ConfusionReport>,
}

#[derive(Serialize)]
struct ConfusionReport {
    labels: Vec<String>,
    /// Rows are gold labels, columns predictions.
    counts: Vec<Vec<u64>>,
}

fn eval_cmd(a: EvalArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let gold = dataio::read_labels(&a.gold, a.header).map_err(in_file(&a.gold))?;
    let pred = dataio::read_labels(&a.preds, false).map_err(in_file(&a.preds))?;
    if gold.len() != pred.len() {
        return Err(Failure::Data(format!(
            "{} has {} labels but {} has {}",
            a.gold.display(),
            gold.len(),
            a.preds.display(),
            pred.len()
        )));
    }
    let labels = match a.lang {
        Some(lang) => LabelVocabulary::for_language(lang).names().to_vec(),
        None => vocabulary_of(&[&gold, &pred]),
    };
    let cm = confusion(&gold, &pred, &labels).map_err(unknown_in(&a.gold, &gold, &a.preds))?;
    let m = metrics(&cm);
    let report = EvalReport {
        n: cm.total(),
        accuracy: m.accuracy,
        macro_avg: m.macro_avg,
        weighted: m.weighted,
        per_class: a.classwise.then(|| m.per_class.clone()),
        confusion: a.classwise.then(|| ConfusionReport {
            labels: cm.labels.clone(),
            counts: cm.counts.clone(),
        }),
    };
    write_out(out, &json(&report))
}

fn significance_cmd(a: SignificanceArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let pa = dataio::read_labels(&a.preds_a, false).map_err(in_file(&a.preds_a))?;
    let pb = dataio::read_labels(&a.preds_b, false).map_err(in_file(&a.preds_b))?;
    if pa.len() != pb.len() {
        return Err(Failure::Data(format!(
            "{} has {} predictions but {} has {}",
            a.preds_a.display(),
            pa.len(),
            a.preds_b.display(),
            pb.len()
        )));
    }
    let labels = match a.lang {
        Some(lang) => LabelVocabulary::for_language(lang).names().to_vec(),
        None => vocabulary_of(&[&pa, &pb]),
    };
    let table = PairedTable::from_labels(&pa, &pb, &labels).map_err(unknown_in(&a.preds_a, &pa, &a.preds_b))?;
    let result = stuart_maxwell(&table).map_err(data_err)?;
    write_out(out, &json(&result))
}
