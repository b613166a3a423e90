//! Command-line pipeline: `stats`, `train`, `evaluate`, `baseline`,
//! `explain`, `align` and `taxonomy export`.
//!
//! Settings come from an optional JSON config file (`--config`) and are then
//! overridden by flags. The resolved [`RunConfig`] is embedded in every
//! output file together with [`SCHEMA_VERSION`].

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::alignment::{alignment_report, AlignmentReport, DEFAULT_COMPLEX_THRESHOLD};
use crate::attribution::{explain, AttributionResult, BucketThresholds, IgConfig};
use crate::corpus::{corpus_stats, Corpus};
use crate::error::{Error, Result};
use crate::evaluation::{
    baseline_expected_scores, classification_report, majority_baseline, ClassificationReport, ExpectedScores,
};
use crate::model::{Checkpoint, Head, Model, ModelConfig, Pooling};
use crate::task::{Task, COMPLEX};
use crate::taxonomy::TaxonomyTable;
use crate::text::{build_vocab, encode, Vocabulary, DEFAULT_MAX_LEN};
use crate::training::{argmax_all, cross_validate, predict_all, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchitectureConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub pooling: Pooling,
    pub head: Head,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig {
            embed_dim: 128,
            hidden_dim: 256,
            pooling: Pooling::Mean,
            head: Head::Mlp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: PathBuf,
    pub task: Task,
    pub seed: u64,
    pub max_len: usize,
    pub min_freq: usize,
    pub architecture: ArchitectureConfig,
    pub train: TrainConfig,
    pub ig: IgConfig,
    pub buckets: BucketThresholds,
    pub threshold: f64,
    pub top_n: usize,
    pub sentences: Vec<String>,
    pub table: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            taxonomy: None,
            model: None,
            out: PathBuf::from("out"),
            task: Task::Strategy,
            seed: 42,
            max_len: DEFAULT_MAX_LEN,
            min_freq: 1,
            architecture: ArchitectureConfig::default(),
            train: TrainConfig::default(),
            ig: IgConfig::default(),
            buckets: BucketThresholds::default(),
            threshold: DEFAULT_COMPLEX_THRESHOLD,
            top_n: 20,
            sentences: Vec::new(),
            table: false,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "e2r", version, about = "Simplification-strategy classification and explanation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Word, sentence and sentence-length statistics per source.
    Stats(CommonArgs),
    /// Stratified k-fold training with early stopping.
    Train(CommonArgs),
    /// Classification report of a checkpoint on a labeled corpus.
    Evaluate(CommonArgs),
    /// Majority-class baseline report and its closed-form scores.
    Baseline(CommonArgs),
    /// Integrated Gradients word attributions.
    Explain(CommonArgs),
    /// Overlap of attributed complex words with removed words.
    Align(CommonArgs),
    /// Taxonomy utilities.
    Taxonomy {
        #[command(subcommand)]
        action: TaxonomyAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum TaxonomyAction {
    /// Write the taxonomy table (built-in unless --taxonomy is given) as JSON.
    Export {
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Model checkpoint for evaluate / explain / align.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Integrated Gradients steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Attribution threshold for complex words.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(long, value_parser = ["strategy", "complexity"])]
    pub task: Option<String>,
    /// Class index to explain; the predicted class when omitted.
    #[arg(long)]
    pub target: Option<usize>,
    /// Sentence to explain (repeatable); the corpus is used when absent.
    #[arg(long = "sentence")]
    pub sentences: Vec<String>,
    /// Also write aligned text tables.
    #[arg(long)]
    pub table: bool,
}

impl CommonArgs {
    /// Config file first, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(p) = &self.corpus {
            cfg.corpus = Some(p.clone());
        }
        if let Some(p) = &self.taxonomy {
            cfg.taxonomy = Some(p.clone());
        }
        if let Some(p) = &self.model {
            cfg.model = Some(p.clone());
        }
        if let Some(p) = &self.out {
            cfg.out = p.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(k) = self.folds {
            cfg.train.folds = k;
        }
        if let Some(l) = self.max_len {
            cfg.max_len = l;
        }
        if let Some(e) = self.epochs {
            cfg.train.max_epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            cfg.train.learning_rate = lr;
        }
        if let Some(s) = self.steps {
            cfg.ig.steps = s;
        }
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        if let Some(n) = self.top_n {
            cfg.top_n = n;
        }
        if let Some(t) = &self.task {
            cfg.task = t.parse()?;
        }
        if self.target.is_some() {
            cfg.ig.target = self.target;
        }
        if !self.sentences.is_empty() {
            cfg.sentences = self.sentences.clone();
        }
        cfg.table |= self.table;
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len < 2 {
            return Err(Error::InvalidConfig("max_len must be at least 2".into()));
        }
        if self.ig.steps == 0 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::InvalidConfig("threshold must be positive".into()));
        }
        self.train.validate()
    }

    fn taxonomy(&self) -> Result<TaxonomyTable> {
        match &self.taxonomy {
            Some(p) => TaxonomyTable::load(p),
            None => Ok(TaxonomyTable::default()),
        }
    }

    fn load_corpus(&self) -> Result<Corpus> {
        let path = self
            .corpus
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("--corpus is required".into()))?;
        Corpus::load(path, &self.taxonomy()?)
    }

    fn load_model(&self) -> Result<(Model, Vocabulary, Task, Vec<String>)> {
        let path = self
            .model
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("--model is required".into()))?;
        let (model, vocab, task, names) = Checkpoint::load(path)?.into_model()?;
        Ok((model, vocab, task.parse()?, names))
    }

    fn model_config(&self, vocab: &Vocabulary) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab.size(),
            embed_dim: self.architecture.embed_dim,
            hidden_dim: self.architecture.hidden_dim,
            num_classes: self.task.num_classes(),
            max_len: self.max_len,
            seed: self.seed,
            pooling: self.architecture.pooling,
            head: self.architecture.head,
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    run_config: &'a RunConfig,
    result: T,
}

struct Output<'a> {
    cfg: &'a RunConfig,
    command: &'a str,
    written: Vec<PathBuf>,
}

impl<'a> Output<'a> {
    fn new(cfg: &'a RunConfig, command: &'a str) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
        Ok(Output {
            cfg,
            command,
            written: Vec::new(),
        })
    }

    fn header(&self) -> Result<String> {
        Ok(format!(
            "# schema_version={} command={} run_config={}\n",
            SCHEMA_VERSION,
            self.command,
            serde_json::to_string(self.cfg)?
        ))
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.cfg.out.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn json<T: Serialize>(&mut self, name: &str, result: T) -> Result<PathBuf> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            command: self.command,
            run_config: self.cfg,
            result,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// CSV and text outputs start with a `#` comment line carrying the run
    /// configuration.
    fn text(&mut self, name: &str, body: &[u8]) -> Result<PathBuf> {
        let mut bytes = self.header()?.into_bytes();
        bytes.extend_from_slice(body);
        self.write_bytes(name, &bytes)
    }
}

pub fn cmd_stats(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let corpus = cfg.load_corpus()?;
    let stats = corpus_stats(&corpus);
    let mut out = Output::new(cfg, "stats")?;
    out.json("stats.json", &stats)?;
    let mut csv = Vec::new();
    stats.write_csv(&mut csv)?;
    out.text("stats.csv", &csv)?;
    Ok(out.written)
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    task: Task,
    instances: usize,
    class_names: &'a [String],
    folds: &'a [crate::training::FoldResult],
    averaged: &'a ClassificationReport,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let corpus = cfg.load_corpus()?;
    let vocab = build_vocab(&corpus, cfg.min_freq)?;
    let names = cfg.task.class_names();
    let data: Vec<_> = cfg
        .task
        .instances(&corpus, &vocab, cfg.max_len)
        .into_iter()
        .map(|(_, i)| i)
        .collect();
    if data.is_empty() {
        return Err(Error::EmptyInput("corpus has no labeled instances for this task"));
    }
    let cv = cross_validate(&data, &cfg.model_config(&vocab), &cfg.train, &names)?;

    let mut out = Output::new(cfg, "train")?;
    let mut hist = csv::Writer::from_writer(Vec::new());
    hist.write_record(["epoch", "fold", "train_loss", "val_loss", "val_macro_f1"])?;
    for f in &cv.folds {
        for e in &f.history {
            hist.write_record([
                e.epoch.to_string(),
                f.fold_index.to_string(),
                format!("{:.10}", e.train_loss),
                format!("{:.10}", e.val_loss),
                format!("{:.10}", e.val_macro_f1),
            ])?;
        }
    }
    let hist = hist.into_inner().map_err(|e| Error::io("history.csv", e.into_error()))?;
    out.text("history.csv", &hist)?;
    for (f, model) in cv.models.iter().enumerate() {
        let path = cfg.out.join(format!("fold_{f}.model.json"));
        Checkpoint::new(model, &vocab, cfg.task.name(), names.clone()).save(&path)?;
        out.written.push(path);
    }
    out.json(
        "report.json",
        TrainSummary {
            task: cfg.task,
            instances: data.len(),
            class_names: &names,
            folds: &cv.folds,
            averaged: &cv.averaged,
        },
    )?;
    let mut txt = String::new();
    for f in &cv.folds {
        txt.push_str(&format!(
            "fold {}: best epoch {} of {}, train accuracy {:.4}, val accuracy {:.4}\n",
            f.fold_index,
            f.best_epoch,
            f.history.len(),
            f.train_accuracy,
            f.report.accuracy
        ));
    }
    txt.push_str(&format!("\nAveraged over {} folds\n{}", cv.folds.len(), cv.averaged));
    out.text("report.txt", txt.as_bytes())?;
    Ok(out.written)
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (model, vocab, task, names) = cfg.load_model()?;
    let corpus = cfg.load_corpus()?;
    let data: Vec<_> = task
        .instances(&corpus, &vocab, model.config().max_len)
        .into_iter()
        .map(|(_, i)| i)
        .collect();
    if data.is_empty() {
        return Err(Error::EmptyInput("corpus has no labeled instances for this task"));
    }
    let gold: Vec<usize> = data.iter().map(|i| i.label).collect();
    let pred = argmax_all(&predict_all(&model, &data)?);
    let report = classification_report(&gold, &pred, &names)?;
    let mut out = Output::new(cfg, "evaluate")?;
    out.json("evaluate.json", &report)?;
    out.text("evaluate.txt", report.to_string().as_bytes())?;
    Ok(out.written)
}

#[derive(Serialize)]
struct BaselineResult {
    majority_class: String,
    majority_proportion: f64,
    classes_present: usize,
    report: ClassificationReport,
    expected: ExpectedScores,
}

pub fn cmd_baseline(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let corpus = cfg.load_corpus()?;
    let names = cfg.task.class_names();
    let gold: Vec<usize> = match cfg.task {
        Task::Strategy => corpus.labeled().map(|(_, l)| l.index()).collect(),
        Task::Complexity => corpus
            .pairs
            .iter()
            .flat_map(|p| std::iter::once(COMPLEX).chain(p.simple_texts.iter().map(|_| crate::task::SIMPLE)))
            .collect(),
    };
    let baseline = majority_baseline(&gold)?;
    let report = classification_report(&gold, &baseline.predict_all(gold.len()), &names)?;
    let p = gold.iter().filter(|&&g| g == baseline.class).count() as f64 / gold.len() as f64;
    let present = (0..names.len()).filter(|c| gold.contains(c)).count();
    let result = BaselineResult {
        majority_class: names[baseline.class].clone(),
        majority_proportion: p,
        classes_present: present,
        expected: baseline_expected_scores(p, present),
        report,
    };
    let mut out = Output::new(cfg, "baseline")?;
    let txt = format!(
        "Majority class: {} (proportion {:.4})\nExpected: accuracy {:.3}, weighted F1 {:.3}, macro F1 {:.3}\n\n{}",
        result.majority_class,
        p,
        result.expected.accuracy,
        result.expected.weighted_f1,
        result.expected.macro_f1,
        result.report
    );
    out.json("baseline.json", &result)?;
    out.text("baseline.txt", txt.as_bytes())?;
    Ok(out.written)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Explanation {
    pub id: String,
    pub sentence: String,
    pub probabilities: Vec<(String, f64)>,
    pub predicted: String,
    pub target: String,
    #[serde(flatten)]
    pub attribution: AttributionResult,
}

fn explain_sentences(
    cfg: &RunConfig,
    model: &Model,
    vocab: &Vocabulary,
    task: Task,
    names: &[String],
    sentences: &[(String, String)],
) -> Result<Vec<Explanation>> {
    let ig = IgConfig {
        target: cfg.ig.target.or(match task {
            Task::Complexity => Some(COMPLEX),
            Task::Strategy => None,
        }),
        ..cfg.ig.clone()
    };
    sentences
        .iter()
        .map(|(id, s)| {
            let input = encode(s, vocab, model.config().max_len);
            let attribution = explain(model, vocab, &input, &ig, &cfg.buckets)?;
            if !attribution.completeness_gap.is_finite() {
                return Err(Error::Numerical(format!("non-finite attributions for `{id}`")));
            }
            Ok(Explanation {
                id: id.clone(),
                sentence: s.clone(),
                probabilities: names
                    .iter()
                    .cloned()
                    .zip(attribution.prediction.probabilities.iter().copied())
                    .collect(),
                predicted: names[attribution.prediction.predicted].clone(),
                target: names[attribution.target].clone(),
                attribution,
            })
        })
        .collect()
}

pub fn cmd_explain(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (model, vocab, task, names) = cfg.load_model()?;
    let sentences: Vec<(String, String)> = if cfg.sentences.is_empty() {
        cfg.load_corpus()?
            .pairs
            .iter()
            .map(|p| (p.id.clone(), p.complex_text.clone()))
            .collect()
    } else {
        cfg.sentences
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("s{i}"), s.clone()))
            .collect()
    };
    let records = explain_sentences(cfg, &model, &vocab, task, &names, &sentences)?;
    let mut out = Output::new(cfg, "explain")?;
    out.json("explanations.json", &records)?;
    if cfg.table {
        let mut txt = String::new();
        for r in &records {
            let probs: Vec<String> = r.probabilities.iter().map(|(n, p)| format!("{n}: {p:.2}")).collect();
            txt.push_str(&format!(
                "\"{}\"\n{}\ncompleteness gap {:.2e}\n{}\n",
                r.sentence,
                probs.join(", "),
                r.attribution.completeness_gap,
                r.attribution.table()
            ));
        }
        out.text("explanations.txt", txt.as_bytes())?;
    }
    Ok(out.written)
}

pub fn cmd_align(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (model, vocab, task, names) = cfg.load_model()?;
    let corpus = cfg.load_corpus()?;
    let sentences: Vec<(String, String)> = corpus
        .pairs
        .iter()
        .filter(|p| !p.simple_texts.is_empty())
        .map(|p| (p.id.clone(), p.complex_text.clone()))
        .collect();
    let explained = explain_sentences(cfg, &model, &vocab, task, &names, &sentences)?;
    let attributions: HashMap<String, AttributionResult> =
        explained.into_iter().map(|e| (e.id, e.attribution)).collect();
    let report: AlignmentReport = alignment_report(&corpus, &attributions, cfg.threshold, cfg.top_n)?;

    #[derive(Serialize)]
    struct AlignResult<'a> {
        #[serde(flatten)]
        report: &'a AlignmentReport,
        overlap_percent: String,
    }
    let mut out = Output::new(cfg, "align")?;
    out.json(
        "align.json",
        AlignResult {
            report: &report,
            overlap_percent: report.percent(),
        },
    )?;
    let mut csv = Vec::new();
    report.write_top_csv(&mut csv)?;
    out.text("top_removed.csv", &csv)?;
    Ok(out.written)
}

pub fn cmd_taxonomy_export(taxonomy: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let table = match taxonomy {
        Some(p) => TaxonomyTable::load(p)?,
        None => TaxonomyTable::default(),
    };
    let json = table.to_json()? + "\n";
    match out {
        Some(p) => std::fs::write(p, json).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(json.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

/// Runs a parsed command line; returns the files written.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Stats(a) => cmd_stats(&a.resolve()?),
        Command::Train(a) => cmd_train(&a.resolve()?),
        Command::Evaluate(a) => cmd_evaluate(&a.resolve()?),
        Command::Baseline(a) => cmd_baseline(&a.resolve()?),
        Command::Explain(a) => cmd_explain(&a.resolve()?),
        Command::Align(a) => cmd_align(&a.resolve()?),
        Command::Taxonomy {
            action: TaxonomyAction::Export { taxonomy, out },
        } => cmd_taxonomy_export(taxonomy.as_deref(), out.as_deref()).map(|_| Vec::new()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"seed": 3, "max_len": 16, "train": {"folds": 4}, "ig": {"steps": 8}}"#).unwrap();
        let args = CommonArgs {
            config: Some(path),
            seed: Some(9),
            steps: Some(128),
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.max_len, 16);
        assert_eq!(cfg.train.folds, 4);
        assert_eq!(cfg.train.max_epochs, 20);
        assert_eq!(cfg.ig.steps, 128);
    }

    #[test]
    fn invalid_settings_rejected() {
        let args = CommonArgs {
            max_len: Some(1),
            ..Default::default()
        };
        assert!(matches!(args.resolve(), Err(Error::InvalidConfig(_))));
        let args = CommonArgs {
            folds: Some(1),
            ..Default::default()
        };
        assert!(args.resolve().is_err());
    }

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from(["e2r", "train", "--folds", "5", "--seed", "7", "--corpus", "c.jsonl"]).unwrap();
        match cli.command {
            Command::Train(a) => {
                assert_eq!(a.folds, Some(5));
                assert_eq!(a.seed, Some(7));
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["e2r", "explain", "--task", "bogus"]).is_err());
        assert!(Cli::try_parse_from(["e2r", "taxonomy", "export"]).is_ok());
    }
}
