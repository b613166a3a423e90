//! Parallel complex / Easy-to-Read corpus: JSONL ingestion and statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{ClassLabel, TaxonomyTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    Health,
    PublicInfo,
    Politics,
    Other,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::Health, Source::PublicInfo, Source::Politics, Source::Other];

    /// Lenient parse: `"Public info"`, `"public_info"` and `"PublicInfo"` are
    /// all accepted; anything unrecognised is `Other`.
    pub fn parse(s: &str) -> Source {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "health" => Source::Health,
            "publicinfo" => Source::PublicInfo,
            "politics" => Source::Politics,
            _ => Source::Other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Source::Health => "Health",
            Source::PublicInfo => "Public info",
            Source::Politics => "Politics",
            Source::Other => "Other",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentencePair {
    pub id: String,
    pub complex_text: String,
    pub simple_texts: Vec<String>,
    pub label: Option<ClassLabel>,
    pub source: Source,
    /// Originating document, when the corpus records it.
    pub document: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub name: String,
    pub pairs: Vec<SentencePair>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: Option<String>,
    #[serde(default)]
    source: Option<String>,
    complex: Option<String>,
    #[serde(default)]
    simple: Vec<String>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    document: Option<String>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, pairs: Vec<SentencePair>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &pairs {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::DuplicateId(p.id.clone()));
            }
            if p.complex_text.trim().is_empty() {
                return Err(Error::InvalidConfig(format!("pair `{}` has empty complex text", p.id)));
            }
        }
        Ok(Corpus {
            name: name.into(),
            pairs,
        })
    }

    /// Parses JSONL text. Labels may be class names or fine-grained codes.
    pub fn from_jsonl(name: &str, text: &str, taxonomy: &TaxonomyTable) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let rec: Record = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
            let id = rec.id.ok_or_else(|| parse_err("missing field `id`".into()))?;
            let complex = rec
                .complex
                .ok_or_else(|| parse_err("missing field `complex`".into()))?;
            if complex.trim().is_empty() {
                return Err(parse_err("field `complex` is empty".into()));
            }
            let label = rec
                .label
                .as_deref()
                .filter(|l| !l.is_empty())
                .map(|l| taxonomy.resolve_label(l))
                .transpose()?;
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            pairs.push(SentencePair {
                id,
                complex_text: complex,
                simple_texts: rec.simple,
                label,
                source: rec.source.as_deref().map(Source::parse).unwrap_or(Source::Other),
                document: rec.document,
            });
        }
        Ok(Corpus {
            name: name.to_string(),
            pairs,
        })
    }

    pub fn load(path: &Path, taxonomy: &TaxonomyTable) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_jsonl(&name, &text, taxonomy)
    }

    /// Writes the corpus as JSONL with labels as class names.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for p in &self.pairs {
            let rec = Record {
                id: Some(p.id.clone()),
                source: Some(p.source.name().to_string()),
                complex: Some(p.complex_text.clone()),
                simple: p.simple_texts.clone(),
                label: p.label.map(|l| format!("{l:?}")),
                document: p.document.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n").map_err(|e| Error::io("<corpus output>", e))?;
        }
        Ok(())
    }

    pub fn labeled(&self) -> impl Iterator<Item = (&SentencePair, ClassLabel)> {
        self.pairs.iter().filter_map(|p| p.label.map(|l| (p, l)))
    }
}

/// Splits on whitespace and trims non-alphanumeric characters from both ends
/// of each token. Internal hyphens and apostrophes survive.
pub fn word_tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Case-folded tokens, as used for vocabulary and alignment.
pub fn normalized_words(text: &str) -> Vec<String> {
    word_tokenize(text).into_iter().map(str::to_lowercase).collect()
}

/// Quartile by linear interpolation between closest ranks: position
/// `(n - 1) * p` in the sorted, zero-indexed sample.
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn interquartile_range(lengths: &[usize]) -> Option<(f64, f64)> {
    let mut v: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    v.sort_by(f64::total_cmp);
    Some((quantile(&v, 0.25)?, quantile(&v, 0.75)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideStats {
    pub words: usize,
    pub sentences: usize,
    /// `(q1, q3)` of sentence lengths in words; absent for an empty side.
    pub sentence_length_iqr: Option<(f64, f64)>,
}

impl SideStats {
    fn from_lengths(lengths: &[usize]) -> Self {
        SideStats {
            words: lengths.iter().sum(),
            sentences: lengths.len(),
            sentence_length_iqr: interquartile_range(lengths),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    pub source: String,
    pub num_texts: usize,
    pub complex: SideStats,
    pub simple: SideStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// One row per source present in the corpus, in [`Source::ALL`] order.
    pub rows: Vec<SourceStats>,
    pub total: SourceStats,
}

#[derive(Default)]
struct Acc {
    documents: BTreeSet<String>,
    anonymous_texts: usize,
    complex: Vec<usize>,
    simple: Vec<usize>,
}

impl Acc {
    fn add(&mut self, p: &SentencePair) {
        match &p.document {
            Some(d) => {
                self.documents.insert(d.clone());
            }
            None => self.anonymous_texts += 1,
        }
        self.complex.push(word_tokenize(&p.complex_text).len());
        self.simple
            .extend(p.simple_texts.iter().map(|s| word_tokenize(s).len()));
    }

    fn finish(self, label: &str) -> SourceStats {
        SourceStats {
            source: label.to_string(),
            num_texts: self.documents.len() + self.anonymous_texts,
            complex: SideStats::from_lengths(&self.complex),
            simple: SideStats::from_lengths(&self.simple),
        }
    }
}

/// Word, sentence and sentence-length statistics per source and overall.
/// A "text" is a distinct `document`; pairs without one count as their own text.
pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut per_source: BTreeMap<Source, Acc> = BTreeMap::new();
    let mut total = Acc::default();
    for p in &corpus.pairs {
        per_source.entry(p.source).or_default().add(p);
        total.add(p);
    }
    CorpusStats {
        rows: per_source
            .into_iter()
            .map(|(s, acc)| acc.finish(s.name()))
            .collect(),
        total: total.finish("Total"),
    }
}

impl CorpusStats {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "source",
            "texts",
            "complex_words",
            "complex_sentences",
            "complex_iqr_q1",
            "complex_iqr_q3",
            "simple_words",
            "simple_sentences",
            "simple_iqr_q1",
            "simple_iqr_q3",
        ])?;
        let fmt_q = |q: Option<(f64, f64)>, first: bool| {
            q.map(|(a, b)| format!("{:.1}", if first { a } else { b }))
                .unwrap_or_default()
        };
        for row in self.rows.iter().chain(std::iter::once(&self.total)) {
            w.write_record([
                row.source.clone(),
                row.num_texts.to_string(),
                row.complex.words.to_string(),
                row.complex.sentences.to_string(),
                fmt_q(row.complex.sentence_length_iqr, true),
                fmt_q(row.complex.sentence_length_iqr, false),
                row.simple.words.to_string(),
                row.simple.sentences.to_string(),
                fmt_q(row.simple.sentence_length_iqr, true),
                fmt_q(row.simple.sentence_length_iqr, false),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}
