//! Overlap between model-attributed complex words and the words human
//! editors removed when writing the Easy-to-Read version.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::attribution::AttributionResult;
use crate::corpus::{normalized_words, Corpus};
use crate::error::{Error, Result};

pub const DEFAULT_COMPLEX_THRESHOLD: f64 = 0.10;

fn normalize(word: &str) -> Option<String> {
    normalized_words(word).into_iter().next()
}

/// Normalized words whose attribution reaches `threshold`.
pub fn extract_complex_words(attr: &AttributionResult, threshold: f64) -> BTreeSet<String> {
    attr.words
        .iter()
        .filter(|w| w.attribution >= threshold)
        .filter_map(|w| normalize(&w.word))
        .collect()
}

/// Normalized words of `complex_sentence` that appear in none of its
/// simplified counterparts.
pub fn removed_words(complex_sentence: &str, simple_sentences: &[String]) -> BTreeSet<String> {
    let kept: BTreeSet<String> = simple_sentences
        .iter()
        .flat_map(|s| normalized_words(s))
        .collect();
    normalized_words(complex_sentence)
        .into_iter()
        .filter(|w| !kept.contains(w))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub total_complex_words: usize,
    pub removed_complex_words: usize,
    pub overlap_ratio: f64,
    /// Set when no complex words were found and the ratio is reported as 0.
    pub zero_total: bool,
    pub top_removed: Vec<(String, usize)>,
    pub pairs_aligned: usize,
}

impl AlignmentReport {
    pub fn from_totals(total: usize, removed: usize, top_removed: Vec<(String, usize)>) -> Self {
        assert!(removed <= total, "removed words cannot exceed complex words");
        AlignmentReport {
            total_complex_words: total,
            removed_complex_words: removed,
            overlap_ratio: if total == 0 { 0.0 } else { removed as f64 / total as f64 },
            zero_total: total == 0,
            top_removed,
            pairs_aligned: 0,
        }
    }

    /// Overlap as a percentage with two decimals, e.g. `67.31%`.
    pub fn percent(&self) -> String {
        format!("{:.2}%", self.overlap_ratio * 100.0)
    }

    pub fn write_top_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["word", "frequency"])?;
        for (word, freq) in &self.top_removed {
            w.write_record([word.as_str(), &freq.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

/// Aggregates complex and removed words over every pair that has at least
/// one simplified side. Each sentence contributes its distinct complex words,
/// so a word counts once per sentence it occurs in.
pub fn alignment_report(
    corpus: &Corpus,
    attributions: &HashMap<String, AttributionResult>,
    threshold: f64,
    top_n: usize,
) -> Result<AlignmentReport> {
    let mut total = 0;
    let mut removed_total = 0;
    let mut pairs = 0;
    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    for pair in corpus.pairs.iter().filter(|p| !p.simple_texts.is_empty()) {
        let attr = attributions.get(&pair.id).ok_or_else(|| {
            Error::InvalidConfig(format!("no attribution for pair `{}`", pair.id))
        })?;
        let complex = extract_complex_words(attr, threshold);
        let removed = removed_words(&pair.complex_text, &pair.simple_texts);
        total += complex.len();
        for w in complex.intersection(&removed) {
            removed_total += 1;
            *freq.entry(w.clone()).or_default() += 1;
        }
        pairs += 1;
    }
    if pairs == 0 {
        return Err(Error::EmptyInput("no pair has a simplified side"));
    }
    let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_n);
    let mut report = AlignmentReport::from_totals(total, removed_total, ranked);
    report.pairs_aligned = pairs;
    Ok(report)
}
