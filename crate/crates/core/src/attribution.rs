//! Integrated Gradients over input embeddings.
//!
//! For input embeddings `x`, baseline `x'` and target logit `F`, the
//! attribution of coordinate `i` is approximated with a right Riemann sum
//! over `m` steps:
//!
//! ```text
//! IG_i = (x_i - x'_i) · (1/m) Σ_{k=1..m} ∂F(x' + (k/m)(x - x')) / ∂x_i
//! ```
//!
//! By the completeness property the attributions sum to `F(x) - F(x')`; the
//! residual is reported as the completeness gap.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Matrix, Model, Prediction};
use crate::text::{Encoded, Vocabulary, PAD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    ZeroEmbedding,
    /// Every position holds the `[PAD]` embedding.
    #[default]
    PadEmbedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IgConfig {
    pub steps: usize,
    pub baseline: Baseline,
    /// Class whose logit is explained; the predicted class when unset.
    pub target: Option<usize>,
}

impl Default for IgConfig {
    fn default() -> Self {
        IgConfig {
            steps: 64,
            baseline: Baseline::PadEmbedding,
            target: None,
        }
    }
}

/// Per-coordinate attributions plus the endpoint logits needed for the
/// completeness check.
#[derive(Debug, Clone)]
pub struct IgOutput {
    pub attributions: Matrix,
    pub target: usize,
    pub logit_input: f64,
    pub logit_baseline: f64,
    pub prediction: Prediction,
}

impl IgOutput {
    pub fn completeness_gap(&self) -> f64 {
        (self.attributions.sum() - (self.logit_input - self.logit_baseline)).abs()
    }
}

pub fn baseline_embeddings(model: &Model, baseline: Baseline) -> Matrix {
    match baseline {
        Baseline::ZeroEmbedding => Matrix::zeros(model.config().max_len, model.config().embed_dim),
        Baseline::PadEmbedding => model.constant_embedding(PAD),
    }
}

/// Right-Riemann path integral of the target-logit gradient from `baseline`
/// to `x`, multiplied by `x - baseline`.
pub fn integrate_path(
    model: &Model,
    x: &Matrix,
    baseline: &Matrix,
    mask: &[bool],
    target: usize,
    steps: usize,
) -> Result<Matrix> {
    if steps == 0 {
        return Err(Error::InvalidConfig("integration steps must be at least 1".into()));
    }
    if x.rows != baseline.rows || x.cols != baseline.cols {
        return Err(Error::DimensionMismatch("baseline shape differs from input".into()));
    }
    let diff: Vec<f64> = x.data.iter().zip(&baseline.data).map(|(a, b)| a - b).collect();
    let grads: Vec<Matrix> = (1..=steps)
        .into_par_iter()
        .map(|k| {
            let alpha = k as f64 / steps as f64;
            let point = Matrix {
                rows: x.rows,
                cols: x.cols,
                data: baseline.data.iter().zip(&diff).map(|(b, d)| b + alpha * d).collect(),
            };
            model.grad_wrt_embeddings(&point, mask, target)
        })
        .collect::<Result<_>>()?;
    // Summed in step order so the result does not depend on thread scheduling.
    let mut total = vec![0.0; diff.len()];
    for g in &grads {
        for (t, v) in total.iter_mut().zip(&g.data) {
            *t += v;
        }
    }
    let m = steps as f64;
    Ok(Matrix {
        rows: x.rows,
        cols: x.cols,
        data: total.iter().zip(&diff).map(|(t, d)| d * t / m).collect(),
    })
}

pub fn integrated_gradients(model: &Model, input: &Encoded, config: &IgConfig) -> Result<IgOutput> {
    let x = model.embed(input)?;
    let mask = input.mask();
    let baseline = baseline_embeddings(model, config.baseline);
    let prediction = model.forward_from_embeddings(&x, &mask)?;
    let target = config.target.unwrap_or(prediction.predicted);
    if target >= model.config().num_classes {
        return Err(Error::DimensionMismatch(format!("target class {target} out of range")));
    }
    let attributions = integrate_path(model, &x, &baseline, &mask, target, config.steps)?;
    let logit_input = model.logits_from_embeddings(&x, &mask)?[target];
    let logit_baseline = model.logits_from_embeddings(&baseline, &mask)?[target];
    Ok(IgOutput {
        attributions,
        target,
        logit_input,
        logit_baseline,
        prediction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BucketLabel {
    Neutral,
    SlightlyEasy,
    Easy,
    SlightlyComplex,
    ModeratelyComplex,
    HighlyComplex,
}

impl BucketLabel {
    pub fn name(self) -> &'static str {
        match self {
            BucketLabel::Neutral => "Neutral",
            BucketLabel::SlightlyEasy => "Slightly Easy",
            BucketLabel::Easy => "Easy",
            BucketLabel::SlightlyComplex => "Slightly Complex",
            BucketLabel::ModeratelyComplex => "Moderately Complex",
            BucketLabel::HighlyComplex => "Highly Complex",
        }
    }
}

impl fmt::Display for BucketLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Score boundaries for the bucket labels. Negative scores mirror the
/// positive side: `-slight` starts "Slightly Easy", `-moderate` starts "Easy".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketThresholds {
    pub slight: f64,
    pub moderate: f64,
    pub high: f64,
}

impl Default for BucketThresholds {
    fn default() -> Self {
        BucketThresholds {
            slight: 0.10,
            moderate: 0.16,
            high: 0.20,
        }
    }
}

impl BucketThresholds {
    pub fn label(&self, score: f64) -> BucketLabel {
        if score.abs() < self.slight {
            BucketLabel::Neutral
        } else if score >= self.high {
            BucketLabel::HighlyComplex
        } else if score >= self.moderate {
            BucketLabel::ModeratelyComplex
        } else if score > 0.0 {
            BucketLabel::SlightlyComplex
        } else if score <= -self.moderate {
            BucketLabel::Easy
        } else {
            BucketLabel::SlightlyEasy
        }
    }
}

pub fn bucket_label(score: f64) -> BucketLabel {
    BucketThresholds::default().label(score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordAttribution {
    pub word: String,
    pub attribution: f64,
    pub bucket: BucketLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub words: Vec<WordAttribution>,
    pub prediction: Prediction,
    pub target: usize,
    pub completeness_gap: f64,
}

impl AttributionResult {
    pub fn tokens(&self) -> Vec<&str> {
        self.words.iter().map(|w| w.word.as_str()).collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.words.iter().map(|w| w.attribution).collect()
    }

    /// Word / attribution / contribution table at two decimal places.
    pub fn table(&self) -> String {
        let w = self.words.iter().map(|a| a.word.chars().count()).max().unwrap_or(4).max(4);
        let mut out = format!("{:<w$}  {:>11}  {}\n", "Word", "Attribution", "Contribution");
        for a in &self.words {
            out.push_str(&format!("{:<w$}  {:>11.2}  {}\n", a.word, a.attribution, a.bucket));
        }
        out
    }
}

/// Collapses coordinate attributions to one signed score per word (the sum
/// over embedding dimensions). `[CLS]` and padding are not reported.
pub fn token_attributions(
    ig: &IgOutput,
    input: &Encoded,
    vocab: &Vocabulary,
    thresholds: &BucketThresholds,
) -> Result<AttributionResult> {
    if ig.attributions.rows != input.ids.len() {
        return Err(Error::DimensionMismatch(format!(
            "attribution matrix has {} rows for {} positions",
            ig.attributions.rows,
            input.ids.len()
        )));
    }
    let words = (1..input.true_length)
        .map(|pos| {
            let word = input
                .words
                .get(pos - 1)
                .cloned()
                .or_else(|| vocab.token(input.ids[pos]).map(str::to_string))
                .unwrap_or_default();
            let attribution: f64 = ig.attributions.row(pos).iter().sum();
            WordAttribution {
                word,
                attribution,
                bucket: thresholds.label(attribution),
            }
        })
        .collect();
    Ok(AttributionResult {
        words,
        prediction: ig.prediction.clone(),
        target: ig.target,
        completeness_gap: ig.completeness_gap(),
    })
}

/// Encodes, attributes and labels one sentence.
pub fn explain(
    model: &Model,
    vocab: &Vocabulary,
    input: &Encoded,
    config: &IgConfig,
    thresholds: &BucketThresholds,
) -> Result<AttributionResult> {
    let ig = integrated_gradients(model, input, config)?;
    token_attributions(&ig, input, vocab, thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, Head, ModelConfig, Pooling};
    use crate::text::{build_vocab_from_texts, encode};
    use rand::{Rng, SeedableRng};

    const TABLE: [(&str, f64, BucketLabel); 13] = [
        ("Provide", 0.18, BucketLabel::ModeratelyComplex),
        ("financially", -0.10, BucketLabel::SlightlyEasy),
        ("sustainable", 0.30, BucketLabel::HighlyComplex),
        ("care", 0.15, BucketLabel::SlightlyComplex),
        ("giving", 0.10, BucketLabel::SlightlyComplex),
        ("security", 0.25, BucketLabel::HighlyComplex),
        ("and", -0.02, BucketLabel::Neutral),
        ("stability", 0.28, BucketLabel::HighlyComplex),
        ("to", -0.03, BucketLabel::Neutral),
        ("people", 0.12, BucketLabel::SlightlyComplex),
        ("and", -0.04, BucketLabel::Neutral),
        ("their", 0.05, BucketLabel::Neutral),
        ("carers", -0.08, BucketLabel::Neutral),
    ];

    #[test]
    fn buckets_reproduce_reference_rows() {
        for (word, score, expected) in TABLE {
            assert_eq!(bucket_label(score), expected, "{word} {score}");
        }
        assert_eq!(bucket_label(-0.2), BucketLabel::Easy);
        assert_eq!(bucket_label(0.0), BucketLabel::Neutral);
    }

    fn setup(head: Head) -> (Model, Vocabulary, Encoded) {
        let vocab = build_vocab_from_texts(["provide sustainable care to people"].iter().copied(), 1).unwrap();
        let mut model = init_model(ModelConfig {
            vocab_size: vocab.size(),
            embed_dim: 6,
            hidden_dim: 5,
            num_classes: 2,
            max_len: 10,
            seed: 4,
            pooling: Pooling::Mean,
            head,
        })
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for w in model.output_weights_mut() {
            *w = rng.gen_range(-1.0..1.0);
        }
        let input = encode("Provide sustainable care", &vocab, 10);
        (model, vocab, input)
    }

    #[test]
    fn input_equal_to_baseline_attributes_nothing() {
        let (model, _, input) = setup(Head::Mlp);
        let x = model.embed(&input).unwrap();
        let a = integrate_path(&model, &x, &x, &input.mask(), 1, 16).unwrap();
        assert!(a.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_model_is_exact() {
        let (model, _, input) = setup(Head::Linear);
        let x = model.embed(&input).unwrap();
        let base = baseline_embeddings(&model, Baseline::ZeroEmbedding);
        let mask = input.mask();
        let grad = model.grad_wrt_embeddings(&x, &mask, 1).unwrap();
        for steps in [1, 3, 64] {
            let a = integrate_path(&model, &x, &base, &mask, 1, steps).unwrap();
            for i in 0..a.data.len() {
                let expected = grad.data[i] * (x.data[i] - base.data[i]);
                assert!((a.data[i] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn token_scores_sum_rows_and_skip_specials() {
        let (model, vocab, input) = setup(Head::Mlp);
        let ig = integrated_gradients(&model, &input, &IgConfig::default()).unwrap();
        let res = token_attributions(&ig, &input, &vocab, &BucketThresholds::default()).unwrap();
        assert_eq!(res.tokens(), vec!["Provide", "sustainable", "care"]);
        for (k, w) in res.words.iter().enumerate() {
            let row: f64 = ig.attributions.row(k + 1).iter().sum();
            assert_eq!(w.attribution, row);
        }
        assert!(res.table().contains("Contribution"));

        let zero = IgOutput {
            attributions: Matrix::zeros(10, 6),
            ..ig.clone()
        };
        let z = token_attributions(&zero, &input, &vocab, &BucketThresholds::default()).unwrap();
        assert!(z.scores().iter().all(|&s| s == 0.0));
        assert!((z.completeness_gap - (ig.logit_input - ig.logit_baseline).abs()).abs() < 1e-15);

        let mut single = Matrix::zeros(10, 6);
        single.row_mut(2)[3] = 0.7;
        let s = token_attributions(&IgOutput { attributions: single, ..ig }, &input, &vocab, &BucketThresholds::default())
            .unwrap();
        assert_eq!(s.scores(), vec![0.0, 0.7, 0.0]);
    }

    #[test]
    fn zero_steps_rejected() {
        let (model, _, input) = setup(Head::Mlp);
        let cfg = IgConfig {
            steps: 0,
            ..Default::default()
        };
        assert!(integrated_gradients(&model, &input, &cfg).is_err());
    }
}
