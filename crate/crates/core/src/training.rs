//! Training recipe: inverse-frequency class weights, weighted cross-entropy,
//! gradient-norm clipping, stratified k-fold splitting and early stopping.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{average_reports, classification_report, ClassificationReport};
use crate::model::{init_model, Model, ModelConfig};
use crate::text::Encoded;

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Learning rate used with large pre-trained encoders.
pub const PRETRAINED_LEARNING_RATE: f64 = 5e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_threshold: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 8,
            weight_decay: 0.01,
            max_epochs: 20,
            patience: 3,
            clip_threshold: 1.0,
            folds: 5,
            seed: 42,
        }
    }
}

impl TrainConfig {
    /// The configuration used for fine-tuning large pre-trained encoders.
    pub fn pretrained_preset() -> Self {
        TrainConfig {
            learning_rate: PRETRAINED_LEARNING_RATE,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0) || !(self.clip_threshold > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning_rate and clip_threshold must be positive, weight_decay non-negative");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be at least 1");
        }
        if self.patience > self.max_epochs {
            return bad("patience cannot exceed max_epochs");
        }
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        Ok(())
    }
}

/// `w_c = (1 / freq_c) · (N / 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: BTreeMap<usize, f64>,
    pub frequencies: BTreeMap<usize, usize>,
    pub total: usize,
}

impl ClassWeights {
    /// Weight of `class`. A class absent from the fitted labels is treated as
    /// if it had been seen once, which is the largest weight the formula can
    /// produce for this `N`.
    pub fn weight(&self, class: usize) -> f64 {
        self.weights
            .get(&class)
            .copied()
            .unwrap_or(self.total as f64 / 2.0)
    }
}

pub fn compute_class_weights(labels: &[usize]) -> Result<ClassWeights> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("class weights need labels"));
    }
    let mut frequencies = BTreeMap::new();
    for &l in labels {
        *frequencies.entry(l).or_insert(0usize) += 1;
    }
    let n = labels.len() as f64;
    let weights = frequencies
        .iter()
        .map(|(&c, &f)| (c, (1.0 / f as f64) * (n / 2.0)))
        .collect();
    Ok(ClassWeights {
        weights,
        frequencies,
        total: labels.len(),
    })
}

/// Weighted mean of `-ln p[y]`, normalised by the sum of the target weights.
pub fn weighted_cross_entropy(
    probabilities: &[Vec<f64>],
    targets: &[usize],
    weights: &ClassWeights,
) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::EmptyInput("cross-entropy batch"));
    }
    if probabilities.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: targets.len(),
            right: probabilities.len(),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, &y) in probabilities.iter().zip(targets) {
        let py = *p
            .get(y)
            .ok_or_else(|| Error::DimensionMismatch(format!("target {y} outside {} classes", p.len())))?;
        let w = weights.weight(y);
        num += w * -py.max(PROB_FLOOR).ln();
        den += w;
    }
    let loss = num / den;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("cross-entropy evaluated to {loss}")));
    }
    Ok(loss)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `g` in place to norm `threshold` when its L2 norm exceeds it.
/// Returns the norm before clipping.
pub fn clip_gradient_norm_in_place(g: &mut [f64], threshold: f64) -> f64 {
    let norm = l2_norm(g);
    if norm > threshold {
        let scale = threshold / norm;
        for x in g.iter_mut() {
            *x *= scale;
        }
    }
    norm
}

pub fn clip_gradient_norm(g: &[f64], threshold: f64) -> Vec<f64> {
    let mut out = g.to_vec();
    clip_gradient_norm_in_place(&mut out, threshold);
    out
}

/// Splits indices into `k` folds so that each class is spread as evenly as
/// possible: per-class counts in any two folds differ by at most one.
///
/// Indices of each class are shuffled with a seeded RNG, the classes are
/// concatenated in label order, and position `i` of the concatenation goes to
/// fold `i mod k`. Continuing the rotation across classes also keeps the fold
/// sizes within one of each other.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Tracks validation loss and decides when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    epochs_without_improvement: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            epochs_without_improvement: 0,
        }
    }

    /// Records the validation loss of `epoch` (1-based).
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.epochs_without_improvement = 0;
            return StopDecision::Improved;
        }
        self.epochs_without_improvement += 1;
        if self.epochs_without_improvement >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub encoded: Encoded,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

pub fn predict_all(model: &Model, data: &[Instance]) -> Result<Vec<Vec<f64>>> {
    data.iter()
        .map(|i| model.forward(&i.encoded).map(|p| p.probabilities))
        .collect()
}

pub fn argmax_all(probabilities: &[Vec<f64>]) -> Vec<usize> {
    probabilities.iter().map(|p| crate::model::argmax(p)).collect()
}

pub fn accuracy(model: &Model, data: &[Instance]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("accuracy needs data"));
    }
    let probs = predict_all(model, data)?;
    let correct = argmax_all(&probs)
        .iter()
        .zip(data)
        .filter(|(p, i)| **p == i.label)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

fn evaluate_split(
    model: &Model,
    data: &[Instance],
    weights: &ClassWeights,
    class_names: &[String],
) -> Result<(f64, ClassificationReport)> {
    let probs = predict_all(model, data)?;
    let targets: Vec<usize> = data.iter().map(|i| i.label).collect();
    let loss = weighted_cross_entropy(&probs, &targets, weights)?;
    let report = classification_report(&targets, &argmax_all(&probs), class_names)?;
    Ok((loss, report))
}

/// Mini-batch gradient descent with per-batch norm clipping and decoupled
/// weight decay. Stops once the validation loss has failed to improve for
/// `patience` consecutive epochs and returns the best-validation parameters.
pub fn train_with_early_stopping(
    mut model: Model,
    train: &[Instance],
    val: &[Instance],
    weights: &ClassWeights,
    config: &TrainConfig,
    class_names: &[String],
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput("training and validation splits must be non-empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_params = model.params().to_vec();
    let mut history = Vec::new();
    let train_targets: Vec<usize> = train.iter().map(|i| i.label).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&Encoded, usize)> =
                chunk.iter().map(|&i| (&train[i].encoded, train[i].label)).collect();
            let sample_w: Vec<f64> = chunk.iter().map(|&i| weights.weight(train[i].label)).collect();
            let (_, mut grad) = model.loss_and_grad(&batch, &sample_w)?;
            clip_gradient_norm_in_place(&mut grad, config.clip_threshold);
            let lr = config.learning_rate;
            let decay = lr * config.weight_decay;
            for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                *p -= lr * g + decay * *p;
            }
        }
        if !model.all_finite() {
            return Err(Error::Numerical(format!("parameters diverged in epoch {epoch}")));
        }
        let train_probs = predict_all(&model, train)?;
        let train_loss = weighted_cross_entropy(&train_probs, &train_targets, weights)?;
        let (val_loss, val_report) = evaluate_split(&model, val, weights, class_names)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_macro_f1: val_report.macro_avg.f1,
        });
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best_params.copy_from_slice(model.params()),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: stopper.best_epoch(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold_index: usize,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub train_size: usize,
    pub val_size: usize,
    /// Accuracy of the restored model on its own training split.
    pub train_accuracy: f64,
    pub class_weights: ClassWeights,
    /// Validation-fold report of the restored model.
    pub report: ClassificationReport,
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub folds: Vec<FoldResult>,
    pub models: Vec<Model>,
    pub averaged: ClassificationReport,
}

/// Seed for fold `fold` derived from the run seed.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((fold as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9))
}

/// Stratified k-fold cross-validation. Class weights are fitted on each
/// training split; the averaged report is the unweighted mean over folds.
pub fn cross_validate(
    data: &[Instance],
    model_config: &ModelConfig,
    config: &TrainConfig,
    class_names: &[String],
) -> Result<CrossValidation> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("cross-validation needs labeled instances"));
    }
    let labels: Vec<usize> = data.iter().map(|i| i.label).collect();
    let folds = stratified_folds(&labels, config.folds, config.seed)?;
    let mut counts = BTreeMap::new();
    for &l in &labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    for (&c, &n) in &counts {
        if n < config.folds {
            log::warn!(
                "class {} has {n} samples, fewer than {} folds",
                class_names.get(c).map(String::as_str).unwrap_or("?"),
                config.folds
            );
        }
    }

    let results: Vec<(FoldResult, Model)> = (0..folds.len())
        .into_par_iter()
        .map(|f| {
            let held_out = &folds[f];
            let val: Vec<Instance> = held_out.iter().map(|&i| data[i].clone()).collect();
            let train: Vec<Instance> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, idx)| idx.iter().map(|&i| data[i].clone()))
                .collect();
            let train_labels: Vec<usize> = train.iter().map(|i| i.label).collect();
            let weights = compute_class_weights(&train_labels)?;
            let seed = fold_seed(config.seed, f);
            let model = init_model(ModelConfig {
                seed,
                ..model_config.clone()
            })?;
            let fold_config = TrainConfig {
                seed,
                ..config.clone()
            };
            let outcome = train_with_early_stopping(model, &train, &val, &weights, &fold_config, class_names)?;
            let (_, report) = evaluate_split(&outcome.model, &val, &weights, class_names)?;
            let train_accuracy = accuracy(&outcome.model, &train)?;
            Ok((
                FoldResult {
                    fold_index: f,
                    history: outcome.history,
                    best_epoch: outcome.best_epoch,
                    train_size: train.len(),
                    val_size: val.len(),
                    train_accuracy,
                    class_weights: weights,
                    report,
                },
                outcome.model,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let (folds, models): (Vec<FoldResult>, Vec<Model>) = results.into_iter().unzip();
    let reports: Vec<ClassificationReport> = folds.iter().map(|f| f.report.clone()).collect();
    Ok(CrossValidation {
        averaged: average_reports(&reports)?,
        folds,
        models,
    })
}
