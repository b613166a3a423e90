//! Classification metrics, the majority-class baseline, and report tables.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are gold classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(gold: &[usize], predicted: &[usize], class_names: &[String]) -> Result<Self> {
        if gold.len() != predicted.len() {
            return Err(Error::LengthMismatch {
                left: gold.len(),
                right: predicted.len(),
            });
        }
        let c = class_names.len();
        let mut counts = vec![vec![0usize; c]; c];
        for (&g, &p) in gold.iter().zip(predicted) {
            if g >= c || p >= c {
                return Err(Error::DimensionMismatch(format!(
                    "class index {} outside {c} classes",
                    g.max(p)
                )));
            }
            counts[g][p] += 1;
        }
        Ok(ConfusionMatrix {
            counts,
            class_names: class_names.to_vec(),
        })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn support(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    pub fn predicted_count(&self, class: usize) -> usize {
        self.counts.iter().map(|row| row[class]).sum()
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: Averages,
    pub weighted: Averages,
    pub accuracy: f64,
    pub total_support: usize,
}

/// Precision, recall and F1 per class, plus macro, support-weighted and
/// accuracy summaries. Undefined ratios score 0. Every class in
/// `class_names` gets a row; the macro average runs over the classes that
/// occur in either `gold` or `predicted`.
pub fn classification_report(
    gold: &[usize],
    predicted: &[usize],
    class_names: &[String],
) -> Result<ClassificationReport> {
    let cm = ConfusionMatrix::new(gold, predicted, class_names)?;
    if gold.is_empty() {
        return Err(Error::EmptyInput("classification report needs at least one sample"));
    }
    Ok(report_from_confusion(&cm))
}

pub fn report_from_confusion(cm: &ConfusionMatrix) -> ClassificationReport {
    let total = cm.total();
    let per_class: Vec<ClassMetrics> = (0..cm.class_names.len())
        .map(|c| {
            let tp = cm.counts[c][c];
            let precision = ratio(tp, cm.predicted_count(c));
            let recall = ratio(tp, cm.support(c));
            ClassMetrics {
                class: cm.class_names[c].clone(),
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: cm.support(c),
            }
        })
        .collect();
    let present: Vec<&ClassMetrics> = per_class
        .iter()
        .enumerate()
        .filter(|(c, m)| m.support > 0 || cm.predicted_count(*c) > 0)
        .map(|(_, m)| m)
        .collect();
    let k = present.len().max(1) as f64;
    let macro_avg = Averages {
        precision: present.iter().map(|m| m.precision).sum::<f64>() / k,
        recall: present.iter().map(|m| m.recall).sum::<f64>() / k,
        f1: present.iter().map(|m| m.f1).sum::<f64>() / k,
    };
    let n = total.max(1) as f64;
    let weighted = Averages {
        precision: per_class.iter().map(|m| m.precision * m.support as f64).sum::<f64>() / n,
        recall: per_class.iter().map(|m| m.recall * m.support as f64).sum::<f64>() / n,
        f1: per_class.iter().map(|m| m.f1 * m.support as f64).sum::<f64>() / n,
    };
    ClassificationReport {
        per_class,
        macro_avg,
        weighted,
        accuracy: ratio(cm.correct(), total),
        total_support: total,
    }
}

/// Unweighted mean of several reports' metrics; supports are summed.
pub fn average_reports(reports: &[ClassificationReport]) -> Result<ClassificationReport> {
    let first = reports
        .first()
        .ok_or(Error::EmptyInput("no reports to average"))?;
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&ClassificationReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let per_class = (0..first.per_class.len())
        .map(|c| ClassMetrics {
            class: first.per_class[c].class.clone(),
            precision: mean(&|r| r.per_class[c].precision),
            recall: mean(&|r| r.per_class[c].recall),
            f1: mean(&|r| r.per_class[c].f1),
            support: reports.iter().map(|r| r.per_class[c].support).sum(),
        })
        .collect();
    Ok(ClassificationReport {
        per_class,
        macro_avg: Averages {
            precision: mean(&|r| r.macro_avg.precision),
            recall: mean(&|r| r.macro_avg.recall),
            f1: mean(&|r| r.macro_avg.f1),
        },
        weighted: Averages {
            precision: mean(&|r| r.weighted.precision),
            recall: mean(&|r| r.weighted.recall),
            f1: mean(&|r| r.weighted.f1),
        },
        accuracy: mean(&|r| r.accuracy),
        total_support: reports.iter().map(|r| r.total_support).sum(),
    })
}

impl fmt::Display for ClassificationReport {
    /// Aligned text table at two decimal places.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self
            .per_class
            .iter()
            .map(|m| m.class.len())
            .chain(["Avg (Weighted)".len()])
            .max()
            .unwrap_or(0);
        writeln!(f, "{:<w$}  {:>9}  {:>6}  {:>8}  {:>7}", "Class", "Precision", "Recall", "F1-Score", "Support")?;
        for m in &self.per_class {
            writeln!(
                f,
                "{:<w$}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}",
                m.class, m.precision, m.recall, m.f1, m.support
            )?;
        }
        for (name, a) in [("Avg (Macro)", &self.macro_avg), ("Avg (Weighted)", &self.weighted)] {
            writeln!(f, "{:<w$}  {:>9.2}  {:>6.2}  {:>8.2}", name, a.precision, a.recall, a.f1)?;
        }
        writeln!(f, "{:<w$}  {:>9.2}  {:>6}  {:>8}  {:>7}", "Accuracy", self.accuracy, "", "", self.total_support)
    }
}

/// Constant predictor of the most frequent training class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityBaseline {
    pub class: usize,
}

impl MajorityBaseline {
    pub fn predict(&self) -> usize {
        self.class
    }

    pub fn predict_all(&self, n: usize) -> Vec<usize> {
        vec![self.class; n]
    }
}

/// Modal class of `train_labels`, lowest index on ties.
pub fn majority_baseline(train_labels: &[usize]) -> Result<MajorityBaseline> {
    let max_class = train_labels
        .iter()
        .copied()
        .max()
        .ok_or(Error::EmptyInput("majority baseline needs labels"))?;
    let mut counts = vec![0usize; max_class + 1];
    for &l in train_labels {
        counts[l] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    Ok(MajorityBaseline { class: best })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedScores {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub macro_f1: f64,
}

/// Scores of a constant majority predictor on data whose majority class has
/// proportion `p`, over `num_classes` classes. The majority class has
/// precision `p` and recall 1; every other class scores 0.
pub fn baseline_expected_scores(p: f64, num_classes: usize) -> ExpectedScores {
    let majority_f1 = 2.0 * p / (1.0 + p);
    ExpectedScores {
        accuracy: p,
        weighted_f1: p * majority_f1,
        macro_f1: majority_f1 / num_classes as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn f1_matches_report_rows() {
        assert_eq!(format!("{:.2}", f1_score(1.00, 0.88)), "0.94");
        // A row printed as 1.00 / 0.88 / 0.93 was computed from the unrounded
        // recall 7/8.
        assert_eq!(format!("{:.2}", f1_score(1.0, 7.0 / 8.0)), "0.93");
        assert_eq!(format!("{:.2}", f1_score(0.80, 1.00)), "0.89");
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn perfect_predictions() {
        let gold = [0, 1, 2, 1, 0];
        let r = classification_report(&gold, &gold, &names(3)).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.per_class.iter().all(|m| m.f1 == 1.0));
        assert_eq!(r.macro_avg.f1, 1.0);
        assert_eq!(r.weighted.f1, 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            classification_report(&[0, 1], &[0], &names(2)),
            Err(Error::LengthMismatch { left: 2, right: 1 })
        ));
        assert!(classification_report(&[], &[], &names(2)).is_err());
        assert!(classification_report(&[3], &[0], &names(2)).is_err());
        assert!(matches!(majority_baseline(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn hand_checked_report() {
        // gold:   0 0 0 1 1 2
        // pred:   0 0 1 1 2 2
        let r = classification_report(&[0, 0, 0, 1, 1, 2], &[0, 0, 1, 1, 2, 2], &names(4)).unwrap();
        let m0 = &r.per_class[0];
        assert_eq!((m0.precision, m0.recall, m0.support), (1.0, 2.0 / 3.0, 3));
        let m1 = &r.per_class[1];
        assert_eq!((m1.precision, m1.recall), (0.5, 0.5));
        let m2 = &r.per_class[2];
        assert_eq!((m2.precision, m2.recall), (0.5, 1.0));
        assert_eq!(r.per_class[3].support, 0);
        assert!((r.accuracy - 4.0 / 6.0).abs() < 1e-15);
        let f0 = 0.8;
        let f1 = 0.5;
        let f2 = 2.0 / 3.0;
        assert!((r.macro_avg.f1 - (f0 + f1 + f2) / 3.0).abs() < 1e-12);
        assert!((r.weighted.f1 - (3.0 * f0 + 2.0 * f1 + f2) / 6.0).abs() < 1e-12);
        let text = r.to_string();
        assert!(text.contains("Avg (Macro)"));
        assert!(text.lines().count() == 1 + 4 + 3);
    }

    #[test]
    fn majority_examples() {
        let mut labels = vec![0usize; 38];
        labels.extend(std::iter::repeat_n(3, 30));
        labels.extend(std::iter::repeat_n(4, 87 - 30));
        assert_eq!(majority_baseline(&labels).unwrap().class, 4);
        assert_eq!(majority_baseline(&[2, 2, 1, 1, 3]).unwrap().class, 1);
        assert_eq!(majority_baseline(&[5]).unwrap().predict_all(2), vec![5, 5]);
    }

    #[test]
    fn expected_scores_examples() {
        let s = baseline_expected_scores(1.0, 1);
        assert_eq!((s.accuracy, s.weighted_f1, s.macro_f1), (1.0, 1.0, 1.0));
        let s = baseline_expected_scores(0.5, 2);
        assert_eq!(s.accuracy, 0.5);
        assert!((s.weighted_f1 - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
        let s = baseline_expected_scores(0.245, 7);
        assert!((s.weighted_f1 - 0.096).abs() < 5e-4);
        assert!((s.macro_f1 - 0.056).abs() < 5e-4);
    }

    #[test]
    fn averaging_reports() {
        let a = classification_report(&[0, 1], &[0, 1], &names(2)).unwrap();
        let b = classification_report(&[0, 1], &[1, 1], &names(2)).unwrap();
        let avg = average_reports(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(avg.accuracy, 0.75);
        assert_eq!(avg.total_support, 4);
        assert_eq!(avg.per_class[0].recall, 0.5);
        assert!(average_reports(&[]).is_err());
    }

    fn labels_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (1usize..60).prop_flat_map(|n| {
            (
                proptest::collection::vec(0usize..5, n),
                proptest::collection::vec(0usize..5, n),
            )
        })
    }

    proptest! {
        #[test]
        fn constant_predictor_matches_closed_form(gold in proptest::collection::vec(0usize..6, 1..200)) {
            let baseline = majority_baseline(&gold).unwrap();
            let pred = baseline.predict_all(gold.len());
            let r = classification_report(&gold, &pred, &names(6)).unwrap();
            let p = gold.iter().filter(|&&g| g == baseline.class).count() as f64 / gold.len() as f64;
            let present = (0..6).filter(|c| gold.contains(c)).count();
            let e = baseline_expected_scores(p, present);
            prop_assert!((r.accuracy - e.accuracy).abs() < 1e-12);
            prop_assert!((r.weighted.f1 - e.weighted_f1).abs() < 1e-12);
            prop_assert!((r.macro_avg.f1 - e.macro_f1).abs() < 1e-12);
        }

        #[test]
        fn micro_recall_is_accuracy((gold, pred) in labels_strategy()) {
            let r = classification_report(&gold, &pred, &names(5)).unwrap();
            let tp: f64 = r.per_class.iter().map(|m| m.recall * m.support as f64).sum();
            prop_assert!((tp / gold.len() as f64 - r.accuracy).abs() < 1e-12);
            prop_assert!((r.weighted.recall - r.accuracy).abs() < 1e-12);
            for m in &r.per_class {
                prop_assert!((0.0..=1.0).contains(&m.precision));
                prop_assert!((0.0..=1.0).contains(&m.f1));
            }
        }

        #[test]
        fn report_is_permutation_invariant((gold, pred) in labels_strategy(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut idx: Vec<usize> = (0..gold.len()).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let g2: Vec<usize> = idx.iter().map(|&i| gold[i]).collect();
            let p2: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
            let a = classification_report(&gold, &pred, &names(5)).unwrap();
            let b = classification_report(&g2, &p2, &names(5)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
