//! Classifier evaluation and the strict NB-and-rules inclusion filter.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::AdClass;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("gold has {gold} labels but predictions have {predicted}")]
    LengthMismatch { gold: usize, predicted: usize },
    #[error("no labels to evaluate")]
    EmptyInput,
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
}

/// Rows are gold classes, columns predicted classes, both in [`AdClass`]
/// order. `abstained` counts items the predictor declined to label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 5]; 5],
    pub abstained: [u64; 5],
}

impl ConfusionMatrix {
    pub fn get(&self, gold: AdClass, predicted: AdClass) -> u64 {
        self.counts[gold.index()][predicted.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold count.
    pub support: u64,
    pub predicted: u64,
    /// Set when precision had a zero denominator and was defined as 0.
    pub precision_undefined: bool,
    /// Set when recall had a zero denominator and was defined as 0.
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub per_class: BTreeMap<AdClass, PerClassMetrics>,
    /// Means over the classes seen in gold or predictions.
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn metrics(gold: &[AdClass], predicted: &[AdClass]) -> Result<ClassMetrics, EvalError> {
    let predicted: Vec<Option<AdClass>> = predicted.iter().copied().map(Some).collect();
    metrics_with_abstention(gold, &predicted)
}

/// Like [`metrics`], but `None` predictions abstain: they count against the
/// gold class's recall and against accuracy, and never as a false positive.
pub fn metrics_with_abstention(gold: &[AdClass], predicted: &[Option<AdClass>]) -> Result<ClassMetrics, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            predicted: predicted.len(),
        });
    }
    if gold.is_empty() {
        return Err(EvalError::EmptyInput);
    }

    let mut confusion = ConfusionMatrix::default();
    for (&g, &p) in gold.iter().zip(predicted) {
        match p {
            Some(p) => confusion.counts[g.index()][p.index()] += 1,
            None => confusion.abstained[g.index()] += 1,
        }
    }

    let mut per_class = BTreeMap::new();
    let mut seen = Vec::new();
    let mut correct = 0;
    for class in AdClass::ALL {
        let i = class.index();
        let tp = confusion.counts[i][i];
        let support = confusion.counts[i].iter().sum::<u64>() + confusion.abstained[i];
        let predicted_count: u64 = confusion.counts.iter().map(|row| row[i]).sum();
        let (precision, precision_undefined) = ratio(tp, predicted_count);
        let (recall, recall_undefined) = ratio(tp, support);
        let m = PerClassMetrics {
            precision,
            recall,
            f1: f1_score(precision, recall),
            support,
            predicted: predicted_count,
            precision_undefined,
            recall_undefined,
        };
        if support > 0 || predicted_count > 0 {
            seen.push(m.clone());
        }
        correct += tp;
        per_class.insert(class, m);
    }

    let n = seen.len() as f64;
    Ok(ClassMetrics {
        macro_precision: seen.iter().map(|m| m.precision).sum::<f64>() / n,
        macro_recall: seen.iter().map(|m| m.recall).sum::<f64>() / n,
        macro_f1: seen.iter().map(|m| m.f1).sum::<f64>() / n,
        accuracy: correct as f64 / gold.len() as f64,
        per_class,
        confusion,
    })
}

/// Final label for analysis: the NB label survives only when the rules model
/// agrees. Rules never emit `Other`, so `Other` passes through.
pub fn strict_filter(nb_label: AdClass, rule_labels: &BTreeSet<AdClass>) -> Option<AdClass> {
    if nb_label == AdClass::Other || rule_labels.contains(&nb_label) {
        Some(nb_label)
    } else {
        None
    }
}

/// Per-class proportional train/test split, deterministic for a seed.
///
/// Each class sends `round(n * test_fraction)` items to test, clamped so that
/// a class with at least two items lands in both partitions. Both partitions
/// keep the input order.
pub fn stratified_split<T: Clone>(
    items: &[T],
    label: impl Fn(&T) -> AdClass,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), EvalError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(EvalError::InvalidFraction(test_fraction));
    }
    let mut by_class: BTreeMap<AdClass, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_class.entry(label(item)).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; items.len()];
    for indices in by_class.values_mut() {
        let n = indices.len();
        let mut n_test = (n as f64 * test_fraction).round() as usize;
        if n >= 2 {
            n_test = n_test.clamp(1, n - 1);
        } else {
            n_test = 0;
        }
        indices.shuffle(&mut rng);
        for &i in &indices[..n_test] {
            is_test[i] = true;
        }
    }

    let mut train = Vec::with_capacity(items.len());
    let mut test = Vec::new();
    for (item, test_side) in items.iter().zip(is_test) {
        if test_side {
            test.push(item.clone());
        } else {
            train.push(item.clone());
        }
    }
    Ok((train, test))
}

/// Metrics table as CSV: class, precision, recall, f1, support.
pub fn metrics_csv(m: &ClassMetrics) -> String {
    let mut out = String::from("class,precision,recall,f1,support\n");
    for (class, row) in &m.per_class {
        let _ = writeln!(
            out,
            "{class},{:.4},{:.4},{:.4},{}",
            row.precision, row.recall, row.f1, row.support
        );
    }
    let _ = writeln!(
        out,
        "macro,{:.4},{:.4},{:.4},{}",
        m.macro_precision,
        m.macro_recall,
        m.macro_f1,
        m.confusion.counts.iter().flatten().sum::<u64>() + m.confusion.abstained.iter().sum::<u64>()
    );
    out
}

/// Human-readable metrics table with an accuracy footer.
pub fn metrics_text(m: &ClassMetrics) -> String {
    let mut out = format!(
        "{:<12} {:>9} {:>9} {:>9} {:>8}\n",
        "class", "precision", "recall", "f1", "support"
    );
    for (class, row) in &m.per_class {
        let flag = if row.precision_undefined || row.recall_undefined {
            " *"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>8}{flag}",
            class.as_str(),
            row.precision,
            row.recall,
            row.f1,
            row.support
        );
    }
    let _ = writeln!(
        out,
        "{:<12} {:>9.4} {:>9.4} {:>9.4}",
        "macro", m.macro_precision, m.macro_recall, m.macro_f1
    );
    let _ = writeln!(out, "accuracy {:.4}", m.accuracy);
    if m.per_class
        .values()
        .any(|r| r.precision_undefined || r.recall_undefined)
    {
        out.push_str("* zero denominator, metric reported as 0\n");
    }
    out
}
