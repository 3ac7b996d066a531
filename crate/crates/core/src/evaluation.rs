//! Confusion matrices, per-class precision / recall / F1 and macro averages.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("gold and predicted label sequences differ in length ({gold} vs {predicted})")]
    LengthMismatch { gold: usize, predicted: usize },
    #[error("cannot score an empty label sequence")]
    Empty,
    #[error("metric value {value} for {class} is outside [0, 1]")]
    OutOfRange { class: String, value: f64 },
}

/// Counts indexed `[gold][predicted]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; Label::COUNT]; Label::COUNT],
}

impl ConfusionMatrix {
    pub fn from_labels(gold: &[Label], predicted: &[Label]) -> Result<Self, EvalError> {
        if gold.len() != predicted.len() {
            return Err(EvalError::LengthMismatch {
                gold: gold.len(),
                predicted: predicted.len(),
            });
        }
        let mut m = Self::default();
        for (g, p) in gold.iter().zip(predicted) {
            m.add(*g, *p);
        }
        Ok(m)
    }

    pub fn add(&mut self, gold: Label, predicted: Label) {
        self.counts[gold.index()][predicted.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..Label::COUNT).map(|i| self.counts[i][i]).sum()
    }

    pub fn tp(&self, c: Label) -> u64 {
        self.counts[c.index()][c.index()]
    }

    /// Predicted `c` but gold differs.
    pub fn fp(&self, c: Label) -> u64 {
        let k = c.index();
        (0..Label::COUNT).filter(|&g| g != k).map(|g| self.counts[g][k]).sum()
    }

    /// Gold `c` but predicted differs.
    pub fn fn_(&self, c: Label) -> u64 {
        let k = c.index();
        (0..Label::COUNT).filter(|&p| p != k).map(|p| self.counts[k][p]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    pub fn new(precision: f64, recall: f64) -> Self {
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }

    fn mean<'a>(items: impl IntoIterator<Item = &'a ClassMetrics>) -> Self {
        let (mut p, mut r, mut f, mut n) = (0.0, 0.0, 0.0, 0.0);
        for m in items {
            p += m.precision;
            r += m.recall;
            f += m.f1;
            n += 1.0;
        }
        Self {
            precision: p / n,
            recall: r / n,
            f1: f / n,
        }
    }
}

/// Per-class metrics in label order plus the two unweighted macro averages.
/// Macro F1 is the mean of per-class F1 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: [ClassMetrics; Label::COUNT],
    /// Mean over the four interaction classes.
    pub macro4: ClassMetrics,
    /// Mean over all five classes.
    pub macro5: ClassMetrics,
    pub accuracy: Option<f64>,
    pub support: Option<[u64; Label::COUNT]>,
}

impl EvalReport {
    pub fn from_confusion(m: &ConfusionMatrix) -> Self {
        let per_class = Label::ALL.map(|c| {
            let tp = m.tp(c);
            ClassMetrics::new(ratio(tp, tp + m.fp(c)), ratio(tp, tp + m.fn_(c)))
        });
        let support = Label::ALL.map(|c| m.counts[c.index()].iter().sum());
        let mut r = Self::from_per_class(per_class);
        r.accuracy = Some(m.accuracy());
        r.support = Some(support);
        r
    }

    pub fn from_per_class(per_class: [ClassMetrics; Label::COUNT]) -> Self {
        let macro4 = ClassMetrics::mean(
            Label::POSITIVE.iter().map(|c| &per_class[c.index()]),
        );
        let macro5 = ClassMetrics::mean(per_class.iter());
        Self {
            per_class,
            macro4,
            macro5,
            accuracy: None,
            support: None,
        }
    }

    /// Builds a report from published per-class precision and recall values,
    /// each F1 being recomputed as their harmonic mean.
    pub fn from_precision_recall(pr: [(f64, f64); Label::COUNT]) -> Result<Self, EvalError> {
        for (c, &(p, r)) in Label::ALL.iter().zip(&pr) {
            for v in [p, r] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(EvalError::OutOfRange {
                        class: c.name().to_string(),
                        value: v,
                    });
                }
            }
        }
        Ok(Self::from_per_class(pr.map(|(p, r)| ClassMetrics::new(p, r))))
    }

    pub fn class(&self, c: Label) -> &ClassMetrics {
        &self.per_class[c.index()]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    fn rows(&self) -> Vec<(&'static str, &ClassMetrics)> {
        let mut rows: Vec<(&'static str, &ClassMetrics)> = Label::ALL
            .iter()
            .map(|c| (c.name(), &self.per_class[c.index()]))
            .collect();
        rows.push(("macro4", &self.macro4));
        rows.push(("macro5", &self.macro5));
        rows
    }

    /// Fixed-width table: five class rows, then macro4 and macro5.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<10} {:>9} {:>9} {:>9}", "class", "precision", "recall", "f1").unwrap();
        for (name, m) in self.rows() {
            writeln!(
                out,
                "{:<10} {:>9.4} {:>9.4} {:>9.4}",
                name, m.precision, m.recall, m.f1
            )
            .unwrap();
        }
        if let Some(acc) = self.accuracy {
            writeln!(out, "accuracy   {acc:.4}").unwrap();
        }
        out
    }

    /// Header plus seven rows: five classes, macro4, macro5.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1\n");
        for (name, m) in self.rows() {
            writeln!(out, "{name},{},{},{}", m.precision, m.recall, m.f1).unwrap();
        }
        out
    }
}

/// Scores predicted labels against gold labels.
pub fn score(gold: &[Label], predicted: &[Label]) -> Result<EvalReport, EvalError> {
    if gold.is_empty() && predicted.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(EvalReport::from_confusion(&ConfusionMatrix::from_labels(gold, predicted)?))
}

/// Trigger-phrase lookup for the synthetic corpus: the class whose lexicon
/// phrase occurs in the between part, else `Other`.
pub fn trigger_oracle(between: &[&str]) -> Label {
    use crate::corpus::SynthConfig;
    for label in Label::POSITIVE {
        for phrase in SynthConfig::triggers(label) {
            if between.windows(phrase.len()).any(|w| w == *phrase) {
                return label;
            }
        }
    }
    Label::Other
}

/// Most frequent gold label of `train` (lowest index on ties).
pub fn majority_label(train: &[Label]) -> Label {
    let h = crate::corpus::label_histogram(train);
    let best = (0..Label::COUNT).fold(0, |b, i| if h[i] > h[b] { i } else { b });
    Label::from_index(best).expect("valid index")
}
