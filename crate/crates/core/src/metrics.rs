//! Confusion-matrix statistics. Up is the positive class.

use crate::error::{contract, Result};
use crate::window::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Actual positives (tp + fn).
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Actual negatives (tn + fp).
    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    /// TP / (TP + FN)
    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fn_) as f64)
    }

    /// TN / (TN + FP)
    pub fn specificity(&self) -> f64 {
        ratio(self.tn as f64, (self.tn + self.fp) as f64)
    }

    pub fn accuracy(&self) -> f64 {
        ratio((self.tp + self.tn) as f64, self.total() as f64)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fp) as f64)
    }

    /// Matthews correlation coefficient; 0 when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, fp, tn, fn_) = (self.tp as f64, self.fp as f64, self.tn as f64, self.fn_ as f64);
        let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        ratio(tp * tn - fp * fn_, den)
    }

    pub fn f_measure(&self) -> f64 {
        let (p, r) = (self.precision(), self.sensitivity());
        ratio(2.0 * p * r, p + r)
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            sensitivity: self.sensitivity(),
            specificity: self.specificity(),
            accuracy: self.accuracy(),
            mcc: self.mcc(),
            f_measure: self.f_measure(),
        }
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Up, Label::Up) => self.tp += 1,
            (Label::Down, Label::Up) => self.fp += 1,
            (Label::Down, Label::Down) => self.tn += 1,
            (Label::Up, Label::Down) => self.fn_ += 1,
        }
    }
}

/// The five reported statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub mcc: f64,
    pub f_measure: f64,
}

pub fn confusion(truths: &[Label], predictions: &[Label]) -> Result<ConfusionMatrix> {
    if truths.len() != predictions.len() {
        return contract(format!("{} truths vs {} predictions", truths.len(), predictions.len()));
    }
    if truths.is_empty() {
        return contract("confusion matrix needs at least one pair");
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truths.iter().zip(predictions) {
        cm.record(t, p);
    }
    Ok(cm)
}

/// Percentage with one decimal, as in the summary tables.
pub fn percent(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}
