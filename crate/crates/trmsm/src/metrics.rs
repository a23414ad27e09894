//! Confusion-matrix based classification metrics: per-class accuracy and
//! F1, weighted F1, macro F1, micro F1, and their mean (mF1).
//!
//! Conventions: 0/0 ratios are 0; per-class accuracy is the class recall;
//! classes absent from both gold and predictions are excluded from the
//! macro average, while present-but-unpredicted classes contribute F1 = 0.

use serde::Serialize;

use crate::error::{Error, Result};

/// K x K counts, rows = gold, columns = predicted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

pub fn confusion(gold: &[usize], pred: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::Data(format!(
            "gold/pred length mismatch: {} vs {}",
            gold.len(),
            pred.len()
        )));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&g, &p) in gold.iter().zip(pred) {
        if g >= num_classes || p >= num_classes {
            return Err(Error::Data(format!(
                "label out of range: gold {g}, pred {p}, K={num_classes}"
            )));
        }
        counts[g][p] += 1;
    }
    Ok(ConfusionMatrix {
        num_classes,
        counts,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Scores {
    pub per_class_acc: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub m_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn scores(cm: &ConfusionMatrix) -> Scores {
    let k = cm.num_classes;
    let total: u64 = cm.counts.iter().flatten().sum();
    let mut per_class_f1 = vec![0.0; k];
    let mut per_class_acc = vec![0.0; k];
    let mut weighted = 0.0;
    let mut macro_sum = 0.0;
    let mut macro_n = 0usize;
    let mut correct: u64 = 0;
    for c in 0..k {
        let tp = cm.counts[c][c];
        correct += tp;
        let gold_c: u64 = cm.counts[c].iter().sum();
        let pred_c: u64 = (0..k).map(|g| cm.counts[g][c]).sum();
        let precision = ratio(tp as f64, pred_c as f64);
        let recall = ratio(tp as f64, gold_c as f64);
        let f1 = ratio(2.0 * precision * recall, precision + recall);
        per_class_f1[c] = f1;
        per_class_acc[c] = recall;
        weighted += ratio(gold_c as f64, total as f64) * f1;
        if gold_c > 0 || pred_c > 0 {
            macro_sum += f1;
            macro_n += 1;
        }
    }
    let accuracy = ratio(correct as f64, total as f64);
    let macro_f1 = ratio(macro_sum, macro_n as f64);
    // single-label multiclass: micro F1 reduces to global accuracy
    let micro_f1 = accuracy;
    Scores {
        per_class_acc,
        per_class_f1,
        weighted_f1: weighted,
        macro_f1,
        micro_f1,
        m_f1: 0.5 * (macro_f1 + micro_f1),
        accuracy,
    }
}

impl Scores {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "weighted_f1" | "wf1" => Some(self.weighted_f1),
            "macro_f1" => Some(self.macro_f1),
            "micro_f1" => Some(self.micro_f1),
            "m_f1" | "mf1" => Some(self.m_f1),
            "accuracy" | "acc" => Some(self.accuracy),
            _ => None,
        }
    }
}

/// Full evaluation report, serialized as the metrics JSON artifact.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    pub scores: Scores,
    pub confusion: ConfusionMatrix,
    pub num_utterances: usize,
}

pub fn report(gold: &[usize], pred: &[usize], num_classes: usize) -> Result<MetricsReport> {
    let cm = confusion(gold, pred, num_classes)?;
    Ok(MetricsReport {
        scores: scores(&cm),
        num_utterances: gold.len(),
        confusion: cm,
    })
}
