use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square confusion matrix, rows are the true class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn new(n_classes: usize) -> Self {
        Confusion {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], n_classes: usize) -> Self {
        assert_eq!(truth.len(), predicted.len(), "one prediction per label");
        let mut c = Confusion::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            c.counts[t][p] += 1;
        }
        c
    }

    /// The 2×2 matrix for a positive class at index 0.
    pub fn binary(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Confusion {
            counts: vec![vec![tp, fn_], vec![fp, tn]],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn add(&mut self, other: &Confusion) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// One-vs-rest scores per class and their unweighted means. Undefined
/// ratios are 0.
pub fn metrics(c: &Confusion) -> Result<Metrics> {
    let n = c.n_classes();
    if n == 0 || c.counts.iter().any(|r| r.len() != n) {
        return Err(Error::data("confusion matrix must be square and non-empty"));
    }
    let total = c.total();
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|k| {
            let tp = c.counts[k][k];
            let support: u64 = c.counts[k].iter().sum();
            let predicted: u64 = c.counts.iter().map(|r| r[k]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    let trace: u64 = (0..n).map(|k| c.counts[k][k]).sum();
    Ok(Metrics {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy: ratio(trace, total),
        per_class,
    })
}

/// Macro-F1 of a prediction list.
pub fn macro_f1(truth: &[usize], predicted: &[usize], n_classes: usize) -> f64 {
    metrics(&Confusion::from_predictions(truth, predicted, n_classes))
        .map(|m| m.macro_f1)
        .unwrap_or(0.0)
}
