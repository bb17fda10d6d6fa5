//! Classification reporting: 5x5 confusion matrix, per-class
//! precision/recall/F1 with explicit zero-division flags, and macro /
//! support-weighted averages.

use crate::data::DataError;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const N_CLASSES: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// True when a denominator was zero and the value was defined as 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Rows are true classes, columns predicted.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub loss: f64,
    pub n: usize,
}

impl MetricsReport {
    pub fn from_predictions(y_true: &[u8], y_pred: &[u8], loss: f64) -> Result<Self, DataError> {
        if y_true.len() != y_pred.len() {
            return Err(DataError::Data(format!(
                "label/prediction length mismatch: {} vs {}",
                y_true.len(),
                y_pred.len()
            )));
        }
        let mut confusion = vec![vec![0usize; N_CLASSES]; N_CLASSES];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            let (t, p) = (t as usize, p as usize);
            if t >= N_CLASSES || p >= N_CLASSES {
                return Err(DataError::Data(format!("class out of range: true {t} pred {p}")));
            }
            confusion[t][p] += 1;
        }
        let n = y_true.len();
        let correct: usize = (0..N_CLASSES).map(|k| confusion[k][k]).sum();
        let accuracy = if n == 0 { 0.0 } else { correct as f64 / n as f64 };

        let mut per_class = Vec::with_capacity(N_CLASSES);
        for k in 0..N_CLASSES {
            let tp = confusion[k][k];
            let fp: usize = (0..N_CLASSES).filter(|&r| r != k).map(|r| confusion[r][k]).sum();
            let fn_: usize = (0..N_CLASSES).filter(|&c| c != k).map(|c| confusion[k][c]).sum();
            let support = tp + fn_;
            let mut zero_division = false;
            let mut ratio = |num: usize, den: usize| {
                if den == 0 {
                    zero_division = true;
                    0.0
                } else {
                    num as f64 / den as f64
                }
            };
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                zero_division = true;
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            per_class.push(ClassMetrics { precision, recall, f1, support, zero_division });
        }

        let sum = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>();
        let macro_precision = sum(|c| c.precision) / N_CLASSES as f64;
        let macro_recall = sum(|c| c.recall) / N_CLASSES as f64;
        let macro_f1 = sum(|c| c.f1) / N_CLASSES as f64;
        let wsum = |f: fn(&ClassMetrics) -> f64| {
            per_class.iter().map(|c| f(c) * c.support as f64).sum::<f64>()
        };
        let total = n.max(1) as f64;
        let weighted_precision = wsum(|c| c.precision) / total;
        let weighted_recall = wsum(|c| c.recall) / total;
        let weighted_f1 = wsum(|c| c.f1) / total;

        Ok(MetricsReport {
            confusion,
            accuracy,
            per_class,
            macro_precision,
            macro_recall,
            macro_f1,
            weighted_precision,
            weighted_recall,
            weighted_f1,
            loss,
            n,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<(), DataError> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)
            .map_err(|e| DataError::Data(format!("metrics serialisation: {e}")))?;
        writeln!(f)?;
        Ok(())
    }

    /// Confusion matrix as CSV with labelled axes.
    pub fn write_confusion_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut f = std::fs::File::create(path)?;
        let header: Vec<String> =
            (0..N_CLASSES).map(|k| format!("pred_{k}")).collect();
        writeln!(f, "true,{}", header.join(","))?;
        for (k, row) in self.confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(f, "{k},{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y: Vec<u8> = vec![0, 1, 2, 3, 4, 4];
        let r = MetricsReport::from_predictions(&y, &y, 0.1).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.weighted_f1, 1.0);
        assert!(r.per_class.iter().all(|c| !c.zero_division));
    }

    #[test]
    fn absent_class_flags_zero_division() {
        // Class 4 never appears in truth or predictions.
        let y_true: Vec<u8> = vec![0, 0, 1, 2, 3];
        let y_pred: Vec<u8> = vec![0, 1, 1, 2, 3];
        let r = MetricsReport::from_predictions(&y_true, &y_pred, 0.0).unwrap();
        assert!(r.per_class[4].zero_division);
        assert_eq!(r.per_class[4].f1, 0.0);
        assert_eq!(r.accuracy, 0.8);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(MetricsReport::from_predictions(&[0, 1], &[0], 0.0).is_err());
    }

    #[test]
    fn class_out_of_range_rejected() {
        assert!(MetricsReport::from_predictions(&[5], &[0], 0.0).is_err());
    }

    #[test]
    fn weighted_average_uses_support() {
        // 3 samples of class 0 all correct, 1 of class 1 wrong.
        let y_true: Vec<u8> = vec![0, 0, 0, 1];
        let y_pred: Vec<u8> = vec![0, 0, 0, 0];
        let r = MetricsReport::from_predictions(&y_true, &y_pred, 0.0).unwrap();
        // precision_0 = 3/4, recall_0 = 1; class 1 all zero.
        assert!((r.weighted_recall - 0.75).abs() < 1e-12);
        assert!((r.weighted_precision - 0.75 * 0.75).abs() < 1e-12);
    }
}
