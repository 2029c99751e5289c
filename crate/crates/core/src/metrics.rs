use serde::{Deserialize, Serialize};

use crate::dataset::Polarity;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[truth][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    /// Builds the report from parallel label/prediction ids. Precision,
    /// recall and F1 are 0 wherever their denominator is 0.
    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Self {
        assert_eq!(truth.len(), predicted.len());
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let total = truth.len();
        let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
        let per_class: Vec<ClassMetrics> = (0..classes)
            .map(|c| {
                let tp = confusion[c][c];
                let support: usize = confusion[c].iter().sum();
                let predicted: usize = confusion.iter().map(|row| row[c]).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
                let label = Polarity::from_id(c).map_or_else(|| c.to_string(), |p| p.name().to_string());
                ClassMetrics { label, precision, recall, f1, support }
            })
            .collect();
        let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / classes as f64;
        EvalReport { accuracy: ratio(correct, total), macro_f1, per_class, confusion }
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    /// Accuracy recomputed from the confusion matrix.
    pub fn confusion_accuracy(&self) -> f64 {
        let trace: usize = (0..self.confusion.len()).map(|c| self.confusion[c][c]).sum();
        ratio(trace, self.total())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let truth = [0, 1, 2, 2, 1, 0];
        let r = EvalReport::from_predictions(&truth, &truth, 3);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.total(), 6);
    }

    #[test]
    fn constant_predictions_on_balanced_set() {
        let truth = [0, 0, 1, 1, 2, 2];
        let r = EvalReport::from_predictions(&truth, &[2; 6], 3);
        assert!((r.accuracy - 1.0 / 3.0).abs() < 1e-15);
        // class 2: precision 1/3, recall 1, F1 = 1/2; others 0
        assert!((r.macro_f1 - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.per_class[2].precision, 1.0 / 3.0);
        assert_eq!(r.per_class[0].f1, 0.0);
    }

    #[test]
    fn confusion_consistency() {
        let truth = [0, 1, 2, 2, 1, 0, 1];
        let pred = [0, 2, 2, 1, 1, 1, 1];
        let r = EvalReport::from_predictions(&truth, &pred, 3);
        assert_eq!(r.total(), 7);
        for (c, m) in r.per_class.iter().enumerate() {
            assert_eq!(r.confusion[c].iter().sum::<usize>(), m.support);
        }
        assert!((r.accuracy - r.confusion_accuracy()).abs() < 1e-12);
        assert_eq!(r.per_class[1].label, "neutral");
    }

    #[test]
    fn absent_class_scores_zero() {
        let r = EvalReport::from_predictions(&[0, 0], &[0, 0], 3);
        assert_eq!(r.per_class[1].f1, 0.0);
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }
}
