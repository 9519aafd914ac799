use serde::{Deserialize, Serialize};

use crate::labels::Label;

/// Bipolar is the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

impl ConfusionMatrix {
    pub fn from_predictions(truth: &[Label], predicted: &[Label]) -> Self {
        let mut c = ConfusionMatrix::default();
        for (t, p) in truth.iter().zip(predicted) {
            match (t, p) {
                (Label::Bipolar, Label::Bipolar) => c.tp += 1,
                (Label::Bipolar, Label::Normal) => c.fn_ += 1,
                (Label::Normal, Label::Normal) => c.tn += 1,
                (Label::Normal, Label::Bipolar) => c.fp += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.tn + self.fp
    }

    pub fn add(&self, o: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp + o.tp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
        }
    }
}

/// `None` marks a metric whose denominator is zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(c: &ConfusionMatrix) -> Metrics {
    let sensitivity = ratio(c.tp, c.tp + c.fn_);
    let precision = ratio(c.tp, c.tp + c.fp);
    let f1 = match (precision, sensitivity) {
        (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
        _ => None,
    };
    Metrics {
        accuracy: ratio(c.tp + c.tn, c.total()),
        sensitivity,
        specificity: ratio(c.tn, c.tn + c.fp),
        precision,
        f1,
    }
}

/// Per-metric mean over the folds where the metric is defined.
pub fn mean_metrics(all: &[Metrics]) -> Metrics {
    let avg = |get: fn(&Metrics) -> Option<f64>| {
        let v: Vec<f64> = all.iter().filter_map(get).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Metrics {
        accuracy: avg(|m| m.accuracy),
        sensitivity: avg(|m| m.sensitivity),
        specificity: avg(|m| m.specificity),
        precision: avg(|m| m.precision),
        f1: avg(|m| m.f1),
    }
}

pub const UNDEFINED: &str = "n/a";

/// Percentage with one decimal, or the undefined marker.
pub fn format_percent(m: Option<f64>) -> String {
    m.map_or_else(|| UNDEFINED.to_string(), |v| format!("{:.1}%", v * 100.0))
}

/// Fraction with four decimals, or the undefined marker.
pub fn format_fraction(m: Option<f64>) -> String {
    m.map_or_else(|| UNDEFINED.to_string(), |v| format!("{v:.4}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Option<f64>, b: f64) -> bool {
        a.is_some_and(|a| (a - b).abs() < 1e-3)
    }

    #[test]
    fn hand_computed_example() {
        let m = compute_metrics(&ConfusionMatrix { tp: 3, fn_: 2, tn: 8, fp: 2 });
        assert!(close(m.sensitivity, 0.6));
        assert!(close(m.specificity, 0.8));
        assert!(close(m.precision, 0.6));
        assert!(close(m.accuracy, 0.733));
        assert!(close(m.f1, 0.6));
    }

    #[test]
    fn degenerate_matrices() {
        let perfect = compute_metrics(&ConfusionMatrix { tp: 4, fn_: 0, tn: 5, fp: 0 });
        for v in [perfect.accuracy, perfect.sensitivity, perfect.specificity, perfect.precision, perfect.f1] {
            assert_eq!(v, Some(1.0));
        }
        let negative = compute_metrics(&ConfusionMatrix { tp: 0, fn_: 3, tn: 6, fp: 0 });
        assert_eq!(negative.sensitivity, Some(0.0));
        assert_eq!(negative.specificity, Some(1.0));
        assert_eq!(negative.precision, None);
        assert_eq!(negative.f1, None);
        assert_eq!(format_percent(negative.precision), "n/a");
        assert_eq!(compute_metrics(&ConfusionMatrix::default()), Metrics::default());
    }

    #[test]
    fn means_skip_undefined() {
        let a = Metrics { accuracy: Some(0.5), precision: None, ..Metrics::default() };
        let b = Metrics { accuracy: Some(1.0), precision: Some(0.2), ..Metrics::default() };
        let m = mean_metrics(&[a, b]);
        assert_eq!(m.accuracy, Some(0.75));
        assert_eq!(m.precision, Some(0.2));
        assert_eq!(m.f1, None);
    }
}
