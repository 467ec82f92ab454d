use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Which denominator the true-negative rate uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TnrForm {
    /// Specificity, `tn / (tn + fp)`.
    #[default]
    Standard,
    /// `tn / (tn + fn)`, kept for comparison with reports that use it.
    Literal,
}

/// Metrics for one evaluation. `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: Option<f64>,
    pub prec: Option<f64>,
    pub recall: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub bacc: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
}

impl MetricsReport {
    pub const NAMES: [&'static str; 8] = ["acc", "prec", "recall", "tpr", "tnr", "bacc", "f1", "auc"];

    pub fn values(&self) -> [Option<f64>; 8] {
        [self.acc, self.prec, self.recall, self.tpr, self.tnr, self.bacc, self.f1, self.auc]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES
            .iter()
            .position(|n| *n == name)
            .and_then(|i| self.values()[i])
    }
}

fn is_positive(label: f64) -> bool {
    label >= 0.5
}

/// Tallies predictions against 0/1 labels; a score at or above `threshold`
/// counts as a positive prediction.
pub fn confusion(scores: &[f64], labels: &[f64], threshold: f64) -> Result<ConfusionCounts, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, is_positive(y)) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Confusion-based metrics; `auc` is left empty.
pub fn classification_metrics(c: &ConfusionCounts, tnr_form: TnrForm) -> MetricsReport {
    let acc = ratio(c.tp + c.tn, c.total());
    let prec = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let tnr = match tnr_form {
        TnrForm::Standard => ratio(c.tn, c.tn + c.fp),
        TnrForm::Literal => ratio(c.tn, c.tn + c.fn_),
    };
    let bacc = recall.zip(tnr).map(|(t, n)| (t + n) / 2.0);
    let f1 = prec
        .zip(recall)
        .and_then(|(p, r)| (p + r > 0.0).then(|| 2.0 * p * r / (p + r)));
    MetricsReport {
        acc,
        prec,
        recall,
        tpr: recall,
        tnr,
        bacc,
        f1,
        auc: None,
    }
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from average ranks in `O(n log n)`.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::NonFiniteScore);
    }
    let n_pos = labels.iter().filter(|&&y| is_positive(y)).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum over positives of (# negatives below + ½ # negatives tied).
    let mut concordant = 0.0;
    let mut negatives_below = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let group = &order[i..j];
        let pos = group.iter().filter(|&&k| is_positive(labels[k])).count();
        let neg = group.len() - pos;
        concordant += pos as f64 * (negatives_below as f64 + 0.5 * neg as f64);
        negatives_below += neg;
        i = j;
    }
    Ok(concordant / (n_pos as f64 * n_neg as f64))
}

/// Confusion metrics at a 0.5 threshold plus AUC (left empty when only one
/// class is present).
pub fn evaluate(scores: &[f64], labels: &[f64], tnr_form: TnrForm) -> Result<MetricsReport, EvalError> {
    let counts = confusion(scores, labels, 0.5)?;
    let mut report = classification_metrics(&counts, tnr_form);
    report.auc = match roc_auc(scores, labels) {
        Ok(a) => Some(a),
        Err(EvalError::DegenerateLabels) => None,
        Err(e) => return Err(e),
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let c = confusion(&[0.9, 0.1], &[1.0, 0.0], 0.5).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (1, 1, 0, 0));
        let c = confusion(&[0.5], &[0.0], 0.5).unwrap();
        assert_eq!(c.fp, 1);
        assert!(matches!(
            confusion(&[0.1], &[], 0.5),
            Err(EvalError::LengthMismatch { scores: 1, labels: 0 })
        ));
    }

    #[test]
    fn hand_computed_metrics() {
        let c = ConfusionCounts { tp: 3, tn: 2, fp: 1, fn_: 2 };
        let m = classification_metrics(&c, TnrForm::Standard);
        assert_eq!(m.acc, Some(0.625));
        assert_eq!(m.prec, Some(0.75));
        assert_eq!(m.recall, Some(0.6));
        assert!((m.tnr.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.bacc.unwrap() - 0.633_333_333_333_333_3).abs() < 1e-12);
        assert!((m.f1.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.auc, None);

        let literal = classification_metrics(&c, TnrForm::Literal);
        assert_eq!(literal.tnr, Some(0.5));
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = classification_metrics(&ConfusionCounts { tp: 4, tn: 6, fp: 0, fn_: 0 }, TnrForm::Standard);
        for v in m.values().iter().take(7) {
            assert_eq!(*v, Some(1.0));
        }
        let none_predicted = classification_metrics(&ConfusionCounts { tp: 0, tn: 5, fp: 0, fn_: 3 }, TnrForm::Standard);
        assert_eq!(none_predicted.prec, None);
        assert_eq!(none_predicted.recall, Some(0.0));
        assert_eq!(none_predicted.f1, None);
        let empty = classification_metrics(&ConfusionCounts::default(), TnrForm::Standard);
        assert!(empty.values().iter().all(Option::is_none));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[1.0, 1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 6], &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.6, 0.4, 0.2], &[1.0, 0.0, 1.0, 0.0]).unwrap(), 0.75);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1.0, 1.0]), Err(EvalError::DegenerateLabels)));
    }

    #[test]
    fn evaluate_tolerates_single_class() {
        let m = evaluate(&[0.7, 0.8], &[1.0, 1.0], TnrForm::Standard).unwrap();
        assert_eq!(m.auc, None);
        assert_eq!(m.get("recall"), Some(1.0));
        assert_eq!(m.get("tnr"), None);
    }
}
