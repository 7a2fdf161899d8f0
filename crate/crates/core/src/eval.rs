//! Confusion matrices, accuracy / precision / sensitivity / specificity and
//! cohort-partitioned evaluation.
//!
//! With two classes the metrics are the plain binary ones, class 1 being the
//! positive class. With three or more classes precision is micro-averaged
//! (and therefore equals accuracy), while sensitivity and specificity are
//! macro one-vs-rest means over the classes that occur.

use serde::{Deserialize, Serialize};

use crate::data::{Attribute, AttributeValue, Attributes};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("label {label} outside {n_classes} classes")]
    Domain { label: usize, n_classes: usize },
    #[error("{predictions} predictions but {truths} ground-truth labels")]
    Length { predictions: usize, truths: usize },
    #[error("metrics are undefined on an empty confusion matrix")]
    Empty,
    #[error("need at least one class")]
    NoClasses,
}

/// Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self { n_classes, counts: vec![vec![0; n_classes]; n_classes] }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|i| self.counts[i][i]).sum()
    }

    /// Samples whose ground truth is `class`.
    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// Samples predicted as `class`.
    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    /// One-vs-rest counts `(tp, tn, fp, fn)` for `class`.
    pub fn one_vs_rest(&self, class: usize) -> (u64, u64, u64, u64) {
        let tp = self.counts[class][class];
        let fp = self.predicted(class) - tp;
        let fn_ = self.support(class) - tp;
        let tn = self.total() - tp - fp - fn_;
        (tp, tn, fp, fn_)
    }
}

pub fn confusion_matrix(
    predictions: &[usize],
    truths: &[usize],
    n_classes: usize,
) -> Result<ConfusionMatrix, EvalError> {
    if n_classes == 0 {
        return Err(EvalError::NoClasses);
    }
    if predictions.len() != truths.len() {
        return Err(EvalError::Length { predictions: predictions.len(), truths: truths.len() });
    }
    let mut cm = ConfusionMatrix::new(n_classes);
    for (&p, &t) in predictions.iter().zip(truths) {
        if let Some(&label) = [p, t].iter().find(|&&l| l >= n_classes) {
            return Err(EvalError::Domain { label, n_classes });
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

/// Metric values plus notes on any that needed a convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub samples: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// `num / den`, or 1.0 when there was no opportunity for the error the metric
/// counts (zero denominator). The convention is recorded in `flags`.
fn ratio(num: u64, den: u64, name: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(format!("{name} has a zero denominator; reported as 1"));
        1.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics_from_cm(cm: &ConfusionMatrix) -> Result<MetricsReport, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let mut flags = Vec::new();
    let accuracy = cm.trace() as f64 / total as f64;

    if cm.n_classes == 2 {
        let (tp, tn, fp, fn_) = cm.one_vs_rest(1);
        let precision = ratio(tp, tp + fp, "precision", &mut flags);
        let sensitivity = ratio(tp, tp + fn_, "sensitivity", &mut flags);
        let specificity = ratio(tn, tn + fp, "specificity", &mut flags);
        return Ok(MetricsReport { accuracy, precision, sensitivity, specificity, samples: total, flags });
    }

    let (mut tp_sum, mut predicted_sum) = (0u64, 0u64);
    let (mut sens, mut spec) = (Vec::new(), Vec::new());
    for c in 0..cm.n_classes {
        let (tp, tn, fp, fn_) = cm.one_vs_rest(c);
        tp_sum += tp;
        predicted_sum += tp + fp;
        if tp + fn_ == 0 {
            log::warn!("class {c} has no samples; left out of the sensitivity and specificity means");
            flags.push(format!("class {c} has no samples and is excluded from macro means"));
            continue;
        }
        sens.push(tp as f64 / (tp + fn_) as f64);
        if tn + fp > 0 {
            spec.push(tn as f64 / (tn + fp) as f64);
        }
    }
    let precision = tp_sum as f64 / predicted_sum as f64;
    let sensitivity = sens.iter().sum::<f64>() / sens.len() as f64;
    let specificity = if spec.is_empty() {
        flags.push("specificity has no negative samples; reported as 1".into());
        1.0
    } else {
        spec.iter().sum::<f64>() / spec.len() as f64
    };
    Ok(MetricsReport { accuracy, precision, sensitivity, specificity, samples: total, flags })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortEntry {
    pub attribute: Attribute,
    pub value: String,
    pub samples: u64,
    /// `None` when the cohort has no samples.
    pub metrics: Option<MetricsReport>,
    pub confusion: Option<ConfusionMatrix>,
}

impl CohortEntry {
    pub fn is_absent(&self) -> bool {
        self.metrics.is_none()
    }

    pub fn attribute_value(&self) -> AttributeValue {
        AttributeValue::parse(self.attribute, &self.value).expect("entries are built from valid values")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub baseline: MetricsReport,
    pub baseline_confusion: ConfusionMatrix,
    pub cohorts: Vec<CohortEntry>,
}

impl CohortReport {
    pub fn get(&self, value: AttributeValue) -> Option<&CohortEntry> {
        self.cohorts.iter().find(|c| c.attribute_value() == value)
    }

    /// Rank-1 accuracy of a cohort, or of the whole set for `None`.
    pub fn reliability(&self, value: Option<AttributeValue>) -> Option<f64> {
        match value {
            None => Some(self.baseline.accuracy),
            Some(v) => self.get(v)?.metrics.as_ref().map(|m| m.accuracy),
        }
    }
}

/// Baseline metrics over every sample and one entry per value of each listed
/// attribute, in attribute then declaration order.
pub fn cohort_eval(
    predictions: &[usize],
    truths: &[usize],
    attributes: &[Attributes],
    n_classes: usize,
    cohort_attributes: &[Attribute],
) -> Result<CohortReport, EvalError> {
    if attributes.len() != truths.len() {
        return Err(EvalError::Length { predictions: attributes.len(), truths: truths.len() });
    }
    let baseline_confusion = confusion_matrix(predictions, truths, n_classes)?;
    let baseline = metrics_from_cm(&baseline_confusion)?;
    let mut cohorts = Vec::new();
    for attribute in cohort_attributes {
        for value in attribute.values() {
            let (mut p, mut t) = (Vec::new(), Vec::new());
            for i in (0..truths.len()).filter(|&i| value.matches(&attributes[i])) {
                p.push(predictions[i]);
                t.push(truths[i]);
            }
            let (metrics, confusion) = if t.is_empty() {
                (None, None)
            } else {
                let cm = confusion_matrix(&p, &t, n_classes)?;
                (Some(metrics_from_cm(&cm)?), Some(cm))
            };
            cohorts.push(CohortEntry {
                attribute: *attribute,
                value: value.value_str().to_string(),
                samples: t.len() as u64,
                metrics,
                confusion,
            });
        }
    }
    Ok(CohortReport { baseline, baseline_confusion, cohorts })
}
