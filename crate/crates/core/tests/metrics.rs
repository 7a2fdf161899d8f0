mod support;

use resflu_core::data::{Attribute, Gender, Pose, View};
use resflu_core::eval::{confusion_matrix, metrics_from_cm, EvalError};
use support::oracles::{cohort_fixture, metrics_oracle};

#[test]
fn metric_oracles() {
    metrics_oracle();
}

#[test]
fn cohorts_partition_the_baseline() {
    let report =
        cohort_fixture(6, |g, p, v| 2 + (g == Gender::Female) as usize + (p == Pose::Walk) as usize + v as usize);
    let total = report.baseline.samples;
    assert_eq!(total, 72);
    for attribute in Attribute::ALL {
        let rows: Vec<_> = report.cohorts.iter().filter(|c| c.attribute == attribute).collect();
        assert_eq!(rows.len(), attribute.values().len());
        assert_eq!(rows.iter().map(|c| c.samples).sum::<u64>(), total);
        let mut sum = vec![vec![0u64; 3]; 3];
        for row in rows {
            let cm = row.confusion.as_ref().unwrap();
            for (r, s) in cm.counts.iter().zip(&mut sum) {
                for (a, b) in r.iter().zip(s) {
                    *b += a;
                }
            }
        }
        assert_eq!(sum, report.baseline_confusion.counts, "{attribute}");
    }
    let center = report.reliability(Some(resflu_core::data::AttributeValue::View(View::Center))).unwrap();
    let left = report.reliability(Some(resflu_core::data::AttributeValue::View(View::Left))).unwrap();
    assert!(center > left);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(matches!(confusion_matrix(&[0, 3], &[0, 1], 3), Err(EvalError::Domain { label: 3, .. })));
    assert!(matches!(confusion_matrix(&[0], &[0, 1], 3), Err(EvalError::Length { .. })));
    assert!(matches!(confusion_matrix(&[], &[], 0), Err(EvalError::NoClasses)));
    assert!(matches!(metrics_from_cm(&confusion_matrix(&[], &[], 2).unwrap()), Err(EvalError::Empty)));
}
