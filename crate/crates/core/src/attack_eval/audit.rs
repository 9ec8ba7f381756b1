//! How often a filtered model's predicted label differs from the naive one's.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::records::csv_error;
use crate::data::{class_remap, Dataset};
use crate::error::{Error, Result};
use crate::model::{argmax, MlpClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelChangeReport {
    /// Fraction of all test inputs whose label changed.
    pub all: f64,
    /// Fraction among inputs of deleted classes.
    pub unlearned: f64,
    /// Fraction among retained-class inputs the naive model gets right.
    pub correct_remaining: f64,
    pub num_all: usize,
    pub num_unlearned: usize,
    pub num_correct_remaining: usize,
    /// Accuracy of each model on retained-class inputs.
    pub naive_accuracy: f64,
    pub other_accuracy: f64,
}

fn fraction(changed: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        changed as f64 / total as f64
    }
}

/// `test` carries original labels; `deleted` are original class indices and
/// both models output the retained classes in ascending original order.
pub fn label_change_report(
    naive: &MlpClassifier,
    other: &MlpClassifier,
    test: &Dataset,
    deleted: &[usize],
) -> Result<LabelChangeReport> {
    if naive.num_outputs() != other.num_outputs() || naive.input_dim() != other.input_dim() {
        return Err(Error::shape(format!(
            "label audit models differ: {:?} vs {:?}",
            naive.layer_dims(),
            other.layer_dims()
        )));
    }
    if naive.num_outputs() + deleted.len() != test.num_classes {
        return Err(Error::shape(format!(
            "models have {} outputs but the test set has {} classes and {} are deleted",
            naive.num_outputs(),
            test.num_classes,
            deleted.len()
        )));
    }
    if test.is_empty() {
        return Err(Error::EmptyInput("label audit test set"));
    }
    let remap = class_remap(test.num_classes, deleted);
    let naive_pred: Vec<usize> = naive.predict_logits(&test.inputs)?.iter().map(|l| argmax(l)).collect();
    let other_pred: Vec<usize> = other.predict_logits(&test.inputs)?.iter().map(|l| argmax(l)).collect();

    let (mut changed_all, mut changed_unlearned, mut n_unlearned) = (0, 0, 0);
    let (mut changed_correct, mut n_correct) = (0, 0);
    let (mut n_retained, mut naive_right, mut other_right) = (0, 0, 0);
    for ((&label, &a), &b) in test.labels.iter().zip(&naive_pred).zip(&other_pred) {
        let changed = usize::from(a != b);
        changed_all += changed;
        match remap[label] {
            None => {
                n_unlearned += 1;
                changed_unlearned += changed;
            }
            Some(target) => {
                n_retained += 1;
                other_right += usize::from(b == target);
                if a == target {
                    naive_right += 1;
                    n_correct += 1;
                    changed_correct += changed;
                }
            }
        }
    }
    Ok(LabelChangeReport {
        all: fraction(changed_all, test.len()),
        unlearned: fraction(changed_unlearned, n_unlearned),
        correct_remaining: fraction(changed_correct, n_correct),
        num_all: test.len(),
        num_unlearned: n_unlearned,
        num_correct_remaining: n_correct,
        naive_accuracy: fraction(naive_right, n_retained),
        other_accuracy: fraction(other_right, n_retained),
    })
}

impl LabelChangeReport {
    /// One row per compared strategy, changes in percent.
    pub fn write_csv<W: Write>(rows: &[(String, LabelChangeReport)], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "method",
            "all_pct",
            "unlearned_pct",
            "correct_remaining_pct",
            "num_all",
            "num_unlearned",
            "num_correct_remaining",
            "naive_accuracy",
            "other_accuracy",
        ])
        .map_err(csv_error)?;
        for (name, r) in rows {
            w.write_record([
                name.clone(),
                format!("{:.1}", 100.0 * r.all),
                format!("{:.1}", 100.0 * r.unlearned),
                format!("{:.1}", 100.0 * r.correct_remaining),
                r.num_all.to_string(),
                r.num_unlearned.to_string(),
                r.num_correct_remaining.to_string(),
                format!("{:.4}", r.naive_accuracy),
                format!("{:.4}", r.other_accuracy),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}
