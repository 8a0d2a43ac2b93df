//! Evaluation metrics and class weights.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::data::Targets;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Precision,
    Recall,
    F1,
    Accuracy,
    CategoricalAccuracy,
    Mse,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Precision => "precision",
            MetricKind::Recall => "recall",
            MetricKind::F1 => "f1",
            MetricKind::Accuracy => "accuracy",
            MetricKind::CategoricalAccuracy => "categorical_accuracy",
            MetricKind::Mse => "mse",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            MetricKind::Precision,
            MetricKind::Recall,
            MetricKind::F1,
            MetricKind::Accuracy,
            MetricKind::CategoricalAccuracy,
            MetricKind::Mse,
        ]
        .into_iter()
        .find(|m| m.name() == name)
    }
}

/// Metric values for one prediction run, in a fixed reporting order.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSet(pub Vec<(MetricKind, f64)>);

impl MetricSet {
    pub fn get(&self, kind: MetricKind) -> Option<f64> {
        self.0.iter().find(|(k, _)| *k == kind).map(|&(_, v)| v)
    }
}

/// Validation metric the search maximizes: F1 for binary targets,
/// categorical accuracy for multiclass, negated MSE for regression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMetric {
    F1,
    CategoricalAccuracy,
    NegMse,
}

impl FitnessMetric {
    pub fn for_targets(targets: &Targets) -> Self {
        match targets {
            Targets::Binary(_) => FitnessMetric::F1,
            Targets::Multiclass { .. } => FitnessMetric::CategoricalAccuracy,
            Targets::Regression(_) => FitnessMetric::NegMse,
        }
    }

    pub fn of(self, metrics: &MetricSet) -> f64 {
        match self {
            FitnessMetric::F1 => metrics.get(MetricKind::F1).unwrap_or(f64::NEG_INFINITY),
            FitnessMetric::CategoricalAccuracy => metrics
                .get(MetricKind::CategoricalAccuracy)
                .unwrap_or(f64::NEG_INFINITY),
            FitnessMetric::NegMse => metrics
                .get(MetricKind::Mse)
                .map_or(f64::NEG_INFINITY, |m| -m),
        }
    }
}

/// Computes the task's metric set from model outputs. Binary probabilities
/// are thresholded at 0.5; an empty positive class defines precision and
/// recall (hence F1) as 0.
pub fn metrics(predictions: ArrayView2<'_, f64>, targets: &Targets) -> MetricSet {
    assert_eq!(predictions.nrows(), targets.len(), "length mismatch");
    match targets {
        Targets::Binary(y) => {
            let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
            for (row, &truth) in predictions.outer_iter().zip(y) {
                let predicted = row[0] >= 0.5;
                match (predicted, truth == 1.0) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
            let ratio = |num: usize, den: usize| {
                if den == 0 {
                    0.0
                } else {
                    num as f64 / den as f64
                }
            };
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            let accuracy = (tp + tn) as f64 / y.len() as f64;
            MetricSet(vec![
                (MetricKind::Precision, precision),
                (MetricKind::Recall, recall),
                (MetricKind::F1, f1),
                (MetricKind::Accuracy, accuracy),
            ])
        }
        Targets::Multiclass { labels, .. } => {
            let hits = predictions
                .outer_iter()
                .zip(labels)
                .filter(|(row, &label)| argmax(row.iter().copied()) == label)
                .count();
            MetricSet(vec![(
                MetricKind::CategoricalAccuracy,
                hits as f64 / labels.len() as f64,
            )])
        }
        Targets::Regression(y) => {
            let mse = predictions
                .column(0)
                .iter()
                .zip(y)
                .map(|(p, t)| (p - t).powi(2))
                .sum::<f64>()
                / y.len() as f64;
            MetricSet(vec![(MetricKind::Mse, mse)])
        }
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("class {0} has no samples")]
pub struct MissingClass(pub usize);

/// Balanced class weights: `w_c = n_total / (n_classes * n_c)`.
pub fn balanced_class_weights(targets: &Targets) -> Result<Vec<f64>, MissingClass> {
    let counts: Vec<usize> = match targets {
        Targets::Binary(y) => {
            let ones = y.iter().filter(|&&v| v == 1.0).count();
            vec![y.len() - ones, ones]
        }
        Targets::Multiclass { classes, labels } => {
            let mut counts = vec![0usize; *classes];
            for &l in labels {
                counts[l] += 1;
            }
            counts
        }
        Targets::Regression(_) => return Ok(Vec::new()),
    };
    let total = targets.len() as f64;
    let k = counts.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            if n == 0 {
                Err(MissingClass(c))
            } else {
                Ok(total / (k * n as f64))
            }
        })
        .collect()
}
