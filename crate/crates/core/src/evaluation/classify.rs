use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::sigmoid;

const GRADIENT_TOLERANCE: f64 = 1e-5;
const MAX_ITERATIONS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub macro_f1: f64,
    pub accuracy: f64,
    pub multi_label: bool,
    pub iterations: usize,
    pub converged: bool,
}

/// L2-regularized logistic regression: multinomial for single-label data, one-vs-rest
/// for multi-label data. Features are standardized with training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    /// labels × features
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub l2: f64,
    pub labels: Vec<String>,
    pub multi_label: bool,
    mean: Array1<f64>,
    scale: Array1<f64>,
    iterations: usize,
    converged: bool,
}

impl Classifier {
    /// Full-batch gradient descent from zero weights until the gradient norm drops
    /// below 1e-5 or 2000 iterations elapse.
    pub fn fit(features: ArrayView2<f64>, labels: &[BTreeSet<String>], l2: f64) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} label sets",
                features.nrows(),
                labels.len()
            )));
        }
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::InvalidArgument(format!("l2 must be non-negative, got {l2}")));
        }
        if labels.iter().any(BTreeSet::is_empty) {
            return Err(Error::Unlabeled("every training document needs a label".into()));
        }
        let names: Vec<String> = labels
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if names.len() < 2 {
            return Err(Error::InvalidArgument(
                "classification needs at least two distinct labels".into(),
            ));
        }
        let multi_label = labels.iter().any(|l| l.len() > 1);

        let mean = features.mean_axis(Axis(0)).expect("non-empty");
        let var = features.var_axis(Axis(0), 0.0);
        let scale = var.mapv(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
        let x = (&features - &mean) / &scale;

        let n = x.nrows() as f64;
        let targets = Array2::from_shape_fn((x.nrows(), names.len()), |(i, c)| {
            if labels[i].contains(&names[c]) {
                1.0
            } else {
                0.0
            }
        });
        // Lipschitz bound of the mean loss: curvature of the link (1/2 softmax, 1/4 sigmoid)
        // times the mean squared norm of the augmented inputs.
        let mean_sq = x.rows().into_iter().map(|r| r.dot(&r) + 1.0).sum::<f64>() / n;
        let curvature = if multi_label { 0.25 } else { 0.5 };
        let step = 1.0 / (curvature * mean_sq + l2);

        let mut weights = Array2::<f64>::zeros((names.len(), x.ncols()));
        let mut bias = Array1::<f64>::zeros(names.len());
        let mut iterations = 0;
        let mut converged = false;
        while iterations < MAX_ITERATIONS {
            let probs = link(x.dot(&weights.t()) + &bias, multi_label);
            let residual = probs - &targets;
            let grad_w = residual.t().dot(&x) / n + &weights * l2;
            let grad_b = residual.sum_axis(Axis(0)) / n;
            let norm = (grad_w.iter().map(|g| g * g).sum::<f64>()
                + grad_b.iter().map(|g| g * g).sum::<f64>())
            .sqrt();
            if norm < GRADIENT_TOLERANCE {
                converged = true;
                break;
            }
            weights.scaled_add(-step, &grad_w);
            bias.scaled_add(-step, &grad_b);
            iterations += 1;
        }
        Ok(Self {
            weights,
            bias,
            l2,
            labels: names,
            multi_label,
            mean,
            scale,
            iterations,
            converged,
        })
    }

    pub fn predict(&self, features: ArrayView2<f64>) -> Vec<BTreeSet<String>> {
        let x = (&features - &self.mean) / &self.scale;
        let scores = x.dot(&self.weights.t()) + &self.bias;
        scores
            .rows()
            .into_iter()
            .map(|row| {
                if self.multi_label {
                    row.iter()
                        .zip(&self.labels)
                        .filter(|(&z, _)| sigmoid(z) >= 0.5)
                        .map(|(_, l)| l.clone())
                        .collect()
                } else {
                    let best = row
                        .iter()
                        .enumerate()
                        .fold(0, |best, (i, &z)| if z > row[best] { i } else { best });
                    [self.labels[best].clone()].into()
                }
            })
            .collect()
    }
}

fn link(mut scores: Array2<f64>, multi_label: bool) -> Array2<f64> {
    if multi_label {
        scores.mapv_inplace(sigmoid);
    } else {
        for mut row in scores.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &z| m.max(z));
            row.mapv_inplace(|z| (z - max).exp());
            let total = row.sum();
            row /= total;
        }
    }
    scores
}

/// Macro-averaged F1 over labels seen in either split, and accuracy (exact label-set
/// match for multi-label data).
fn score(predicted: &[BTreeSet<String>], truth: &[BTreeSet<String>]) -> (f64, f64) {
    let classes: BTreeSet<&String> = truth.iter().chain(predicted).flatten().collect();
    let mut f1_sum = 0.0;
    let mut f1_count = 0usize;
    for c in classes {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (p, t) in predicted.iter().zip(truth) {
            match (p.contains(c), t.contains(c)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            f1_sum += 2.0 * tp as f64 / denom as f64;
            f1_count += 1;
        }
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    let macro_f1 = if f1_count == 0 { 0.0 } else { f1_sum / f1_count as f64 };
    (macro_f1, correct as f64 / truth.len().max(1) as f64)
}

pub fn evaluate_classification(
    train_reps: ArrayView2<f64>,
    train_labels: &[BTreeSet<String>],
    test_reps: ArrayView2<f64>,
    test_labels: &[BTreeSet<String>],
    l2: f64,
) -> Result<ClassificationReport> {
    if train_reps.ncols() != test_reps.ncols() {
        return Err(Error::Dimension(format!(
            "train features have {} columns, test {}",
            train_reps.ncols(),
            test_reps.ncols()
        )));
    }
    if test_reps.nrows() != test_labels.len() {
        return Err(Error::Dimension("test rows and labels differ in length".into()));
    }
    if test_reps.nrows() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let clf = Classifier::fit(train_reps, train_labels, l2)?;
    let predicted = clf.predict(test_reps);
    let (macro_f1, accuracy) = score(&predicted, test_labels);
    Ok(ClassificationReport {
        macro_f1,
        accuracy,
        multi_label: clf.multi_label,
        iterations: clf.iterations,
        converged: clf.converged,
    })
}
