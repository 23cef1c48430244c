use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{split_indices, LabelSet, ProbeCurve, ProbeTask, SplitSpec};
use crate::error::{Error, Result};

/// Full-batch gradient descent on mean softmax cross-entropy, from zero
/// weights. Training stops after `max_epochs` updates, or once the loss has
/// dropped by less than `tol` over the last `patience` epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticSettings {
    pub lr: f64,
    pub max_epochs: usize,
    pub tol: f64,
    pub patience: usize,
}

impl Default for LogisticSettings {
    fn default() -> Self {
        LogisticSettings {
            lr: 1e-4,
            max_epochs: 2000,
            tol: 1e-6,
            patience: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    /// `k x n_classes`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub epochs_run: usize,
    pub final_loss: f64,
}

fn logits(x: &DMatrix<f64>, weights: &DMatrix<f64>, bias: &DVector<f64>) -> DMatrix<f64> {
    let mut z = x * weights;
    for mut row in z.row_iter_mut() {
        row += bias.transpose();
    }
    z
}

impl LogisticModel {
    pub fn train(
        x: &DMatrix<f64>,
        labels: &[usize],
        n_classes: usize,
        settings: &LogisticSettings,
    ) -> Result<Self> {
        let (n, k) = x.shape();
        if n == 0 {
            return Err(Error::EmptySplit("no training rows".into()));
        }
        if labels.len() != n {
            return Err(Error::Shape(format!("{n} rows vs {} labels", labels.len())));
        }
        if let Some(bad) = labels.iter().find(|&&c| c >= n_classes) {
            return Err(Error::Index(format!("label {bad} >= {n_classes} classes")));
        }

        let mut weights = DMatrix::zeros(k, n_classes);
        let mut bias = DVector::zeros(n_classes);
        let mut history: Vec<f64> = Vec::with_capacity(settings.max_epochs + 1);
        let mut epochs_run = 0;
        let inv_n = 1.0 / n as f64;

        loop {
            let mut grad = logits(x, &weights, &bias);
            let mut loss = 0.0;
            for (i, &label) in labels.iter().enumerate() {
                let mut row = grad.row_mut(i);
                let max = row.max();
                row.apply(|v| *v = (*v - max).exp());
                let total = row.sum();
                row /= total;
                loss -= row[label].max(f64::MIN_POSITIVE).ln();
                row[label] -= 1.0;
                row *= inv_n;
            }
            loss *= inv_n;
            history.push(loss);

            let plateaued = history.len() > settings.patience
                && history[history.len() - 1 - settings.patience] - loss < settings.tol;
            if epochs_run == settings.max_epochs || plateaued {
                return Ok(LogisticModel {
                    weights,
                    bias,
                    epochs_run,
                    final_loss: loss,
                });
            }

            weights -= (x.transpose() * &grad) * settings.lr;
            bias -= grad.row_sum().transpose() * settings.lr;
            epochs_run += 1;
        }
    }

    /// Arg-max class per row; ties go to the lower class index.
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        let z = logits(x, &self.weights, &self.bias);
        z.row_iter()
            .map(|row| {
                let mut best = 0;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    pub fn accuracy(&self, x: &DMatrix<f64>, labels: &[usize]) -> f64 {
        let hits = self
            .predict(x)
            .iter()
            .zip(labels)
            .filter(|(p, y)| p == y)
            .count();
        hits as f64 / labels.len() as f64
    }
}

/// Held-out word-identity accuracy from the leading `k` columns, per `k`.
pub fn word_id_curve(
    x: &DMatrix<f64>,
    labels: &LabelSet,
    split: SplitSpec,
    settings: &LogisticSettings,
    k_grid: &[usize],
) -> Result<ProbeCurve> {
    let (n, p) = x.shape();
    if labels.word_class.len() != n {
        return Err(Error::Shape(format!(
            "{n} rows vs {} labels",
            labels.word_class.len()
        )));
    }
    if k_grid.is_empty() || k_grid.contains(&0) || k_grid.iter().any(|&k| k > p) {
        return Err(Error::Shape(format!("k grid {k_grid:?} on {p} columns")));
    }
    let (train, test) = split_indices(n, split)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptySplit(format!(
            "{} train / {} test rows",
            train.len(),
            test.len()
        )));
    }
    let y_train: Vec<usize> = train.iter().map(|&i| labels.word_class[i]).collect();
    let y_test: Vec<usize> = test.iter().map(|&i| labels.word_class[i]).collect();
    let mut present = vec![false; labels.n_classes()];
    for &c in &y_train {
        present[c] = true;
    }
    let absent = present.iter().filter(|p| !**p).count();
    if absent > 0 {
        log::warn!("{absent} word classes have no training rows");
    }

    let x_train = x.select_rows(&train);
    let x_test = x.select_rows(&test);
    let mut perf = Vec::with_capacity(k_grid.len());
    let mut epochs = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let train_k = x_train.columns(0, k).into_owned();
        let model = LogisticModel::train(&train_k, &y_train, labels.n_classes(), settings)?;
        perf.push(model.accuracy(&x_test.columns(0, k).into_owned(), &y_test));
        epochs.push(model.epochs_run);
    }

    let mut curve = ProbeCurve::new(ProbeTask::WordAccuracy, k_grid.to_vec(), perf);
    curve.split_seed = split.seed();
    curve.lr = Some(settings.lr);
    curve.epochs_run = Some(epochs);
    curve.absent_classes = Some(absent);
    Ok(curve)
}
