use nalgebra::{DMatrix, DVector};

use super::{split_indices, ProbeCurve, ProbeTask, SplitSpec};
use crate::error::{Error, Result};

/// Ridge regression on standardized features with an unpenalized intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeModel {
    pub lambda: f64,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub intercept: f64,
    /// Weights on the standardized features.
    pub coef: Vec<f64>,
}

impl RidgeModel {
    /// Predicts from the first `coef.len()` columns of `x`.
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        x.row_iter()
            .map(|row| {
                self.intercept
                    + self
                        .coef
                        .iter()
                        .enumerate()
                        .map(|(j, w)| w * (row[j] - self.means[j]) / self.scales[j])
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Centered, scaled training design shared by every prefix `k`.
struct Standardized {
    means: Vec<f64>,
    scales: Vec<f64>,
    y_mean: f64,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
}

impl Standardized {
    fn new(x: &DMatrix<f64>, rows: &[usize], y: &[f64], standardize: bool) -> Result<Self> {
        let n = rows.len() as f64;
        let p = x.ncols();
        let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        if ys.windows(2).all(|w| w[0] == w[1]) {
            return Err(Error::ConstantTarget("training target is constant".into()));
        }
        let y_mean = ys.iter().sum::<f64>() / n;

        let mut means = vec![0.0; p];
        let mut scales = vec![1.0; p];
        let mut design = DMatrix::zeros(rows.len(), p);
        for j in 0..p {
            let col: Vec<f64> = rows.iter().map(|&i| x[(i, j)]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            means[j] = mean;
            if standardize && var > 0.0 {
                scales[j] = var.sqrt();
            }
            for (r, v) in col.iter().enumerate() {
                design[(r, j)] = (v - mean) / scales[j];
            }
        }
        let yc = DVector::from_iterator(ys.len(), ys.iter().map(|v| v - y_mean));
        Ok(Standardized {
            gram: design.transpose() * &design,
            xty: design.transpose() * yc,
            means,
            scales,
            y_mean,
        })
    }

    fn solve(&self, k: usize, lambda: f64) -> Result<RidgeModel> {
        let mut system = self.gram.view((0, 0), (k, k)).into_owned();
        for i in 0..k {
            system[(i, i)] += lambda;
        }
        let chol = system.cholesky().ok_or(Error::SingularSystem { k })?;
        let w = chol.solve(&self.xty.rows(0, k).into_owned());
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem { k });
        }
        Ok(RidgeModel {
            lambda,
            means: self.means[..k].to_vec(),
            scales: self.scales[..k].to_vec(),
            intercept: self.y_mean,
            coef: w.iter().copied().collect(),
        })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("ridge lambda {lambda} must be >= 0")));
    }
    Ok(())
}

/// Closed-form ridge fit on all columns of `x`.
pub fn fit_ridge(x: &DMatrix<f64>, y: &[f64], lambda: f64, standardize: bool) -> Result<RidgeModel> {
    check_lambda(lambda)?;
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows vs {} targets", x.nrows(), y.len())));
    }
    let rows: Vec<usize> = (0..y.len()).collect();
    Standardized::new(x, &rows, y, standardize)?.solve(x.ncols(), lambda)
}

pub fn r_squared(y: &[f64], pred: &[f64]) -> Result<f64> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ConstantTarget("evaluation target is constant".into()));
    }
    let ss_res: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Held-out R² of ridge fits on the leading `k` score columns, for each `k`
/// in `k_grid`. Features are standardized with training statistics.
pub fn ridge_curve(
    scores: &DMatrix<f64>,
    targets: &[f64],
    lambda: f64,
    split: SplitSpec,
    k_grid: &[usize],
) -> Result<ProbeCurve> {
    check_lambda(lambda)?;
    let (n, p) = scores.shape();
    if targets.len() != n {
        return Err(Error::Shape(format!("{n} score rows vs {} targets", targets.len())));
    }
    if p == 0 || k_grid.is_empty() {
        return Err(Error::DegenerateInput("no components to probe".into()));
    }
    let max_k = *k_grid.iter().max().unwrap();
    if max_k > p || k_grid.contains(&0) {
        return Err(Error::Shape(format!("k grid up to {max_k} on {p} components")));
    }
    let (train, test) = split_indices(n, split)?;
    if train.len() < max_k + 1 {
        return Err(Error::SplitTooSmall {
            n_train: train.len(),
            k: max_k,
        });
    }

    let system = Standardized::new(scores, &train, targets, true)?;
    let test_x = scores.select_rows(&test);
    let test_y: Vec<f64> = test.iter().map(|&i| targets[i]).collect();

    let mut perf = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let model = system.solve(k, lambda)?;
        perf.push(r_squared(&test_y, &model.predict(&test_x))?);
    }
    let mut curve = ProbeCurve::new(ProbeTask::DurationR2, k_grid.to_vec(), perf);
    curve.split_seed = split.seed();
    curve.lambda = Some(lambda);
    Ok(curve)
}
