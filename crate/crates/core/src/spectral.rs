//! PCA of the neutral, emphasized, concatenated and residual spaces.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::midpoint_center;

/// Default cap on exported spectrum length and probe k grids.
pub const DEFAULT_K_CAP: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SpaceTag {
    /// Neutral representations.
    A,
    /// Emphasized representations.
    B,
    /// `[A | B]`, N x 2d.
    C,
    /// Residuals `B - A`.
    R,
}

impl SpaceTag {
    pub const ALL: [SpaceTag; 4] = [SpaceTag::A, SpaceTag::B, SpaceTag::C, SpaceTag::R];

    pub fn default_centering(self) -> Centering {
        match self {
            SpaceTag::R => Centering::None,
            _ => Centering::Midpoint,
        }
    }

    /// The other selectable centering, reported under `--both-centerings`.
    pub fn alternate_centering(self) -> Centering {
        Centering::Mean
    }
}

impl std::fmt::Display for SpaceTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SpaceTag::A => "A",
            SpaceTag::B => "B",
            SpaceTag::C => "C",
            SpaceTag::R => "R",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SpaceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(SpaceTag::A),
            "B" | "b" => Ok(SpaceTag::B),
            "C" | "c" => Ok(SpaceTag::C),
            "R" | "r" => Ok(SpaceTag::R),
            other => Err(Error::Config(format!("unknown space {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Centering {
    /// Subtract the joint midpoint of the neutral and emphasized means.
    Midpoint,
    /// Subtract the column mean of the assembled space.
    Mean,
    None,
}

impl std::fmt::Display for Centering {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Centering::Midpoint => "midpoint",
            Centering::Mean => "mean",
            Centering::None => "none",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralModel {
    pub space_tag: Option<SpaceTag>,
    pub centering: Centering,
    /// Vector subtracted from every row before the decomposition.
    pub center: DVector<f64>,
    /// Sample-covariance eigenvalues (divisor N-1), non-increasing.
    pub eigenvalues: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    /// `p x dim`, rows are principal directions.
    pub components: DMatrix<f64>,
    /// `N x p` projections of the centered data.
    pub scores: DMatrix<f64>,
}

impl SpectralModel {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn d95(&self) -> usize {
        effective_dim(&self.explained_ratio, 0.95).expect("ratios of a fitted model sum to 1")
    }
}

/// Assembles one representation space from paired `A`/`B` matrices and
/// returns it together with the centering vector that was subtracted.
pub fn assemble_space(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    space: SpaceTag,
    centering: Centering,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let (n, d) = a.shape();
    let concat = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
        let mut c = DMatrix::zeros(n, 2 * d);
        c.columns_mut(0, d).copy_from(x);
        c.columns_mut(d, d).copy_from(y);
        c
    };
    let raw = |space| match space {
        SpaceTag::A => a.clone(),
        SpaceTag::B => b.clone(),
        SpaceTag::C => concat(a, b),
        SpaceTag::R => b - a,
    };

    match centering {
        Centering::None => {
            let x = raw(space);
            let dim = x.ncols();
            Ok((x, DVector::zeros(dim)))
        }
        Centering::Mean => {
            let mut x = raw(space);
            let mean = column_mean(&x);
            subtract_row(&mut x, &mean);
            Ok((x, mean))
        }
        Centering::Midpoint => {
            let mc = midpoint_center(a, b)?;
            let m = &mc.midpoint;
            Ok(match space {
                SpaceTag::A => (mc.a_hat, m.clone()),
                SpaceTag::B => (mc.b_hat, m.clone()),
                SpaceTag::C => {
                    let mut center = DVector::zeros(2 * d);
                    center.rows_mut(0, d).copy_from(m);
                    center.rows_mut(d, d).copy_from(m);
                    (concat(&mc.a_hat, &mc.b_hat), center)
                }
                // The midpoint cancels in B - A.
                SpaceTag::R => (b - a, DVector::zeros(d)),
            })
        }
    }
}

fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    if x.nrows() == 0 {
        return DVector::zeros(x.ncols());
    }
    x.row_mean().transpose()
}

fn subtract_row(x: &mut DMatrix<f64>, v: &DVector<f64>) {
    for mut row in x.row_iter_mut() {
        row -= v.transpose();
    }
}

/// PCA of a single matrix. `Midpoint` needs both groups; use [`fit_space`].
pub fn fit_pca(x: &DMatrix<f64>, centering: Centering) -> Result<SpectralModel> {
    let (centered, center) = match centering {
        Centering::Midpoint => {
            return Err(Error::Config(
                "midpoint centering needs paired groups; use fit_space".into(),
            ))
        }
        Centering::None => (x.clone(), DVector::zeros(x.ncols())),
        Centering::Mean => {
            let mean = column_mean(x);
            let mut c = x.clone();
            subtract_row(&mut c, &mean);
            (c, mean)
        }
    };
    decompose(centered, center, None, centering)
}

pub fn fit_space(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    space: SpaceTag,
    centering: Centering,
) -> Result<SpectralModel> {
    let (x, center) = assemble_space(a, b, space, centering)?;
    decompose(x, center, Some(space), centering)
}

fn decompose(
    centered: DMatrix<f64>,
    center: DVector<f64>,
    space_tag: Option<SpaceTag>,
    centering: Centering,
) -> Result<SpectralModel> {
    let (n, dim) = centered.shape();
    if n < 2 {
        return Err(Error::DegenerateInput(format!("PCA needs N >= 2, got {n}")));
    }
    if dim == 0 {
        return Err(Error::DegenerateInput("zero-dimensional data".into()));
    }
    if let Some(at) = centered.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "entry ({}, {})",
            at % n,
            at / n
        )));
    }

    let svd = SVD::new(centered.clone(), false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let p = n.min(dim);

    // nalgebra sorts singular values in decreasing order.
    let denom = (n - 1) as f64;
    let eigenvalues: Vec<f64> = svd
        .singular_values
        .iter()
        .take(p)
        .map(|s| s * s / denom)
        .collect();
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateInput("zero total variance".into()));
    }
    let explained_ratio = eigenvalues.iter().map(|l| l / total).collect();

    let mut components = v_t.rows(0, p).into_owned();
    for mut row in components.row_iter_mut() {
        let mut pivot = 0;
        for j in 1..row.len() {
            if row[j].abs() > row[pivot].abs() {
                pivot = j;
            }
        }
        if row[pivot] < 0.0 {
            row.neg_mut();
        }
    }
    let scores = &centered * components.transpose();

    Ok(SpectralModel {
        space_tag,
        centering,
        center,
        eigenvalues,
        explained_ratio,
        components,
        scores,
    })
}

/// Smallest `k` whose leading ratios sum to at least `threshold`.
pub fn effective_dim(explained_ratio: &[f64], threshold: f64) -> Result<usize> {
    let sum: f64 = explained_ratio.iter().sum();
    if explained_ratio.is_empty()
        || (sum - 1.0).abs() > 1e-6
        || explained_ratio.iter().any(|v| *v < 0.0 || !v.is_finite())
    {
        return Err(Error::BadRatios { sum });
    }
    let mut cumulative = 0.0;
    for (i, v) in explained_ratio.iter().enumerate() {
        cumulative += v;
        if cumulative >= threshold {
            return Ok(i + 1);
        }
    }
    // Rounding can leave the full sum a hair under a threshold of 1.0.
    Ok(explained_ratio.len())
}

pub fn cumulative_curve(model: &SpectralModel) -> Vec<f64> {
    cumulative_sum(&model.explained_ratio)
}

pub(crate) fn cumulative_sum(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}
