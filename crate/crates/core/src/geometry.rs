//! Sample-wise cosine statistics over neutral, emphasized and residual vectors.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LayerMatrix, WordToken};
use crate::error::{Error, Result};

pub const HIST_BINS: usize = 101;

/// Row `i` is `b_i - a_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualMatrix {
    pub values: DMatrix<f64>,
}

impl ResidualMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub metric: String,
    pub mean: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub paper_normalized: Option<f64>,
    pub n_comparisons: u64,
    pub bins: usize,
    /// Uniform bins over [-1, 1]; the last bin is closed on the right.
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug, Default)]
struct Accumulator {
    sum: f64,
    n: u64,
    counts: Vec<u64>,
}

impl Accumulator {
    fn new() -> Self {
        Accumulator {
            sum: 0.0,
            n: 0,
            counts: vec![0; HIST_BINS],
        }
    }

    fn push(&mut self, cos: f64) {
        self.sum += cos;
        self.n += 1;
        self.counts[bin_of(cos)] += 1;
    }

    fn merge(&mut self, other: &Accumulator) {
        self.sum += other.sum;
        self.n += other.n;
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
    }

    fn finish(self, metric: &str) -> SimilarityStats {
        SimilarityStats {
            metric: metric.to_string(),
            mean: (self.sum / self.n as f64).clamp(-1.0, 1.0),
            paper_normalized: None,
            n_comparisons: self.n,
            bins: HIST_BINS,
            counts: self.counts,
        }
    }
}

pub fn bin_of(cos: f64) -> usize {
    let width = 2.0 / HIST_BINS as f64;
    (((cos + 1.0) / width).floor() as isize).clamp(0, HIST_BINS as isize - 1) as usize
}

/// Lower edges of the histogram bins plus the final upper edge.
pub fn bin_edges() -> Vec<f64> {
    (0..=HIST_BINS)
        .map(|i| -1.0 + 2.0 * i as f64 / HIST_BINS as f64)
        .collect()
}

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn residuals(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<ResidualMatrix> {
    check_same_shape(a, b)?;
    Ok(ResidualMatrix { values: b - a })
}

fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    (dot / (nx.sqrt() * ny.sqrt())).clamp(-1.0, 1.0)
}

/// Rows as contiguous vectors; nalgebra stores column-major.
fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn unit_rows(m: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    rows_of(m)
        .into_iter()
        .enumerate()
        .map(|(i, mut row)| {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroNormRow { row: i });
            }
            row.iter_mut().for_each(|v| *v /= norm);
            Ok(row)
        })
        .collect()
}

/// Per-row cosine between `x_i` and `y_i`.
pub fn paired_cosine_values(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_same_shape(x, y)?;
    let xs = rows_of(x);
    let ys = rows_of(y);
    xs.iter()
        .zip(&ys)
        .enumerate()
        .map(|(i, (a, b))| {
            if a.iter().all(|v| *v == 0.0) || b.iter().all(|v| *v == 0.0) {
                Err(Error::ZeroNormRow { row: i })
            } else {
                Ok(cosine(a, b))
            }
        })
        .collect()
}

pub fn paired_cosine(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<SimilarityStats> {
    let mut acc = Accumulator::new();
    for c in paired_cosine_values(x, y)? {
        acc.push(c);
    }
    if acc.n == 0 {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    Ok(acc.finish("theta_ab"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThetaRrOptions {
    /// Compute over a seeded random subset of this many rows instead of all.
    pub subsample: Option<usize>,
    pub seed: u64,
}

/// Mean cosine over every unordered residual pair `i < j`.
///
/// Row-level partial sums are computed in parallel and reduced in row order,
/// so the result does not depend on the thread count.
pub fn theta_rr(r: &ResidualMatrix, options: ThetaRrOptions) -> Result<SimilarityStats> {
    let n = r.nrows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    let mut rows = unit_rows(&r.values)?;
    if let Some(m) = options.subsample.filter(|&m| m < n) {
        if m < 2 {
            return Err(Error::TooFewRows { needed: 2, got: m });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let mut picked = sample(&mut rng, n, m).into_vec();
        picked.sort_unstable();
        rows = picked.into_iter().map(|i| rows[i].clone()).collect();
    }

    let partials: Vec<Accumulator> = (0..rows.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = Accumulator::new();
            let ri = &rows[i];
            for rj in &rows[i + 1..] {
                let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                acc.push(dot.clamp(-1.0, 1.0));
            }
            acc
        })
        .collect();
    let mut total = Accumulator::new();
    for p in &partials {
        total.merge(p);
    }
    let m = rows.len() as f64;
    let sum = total.sum;
    let mut stats = total.finish("theta_rr");
    // Literal 1/(2N(N-1)) normalization; equals mean/4.
    stats.paper_normalized = Some(sum / (2.0 * m * (m - 1.0)));
    Ok(stats)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaRhat {
    pub per_pair: Vec<f64>,
    pub mean_residual: DVector<f64>,
    pub stats: SimilarityStats,
}

/// Cosine of each residual with the mean residual.
pub fn theta_rhat(r: &ResidualMatrix) -> Result<ThetaRhat> {
    let n = r.nrows();
    if n < 1 {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    let mean: DVector<f64> = r.values.row_mean().transpose();
    if mean.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroMeanResidual);
    }
    let mean_row: Vec<f64> = mean.iter().copied().collect();
    let mut acc = Accumulator::new();
    let mut per_pair = Vec::with_capacity(n);
    for (i, row) in rows_of(&r.values).iter().enumerate() {
        if row.iter().all(|v| *v == 0.0) {
            return Err(Error::ZeroNormRow { row: i });
        }
        let c = cosine(row, &mean_row);
        acc.push(c);
        per_pair.push(c);
    }
    Ok(ThetaRhat {
        per_pair,
        mean_residual: mean,
        stats: acc.finish("theta_rhat"),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MidpointCentered {
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    pub midpoint: DVector<f64>,
}

/// Subtracts `m = (mean(A) + mean(B)) / 2` from both groups, which keeps the
/// offset between them.
pub fn midpoint_center(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<MidpointCentered> {
    check_same_shape(a, b)?;
    if a.nrows() == 0 {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    let midpoint: DVector<f64> = ((a.row_mean() + b.row_mean()) * 0.5).transpose();
    let shift = |m: &DMatrix<f64>| {
        let mut out = m.clone();
        for mut row in out.row_iter_mut() {
            row -= midpoint.transpose();
        }
        out
    };
    Ok(MidpointCentered {
        a_hat: shift(a),
        b_hat: shift(b),
        midpoint,
    })
}

/// Within-group baseline: cosine over every unordered pair of tokens with
/// the same speaker, sentence family, word text and position, restricted to
/// one emphasis label. Returns `None` when no such pair exists.
pub fn within_group_cosine(
    tokens: &[WordToken],
    layer: &LayerMatrix,
    emphasized: bool,
) -> Result<Option<SimilarityStats>> {
    let mut groups: BTreeMap<(&str, &str, &str, usize), Vec<usize>> = BTreeMap::new();
    for t in tokens.iter().filter(|t| t.emphasized == emphasized) {
        groups
            .entry((&t.speaker_id, &t.sentence_id, &t.word_text, t.word_position))
            .or_default()
            .push(t.token_id);
    }
    let mut acc = Accumulator::new();
    for ids in groups.values().filter(|ids| ids.len() > 1) {
        let rows: Vec<Vec<f64>> = ids
            .iter()
            .map(|&id| {
                if id >= layer.n_rows() {
                    return Err(Error::Index(format!("token {id} beyond layer rows")));
                }
                let row: Vec<f64> = layer.row(id).iter().map(|v| f64::from(*v)).collect();
                if row.iter().all(|v| *v == 0.0) {
                    return Err(Error::ZeroNormRow { row: id });
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                acc.push(cosine(&rows[i], &rows[j]));
            }
        }
    }
    if acc.n == 0 {
        return Ok(None);
    }
    Ok(Some(acc.finish(if emphasized { "theta_bb" } else { "theta_aa" })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn residual_arithmetic() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = DMatrix::from_row_slice(1, 2, &[3.0, 5.0]);
        assert_eq!(residuals(&a, &b).unwrap().values.as_slice(), &[2.0, 3.0]);
        assert!(residuals(&a, &a).unwrap().values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn residuals_match_elementwise_subtraction() {
        let a = random(7, 5, 1);
        let b = random(7, 5, 2);
        let r = residuals(&a, &b).unwrap();
        for i in 0..7 {
            for j in 0..5 {
                assert_eq!(r.values[(i, j)], b[(i, j)] - a[(i, j)]);
            }
        }
        assert!(matches!(
            residuals(&a, &random(6, 5, 3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn paired_cosine_cases() {
        let x = random(10, 4, 3);
        let same = paired_cosine(&x, &x).unwrap();
        assert_abs_diff_eq!(same.mean, 1.0, epsilon = 1e-15);
        assert_eq!(same.counts[HIST_BINS - 1], 10);

        let e1 = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let e2 = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert_eq!(paired_cosine(&e1, &e2).unwrap().mean, 0.0);

        let y = random(10, 4, 4);
        let got = paired_cosine_values(&x, &y).unwrap();
        for i in 0..10 {
            let (xi, yi) = (x.row(i), y.row(i));
            let oracle = xi.dot(&yi) / (xi.norm() * yi.norm());
            assert_abs_diff_eq!(got[i], oracle, epsilon = 1e-12);
        }

        let mut z = x.clone();
        z.row_mut(3).fill(0.0);
        assert!(matches!(
            paired_cosine(&z, &x),
            Err(Error::ZeroNormRow { row: 3 })
        ));
    }

    #[test]
    fn theta_rr_small_cases() {
        let same = ResidualMatrix {
            values: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]),
        };
        let s = theta_rr(&same, Default::default()).unwrap();
        assert_abs_diff_eq!(s.mean, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.paper_normalized.unwrap(), 0.25, epsilon = 1e-15);

        let ortho = ResidualMatrix {
            values: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
        };
        assert_eq!(theta_rr(&ortho, Default::default()).unwrap().mean, 0.0);

        let one = ResidualMatrix {
            values: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        };
        assert!(matches!(
            theta_rr(&one, Default::default()),
            Err(Error::TooFewRows { .. })
        ));
    }

    #[test]
    fn theta_rr_matches_pairwise_brute_force() {
        let r = ResidualMatrix {
            values: random(50, 8, 5),
        };
        let s = theta_rr(&r, Default::default()).unwrap();
        let mut sum = 0.0;
        let mut count = 0u64;
        for i in 0..50 {
            for j in i + 1..50 {
                let (ri, rj) = (r.values.row(i), r.values.row(j));
                sum += ri.dot(&rj) / (ri.norm() * rj.norm());
                count += 1;
            }
        }
        assert_eq!(s.n_comparisons, count);
        assert_eq!(s.counts.iter().sum::<u64>(), count);
        assert_abs_diff_eq!(s.mean, sum / count as f64, epsilon = 1e-12);
    }

    #[test]
    fn theta_rr_subsample_is_seeded() {
        let r = ResidualMatrix {
            values: random(40, 3, 6),
        };
        let opts = ThetaRrOptions {
            subsample: Some(10),
            seed: 9,
        };
        let a = theta_rr(&r, opts).unwrap();
        let b = theta_rr(&r, opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_comparisons, 45);
    }

    #[test]
    fn theta_rhat_cases() {
        let u = ResidualMatrix {
            values: DMatrix::from_row_slice(3, 2, &[0.5, -1.0, 0.5, -1.0, 0.5, -1.0]),
        };
        let t = theta_rhat(&u).unwrap();
        for c in t.per_pair {
            assert_abs_diff_eq!(c, 1.0, epsilon = 1e-15);
        }

        let cancel = ResidualMatrix {
            values: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]),
        };
        assert!(matches!(theta_rhat(&cancel), Err(Error::ZeroMeanResidual)));
    }

    #[test]
    fn midpoint_cases() {
        // Means (2,0) and (0,2).
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 3.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 3.0]);
        let c = midpoint_center(&a, &b).unwrap();
        assert_eq!(c.midpoint.as_slice(), &[1.0, 1.0]);
        assert_eq!(c.a_hat.row_mean().as_slice(), &[1.0, -1.0]);
        assert_eq!(c.b_hat.row_mean().as_slice(), &[-1.0, 1.0]);

        let same = midpoint_center(&a, &a).unwrap();
        assert_eq!(same.midpoint.as_slice(), a.row_mean().as_slice());
        assert!(same.a_hat.row_mean().iter().all(|v| v.abs() < 1e-15));

        let (x, y) = (random(20, 6, 7), random(20, 6, 8));
        let c = midpoint_center(&x, &y).unwrap();
        let s = c.a_hat.row_mean() + c.b_hat.row_mean();
        assert!(s.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn histogram_binning_edges() {
        assert_eq!(bin_of(-1.0), 0);
        assert_eq!(bin_of(1.0), HIST_BINS - 1);
        assert_eq!(bin_of(0.0), 50);
        assert_eq!(bin_edges().len(), HIST_BINS + 1);
    }
}
