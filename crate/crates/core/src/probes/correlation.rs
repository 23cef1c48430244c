use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::DurationTargets;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationTarget {
    DurNeutral,
    DurEmphasized,
    Delta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCorrelation {
    pub target: DurationTarget,
    /// `(pc_index, |r|)`, strongest first; ties keep the lower PC first.
    pub ranked: Vec<(usize, f64)>,
    pub mean_top: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub top_k: usize,
    pub targets: Vec<RankedCorrelation>,
}

impl CorrelationTable {
    pub fn for_target(&self, target: DurationTarget) -> Option<&RankedCorrelation> {
        self.targets.iter().find(|t| t.target == target)
    }
}

/// Pearson correlation. A constant `x` yields 0.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

fn is_constant(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

pub fn pc_duration_correlations(
    scores: &DMatrix<f64>,
    targets: &DurationTargets,
    top_k: usize,
) -> Result<CorrelationTable> {
    let (n, p) = scores.shape();
    if targets.delta.len() != n {
        return Err(Error::Shape(format!(
            "{n} score rows vs {} targets",
            targets.delta.len()
        )));
    }
    if p < top_k {
        return Err(Error::Shape(format!("{p} components, top_k={top_k}")));
    }
    let columns: Vec<Vec<f64>> = scores
        .column_iter()
        .map(|c| c.iter().copied().collect())
        .collect();

    let named = [
        (DurationTarget::DurNeutral, &targets.dur_neutral),
        (DurationTarget::DurEmphasized, &targets.dur_emphasized),
        (DurationTarget::Delta, &targets.delta),
    ];
    let mut out = Vec::with_capacity(3);
    for (target, values) in named {
        if is_constant(values) {
            return Err(Error::ConstantTarget(format!("{target:?}")));
        }
        let mut ranked: Vec<(usize, f64)> = columns
            .iter()
            .enumerate()
            .map(|(j, col)| (j, pearson(col, values).abs()))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(top_k);
        let mean_top = ranked.iter().map(|(_, r)| r).sum::<f64>() / top_k.max(1) as f64;
        out.push(RankedCorrelation {
            target,
            ranked,
            mean_top,
        });
    }
    Ok(CorrelationTable { top_k, targets: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn targets(n: usize, seed: u64) -> DurationTargets {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dur_neutral: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.5)).collect();
        let delta: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let dur_emphasized = dur_neutral
            .iter()
            .zip(&delta)
            .map(|(d, x)| d * (1.0 + x))
            .collect();
        DurationTargets {
            delta,
            dur_neutral,
            dur_emphasized,
        }
    }

    #[test]
    fn self_correlation_ranks_first() {
        let t = targets(200, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut scores = DMatrix::from_fn(200, 25, |_, _| rng.sample(StandardNormal));
        for i in 0..200 {
            scores[(i, 7)] = t.delta[i];
        }
        let table = pc_duration_correlations(&scores, &t, 20).unwrap();
        let delta = table.for_target(DurationTarget::Delta).unwrap();
        assert_eq!(delta.ranked[0].0, 7);
        assert_abs_diff_eq!(delta.ranked[0].1, 1.0, epsilon = 1e-12);
        assert_eq!(delta.ranked.len(), 20);
    }

    #[test]
    fn independent_scores_stay_near_zero() {
        let t = targets(2000, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scores = DMatrix::from_fn(2000, 64, |_, _| rng.sample(StandardNormal));
        let table = pc_duration_correlations(&scores, &t, 20).unwrap();
        let mean = table.for_target(DurationTarget::Delta).unwrap().mean_top;
        assert!(mean <= 0.15, "{mean}");
    }

    #[test]
    fn constant_target_is_rejected() {
        let mut t = targets(10, 5);
        t.delta = vec![0.2; 10];
        let scores = DMatrix::from_element(10, 3, 1.0);
        assert!(matches!(
            pc_duration_correlations(&scores, &t, 2),
            Err(Error::ConstantTarget(_))
        ));
    }

    #[test]
    fn ranking_invariant_to_positive_column_scaling() {
        let t = targets(300, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let scores = DMatrix::from_fn(300, 12, |i, j| {
            let noise: f64 = rng.sample(StandardNormal);
            noise + 0.1 * j as f64 * t.delta[i]
        });
        let mut scaled = scores.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= 0.5 + 3.0 * j as f64;
        }
        let rank = |m: &DMatrix<f64>| {
            pc_duration_correlations(m, &t, 12)
                .unwrap()
                .for_target(DurationTarget::Delta)
                .unwrap()
                .ranked
                .iter()
                .map(|(j, _)| *j)
                .collect::<Vec<_>>()
        };
        assert_eq!(rank(&scores), rank(&scaled));
    }
}
