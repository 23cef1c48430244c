//! Linear probes on principal-component scores: duration-change regression,
//! PC/duration correlations and word-identity classification.

mod correlation;
mod logistic;
mod ridge;
mod split;

pub use correlation::{
    pc_duration_correlations, pearson, CorrelationTable, DurationTarget, RankedCorrelation,
};
pub use logistic::{word_id_curve, LogisticModel, LogisticSettings};
pub use ridge::{fit_ridge, r_squared, ridge_curve, RidgeModel};
pub use split::{split_indices, SplitSpec};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pairing::PairSet;
use crate::spectral::SpaceTag;

/// Per-pair durations and relative duration change `(d_emph - d_neut) / d_neut`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationTargets {
    pub delta: Vec<f64>,
    pub dur_neutral: Vec<f64>,
    pub dur_emphasized: Vec<f64>,
}

pub fn duration_delta(dataset: &Dataset, pairs: &PairSet) -> Result<DurationTargets> {
    let tokens = dataset.tokens();
    let lookup = |id: usize| {
        tokens
            .get(id)
            .ok_or_else(|| Error::Index(format!("token {id} not in dataset")))
    };
    let mut out = DurationTargets {
        delta: Vec::with_capacity(pairs.len()),
        dur_neutral: Vec::with_capacity(pairs.len()),
        dur_emphasized: Vec::with_capacity(pairs.len()),
    };
    for (i, p) in pairs.iter().enumerate() {
        let neutral = lookup(p.neutral_token_id)?.duration();
        let emphasized = lookup(p.emphasized_token_id)?.duration();
        if !(neutral > 0.0) {
            return Err(Error::NonPositiveDuration {
                pair: i,
                duration: neutral,
            });
        }
        out.delta.push((emphasized - neutral) / neutral);
        out.dur_neutral.push(neutral);
        out.dur_emphasized.push(emphasized);
    }
    Ok(out)
}

/// Word class of every pair, indexed into sorted class names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub word_class: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabelSet {
    pub fn from_pairs(pairs: &PairSet) -> Self {
        let names: BTreeMap<&str, usize> = pairs
            .iter()
            .map(|p| (p.word_text.as_str(), 0))
            .collect::<BTreeMap<_, _>>()
            .into_keys()
            .enumerate()
            .map(|(i, name)| (name, i))
            .collect();
        LabelSet {
            word_class: pairs.iter().map(|p| names[p.word_text.as_str()]).collect(),
            class_names: names.keys().map(|s| s.to_string()).collect(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeTask {
    DurationR2,
    WordAccuracy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeCurve {
    pub task: ProbeTask,
    pub space_tag: Option<SpaceTag>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub layer: Option<usize>,
    pub k_values: Vec<usize>,
    pub perf: Vec<f64>,
    pub auc: f64,
    pub dim95: usize,
    pub split_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epochs_run: Option<Vec<usize>>,
    /// Classes that never occur in the training split.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub absent_classes: Option<usize>,
}

impl ProbeCurve {
    pub(crate) fn new(task: ProbeTask, k_values: Vec<usize>, perf: Vec<f64>) -> Self {
        let auc = perf_auc(&perf);
        let dim95 = perf_dim95(&k_values, &perf);
        ProbeCurve {
            task,
            space_tag: None,
            layer: None,
            k_values,
            perf,
            auc,
            dim95,
            split_seed: None,
            lambda: None,
            lr: None,
            epochs_run: None,
            absent_classes: None,
        }
    }

    pub fn max_perf(&self) -> f64 {
        self.perf.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Mean of the curve over the evaluated grid.
pub fn perf_auc(perf: &[f64]) -> f64 {
    perf.iter().sum::<f64>() / perf.len() as f64
}

/// Smallest `k` whose performance reaches 95% of the curve's peak. Values are
/// clipped at zero first, so an all-negative curve maps to its first `k`.
pub fn perf_dim95(k_values: &[usize], perf: &[f64]) -> usize {
    let clipped: Vec<f64> = perf.iter().map(|p| p.max(0.0)).collect();
    let peak = clipped.iter().copied().fold(0.0, f64::max);
    let target = 0.95 * peak;
    k_values
        .iter()
        .zip(&clipped)
        .find(|(_, p)| **p >= target)
        .map(|(k, _)| *k)
        .unwrap_or_else(|| *k_values.last().expect("non-empty curve"))
}

/// `1..=50` then `55..=500` in steps of 5, truncated at `max_k`.
pub fn default_k_grid(max_k: usize) -> Vec<usize> {
    (1..=50)
        .chain((55..=500).step_by(5))
        .take_while(|k| *k <= max_k)
        .collect()
}

/// Keeps the grid entries that fit `max_k`; an empty result means `max_k == 0`.
pub fn clamp_k_grid(grid: &[usize], max_k: usize) -> Vec<usize> {
    grid.iter().copied().filter(|k| *k >= 1 && *k <= max_k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{fixtures::token, Dataset};
    use crate::pairing::Pair;
    use approx::assert_abs_diff_eq;

    fn pair(n: usize, e: usize, word: &str) -> Pair {
        Pair {
            neutral_token_id: n,
            emphasized_token_id: e,
            word_text: word.into(),
            speaker_id: "spk0".into(),
            sentence_id: "s0".into(),
        }
    }

    fn timed(id: usize, dur: f64) -> crate::dataset::WordToken {
        let mut t = token(id, &format!("u{id}"), "w", 0, id % 2 == 1);
        t.t_start = 1.0;
        t.t_end = 1.0 + dur;
        t
    }

    #[test]
    fn duration_delta_hand_values() {
        // (neutral, emphasized) durations; expected ratios by hand.
        let durations = [(0.2, 0.3), (0.25, 0.25), (0.5, 0.75), (0.4, 0.3), (0.125, 0.5)];
        let expected = [0.5, 0.0, 0.5, -0.25, 3.0];
        let mut tokens = Vec::new();
        let mut pairs = Vec::new();
        for (i, (n, e)) in durations.iter().enumerate() {
            tokens.push(timed(2 * i, *n));
            tokens.push(timed(2 * i + 1, *e));
            pairs.push(pair(2 * i, 2 * i + 1, "w"));
        }
        let ds = Dataset::new("d", 1, tokens, vec![]).unwrap();
        let t = duration_delta(&ds, &PairSet { pairs }).unwrap();
        for (got, want) in t.delta.iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_positive_duration_names_pair() {
        let mut t0 = timed(0, 0.2);
        t0.t_end = t0.t_start;
        let ds = Dataset::new("d", 1, vec![t0, timed(1, 0.3)], vec![]).unwrap();
        let pairs = PairSet {
            pairs: vec![pair(0, 1, "w")],
        };
        assert!(matches!(
            duration_delta(&ds, &pairs),
            Err(Error::NonPositiveDuration { pair: 0, .. })
        ));
    }

    #[test]
    fn labels_are_sorted_class_indices() {
        let pairs = PairSet {
            pairs: vec![pair(0, 1, "zebra"), pair(2, 3, "apple"), pair(4, 5, "zebra")],
        };
        let labels = LabelSet::from_pairs(&pairs);
        assert_eq!(labels.class_names, vec!["apple", "zebra"]);
        assert_eq!(labels.word_class, vec![1, 0, 1]);
    }

    #[test]
    fn auc_and_dim95() {
        assert_eq!(perf_auc(&[1.0, 1.0, 1.0]), 1.0);
        assert_eq!(perf_dim95(&[1, 2, 3], &[1.0, 1.0, 1.0]), 1);
        assert_eq!(perf_auc(&[0.0, 1.0]), 0.5);

        // Monotone curve that first reaches 95% of its peak at k = 341.
        let k: Vec<usize> = (1..=500).collect();
        let perf: Vec<f64> = k
            .iter()
            .map(|&k| if k < 341 { 0.9 * k as f64 / 341.0 } else { 0.95 + 0.05 * (k - 341) as f64 / 159.0 })
            .collect();
        assert_eq!(perf_dim95(&k, &perf), 341);

        assert_eq!(perf_dim95(&[5, 10], &[-0.3, -0.1]), 5);
    }

    #[test]
    fn k_grid_shape() {
        let g = default_k_grid(500);
        assert_eq!(g.len(), 50 + 90);
        assert_eq!(&g[48..52], &[49, 50, 55, 60]);
        assert_eq!(*g.last().unwrap(), 500);
        assert_eq!(default_k_grid(3), vec![1, 2, 3]);
        assert_eq!(default_k_grid(57).last(), Some(&55));
    }
}
