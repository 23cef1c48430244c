use std::collections::BTreeSet;
use std::fs;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use emres_core::geometry::{residuals, theta_rhat, theta_rr, ThetaRrOptions};
use emres_core::probes::{pc_duration_correlations, word_id_curve, LogisticSettings, SplitSpec};
use emres_core::spectral::fit_space;
use emres_core::sweep::{LayerSelection, ProbeSettings};
use emres_core::{
    emit_figure_data, generate, run_sweep, write_dataset, DurationTargets, Figure, LabelSet, SpaceTag,
    SweepConfig, SynthConfig,
};

fn noise(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

#[test]
fn random_labels_stay_at_chance() {
    let (n, classes) = (3732, 546);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let scores = noise(&mut rng, n, 5);
    let labels = LabelSet {
        word_class: (0..n).map(|_| rng.random_range(0..classes)).collect(),
        class_names: (0..classes).map(|c| format!("w{c}")).collect(),
    };
    let curve = word_id_curve(&scores, &labels, SplitSpec::holdout(0), &LogisticSettings::default(), &[2]).unwrap();
    let chance = 1.0 / classes as f64;
    for (k, acc) in curve.k_values.iter().zip(&curve.perf) {
        assert!(*acc <= 3.0 * chance, "k={k}: accuracy {acc}");
    }
}

#[test]
fn noise_scores_do_not_correlate_with_duration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 2000;
    let scores = noise(&mut rng, n, 30);
    let d_a: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.6)).collect();
    let d_b: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.6)).collect();
    let targets = DurationTargets {
        delta: d_b.iter().zip(&d_a).map(|(b, a)| b - a).collect(),
        dur_neutral: d_a,
        dur_emphasized: d_b,
    };
    let corr = pc_duration_correlations(&scores, &targets, 30).unwrap();
    for t in &corr.targets {
        let top = t.ranked[0].1.abs();
        assert!(top <= 0.15, "{:?}: {top}", t.target);
    }
}

#[test]
fn cosine_figure_has_four_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_pairs: 60,
        dim: 8,
        n_word_classes: 4,
        n_speakers: 2,
        emphasis_rank: 2,
        signal_scale: 4.0,
        noise_scale: 0.1,
        seed: 5,
        ..SynthConfig::reference()
    };
    let (ds, _) = generate(&cfg).unwrap();
    let manifest = write_dataset(&ds, &dir.path().join("data")).unwrap();
    let mut config = SweepConfig::new(vec![manifest], dir.path().join("out"));
    config.layers = LayerSelection::All;
    config.probes = ProbeSettings {
        k_grid: Some(vec![1, 2, 4]),
        word_id: false,
        top_k_corr: 2,
        ..ProbeSettings::default()
    };
    let report = run_sweep(&config).unwrap();
    let path = emit_figure_data(&report, Figure::CosineDists, Some(0), &dir.path().join("figs")).unwrap();
    let text = fs::read_to_string(path).unwrap();
    let metrics: BTreeSet<&str> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    // One emphasized rendition per sentence leaves no emphasized-emphasized pairs.
    let expected: BTreeSet<&str> = ["theta_aa", "theta_ab", "theta_rhat", "theta_rr"].into();
    assert_eq!(metrics, expected);
    for m in expected {
        let total: f64 = text
            .lines()
            .filter(|l| l.split(',').nth(2) == Some(m))
            .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-9, "{m} fractions sum to {total}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pair_order_does_not_matter(seed in any::<u64>(), n in 4usize..30, d in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = noise(&mut rng, n, d);
        let b = &a + noise(&mut rng, n, d).add_scalar(1.0);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let pa = a.select_rows(&order);
        let pb = b.select_rows(&order);

        let r = residuals(&a, &b).unwrap();
        let pr = residuals(&pa, &pb).unwrap();
        let rr = theta_rr(&r, ThetaRrOptions::default()).unwrap();
        let prr = theta_rr(&pr, ThetaRrOptions::default()).unwrap();
        prop_assert!((rr.mean - prr.mean).abs() <= 1e-12);

        let rh = theta_rhat(&r).unwrap();
        let prh = theta_rhat(&pr).unwrap();
        for (i, &j) in order.iter().enumerate() {
            prop_assert!((prh.per_pair[i] - rh.per_pair[j]).abs() <= 1e-12);
        }

        for space in SpaceTag::ALL {
            let m = fit_space(&a, &b, space, space.default_centering()).unwrap();
            let pm = fit_space(&pa, &pb, space, space.default_centering()).unwrap();
            for (x, y) in m.eigenvalues.iter().zip(&pm.eigenvalues) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }
}
