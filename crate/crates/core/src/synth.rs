//! Synthetic datasets with planted ground truth.
//!
//! Each pair draws a word class and a speaker. The neutral token is
//! `centroid + speaker offset + noise`; the emphasized token is an independent
//! draw of the same word plus a shift `U^T c` inside a low-rank emphasis
//! subspace `U`. The first coefficient of `c` is a magnitude tied to the
//! pair's duration change; the others scatter the direction around it.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LayerMatrix, WordToken};
use crate::error::{Error, Result};
use crate::spectral::SpectralModel;

const T_START: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_pairs: usize,
    pub dim: usize,
    pub n_word_classes: usize,
    pub n_speakers: usize,
    /// Dimension of the planted emphasis subspace.
    pub emphasis_rank: usize,
    /// Expected norm of a word centroid.
    pub signal_scale: f64,
    /// Expected norm of one isotropic noise draw.
    pub noise_scale: f64,
    /// 1 ties the shift magnitude to the planted duration change, 0 makes
    /// them independent.
    pub delta_coupling: f64,
    pub seed: u64,
    /// Neutral renditions per pair; the first one becomes the partner.
    #[serde(default = "default_renditions")]
    pub neutral_renditions: usize,
    /// Spread of the shift direction off its main axis, relative to
    /// `signal_scale`.
    #[serde(default = "default_spread")]
    pub direction_spread: f64,
    #[serde(default = "default_model_name")]
    pub model_name: String,
}

fn default_renditions() -> usize {
    2
}

fn default_spread() -> f64 {
    0.2
}

fn default_model_name() -> String {
    "synthetic".to_string()
}

impl SynthConfig {
    /// n = 2000, d = 256, rank 5, noise at 1% of signal, seed 7. Centroids
    /// have unit variance per coordinate.
    pub fn reference() -> Self {
        SynthConfig {
            n_pairs: 2000,
            dim: 256,
            n_word_classes: 100,
            n_speakers: 4,
            emphasis_rank: 5,
            signal_scale: 16.0,
            noise_scale: 0.16,
            delta_coupling: 1.0,
            seed: 7,
            neutral_renditions: default_renditions(),
            direction_spread: default_spread(),
            model_name: default_model_name(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_pairs == 0 || self.dim == 0 {
            return fail("n_pairs and dim must be positive".into());
        }
        if self.emphasis_rank == 0 || self.emphasis_rank > self.dim {
            return fail(format!(
                "emphasis_rank {} must be in 1..={}",
                self.emphasis_rank, self.dim
            ));
        }
        if self.n_word_classes == 0 || self.n_speakers == 0 || self.neutral_renditions == 0 {
            return fail("n_word_classes, n_speakers and neutral_renditions must be >= 1".into());
        }
        for (name, v) in [
            ("signal_scale", self.signal_scale),
            ("noise_scale", self.noise_scale),
            ("direction_spread", self.direction_spread),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.delta_coupling) {
            return fail(format!("delta_coupling {} outside [0, 1]", self.delta_coupling));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `emphasis_rank` orthonormal rows of length `dim`.
    pub emphasis_basis: Vec<Vec<f64>>,
    /// Per pair, coefficients of the shift in the emphasis basis.
    pub shift_coefficients: Vec<Vec<f64>>,
    /// Relative duration change per pair, as recomputed from stored times.
    pub delta: Vec<f64>,
    pub word_class: Vec<usize>,
    pub speaker: Vec<usize>,
    pub neutral_token_ids: Vec<usize>,
    pub emphasized_token_ids: Vec<usize>,
    pub config: SynthConfig,
}

impl GroundTruth {
    pub fn basis_matrix(&self) -> DMatrix<f64> {
        let rank = self.emphasis_basis.len();
        let dim = self.emphasis_basis.first().map_or(0, Vec::len);
        DMatrix::from_fn(rank, dim, |i, j| self.emphasis_basis[i][j])
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, norm: f64) -> Vec<f64> {
    let sd = norm / (dim as f64).sqrt();
    (0..dim).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Rows of a Gaussian matrix made orthonormal by two passes of modified
/// Gram–Schmidt.
pub fn random_orthonormal(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(rows, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    for _ in 0..2 {
        for i in 0..rows {
            for j in 0..i {
                let proj = m.row(i).dot(&m.row(j));
                let rj = m.row(j).into_owned();
                m.row_mut(i).zip_apply(&rj, |a, b| *a -= proj * b);
            }
            let norm = m.row(i).norm();
            m.row_mut(i).unscale_mut(norm);
        }
    }
    m
}

fn add(into: &mut [f64], v: &[f64]) {
    for (a, b) in into.iter_mut().zip(v) {
        *a += b;
    }
}

pub fn generate(config: &SynthConfig) -> Result<(Dataset, GroundTruth)> {
    config.validate()?;
    let SynthConfig {
        n_pairs,
        dim,
        n_word_classes,
        n_speakers,
        emphasis_rank,
        signal_scale,
        noise_scale,
        delta_coupling,
        ..
    } = *config;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let basis = random_orthonormal(emphasis_rank, dim, &mut rng);
    let centroids: Vec<Vec<f64>> = (0..n_word_classes)
        .map(|_| gaussian(&mut rng, dim, signal_scale))
        .collect();
    let min_sep = 4.0 * noise_scale;
    for i in 0..n_word_classes {
        for j in i + 1..n_word_classes {
            let dist = centroids[i]
                .iter()
                .zip(&centroids[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if dist < min_sep {
                return Err(Error::Config(format!(
                    "word centroids {i} and {j} are {dist:.3e} apart, need >= {min_sep:.3e}"
                )));
            }
        }
    }
    let speaker_offsets: Vec<Vec<f64>> = (0..n_speakers)
        .map(|_| gaussian(&mut rng, dim, 0.5 * signal_scale))
        .collect();

    let per_pair = 1 + config.neutral_renditions;
    let mut tokens = Vec::with_capacity(n_pairs * per_pair);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_pairs * per_pair);
    let mut truth = GroundTruth {
        emphasis_basis: basis.row_iter().map(|r| r.iter().copied().collect()).collect(),
        shift_coefficients: Vec::with_capacity(n_pairs),
        delta: Vec::with_capacity(n_pairs),
        word_class: Vec::with_capacity(n_pairs),
        speaker: Vec::with_capacity(n_pairs),
        neutral_token_ids: Vec::with_capacity(n_pairs),
        emphasized_token_ids: Vec::with_capacity(n_pairs),
        config: config.clone(),
    };

    for i in 0..n_pairs {
        // Contiguous speaker blocks keep generation order equal to pair order.
        let speaker = i * n_speakers / n_pairs;
        let class = rng.random_range(0..n_word_classes);
        let dur_neutral: f64 = rng.random_range(0.1..0.5);
        let raw_delta: f64 = rng.random_range(0.1..1.0);
        let decoy: f64 = rng.random_range(0.1..1.0);

        let t_end_neutral = T_START + dur_neutral;
        let t_end_emph = T_START + dur_neutral * (1.0 + raw_delta);
        let (dn, de) = (t_end_neutral - T_START, t_end_emph - T_START);
        let delta = (de - dn) / dn;

        let magnitude =
            signal_scale * (1.0 + delta_coupling * delta + (1.0 - delta_coupling) * decoy);
        let mut coeffs = vec![magnitude];
        for _ in 1..emphasis_rank {
            coeffs.push(config.direction_spread * signal_scale * rng.sample::<f64, _>(StandardNormal));
        }

        let mut base = centroids[class].clone();
        add(&mut base, &speaker_offsets[speaker]);
        let draw = |rng: &mut ChaCha8Rng| {
            let mut v = base.clone();
            add(&mut v, &gaussian(rng, dim, noise_scale));
            v
        };
        let neutral = draw(&mut rng);
        let mut emphasized = draw(&mut rng);
        for (r, c) in coeffs.iter().enumerate() {
            for (e, u) in emphasized.iter_mut().zip(basis.row(r).iter()) {
                *e += c * u;
            }
        }
        add(&mut emphasized, &gaussian(&mut rng, dim, noise_scale));
        let extras: Vec<Vec<f64>> = (1..config.neutral_renditions)
            .map(|_| draw(&mut rng))
            .collect();
        let extra_durations: Vec<f64> = extras.iter().map(|_| rng.random_range(0.1..0.5)).collect();

        let sentence = format!("sent{i:05}");
        let spk = format!("spk{speaker:02}");
        let word = format!("w{class:04}");
        let mut push = |variant: usize, emphasized_flag: bool, t_end: f64, row: Vec<f64>| {
            let variant_id = format!("v{variant:02}");
            let id = tokens.len();
            tokens.push(WordToken {
                token_id: id,
                utterance_id: format!("{sentence}-{variant_id}-{spk}"),
                speaker_id: spk.clone(),
                sentence_id: sentence.clone(),
                variant_id,
                word_text: word.clone(),
                word_position: 0,
                emphasized: emphasized_flag,
                t_start: T_START,
                t_end,
            });
            rows.push(row);
            id
        };
        let neutral_id = push(0, false, t_end_neutral, neutral);
        let emph_id = push(1, true, t_end_emph, emphasized);
        for (j, (row, d)) in extras.into_iter().zip(extra_durations).enumerate() {
            push(j + 2, false, T_START + d, row);
        }

        truth.shift_coefficients.push(coeffs);
        truth.delta.push(delta);
        truth.word_class.push(class);
        truth.speaker.push(speaker);
        truth.neutral_token_ids.push(neutral_id);
        truth.emphasized_token_ids.push(emph_id);
    }

    let n_rows = rows.len();
    let values: Vec<f32> = rows.iter().flatten().map(|v| *v as f32).collect();
    let layer = LayerMatrix::new(0, n_rows, dim, values)?;
    let dataset = Dataset::new(config.model_name.clone(), dim, tokens, vec![layer])?;
    Ok((dataset, truth))
}

/// Principal angles (radians, ascending) between the row spaces of two
/// matrices with the same number of orthonormal rows.
///
/// Small angles come from sines and large ones from cosines, which keeps both
/// ends accurate.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.ncols() != b.ncols() || a.nrows() != b.nrows() {
        return Err(Error::Shape(format!(
            "subspaces {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let cross = a * b.transpose();
    let mut cosines: Vec<f64> = SVD::new(cross.clone(), false, false)
        .singular_values
        .iter()
        .map(|s| s.min(1.0))
        .collect();
    cosines.sort_by(|x, y| y.total_cmp(x));

    let off = b - cross.transpose() * a;
    let mut sines: Vec<f64> = SVD::new(off, false, false)
        .singular_values
        .iter()
        .map(|s| s.min(1.0))
        .collect();
    sines.sort_by(|x, y| x.total_cmp(y));

    Ok(cosines
        .iter()
        .zip(&sines)
        .map(|(c, s)| if c * c >= 0.5 { s.asin() } else { c.acos() })
        .collect())
}

#[derive(Clone, Debug)]
pub struct RecoveryInputs<'a> {
    /// PCA of the residual space.
    pub residual_model: &'a SpectralModel,
    /// Predicted duration change per pair, in pair order.
    pub delta_prediction: Option<&'a [f64]>,
    pub word_id_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub principal_angles: Vec<f64>,
    pub max_angle: f64,
    pub delta_correlation: Option<f64>,
    pub word_id_accuracy: Option<f64>,
    pub chance: f64,
}

pub fn score_recovery(inputs: &RecoveryInputs<'_>, truth: &GroundTruth) -> Result<RecoveryReport> {
    let basis = truth.basis_matrix();
    let rank = basis.nrows();
    let model = inputs.residual_model;
    if model.n_components() < rank || model.components.ncols() != basis.ncols() {
        return Err(Error::Shape(format!(
            "residual model {:?} vs planted basis {:?}",
            model.components.shape(),
            basis.shape()
        )));
    }
    let recovered = model.components.rows(0, rank).into_owned();
    let angles = principal_angles(&recovered, &basis)?;
    let max_angle = angles.iter().copied().fold(0.0, f64::max);

    let delta_correlation = match inputs.delta_prediction {
        None => None,
        Some(pred) if pred.len() == truth.delta.len() => {
            Some(crate::probes::pearson(pred, &truth.delta))
        }
        Some(pred) => {
            return Err(Error::Shape(format!(
                "{} predictions for {} pairs",
                pred.len(),
                truth.delta.len()
            )))
        }
    };
    Ok(RecoveryReport {
        principal_angles: angles,
        max_angle,
        delta_correlation,
        word_id_accuracy: inputs.word_id_accuracy,
        chance: 1.0 / truth.config.n_word_classes as f64,
    })
}
