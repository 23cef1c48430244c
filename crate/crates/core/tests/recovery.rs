use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use emres_core::geometry::{residuals, theta_rhat};
use emres_core::synth::{principal_angles, random_orthonormal, score_recovery, RecoveryInputs};
use emres_core::{build_pairs, gather_matrices, generate, Centering, PairingPolicy, SpaceTag, SynthConfig};

fn noisy_reference() -> SynthConfig {
    let mut cfg = SynthConfig::reference();
    cfg.noise_scale = 0.05 * cfg.signal_scale;
    cfg
}

#[test]
fn moderate_noise_still_recovers_planted_subspace() {
    let cfg = noisy_reference();
    let (ds, truth) = generate(&cfg).unwrap();
    let pairs = build_pairs(&ds, PairingPolicy::FirstVariant).pairs;
    let (a, b) = gather_matrices(&ds, &pairs, 0).unwrap();

    let rhat = theta_rhat(&residuals(&a, &b).unwrap()).unwrap();
    assert!(rhat.stats.mean >= 0.9, "mean theta_rhat {}", rhat.stats.mean);

    let model = emres_core::spectral::fit_space(&a, &b, SpaceTag::R, Centering::None).unwrap();
    let report = score_recovery(
        &RecoveryInputs {
            residual_model: &model,
            delta_prediction: None,
            word_id_accuracy: None,
        },
        &truth,
    )
    .unwrap();
    assert!(report.max_angle.to_degrees() <= 15.0, "max angle {}°", report.max_angle.to_degrees());
}

#[test]
fn unrelated_basis_is_nearly_orthogonal() {
    let (ds, truth) = generate(&SynthConfig::reference()).unwrap();
    let pairs = build_pairs(&ds, PairingPolicy::FirstVariant).pairs;
    let (a, b) = gather_matrices(&ds, &pairs, 0).unwrap();
    let model = emres_core::spectral::fit_space(&a, &b, SpaceTag::R, Centering::None).unwrap();
    let rank = truth.config.emphasis_rank;
    let recovered = model.components.rows(0, rank).into_owned();

    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let shuffled = random_orthonormal(rank, truth.config.dim, &mut rng);
    let angles = principal_angles(&recovered, &shuffled).unwrap();
    let largest = angles.iter().cloned().fold(0.0, f64::max).to_degrees();
    assert!(largest > 80.0, "largest angle {largest}°");

    let matched = principal_angles(&recovered, &truth.basis_matrix()).unwrap();
    assert!(matched.iter().all(|t| t.to_degrees() < 1.0), "{matched:?}");
}
