//! Randomized invariants of the Gaussian state machinery: states stay
//! positive semidefinite through arbitrary channels, conditioning never
//! inflates a variance, marginalization commutes with conditioning, and
//! the unbroadened pass is a passive rotation.

use magsim::modes::{ModeLabel, PULSE_LIGHT, TWO_CELL_ATOMS};
use magsim::physics::{faraday_pass, spin_flip, ProbeParams};
use magsim::{AffineChannel, QuadratureState};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn all_labels() -> Vec<ModeLabel> {
    TWO_CELL_ATOMS.iter().chain(PULSE_LIGHT.iter()).copied().collect()
}

/// Smallest eigenvalue of a symmetric matrix.
fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// A positive semidefinite matrix A A^T (+ optional ridge) from raw entries.
fn psd_from(entries: &[f64], n: usize, ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_row_slice(n, n, entries);
    let mut m = &a * a.transpose();
    for i in 0..n {
        m[(i, i)] += ridge;
    }
    m
}

fn state_from(n: usize, mean: &[f64], cov_entries: &[f64]) -> QuadratureState {
    let labels = all_labels()[..n].to_vec();
    let cov = psd_from(cov_entries, n, 1e-6);
    QuadratureState::new(labels, DVector::from_row_slice(&mean[..n]), cov)
        .expect("construction from a PSD matrix must succeed")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Any affine channel with PSD added noise maps a valid state to a
    /// valid state: the covariance stays PSD up to numerical dust.
    #[test]
    fn channels_preserve_positivity(
        n in 2usize..=7,
        mean in prop::collection::vec(-5.0f64..5.0, 7),
        cov_raw in prop::collection::vec(-1.0f64..1.0, 49),
        mat_raw in prop::collection::vec(-2.0f64..2.0, 49),
        noise_raw in prop::collection::vec(-0.5f64..0.5, 49),
        offset in prop::collection::vec(-1.0f64..1.0, 7),
    ) {
        let s = state_from(n, &mean, &cov_raw[..n * n]);
        let ch = AffineChannel {
            matrix: DMatrix::from_row_slice(n, n, &mat_raw[..n * n]),
            offset: DVector::from_row_slice(&offset[..n]),
            added_noise: psd_from(&noise_raw[..n * n], n, 0.0),
        };
        let out = s.apply_channel(&ch).expect("channel applies");
        let scale = out.cov().trace().abs().max(1.0);
        prop_assert!(
            min_eigenvalue(out.cov()) >= -1e-8 * scale,
            "covariance left the PSD cone: min eig {}",
            min_eigenvalue(out.cov())
        );
    }

    /// Conditioning on any outcome never increases the variance of any
    /// surviving mode, and the posterior covariance is outcome-independent.
    #[test]
    fn conditioning_never_inflates_variances(
        n in 2usize..=7,
        mean in prop::collection::vec(-5.0f64..5.0, 7),
        cov_raw in prop::collection::vec(-1.0f64..1.0, 49),
        pick in 0usize..7,
        outcome in -3.0f64..3.0,
    ) {
        let s = state_from(n, &mean, &cov_raw[..n * n]);
        let measured = s.labels()[pick % n];
        let posterior = s.condition_on_outcome(measured, outcome).expect("conditioning");
        for l in posterior.labels() {
            let before = s.var_of(*l).unwrap();
            let after = posterior.var_of(*l).unwrap();
            prop_assert!(
                after <= before + 1e-10 * before.max(1.0),
                "mode {l:?}: variance rose from {before} to {after}"
            );
        }
        // The covariance update has no outcome dependence.
        let other = s.condition_on_outcome(measured, -outcome).unwrap();
        let diff = (posterior.cov() - other.cov()).abs().max();
        prop_assert!(diff <= 1e-12, "posterior covariance depends on the outcome");
    }

    /// Conditioning then marginalizing equals marginalizing (keeping the
    /// measured mode) then conditioning.
    #[test]
    fn conditioning_commutes_with_marginalization(
        n in 3usize..=7,
        mean in prop::collection::vec(-5.0f64..5.0, 7),
        cov_raw in prop::collection::vec(-1.0f64..1.0, 49),
        pick in 0usize..7,
        keep_pick in 0usize..7,
        outcome in -3.0f64..3.0,
    ) {
        let s = state_from(n, &mean, &cov_raw[..n * n]);
        let measured = s.labels()[pick % n];
        let kept = s.labels()[keep_pick % n];
        prop_assume!(kept != measured);

        let a = s
            .condition_on_outcome(measured, outcome)
            .unwrap()
            .marginal(&[kept])
            .unwrap();
        let b = s
            .marginal(&[kept, measured])
            .unwrap()
            .condition_on_outcome(measured, outcome)
            .unwrap();
        prop_assert!((a.mean_of(kept).unwrap() - b.mean_of(kept).unwrap()).abs() < 1e-9);
        prop_assert!((a.var_of(kept).unwrap() - b.var_of(kept).unwrap()).abs() < 1e-9);
    }

    /// With no back-action broadening (xi^2 = 1) the pass is passive: it
    /// maps the global vacuum exactly to the global vacuum.
    #[test]
    fn unbroadened_pass_is_passive(
        gamma_swap in 1.0f64..2000.0,
        duration in 1e-4f64..5e-3,
    ) {
        let labels = all_labels();
        let probe = ProbeParams {
            gamma_swap,
            gamma_extra: 0.0,
            duration,
            xi_squared: 1.0,
            efficiency: 1.0,
        };
        let pass = faraday_pass(&labels, &probe).expect("pass builds");
        let out = QuadratureState::vacuum(&labels).apply_channel(&pass).unwrap();
        for l in &labels {
            prop_assert!(
                (out.var_of(*l).unwrap() - 0.5).abs() < 1e-12,
                "mode {l:?} variance {} after a passive pass",
                out.var_of(*l).unwrap()
            );
        }
        for (i, a) in labels.iter().enumerate() {
            for b in &labels[i + 1..] {
                prop_assert!(out.cov_of(*a, *b).unwrap().abs() < 1e-12);
            }
        }
    }

    /// Flipping the collective spins twice is the identity.
    #[test]
    fn spin_flip_is_an_involution(
        mean in prop::collection::vec(-5.0f64..5.0, 7),
        cov_raw in prop::collection::vec(-1.0f64..1.0, 49),
    ) {
        let labels = all_labels();
        let s = state_from(labels.len(), &mean, &cov_raw);
        let flip = spin_flip(&labels).expect("flip builds");
        let twice = s.apply_channel(&flip).unwrap().apply_channel(&flip).unwrap();
        prop_assert!((twice.mean() - s.mean()).abs().max() < 1e-12);
        prop_assert!((twice.cov() - s.cov()).abs().max() < 1e-10);
    }
}
