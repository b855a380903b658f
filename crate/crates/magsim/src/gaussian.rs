//! Multimode Gaussian states over labeled quadratures and the affine
//! channels that act on them.
//!
//! A state is a mean vector and a symmetric positive-semidefinite covariance
//! matrix, one row/column per labeled mode.  Homodyne detection of a single
//! mode is a Gaussian conditioning step (Schur complement) that removes the
//! measured mode from the state.
//!
//! Conventions: vacuum variance is exactly 1/2 per mode, covariances are
//! symmetrized after every channel application, and eigenvalues that are
//! negative by less than `PSD_TOL` times the trace are treated as numerical
//! noise and clipped to zero.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::modes::ModeLabel;

/// Variance of each quadrature of a coherent/vacuum mode.
pub const VACUUM_VAR: f64 = 0.5;

/// Relative asymmetry above which a covariance matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Covariance eigenvalues below `-PSD_TOL * trace` are rejected; anything
/// between that and zero is clipped to zero.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum GaussianError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("mode {0} is not part of this state")]
    UnknownMode(ModeLabel),
    #[error("mode {0} appears more than once")]
    DuplicateMode(ModeLabel),
    #[error("covariance matrix is not symmetric (max asymmetry {max_asymmetry:.3e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("covariance matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },
    #[error("cannot condition on mode {0}: its variance is zero")]
    DeterministicMode(ModeLabel),
}

/// Deterministic Gaussian channel: `mean -> matrix * mean + offset`,
/// `cov -> matrix * cov * matrix^T + added_noise`.
#[derive(Debug, Clone)]
pub struct AffineChannel {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub added_noise: DMatrix<f64>,
}

impl AffineChannel {
    /// Identity channel on `n` modes.
    pub fn identity(n: usize) -> Self {
        AffineChannel {
            matrix: DMatrix::identity(n, n),
            offset: DVector::zeros(n),
            added_noise: DMatrix::zeros(n, n),
        }
    }

    /// Pure displacement channel.
    pub fn displacement(offset: DVector<f64>) -> Self {
        let n = offset.len();
        AffineChannel {
            matrix: DMatrix::identity(n, n),
            offset,
            added_noise: DMatrix::zeros(n, n),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadratureState {
    labels: Vec<ModeLabel>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Check the (already symmetric) matrix for positive semidefiniteness and
/// clip small negative eigenvalues to zero in place.
fn enforce_psd(m: &mut DMatrix<f64>) -> Result<(), GaussianError> {
    let n = m.nrows();
    if n == 0 {
        return Ok(());
    }
    let trace: f64 = m.trace();
    let floor = -PSD_TOL * trace.abs().max(1.0);
    let eig = m.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig < floor {
        return Err(GaussianError::NotPositiveSemidefinite {
            min_eigenvalue: min_eig,
        });
    }
    if min_eig < 0.0 {
        let mut vals = eig.eigenvalues;
        for v in vals.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let q = eig.eigenvectors;
        *m = &q * DMatrix::from_diagonal(&vals) * q.transpose();
        symmetrize(m);
    }
    Ok(())
}

impl QuadratureState {
    /// Build a validated state.  The covariance must be symmetric within
    /// `SYMMETRY_TOL` and positive semidefinite within `PSD_TOL`.
    pub fn new(
        labels: Vec<ModeLabel>,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    ) -> Result<Self, GaussianError> {
        let n = labels.len();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(GaussianError::DuplicateMode(*l));
            }
        }
        if mean.len() != n {
            return Err(GaussianError::DimensionMismatch {
                what: "mean vector",
                expected: n,
                got: mean.len(),
            });
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(GaussianError::DimensionMismatch {
                what: "covariance matrix",
                expected: n,
                got: cov.nrows().max(cov.ncols()),
            });
        }
        let asym = max_asymmetry(&cov);
        let scale = cov.trace().abs().max(1.0);
        if asym > SYMMETRY_TOL * scale {
            return Err(GaussianError::NotSymmetric {
                max_asymmetry: asym,
            });
        }
        let mut cov = cov;
        symmetrize(&mut cov);
        enforce_psd(&mut cov)?;
        Ok(QuadratureState { labels, mean, cov })
    }

    /// Vacuum state: zero mean, variance exactly 1/2 on every mode.
    pub fn vacuum(labels: &[ModeLabel]) -> Self {
        let n = labels.len();
        QuadratureState {
            labels: labels.to_vec(),
            mean: DVector::zeros(n),
            cov: DMatrix::from_diagonal_element(n, n, VACUUM_VAR),
        }
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[ModeLabel] {
        &self.labels
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn index_of(&self, mode: ModeLabel) -> Result<usize, GaussianError> {
        self.labels
            .iter()
            .position(|l| *l == mode)
            .ok_or(GaussianError::UnknownMode(mode))
    }

    pub fn mean_of(&self, mode: ModeLabel) -> Result<f64, GaussianError> {
        Ok(self.mean[self.index_of(mode)?])
    }

    pub fn var_of(&self, mode: ModeLabel) -> Result<f64, GaussianError> {
        let i = self.index_of(mode)?;
        Ok(self.cov[(i, i)])
    }

    pub fn cov_of(&self, a: ModeLabel, b: ModeLabel) -> Result<f64, GaussianError> {
        let i = self.index_of(a)?;
        let j = self.index_of(b)?;
        Ok(self.cov[(i, j)])
    }

    /// Shift the mean of one mode in place (covariance untouched).
    pub fn displace_mode(&mut self, mode: ModeLabel, by: f64) -> Result<(), GaussianError> {
        let i = self.index_of(mode)?;
        self.mean[i] += by;
        Ok(())
    }

    /// Tensor product with an independent state (no cross-covariances).
    pub fn tensor(&self, other: &QuadratureState) -> Result<Self, GaussianError> {
        for l in &other.labels {
            if self.labels.contains(l) {
                return Err(GaussianError::DuplicateMode(*l));
            }
        }
        let n = self.dim();
        let m = other.dim();
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut mean = DVector::zeros(n + m);
        mean.rows_mut(0, n).copy_from(&self.mean);
        mean.rows_mut(n, m).copy_from(&other.mean);
        let mut cov = DMatrix::zeros(n + m, n + m);
        cov.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        cov.view_mut((n, n), (m, m)).copy_from(&other.cov);
        Ok(QuadratureState { labels, mean, cov })
    }

    /// Apply an affine Gaussian channel.  The result is symmetrized and its
    /// positive semidefiniteness enforced.
    pub fn apply_channel(&self, ch: &AffineChannel) -> Result<Self, GaussianError> {
        let n = self.dim();
        if ch.matrix.ncols() != n || ch.matrix.nrows() != n {
            return Err(GaussianError::DimensionMismatch {
                what: "channel matrix",
                expected: n,
                got: ch.matrix.nrows().max(ch.matrix.ncols()),
            });
        }
        if ch.offset.len() != n {
            return Err(GaussianError::DimensionMismatch {
                what: "channel offset",
                expected: n,
                got: ch.offset.len(),
            });
        }
        if ch.added_noise.nrows() != n || ch.added_noise.ncols() != n {
            return Err(GaussianError::DimensionMismatch {
                what: "channel noise",
                expected: n,
                got: ch.added_noise.nrows().max(ch.added_noise.ncols()),
            });
        }
        let noise_asym = max_asymmetry(&ch.added_noise);
        if noise_asym > SYMMETRY_TOL * ch.added_noise.trace().abs().max(1.0) {
            return Err(GaussianError::NotSymmetric {
                max_asymmetry: noise_asym,
            });
        }
        let mean = &ch.matrix * &self.mean + &ch.offset;
        let mut cov = &ch.matrix * &self.cov * ch.matrix.transpose() + &ch.added_noise;
        symmetrize(&mut cov);
        enforce_psd(&mut cov)?;
        Ok(QuadratureState {
            labels: self.labels.clone(),
            mean,
            cov,
        })
    }

    /// Condition the state on a homodyne outcome of `mode`, removing that
    /// mode.  Standard Gaussian conditioning:
    /// `mean' = mean_r + cov_rm (y - mean_m) / var_m`,
    /// `cov' = cov_rr - cov_rm cov_rm^T / var_m`.
    pub fn condition_on_outcome(
        &self,
        mode: ModeLabel,
        outcome: f64,
    ) -> Result<Self, GaussianError> {
        let i = self.index_of(mode)?;
        let var_m = self.cov[(i, i)];
        if var_m <= 0.0 {
            return Err(GaussianError::DeterministicMode(mode));
        }
        let keep: Vec<usize> = (0..self.dim()).filter(|k| *k != i).collect();
        let n = keep.len();
        let mut labels = Vec::with_capacity(n);
        let mut mean = DVector::zeros(n);
        let mut cross = DVector::zeros(n);
        for (r, &k) in keep.iter().enumerate() {
            labels.push(self.labels[k]);
            cross[r] = self.cov[(k, i)];
            mean[r] = self.mean[k] + cross[r] * (outcome - self.mean[i]) / var_m;
        }
        let mut cov = DMatrix::zeros(n, n);
        for (r, &k) in keep.iter().enumerate() {
            for (c, &l) in keep.iter().enumerate() {
                cov[(r, c)] = self.cov[(k, l)] - cross[r] * cross[c] / var_m;
            }
        }
        symmetrize(&mut cov);
        enforce_psd(&mut cov)?;
        Ok(QuadratureState { labels, mean, cov })
    }

    /// Draw a homodyne outcome for `mode` from its marginal distribution.
    /// A zero-variance mode always returns its mean.
    pub fn sample_outcome<R: Rng + ?Sized>(
        &self,
        mode: ModeLabel,
        rng: &mut R,
    ) -> Result<f64, GaussianError> {
        let i = self.index_of(mode)?;
        let var = self.cov[(i, i)].max(0.0);
        let z: f64 = rng.sample(StandardNormal);
        Ok(self.mean[i] + var.sqrt() * z)
    }

    /// Sample an outcome for `mode` and condition on it, returning the
    /// outcome together with the reduced state.
    pub fn measure<R: Rng + ?Sized>(
        &self,
        mode: ModeLabel,
        rng: &mut R,
    ) -> Result<(f64, Self), GaussianError> {
        let outcome = self.sample_outcome(mode, rng)?;
        let conditioned = self.condition_on_outcome(mode, outcome)?;
        Ok((outcome, conditioned))
    }

    /// Marginal state over `modes`, in the requested order.
    pub fn marginal(&self, modes: &[ModeLabel]) -> Result<Self, GaussianError> {
        let mut idx = Vec::with_capacity(modes.len());
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].contains(m) {
                return Err(GaussianError::DuplicateMode(*m));
            }
            idx.push(self.index_of(*m)?);
        }
        let n = idx.len();
        let mut mean = DVector::zeros(n);
        let mut cov = DMatrix::zeros(n, n);
        for (r, &k) in idx.iter().enumerate() {
            mean[r] = self.mean[k];
            for (c, &l) in idx.iter().enumerate() {
                cov[(r, c)] = self.cov[(k, l)];
            }
        }
        Ok(QuadratureState {
            labels: modes.to_vec(),
            mean,
            cov,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::ModeLabel::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_mode(var_a: f64, var_b: f64, cov_ab: f64) -> QuadratureState {
        QuadratureState::new(
            vec![AtomZPlus, LightS2c],
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[var_a, cov_ab, cov_ab, var_b]),
        )
        .unwrap()
    }

    #[test]
    fn vacuum_variance_is_exactly_half() {
        let st = QuadratureState::vacuum(&[AtomYPlus, AtomZPlus, LightS2c]);
        for i in 0..3 {
            // Bitwise: the vacuum constructor must not go through any
            // arithmetic that could perturb 0.5.
            assert_eq!(st.cov()[(i, i)].to_bits(), 0.5f64.to_bits());
            assert_eq!(st.mean()[i], 0.0);
        }
    }

    #[test]
    fn make_state_rejects_bad_inputs() {
        let labels = vec![AtomZPlus, LightS2c];
        // Mean length mismatch.
        let err = QuadratureState::new(labels.clone(), DVector::zeros(3), DMatrix::identity(2, 2))
            .unwrap_err();
        assert!(matches!(err, GaussianError::DimensionMismatch { .. }));
        // Asymmetric covariance.
        let err = QuadratureState::new(
            labels.clone(),
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.1, 1.0]),
        )
        .unwrap_err();
        assert!(matches!(err, GaussianError::NotSymmetric { .. }));
        // Indefinite covariance: eigenvalues {3, -1}.
        let err = QuadratureState::new(
            labels.clone(),
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            GaussianError::NotPositiveSemidefinite { .. }
        ));
        // Duplicate label.
        let err = QuadratureState::new(
            vec![AtomZPlus, AtomZPlus],
            DVector::zeros(2),
            DMatrix::identity(2, 2),
        )
        .unwrap_err();
        assert_eq!(err, GaussianError::DuplicateMode(AtomZPlus));
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clipped() {
        // -1e-12 is within PSD_TOL * trace of zero, so this must be accepted
        // and clipped to an exactly PSD matrix.
        let st = QuadratureState::new(
            vec![AtomZPlus, LightS2c],
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-12]),
        )
        .unwrap();
        assert!(st.var_of(LightS2c).unwrap() >= 0.0);
    }

    /// Beamsplitter on variances (3.6, 0.5) with transmission 0.8:
    /// the transmitted variance is 0.8 * 3.6 + 0.2 * 0.5 = 2.98.
    /// Oracle: independent triple-loop matrix arithmetic.
    #[test]
    fn beamsplitter_mixes_variances() {
        let (eta, one_minus) = (0.8_f64, 0.2_f64);
        let st = two_mode(3.6, 0.5, 0.0);
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                eta.sqrt(),
                one_minus.sqrt(),
                -one_minus.sqrt(),
                eta.sqrt(),
            ],
        );
        let ch = AffineChannel {
            matrix: m.clone(),
            offset: DVector::zeros(2),
            added_noise: DMatrix::zeros(2, 2),
        };
        let out = st.apply_channel(&ch).unwrap();

        // Hand-rolled M * C * M^T, no linear-algebra library involved.
        let c = st.cov();
        let mut oracle = [[0.0_f64; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        acc += m[(i, k)] * c[(k, l)] * m[(j, l)];
                    }
                }
                oracle[i][j] = acc;
            }
        }
        assert!((out.cov()[(0, 0)] - oracle[0][0]).abs() < 1e-12);
        assert!((out.cov()[(0, 0)] - 2.98).abs() < 1e-12);
        assert!((out.cov()[(1, 1)] - (0.2 * 3.6 + 0.8 * 0.5)).abs() < 1e-12);
    }

    /// Frozen conditioning example: Var 0.5 each, Cov 0.3, outcome 1.0 with
    /// zero means gives posterior mean 0.3 * 1.0 / 0.5 = 0.6 and posterior
    /// variance 0.5 - 0.3^2 / 0.5 = 0.32.
    #[test]
    fn conditioning_matches_hand_algebra() {
        let st = two_mode(0.5, 0.5, 0.3);
        let post = st.condition_on_outcome(LightS2c, 1.0).unwrap();
        assert_eq!(post.labels(), &[AtomZPlus]);
        assert!((post.mean_of(AtomZPlus).unwrap() - 0.6).abs() < 1e-12);
        assert!((post.var_of(AtomZPlus).unwrap() - 0.32).abs() < 1e-12);
        // The measured mode is gone.
        assert!(matches!(
            post.var_of(LightS2c),
            Err(GaussianError::UnknownMode(_))
        ));
    }

    #[test]
    fn conditioning_on_deterministic_mode_is_rejected() {
        let st = two_mode(0.5, 0.0, 0.0);
        let err = st.condition_on_outcome(LightS2c, 0.3).unwrap_err();
        assert_eq!(err, GaussianError::DeterministicMode(LightS2c));
    }

    #[test]
    fn sampling_deterministic_mode_returns_mean() {
        let mut st = two_mode(0.5, 0.0, 0.0);
        st.displace_mode(LightS2c, 1.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            assert_eq!(st.sample_outcome(LightS2c, &mut rng).unwrap(), 1.25);
        }
    }

    #[test]
    fn marginal_of_vacuum_is_vacuum() {
        let st = QuadratureState::vacuum(&[AtomYPlus, AtomZPlus, LightS2c]);
        let sub = st.marginal(&[LightS2c, AtomYPlus]).unwrap();
        assert_eq!(sub.labels(), &[LightS2c, AtomYPlus]);
        assert_eq!(sub.cov()[(0, 0)], 0.5);
        assert_eq!(sub.cov()[(1, 1)], 0.5);
        assert_eq!(sub.cov()[(0, 1)], 0.0);
    }

    #[test]
    fn marginal_then_condition_commutes_with_condition_then_marginal() {
        // Condition on light.s2c; marginalize over a disjoint mode set.
        let labels = vec![AtomYPlus, AtomZPlus, LightS2c];
        let cov = DMatrix::from_row_slice(
            3,
            3,
            &[0.7, 0.1, 0.2, 0.1, 0.6, 0.25, 0.2, 0.25, 0.9],
        );
        let mean = DVector::from_row_slice(&[0.3, -0.2, 0.5]);
        let st = QuadratureState::new(labels, mean, cov).unwrap();

        let a = st
            .condition_on_outcome(LightS2c, 1.1)
            .unwrap()
            .marginal(&[AtomZPlus])
            .unwrap();
        let b = st
            .marginal(&[AtomZPlus, LightS2c])
            .unwrap()
            .condition_on_outcome(LightS2c, 1.1)
            .unwrap();
        assert!((a.mean_of(AtomZPlus).unwrap() - b.mean_of(AtomZPlus).unwrap()).abs() < 1e-12);
        assert!((a.var_of(AtomZPlus).unwrap() - b.var_of(AtomZPlus).unwrap()).abs() < 1e-12);
    }

    /// Law of total variance, Monte Carlo: Var(E[x|y]) + E[Var(x|y)] equals
    /// the prior Var(x).  The conditional variance is outcome-independent
    /// for Gaussians, so the check reduces to the empirical variance of the
    /// conditional means plus the (constant) posterior variance.
    #[test]
    fn law_of_total_variance_monte_carlo() {
        let st = two_mode(0.8, 0.6, 0.35);
        let mut rng = ChaCha8Rng::seed_from_u64(20260816);
        let n = 100_000;
        let mut means = Vec::with_capacity(n);
        let mut post_var = 0.0;
        for _ in 0..n {
            let (y, cond) = st.measure(LightS2c, &mut rng).unwrap();
            debug_assert!(y.is_finite());
            means.push(cond.mean_of(AtomZPlus).unwrap());
            post_var = cond.var_of(AtomZPlus).unwrap();
        }
        let m = means.iter().sum::<f64>() / n as f64;
        let v = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let total = v + post_var;
        let prior = st.var_of(AtomZPlus).unwrap();
        // Standard error of the explained-variance estimate.
        let se = v * (2.0 / n as f64).sqrt();
        assert!(
            (total - prior).abs() < 3.0 * se,
            "total {total} vs prior {prior} (3se {})",
            3.0 * se
        );
    }
}
