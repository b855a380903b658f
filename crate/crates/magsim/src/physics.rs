//! Physical parameters of the two-cell magnetometer and the Gaussian
//! channels they generate.
//!
//! Everything is expressed in the scaled quadrature units of
//! [`crate::modes`]: a coherent spin state or a vacuum light pulse has
//! variance 1/2 per quadrature.  Internally all quantities are SI
//! (seconds, Tesla, rates in 1/s); the formulas only ever depend on
//! dimensionless products like `gamma * duration`, so tests may use
//! millisecond units as long as they are consistent.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::gaussian::{AffineChannel, VACUUM_VAR};
use crate::modes::ModeLabel;

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("state is missing required mode {0}")]
    MissingMode(ModeLabel),
    #[error("state holds both summed-cell and single-cell atomic modes")]
    AmbiguousCellConfiguration,
    #[error("operation requires the two-cell configuration")]
    RequiresTwoCells,
}

fn check_positive(name: &'static str, value: f64) -> Result<(), PhysicsError> {
    if !(value.is_finite() && value > 0.0) {
        return Err(PhysicsError::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        });
    }
    Ok(())
}

fn check_non_negative(name: &'static str, value: f64) -> Result<(), PhysicsError> {
    if !(value.is_finite() && value >= 0.0) {
        return Err(PhysicsError::InvalidParameter {
            name,
            value,
            reason: "must be non-negative and finite",
        });
    }
    Ok(())
}

/// Atom-species constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PhysicalConstants {
    /// Gyromagnetic ratio, rad / (s T).
    pub gyromagnetic_ratio: f64,
    /// Total angular momentum of the relevant hyperfine ground manifold.
    pub spin_f: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        // Cesium F = 4 ground manifold.
        PhysicalConstants {
            gyromagnetic_ratio: 2.2e10,
            spin_f: 4.0,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        check_positive("gyromagnetic_ratio", self.gyromagnetic_ratio)?;
        check_positive("spin_f", self.spin_f)
    }
}

/// The atomic ensembles: one or two oppositely pumped cells.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct EnsembleParams {
    /// 1 or 2.  Two cells give the back-action-evading configuration.
    pub n_cells: usize,
    /// Atoms per cell.
    pub atoms_per_cell: f64,
    /// Spin coherence time in the dark, seconds.
    pub t2_dark: f64,
    /// Fractional excess of the initial (and equilibrium) spin variance
    /// over the coherent-state value: Var = (1 + thermal_excess) / 2.
    pub thermal_excess: f64,
}

impl EnsembleParams {
    pub fn n_total(&self) -> f64 {
        self.n_cells as f64 * self.atoms_per_cell
    }

    /// Variance each atomic quadrature is pumped to, and decays back
    /// towards: (1 + thermal_excess) / 2.
    pub fn equilibrium_var(&self) -> f64 {
        (1.0 + self.thermal_excess) * VACUUM_VAR
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if self.n_cells != 1 && self.n_cells != 2 {
            return Err(PhysicsError::InvalidParameter {
                name: "n_cells",
                value: self.n_cells as f64,
                reason: "must be 1 or 2",
            });
        }
        check_positive("atoms_per_cell", self.atoms_per_cell)?;
        check_positive("t2_dark", self.t2_dark)?;
        check_non_negative("thermal_excess", self.thermal_excess)
    }
}

/// One stroboscopic probe pulse.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ProbeParams {
    /// Swap (measurement) rate, 1/s.
    pub gamma_swap: f64,
    /// Probe-induced extra atomic decoherence rate, 1/s.
    pub gamma_extra: f64,
    /// Pulse duration, seconds.
    pub duration: f64,
    /// Broadening factor of the back-action quadrature; 1 is the
    /// unbroadened limit.
    pub xi_squared: f64,
    /// Photodetection efficiency in (0, 1].
    pub efficiency: f64,
}

impl ProbeParams {
    /// Field transmission of the pulse, t = exp(-gamma_swap * duration).
    pub fn transmission(&self) -> f64 {
        pass_transmission(self.gamma_swap, self.duration)
    }

    /// Coupling constant kappa accumulated over the pulse.
    pub fn coupling(&self) -> f64 {
        coupling_constant(self.gamma_swap, self.duration, self.xi_squared)
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        check_non_negative("gamma_swap", self.gamma_swap)?;
        check_non_negative("gamma_extra", self.gamma_extra)?;
        check_positive("duration", self.duration)?;
        check_positive("xi_squared", self.xi_squared)?;
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(PhysicsError::InvalidParameter {
                name: "efficiency",
                value: self.efficiency,
                reason: "must lie in (0, 1]",
            });
        }
        Ok(())
    }
}

/// A resonant radio-frequency drive applied for a fixed window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct RfPulse {
    /// RF field amplitude, Tesla.
    pub amplitude: f64,
    /// Drive window, seconds.
    pub duration: f64,
    /// Drive phase: 0 displaces the z quadrature, pi/2 the y quadrature.
    pub phase: f64,
}

impl RfPulse {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        check_non_negative("rf amplitude", self.amplitude)?;
        check_positive("rf duration", self.duration)?;
        if !self.phase.is_finite() {
            return Err(PhysicsError::InvalidParameter {
                name: "rf phase",
                value: self.phase,
                reason: "must be finite",
            });
        }
        Ok(())
    }
}

/// Larmor precession frequency in Hz for a static field `b_dc` (Tesla).
pub fn larmor_frequency(constants: &PhysicalConstants, b_dc: f64) -> f64 {
    constants.gyromagnetic_ratio * b_dc / (2.0 * PI)
}

/// Back-action broadening factor from the tensor-to-vector polarizability
/// ratio of the probe detuning: xi^2 = 14 * ratio.
pub fn xi_squared(polarizability_ratio: f64) -> f64 {
    14.0 * polarizability_ratio
}

/// Field transmission t = exp(-gamma_swap * duration).
pub fn pass_transmission(gamma_swap: f64, duration: f64) -> f64 {
    (-gamma_swap * duration).exp()
}

/// Coupling constant kappa of a probe pulse, defined through
/// xi^2 kappa^2 + t^2 = 1 with t the transmission.
pub fn coupling_constant(gamma_swap: f64, duration: f64, xi_squared: f64) -> f64 {
    let t = pass_transmission(gamma_swap, duration);
    ((1.0 - t * t) / xi_squared).sqrt()
}

/// Swap rate that produces a given kappa^2 for a pulse of `duration`.
/// Inverse of [`coupling_constant`].
pub fn swap_rate_for_coupling(
    kappa_squared: f64,
    xi_squared: f64,
    duration: f64,
) -> Result<f64, PhysicsError> {
    check_positive("duration", duration)?;
    check_positive("xi_squared", xi_squared)?;
    let t2 = 1.0 - xi_squared * kappa_squared;
    if !(t2 > 0.0 && t2 <= 1.0) {
        return Err(PhysicsError::InvalidParameter {
            name: "kappa_squared",
            value: kappa_squared,
            reason: "xi^2 kappa^2 must lie in [0, 1)",
        });
    }
    Ok(-t2.ln() / (2.0 * duration))
}

fn index_of(labels: &[ModeLabel], mode: ModeLabel) -> Result<usize, PhysicsError> {
    labels
        .iter()
        .position(|l| *l == mode)
        .ok_or(PhysicsError::MissingMode(mode))
}

/// One stroboscopic Faraday pass of a probe pulse through the cells.
///
/// The cell configuration is inferred from the atomic labels present.
/// Two cells (summed/differenced modes): with t the transmission,
/// kappa the coupling and xi^2 the broadening factor,
///
/// ```text
/// z+ -> t z+ - xi^2 kappa s2c        s2c -> t s2c + kappa z+
/// y+ -> t y+ - xi^2 kappa s2s        s2s -> t s2s + kappa y+
/// y- -> t y- + kappa s3c             s3c -> t s3c - xi^2 kappa y-
/// z- -> t z-  (+ vacuum back-action noise kappa^2 / 2)
/// ```
///
/// The z- quadrature couples to the undetected sine component of the third
/// Stokes quadrature; that mode is not tracked, so its influence enters as
/// added noise and z- carries no correlation with the detected light.  The
/// map on the tracked conjugate pairs (z+, y-) and (s2c, s3c) is exactly
/// symplectic because xi^2 kappa^2 + t^2 = 1.
///
/// One cell (qualitative, no back-action evasion): both atomic quadratures
/// couple to the detected light and each absorbs back-action noise
/// kappa^2 / 4; the undetected Stokes component is returned attenuated with
/// vacuum refill.
pub fn faraday_pass(
    labels: &[ModeLabel],
    probe: &ProbeParams,
) -> Result<AffineChannel, PhysicsError> {
    probe.validate()?;
    let two_cell = labels.contains(&ModeLabel::AtomZPlus)
        || labels.contains(&ModeLabel::AtomYPlus)
        || labels.contains(&ModeLabel::AtomZMinus)
        || labels.contains(&ModeLabel::AtomYMinus);
    let one_cell = labels.contains(&ModeLabel::AtomZ) || labels.contains(&ModeLabel::AtomY);
    if two_cell && one_cell {
        return Err(PhysicsError::AmbiguousCellConfiguration);
    }
    if !two_cell && !one_cell {
        return Err(PhysicsError::MissingMode(ModeLabel::AtomZPlus));
    }

    let n = labels.len();
    let t = probe.transmission();
    let kappa = probe.coupling();
    let xi2 = probe.xi_squared;
    let mut m = DMatrix::identity(n, n);
    let mut d = DMatrix::zeros(n, n);

    let s2c = index_of(labels, ModeLabel::LightS2c)?;
    let s2s = index_of(labels, ModeLabel::LightS2s)?;
    let s3c = index_of(labels, ModeLabel::LightS3c)?;

    if two_cell {
        let zp = index_of(labels, ModeLabel::AtomZPlus)?;
        let yp = index_of(labels, ModeLabel::AtomYPlus)?;
        let zm = index_of(labels, ModeLabel::AtomZMinus)?;
        let ym = index_of(labels, ModeLabel::AtomYMinus)?;

        m[(zp, zp)] = t;
        m[(zp, s2c)] = -xi2 * kappa;
        m[(s2c, s2c)] = t;
        m[(s2c, zp)] = kappa;

        m[(yp, yp)] = t;
        m[(yp, s2s)] = -xi2 * kappa;
        m[(s2s, s2s)] = t;
        m[(s2s, yp)] = kappa;

        m[(ym, ym)] = t;
        m[(ym, s3c)] = kappa;
        m[(s3c, s3c)] = t;
        m[(s3c, ym)] = -xi2 * kappa;

        m[(zm, zm)] = t;
        d[(zm, zm)] = kappa * kappa * VACUUM_VAR;
    } else {
        let z = index_of(labels, ModeLabel::AtomZ)?;
        let y = index_of(labels, ModeLabel::AtomY)?;

        m[(z, z)] = t;
        m[(z, s2c)] = -xi2 * kappa;
        m[(s2c, s2c)] = t;
        m[(s2c, z)] = kappa;

        m[(y, y)] = t;
        m[(y, s2s)] = -xi2 * kappa;
        m[(s2s, s2s)] = t;
        m[(s2s, y)] = kappa;

        d[(z, z)] = kappa * kappa * VACUUM_VAR / 2.0;
        d[(y, y)] = kappa * kappa * VACUUM_VAR / 2.0;

        m[(s3c, s3c)] = t;
        d[(s3c, s3c)] = (1.0 - t * t) * VACUUM_VAR;
    }

    Ok(AffineChannel {
        matrix: m,
        offset: DVector::zeros(n),
        added_noise: d,
    })
}

/// A pi rotation of the second cell about the pump axis, exchanging the
/// summed and differenced collective modes: y+ <-> y-, z+ <-> z-.
/// The operation is its own inverse.
pub fn spin_flip(labels: &[ModeLabel]) -> Result<AffineChannel, PhysicsError> {
    if labels.contains(&ModeLabel::AtomZ) || labels.contains(&ModeLabel::AtomY) {
        return Err(PhysicsError::RequiresTwoCells);
    }
    let zp = index_of(labels, ModeLabel::AtomZPlus)?;
    let yp = index_of(labels, ModeLabel::AtomYPlus)?;
    let zm = index_of(labels, ModeLabel::AtomZMinus)?;
    let ym = index_of(labels, ModeLabel::AtomYMinus)?;
    let n = labels.len();
    let mut m = DMatrix::identity(n, n);
    m[(zp, zp)] = 0.0;
    m[(zm, zm)] = 0.0;
    m[(zp, zm)] = 1.0;
    m[(zm, zp)] = 1.0;
    m[(yp, yp)] = 0.0;
    m[(ym, ym)] = 0.0;
    m[(yp, ym)] = 1.0;
    m[(ym, yp)] = 1.0;
    Ok(AffineChannel {
        matrix: m,
        offset: DVector::zeros(n),
        added_noise: DMatrix::zeros(n, n),
    })
}

/// Relaxation of every atomic mode towards `floor_var` at rate `gamma` for
/// a time `dt`: mean *= exp(-gamma dt),
/// Var -> exp(-2 gamma dt) Var + (1 - exp(-2 gamma dt)) floor_var.
/// Light modes are untouched.
pub fn decoherence_channel(
    labels: &[ModeLabel],
    gamma: f64,
    dt: f64,
    floor_var: f64,
) -> Result<AffineChannel, PhysicsError> {
    check_non_negative("gamma", gamma)?;
    check_non_negative("dt", dt)?;
    check_non_negative("floor_var", floor_var)?;
    let n = labels.len();
    let damp = (-gamma * dt).exp();
    let mut m = DMatrix::identity(n, n);
    let mut d = DMatrix::zeros(n, n);
    for (i, l) in labels.iter().enumerate() {
        if l.is_atomic() {
            m[(i, i)] = damp;
            d[(i, i)] = (1.0 - damp * damp) * floor_var;
        }
    }
    Ok(AffineChannel {
        matrix: m,
        offset: DVector::zeros(n),
        added_noise: d,
    })
}

/// Photodetection loss on every light mode: a beamsplitter of transmission
/// `efficiency` with vacuum in the open port.  Atomic modes are untouched.
pub fn detection_loss(labels: &[ModeLabel], efficiency: f64) -> Result<AffineChannel, PhysicsError> {
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(PhysicsError::InvalidParameter {
            name: "efficiency",
            value: efficiency,
            reason: "must lie in (0, 1]",
        });
    }
    let n = labels.len();
    let mut m = DMatrix::identity(n, n);
    let mut d = DMatrix::zeros(n, n);
    for (i, l) in labels.iter().enumerate() {
        if l.is_light() {
            m[(i, i)] = efficiency.sqrt();
            d[(i, i)] = (1.0 - efficiency) * VACUUM_VAR;
        }
    }
    Ok(AffineChannel {
        matrix: m,
        offset: DVector::zeros(n),
        added_noise: d,
    })
}

/// Mean quadrature displacement accumulated by a resonant RF pulse,
/// accounting for decay during the drive window:
///
/// delta = gamma_gyro * B * sqrt(F N_total) * tau_eff / 2, with
/// tau_eff = T2 (1 - exp(-duration / T2)).
///
/// Returns (dz, dy) = delta * (cos phase, sin phase) in scaled quadrature
/// units; in the two-cell configuration the drive acts on the summed modes.
pub fn rf_displacement(
    constants: &PhysicalConstants,
    ensemble: &EnsembleParams,
    pulse: &RfPulse,
) -> Result<(f64, f64), PhysicsError> {
    constants.validate()?;
    ensemble.validate()?;
    pulse.validate()?;
    let tau_eff = ensemble.t2_dark * (1.0 - (-pulse.duration / ensemble.t2_dark).exp());
    let delta = constants.gyromagnetic_ratio
        * pulse.amplitude
        * (constants.spin_f * ensemble.n_total()).sqrt()
        * tau_eff
        / 2.0;
    Ok((delta * pulse.phase.cos(), delta * pulse.phase.sin()))
}

/// Projection-noise-limited performance of an RF measurement window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PnLimit {
    /// Smallest resolvable field in one window: the RF amplitude whose
    /// displacement equals the coherent-state spread sqrt(1/2).
    pub b_min: f64,
    /// b_min * sqrt(duration), in T / sqrt(Hz).
    pub sensitivity: f64,
    /// Decay-corrected accumulation time T2 (1 - exp(-duration / T2)).
    pub effective_duration: f64,
}

/// Projection-noise-limited sensitivity of an RF window of `duration`.
pub fn pn_limited_sensitivity(
    constants: &PhysicalConstants,
    ensemble: &EnsembleParams,
    duration: f64,
) -> Result<PnLimit, PhysicsError> {
    constants.validate()?;
    ensemble.validate()?;
    check_positive("duration", duration)?;
    let tau_eff = ensemble.t2_dark * (1.0 - (-duration / ensemble.t2_dark).exp());
    let b_min = std::f64::consts::SQRT_2
        / (constants.gyromagnetic_ratio * (constants.spin_f * ensemble.n_total()).sqrt() * tau_eff);
    Ok(PnLimit {
        b_min,
        sensitivity: b_min * duration.sqrt(),
        effective_duration: tau_eff,
    })
}

/// Variance of one detected lock-in quadrature when a probe pulse in
/// vacuum reads out an atomic quadrature of variance `atom_var`.
///
/// Half the probe broadening acts before the pass (relaxing the atoms
/// toward `equilibrium_var` by exp(-gamma_extra duration)), then the pass
/// imprints kappa^2 times the atomic variance on top of the transmitted
/// shot noise t^2/2, and detection loss mixes in (1 - eta)/2 of vacuum.
/// This is the exact detected variance of the stroboscopic protocol
/// pipeline, useful for deterministic noise predictions.
pub fn detected_quadrature_variance(
    probe: &ProbeParams,
    atom_var: f64,
    equilibrium_var: f64,
) -> f64 {
    let f = (-probe.gamma_extra * probe.duration).exp();
    let v_pre = f * atom_var + (1.0 - f) * equilibrium_var;
    let t = probe.transmission();
    let k = probe.coupling();
    let eta = probe.efficiency;
    eta * (t * t * VACUUM_VAR + k * k * v_pre) + (1.0 - eta) * VACUUM_VAR
}

/// Mean and noise transfer of a continuous readout pulse demodulated with a
/// falling exponential temporal mode exp(-mode_gamma t), normalized over
/// the pulse duration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ReadoutResponse {
    /// Mean transfer from the initial atomic quadrature to the detected
    /// mode (before detection loss).
    pub gain: f64,
    /// Detected-mode variance fed by input light shot noise.
    pub var_shot: f64,
    /// Detected-mode variance fed by probe-induced atomic diffusion.
    pub var_extra: f64,
    /// Normalization amplitude of the temporal mode.
    pub mode_amp: f64,
}

/// Exact mode-overlap integrals for a readout pulse whose atomic input
/// decays at gamma_total = gamma_swap + gamma_extra while being read out at
/// gamma_swap, demodulated with the falling mode exp(-mode_gamma t).
///
/// At gamma_extra = 0 and mode_gamma = gamma_swap this reduces exactly to
/// the stroboscopic pass: gain = kappa, var_shot = t^2 / 2.
pub fn readout_response(
    probe: &ProbeParams,
    mode_gamma: f64,
    diffusion_floor: f64,
) -> Result<ReadoutResponse, PhysicsError> {
    probe.validate()?;
    check_positive("mode_gamma", mode_gamma)?;
    check_non_negative("diffusion_floor", diffusion_floor)?;

    let gs = probe.gamma_swap;
    let ge = probe.gamma_extra;
    let gt = gs + ge;
    let gm = mode_gamma;
    let t_len = probe.duration;
    let xi = probe.xi_squared.sqrt();

    // Falling-mode normalization: integral of amp^2 e^(-2 gm t) over the
    // pulse is 1.
    let amp2 = 2.0 * gm / (-(-2.0 * gm * t_len).exp_m1());
    let amp = amp2.sqrt();

    let gain = ((2.0 * gs).sqrt() / xi) * amp * (-(-(gt + gm) * t_len).exp_m1()) / (gt + gm);

    // Shot-noise throughput: the input light both passes directly to the
    // detector and is written onto the atoms and read back out.
    let alpha = if gt + gm > 0.0 { 2.0 * gs / (gt + gm) } else { 0.0 };
    let u = 1.0 - alpha;
    let i_direct = (-(-2.0 * gm * t_len).exp_m1()) / (2.0 * gm);
    let near_degenerate = (gm - gt).abs() <= 1e-9 * gm.max(gt).max(1.0 / t_len);
    let var_shot = if alpha == 0.0 {
        amp2 / 2.0 * i_direct
    } else {
        let i_cross = if near_degenerate {
            (-2.0 * gt * t_len).exp() * t_len
        } else {
            ((-(gt + gm) * t_len).exp() - (-2.0 * gm * t_len).exp()) / (gm - gt)
        };
        let i_mem = if gt > 0.0 {
            (-2.0 * (gt + gm) * t_len).exp() * ((2.0 * gt * t_len).exp_m1()) / (2.0 * gt)
        } else {
            0.0
        };
        amp2 / 2.0 * (u * u * i_direct + 2.0 * u * alpha * i_cross + alpha * alpha * i_mem)
    };

    // Diffusion from the probe-induced decoherence, filtered through the
    // readout and the temporal mode.
    let var_extra = if ge == 0.0 || gs == 0.0 {
        0.0
    } else {
        let j_cross = if near_degenerate {
            2.0 * (-(gt + gm) * t_len).exp() * t_len
        } else {
            2.0 * (-(gt + gm) * t_len).exp() * (((gt - gm) * t_len).exp_m1()) / (gt - gm)
        };
        let j_mem = (-2.0 * (gt + gm) * t_len).exp() * ((2.0 * gt * t_len).exp_m1()) / (2.0 * gt);
        (2.0 * gs / (xi * xi)) * amp2 * (2.0 * ge * diffusion_floor) / ((gt + gm) * (gt + gm))
            * (i_direct - j_cross + j_mem)
    };

    Ok(ReadoutResponse {
        gain,
        var_shot,
        var_extra,
        mode_amp: amp,
    })
}
