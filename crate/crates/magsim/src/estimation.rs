//! Estimators applied to shot ensembles: signal-to-noise and field
//! sensitivity, the entanglement criterion, the detected-noise budget,
//! calibration inversions, lifetime fits and temporal-mode optimization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{readout_response, PhysicsError, ProbeParams, ReadoutResponse};

#[derive(Debug, Error, PartialEq)]
pub enum EstimationError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("signal ensemble has zero spread")]
    DegenerateEnsemble,
    #[error(
        "efficiency-corrected noise total {0:.4} is below the shot floor 0.5; \
         detection-efficiency calibration is inconsistent with the data"
    )]
    BelowShotFloor(f64),
    #[error("lifetime fit needs at least 3 distinct sample times")]
    DegenerateFit,
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Sample mean and unbiased variance.
pub fn mean_and_variance(xs: &[f64]) -> Result<(f64, f64), EstimationError> {
    if xs.len() < 2 {
        return Err(EstimationError::TooFewSamples {
            need: 2,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var))
}

/// Signal-to-noise comparison of a displaced ensemble against a reference.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SnrReport {
    /// |mean difference| over the displaced ensemble's spread.
    pub snr: f64,
    /// Same numerator over the pooled spread of both ensembles.
    pub snr_pooled: f64,
    pub mean_signal: f64,
    pub mean_reference: f64,
    pub std_signal: f64,
    pub std_reference: f64,
    pub n_signal: usize,
    pub n_reference: usize,
}

/// Single-shot signal-to-noise ratio of a displaced ensemble against an
/// undriven reference: |mean_sig - mean_ref| / std_sig.
pub fn snr(signal: &[f64], reference: &[f64]) -> Result<SnrReport, EstimationError> {
    let (ms, vs) = mean_and_variance(signal)?;
    let (mr, vr) = mean_and_variance(reference)?;
    if vs <= 0.0 {
        return Err(EstimationError::DegenerateEnsemble);
    }
    let (ns, nr) = (signal.len() as f64, reference.len() as f64);
    let pooled = ((ns - 1.0) * vs + (nr - 1.0) * vr) / (ns + nr - 2.0);
    let num = (ms - mr).abs();
    Ok(SnrReport {
        snr: num / vs.sqrt(),
        snr_pooled: num / pooled.sqrt(),
        mean_signal: ms,
        mean_reference: mr,
        std_signal: vs.sqrt(),
        std_reference: vr.sqrt(),
        n_signal: signal.len(),
        n_reference: reference.len(),
    })
}

/// Field sensitivity from a single-shot SNR at drive amplitude `b_rf`
/// over a cycle of `cycle_time` seconds: b sqrt(t) / snr, in T / sqrt(Hz).
pub fn sensitivity(b_rf: f64, cycle_time: f64, snr: f64) -> Result<f64, EstimationError> {
    if !(snr.is_finite() && snr > 0.0) {
        return Err(EstimationError::InvalidParameter {
            name: "snr",
            value: snr,
            reason: "must be positive and finite",
        });
    }
    if !(cycle_time.is_finite() && cycle_time > 0.0) {
        return Err(EstimationError::InvalidParameter {
            name: "cycle_time",
            value: cycle_time,
            reason: "must be positive and finite",
        });
    }
    Ok(b_rf * cycle_time.sqrt() / snr)
}

/// Entanglement criterion for the two jointly measurable collective
/// quadratures: (var_z_plus + var_y_plus) normalized to the coherent-state
/// value; below 1 the cells are inseparable.
pub fn epr_criterion(var_z_plus: f64, var_y_plus: f64) -> f64 {
    var_z_plus + var_y_plus
}

/// Decomposition of the detected noise of a readout pulse into light and
/// atomic contributions, in shot units (both lock-in quadratures summed;
/// vacuum light = 1).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct NoiseBudget {
    /// Efficiency-corrected detected total.
    pub total_shot_units: f64,
    /// Transmitted-light term of the exact decomposition: t^2 = 1 - xi^2 kappa^2.
    pub light_shot_units: f64,
    /// total - light, clipped at zero.
    pub atomic_shot_units: f64,
    /// Atomic term over kappa^2: the inferred joint spin variance sum in
    /// coherent-state units (1 for an unsqueezed ensemble).
    pub atomic_css_units: f64,
    /// (total - 0.5) / kappa^2: the flat-light convention that books the
    /// light at half a shot unit regardless of coupling.  It overshoots
    /// the exact value by (t^2 - 0.5) / kappa^2.
    pub atomic_css_simplified: f64,
}

/// Build the noise budget from the raw (detected) variances of the two
/// lock-in quadratures of one readout pulse.  The detection-loss vacuum is
/// removed first: corrected = (raw - (1 - eta)/2) / eta per quadrature.
pub fn noise_budget(
    raw_var_s2c: f64,
    raw_var_s2s: f64,
    probe: &ProbeParams,
) -> Result<NoiseBudget, EstimationError> {
    probe.validate()?;
    let eta = probe.efficiency;
    let corr = |raw: f64| (raw - (1.0 - eta) * 0.5) / eta;
    let total = corr(raw_var_s2c) + corr(raw_var_s2s);
    if total < 0.5 {
        return Err(EstimationError::BelowShotFloor(total));
    }
    let kappa_sq = probe.coupling().powi(2);
    if kappa_sq <= 0.0 {
        return Err(EstimationError::InvalidParameter {
            name: "kappa_squared",
            value: kappa_sq,
            reason: "noise budget needs a coupled probe",
        });
    }
    let t_sq = probe.transmission().powi(2);
    let atomic = (total - t_sq).max(0.0);
    Ok(NoiseBudget {
        total_shot_units: total,
        light_shot_units: t_sq,
        atomic_shot_units: atomic,
        atomic_css_units: atomic / kappa_sq,
        atomic_css_simplified: (total - 0.5) / kappa_sq,
    })
}

/// Invert the readout's mean transfer to estimate the atomic displacement
/// that produced a mean detected outcome: delta = mean / (sqrt(eta) kappa).
pub fn displacement_from_outcome(
    mean_outcome: f64,
    kappa: f64,
    efficiency: f64,
) -> Result<f64, EstimationError> {
    if !(kappa > 0.0 && efficiency > 0.0) {
        return Err(EstimationError::InvalidParameter {
            name: "kappa or efficiency",
            value: kappa.min(efficiency),
            reason: "must be positive",
        });
    }
    Ok(mean_outcome / (efficiency.sqrt() * kappa))
}

/// Least-squares slope of y on x: Cov(x, y) / Var(x).  Used to correct a
/// readout with the outcome of an earlier entangling pulse.
pub fn regression_slope(y: &[f64], x: &[f64]) -> Result<f64, EstimationError> {
    if y.len() != x.len() {
        return Err(EstimationError::TooFewSamples {
            need: x.len(),
            got: y.len(),
        });
    }
    let (mx, vx) = mean_and_variance(x)?;
    let (my, _) = mean_and_variance(y)?;
    if vx <= 0.0 {
        return Err(EstimationError::DegenerateEnsemble);
    }
    let n = x.len() as f64;
    let cov = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (n - 1.0);
    Ok(cov / vx)
}

/// y - beta x per shot, leaving the mean signal of y intact when x has
/// zero mean.
pub fn subtract_scaled(y: &[f64], x: &[f64], beta: f64) -> Vec<f64> {
    y.iter().zip(x).map(|(&b, &a)| b - beta * a).collect()
}

/// Estimate kappa^2 from the second-pulse s2s outcomes of the two-pulse
/// calibration: kappa^2 = mean sqrt(2) / (sqrt(eta) strength).
pub fn coupling_calibration(
    s2s_outcomes: &[f64],
    strength: f64,
    efficiency: f64,
) -> Result<Estimate, EstimationError> {
    if strength == 0.0 || !strength.is_finite() {
        return Err(EstimationError::InvalidParameter {
            name: "strength",
            value: strength,
            reason: "must be nonzero and finite",
        });
    }
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(EstimationError::InvalidParameter {
            name: "efficiency",
            value: efficiency,
            reason: "must lie in (0, 1]",
        });
    }
    let (mean, var) = mean_and_variance(s2s_outcomes)?;
    let scale = std::f64::consts::SQRT_2 / (efficiency.sqrt() * strength);
    Ok(Estimate {
        value: mean * scale,
        std_error: (var / s2s_outcomes.len() as f64).sqrt() * scale.abs(),
    })
}

/// Result of fitting V(t) = floor - amplitude exp(-t / lifetime).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LifetimeFit {
    pub floor: f64,
    pub amplitude: f64,
    pub lifetime: f64,
    pub rms_residual: f64,
}

impl LifetimeFit {
    pub fn value_at(&self, t: f64) -> f64 {
        self.floor - self.amplitude * (-t / self.lifetime).exp()
    }
}

/// Linear least squares in (floor, amplitude) for a fixed lifetime;
/// returns (sse, floor, amplitude), or infinity when the basis is
/// degenerate at this lifetime.
fn lifetime_sse(times: &[f64], values: &[f64], lifetime: f64) -> (f64, f64, f64) {
    let n = times.len() as f64;
    let e: Vec<f64> = times.iter().map(|&t| (-t / lifetime).exp()).collect();
    let se: f64 = e.iter().sum();
    let see: f64 = e.iter().map(|x| x * x).sum();
    let sy: f64 = values.iter().sum();
    let sey: f64 = e.iter().zip(values).map(|(x, y)| x * y).sum();
    let det = n * see - se * se;
    if det.abs() < 1e-12 * (n * see).max(1e-300) {
        return (f64::INFINITY, 0.0, 0.0);
    }
    let b = (n * sey - se * sy) / det;
    let a = (sy - b * se) / n;
    let sse: f64 = e
        .iter()
        .zip(values)
        .map(|(x, y)| (y - a - b * x).powi(2))
        .sum();
    (sse, a, -b)
}

/// Fit V(t) = floor - amplitude exp(-t / lifetime) by separable least
/// squares: golden-section search on the lifetime (log scale), exact
/// linear solve for floor and amplitude at each step.
pub fn fit_exponential_lifetime(
    times: &[f64],
    values: &[f64],
) -> Result<LifetimeFit, EstimationError> {
    if times.len() != values.len() || times.len() < 3 {
        return Err(EstimationError::TooFewSamples {
            need: 3,
            got: times.len().min(values.len()),
        });
    }
    if times.iter().chain(values).any(|x| !x.is_finite()) {
        return Err(EstimationError::InvalidParameter {
            name: "samples",
            value: f64::NAN,
            reason: "must be finite",
        });
    }
    let t_min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = t_max - t_min;
    if !(span.is_finite() && span > 0.0) {
        return Err(EstimationError::DegenerateFit);
    }
    let mut distinct = times.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(EstimationError::DegenerateFit);
    }

    let (mut lo, mut hi) = ((span * 1e-3).ln(), (span * 1e3).ln());
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = lifetime_sse(times, values, x1.exp()).0;
    let mut f2 = lifetime_sse(times, values, x2.exp()).0;
    for _ in 0..200 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = lifetime_sse(times, values, x1.exp()).0;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = lifetime_sse(times, values, x2.exp()).0;
        }
    }
    let lifetime = (0.5 * (lo + hi)).exp();
    let (sse, floor, amplitude) = lifetime_sse(times, values, lifetime);
    if !sse.is_finite() {
        return Err(EstimationError::DegenerateFit);
    }
    Ok(LifetimeFit {
        floor,
        amplitude,
        lifetime,
        rms_residual: (sse / times.len() as f64).sqrt(),
    })
}

/// Detected signal-to-noise kernel of a readout pulse per unit atomic
/// displacement: sqrt(eta) G / sqrt(Var_detected), with
/// Var_detected = eta (G^2 V_atom + Var_shot + Var_extra) + (1 - eta) / 2.
pub fn detected_snr_core(resp: &ReadoutResponse, atom_var: f64, efficiency: f64) -> f64 {
    let var_det = efficiency * (resp.gain * resp.gain * atom_var + resp.var_shot + resp.var_extra)
        + (1.0 - efficiency) * 0.5;
    efficiency.sqrt() * resp.gain / var_det.sqrt()
}

/// The best falling temporal mode over a decay-rate grid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModeOptimum {
    pub gamma: f64,
    pub snr_core: f64,
    /// (mode decay rate, snr core) over the whole grid.
    pub curve: Vec<(f64, f64)>,
}

/// Scan the falling-mode decay rate over a uniform grid and return the
/// maximizer of the detected SNR kernel.  Ties keep the smallest rate.
/// At least 15 grid points are required to resolve the broad optimum.
pub fn optimize_mode_gamma(
    probe: &ProbeParams,
    atom_var: f64,
    diffusion_floor: f64,
    gamma_lo: f64,
    gamma_hi: f64,
    n_grid: usize,
) -> Result<ModeOptimum, EstimationError> {
    if n_grid < 15 {
        return Err(EstimationError::InvalidParameter {
            name: "n_grid",
            value: n_grid as f64,
            reason: "need at least 15 grid points",
        });
    }
    if !(gamma_lo > 0.0 && gamma_hi > gamma_lo) {
        return Err(EstimationError::InvalidParameter {
            name: "gamma range",
            value: gamma_lo,
            reason: "need 0 < gamma_lo < gamma_hi",
        });
    }
    let step = (gamma_hi - gamma_lo) / (n_grid - 1) as f64;
    let mut curve = Vec::with_capacity(n_grid);
    let mut best = (gamma_lo, f64::NEG_INFINITY);
    for i in 0..n_grid {
        let gamma = gamma_lo + i as f64 * step;
        let resp = readout_response(probe, gamma, diffusion_floor)?;
        let core = detected_snr_core(&resp, atom_var, probe.efficiency);
        curve.push((gamma, core));
        if core > best.1 {
            best = (gamma, core);
        }
    }
    Ok(ModeOptimum {
        gamma: best.0,
        snr_core: best.1,
        curve,
    })
}
