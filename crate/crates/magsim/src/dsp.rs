//! Time-domain signal chain: photocurrent records at the Larmor carrier,
//! temporal-mode lock-in demodulation, and power spectra.
//!
//! Records are kept in shot-normalized units: with the default photon rate
//! (equal to the sample rate) each sample carries white shot noise of
//! variance 1/2, so demodulating plain shot noise with any normalized
//! temporal mode returns a quadrature of variance 1/2 — the vacuum value
//! used everywhere else in the library.
//!
//! Sample times are bin centers, `t_k = (k + 1/2) dt`.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::physics::ProbeParams;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("carrier {carrier} Hz too fast for sample rate {rate} Hz (need rate > 2 carrier)")]
    NyquistViolation { carrier: f64, rate: f64 },
    #[error("time series of {0} samples is too short")]
    TooShort(usize),
}

fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<(), DspError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(DspError::InvalidParameter {
            name,
            value,
            reason,
        })
    }
}

/// Uniform sampling grid for one probe pulse at a carrier frequency.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PulseSampling {
    /// Lock-in carrier (Larmor) frequency, Hz.
    pub carrier_hz: f64,
    /// Sample rate, Hz.
    pub sample_rate: f64,
    /// Pulse duration, seconds.
    pub duration: f64,
}

/// Default oversampling of the carrier by the digitizer.
pub const DEFAULT_CARRIER_OVERSAMPLING: f64 = 16.0;

pub fn default_sample_rate(carrier_hz: f64) -> f64 {
    DEFAULT_CARRIER_OVERSAMPLING * carrier_hz
}

impl PulseSampling {
    pub fn validate(&self) -> Result<(), DspError> {
        check("carrier_hz", self.carrier_hz, self.carrier_hz > 0.0, "must be positive")?;
        check("sample_rate", self.sample_rate, self.sample_rate > 0.0, "must be positive")?;
        check("duration", self.duration, self.duration > 0.0, "must be positive")?;
        if self.sample_rate <= 2.0 * self.carrier_hz {
            return Err(DspError::NyquistViolation {
                carrier: self.carrier_hz,
                rate: self.sample_rate,
            });
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn n_samples(&self) -> usize {
        ((self.sample_rate * self.duration).round() as usize).max(2)
    }

    /// Bin-center sample times.
    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.n_samples()).map(|k| (k as f64 + 0.5) * dt).collect()
    }
}

/// Exponential temporal envelope over a pulse: flat, falling (weights the
/// start of the pulse) or rising (weights the end).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ModeFunction {
    /// Decay rate of the envelope, 1/s; 0 gives a flat mode.
    pub gamma: f64,
    /// Rising envelope exp(-gamma (T - t)) instead of exp(-gamma t).
    pub rising: bool,
}

impl ModeFunction {
    pub fn flat() -> Self {
        ModeFunction {
            gamma: 0.0,
            rising: false,
        }
    }

    pub fn falling(gamma: f64) -> Self {
        ModeFunction {
            gamma,
            rising: false,
        }
    }

    pub fn rising(gamma: f64) -> Self {
        ModeFunction {
            gamma,
            rising: true,
        }
    }

    /// Unnormalized envelope value at time `t` into a pulse of `duration`.
    pub fn shape(&self, t: f64, duration: f64) -> f64 {
        if self.rising {
            (-self.gamma * (duration - t)).exp()
        } else {
            (-self.gamma * t).exp()
        }
    }

    /// Discrete demodulation weights `w_k` over the sampling grid,
    /// normalized so that the sum of squares is exactly 1: white
    /// per-sample noise of variance v demodulates to variance v.
    pub fn weights(&self, s: &PulseSampling) -> Result<Vec<f64>, DspError> {
        check("mode gamma", self.gamma, self.gamma >= 0.0, "must be non-negative")?;
        s.validate()?;
        let duration = s.duration;
        let mut w: Vec<f64> = s
            .times()
            .iter()
            .map(|&t| self.shape(t, duration))
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(DspError::InvalidParameter {
                name: "mode gamma",
                value: self.gamma,
                reason: "envelope underflows to zero over the pulse",
            });
        }
        for x in w.iter_mut() {
            *x /= norm;
        }
        Ok(w)
    }
}

/// A uniformly sampled photocurrent record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TimeSeries {
    /// Sample rate, Hz.
    pub sample_rate: f64,
    pub samples: Vec<f64>,
}

impl TimeSeries {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

/// Build a photocurrent record carrying one pair of quadratures on the
/// carrier, shaped by the temporal mode, plus white shot noise:
///
/// ```text
/// i_k = (a_c sqrt(2) cos(W t_k) + a_s sqrt(2) sin(W t_k)) w_k + shot_k
/// ```
///
/// where `(a_c, a_s)` are drawn from independent normals with the given
/// means and variances, `w_k` are the normalized mode weights, and each
/// `shot_k` has variance `photon_rate / (2 sample_rate)` (variance 1/2 at
/// the default `photon_rate = sample_rate`).  Demodulating with the same
/// mode recovers `(a_c, a_s)` at unit gain plus a vacuum's worth of shot
/// noise, up to the residual ripple of the finite sampling grid.
pub fn synthesize_photocurrent<R: Rng + ?Sized>(
    s: &PulseSampling,
    mode: &ModeFunction,
    mean: (f64, f64),
    var: (f64, f64),
    photon_rate: Option<f64>,
    rng: &mut R,
) -> Result<TimeSeries, DspError> {
    check("quadrature variance", var.0, var.0 >= 0.0, "must be non-negative")?;
    check("quadrature variance", var.1, var.1 >= 0.0, "must be non-negative")?;
    let rate = photon_rate.unwrap_or(s.sample_rate);
    check("photon_rate", rate, rate >= 0.0, "must be non-negative")?;
    let w = mode.weights(s)?;
    let shot_sd = (rate / (2.0 * s.sample_rate)).sqrt();
    let omega = 2.0 * PI * s.carrier_hz;
    let zc: f64 = rng.sample(StandardNormal);
    let zs: f64 = rng.sample(StandardNormal);
    let a_c = mean.0 + var.0.sqrt() * zc;
    let a_s = mean.1 + var.1.sqrt() * zs;
    let samples = s
        .times()
        .iter()
        .zip(w.iter())
        .map(|(&t, &wk)| {
            let carrier = a_c * (omega * t).cos() + a_s * (omega * t).sin();
            let shot: f64 = rng.sample(StandardNormal);
            std::f64::consts::SQRT_2 * carrier * wk + shot_sd * shot
        })
        .collect();
    Ok(TimeSeries {
        sample_rate: s.sample_rate,
        samples,
    })
}

/// Dual-phase lock-in demodulation of a record against the carrier, with
/// the given temporal mode: returns the (cos, sin) quadratures
///
/// ```text
/// q_c = sum_k i_k sqrt(2) cos(W t_k) w_k,   q_s = sum_k i_k sqrt(2) sin(W t_k) w_k.
/// ```
pub fn lockin_demodulate(
    series: &TimeSeries,
    carrier_hz: f64,
    mode: &ModeFunction,
) -> Result<(f64, f64), DspError> {
    if series.samples.len() < 2 {
        return Err(DspError::TooShort(series.samples.len()));
    }
    let s = PulseSampling {
        carrier_hz,
        sample_rate: series.sample_rate,
        duration: series.duration(),
    };
    let w = mode.weights(&s)?;
    let omega = 2.0 * PI * carrier_hz;
    let dt = s.dt();
    let mut qc = 0.0;
    let mut qs = 0.0;
    for (k, (&x, &wk)) in series.samples.iter().zip(w.iter()).enumerate() {
        let t = (k as f64 + 0.5) * dt;
        qc += x * std::f64::consts::SQRT_2 * (omega * t).cos() * wk;
        qs += x * std::f64::consts::SQRT_2 * (omega * t).sin() * wk;
    }
    Ok((qc, qs))
}

/// One-sided power spectral density of a record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Spectrum {
    /// Bin frequencies, Hz, from DC to Nyquist.
    pub freqs: Vec<f64>,
    /// Power spectral density per bin, (signal units)^2 / Hz.
    pub psd: Vec<f64>,
    /// Bin spacing, Hz.
    pub resolution: f64,
}

/// One-sided periodogram (rectangular window).  Satisfies Parseval's
/// identity: `sum(psd) * resolution` equals the mean square of the record.
pub fn power_spectrum(series: &TimeSeries) -> Result<Spectrum, DspError> {
    let n = series.samples.len();
    if n < 2 {
        return Err(DspError::TooShort(n));
    }
    let mut buf: Vec<Complex<f64>> = series
        .samples
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let dt = 1.0 / series.sample_rate;
    let resolution = series.sample_rate / n as f64;
    let n_bins = n / 2 + 1;
    let scale = dt / n as f64;
    let mut freqs = Vec::with_capacity(n_bins);
    let mut psd = Vec::with_capacity(n_bins);
    for (m, c) in buf.iter().take(n_bins).enumerate() {
        freqs.push(m as f64 * resolution);
        let two_sided = c.norm_sqr() * scale;
        // Double interior bins; DC and (for even n) Nyquist appear once.
        let fold = if m == 0 || (n.is_multiple_of(2) && m == n / 2) {
            1.0
        } else {
            2.0
        };
        psd.push(fold * two_sided);
    }
    Ok(Spectrum {
        freqs,
        psd,
        resolution,
    })
}

/// Single-pole low-pass filter with 3 dB point `f3db`, modelling a finite
/// detection bandwidth.
pub fn one_pole_lowpass(series: &TimeSeries, f3db: f64) -> Result<TimeSeries, DspError> {
    check("f3db", f3db, f3db > 0.0, "must be positive")?;
    let alpha = 1.0 - (-2.0 * PI * f3db / series.sample_rate).exp();
    let mut out = Vec::with_capacity(series.samples.len());
    let mut y = 0.0;
    for &x in &series.samples {
        y += alpha * (x - y);
        out.push(y);
    }
    Ok(TimeSeries {
        sample_rate: series.sample_rate,
        samples: out,
    })
}

/// Simulate the passband photocurrent of one continuous Faraday readout
/// pulse, including the coherent swap dynamics that make the detected
/// light reproduce the stroboscopic input-output relations.
///
/// The atomic quadrature `x` starts from a normal draw with the given mean
/// and variance and evolves per sample (exponential Euler) as
///
/// ```text
/// x' = x e^(-gamma_total dt) - xi sqrt(2 gamma_swap dt) sqrt(2) cos(W t) n
///      + sqrt(2 gamma_extra floor dt) z
/// ```
///
/// while the record collects the transmitted light plus the atomic signal,
///
/// ```text
/// i = sqrt(eta) (sqrt(2 gamma_swap dt) / xi · x sqrt(2) cos(W t) + n) + sqrt(1 - eta) v,
/// ```
///
/// with `n, z, v` independent standard normals (`n` shared between record
/// and back-action — that correlation is what lets a matched falling mode
/// recover the squeezed t^2/2 shot variance of the stroboscopic pass).
pub fn simulate_faraday_photocurrent<R: Rng + ?Sized>(
    probe: &ProbeParams,
    s: &PulseSampling,
    atom_mean: f64,
    atom_var: f64,
    diffusion_floor: f64,
    rng: &mut R,
) -> Result<TimeSeries, DspError> {
    probe
        .validate()
        .map_err(|_| DspError::InvalidParameter {
            name: "probe",
            value: f64::NAN,
            reason: "invalid probe parameters",
        })?;
    check("atom_var", atom_var, atom_var >= 0.0, "must be non-negative")?;
    check(
        "diffusion_floor",
        diffusion_floor,
        diffusion_floor >= 0.0,
        "must be non-negative",
    )?;
    s.validate()?;

    let dt = s.dt();
    let omega = 2.0 * PI * s.carrier_hz;
    let xi = probe.xi_squared.sqrt();
    let gamma_total = probe.gamma_swap + probe.gamma_extra;
    let damp = (-gamma_total * dt).exp();
    let swap_amp = (2.0 * probe.gamma_swap * dt).sqrt();
    let diff_sd = (2.0 * probe.gamma_extra * diffusion_floor * dt).sqrt();
    let eta = probe.efficiency;
    let (sig_gain, vac_gain) = (eta.sqrt(), (1.0 - eta).sqrt());
    let shot_sd = std::f64::consts::FRAC_1_SQRT_2;

    let z0: f64 = rng.sample(StandardNormal);
    let mut x = atom_mean + atom_var.sqrt() * z0;
    let mut samples = Vec::with_capacity(s.n_samples());
    for t in s.times() {
        let phase = std::f64::consts::SQRT_2 * (omega * t).cos();
        let n: f64 = rng.sample(StandardNormal);
        let i_in = swap_amp / xi * x * phase + shot_sd * n;
        let i_out = if eta < 1.0 {
            let v: f64 = rng.sample(StandardNormal);
            sig_gain * i_in + vac_gain * shot_sd * v
        } else {
            i_in
        };
        samples.push(i_out);
        let z: f64 = rng.sample(StandardNormal);
        x = x * damp - xi * swap_amp * phase * shot_sd * n + diff_sd * z;
    }
    Ok(TimeSeries {
        sample_rate: s.sample_rate,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(duration: f64) -> PulseSampling {
        PulseSampling {
            carrier_hz: 50e3,
            sample_rate: default_sample_rate(50e3),
            duration,
        }
    }

    #[test]
    fn mode_weights_are_normalized() {
        let s = grid(1.5e-3);
        for mode in [
            ModeFunction::flat(),
            ModeFunction::falling(800.0),
            ModeFunction::rising(1200.0),
        ] {
            let w = mode.weights(&s).unwrap();
            assert_eq!(w.len(), s.n_samples());
            let ss: f64 = w.iter().map(|x| x * x).sum();
            assert_relative_eq!(ss, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn flat_mode_weights_are_uniform() {
        let s = grid(1e-3);
        let w = ModeFunction::flat().weights(&s).unwrap();
        let expect = 1.0 / (s.n_samples() as f64).sqrt();
        for &x in &w {
            assert_relative_eq!(x, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn rising_mode_mirrors_falling_mode() {
        let s = grid(1e-3);
        let f = ModeFunction::falling(900.0).weights(&s).unwrap();
        let mut r = ModeFunction::rising(900.0).weights(&s).unwrap();
        r.reverse();
        for (a, b) in f.iter().zip(r.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn nyquist_and_parameter_validation() {
        let bad = PulseSampling {
            carrier_hz: 50e3,
            sample_rate: 90e3,
            duration: 1e-3,
        };
        assert!(matches!(
            bad.validate(),
            Err(DspError::NyquistViolation { .. })
        ));
        let neg = ModeFunction {
            gamma: -1.0,
            rising: false,
        };
        assert!(neg.weights(&grid(1e-3)).is_err());
    }

    /// With the shot noise turned off the record is a clean shaped
    /// sinusoid and demodulation returns the injected quadratures almost
    /// exactly (finite-grid ripple only).
    #[test]
    fn noiseless_synthesis_round_trips_through_demodulation() {
        let s = grid(1.5e-3);
        let mode = ModeFunction::falling(500.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let series =
            synthesize_photocurrent(&s, &mode, (0.8, -0.45), (0.0, 0.0), Some(0.0), &mut rng)
                .unwrap();
        let (qc, qs) = lockin_demodulate(&series, s.carrier_hz, &mode).unwrap();
        assert_relative_eq!(qc, 0.8, max_relative = 2e-3);
        assert_relative_eq!(qs, -0.45, max_relative = 4e-3);
    }

    /// Pure shot noise demodulates to variance 1/2 with any normalized
    /// mode — the vacuum convention of the Gaussian layer.
    #[test]
    fn shot_noise_demodulates_to_vacuum_variance() {
        let s = grid(0.75e-3);
        let mode = ModeFunction::falling(430.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 4000;
        let mut qcs = Vec::with_capacity(n);
        for _ in 0..n {
            let series =
                synthesize_photocurrent(&s, &mode, (0.0, 0.0), (0.0, 0.0), None, &mut rng)
                    .unwrap();
            let (qc, _) = lockin_demodulate(&series, s.carrier_hz, &mode).unwrap();
            qcs.push(qc);
        }
        let m = qcs.iter().sum::<f64>() / n as f64;
        let v = qcs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = 0.5 * (2.0 / n as f64).sqrt();
        assert!((v - 0.5).abs() < 3.0 * se + 0.01, "var {v}");
        assert!(m.abs() < 3.0 * (0.5_f64 / n as f64).sqrt());
    }

    /// Injecting quadratures with nonzero spread transports mean and
    /// variance through the synthesis + demodulation chain: the demodulated
    /// variance is the injected variance plus one vacuum unit of shot.
    #[test]
    fn synthesis_transports_mean_and_variance() {
        let s = grid(1.0e-3);
        let mode = ModeFunction::falling(650.0);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = 4000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let series =
                synthesize_photocurrent(&s, &mode, (0.7, -0.2), (0.4, 0.1), None, &mut rng)
                    .unwrap();
            let (qc, _) = lockin_demodulate(&series, s.carrier_hz, &mode).unwrap();
            sum += qc;
            sumsq += qc * qc;
        }
        let m = sum / n as f64;
        let v = (sumsq - n as f64 * m * m) / (n - 1) as f64;
        let expect_v = 0.4 + 0.5;
        let se_m = (expect_v / n as f64).sqrt();
        let se_v = expect_v * (2.0 / n as f64).sqrt();
        assert!((m - 0.7).abs() < 3.0 * se_m + 0.005, "mean {m}");
        assert!((v - expect_v).abs() < 3.0 * se_v + 0.02, "var {v}");
    }

    #[test]
    fn periodogram_satisfies_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<f64> = (0..4096)
            .map(|k| {
                let t = k as f64 / 1e6;
                (2.0 * PI * 37e3 * t).sin() + 0.3 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let series = TimeSeries {
            sample_rate: 1e6,
            samples,
        };
        let mean_sq = series.samples.iter().map(|x| x * x).sum::<f64>()
            / series.samples.len() as f64;
        let ps = power_spectrum(&series).unwrap();
        let total: f64 = ps.psd.iter().sum::<f64>() * ps.resolution;
        assert_relative_eq!(total, mean_sq, max_relative = 1e-8);
    }

    #[test]
    fn periodogram_peaks_at_the_tone() {
        let n = 2048;
        let fs = 1.024e6;
        // Put the tone exactly on bin 64.
        let f0 = 64.0 * fs / n as f64;
        let samples: Vec<f64> = (0..n)
            .map(|k| (2.0 * PI * f0 * k as f64 / fs).cos())
            .collect();
        let series = TimeSeries {
            sample_rate: fs,
            samples,
        };
        let ps = power_spectrum(&series).unwrap();
        let peak = ps
            .psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_relative_eq!(ps.freqs[peak], f0, max_relative = 1e-12);
    }

    #[test]
    fn one_pole_attenuates_above_the_corner() {
        let fs = 1e6;
        let f3db = 5e3;
        let f_hi = 50e3;
        let samples: Vec<f64> = (0..20000)
            .map(|k| (2.0 * PI * f_hi * k as f64 / fs).sin())
            .collect();
        let series = TimeSeries {
            sample_rate: fs,
            samples,
        };
        let out = one_pole_lowpass(&series, f3db).unwrap();
        // Steady-state amplitude after the transient: |H| = 1/sqrt(1+(f/f3db)^2) ~ 0.1.
        let amp = out.samples[10000..]
            .iter()
            .fold(0.0_f64, |a, &x| a.max(x.abs()));
        assert!(amp < 0.2, "amplitude {amp}");
        assert!(amp > 0.05, "amplitude {amp}");
    }
}
