//! TOML run configuration with unit-suffixed quantities.
//!
//! Dimensioned values accept either a bare number in SI base units or a
//! string with a unit suffix: `b_dc = 9.2e-5` and `b_dc = "0.92 G"` are
//! the same field.  Unknown keys are rejected, naming the offending key.
//!
//! Every field has a default, and the defaults reproduce the
//! projection-noise run of the reference apparatus: two cesium cells of
//! 7.2e11 atoms at a 0.92 G bias field, a 36 fT RF drive for 15 ms, and a
//! 1.5 ms readout pulse at swap rate 0.43/ms.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::dsp::ModeFunction;
use crate::physics::{
    larmor_frequency, EnsembleParams, PhysicalConstants, PhysicsError, ProbeParams, RfPulse,
};
use crate::protocol::Apparatus;

/// Time-bandwidth product of the RF drive window: an equivalent noise
/// bandwidth `delta` corresponds to a window of duration 0.88 / delta.
pub const RF_TIME_BANDWIDTH: f64 = 0.88;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot parse quantity '{0}' (expected a number or \"<number> <unit>\")")]
    BadQuantity(String),
    #[error("unknown unit '{unit}' for {dimension} quantity '{raw}'")]
    BadUnit {
        raw: String,
        unit: String,
        dimension: &'static str,
    },
    #[error("invalid {name}: {reason}")]
    Invalid { name: String, reason: String },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Field,
    Time,
    Frequency,
    Rate,
}

impl Dimension {
    fn name(self) -> &'static str {
        match self {
            Dimension::Field => "magnetic-field",
            Dimension::Time => "time",
            Dimension::Frequency => "frequency",
            Dimension::Rate => "rate",
        }
    }
}

fn unit_scale(unit: &str, dim: Dimension) -> Option<f64> {
    let compact: String = unit.split_whitespace().collect();
    let u = compact.as_str();
    match dim {
        Dimension::Field => match u {
            "" | "T" => Some(1.0),
            "mT" => Some(1e-3),
            "uT" => Some(1e-6),
            "nT" => Some(1e-9),
            "pT" => Some(1e-12),
            "fT" => Some(1e-15),
            "aT" => Some(1e-18),
            "G" => Some(1e-4),
            "mG" => Some(1e-7),
            _ => None,
        },
        Dimension::Time => match u {
            "" | "s" => Some(1.0),
            "ms" => Some(1e-3),
            "us" => Some(1e-6),
            "ns" => Some(1e-9),
            _ => None,
        },
        Dimension::Frequency => match u {
            "" | "Hz" => Some(1.0),
            "kHz" => Some(1e3),
            "MHz" => Some(1e6),
            "GHz" => Some(1e9),
            _ => None,
        },
        Dimension::Rate => match u {
            "" | "1/s" | "/s" => Some(1.0),
            "1/ms" | "/ms" => Some(1e3),
            "1/us" | "/us" => Some(1e6),
            _ => None,
        },
    }
}

fn parse_with_units(raw: &str, dim: Dimension) -> Result<f64, ConfigError> {
    let s = raw.trim();
    for i in (1..=s.len()).rev() {
        if !s.is_char_boundary(i) {
            continue;
        }
        if let Ok(v) = s[..i].trim().parse::<f64>() {
            if !v.is_finite() {
                continue;
            }
            let unit = s[i..].trim();
            return match unit_scale(unit, dim) {
                Some(k) => Ok(v * k),
                None => Err(ConfigError::BadUnit {
                    raw: raw.to_string(),
                    unit: unit.to_string(),
                    dimension: dim.name(),
                }),
            };
        }
    }
    Err(ConfigError::BadQuantity(raw.to_string()))
}

/// A dimensioned value: bare number (SI) or string with unit suffix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawQty {
    Num(f64),
    Text(String),
}

impl RawQty {
    fn resolve(&self, dim: Dimension) -> Result<f64, ConfigError> {
        match self {
            RawQty::Num(v) => Ok(*v),
            RawQty::Text(s) => parse_with_units(s, dim),
        }
    }
}

fn resolve_opt(
    q: &Option<RawQty>,
    dim: Dimension,
    default: f64,
) -> Result<f64, ConfigError> {
    match q {
        Some(q) => q.resolve(dim),
        None => Ok(default),
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstants {
    gyromagnetic_ratio: Option<f64>,
    spin_f: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    b_dc: Option<RawQty>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    n_cells: Option<usize>,
    atoms_per_cell: Option<f64>,
    t2_dark: Option<RawQty>,
    thermal_excess: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProbe {
    gamma_swap: Option<RawQty>,
    gamma_extra: Option<RawQty>,
    duration: Option<RawQty>,
    xi_squared: Option<f64>,
    polarizability_ratio: Option<f64>,
    efficiency: Option<f64>,
    mode: Option<String>,
    mode_gamma: Option<RawQty>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRf {
    amplitude: Option<RawQty>,
    duration: Option<RawQty>,
    phase: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProtocol {
    kind: Option<String>,
    delay: Option<RawQty>,
    pump_duration: Option<RawQty>,
    calibration_strength: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDsp {
    sample_rate: Option<RawQty>,
    photon_rate: Option<RawQty>,
    detection_bandwidth: Option<RawQty>,
    spectrum_shots: Option<u32>,
    spectrum_duration: Option<RawQty>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    variable: String,
    values: Vec<RawQty>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    write_shots: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    constants: Option<RawConstants>,
    field: Option<RawField>,
    ensemble: Option<RawEnsemble>,
    probe1: Option<RawProbe>,
    probe2: Option<RawProbe>,
    rf: Option<RawRf>,
    protocol: Option<RawProtocol>,
    dsp: Option<RawDsp>,
    sweep: Option<RawSweep>,
    output: Option<RawOutput>,
}

/// Which pulse sequence a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Pn,
    Entangled,
    Calibration,
}

/// What a sweep run varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Dark delay between the entangling pulse and the RF window, seconds.
    Delay,
    /// Equivalent noise bandwidth of the RF window, Hz; the window
    /// duration follows as [`RF_TIME_BANDWIDTH`] / bandwidth.
    RfBandwidth,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SweepSettings {
    pub variable: SweepVariable,
    /// SI values: seconds for a delay sweep, Hz for a bandwidth sweep.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DspSettings {
    /// Digitizer rate, Hz; default 16x the Larmor carrier.
    pub sample_rate: Option<f64>,
    /// Detected photon rate, Hz; default equal to the sample rate, which
    /// makes each sample carry shot noise of variance 1/2.
    pub photon_rate: Option<f64>,
    /// Single-pole detection bandwidth, Hz; no filter when absent.
    pub detection_bandwidth: Option<f64>,
    /// Records averaged by the spectrum command.
    pub spectrum_shots: u32,
    /// Record length for the spectrum command; default: readout duration.
    pub spectrum_duration: Option<f64>,
}

/// Fully resolved, validated run configuration in SI units.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SimConfig {
    pub apparatus: Apparatus,
    /// Entangling pulse (entangled protocol only).
    pub probe1: ProbeParams,
    /// Readout pulse.
    pub probe2: ProbeParams,
    pub probe1_mode: ModeFunction,
    pub probe2_mode: ModeFunction,
    pub rf: RfPulse,
    pub protocol: ProtocolKind,
    /// Dark delay after the entangling pulse, seconds.
    pub delay: f64,
    /// Optical pumping time, bookkept into the cycle time.
    pub pump_duration: f64,
    /// Calibration tone, in shot-noise-spread units.
    pub calibration_strength: f64,
    pub dsp: DspSettings,
    pub sweep: Option<SweepSettings>,
    /// Write the per-shot outcome table, not just the summary.
    pub write_shots: bool,
}

fn probe_from_raw(
    raw: &Option<RawProbe>,
    which: &'static str,
    d_swap: f64,
    d_extra: f64,
    d_duration: f64,
    d_rising: bool,
) -> Result<(ProbeParams, ModeFunction), ConfigError> {
    let r = raw.clone().unwrap_or_default();
    let xi_squared = match (r.xi_squared, r.polarizability_ratio) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::Invalid {
                name: format!("{which}.xi_squared"),
                reason: "give either xi_squared or polarizability_ratio, not both".into(),
            })
        }
        (Some(x), None) => x,
        (None, Some(ratio)) => crate::physics::xi_squared(ratio),
        (None, None) => 10.0 / 63.0,
    };
    let probe = ProbeParams {
        gamma_swap: resolve_opt(&r.gamma_swap, Dimension::Rate, d_swap)?,
        gamma_extra: resolve_opt(&r.gamma_extra, Dimension::Rate, d_extra)?,
        duration: resolve_opt(&r.duration, Dimension::Time, d_duration)?,
        xi_squared,
        efficiency: r.efficiency.unwrap_or(0.8),
    };
    probe.validate()?;
    let gamma_default = probe.gamma_swap + probe.gamma_extra;
    let gamma = resolve_opt(&r.mode_gamma, Dimension::Rate, gamma_default)?;
    let mode = match r.mode.as_deref() {
        None => {
            if d_rising {
                ModeFunction::rising(gamma)
            } else {
                ModeFunction::falling(gamma)
            }
        }
        Some("rising") => ModeFunction::rising(gamma),
        Some("falling") => ModeFunction::falling(gamma),
        Some("flat") => ModeFunction::flat(),
        Some(other) => {
            return Err(ConfigError::Invalid {
                name: format!("{which}.mode"),
                reason: format!("'{other}' is not one of flat, rising, falling"),
            })
        }
    };
    if gamma < 0.0 {
        return Err(ConfigError::Invalid {
            name: format!("{which}.mode_gamma"),
            reason: "must be non-negative".into(),
        });
    }
    Ok((probe, mode))
}

impl SimConfig {
    /// Parse and validate a TOML document.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        Self::build(raw)
    }

    /// Read, parse and validate a config file.
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// The built-in defaults: the projection-noise run.
    pub fn default_pn() -> Self {
        Self::from_toml("").expect("defaults are valid")
    }

    fn build(raw: RawConfig) -> Result<Self, ConfigError> {
        let rc = raw.constants.unwrap_or_default();
        let constants = PhysicalConstants {
            gyromagnetic_ratio: rc.gyromagnetic_ratio.unwrap_or(2.2e10),
            spin_f: rc.spin_f.unwrap_or(4.0),
        };
        constants.validate()?;

        let rf_field = raw.field.unwrap_or_default();
        let b_dc = resolve_opt(&rf_field.b_dc, Dimension::Field, 9.2e-5)?;
        if !(b_dc.is_finite() && b_dc > 0.0) {
            return Err(ConfigError::Invalid {
                name: "field.b_dc".into(),
                reason: "must be positive and finite".into(),
            });
        }

        let re = raw.ensemble.unwrap_or_default();
        let ensemble = EnsembleParams {
            n_cells: re.n_cells.unwrap_or(2),
            atoms_per_cell: re.atoms_per_cell.unwrap_or(7.2e11),
            t2_dark: resolve_opt(&re.t2_dark, Dimension::Time, 32e-3)?,
            thermal_excess: re.thermal_excess.unwrap_or(0.10),
        };
        ensemble.validate()?;

        // Entangling-pulse defaults give kappa^2 = 3.1 over a 3 ms readout.
        let (probe1, probe1_mode) =
            probe_from_raw(&raw.probe1, "probe1", 112.8998, 70.0, 2e-3, true)?;
        let (probe2, probe2_mode) =
            probe_from_raw(&raw.probe2, "probe2", 430.0, 70.0, 1.5e-3, false)?;

        let rr = raw.rf.unwrap_or_default();
        let rf = RfPulse {
            amplitude: resolve_opt(&rr.amplitude, Dimension::Field, 36e-15)?,
            duration: resolve_opt(&rr.duration, Dimension::Time, 15e-3)?,
            phase: rr.phase.unwrap_or(0.0),
        };
        rf.validate()?;

        let rp = raw.protocol.unwrap_or_default();
        let protocol = match rp.kind.as_deref() {
            None | Some("pn") => ProtocolKind::Pn,
            Some("entangled") => ProtocolKind::Entangled,
            Some("calibration") => ProtocolKind::Calibration,
            Some(other) => {
                return Err(ConfigError::Invalid {
                    name: "protocol.kind".into(),
                    reason: format!("'{other}' is not one of pn, entangled, calibration"),
                })
            }
        };
        let delay = resolve_opt(&rp.delay, Dimension::Time, 2e-3)?;
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(ConfigError::Invalid {
                name: "protocol.delay".into(),
                reason: "must be non-negative and finite".into(),
            });
        }
        let pump_duration = resolve_opt(&rp.pump_duration, Dimension::Time, 6e-3)?;
        if !(pump_duration.is_finite() && pump_duration >= 0.0) {
            return Err(ConfigError::Invalid {
                name: "protocol.pump_duration".into(),
                reason: "must be non-negative and finite".into(),
            });
        }
        let calibration_strength = rp.calibration_strength.unwrap_or(1.0);
        if calibration_strength == 0.0 || !calibration_strength.is_finite() {
            return Err(ConfigError::Invalid {
                name: "protocol.calibration_strength".into(),
                reason: "must be nonzero and finite".into(),
            });
        }

        let rd = raw.dsp.unwrap_or_default();
        let dsp = DspSettings {
            sample_rate: rd
                .sample_rate
                .as_ref()
                .map(|q| q.resolve(Dimension::Frequency))
                .transpose()?,
            photon_rate: rd
                .photon_rate
                .as_ref()
                .map(|q| q.resolve(Dimension::Frequency))
                .transpose()?,
            detection_bandwidth: rd
                .detection_bandwidth
                .as_ref()
                .map(|q| q.resolve(Dimension::Frequency))
                .transpose()?,
            spectrum_shots: rd.spectrum_shots.unwrap_or(16),
            spectrum_duration: rd
                .spectrum_duration
                .as_ref()
                .map(|q| q.resolve(Dimension::Time))
                .transpose()?,
        };

        let sweep = match raw.sweep {
            None => None,
            Some(rs) => {
                let variable = match rs.variable.as_str() {
                    "delay" => SweepVariable::Delay,
                    "rf_bandwidth" => SweepVariable::RfBandwidth,
                    other => {
                        return Err(ConfigError::Invalid {
                            name: "sweep.variable".into(),
                            reason: format!("'{other}' is not one of delay, rf_bandwidth"),
                        })
                    }
                };
                let dim = match variable {
                    SweepVariable::Delay => Dimension::Time,
                    SweepVariable::RfBandwidth => Dimension::Frequency,
                };
                let values = rs
                    .values
                    .iter()
                    .map(|q| q.resolve(dim))
                    .collect::<Result<Vec<f64>, _>>()?;
                if values.is_empty() {
                    return Err(ConfigError::Invalid {
                        name: "sweep.values".into(),
                        reason: "must not be empty".into(),
                    });
                }
                for &v in &values {
                    let ok = match variable {
                        SweepVariable::Delay => v >= 0.0,
                        SweepVariable::RfBandwidth => v > 0.0,
                    };
                    if !ok || !v.is_finite() {
                        return Err(ConfigError::Invalid {
                            name: "sweep.values".into(),
                            reason: format!("value {v} out of range"),
                        });
                    }
                }
                Some(SweepSettings { variable, values })
            }
        };

        let write_shots = raw.output.unwrap_or_default().write_shots.unwrap_or(true);

        let cfg = SimConfig {
            apparatus: Apparatus {
                constants,
                ensemble,
                b_dc,
            },
            probe1,
            probe2,
            probe1_mode,
            probe2_mode,
            rf,
            protocol,
            delay,
            pump_duration,
            calibration_strength,
            dsp,
            sweep,
            write_shots,
        };
        cfg.check_sampling()?;
        Ok(cfg)
    }

    /// Larmor carrier set by the bias field, Hz.
    pub fn carrier_hz(&self) -> f64 {
        larmor_frequency(&self.apparatus.constants, self.apparatus.b_dc)
    }

    /// Digitizer rate: configured, or 16x the carrier.
    pub fn sample_rate(&self) -> f64 {
        self.dsp
            .sample_rate
            .unwrap_or_else(|| crate::dsp::default_sample_rate(self.carrier_hz()))
    }

    fn check_sampling(&self) -> Result<(), ConfigError> {
        let fs = self.sample_rate();
        let carrier = self.carrier_hz();
        let needed = 2.0 * (carrier + self.dsp.detection_bandwidth.unwrap_or(0.0));
        if fs <= needed {
            return Err(ConfigError::Invalid {
                name: "dsp.sample_rate".into(),
                reason: format!(
                    "{fs} Hz cannot represent the carrier ({carrier:.0} Hz) plus the \
                     detection bandwidth; need more than {needed:.0} Hz"
                ),
            });
        }
        if let Some(r) = self.dsp.photon_rate {
            if !(r.is_finite() && r >= 0.0) {
                return Err(ConfigError::Invalid {
                    name: "dsp.photon_rate".into(),
                    reason: "must be non-negative and finite".into(),
                });
            }
        }
        Ok(())
    }

    /// Total wall time of one shot, including pumping.
    pub fn cycle_time(&self) -> f64 {
        match self.protocol {
            ProtocolKind::Pn => self.pump_duration + self.rf.duration + self.probe2.duration,
            ProtocolKind::Entangled => {
                self.pump_duration
                    + self.probe1.duration
                    + self.delay
                    + self.rf.duration
                    + self.probe2.duration
            }
            ProtocolKind::Calibration => self.pump_duration + 2.0 * self.probe2.duration,
        }
    }

    pub fn pn_sequence(&self) -> crate::protocol::PnSequence {
        crate::protocol::PnSequence {
            rf: self.rf,
            readout: self.probe2,
        }
    }

    pub fn entanglement_sequence(&self) -> crate::protocol::EntanglementSequence {
        crate::protocol::EntanglementSequence {
            probe1: self.probe1,
            delay: self.delay,
            rf: Some(self.rf),
            probe2: self.probe2,
        }
    }

    pub fn calibration_sequence(&self) -> crate::protocol::CalibrationSequence {
        crate::protocol::CalibrationSequence {
            probe: self.probe2,
            strength: self.calibration_strength,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn defaults_reproduce_the_projection_noise_run() {
        let cfg = SimConfig::default_pn();
        assert_eq!(cfg.protocol, ProtocolKind::Pn);
        assert_relative_eq!(cfg.apparatus.b_dc, 9.2e-5, max_relative = 1e-12);
        assert_eq!(cfg.apparatus.ensemble.n_cells, 2);
        assert_relative_eq!(cfg.apparatus.ensemble.t2_dark, 32e-3, max_relative = 1e-12);
        assert_relative_eq!(cfg.probe2.gamma_swap, 430.0, max_relative = 1e-12);
        assert_relative_eq!(cfg.probe2.xi_squared, 10.0 / 63.0, max_relative = 1e-12);
        assert_relative_eq!(cfg.rf.amplitude, 36e-15, max_relative = 1e-12);
        assert_relative_eq!(cfg.rf.duration, 15e-3, max_relative = 1e-12);
        assert_relative_eq!(cfg.cycle_time(), 22.5e-3, max_relative = 1e-12);
        assert_relative_eq!(cfg.carrier_hz(), 322_129.6, max_relative = 1e-6);
        // Readout mode defaults to falling at the total decay rate.
        assert!(!cfg.probe2_mode.rising);
        assert_relative_eq!(cfg.probe2_mode.gamma, 500.0, max_relative = 1e-12);
        assert!(cfg.probe1_mode.rising);
    }

    #[test]
    fn unit_suffixes_resolve_to_si() {
        let cfg = SimConfig::from_toml(
            r#"
            [field]
            b_dc = "0.92 G"
            [ensemble]
            t2_dark = "32 ms"
            [probe2]
            gamma_swap = "0.43 1/ms"
            gamma_extra = "0.07 1/ms"
            duration = "1.5 ms"
            [rf]
            amplitude = "36 fT"
            duration = "15 ms"
            [protocol]
            kind = "entangled"
            delay = "2 ms"
            [dsp]
            sample_rate = "5.2 MHz"
            detection_bandwidth = "1.2 MHz"
            "#,
        )
        .unwrap();
        assert_relative_eq!(cfg.apparatus.b_dc, 9.2e-5, max_relative = 1e-12);
        assert_relative_eq!(cfg.apparatus.ensemble.t2_dark, 0.032, max_relative = 1e-12);
        assert_relative_eq!(cfg.probe2.gamma_swap, 430.0, max_relative = 1e-12);
        assert_relative_eq!(cfg.probe2.gamma_extra, 70.0, max_relative = 1e-12);
        assert_relative_eq!(cfg.probe2.duration, 1.5e-3, max_relative = 1e-12);
        assert_relative_eq!(cfg.rf.amplitude, 3.6e-14, max_relative = 1e-12);
        assert_relative_eq!(cfg.delay, 2e-3, max_relative = 1e-12);
        assert_eq!(cfg.protocol, ProtocolKind::Entangled);
        assert_eq!(cfg.dsp.sample_rate, Some(5.2e6));
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = SimConfig::from_toml("[ensemble]\nT3 = 1.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("T3"), "message was: {msg}");
    }

    #[test]
    fn bad_units_are_rejected_by_name() {
        let err = SimConfig::from_toml("[rf]\namplitude = \"36 parsec\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("parsec"), "message was: {msg}");
        assert!(msg.contains("magnetic-field"), "message was: {msg}");
    }

    #[test]
    fn conflicting_broadening_inputs_are_rejected() {
        let err = SimConfig::from_toml(
            "[probe2]\nxi_squared = 0.16\npolarizability_ratio = 0.0113\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("not both"));
        // The ratio alone maps through xi^2 = 14 ratio.
        let cfg =
            SimConfig::from_toml("[probe2]\npolarizability_ratio = 0.011337868480725623\n")
                .unwrap();
        assert_relative_eq!(cfg.probe2.xi_squared, 10.0 / 63.0, max_relative = 1e-9);
    }

    #[test]
    fn sweep_values_resolve_per_variable() {
        let cfg = SimConfig::from_toml(
            "[sweep]\nvariable = \"delay\"\nvalues = [\"2 ms\", \"3 ms\", 0.005]\n",
        )
        .unwrap();
        let s = cfg.sweep.unwrap();
        assert_eq!(s.variable, SweepVariable::Delay);
        assert_eq!(s.values, vec![0.002, 0.003, 0.005]);

        let cfg = SimConfig::from_toml(
            "[sweep]\nvariable = \"rf_bandwidth\"\nvalues = [\"1 kHz\", 200]\n",
        )
        .unwrap();
        assert_eq!(cfg.sweep.unwrap().values, vec![1000.0, 200.0]);

        let err =
            SimConfig::from_toml("[sweep]\nvariable = \"phase\"\nvalues = [1.0]\n").unwrap_err();
        assert!(err.to_string().contains("phase"));
    }

    #[test]
    fn physical_validation_propagates() {
        assert!(SimConfig::from_toml("[probe2]\nefficiency = 1.5\n").is_err());
        assert!(SimConfig::from_toml("[ensemble]\nt2_dark = 0.0\n").is_err());
        // Sample rate below the carrier's Nyquist requirement.
        let err = SimConfig::from_toml("[dsp]\nsample_rate = \"100 kHz\"\n").unwrap_err();
        assert!(err.to_string().contains("carrier"));
    }
}
