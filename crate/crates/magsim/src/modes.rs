//! Mode labels for the quadrature phase space.
//!
//! Atomic modes come in a *plus* and a *minus* sector (sums and differences
//! of the two cells' collective spins, in the frame rotating at the Larmor
//! frequency).  Light modes are the cosine/sine Larmor components of the
//! Stokes operators of one probe pulse.  All quadratures are normalized so
//! a coherent (vacuum) state has variance 1/2.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModeLabel {
    /// (J_y1 + J_y2) / sqrt(F * N_total)
    AtomYPlus,
    /// (J_z1 + J_z2) / sqrt(F * N_total)
    AtomZPlus,
    /// (J_y1 - J_y2) / sqrt(F * N_total)
    AtomYMinus,
    /// (J_z1 - J_z2) / sqrt(F * N_total)
    AtomZMinus,
    /// Single-cell J_y / sqrt(F * N_total)
    AtomY,
    /// Single-cell J_z / sqrt(F * N_total)
    AtomZ,
    /// Cosine Larmor component of the probe Stokes operator S_2
    LightS2c,
    /// Sine Larmor component of the probe Stokes operator S_2
    LightS2s,
    /// Cosine Larmor component of the probe Stokes operator S_3
    LightS3c,
}

impl ModeLabel {
    pub const fn as_str(self) -> &'static str {
        match self {
            ModeLabel::AtomYPlus => "atom.y_plus",
            ModeLabel::AtomZPlus => "atom.z_plus",
            ModeLabel::AtomYMinus => "atom.y_minus",
            ModeLabel::AtomZMinus => "atom.z_minus",
            ModeLabel::AtomY => "atom.y",
            ModeLabel::AtomZ => "atom.z",
            ModeLabel::LightS2c => "light.s2c",
            ModeLabel::LightS2s => "light.s2s",
            ModeLabel::LightS3c => "light.s3c",
        }
    }

    pub const fn is_atomic(self) -> bool {
        !matches!(
            self,
            ModeLabel::LightS2c | ModeLabel::LightS2s | ModeLabel::LightS3c
        )
    }

    pub const fn is_light(self) -> bool {
        !self.is_atomic()
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModeLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "atom.y_plus" => ModeLabel::AtomYPlus,
            "atom.z_plus" => ModeLabel::AtomZPlus,
            "atom.y_minus" => ModeLabel::AtomYMinus,
            "atom.z_minus" => ModeLabel::AtomZMinus,
            "atom.y" => ModeLabel::AtomY,
            "atom.z" => ModeLabel::AtomZ,
            "light.s2c" => ModeLabel::LightS2c,
            "light.s2s" => ModeLabel::LightS2s,
            "light.s3c" => ModeLabel::LightS3c,
            other => return Err(format!("unknown mode label `{other}`")),
        })
    }
}

impl TryFrom<String> for ModeLabel {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ModeLabel> for String {
    fn from(m: ModeLabel) -> String {
        m.as_str().to_owned()
    }
}

/// Atomic mode sets for the supported cell configurations.
pub const TWO_CELL_ATOMS: [ModeLabel; 4] = [
    ModeLabel::AtomYPlus,
    ModeLabel::AtomZPlus,
    ModeLabel::AtomYMinus,
    ModeLabel::AtomZMinus,
];

pub const ONE_CELL_ATOMS: [ModeLabel; 2] = [ModeLabel::AtomY, ModeLabel::AtomZ];

pub const PULSE_LIGHT: [ModeLabel; 3] = [
    ModeLabel::LightS2c,
    ModeLabel::LightS2s,
    ModeLabel::LightS3c,
];
