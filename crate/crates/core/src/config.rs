use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Network family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Deformable alignment of every supporting frame, then reconstruction.
    Tdan,
    /// Raw supporting and reference frames concatenated, no alignment.
    Mfsr,
    /// Reference frame only.
    Sisr,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Tdan, Variant::Mfsr, Variant::Sisr];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Tdan => "tdan",
            Variant::Mfsr => "mfsr",
            Variant::Sisr => "sisr",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Variant::Tdan => 0,
            Variant::Mfsr => 1,
            Variant::Sisr => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.code() == code)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}` (expected tdan, mfsr or sisr)")))
    }
}

/// Every architecture hyperparameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Residual blocks in the shared feature extractor.
    pub k1: usize,
    /// Residual blocks in the reconstruction body.
    pub k2: usize,
    /// Feature width.
    pub channels: usize,
    /// Deformable layers in the alignment cascade.
    #[serde(alias = "d")]
    pub depth: usize,
    /// Temporal radius; a clip holds `2 * radius + 1` frames.
    #[serde(alias = "N")]
    pub radius: usize,
    /// Upscale factor.
    pub scale: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { variant: Variant::Tdan, k1: 5, k2: 10, channels: 64, depth: 4, radius: 2, scale: 4 }
    }
}

impl ModelConfig {
    pub fn frames(&self) -> usize {
        2 * self.radius + 1
    }

    /// Frames the network consumes.
    pub fn input_frames(&self) -> usize {
        match self.variant {
            Variant::Sisr => 1,
            _ => self.frames(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.variant == Variant::Tdan {
            if !(2..=5).contains(&self.depth) {
                return fail(format!("deformable depth must be in [2, 5], got {}", self.depth));
            }
            if self.k1 < 1 {
                return fail("k1 must be at least 1".into());
            }
            if self.radius < 1 {
                return fail("the tdan variant needs at least one supporting frame (radius >= 1)".into());
            }
        }
        if self.channels < 8 {
            return fail(format!("channel width must be at least 8, got {}", self.channels));
        }
        if self.scale != 2 && self.scale != 4 {
            return fail(format!("scale must be 2 or 4, got {}", self.scale));
        }
        Ok(())
    }

    /// Sub-pixel stages: one per factor of two.
    pub fn upsample_stages(&self) -> usize {
        self.scale.trailing_zeros() as usize
    }
}
