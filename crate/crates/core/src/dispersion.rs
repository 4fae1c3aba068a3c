//! Refractive index models for the transparent object.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Three-term Sellmeier coefficients for fused silica (Malitson, 1965).
/// `B` terms are dimensionless, `C` terms are resonance wavelengths in
/// micrometers (the formula uses their squares).
pub const FUSED_SILICA_B: [f64; 3] = [0.696_166_3, 0.407_942_6, 0.897_479_4];
pub const FUSED_SILICA_C_UM: [f64; 3] = [0.068_404_3, 0.116_241_4, 9.896_161];

/// Wavelength range (meters) over which the Sellmeier preset is evaluated.
pub const SELLMEIER_MIN_WAVELENGTH: f64 = 200e-9;
pub const SELLMEIER_MAX_WAVELENGTH: f64 = 2500e-9;

pub const DEFAULT_CONSTANT_INDEX: f64 = 1.46;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DispersionModel {
    Constant { n: f64 },
    SellmeierFusedSilica,
}

impl Default for DispersionModel {
    fn default() -> Self {
        DispersionModel::Constant {
            n: DEFAULT_CONSTANT_INDEX,
        }
    }
}

impl DispersionModel {
    /// Refractive index at `wavelength` (meters). Fails if the result is
    /// not strictly greater than 1, since phase/thickness conversion divides
    /// by `n - 1`.
    pub fn index(&self, wavelength: f64) -> Result<f64> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::Model(format!("wavelength must be > 0, got {wavelength}")));
        }
        let n = match *self {
            DispersionModel::Constant { n } => n,
            DispersionModel::SellmeierFusedSilica => {
                if !(SELLMEIER_MIN_WAVELENGTH..=SELLMEIER_MAX_WAVELENGTH).contains(&wavelength) {
                    return Err(Error::Model(format!(
                        "fused-silica Sellmeier model is valid for 200..2500 nm, got {:.1} nm",
                        wavelength * 1e9
                    )));
                }
                let l2 = (wavelength * 1e6).powi(2);
                let sum: f64 = FUSED_SILICA_B
                    .iter()
                    .zip(FUSED_SILICA_C_UM)
                    .map(|(b, c)| b * l2 / (l2 - c * c))
                    .sum();
                (1.0 + sum).sqrt()
            }
        };
        if !(n.is_finite() && n > 1.0) {
            return Err(Error::Model(format!(
                "refractive index must exceed 1, got {n} at {:.1} nm",
                wavelength * 1e9
            )));
        }
        Ok(n)
    }
}

pub fn refractive_index(dispersion: &DispersionModel, wavelength: f64) -> Result<f64> {
    dispersion.index(wavelength)
}
