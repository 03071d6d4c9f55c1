//! Absorption law of the porous matrix.
//!
//! The law maps saturation `s = theta / porosity` to the scalar potential
//! whose second spatial derivative drives the moisture equation. Its
//! derivative is a downward parabola supported on
//! `[residual, max_saturation]` with peak value equal to the diffusion rate;
//! no fluid moves below the residual saturation or above the maximum one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Saturations farther outside `[0, 1]` than this slack are rejected as
/// caller bugs rather than silently clamped.
pub const SATURATION_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AbsorptionError {
    #[error("invalid absorption law: {0}")]
    InvalidLaw(String),
    #[error("saturation {0} lies outside [0, 1]")]
    OutOfDomain(f64),
}

/// Piecewise-cubic absorption law with compactly supported derivative.
///
/// Invariants enforced at construction: `0 <= residual < max_saturation <= 1`
/// and `diffusion_rate >= 0` (cm^2/min).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLaw", into = "RawLaw")]
pub struct AbsorptionLaw {
    residual: f64,
    max_saturation: f64,
    diffusion_rate: f64,
}

/// Serde shim so deserialized laws pass the same validation as constructed ones.
#[derive(Serialize, Deserialize)]
struct RawLaw {
    residual: f64,
    max_saturation: f64,
    diffusion_rate: f64,
}

impl TryFrom<RawLaw> for AbsorptionLaw {
    type Error = AbsorptionError;

    fn try_from(raw: RawLaw) -> Result<Self, Self::Error> {
        AbsorptionLaw::new(raw.residual, raw.max_saturation, raw.diffusion_rate)
    }
}

impl From<AbsorptionLaw> for RawLaw {
    fn from(law: AbsorptionLaw) -> Self {
        RawLaw {
            residual: law.residual,
            max_saturation: law.max_saturation,
            diffusion_rate: law.diffusion_rate,
        }
    }
}

impl AbsorptionLaw {
    pub fn new(
        residual: f64,
        max_saturation: f64,
        diffusion_rate: f64,
    ) -> Result<Self, AbsorptionError> {
        if !residual.is_finite() || !(0.0..1.0).contains(&residual) {
            return Err(AbsorptionError::InvalidLaw(format!(
                "residual saturation {residual} must lie in [0, 1)"
            )));
        }
        if !max_saturation.is_finite() || max_saturation <= residual || max_saturation > 1.0 {
            return Err(AbsorptionError::InvalidLaw(format!(
                "maximum saturation {max_saturation} must lie in ({residual}, 1]"
            )));
        }
        if !diffusion_rate.is_finite() || diffusion_rate < 0.0 {
            return Err(AbsorptionError::InvalidLaw(format!(
                "diffusion rate {diffusion_rate} must be nonnegative"
            )));
        }
        Ok(Self {
            residual,
            max_saturation,
            diffusion_rate,
        })
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn max_saturation(&self) -> f64 {
        self.max_saturation
    }

    /// Peak of the derivative, attained at the midpoint of the support
    /// (cm^2/min).
    pub fn diffusion_rate(&self) -> f64 {
        self.diffusion_rate
    }

    /// Value held on `[max_saturation, 1]`.
    pub fn plateau(&self) -> f64 {
        2.0 * self.diffusion_rate / 3.0 * (self.max_saturation - self.residual)
    }

    /// Law value at saturation `s` in `[0, 1]`.
    ///
    /// Zero up to the residual saturation, then a monotone cubic, then the
    /// plateau. Roundoff excursions within [`SATURATION_SLACK`] are clamped.
    pub fn value(&self, saturation: f64) -> Result<f64, AbsorptionError> {
        Ok(self.value_clamped(check_saturation(saturation)?))
    }

    /// Derivative of the law at saturation `s` in `[0, 1]`.
    pub fn derivative(&self, saturation: f64) -> Result<f64, AbsorptionError> {
        Ok(self.derivative_clamped(check_saturation(saturation)?))
    }

    /// Value with the saturation clamped hard to `[0, 1]`; the solver uses
    /// this on `theta / porosity` ratios that carry float noise.
    #[inline]
    pub(crate) fn value_clamped(&self, saturation: f64) -> f64 {
        let s = saturation.clamp(0.0, 1.0);
        if s <= self.residual {
            0.0
        } else if s < self.max_saturation {
            let span = self.residual - self.max_saturation;
            let gap = self.residual - s;
            2.0 * self.diffusion_rate / 3.0 * gap * gap
                * (3.0 * self.max_saturation - self.residual - 2.0 * s)
                / (span * span)
        } else {
            self.plateau()
        }
    }

    #[inline]
    pub(crate) fn derivative_clamped(&self, saturation: f64) -> f64 {
        let s = saturation.clamp(0.0, 1.0);
        let span = self.residual - self.max_saturation;
        let parabola =
            -4.0 * self.diffusion_rate * (self.residual - s) * (self.max_saturation - s)
                / (span * span);
        parabola.max(0.0)
    }
}

fn check_saturation(s: f64) -> Result<f64, AbsorptionError> {
    if !s.is_finite() || s < -SATURATION_SLACK || s > 1.0 + SATURATION_SLACK {
        return Err(AbsorptionError::OutOfDomain(s));
    }
    Ok(s.clamp(0.0, 1.0))
}
