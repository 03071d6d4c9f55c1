//! Time series of absorbed fluid mass per unit contact area (g/cm^2).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slightly negative values are tolerated: balance noise around the dry mass
/// can push early readings a hair below zero.
pub const VALUE_NOISE_FLOOR: f64 = -1e-2;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("times and values have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series must contain at least one point")]
    Empty,
    #[error("times must be strictly increasing (violated at index {0})")]
    NonIncreasingTimes(usize),
    #[error("non-finite or out-of-range value {value} at index {index}")]
    InvalidValue { index: usize, value: f64 },
}

/// Measured, reconstructed, or simulated imbibition curve samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries", into = "RawSeries")]
pub struct ImbibitionSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    fluid_density: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    #[serde(default = "default_density")]
    fluid_density: f64,
}

fn default_density() -> f64 {
    1.0
}

impl TryFrom<RawSeries> for ImbibitionSeries {
    type Error = SeriesError;

    fn try_from(raw: RawSeries) -> Result<Self, Self::Error> {
        ImbibitionSeries::with_fluid_density(raw.times, raw.values, raw.fluid_density)
    }
}

impl From<ImbibitionSeries> for RawSeries {
    fn from(s: ImbibitionSeries) -> Self {
        RawSeries {
            times: s.times,
            values: s.values,
            fluid_density: s.fluid_density,
        }
    }
}

impl ImbibitionSeries {
    /// Series in minutes and g/cm^2 with the default water density 1 g/cm^3.
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, SeriesError> {
        Self::with_fluid_density(times, values, 1.0)
    }

    pub fn with_fluid_density(
        times: Vec<f64>,
        values: Vec<f64>,
        fluid_density: f64,
    ) -> Result<Self, SeriesError> {
        if times.len() != values.len() {
            return Err(SeriesError::LengthMismatch(times.len(), values.len()));
        }
        if times.is_empty() {
            return Err(SeriesError::Empty);
        }
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(SeriesError::NonIncreasingTimes(i + 1));
            }
        }
        if !times[0].is_finite() {
            return Err(SeriesError::InvalidValue {
                index: 0,
                value: times[0],
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < VALUE_NOISE_FLOOR {
                return Err(SeriesError::InvalidValue { index, value });
            }
        }
        Ok(Self {
            times,
            values,
            fluid_density,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn fluid_density(&self) -> f64 {
        self.fluid_density
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("series is never empty")
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }
}
