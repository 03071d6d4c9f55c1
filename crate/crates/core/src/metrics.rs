//! Discrepancy measures between observed and simulated imbibition curves:
//! squared relative error, dynamic time warping, the endpoint penalty, and
//! the combined calibration loss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::ImbibitionSeries;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("sequences have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two points, got {0}")]
    TooShort(usize),
    #[error("empty sequence")]
    Empty,
    #[error("zero data value at index {0} breaks the relative error")]
    ZeroData(usize),
    #[error("data time {0} does not lie on the simulation time grid")]
    Misaligned(f64),
}

/// Weights of the calibration loss terms.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossWeights {
    /// Multiplies the (already length-normalized) squared relative error.
    #[serde(rename = "lambda2")]
    pub sre_weight: f64,
    #[serde(rename = "lambdaDTW")]
    pub dtw_weight: f64,
    /// Flat penalty charged when the final states disagree.
    #[serde(default = "default_endpoint_weight", rename = "lambdaPhi")]
    pub endpoint_weight: f64,
    /// Squared-difference threshold of the endpoint penalty.
    #[serde(default = "default_endpoint_threshold", rename = "epsPhi")]
    pub endpoint_threshold: f64,
}

fn default_endpoint_weight() -> f64 {
    10.0
}

fn default_endpoint_threshold() -> f64 {
    1e-4
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            sre_weight: 1.0,
            dtw_weight: 1.0,
            endpoint_weight: default_endpoint_weight(),
            endpoint_threshold: default_endpoint_threshold(),
        }
    }
}

/// Squared relative error between matched samples, normalized by the number
/// of points minus one. Any zero data value is an error here; the combined
/// loss applies the skip-and-renormalize policy instead.
pub fn relative_squared_error(data: &[f64], sim: &[f64]) -> Result<f64, MetricsError> {
    if data.len() != sim.len() {
        return Err(MetricsError::LengthMismatch(data.len(), sim.len()));
    }
    if data.len() < 2 {
        return Err(MetricsError::TooShort(data.len()));
    }
    let mut sum = 0.0;
    for (i, (&d, &s)) in data.iter().zip(sim).enumerate() {
        if d == 0.0 {
            return Err(MetricsError::ZeroData(i));
        }
        let r = (d - s) / d;
        sum += r * r;
    }
    Ok(sum / (data.len() - 1) as f64)
}

/// Squared relative error that skips indices whose data value is zero (a dry
/// first reading) and renormalizes by the count of retained terms. With no
/// zeros present it reduces to [`relative_squared_error`].
pub fn relative_squared_error_lenient(data: &[f64], sim: &[f64]) -> Result<f64, MetricsError> {
    if data.len() != sim.len() {
        return Err(MetricsError::LengthMismatch(data.len(), sim.len()));
    }
    if data.len() < 2 {
        return Err(MetricsError::TooShort(data.len()));
    }
    let mut sum = 0.0;
    let mut retained = 0usize;
    for (&d, &s) in data.iter().zip(sim) {
        if d == 0.0 {
            continue;
        }
        let r = (d - s) / d;
        sum += r * r;
        retained += 1;
    }
    if retained == 0 {
        return Err(MetricsError::ZeroData(0));
    }
    if retained == data.len() {
        Ok(sum / (data.len() - 1) as f64)
    } else {
        log::warn!(
            "relative error: skipped {} zero data value(s), renormalizing by {}",
            data.len() - retained,
            retained
        );
        Ok(sum / retained as f64)
    }
}

/// Dynamic time warping distance with squared local cost and steps
/// right/up/diagonal; returns the square root of the optimal accumulated
/// cost. Paths are anchored at both ends and monotone.
pub fn dtw(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::Empty);
    }
    let cols = b.len();
    let mut prev = vec![f64::INFINITY; cols];
    let mut row = vec![0.0f64; cols];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            let d = x - y;
            let local = d * d;
            let best = if i == 0 && j == 0 {
                0.0
            } else if i == 0 {
                row[j - 1]
            } else if j == 0 {
                prev[j]
            } else {
                prev[j].min(row[j - 1]).min(prev[j - 1])
            };
            row[j] = local + best;
        }
        std::mem::swap(&mut prev, &mut row);
    }
    Ok(prev[cols - 1].sqrt())
}

/// Flat penalty switched on when the squared endpoint mismatch exceeds the
/// threshold (strict inequality).
pub fn endpoint_penalty(data_end: f64, sim_end: f64, weights: &LossWeights) -> f64 {
    let gap = data_end - sim_end;
    if gap * gap > weights.endpoint_threshold {
        weights.endpoint_weight
    } else {
        0.0
    }
}

/// Calibration loss terms. `sre` and `dtw` are the raw, unweighted errors;
/// `total` carries the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub sre: f64,
    pub dtw: f64,
    #[serde(rename = "final")]
    pub endpoint: f64,
    pub total: f64,
}

/// Loss on already-matched value sequences.
pub fn calibration_loss_aligned(
    data_values: &[f64],
    sim_values: &[f64],
    weights: &LossWeights,
) -> Result<LossBreakdown, MetricsError> {
    let sre = relative_squared_error_lenient(data_values, sim_values)?;
    let dtw_err = dtw(data_values, sim_values)?;
    let endpoint = endpoint_penalty(
        *data_values.last().expect("nonempty"),
        *sim_values.last().expect("nonempty"),
        weights,
    );
    Ok(LossBreakdown {
        sre,
        dtw: dtw_err,
        endpoint,
        total: weights.sre_weight * sre + weights.dtw_weight * dtw_err + endpoint,
    })
}

/// Matches every data time to a simulation time level and evaluates the loss
/// there. Errors when a data time is not on the simulation grid.
pub fn calibration_loss(
    data: &ImbibitionSeries,
    sim: &ImbibitionSeries,
    weights: &LossWeights,
) -> Result<LossBreakdown, MetricsError> {
    let idx = match_times(data.times(), sim.times())?;
    let sim_at: Vec<f64> = idx.iter().map(|&k| sim.values()[k]).collect();
    calibration_loss_aligned(data.values(), &sim_at, weights)
}

/// Index of each data time among the simulation times, requiring coincidence
/// up to roundoff.
pub fn match_times(data_times: &[f64], sim_times: &[f64]) -> Result<Vec<usize>, MetricsError> {
    if sim_times.len() < 2 {
        return Err(MetricsError::TooShort(sim_times.len()));
    }
    let t0 = sim_times[0];
    let dt = sim_times[1] - sim_times[0];
    let mut idx = Vec::with_capacity(data_times.len());
    for &tau in data_times {
        let k = ((tau - t0) / dt).round();
        let within = k >= 0.0 && (k as usize) < sim_times.len();
        if !within || (sim_times[k as usize] - tau).abs() > 1e-9 * tau.abs().max(1.0) {
            return Err(MetricsError::Misaligned(tau));
        }
        idx.push(k as usize);
    }
    Ok(idx)
}
