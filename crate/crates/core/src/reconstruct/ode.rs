//! Embedded Dormand-Prince 5(4) integrator for the two-state reconstruction
//! system, with step clamping onto requested sample times.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("step budget exhausted at t = {0}")]
    TooManySteps(f64),
    #[error("sample times must be increasing and start at or after t0")]
    BadSampleTimes,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_steps: 100_000,
        }
    }
}

type State = [f64; 2];

// Dormand-Prince coefficients.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights (same as the last A row, FSAL pair).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0`, returning the state at each sample
/// time. Sample times must be increasing; a sample equal to `t0` returns the
/// initial state.
pub fn integrate<F>(
    f: F,
    t0: f64,
    y0: State,
    sample_times: &[f64],
    opts: &IntegratorOptions,
) -> Result<Vec<State>, OdeError>
where
    F: Fn(f64, &State) -> State,
{
    for w in sample_times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(OdeError::BadSampleTimes);
        }
    }
    if let Some(&first) = sample_times.first() {
        if first < t0 {
            return Err(OdeError::BadSampleTimes);
        }
    }
    let mut out = Vec::with_capacity(sample_times.len());
    let Some(&t_end) = sample_times.last() else {
        return Ok(out);
    };

    let mut t = t0;
    let mut y = y0;
    let mut next_sample = 0;
    while next_sample < sample_times.len() && sample_times[next_sample] <= t {
        out.push(y);
        next_sample += 1;
    }
    if next_sample >= sample_times.len() {
        return Ok(out);
    }

    let span = t_end - t0;
    let mut h = (span / 100.0).max(f64::MIN_POSITIVE);
    let mut steps = 0usize;

    while t < t_end {
        if steps >= opts.max_steps {
            return Err(OdeError::TooManySteps(t));
        }
        steps += 1;

        // land exactly on the next sample time
        let target = sample_times[next_sample];
        let mut clamped = false;
        if t + h >= target {
            h = target - t;
            clamped = true;
        }
        if h <= f64::EPSILON * t.abs().max(1.0) {
            return Err(OdeError::StepUnderflow(t));
        }

        let mut k = [[0.0f64; 2]; 7];
        k[0] = f(t, &y);
        for i in 1..7 {
            let mut yi = y;
            for (j, kj) in k.iter().enumerate().take(i) {
                yi[0] += h * A[i][j] * kj[0];
                yi[1] += h * A[i][j] * kj[1];
            }
            k[i] = f(t + C[i] * h, &yi);
        }
        let mut y5 = y;
        let mut y4 = y;
        for (j, kj) in k.iter().enumerate() {
            y5[0] += h * B5[j] * kj[0];
            y5[1] += h * B5[j] * kj[1];
            y4[0] += h * B4[j] * kj[0];
            y4[1] += h * B4[j] * kj[1];
        }

        // scaled RMS error of the embedded pair
        let mut err = 0.0;
        for i in 0..2 {
            let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y5[i].abs());
            let e = (y5[i] - y4[i]) / scale;
            err += e * e;
        }
        err = (err / 2.0).sqrt();

        if err <= 1.0 {
            // accepted (a NaN error norm fails this test and shrinks below)
            t = if clamped { target } else { t + h };
            y = y5;
            while next_sample < sample_times.len() && sample_times[next_sample] <= t {
                out.push(y);
                next_sample += 1;
            }
            if next_sample >= sample_times.len() {
                break;
            }
            let grow = 0.9 * (1.0 / err.max(1e-10)).powf(0.2);
            h *= grow.clamp(0.2, 5.0);
        } else {
            let shrink = 0.9 * (1.0 / err).powf(0.2);
            h *= shrink.clamp(0.1, 0.9);
            if !h.is_finite() || h <= 0.0 {
                return Err(OdeError::StepUnderflow(t));
            }
        }
    }
    Ok(out)
}
