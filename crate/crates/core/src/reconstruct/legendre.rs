//! Shifted Legendre polynomials on `[0, horizon]`.
//!
//! Sign convention: degree one is `1 - 2 t / horizon`, so every degree starts
//! at +1. Orthogonality: the product of equal degrees integrates to
//! `horizon / (2 n + 1)`, distinct degrees to zero.

/// Standard Legendre polynomial on `[-1, 1]` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut curr = x;
    for k in 1..n {
        let next = ((2 * k + 1) as f64 * x * curr - k as f64 * prev) / (k + 1) as f64;
        prev = curr;
        curr = next;
    }
    curr
}

/// `P_n` shifted to `[0, horizon]` with `P_1(0) = +1`.
pub fn shifted_legendre(degree: usize, t: f64, horizon: f64) -> f64 {
    legendre(degree, 1.0 - 2.0 * t / horizon)
}

/// Evaluates `sum_n coeffs[n] * P_n(t)` with a single pass of the recurrence.
pub fn legendre_series(coeffs: &[f64], t: f64, horizon: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let x = 1.0 - 2.0 * t / horizon;
    let mut acc = coeffs[0];
    if coeffs.len() == 1 {
        return acc;
    }
    let mut prev = 1.0;
    let mut curr = x;
    acc += coeffs[1] * curr;
    for (k, &c) in coeffs.iter().enumerate().skip(2) {
        let k = k - 1;
        let next = ((2 * k + 1) as f64 * x * curr - k as f64 * prev) / (k + 1) as f64;
        prev = curr;
        curr = next;
        acc += c * next;
    }
    acc
}
