//! BFGS minimizer with finite-difference gradients and Armijo backtracking.
//!
//! Objectives may return infinity to mark infeasible points; the line search
//! simply shrinks past them.

#[derive(Debug, Clone, Copy)]
pub struct QnOptions {
    pub max_iters: usize,
    /// Stop when the accepted step is this small relative to the point.
    pub step_tol: f64,
    /// Stop when the objective decrease is this small.
    pub obj_tol: f64,
    /// Central-difference half-width for gradients.
    pub grad_step: f64,
}

impl Default for QnOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            step_tol: 1e-14,
            obj_tol: 1e-14,
            grad_step: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QnResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &QnOptions) -> QnResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return QnResult {
            x,
            value: fx,
            iterations: 0,
            converged: false,
        };
    }

    // inverse Hessian approximation, dense row-major
    let mut h_inv = identity(n);
    let mut grad = fd_gradient(&f, &x, opts.grad_step);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        // d = -H g
        let mut dir = vec![0.0; n];
        for i in 0..n {
            let row = &h_inv[i * n..(i + 1) * n];
            dir[i] = -row.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>();
        }
        let slope: f64 = dir.iter().zip(&grad).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            // not a descent direction; reset the model
            h_inv = identity(n);
            for (d, g) in dir.iter_mut().zip(&grad) {
                *d = -g;
            }
        }
        let slope: f64 = dir.iter().zip(&grad).map(|(a, b)| a * b).sum();

        // Armijo backtracking
        let mut alpha = 1.0f64;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
            let fc = f(&cand);
            if fc.is_finite() && fc <= fx + 1e-4 * alpha * slope {
                accepted = Some((cand, fc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // no progress possible along this direction
            break;
        };

        let step_norm: f64 = dir.iter().map(|d| (alpha * d) * (alpha * d)).sum::<f64>().sqrt();
        let x_norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let decrease = fx - f_new;

        let grad_new = fd_gradient(&f, &x_new, opts.grad_step);

        // BFGS update with curvature guard
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let s_norm: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-12 * s_norm * y_norm {
            bfgs_update(&mut h_inv, &s, &y, sy);
        }

        x = x_new;
        fx = f_new;
        grad = grad_new;

        if step_norm <= opts.step_tol * (1.0 + x_norm) || decrease <= opts.obj_tol * (1.0 + fx.abs())
        {
            converged = true;
            break;
        }
    }

    QnResult {
        x,
        value: fx,
        iterations,
        converged,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let step = h * (1.0 + x[i].abs());
        probe[i] = x[i] + step;
        let fp = f(&probe);
        probe[i] = x[i] - step;
        let fm = f(&probe);
        probe[i] = x[i];
        g[i] = if fp.is_finite() && fm.is_finite() {
            (fp - fm) / (2.0 * step)
        } else {
            0.0
        };
    }
    g
}

/// Sherman-Morrison style BFGS inverse update:
/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
fn bfgs_update(h_inv: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    // hy = H y
    let mut hy = vec![0.0; n];
    for i in 0..n {
        hy[i] = h_inv[i * n..(i + 1) * n]
            .iter()
            .zip(y)
            .map(|(a, b)| a * b)
            .sum();
    }
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h_inv[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                + rho * rho * yhy * s[i] * s[j]
                + rho * s[i] * s[j];
        }
    }
}
