//! Grid-refinement study: mean space-time error and experimental order of
//! convergence of the explicit schemes against a fine self-computed reference.
//!
//! Step sizes are dyadic (`dz = 2^-L`, `dt = 2^-(L+1)`) so every node of a
//! test grid coincides with a node of the reference grid and the error is
//! sampled without interpolation. The reference trajectory is never stored
//! whole; the test runs advance in lockstep with it and accumulate
//! differences on the fly.

use serde::Serialize;

use crate::solver::{
    initial_profile, BoundaryCondition, MaterialParams, Scheme, SimGrid, SolverError, Stepper,
};

#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub params: MaterialParams,
    pub ambient: f64,
    pub bc: BoundaryCondition,
    pub height: f64,
    pub duration: f64,
    /// Reference spatial step is `2^-ref_dz_exp`.
    pub ref_dz_exp: u32,
    /// Reference time step is `2^-ref_dt_exp`.
    pub ref_dt_exp: u32,
    /// Test levels: spatial step `2^-L`, time step `2^-(L+1)` per level `L`.
    pub level_exps: Vec<u32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub scheme: Scheme,
    pub dz: f64,
    pub dt: f64,
    /// Mean absolute space-time error against the reference.
    pub error: f64,
    /// `log2` of the error ratio against the next coarser level, when that
    /// level is exactly one halving away.
    pub order: Option<f64>,
}

/// One (scheme, level) trajectory advancing in sync with the reference run.
struct LevelRun {
    scheme: Scheme,
    grid: SimGrid,
    stepper: Stepper,
    current: Vec<f64>,
    next: Vec<f64>,
    step: usize,
    /// Reference steps per test step.
    stride_t: usize,
    /// Reference nodes per test node.
    stride_z: usize,
    abs_sum: f64,
}

impl LevelRun {
    fn mean_error(&self) -> f64 {
        self.abs_sum / (self.grid.intervals() as f64 * self.grid.steps() as f64)
    }

    fn advance(&mut self) -> Result<(), SolverError> {
        if !self
            .stepper
            .advance_into(self.scheme, &self.current, &mut self.next)
        {
            return Err(SolverError::Diverged { step: self.step + 1 });
        }
        std::mem::swap(&mut self.current, &mut self.next);
        Ok(())
    }
}

fn dyadic(exp: u32) -> f64 {
    (2.0f64).powi(-(exp as i32))
}

fn check_whole_multiple(extent: f64, step: f64, what: &str) -> Result<(), SolverError> {
    let n = extent / step;
    if (n - n.round()).abs() > 1e-9 || n.round() < 1.0 {
        return Err(SolverError::InvalidGrid(format!(
            "{what} {extent} is not a whole multiple of the step {step}; \
             test nodes would not coincide with reference nodes"
        )));
    }
    Ok(())
}

/// Runs the requested schemes across all levels and reports mean errors and
/// experimental orders. The reference trajectory uses the Heun scheme on the
/// `(ref_dz_exp, ref_dt_exp)` grid and is shared by every row.
pub fn convergence_study(
    cfg: &ConvergenceConfig,
    schemes: &[Scheme],
) -> Result<Vec<ConvergenceRow>, SolverError> {
    let ref_dz = dyadic(cfg.ref_dz_exp);
    let ref_dt = dyadic(cfg.ref_dt_exp);
    check_whole_multiple(cfg.height, ref_dz, "height")?;
    check_whole_multiple(cfg.duration, ref_dt, "duration")?;
    let ref_grid = SimGrid::new(cfg.height, cfg.duration, ref_dz, ref_dt)?;
    ref_grid.ensure_stable(&cfg.params)?;

    let mut runs = Vec::new();
    for &scheme in schemes {
        for &level in &cfg.level_exps {
            if level >= cfg.ref_dz_exp || level + 1 >= cfg.ref_dt_exp {
                return Err(SolverError::InvalidGrid(format!(
                    "level 2^-{level} is not strictly coarser than the reference"
                )));
            }
            let dz = dyadic(level);
            let dt = dyadic(level + 1);
            check_whole_multiple(cfg.height, dz, "height")?;
            check_whole_multiple(cfg.duration, dt, "duration")?;
            let grid = SimGrid::new(cfg.height, cfg.duration, dz, dt)?;
            grid.ensure_stable(&cfg.params)?;
            let current = initial_profile(&cfg.params, cfg.bc, cfg.ambient, &grid);
            let row_len = grid.intervals() + 1;
            runs.push(LevelRun {
                scheme,
                stepper: Stepper::new(&cfg.params, cfg.bc, cfg.ambient, &grid),
                grid,
                current,
                next: vec![0.0; row_len],
                step: 0,
                stride_t: 1 << (cfg.ref_dt_exp - level - 1),
                stride_z: 1 << (cfg.ref_dz_exp - level),
                abs_sum: 0.0,
            });
        }
    }

    let mut ref_stepper = Stepper::new(&cfg.params, cfg.bc, cfg.ambient, &ref_grid);
    let mut ref_current = initial_profile(&cfg.params, cfg.bc, cfg.ambient, &ref_grid);
    let mut ref_next = vec![0.0; ref_grid.intervals() + 1];

    for ref_step in 0..=ref_grid.steps() {
        for run in &mut runs {
            if ref_step % run.stride_t != 0 || run.step > run.grid.steps() {
                continue;
            }
            // both trajectories sit at the same physical time
            for (j, theta) in run.current.iter().enumerate() {
                run.abs_sum += (theta - ref_current[j * run.stride_z]).abs();
            }
            if run.step < run.grid.steps() {
                run.advance()?;
            }
            run.step += 1;
        }
        if ref_step < ref_grid.steps() {
            if !ref_stepper.advance_into(Scheme::Heun, &ref_current, &mut ref_next) {
                return Err(SolverError::Diverged { step: ref_step + 1 });
            }
            std::mem::swap(&mut ref_current, &mut ref_next);
        }
    }

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(runs.len());
    for run in &runs {
        let error = run.mean_error();
        let order = rows
            .iter()
            .rev()
            .find(|r| r.scheme == run.scheme)
            .filter(|r| (r.dz / run.grid.dz() - 2.0).abs() < 1e-12)
            .map(|r| (r.error / error).log2());
        rows.push(ConvergenceRow {
            scheme: run.scheme,
            dz: run.grid.dz(),
            dt: run.grid.dt(),
            error,
            order,
        });
    }
    Ok(rows)
}

/// Mean space-time error of one trajectory against the reference of `cfg`,
/// with explicit step exponents for both. Exposed mainly so a scheme can be
/// checked against itself at the reference resolution (which must give zero).
pub fn mean_error_vs_reference(
    cfg: &ConvergenceConfig,
    scheme: Scheme,
    dz_exp: u32,
    dt_exp: u32,
) -> Result<f64, SolverError> {
    if dz_exp > cfg.ref_dz_exp || dt_exp > cfg.ref_dt_exp {
        return Err(SolverError::InvalidGrid(
            "test grid must not be finer than the reference".into(),
        ));
    }
    let dz = dyadic(dz_exp);
    let dt = dyadic(dt_exp);
    check_whole_multiple(cfg.height, dz, "height")?;
    check_whole_multiple(cfg.duration, dt, "duration")?;
    let grid = SimGrid::new(cfg.height, cfg.duration, dz, dt)?;
    grid.ensure_stable(&cfg.params)?;
    let ref_grid = SimGrid::new(
        cfg.height,
        cfg.duration,
        dyadic(cfg.ref_dz_exp),
        dyadic(cfg.ref_dt_exp),
    )?;
    ref_grid.ensure_stable(&cfg.params)?;

    let mut run = LevelRun {
        scheme,
        stepper: Stepper::new(&cfg.params, cfg.bc, cfg.ambient, &grid),
        current: initial_profile(&cfg.params, cfg.bc, cfg.ambient, &grid),
        next: vec![0.0; grid.intervals() + 1],
        grid,
        step: 0,
        stride_t: 1 << (cfg.ref_dt_exp - dt_exp),
        stride_z: 1 << (cfg.ref_dz_exp - dz_exp),
        abs_sum: 0.0,
    };
    let mut ref_stepper = Stepper::new(&cfg.params, cfg.bc, cfg.ambient, &ref_grid);
    let mut ref_current = initial_profile(&cfg.params, cfg.bc, cfg.ambient, &ref_grid);
    let mut ref_next = vec![0.0; ref_grid.intervals() + 1];

    for ref_step in 0..=ref_grid.steps() {
        if ref_step % run.stride_t == 0 && run.step <= run.grid.steps() {
            for (j, theta) in run.current.iter().enumerate() {
                run.abs_sum += (theta - ref_current[j * run.stride_z]).abs();
            }
            if run.step < run.grid.steps() {
                run.advance()?;
            }
            run.step += 1;
        }
        if ref_step < ref_grid.steps() {
            if !ref_stepper.advance_into(Scheme::Heun, &ref_current, &mut ref_next) {
                return Err(SolverError::Diverged { step: ref_step + 1 });
            }
            std::mem::swap(&mut ref_current, &mut ref_next);
        }
    }
    Ok(run.mean_error())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::absorption::AbsorptionLaw;

    fn small_config() -> ConvergenceConfig {
        let law = AbsorptionLaw::new(0.219, 1.0, 9.807e-4).unwrap();
        ConvergenceConfig {
            params: MaterialParams::new(0.285, law, 0.0).unwrap(),
            ambient: 6.254e-2,
            bc: BoundaryCondition::Dirichlet,
            height: 1.0,
            duration: 2.0,
            ref_dz_exp: 5,
            ref_dt_exp: 8,
            level_exps: vec![2, 3],
        }
    }

    #[test]
    fn self_comparison_at_reference_resolution_is_zero() {
        let cfg = small_config();
        let e = mean_error_vs_reference(&cfg, Scheme::Heun, 5, 8).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn coarser_levels_have_larger_errors_and_orders_near_two() {
        let cfg = small_config();
        let rows = convergence_study(&cfg, &[Scheme::Heun]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].order.is_none());
        assert!(rows[0].error > rows[1].error);
        // grids this small are far from the asymptotic regime; this only
        // checks the plumbing, the benchmark suite checks the actual orders
        let order = rows[1].order.unwrap();
        assert!((0.3..3.0).contains(&order), "order {order}");
    }

    #[test]
    fn single_level_emits_no_order() {
        let mut cfg = small_config();
        cfg.level_exps = vec![3];
        let rows = convergence_study(&cfg, &[Scheme::Heun, Scheme::Ftcs]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.order.is_none()));
    }

    #[test]
    fn level_finer_than_reference_is_rejected() {
        let mut cfg = small_config();
        cfg.level_exps = vec![5];
        assert!(convergence_study(&cfg, &[Scheme::Heun]).is_err());
        // nodes that cannot coincide: duration not dyadic
        let mut cfg = small_config();
        cfg.duration = 1.9;
        assert!(convergence_study(&cfg, &[Scheme::Heun]).is_err());
    }
}
