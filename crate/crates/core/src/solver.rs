//! Explicit finite-difference integrator for the one-dimensional moisture
//! equation `d theta / dt = d^2 B(theta / n0) / dz^2` on a column of height H.
//!
//! Space is discretized with central second differences; time with either a
//! two-stage Heun update (the production scheme, second order) or plain
//! forward Euler (FTCS, kept for scheme comparisons). The bottom face is held
//! at full saturation; the top face is either pinned to the ambient moisture
//! (Dirichlet) or exchanges with it at a finite rate (Robin).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::absorption::AbsorptionLaw;
use crate::series::{ImbibitionSeries, SeriesError};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid material parameters: {0}")]
    InvalidParams(String),
    #[error("time step {dt} exceeds the stability bound {bound}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("update produced non-finite values (unstable step size?)")]
    Unstable,
    #[error("solution diverged at time step {step}")]
    Diverged { step: usize },
    #[error("ambient moisture {ambient} must lie in [0, porosity {porosity}]")]
    InvalidAmbient { ambient: f64, porosity: f64 },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Physical description of a porous specimen: porosity, absorption law, and
/// the top-face water exchange rate (1/cm, used only under Robin boundaries).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct MaterialParams {
    porosity: f64,
    law: AbsorptionLaw,
    exchange_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    porosity: f64,
    law: AbsorptionLaw,
    #[serde(default)]
    exchange_rate: f64,
}

impl TryFrom<RawParams> for MaterialParams {
    type Error = SolverError;

    fn try_from(raw: RawParams) -> Result<Self, Self::Error> {
        MaterialParams::new(raw.porosity, raw.law, raw.exchange_rate)
    }
}

impl From<MaterialParams> for RawParams {
    fn from(p: MaterialParams) -> Self {
        RawParams {
            porosity: p.porosity,
            law: p.law,
            exchange_rate: p.exchange_rate,
        }
    }
}

impl MaterialParams {
    pub fn new(
        porosity: f64,
        law: AbsorptionLaw,
        exchange_rate: f64,
    ) -> Result<Self, SolverError> {
        if !porosity.is_finite() || porosity <= 0.0 || porosity >= 1.0 {
            return Err(SolverError::InvalidParams(format!(
                "porosity {porosity} must lie in (0, 1)"
            )));
        }
        if !exchange_rate.is_finite() || exchange_rate < 0.0 {
            return Err(SolverError::InvalidParams(format!(
                "exchange rate {exchange_rate} must be nonnegative"
            )));
        }
        Ok(Self {
            porosity,
            law,
            exchange_rate,
        })
    }

    pub fn porosity(&self) -> f64 {
        self.porosity
    }

    pub fn law(&self) -> &AbsorptionLaw {
        &self.law
    }

    pub fn exchange_rate(&self) -> f64 {
        self.exchange_rate
    }
}

/// Largest explicit time step the stability bound allows for spatial step
/// `dz`: `porosity * dz^2 / diffusion_rate`. Infinite when the law carries no
/// diffusion at all.
pub fn max_stable_dt(params: &MaterialParams, dz: f64) -> f64 {
    let peak = params.law().diffusion_rate();
    if peak == 0.0 {
        f64::INFINITY
    } else {
        params.porosity() * dz * dz / peak
    }
}

/// Treatment of the top face. The bottom face is always held at full
/// saturation (`theta = porosity`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    /// Top face pinned to the ambient moisture.
    Dirichlet,
    /// Top-face gradient proportional to the moisture deficit, with the
    /// material's exchange rate as the constant.
    Robin,
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Two-stage Heun update; second order in time.
    Heun,
    /// Forward Euler (forward in time, central in space); first order.
    Ftcs,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Heun => write!(f, "mol"),
            Scheme::Ftcs => write!(f, "ftcs"),
        }
    }
}

/// Uniform space-time grid.
///
/// The constructor derives the node and step counts from the requested extent
/// and then snaps the extent so `height = n_z * dz` and `duration = n_t * dt`
/// hold exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    height: f64,
    duration: f64,
    dz: f64,
    dt: f64,
    n_z: usize,
    n_t: usize,
}

impl SimGrid {
    pub fn new(height: f64, duration: f64, dz: f64, dt: f64) -> Result<Self, SolverError> {
        for (name, v) in [
            ("height", height),
            ("duration", duration),
            ("dz", dz),
            ("dt", dt),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(SolverError::InvalidGrid(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        let n_z = (height / dz).round() as usize;
        let n_t = (duration / dt).round() as usize;
        if n_z < 2 {
            return Err(SolverError::InvalidGrid(format!(
                "height {height} spans fewer than two spatial steps of {dz}"
            )));
        }
        if n_t < 1 {
            return Err(SolverError::InvalidGrid(format!(
                "duration {duration} is shorter than one time step of {dt}"
            )));
        }
        Ok(Self {
            height: n_z as f64 * dz,
            duration: n_t as f64 * dt,
            dz,
            dt,
            n_z,
            n_t,
        })
    }

    /// Grid constructor that also enforces the stability bound against the
    /// given material. Use [`SimGrid::new`] plus an explicit override to run
    /// intentionally unstable demonstrations.
    pub fn new_stable(
        height: f64,
        duration: f64,
        dz: f64,
        dt: f64,
        params: &MaterialParams,
    ) -> Result<Self, SolverError> {
        let grid = Self::new(height, duration, dz, dt)?;
        grid.ensure_stable(params)?;
        Ok(grid)
    }

    pub fn ensure_stable(&self, params: &MaterialParams) -> Result<(), SolverError> {
        let bound = max_stable_dt(params, self.dz);
        if self.dt > bound {
            return Err(SolverError::CflViolation { dt: self.dt, bound });
        }
        Ok(())
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of spatial intervals; the row length is `intervals() + 1`.
    pub fn intervals(&self) -> usize {
        self.n_z
    }

    /// Number of time steps; the run produces `steps() + 1` time levels.
    pub fn steps(&self) -> usize {
        self.n_t
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.dz
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// Full space-time moisture record; row `k` is the profile at time level `k`.
#[derive(Debug, Clone)]
pub struct MoistureField {
    data: Vec<f64>,
    row_len: usize,
    ambient: f64,
}

impl MoistureField {
    fn with_capacity(rows: usize, row_len: usize, ambient: f64) -> Self {
        Self {
            data: Vec::with_capacity(rows * row_len),
            row_len,
            ambient,
        }
    }

    fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.row_len);
        self.data.extend_from_slice(row);
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.row_len
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.row_len..(k + 1) * self.row_len]
    }

    pub fn row_len(&self) -> usize {
        self.row_len
    }

    pub fn ambient(&self) -> f64 {
        self.ambient
    }

    /// Extremes over the whole record; handy for maximum-principle checks.
    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Imposes the boundary values on a moisture profile in place.
///
/// The bottom node is pinned to the porosity. Under Dirichlet the top node is
/// pinned to the ambient moisture; under Robin it is set from the one-sided
/// second-order gradient extrapolation balanced against the exchange flux:
/// `(4 t1 - t2 + 2 K ambient dz) / (3 + 2 K dz)` with `t1`, `t2` the two
/// nodes below the top.
pub fn apply_boundary(
    profile: &mut [f64],
    params: &MaterialParams,
    bc: BoundaryCondition,
    ambient: f64,
    dz: f64,
) {
    let n = profile.len() - 1;
    debug_assert!(n >= 2, "boundary treatment needs at least three nodes");
    profile[0] = params.porosity();
    match bc {
        BoundaryCondition::Dirichlet => profile[n] = ambient,
        BoundaryCondition::Robin => {
            let k = params.exchange_rate();
            profile[n] = (4.0 * profile[n - 1] - profile[n - 2] + 2.0 * k * ambient * dz)
                / (3.0 + 2.0 * k * dz);
        }
    }
}

/// Scratch buffers reused across steps of one simulation.
struct StepScratch {
    law_row: Vec<f64>,
    predictor: Vec<f64>,
    rate: Vec<f64>,
}

impl StepScratch {
    fn new(row_len: usize) -> Self {
        Self {
            law_row: vec![0.0; row_len],
            predictor: vec![0.0; row_len],
            rate: vec![0.0; row_len],
        }
    }
}

/// Writes `B(theta_j / porosity)` for a whole row, clamping the saturation
/// ratio against float noise.
fn law_row(law: &AbsorptionLaw, porosity: f64, row: &[f64], out: &mut [f64]) {
    for (o, &theta) in out.iter_mut().zip(row) {
        *o = law.value_clamped(theta / porosity);
    }
}

/// Central second difference of the law row, written into `rate[1..n]`.
fn interior_rate(law_vals: &[f64], inv_dz2: f64, rate: &mut [f64]) {
    let n = law_vals.len() - 1;
    for j in 1..n {
        rate[j] = (law_vals[j + 1] - 2.0 * law_vals[j] + law_vals[j - 1]) * inv_dz2;
    }
}

/// One step of the chosen scheme, writing the next row into `next`.
/// Returns false when the update produced non-finite values.
#[allow(clippy::too_many_arguments)]
fn advance(
    scheme: Scheme,
    current: &[f64],
    next: &mut [f64],
    scratch: &mut StepScratch,
    params: &MaterialParams,
    bc: BoundaryCondition,
    ambient: f64,
    dz: f64,
    dt: f64,
) -> bool {
    let n = current.len() - 1;
    let inv_dz2 = 1.0 / (dz * dz);
    let law = params.law();
    let porosity = params.porosity();

    law_row(law, porosity, current, &mut scratch.law_row);
    interior_rate(&scratch.law_row, inv_dz2, &mut scratch.rate);

    match scheme {
        Scheme::Ftcs => {
            next.copy_from_slice(current);
            for j in 1..n {
                next[j] = current[j] + dt * scratch.rate[j];
            }
            apply_boundary(next, params, bc, ambient, dz);
        }
        Scheme::Heun => {
            // Predictor stage: forward Euler with the boundaries re-imposed so
            // both stages see consistent boundary values.
            scratch.predictor.copy_from_slice(current);
            for j in 1..n {
                scratch.predictor[j] = current[j] + dt * scratch.rate[j];
            }
            apply_boundary(&mut scratch.predictor, params, bc, ambient, dz);

            law_row(law, porosity, &scratch.predictor, &mut scratch.law_row);
            next.copy_from_slice(current);
            for j in 1..n {
                let corrector = (scratch.law_row[j + 1] - 2.0 * scratch.law_row[j]
                    + scratch.law_row[j - 1])
                    * inv_dz2;
                next[j] = current[j] + 0.5 * dt * (scratch.rate[j] + corrector);
            }
            apply_boundary(next, params, bc, ambient, dz);
        }
    }
    next.iter().all(|v| v.is_finite())
}

/// Reusable stepping state for one trajectory: parameters plus scratch
/// buffers. Used by the simulation loop and the convergence harness.
pub(crate) struct Stepper {
    params: MaterialParams,
    bc: BoundaryCondition,
    ambient: f64,
    dz: f64,
    dt: f64,
    scratch: StepScratch,
}

impl Stepper {
    pub(crate) fn new(
        params: &MaterialParams,
        bc: BoundaryCondition,
        ambient: f64,
        grid: &SimGrid,
    ) -> Self {
        Self {
            params: *params,
            bc,
            ambient,
            dz: grid.dz(),
            dt: grid.dt(),
            scratch: StepScratch::new(grid.intervals() + 1),
        }
    }

    /// Writes the next row into `next`; false when non-finite values appear.
    pub(crate) fn advance_into(
        &mut self,
        scheme: Scheme,
        current: &[f64],
        next: &mut [f64],
    ) -> bool {
        advance(
            scheme,
            current,
            next,
            &mut self.scratch,
            &self.params,
            self.bc,
            self.ambient,
            self.dz,
            self.dt,
        )
    }
}

/// One two-stage Heun step from `profile`; boundary values are imposed on the
/// predictor and on the returned row.
pub fn step_heun(
    profile: &[f64],
    params: &MaterialParams,
    bc: BoundaryCondition,
    ambient: f64,
    dz: f64,
    dt: f64,
) -> Result<Vec<f64>, SolverError> {
    step_once(Scheme::Heun, profile, params, bc, ambient, dz, dt)
}

/// One forward-Euler (FTCS) step from `profile`.
pub fn step_ftcs(
    profile: &[f64],
    params: &MaterialParams,
    bc: BoundaryCondition,
    ambient: f64,
    dz: f64,
    dt: f64,
) -> Result<Vec<f64>, SolverError> {
    step_once(Scheme::Ftcs, profile, params, bc, ambient, dz, dt)
}

fn step_once(
    scheme: Scheme,
    profile: &[f64],
    params: &MaterialParams,
    bc: BoundaryCondition,
    ambient: f64,
    dz: f64,
    dt: f64,
) -> Result<Vec<f64>, SolverError> {
    if profile.len() < 3 {
        return Err(SolverError::InvalidGrid(
            "profile needs at least three nodes".into(),
        ));
    }
    let mut scratch = StepScratch::new(profile.len());
    let mut next = vec![0.0; profile.len()];
    if advance(
        scheme, profile, &mut next, &mut scratch, params, bc, ambient, dz, dt,
    ) {
        Ok(next)
    } else {
        Err(SolverError::Unstable)
    }
}

/// Absorbed fluid mass per unit contact area: composite trapezoid of the
/// moisture profile times the fluid density.
pub fn uptake(profile: &[f64], dz: f64, fluid_density: f64) -> f64 {
    debug_assert!(profile.len() >= 2);
    let n = profile.len() - 1;
    let interior: f64 = profile[1..n].iter().sum();
    fluid_density * 0.5 * dz * (profile[0] + 2.0 * interior + profile[n])
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub scheme: Scheme,
    pub fluid_density: f64,
    /// Keep every time level of the moisture field. Off by default: parameter
    /// searches run thousands of simulations and only need the uptake curve.
    pub store_field: bool,
    /// Refuse to run when `dt` exceeds the stability bound. Disable only for
    /// instability demonstrations.
    pub check_stability: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Heun,
            fluid_density: 1.0,
            store_field: false,
            check_stability: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Uptake value at every time level of the grid.
    pub uptake: ImbibitionSeries,
    /// Present when `store_field` was requested.
    pub field: Option<MoistureField>,
}

/// Runs the imbibition simulation from the dry-column initial state
/// (saturated bottom node, ambient moisture elsewhere).
pub fn simulate(
    params: &MaterialParams,
    grid: &SimGrid,
    bc: BoundaryCondition,
    ambient: f64,
    opts: &SimOptions,
) -> Result<SimOutput, SolverError> {
    check_ambient(params, ambient)?;
    if opts.check_stability {
        grid.ensure_stable(params)?;
    }

    let row_len = grid.intervals() + 1;
    let mut current = initial_profile(params, bc, ambient, grid);
    let mut next = vec![0.0; row_len];
    let mut scratch = StepScratch::new(row_len);

    let mut field = opts
        .store_field
        .then(|| MoistureField::with_capacity(grid.steps() + 1, row_len, ambient));
    if let Some(f) = field.as_mut() {
        f.push_row(&current);
    }

    let mut uptake_values = Vec::with_capacity(grid.steps() + 1);
    uptake_values.push(uptake(&current, grid.dz(), opts.fluid_density));

    for k in 0..grid.steps() {
        let finite = advance(
            opts.scheme,
            &current,
            &mut next,
            &mut scratch,
            params,
            bc,
            ambient,
            grid.dz(),
            grid.dt(),
        );
        if !finite {
            return Err(SolverError::Diverged { step: k + 1 });
        }
        std::mem::swap(&mut current, &mut next);
        uptake_values.push(uptake(&current, grid.dz(), opts.fluid_density));
        if let Some(f) = field.as_mut() {
            f.push_row(&current);
        }
    }

    let times = (0..=grid.steps()).map(|k| grid.time(k)).collect();
    let uptake =
        ImbibitionSeries::with_fluid_density(times, uptake_values, opts.fluid_density)?;
    Ok(SimOutput { uptake, field })
}

/// Uptake values only, one per time level; the lean path used by calibration.
pub(crate) fn simulate_uptake(
    params: &MaterialParams,
    grid: &SimGrid,
    bc: BoundaryCondition,
    ambient: f64,
    scheme: Scheme,
    fluid_density: f64,
) -> Result<Vec<f64>, SolverError> {
    check_ambient(params, ambient)?;
    grid.ensure_stable(params)?;

    let row_len = grid.intervals() + 1;
    let mut current = initial_profile(params, bc, ambient, grid);
    let mut next = vec![0.0; row_len];
    let mut scratch = StepScratch::new(row_len);
    let mut values = Vec::with_capacity(grid.steps() + 1);
    values.push(uptake(&current, grid.dz(), fluid_density));
    for k in 0..grid.steps() {
        if !advance(
            scheme,
            &current,
            &mut next,
            &mut scratch,
            params,
            bc,
            ambient,
            grid.dz(),
            grid.dt(),
        ) {
            return Err(SolverError::Diverged { step: k + 1 });
        }
        std::mem::swap(&mut current, &mut next);
        values.push(uptake(&current, grid.dz(), fluid_density));
    }
    Ok(values)
}

fn check_ambient(params: &MaterialParams, ambient: f64) -> Result<(), SolverError> {
    if !ambient.is_finite() || ambient < 0.0 || ambient > params.porosity() {
        return Err(SolverError::InvalidAmbient {
            ambient,
            porosity: params.porosity(),
        });
    }
    Ok(())
}

pub(crate) fn initial_profile(
    params: &MaterialParams,
    bc: BoundaryCondition,
    ambient: f64,
    grid: &SimGrid,
) -> Vec<f64> {
    let mut row = vec![ambient; grid.intervals() + 1];
    row[0] = params.porosity();
    apply_boundary(&mut row, params, bc, ambient, grid.dz());
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::absorption::AbsorptionLaw;
    use approx::assert_relative_eq;

    fn material(porosity: f64, s_r: f64, s_s: f64, d: f64, k_w: f64) -> MaterialParams {
        MaterialParams::new(porosity, AbsorptionLaw::new(s_r, s_s, d).unwrap(), k_w).unwrap()
    }

    #[test]
    fn stability_bound_examples() {
        let p = material(0.285, 0.219, 1.0, 9.807e-4, 0.0);
        assert_relative_eq!(max_stable_dt(&p, 0.125), 4.5408, max_relative = 1e-3);

        let zero_d = material(0.5, 0.2, 0.8, 0.0, 0.0);
        assert_eq!(max_stable_dt(&zero_d, 0.1), f64::INFINITY);

        let unit = material(0.5, 0.2, 0.8, 0.5, 0.0);
        assert_relative_eq!(max_stable_dt(&unit, 1.0), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn grid_snaps_extent_to_whole_steps() {
        let g = SimGrid::new(8.0, 60.0, 0.125, 0.05).unwrap();
        assert_eq!(g.intervals(), 64);
        assert_eq!(g.steps(), 1200);
        assert_eq!(g.height(), 64.0 * 0.125);
        assert_eq!(g.duration(), 1200.0 * 0.05);

        // extent not an exact multiple: count rounds, extent snaps
        let g = SimGrid::new(1.0, 1.0, 0.3, 0.45).unwrap();
        assert_eq!(g.intervals(), 3);
        assert_relative_eq!(g.height(), 0.9, max_relative = 1e-15);
        assert_eq!(g.steps(), 2);
        assert_relative_eq!(g.duration(), 0.9, max_relative = 1e-15);
    }

    #[test]
    fn stable_constructor_rejects_oversized_steps() {
        let p = material(0.5, 0.2, 0.8, 1e-3, 0.0);
        // bound = 0.5 * 0.01 / 1e-3 = 5.0
        assert!(SimGrid::new_stable(1.0, 10.0, 0.1, 5.0, &p).is_ok());
        let err = SimGrid::new_stable(1.0, 10.0, 0.1, 5.01, &p).unwrap_err();
        assert!(matches!(err, SolverError::CflViolation { .. }));
    }

    #[test]
    fn boundary_dirichlet_pins_both_faces() {
        let p = material(0.5, 0.2, 0.8, 1e-3, 0.0);
        let mut row = vec![0.1, 0.2, 0.3, 0.4];
        apply_boundary(&mut row, &p, BoundaryCondition::Dirichlet, 2.33e-5, 0.1);
        assert_eq!(row[0], 0.5);
        assert_eq!(row[3], 2.33e-5);
    }

    #[test]
    fn boundary_robin_zero_rate_preserves_constant_profile() {
        let p = material(0.5, 0.2, 0.8, 1e-3, 0.0);
        let mut row = vec![0.5, 0.3, 0.3, 0.0];
        apply_boundary(&mut row, &p, BoundaryCondition::Robin, 0.02, 0.1);
        assert_relative_eq!(row[3], 0.3, max_relative = 1e-15);
    }

    #[test]
    fn boundary_robin_large_rate_approaches_ambient() {
        let p = material(0.5, 0.2, 0.8, 1e-3, 1e8);
        let mut row = vec![0.5, 0.3, 0.3, 0.0];
        apply_boundary(&mut row, &p, BoundaryCondition::Robin, 0.02, 0.1);
        assert!((row[3] - 0.02).abs() < 1e-6);
    }

    #[test]
    fn robin_zero_rate_has_zero_extrapolated_gradient() {
        let p = material(0.5, 0.2, 0.8, 1e-3, 0.0);
        let dz = 0.1;
        let mut row = vec![0.5, 0.41, 0.37, 0.12, 0.0];
        apply_boundary(&mut row, &p, BoundaryCondition::Robin, 0.02, dz);
        let n = row.len() - 1;
        let grad = (3.0 * row[n] - 4.0 * row[n - 1] + row[n - 2]) / (2.0 * dz);
        assert!(grad.abs() < 1e-14);
    }

    #[test]
    fn zero_diffusion_step_is_identity_inside() {
        let p = material(0.5, 0.2, 0.8, 0.0, 0.0);
        let row = vec![0.5, 0.3, 0.2, 0.1, 0.02];
        for step in [step_heun, step_ftcs] {
            let next = step(&row, &p, BoundaryCondition::Dirichlet, 0.02, 0.1, 0.5).unwrap();
            assert_eq!(&next[1..4], &row[1..4]);
        }
    }

    #[test]
    fn uniform_profile_is_stationary() {
        // a profile that already satisfies the boundary values (here: fully
        // saturated column with ambient equal to porosity) has zero second
        // differences everywhere and must not move
        let p = material(0.5, 0.2, 0.8, 1e-3, 0.0);
        let row = vec![0.5; 6];
        for step in [step_heun, step_ftcs] {
            let next = step(&row, &p, BoundaryCondition::Dirichlet, 0.5, 0.1, 0.01).unwrap();
            assert_eq!(next, row);
        }
        // uniform interior away from the inlet: second differences vanish, so
        // interior nodes are unchanged by the forward-Euler stage
        let row = vec![0.5, 0.3, 0.3, 0.3, 0.3, 0.02];
        let next = step_ftcs(&row, &p, BoundaryCondition::Dirichlet, 0.02, 0.1, 0.01).unwrap();
        assert_eq!(&next[2..4], &row[2..4]);
    }

    /// Independent scalar transcription of the two-stage update, kept free of
    /// the production helpers on purpose.
    #[test]
    fn heun_step_matches_hand_transcription() {
        let porosity = 0.5;
        let (s_r, s_s, d) = (0.2, 0.8, 1e-3);
        let (dz, dt) = (1.0, 0.1);
        let ambient = 0.02;
        let row = [0.5, 0.02, 0.02, 0.02, 0.02];

        let b = |theta: f64| -> f64 {
            let s = (theta / porosity).clamp(0.0, 1.0);
            if s <= s_r {
                0.0
            } else if s >= s_s {
                2.0 * d / 3.0 * (s_s - s_r)
            } else {
                2.0 * d / 3.0 * (s_r - s).powi(2) * (3.0 * s_s - s_r - 2.0 * s)
                    / (s_r - s_s).powi(2)
            }
        };

        let mut alpha = [0.0; 5];
        for j in 1..4 {
            alpha[j] = (b(row[j + 1]) - 2.0 * b(row[j]) + b(row[j - 1])) / (dz * dz);
        }
        let mut predictor = row;
        for j in 1..4 {
            predictor[j] = row[j] + dt * alpha[j];
        }
        predictor[0] = porosity;
        predictor[4] = ambient;
        let mut expected = row;
        for j in 1..4 {
            let beta =
                (b(predictor[j + 1]) - 2.0 * b(predictor[j]) + b(predictor[j - 1])) / (dz * dz);
            expected[j] = row[j] + 0.5 * dt * (alpha[j] + beta);
        }
        expected[0] = porosity;
        expected[4] = ambient;

        let p = material(porosity, s_r, s_s, d, 0.0);
        let got = step_heun(&row, &p, BoundaryCondition::Dirichlet, ambient, dz, dt).unwrap();
        for (g, e) in got.iter().zip(expected.iter()) {
            assert_relative_eq!(g, e, max_relative = 1e-14);
        }

        // FTCS coincides with the predictor stage
        let ftcs = step_ftcs(&row, &p, BoundaryCondition::Dirichlet, ambient, dz, dt).unwrap();
        for (g, e) in ftcs.iter().zip(predictor.iter()) {
            assert_relative_eq!(g, e, max_relative = 1e-14);
        }
    }

    #[test]
    fn scheme_gap_shrinks_quadratically_with_dt() {
        // |heun - ftcs| per step is O(dt^2): halving dt shrinks it ~4x
        let p = material(0.4, 0.2, 0.9, 2e-3, 0.0);
        let ambient = 0.05;
        let dz = 0.1;
        let mut row = vec![ambient; 21];
        row[0] = 0.4;
        // take a few stabilizing steps so the profile is smooth
        for _ in 0..5 {
            row = step_heun(&row, &p, BoundaryCondition::Dirichlet, ambient, dz, 0.2).unwrap();
        }
        let gap = |dt: f64| -> f64 {
            let a = step_heun(&row, &p, BoundaryCondition::Dirichlet, ambient, dz, dt).unwrap();
            let b = step_ftcs(&row, &p, BoundaryCondition::Dirichlet, ambient, dz, dt).unwrap();
            a.iter()
                .zip(&b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let ratio = gap(0.4) / gap(0.2);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn uptake_quadrature_examples() {
        // constant profile integrates to value * height
        let row = vec![0.3; 11];
        assert_relative_eq!(uptake(&row, 0.5, 1.0), 0.3 * 5.0, max_relative = 1e-14);
        // linear profile integrates to height^2 / 2
        let dz = 0.25;
        let row: Vec<f64> = (0..=8).map(|j| j as f64 * dz).collect();
        assert_relative_eq!(uptake(&row, dz, 1.0), 2.0, max_relative = 1e-14);
        // hand-computed three-node case
        assert_relative_eq!(uptake(&[1.0, 0.0, 0.0], 0.5, 1.0), 0.25, max_relative = 1e-15);
        // density scales linearly
        assert_relative_eq!(
            uptake(&[1.0, 0.0, 0.0], 0.5, 2.0),
            0.5,
            max_relative = 1e-15
        );
    }

    #[test]
    fn zero_diffusion_run_keeps_uptake_constant() {
        let p = material(0.5, 0.2, 0.8, 0.0, 0.0);
        let grid = SimGrid::new(2.0, 10.0, 0.1, 0.5).unwrap();
        let out = simulate(
            &p,
            &grid,
            BoundaryCondition::Dirichlet,
            0.02,
            &SimOptions {
                store_field: true,
                ..Default::default()
            },
        )
        .unwrap();
        let q = out.uptake.values();
        for v in q {
            assert_eq!(*v, q[0]);
        }
        let field = out.field.unwrap();
        let first = field.row(0).to_vec();
        assert_eq!(field.row(field.rows() - 1), &first[..]);
    }

    #[test]
    fn dirichlet_run_satisfies_maximum_principle_and_monotone_uptake() {
        let p = material(0.3, 0.2, 0.9, 1.5e-3, 0.0);
        let ambient = 0.03;
        // comfortably inside the stability bound: a broad-support law smears
        // the wetting front over many cells, where oscillations set in well
        // before the nominal bound
        let dt = 0.45 * max_stable_dt(&p, 0.1);
        let grid = SimGrid::new(2.0, 400.0 * dt, 0.1, dt).unwrap();
        let out = simulate(
            &p,
            &grid,
            BoundaryCondition::Dirichlet,
            ambient,
            &SimOptions {
                store_field: true,
                ..Default::default()
            },
        )
        .unwrap();
        let (lo, hi) = out.field.unwrap().min_max();
        assert!(lo >= ambient - 1e-12, "min {lo}");
        assert!(hi <= p.porosity() + 1e-12, "max {hi}");
        let q = out.uptake.values();
        for w in q.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn ambient_outside_porosity_is_rejected() {
        let p = material(0.3, 0.2, 0.9, 1e-3, 0.0);
        let grid = SimGrid::new(2.0, 1.0, 0.1, 0.5).unwrap();
        let err = simulate(
            &p,
            &grid,
            BoundaryCondition::Dirichlet,
            0.4,
            &SimOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, SolverError::InvalidAmbient { .. }));
    }

    #[test]
    fn simulate_rejects_unstable_grid_unless_told_not_to() {
        let p = material(0.3, 0.2, 0.9, 1e-3, 0.0);
        let bound = max_stable_dt(&p, 0.1);
        let grid = SimGrid::new(2.0, 100.0, 0.1, 1.5 * bound).unwrap();
        assert!(matches!(
            simulate(
                &p,
                &grid,
                BoundaryCondition::Dirichlet,
                0.03,
                &SimOptions::default()
            ),
            Err(SolverError::CflViolation { .. })
        ));
        let forced = simulate(
            &p,
            &grid,
            BoundaryCondition::Dirichlet,
            0.03,
            &SimOptions {
                check_stability: false,
                store_field: true,
                ..Default::default()
            },
        );
        // forced run either diverges outright or leaves the physical band
        match forced {
            Err(SolverError::Diverged { .. }) => {}
            Ok(out) => {
                let (lo, hi) = out.field.unwrap().min_max();
                assert!(lo < 0.03 - 1e-6 || hi > 0.3 + 1e-6);
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
