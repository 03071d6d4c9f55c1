//! Gradient-free calibration of material parameters against an imbibition
//! record: particle-swarm searches orchestrated in a coarse phase (weight
//! estimation plus a global search on a cheap grid) and a fine phase
//! (searches over shrinking boxes on a dense grid).

pub mod pso;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::absorption::AbsorptionLaw;
use crate::metrics::{
    calibration_loss_aligned, dtw, match_times, relative_squared_error_lenient, LossBreakdown,
    LossWeights, MetricsError,
};
use crate::series::ImbibitionSeries;
use crate::solver::{
    simulate_uptake, BoundaryCondition, MaterialParams, Scheme, SimGrid, SolverError,
};
pub use pso::{pso_minimize, PsoRun, PsoSettings};

/// Minimum gap kept between repaired residual and maximum saturations.
const SATURATION_GAP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Closed search intervals for `[porosity, residual, max_saturation,
/// diffusion, exchange]`, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub porosity: (f64, f64),
    pub residual: (f64, f64),
    pub max_saturation: (f64, f64),
    pub diffusion: (f64, f64),
    pub exchange: (f64, f64),
}

impl ParameterBox {
    /// Default search region: caller supplies the material porosity range,
    /// saturations span the usual experimental windows, and the exchange
    /// range is wide enough to cover both impermeable and fully open top
    /// faces.
    pub fn coarse(porosity: (f64, f64)) -> Self {
        Self {
            porosity,
            residual: (0.1, 0.75),
            max_saturation: (0.5, 0.98),
            diffusion: (0.0, 0.1),
            exchange: (0.0, 100.0),
        }
    }

    pub fn as_bounds(&self) -> [(f64, f64); 5] {
        [
            self.porosity,
            self.residual,
            self.max_saturation,
            self.diffusion,
            self.exchange,
        ]
    }

    pub fn contains(&self, p: &[f64; 5]) -> bool {
        self.as_bounds()
            .iter()
            .zip(p)
            .all(|(&(lo, hi), &x)| x >= lo && x <= hi)
    }

    pub fn validate(&self) -> Result<(), CalibrateError> {
        let named = [
            ("porosity", self.porosity),
            ("residual", self.residual),
            ("max_saturation", self.max_saturation),
            ("diffusion", self.diffusion),
            ("exchange", self.exchange),
        ];
        for (name, (lo, hi)) in named {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(CalibrateError::Config(format!(
                    "{name} interval [{lo}, {hi}] is not a valid range"
                )));
            }
        }
        if self.porosity.0 <= 0.0 || self.porosity.1 >= 1.0 {
            return Err(CalibrateError::Config(format!(
                "porosity range {:?} must stay inside (0, 1)",
                self.porosity
            )));
        }
        if self.residual.0 < 0.0 || self.max_saturation.1 > 1.0 {
            return Err(CalibrateError::Config(
                "saturation ranges must stay inside [0, 1]".into(),
            ));
        }
        if self.residual.0 >= self.max_saturation.1 {
            return Err(CalibrateError::Config(
                "residual range lies entirely above the maximum-saturation range".into(),
            ));
        }
        if self.diffusion.0 < 0.0 || self.exchange.0 < 0.0 {
            return Err(CalibrateError::Config(
                "diffusion and exchange rates must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Orders the saturation pair and keeps a small gap so every evaluated point
/// defines a valid law. Values are assumed already clamped to the box.
pub fn repair_saturations(point: &[f64]) -> [f64; 5] {
    let mut p = [point[0], point[1], point[2], point[3], point[4]];
    if p[1] > p[2] {
        p.swap(1, 2);
    }
    if p[2] - p[1] < SATURATION_GAP {
        let mid = 0.5 * (p[1] + p[2]);
        p[1] = (mid - 0.5 * SATURATION_GAP).max(0.0);
        p[2] = p[1] + SATURATION_GAP;
        if p[2] > 1.0 {
            p[2] = 1.0;
            p[1] = 1.0 - SATURATION_GAP;
        }
    }
    p
}

/// Multiplicative refinement of the box around `prev`, intersected with the
/// coarse box. A zero component (multiplicative refinement collapses there)
/// widens to `radius` times the coarse width instead.
pub fn refine_box(prev: &[f64; 5], radius: f64, coarse: &ParameterBox) -> ParameterBox {
    let coarse_bounds = coarse.as_bounds();
    let mut out = [(0.0, 0.0); 5];
    for (i, (&p, &(clo, chi))) in prev.iter().zip(&coarse_bounds).enumerate() {
        out[i] = if p == 0.0 {
            log::info!("refinement around zero in dimension {i}: widening to the scaled coarse width");
            (clo, clo + radius * (chi - clo))
        } else {
            let lo = (p * (1.0 - radius)).max(clo);
            let hi = (p * (1.0 + radius)).min(chi);
            if lo > hi {
                log::warn!("empty refined interval in dimension {i}: falling back to the coarse range");
                (clo, chi)
            } else {
                (lo, hi)
            }
        };
    }
    ParameterBox {
        porosity: out[0],
        residual: out[1],
        max_saturation: out[2],
        diffusion: out[3],
        exchange: out[4],
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultigridSettings {
    /// Number of fine-phase refinement steps.
    pub fine_steps: usize,
    /// Refinement radii per fine step; defaults to `1 / (2 n)` when absent.
    pub radii: Option<Vec<f64>>,
}

impl Default for MultigridSettings {
    fn default() -> Self {
        Self {
            fine_steps: 2,
            radii: None,
        }
    }
}

impl MultigridSettings {
    fn radius(&self, step: usize) -> f64 {
        self.radii
            .as_ref()
            .and_then(|r| r.get(step - 1).copied())
            .unwrap_or(1.0 / (2.0 * step as f64))
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationConfig {
    pub bounds: ParameterBox,
    pub coarse_grid: SimGrid,
    pub fine_grid: SimGrid,
    pub bc: BoundaryCondition,
    pub ambient: f64,
    pub fluid_density: f64,
    /// Explicit loss weights skip the coarse weight-estimation stage.
    pub given_weights: Option<(f64, f64)>,
    pub endpoint_weight: f64,
    pub endpoint_threshold: f64,
    /// Cap applied to a weight when its stage error is exactly zero.
    pub weight_cap: f64,
    pub pso: PsoSettings,
    pub multigrid: MultigridSettings,
    pub seed: u64,
}

impl CalibrationConfig {
    pub fn new(bounds: ParameterBox, coarse_grid: SimGrid, fine_grid: SimGrid) -> Self {
        Self {
            bounds,
            coarse_grid,
            fine_grid,
            bc: BoundaryCondition::Robin,
            ambient: crate::data::DEFAULT_AMBIENT_MOISTURE,
            fluid_density: 1.0,
            given_weights: None,
            endpoint_weight: 10.0,
            endpoint_threshold: 1e-4,
            weight_cap: 1e6,
            pso: PsoSettings::default(),
            multigrid: MultigridSettings::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunHistory {
    pub label: String,
    pub best_values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub params: MaterialParams,
    /// Raw optimum `[porosity, residual, max_saturation, diffusion,
    /// exchange]` after repair.
    pub point: [f64; 5],
    pub weights: LossWeights,
    pub loss: LossBreakdown,
    pub history: Vec<RunHistory>,
    pub seed: u64,
    pub wall_time_s: f64,
}

pub struct CoarsePhaseOutcome {
    pub weights: LossWeights,
    pub start_point: [f64; 5],
    pub history: Vec<RunHistory>,
}

enum LossMode {
    SreOnly,
    DtwOnly,
    Full(LossWeights),
}

/// Objective over raw swarm positions: repair, simulate, compare. Any
/// simulation failure (divergence, stability, invalid law) surfaces as
/// infinity so the swarm routes around it.
fn make_objective<'a>(
    data_values: &'a [f64],
    sample_idx: &'a [usize],
    grid: &'a SimGrid,
    bc: BoundaryCondition,
    ambient: f64,
    fluid_density: f64,
    mode: LossMode,
) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    move |position: &[f64]| {
        let p = repair_saturations(position);
        let Ok(law) = AbsorptionLaw::new(p[1], p[2], p[3]) else {
            return f64::INFINITY;
        };
        let Ok(params) = MaterialParams::new(p[0], law, p[4]) else {
            return f64::INFINITY;
        };
        let Ok(uptake) = simulate_uptake(&params, grid, bc, ambient, Scheme::Heun, fluid_density)
        else {
            return f64::INFINITY;
        };
        let sim: Vec<f64> = sample_idx.iter().map(|&k| uptake[k]).collect();
        match &mode {
            LossMode::SreOnly => {
                relative_squared_error_lenient(data_values, &sim).unwrap_or(f64::INFINITY)
            }
            LossMode::DtwOnly => dtw(data_values, &sim).unwrap_or(f64::INFINITY),
            LossMode::Full(w) => calibration_loss_aligned(data_values, &sim, w)
                .map(|b| b.total)
                .unwrap_or(f64::INFINITY),
        }
    }
}

fn weights_from_errors(
    sre_error: f64,
    dtw_error: f64,
    cap: f64,
    endpoint_weight: f64,
    endpoint_threshold: f64,
) -> LossWeights {
    let invert = |err: f64, name: &str| {
        if err == 0.0 {
            log::warn!("coarse {name} error is zero; capping its weight at {cap}");
            cap
        } else {
            1.0 / err
        }
    };
    LossWeights {
        sre_weight: invert(sre_error, "relative-error"),
        dtw_weight: invert(dtw_error, "warping"),
        endpoint_weight,
        endpoint_threshold,
    }
}

fn grid_indices(
    data: &ImbibitionSeries,
    grid: &SimGrid,
    what: &str,
) -> Result<Vec<usize>, CalibrateError> {
    let sim_times: Vec<f64> = (0..=grid.steps()).map(|k| grid.time(k)).collect();
    match_times(data.times(), &sim_times).map_err(|e| {
        CalibrateError::Config(format!("data times do not sit on the {what} grid: {e}"))
    })
}

fn validate_coarse(data: &ImbibitionSeries, cfg: &CalibrationConfig) -> Result<Vec<usize>, CalibrateError> {
    cfg.bounds.validate()?;
    if data.len() < 2 {
        return Err(CalibrateError::Config(
            "calibration needs at least two data points".into(),
        ));
    }
    // stability over the whole box: worst case is the largest diffusion rate
    // with the smallest porosity
    let worst = worst_case_bound(&cfg.bounds, cfg.coarse_grid.dz());
    if cfg.coarse_grid.dt() > worst {
        return Err(CalibrateError::Config(format!(
            "coarse grid dt {} exceeds the worst-case stability bound {} over the box",
            cfg.coarse_grid.dt(),
            worst
        )));
    }
    grid_indices(data, &cfg.coarse_grid, "coarse")
}

fn worst_case_bound(bounds: &ParameterBox, dz: f64) -> f64 {
    if bounds.diffusion.1 == 0.0 {
        return f64::INFINITY;
    }
    bounds.porosity.0 * dz * dz / bounds.diffusion.1
}

fn derived_settings(base: &PsoSettings, seed: u64) -> PsoSettings {
    PsoSettings {
        seed,
        ..base.clone()
    }
}

/// Coarse phase: two single-term searches fix the loss weights, then a full
/// weighted search over the coarse box produces the fine-phase start point.
pub fn coarse_phase(
    data: &ImbibitionSeries,
    cfg: &CalibrationConfig,
) -> Result<CoarsePhaseOutcome, CalibrateError> {
    let idx = validate_coarse(data, cfg)?;
    let bounds = cfg.bounds.as_bounds();

    let sre_objective = make_objective(
        data.values(),
        &idx,
        &cfg.coarse_grid,
        cfg.bc,
        cfg.ambient,
        cfg.fluid_density,
        LossMode::SreOnly,
    );
    let dtw_objective = make_objective(
        data.values(),
        &idx,
        &cfg.coarse_grid,
        cfg.bc,
        cfg.ambient,
        cfg.fluid_density,
        LossMode::DtwOnly,
    );
    let sre_settings = derived_settings(&cfg.pso, cfg.seed.wrapping_add(1));
    let dtw_settings = derived_settings(&cfg.pso, cfg.seed.wrapping_add(2));

    let (sre_run, dtw_run) = run_pair(
        || pso_minimize(&sre_objective, &bounds, &[], &sre_settings),
        || pso_minimize(&dtw_objective, &bounds, &[], &dtw_settings),
    );

    let weights = weights_from_errors(
        sre_run.best_value,
        dtw_run.best_value,
        cfg.weight_cap,
        cfg.endpoint_weight,
        cfg.endpoint_threshold,
    );

    let mut history = vec![
        RunHistory {
            label: "coarse-sre".into(),
            best_values: sre_run.history,
        },
        RunHistory {
            label: "coarse-dtw".into(),
            best_values: dtw_run.history,
        },
    ];

    let (start_point, full_history) = coarse_full_search(data, cfg, &idx, weights)?;
    history.push(RunHistory {
        label: "coarse-full".into(),
        best_values: full_history,
    });

    Ok(CoarsePhaseOutcome {
        weights,
        start_point,
        history,
    })
}

fn coarse_full_search(
    data: &ImbibitionSeries,
    cfg: &CalibrationConfig,
    idx: &[usize],
    weights: LossWeights,
) -> Result<([f64; 5], Vec<f64>), CalibrateError> {
    let objective = make_objective(
        data.values(),
        idx,
        &cfg.coarse_grid,
        cfg.bc,
        cfg.ambient,
        cfg.fluid_density,
        LossMode::Full(weights),
    );
    let run = pso_minimize(
        &objective,
        &cfg.bounds.as_bounds(),
        &[],
        &derived_settings(&cfg.pso, cfg.seed.wrapping_add(3)),
    );
    let p = repair_saturations(&run.best_point);
    Ok((p, run.history))
}

#[cfg(feature = "parallel")]
fn run_pair<A, B>(a: A, b: B) -> (PsoRun, PsoRun)
where
    A: FnOnce() -> PsoRun + Send,
    B: FnOnce() -> PsoRun + Send,
{
    rayon::join(a, b)
}

#[cfg(not(feature = "parallel"))]
fn run_pair<A, B>(a: A, b: B) -> (PsoRun, PsoRun)
where
    A: FnOnce() -> PsoRun + Send,
    B: FnOnce() -> PsoRun + Send,
{
    (a(), b())
}

/// Full calibration: coarse phase (unless weights are given), then the
/// requested number of fine-grid searches over shrinking boxes, each seeded
/// with the previous optimum as a particle.
pub fn calibrate(
    data: &ImbibitionSeries,
    cfg: &CalibrationConfig,
) -> Result<CalibrationResult, CalibrateError> {
    let started = std::time::Instant::now();

    let (weights, mut current, mut history) = match cfg.given_weights {
        Some((sre_weight, dtw_weight)) => {
            if !(sre_weight >= 0.0) || !(dtw_weight >= 0.0) {
                return Err(CalibrateError::Config(
                    "explicit weights must be nonnegative".into(),
                ));
            }
            let weights = LossWeights {
                sre_weight,
                dtw_weight,
                endpoint_weight: cfg.endpoint_weight,
                endpoint_threshold: cfg.endpoint_threshold,
            };
            let idx = validate_coarse(data, cfg)?;
            let (start, run_history) = coarse_full_search(data, cfg, &idx, weights)?;
            let history = vec![RunHistory {
                label: "coarse-full".into(),
                best_values: run_history,
            }];
            (weights, start, history)
        }
        None => {
            let outcome = coarse_phase(data, cfg)?;
            (outcome.weights, outcome.start_point, outcome.history)
        }
    };

    let fine_idx = grid_indices(data, &cfg.fine_grid, "fine")?;
    for step in 1..=cfg.multigrid.fine_steps {
        let radius = cfg.multigrid.radius(step);
        if !(0.0..1.0).contains(&radius) {
            return Err(CalibrateError::Config(format!(
                "refinement radius {radius} at fine step {step} must lie in (0, 1)"
            )));
        }
        let refined = refine_box(&current, radius, &cfg.bounds);
        if step == 1 {
            // stability promise is made at the least refined level
            let worst = worst_case_bound(&refined, cfg.fine_grid.dz());
            if cfg.fine_grid.dt() > worst {
                return Err(CalibrateError::Config(format!(
                    "fine grid dt {} exceeds the stability bound {} over the first refined box",
                    cfg.fine_grid.dt(),
                    worst
                )));
            }
        }
        let objective = make_objective(
            data.values(),
            &fine_idx,
            &cfg.fine_grid,
            cfg.bc,
            cfg.ambient,
            cfg.fluid_density,
            LossMode::Full(weights),
        );
        let run = pso_minimize(
            &objective,
            &refined.as_bounds(),
            &[current.to_vec()],
            &derived_settings(&cfg.pso, cfg.seed.wrapping_add(3 + step as u64)),
        );
        current = repair_saturations(&run.best_point);
        history.push(RunHistory {
            label: format!("fine-{step}"),
            best_values: run.history,
        });
    }

    let law = AbsorptionLaw::new(current[1], current[2], current[3])
        .map_err(|e| CalibrateError::Config(e.to_string()))?;
    let params = MaterialParams::new(current[0], law, current[4])?;
    let uptake = simulate_uptake(
        &params,
        &cfg.fine_grid,
        cfg.bc,
        cfg.ambient,
        Scheme::Heun,
        cfg.fluid_density,
    )?;
    let sim: Vec<f64> = fine_idx.iter().map(|&k| uptake[k]).collect();
    let loss = calibration_loss_aligned(data.values(), &sim, &weights)?;

    Ok(CalibrationResult {
        params,
        point: current,
        weights,
        loss,
        history,
        seed: cfg.seed,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
