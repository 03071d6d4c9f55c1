//! Global-best particle swarm minimizer on a box.
//!
//! Velocity updates use adaptive inertia plus self/social attraction;
//! positions are clamped to the box with the offending velocity component
//! zeroed. Each particle draws from its own counter-mode RNG stream, so the
//! trajectory is reproducible for a fixed seed no matter how objective
//! evaluations are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const INERTIA_RANGE: (f64, f64) = (0.1, 1.1);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsoSettings {
    pub swarm_size: usize,
    pub max_iterations: usize,
    /// Stop after this many iterations without the best value improving by
    /// more than `function_tolerance`.
    pub max_stall: usize,
    pub function_tolerance: f64,
    pub self_weight: f64,
    pub social_weight: f64,
    pub seed: u64,
}

impl Default for PsoSettings {
    fn default() -> Self {
        Self {
            swarm_size: 1000,
            max_iterations: 500,
            max_stall: 50,
            function_tolerance: 1e-7,
            self_weight: 1.49,
            social_weight: 1.49,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PsoRun {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    /// Best value after initialization and after each iteration;
    /// nonincreasing by construction.
    pub history: Vec<f64>,
    pub iterations: usize,
}

struct Particle {
    position: Vec<f64>,
    velocity: Vec<f64>,
    best_position: Vec<f64>,
    best_value: f64,
    rng: ChaCha8Rng,
}

/// Minimizes `objective` over the box. The first `warm_starts.len()`
/// particles start at the given points (clamped into the box); the rest
/// start uniformly at random.
pub fn pso_minimize<F>(
    objective: &F,
    bounds: &[(f64, f64)],
    warm_starts: &[Vec<f64>],
    settings: &PsoSettings,
) -> PsoRun
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = bounds.len();
    let n = settings.swarm_size.max(1);

    let mut particles: Vec<Particle> = (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            rng.set_stream(i as u64 + 1);
            let position: Vec<f64> = if let Some(start) = warm_starts.get(i) {
                start
                    .iter()
                    .zip(bounds)
                    .map(|(&x, &(lo, hi))| x.clamp(lo, hi))
                    .collect()
            } else {
                bounds
                    .iter()
                    .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
                    .collect()
            };
            let velocity: Vec<f64> = bounds
                .iter()
                .map(|&(lo, hi)| {
                    let r = hi - lo;
                    if r > 0.0 {
                        rng.gen_range(-r..=r)
                    } else {
                        0.0
                    }
                })
                .collect();
            Particle {
                best_position: position.clone(),
                best_value: f64::INFINITY,
                position,
                velocity,
                rng,
            }
        })
        .collect();

    let values = evaluate_all(objective, &particles);
    for (p, v) in particles.iter_mut().zip(&values) {
        p.best_value = *v;
        p.best_position = p.position.clone();
    }
    let (mut best_idx, mut best_value) = argmin(&values);
    let mut best_point = particles[best_idx].position.clone();
    let mut history = vec![best_value];

    let mut inertia = INERTIA_RANGE.1;
    let mut adaptive_counter = 0usize;
    let mut stall = 0usize;
    let mut iterations = 0usize;

    for _ in 0..settings.max_iterations {
        iterations += 1;
        for p in particles.iter_mut() {
            for d in 0..dim {
                let u1: f64 = p.rng.gen();
                let u2: f64 = p.rng.gen();
                p.velocity[d] = inertia * p.velocity[d]
                    + settings.self_weight * u1 * (p.best_position[d] - p.position[d])
                    + settings.social_weight * u2 * (best_point[d] - p.position[d]);
                p.position[d] += p.velocity[d];
                let (lo, hi) = bounds[d];
                if p.position[d] < lo {
                    p.position[d] = lo;
                    p.velocity[d] = 0.0;
                } else if p.position[d] > hi {
                    p.position[d] = hi;
                    p.velocity[d] = 0.0;
                }
            }
        }

        let values = evaluate_all(objective, &particles);
        for (p, &v) in particles.iter_mut().zip(&values) {
            if v < p.best_value {
                p.best_value = v;
                p.best_position = p.position.clone();
            }
        }

        let prev_best = best_value;
        for (i, p) in particles.iter().enumerate() {
            if p.best_value < best_value {
                best_value = p.best_value;
                best_idx = i;
            }
        }
        if best_value < prev_best {
            best_point = particles[best_idx].best_position.clone();
        }
        history.push(best_value);

        let improvement = prev_best - best_value;
        let improved = improvement > settings.function_tolerance;
        if improved {
            stall = 0;
            adaptive_counter = adaptive_counter.saturating_sub(1);
            if adaptive_counter < 2 {
                inertia = (2.0 * inertia).min(INERTIA_RANGE.1);
            } else if adaptive_counter > 5 {
                inertia = (0.5 * inertia).max(INERTIA_RANGE.0);
            }
        } else {
            stall += 1;
            adaptive_counter += 1;
        }
        if stall >= settings.max_stall {
            break;
        }
    }

    PsoRun {
        best_point,
        best_value,
        history,
        iterations,
    }
}

fn argmin(values: &[f64]) -> (usize, f64) {
    let mut idx = 0;
    let mut best = f64::INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v < best {
            best = v;
            idx = i;
        }
    }
    (idx, best)
}

#[cfg(feature = "parallel")]
fn evaluate_all<F>(objective: &F, particles: &[Particle]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    use rayon::prelude::*;
    particles
        .par_iter()
        .map(|p| objective(&p.position))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn evaluate_all<F>(objective: &F, particles: &[Particle]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    particles.iter().map(|p| objective(&p.position)).collect()
}
