//! Least-squares estimation of [`CrossFieldParams`] from per-element path gains.
//!
//! The objective is the mean squared error in dB between the model path loss and
//! the observed loss (`−gain_db`). It is minimized with Nelder–Mead over
//! `(ln d_ref, ln(c1 − 1), c2, ln c3, ln c4)`, from a heuristic starting point
//! plus seeded perturbations of it. The model has an exact one-parameter
//! degeneracy (see [`CrossFieldParams::rescaled`]), so different runs may land on
//! different parameters describing the same surface.

mod simplex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::models::CrossFieldParams;
use crate::numeric::compensated_sum;
use crate::par::{map_indexed, Execution};
use crate::spectral::ObservationGrid;
use crate::{Error, Result};
use simplex::{minimize, SimplexOptions};

const N_PARAMS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Simplex iterations allowed per restart.
    pub max_iterations: usize,
    /// Convergence threshold on the objective spread across the simplex (dB²).
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Box constraints in transformed space, `(lower, upper)` per parameter.
    pub bounds: [(f64, f64); N_PARAMS],
    /// Standard deviation of the restart perturbations in transformed space.
    pub perturbation: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 2000,
            tolerance: 1e-10,
            restarts: 8,
            seed: 0,
            bounds: [
                (-12.0, 8.0),     // ln d_ref
                (-25.0, 5.0),     // ln(c1 − 1)
                (-1.0e3, 1.0e3),  // c2
                (-12.0, 8.0),     // ln c3
                (-12.0, 8.0),     // ln c4
            ],
            perturbation: 0.5,
            execution: Execution::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be ≥ 1"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be ≥ 1"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if !(self.perturbation.is_finite() && self.perturbation >= 0.0) {
            return Err(Error::invalid("perturbation must be ≥ 0"));
        }
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("bounds[{i}] must satisfy lower < upper")));
            }
        }
        Ok(())
    }
}

/// Objective value with the overflow state of the model evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub mse: f64,
    /// Some element hit the exponent clamp; treat the fit as degraded.
    pub saturated: bool,
}

/// Mean squared dB error between the model path loss and `−gain_db`.
pub fn objective(params: &CrossFieldParams, observations: &ObservationGrid, wavelength: f64, d0: f64) -> Result<Objective> {
    if observations.is_empty() {
        return Err(Error::DegenerateGrid("no observations".into()));
    }
    params.validate()?;
    check_scalars(wavelength, d0)?;
    Ok(objective_unchecked(params, observations, wavelength, d0))
}

fn objective_unchecked(params: &CrossFieldParams, obs: &ObservationGrid, wavelength: f64, d0: f64) -> Objective {
    let mut saturated = false;
    let sq = obs.elements.iter().map(|e| {
        let (pl, sat) = params.pl_unchecked(e.dx_m, e.dz_m, wavelength, d0);
        saturated |= sat;
        let r = pl + e.path.gain_db;
        r * r
    });
    let total = compensated_sum(sq);
    Objective {
        mse: total / obs.len() as f64,
        saturated,
    }
}

/// Per-element residual `model PL − observed PL` (dB), in grid order.
pub fn residuals(params: &CrossFieldParams, observations: &ObservationGrid, wavelength: f64, d0: f64) -> Vec<f64> {
    observations
        .elements
        .iter()
        .map(|e| params.pl_unchecked(e.dx_m, e.dz_m, wavelength, d0).0 + e.path.gain_db)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: CrossFieldParams,
    /// Same surface in the `c2·d0 = 1` gauge, when it exists.
    pub canonical_params: Option<CrossFieldParams>,
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub saturated: bool,
    pub best_restart: usize,
    pub restarts: Vec<RestartSummary>,
    pub wavelength_m: f64,
    pub d0_m: f64,
    /// Model minus observed path loss per element (dB), in grid order.
    pub residual_db: Vec<f64>,
}

fn to_params(x: &[f64]) -> CrossFieldParams {
    CrossFieldParams {
        d_ref: x[0].exp(),
        c1: 1.0 + x[1].exp(),
        c2: x[2],
        c3: x[3].exp(),
        c4: x[4].exp(),
    }
}

fn from_params(p: &CrossFieldParams) -> [f64; N_PARAMS] {
    [p.d_ref.ln(), (p.c1 - 1.0).ln(), p.c2, p.c3.ln(), p.c4.ln()]
}

/// Starting point: `d_ref` from inverting Friis at the strongest element and
/// halving it (room for `K ≈ 2`), `c1 = 1.33`, `c2 = 1/d0`, `c3 = c4 = 1`.
pub fn initial_guess(observations: &ObservationGrid, wavelength: f64, d0: f64) -> CrossFieldParams {
    let max_gain = observations.gains_db().fold(f64::NEG_INFINITY, f64::max);
    let d_eq = 10f64.powf(-max_gain / 20.0) * wavelength / (4.0 * PI);
    CrossFieldParams {
        d_ref: 0.5 * d_eq,
        c1: 1.33,
        c2: 1.0 / d0,
        c3: 1.0,
        c4: 1.0,
    }
}

/// Fits the cross-field model to the observed gains.
pub fn fit(observations: &ObservationGrid, wavelength: f64, d0: f64, config: &FitConfig) -> Result<FitReport> {
    config.validate()?;
    check_scalars(wavelength, d0)?;
    check_grid(observations)?;

    let start = from_params(&initial_guess(observations, wavelength, d0));
    let lower: Vec<f64> = config.bounds.iter().map(|b| b.0).collect();
    let upper: Vec<f64> = config.bounds.iter().map(|b| b.1).collect();
    let step = [0.1, 0.2, 0.1 * start[2].abs().max(1.0), 0.1, 0.1];
    let opts = SimplexOptions {
        max_iterations: config.max_iterations,
        tolerance: config.tolerance,
        lower,
        upper,
    };
    let f = |x: &[f64]| objective_unchecked(&to_params(x), observations, wavelength, d0).mse;

    let runs = map_indexed(config.execution, config.restarts, |r| {
        let mut x0 = start;
        if r > 0 && config.perturbation > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            let normal = Normal::new(0.0, config.perturbation).expect("validated perturbation");
            for v in x0.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        run_restart(&f, &x0, &step, &opts)
    });

    let restarts: Vec<RestartSummary> = runs
        .iter()
        .map(|r| RestartSummary {
            mse: r.f,
            iterations: r.iterations,
            converged: r.converged,
        })
        .collect();
    // lowest objective, earliest restart on ties
    let (best_restart, best) = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f).then(a.0.cmp(&b.0)))
        .expect("at least one restart");

    let params = to_params(&best.x);
    let obj = objective_unchecked(&params, observations, wavelength, d0);
    Ok(FitReport {
        params,
        canonical_params: params.canonical(d0),
        mse: obj.mse,
        iterations: best.iterations,
        converged: best.converged,
        saturated: obj.saturated,
        best_restart,
        restarts,
        wavelength_m: wavelength,
        d0_m: d0,
        residual_db: residuals(&params, observations, wavelength, d0),
    })
}

/// One restart: simplex runs re-seeded at the incumbent until a rebuilt simplex
/// stops improving or the iteration budget is spent.
fn run_restart<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], step: &[f64], opts: &SimplexOptions) -> simplex::SimplexResult {
    let mut budget = opts.max_iterations;
    let mut best = minimize(f, x0, step, &SimplexOptions { max_iterations: budget, ..opts.clone() });
    budget -= best.iterations;
    while best.converged && budget > 0 {
        let next = minimize(f, &best.x, step, &SimplexOptions { max_iterations: budget, ..opts.clone() });
        budget -= next.iterations;
        let improved = best.f - next.f > opts.tolerance;
        let iterations = best.iterations + next.iterations;
        if next.f < best.f {
            best = simplex::SimplexResult { iterations, ..next };
        } else {
            best.iterations = iterations;
            best.converged = next.converged;
        }
        if !improved {
            break;
        }
    }
    best
}

fn check_scalars(wavelength: f64, d0: f64) -> Result<()> {
    if !(wavelength.is_finite() && wavelength > 0.0 && d0.is_finite() && d0 > 0.0) {
        return Err(Error::invalid(format!(
            "wavelength and d0 must be positive, got {wavelength} and {d0}"
        )));
    }
    Ok(())
}

fn check_grid(obs: &ObservationGrid) -> Result<()> {
    for e in &obs.elements {
        if !(e.path.gain_db.is_finite() && e.dx_m.is_finite() && e.dz_m.is_finite()) {
            return Err(Error::NonFinite("observations"));
        }
    }
    let Some(first) = obs.elements.first() else {
        return Err(Error::DegenerateGrid("no observations".into()));
    };
    if obs
        .elements
        .iter()
        .all(|e| e.dx_m == first.dx_m && e.dz_m == first.dz_m)
    {
        return Err(Error::DegenerateGrid(format!(
            "all {} observations share the offset ({}, {})",
            obs.len(),
            first.dx_m,
            first.dz_m
        )));
    }
    if obs.len() < N_PARAMS {
        return Err(Error::DegenerateGrid(format!(
            "{} observations cannot determine {N_PARAMS} parameters",
            obs.len()
        )));
    }
    Ok(())
}
