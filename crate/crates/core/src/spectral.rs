//! CTF → CIR transform and line-of-sight path extraction.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::geometry::ScenarioGeometry;
use crate::par::{map_indexed, try_map_indexed, Execution};
use crate::propagation::{CtfGrid, SweepPlan};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Frequency-domain taper applied before the inverse transform.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

impl Window {
    pub fn weights(&self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann if n < 2 => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|k| 0.5 * (1.0 - (TAU * k as f64 / (n - 1) as f64).cos()))
                .collect(),
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rectangular" | "rect" => Ok(Window::Rectangular),
            "hann" => Ok(Window::Hann),
            other => Err(Error::invalid(format!("unknown window '{other}'"))),
        }
    }
}

/// Channel impulse response of every element.
///
/// Tap `k` of element `e` sits at delay `k · tap_spacing`, with
/// `tap_spacing = 1/(N·Δf)`.
#[derive(Debug, Clone)]
pub struct CirGrid {
    pub geometry: ScenarioGeometry,
    pub sweep: SweepPlan,
    pub window: Window,
    pub tap_spacing: f64,
    taps: Vec<Complex64>,
}

impl CirGrid {
    pub fn n_elements(&self) -> usize {
        self.geometry.upa.len()
    }

    pub fn element(&self, index: usize) -> &[Complex64] {
        let n = self.sweep.n_points();
        &self.taps[index * n..(index + 1) * n]
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }
}

/// Inverse DFT of each element's (windowed) CTF, normalized by `1/N`.
pub fn ctf_to_cir(ctf: &CtfGrid, window: Window) -> CirGrid {
    ctf_to_cir_with(Execution::default(), ctf, window)
}

pub fn ctf_to_cir_with(exec: Execution, ctf: &CtfGrid, window: Window) -> CirGrid {
    let n = ctf.sweep.n_points();
    let weights = window.weights(n);
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let scale = 1.0 / n as f64;
    let rows = map_indexed(exec, ctf.n_elements(), |e| {
        let mut buf: Vec<Complex64> = ctf
            .element(e)
            .iter()
            .zip(&weights)
            .map(|(h, w)| h * w)
            .collect();
        ifft.process(&mut buf);
        buf.iter_mut().for_each(|t| *t *= scale);
        buf
    });
    CirGrid {
        geometry: ctf.geometry.clone(),
        sweep: ctf.sweep,
        window,
        tap_spacing: 1.0 / (n as f64 * ctf.sweep.spacing()),
        taps: rows.into_iter().flatten().collect(),
    }
}

/// Line-of-sight observables of one element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathObservation {
    pub delay_s: f64,
    pub distance_m: f64,
    pub gain_db: f64,
    /// Phase at the sweep centre frequency, in [−π, π).
    pub phase_rad: f64,
}

/// A [`PathObservation`] tagged with its lattice position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementObservation {
    pub row: usize,
    pub col: usize,
    pub dx_m: f64,
    pub dz_m: f64,
    pub path: PathObservation,
}

/// Per-element observations of an array, in scan order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationGrid {
    pub rows: usize,
    pub cols: usize,
    pub elements: Vec<ElementObservation>,
}

impl ObservationGrid {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Builds a grid from a scenario and per-element observations in scan order.
    pub fn from_scenario(scenario: &ScenarioGeometry, paths: Vec<PathObservation>) -> Result<Self> {
        let upa = &scenario.upa;
        if paths.len() != upa.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} observations for {} elements",
                paths.len(),
                upa.len()
            )));
        }
        let elements = paths
            .into_iter()
            .enumerate()
            .map(|(i, path)| {
                let (row, col) = upa.row_col(i);
                let (dx_m, dz_m) = upa.offset(i);
                ElementObservation {
                    row,
                    col,
                    dx_m,
                    dz_m,
                    path,
                }
            })
            .collect();
        Ok(ObservationGrid {
            rows: upa.rows(),
            cols: upa.cols(),
            elements,
        })
    }

    /// True when the grid holds every lattice position exactly once, in scan order.
    pub fn is_complete(&self) -> bool {
        self.elements.len() == self.rows * self.cols
            && self
                .elements
                .iter()
                .enumerate()
                .all(|(i, e)| e.row == i / self.cols && e.col == i % self.cols)
    }

    pub fn gains_db(&self) -> impl Iterator<Item = f64> + '_ {
        self.elements.iter().map(|e| e.path.gain_db)
    }
}

/// How the coarse argmax delay is refined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayRefinement {
    /// Three-point parabola through `|tap|` around the peak.
    Quadratic,
    /// Parabolic estimate, then a golden-section search for the maximum of the
    /// delay-compensated coherent sum within the main lobe.
    #[default]
    CoherentPeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    /// Elements whose peak lies more than this many dB below the grid maximum are rejected.
    pub noise_floor_db: f64,
    pub refinement: DelayRefinement,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            noise_floor_db: 30.0,
            refinement: DelayRefinement::default(),
        }
    }
}

/// Extracts delay, gain and phase of the strongest path of every element.
///
/// Gain and phase are taken from the delay-compensated coherent sum
/// `Σ_f H(f)·w(f)·(f/f_c)·exp(+j2π(f − f_c)τ) / Σ w(f)`, i.e. the channel
/// referred to the centre frequency `f_c` with the Friis `λ(f)` scaling removed.
/// The window's coherent gain is divided out, so the result is window independent.
pub fn extract_dominant_path(cir: &CirGrid, ctf: &CtfGrid, config: &ExtractConfig) -> Result<ObservationGrid> {
    extract_dominant_path_with(Execution::default(), cir, ctf, config)
}

pub fn extract_dominant_path_with(
    exec: Execution,
    cir: &CirGrid,
    ctf: &CtfGrid,
    config: &ExtractConfig,
) -> Result<ObservationGrid> {
    if cir.sweep != ctf.sweep || cir.n_elements() != ctf.n_elements() {
        return Err(Error::DimensionMismatch(
            "CIR and CTF come from different sweeps or arrays".into(),
        ));
    }
    if !(config.noise_floor_db.is_finite() && config.noise_floor_db >= 0.0) {
        return Err(Error::invalid("noise floor must be a non-negative dB value"));
    }

    let grid_max = cir.taps().iter().map(|t| t.norm()).fold(0.0, f64::max);
    let floor = grid_max * 10f64.powf(-config.noise_floor_db / 20.0);
    let estimator = Estimator::new(&ctf.sweep, cir.window, cir.tap_spacing);

    let paths = try_map_indexed(exec, cir.n_elements(), |e| {
        let taps = cir.element(e);
        let (k, peak) = taps
            .iter()
            .map(|t| t.norm())
            .enumerate()
            .fold((0, -1.0), |best, (i, m)| if m > best.1 { (i, m) } else { best });
        if peak <= 0.0 || peak < floor {
            return Err(Error::NoPathFound {
                element: e,
                peak_db: 20.0 * peak.log10(),
                floor_db: 20.0 * floor.log10(),
            });
        }
        Ok(estimator.observe(ctf.element(e), taps, k, config.refinement))
    })?;
    ObservationGrid::from_scenario(&ctf.geometry, paths)
}

struct Estimator {
    n: usize,
    df: f64,
    tap_spacing: f64,
    /// `w(f)·f/f_c`
    weights: Vec<f64>,
    weight_sum: f64,
}

impl Estimator {
    fn new(sweep: &SweepPlan, window: Window, tap_spacing: f64) -> Self {
        let w = window.weights(sweep.n_points());
        let weight_sum = w.iter().sum();
        let fc = sweep.center();
        let weights = w
            .iter()
            .zip(sweep.frequencies())
            .map(|(w, f)| w * f / fc)
            .collect();
        Estimator {
            n: sweep.n_points(),
            df: sweep.spacing(),
            tap_spacing,
            weights,
            weight_sum,
        }
    }

    /// `Σ_k a_k exp(+j2π(k − m)Δf τ)` with `m = (N−1)/2`, `a_k = H_k w_k f_k/f_c`.
    fn coherent_sum(&self, h: &[Complex64], delay: f64) -> Complex64 {
        let step = Complex64::cis(TAU * self.df * delay);
        let acc = h
            .iter()
            .zip(&self.weights)
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, (hk, wk)| acc * step + hk * wk);
        let centre = 0.5 * (self.n - 1) as f64;
        acc * Complex64::cis(-TAU * centre * self.df * delay)
    }

    fn observe(&self, h: &[Complex64], taps: &[Complex64], k: usize, refinement: DelayRefinement) -> PathObservation {
        let coarse = k as f64 + quadratic_offset(taps, k);
        let mut delay = coarse * self.tap_spacing;
        if refinement == DelayRefinement::CoherentPeak {
            let lo = (k as f64 - 1.0) * self.tap_spacing;
            let hi = (k as f64 + 1.0) * self.tap_spacing;
            delay = golden_max(|t| self.coherent_sum(h, t).norm_sqr(), lo, hi, delay, 1e-10 * self.tap_spacing);
        }
        let span = self.n as f64 * self.tap_spacing;
        delay = delay.rem_euclid(span);
        let sum = self.coherent_sum(h, delay) / self.weight_sum;
        PathObservation {
            delay_s: delay,
            distance_m: delay * SPEED_OF_LIGHT,
            gain_db: 20.0 * sum.norm().log10(),
            phase_rad: wrap_phase(sum.arg()),
        }
    }
}

/// Fractional offset in (−½, ½] of the parabola vertex through `|taps|` at `k−1, k, k+1` (circular).
fn quadratic_offset(taps: &[Complex64], k: usize) -> f64 {
    let n = taps.len();
    if n < 3 {
        return 0.0;
    }
    let a = taps[(k + n - 1) % n].norm();
    let b = taps[k].norm();
    let c = taps[(k + 1) % n].norm();
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
}

/// Golden-section maximization of a unimodal `f` on `[lo, hi]`, seeded at `start`.
fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, start: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    // Keep the seed when it is at least as good (exact-bin cases).
    if f(start) >= f(mid) {
        start
    } else {
        mid
    }
}

/// Wraps an angle into [−π, π).
pub fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(TAU) - PI;
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// Unwraps the phase of a complete grid.
///
/// The first column is unwrapped along z, then each row along x starting from
/// its first-column value. Only integer multiples of 2π are added; element 0
/// is unchanged. Output is in scan order.
pub fn unwrap_phase_grid(grid: &ObservationGrid) -> Result<Vec<f64>> {
    if grid.is_empty() || !grid.is_complete() {
        return Err(Error::DimensionMismatch(format!(
            "phase unwrapping needs a complete {}×{} grid in scan order",
            grid.rows, grid.cols
        )));
    }
    let raw: Vec<f64> = grid.elements.iter().map(|e| e.path.phase_rad).collect();
    let cols = grid.cols;
    // integer number of turns added to each element
    let mut turns = vec![0i64; raw.len()];
    let step = |from: f64, to: f64| -> i64 { -((to - from) / TAU).round() as i64 };
    for r in 1..grid.rows {
        let (prev, cur) = ((r - 1) * cols, r * cols);
        turns[cur] = turns[prev] + step(raw[prev], raw[cur]);
    }
    for r in 0..grid.rows {
        for c in 1..cols {
            let i = r * cols + c;
            turns[i] = turns[i - 1] + step(raw[i - 1], raw[i]);
        }
    }
    Ok(raw
        .iter()
        .zip(&turns)
        .map(|(&p, &t)| p + TAU * t as f64)
        .collect())
}
