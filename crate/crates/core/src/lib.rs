//! Near- and far-field channel toolkit for uniform planar arrays.
//!
//! The crate synthesizes per-element wideband channel transfer functions
//! under exact spherical-wave propagation, turns them into impulse responses,
//! extracts the line-of-sight delay/gain/phase per element, and fits the
//! cross-field path loss model
//!
//! ```text
//! PL = 20 log10(4π d_ref K / λ)
//! K  = 1 + c1^p,  p = [(Δx/c3)² + (Δz/c4)²]/λ − c2·d0
//! ```
//!
//! to the extracted gains. Field-region criteria (Rayleigh distance and the
//! planar-wavefront phase error) live in [`models`].
//!
//! Per-element work is data parallel. With the `parallel` feature (on by
//! default) it runs on rayon; [`Execution::Sequential`] forces the plain
//! iterator path, and results are identical either way.

pub mod error;
pub mod fitting;
pub mod geometry;
pub mod io;
pub mod models;
mod numeric;
pub mod par;
pub mod propagation;
pub mod spectral;

pub use error::{Error, Result};
pub use fitting::{fit, objective, FitConfig, FitReport, Objective};
pub use geometry::{build_upa, element_distance, ScenarioGeometry, UpaGeometry};
pub use models::{
    classify_region, cross_field_factor, cross_field_pl, friis_fspl, max_phase_error,
    rayleigh_distance, CrossFieldParams, Factor, RayleighAssessment, Region,
};
pub use par::Execution;
pub use propagation::{
    apply_position_jitter, synth_ctf, AperturePattern, CtfGrid, NoiseSpec, SweepPlan, SynthPath,
};
pub use spectral::{
    ctf_to_cir, extract_dominant_path, unwrap_phase_grid, CirGrid, ElementObservation,
    ExtractConfig, ObservationGrid, PathObservation, Window,
};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Wavelength in meters at `freq_hz`.
#[inline]
pub fn wavelength(freq_hz: f64) -> f64 {
    SPEED_OF_LIGHT / freq_hz
}
