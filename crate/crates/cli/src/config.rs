//! Run configuration: defaults, `--case` presets, a JSON file and flags, merged
//! in that order (later wins).

use serde::{Deserialize, Serialize};
use std::path::Path;

use xfield::geometry::GeometrySpec;
use xfield::models::DEFAULT_BOUNDARY_BAND;
use xfield::spectral::DelayRefinement;
use xfield::{AperturePattern, ExtractConfig, FitConfig, SweepPlan, SynthPath, Window};

use crate::CliError;

/// Every option any subcommand understands. Unset fields fall through to the
/// next layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub case: Option<u8>,
    pub seed: Option<u64>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub spacing_m: Option<f64>,
    pub d0_m: Option<f64>,
    pub theta_rad: Option<f64>,
    pub f_start_hz: Option<f64>,
    pub f_stop_hz: Option<f64>,
    pub n_points: Option<usize>,
    pub qx: Option<f64>,
    pub qz: Option<f64>,
    pub paths: Option<Vec<SynthPath>>,
    pub snr_db: Option<f64>,
    pub jitter_m: Option<f64>,
    pub gzip: Option<bool>,
    pub window: Option<Window>,
    pub noise_floor_db: Option<f64>,
    pub refinement: Option<DelayRefinement>,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub restarts: Option<usize>,
    pub boundary_band: Option<f64>,
    pub freq_hz: Option<f64>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        overlay!(
            self, top, case, seed, rows, cols, spacing_m, d0_m, theta_rad, f_start_hz, f_stop_hz, n_points, qx,
            qz, paths, snr_db, jitter_m, gzip, window, noise_floor_db, refinement, max_iterations, tolerance,
            restarts, boundary_band, freq_hz
        )
    }

    /// Applies the array preset named by `case`, beneath the explicit fields.
    pub fn with_preset(self) -> Result<RunConfig, CliError> {
        match self.case {
            None => Ok(self),
            Some(c) => Ok(preset(c)?.overlay(self)),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn geometry(&self) -> Result<GeometrySpec, CliError> {
        let spec = GeometrySpec {
            rows: self.rows.unwrap_or(16),
            cols: self.cols.unwrap_or(16),
            spacing_m: self.spacing_m.unwrap_or(0.0005),
            d0_m: self.d0_m.unwrap_or(0.86),
            theta_rad: self.theta_rad.unwrap_or(0.0),
        };
        spec.build().map_err(config_err)?;
        Ok(spec)
    }

    pub fn sweep(&self) -> Result<SweepPlan, CliError> {
        let d = SweepPlan::default();
        SweepPlan::new(
            self.f_start_hz.unwrap_or(d.f_start()),
            self.f_stop_hz.unwrap_or(d.f_stop()),
            self.n_points.unwrap_or(d.n_points()),
        )
        .map_err(config_err)
    }

    pub fn pattern(&self) -> Result<AperturePattern, CliError> {
        let d = AperturePattern::default();
        AperturePattern::new(self.qx.unwrap_or(d.qx), self.qz.unwrap_or(d.qz)).map_err(config_err)
    }

    pub fn paths(&self) -> Result<Vec<SynthPath>, CliError> {
        let paths = self.paths.clone().unwrap_or_else(|| vec![SynthPath::LOS]);
        if paths.is_empty() {
            return Err(CliError::Config("at least one path is required".into()));
        }
        for p in &paths {
            p.validate().map_err(config_err)?;
        }
        Ok(paths)
    }

    pub fn snr_db(&self) -> Result<Option<f64>, CliError> {
        match self.snr_db {
            Some(s) if !s.is_finite() => Err(CliError::Config("snr_db must be finite".into())),
            s => Ok(s),
        }
    }

    pub fn jitter_m(&self) -> Result<Option<f64>, CliError> {
        match self.jitter_m {
            Some(j) if !(j.is_finite() && j >= 0.0) => {
                Err(CliError::Config(format!("jitter_m must be finite and ≥ 0, got {j}")))
            }
            Some(0.0) => Ok(None),
            j => Ok(j),
        }
    }

    pub fn extract(&self) -> Result<ExtractConfig, CliError> {
        let d = ExtractConfig::default();
        let floor = self.noise_floor_db.unwrap_or(d.noise_floor_db);
        if !(floor.is_finite() && floor >= 0.0) {
            return Err(CliError::Config(format!("noise_floor_db must be ≥ 0 dB, got {floor}")));
        }
        Ok(ExtractConfig {
            noise_floor_db: floor,
            refinement: self.refinement.unwrap_or(d.refinement),
        })
    }

    pub fn fit(&self) -> Result<FitConfig, CliError> {
        let d = FitConfig::default();
        let cfg = FitConfig {
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            restarts: self.restarts.unwrap_or(d.restarts),
            seed: self.seed(),
            ..d
        };
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }

    pub fn boundary_band(&self) -> Result<f64, CliError> {
        let b = self.boundary_band.unwrap_or(DEFAULT_BOUNDARY_BAND);
        if !(b.is_finite() && (0.0..1.0).contains(&b)) {
            return Err(CliError::Config(format!("boundary_band must be in [0, 1), got {b}")));
        }
        Ok(b)
    }
}

/// Array presets: 16×16, 32×32 and 64×64 at 0.5 mm, 0.86 m broadside.
pub fn preset(case: u8) -> Result<RunConfig, CliError> {
    let n = match case {
        1 => 16,
        2 => 32,
        3 => 64,
        other => return Err(CliError::Config(format!("unknown case {other}, expected 1, 2 or 3"))),
    };
    Ok(RunConfig {
        rows: Some(n),
        cols: Some(n),
        spacing_m: Some(0.0005),
        d0_m: Some(0.86),
        theta_rad: Some(0.0),
        ..RunConfig::default()
    })
}

fn config_err(e: xfield::Error) -> CliError {
    CliError::Config(e.to_string())
}
