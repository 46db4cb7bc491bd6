//! Subcommand implementations. Every command validates its inputs, computes,
//! then stages all outputs and renames them into place together.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::io::Write;
use std::path::{Path, PathBuf};

use xfield::io::{
    open_body, read_ctf_csv, read_observations_csv, write_ctf_csv, write_observations_csv, DataKind, Manifest,
    OutputSet, Provenance,
};
use xfield::models::cross_field_pl;
use xfield::propagation::synth_ctf_with;
use xfield::spectral::{ctf_to_cir_with, extract_dominant_path_with};
use xfield::{
    apply_position_jitter, classify_region, unwrap_phase_grid, wavelength, FitReport, NoiseSpec, ObservationGrid,
    RayleighAssessment, ScenarioGeometry,
};

use crate::{CliError, Context, RunConfig};

fn provenance(ctx: &Context, command: &str, seed: Option<u64>) -> Provenance {
    Provenance {
        command: command.to_string(),
        seed,
        timestamp: ctx.timestamp.clone(),
    }
}

fn body_name(stem: &str, gzip: bool) -> String {
    if gzip {
        format!("{stem}.csv.gz")
    } else {
        format!("{stem}.csv")
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.15e}")
}

fn read_manifest(path: &Path, kind: DataKind) -> Result<Manifest, CliError> {
    let m = Manifest::read(path)?;
    m.expect_kind(kind)?;
    Ok(m)
}

fn read_observations(path: &Path) -> Result<(Manifest, ObservationGrid), CliError> {
    let m = read_manifest(path, DataKind::Observations)?;
    let grid = read_observations_csv(open_body(&m.data_path(path))?, &m)?;
    Ok((m, grid))
}

fn write_files(files: &[PathBuf], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for p in files {
        writeln!(f, "wrote {}", p.display())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub manifest: Manifest,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for SynthOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = &self.manifest.geometry;
        writeln!(
            f,
            "synthesized {}×{} elements × {} points",
            g.rows,
            g.cols,
            self.manifest.sweep.n_points()
        )?;
        if let Some(r) = &self.manifest.rayleigh {
            writeln!(
                f,
                "region {} (R = {:.4} m, d0 = {} m, max phase error {:.4} rad)",
                r.region, r.rayleigh_distance_m, r.d0_m, r.max_phase_error_rad
            )?;
        }
        write_files(&self.files, f)
    }
}

/// Writes `ctf.json` and `ctf.csv[.gz]`.
pub fn synth(ctx: &Context, cfg: &RunConfig) -> Result<SynthOutcome, CliError> {
    let spec = cfg.geometry()?;
    let sweep = cfg.sweep()?;
    let pattern = cfg.pattern()?;
    let paths = cfg.paths()?;
    let snr_db = cfg.snr_db()?;
    let jitter = cfg.jitter_m()?;
    let band = cfg.boundary_band()?;
    let seed = cfg.seed();
    let gzip = cfg.gzip.unwrap_or(false);

    let nominal = spec.build()?;
    let scenario = match jitter {
        Some(sigma) => ScenarioGeometry::new(
            apply_position_jitter(&nominal.upa, sigma, seed)?,
            nominal.d0,
            nominal.theta,
        )?,
        None => nominal.clone(),
    };
    let noise = snr_db.map(|snr_db| NoiseSpec { snr_db, seed });
    let ctf = synth_ctf_with(ctx.execution, &scenario, &sweep, &paths, &pattern, noise)?;
    let rayleigh = classify_region(&nominal, wavelength(sweep.center()), band)?;

    let body = body_name("ctf", gzip);
    let mut manifest = Manifest::new(DataKind::Ctf, spec, sweep, provenance(ctx, "synth", Some(seed)), &body);
    manifest.rayleigh = Some(rayleigh);
    manifest.pattern = Some(pattern);
    manifest.paths = paths;
    manifest.noise = noise;
    manifest.position_jitter_m = jitter;

    let mut out = OutputSet::new(&ctx.out_dir)?;
    out.stage(&body, |w| write_ctf_csv(w, &ctf))?;
    out.stage_str("ctf.json", &manifest.to_json()?)?;
    Ok(SynthOutcome {
        manifest,
        files: out.commit()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub elements: usize,
    pub gain_min_db: f64,
    pub gain_max_db: f64,
    pub gain_span_db: f64,
    /// Element closest to the array centre.
    pub center_element: (usize, usize),
    pub center_delay_s: f64,
    pub center_distance_m: f64,
}

#[derive(Debug, Clone)]
pub struct ExtractOutcome {
    pub summary: ExtractSummary,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for ExtractOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.summary;
        writeln!(f, "elements        {}", s.elements)?;
        writeln!(f, "gain min/max    {:.4} / {:.4} dB (span {:.4} dB)", s.gain_min_db, s.gain_max_db, s.gain_span_db)?;
        writeln!(
            f,
            "centre element  ({}, {}): delay {:.6} ns, distance {:.6} m",
            s.center_element.0,
            s.center_element.1,
            s.center_delay_s * 1e9,
            s.center_distance_m
        )?;
        write_files(&self.files, f)
    }
}

fn summarize(grid: &ObservationGrid) -> ExtractSummary {
    let gains: Vec<f64> = grid.gains_db().collect();
    let gain_min_db = gains.iter().copied().fold(f64::INFINITY, f64::min);
    let gain_max_db = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let center = grid
        .elements
        .iter()
        .min_by(|a, b| a.dx_m.hypot(a.dz_m).total_cmp(&b.dx_m.hypot(b.dz_m)))
        .expect("non-empty grid");
    ExtractSummary {
        elements: grid.len(),
        gain_min_db,
        gain_max_db,
        gain_span_db: gain_max_db - gain_min_db,
        center_element: (center.row, center.col),
        center_delay_s: center.path.delay_s,
        center_distance_m: center.path.distance_m,
    }
}

/// Reads a CTF set, writes `observations.json` and `observations.csv[.gz]`.
pub fn extract(ctx: &Context, cfg: &RunConfig, input: &Path) -> Result<ExtractOutcome, CliError> {
    let config = cfg.extract()?;
    let window = cfg.window.unwrap_or_default();
    let gzip = cfg.gzip.unwrap_or(false);

    let m = read_manifest(input, DataKind::Ctf)?;
    let ctf = read_ctf_csv(open_body(&m.data_path(input))?, &m)?;
    let cir = ctf_to_cir_with(ctx.execution, &ctf, window);
    let grid = extract_dominant_path_with(ctx.execution, &cir, &ctf, &config)?;

    let body = body_name("observations", gzip);
    let mut om = m.clone();
    om.kind = DataKind::Observations;
    om.data_file = body.clone();
    om.provenance = provenance(ctx, "extract", m.provenance.seed);

    let mut out = OutputSet::new(&ctx.out_dir)?;
    out.stage(&body, |w| write_observations_csv(w, &grid, None))?;
    out.stage_str("observations.json", &om.to_json()?)?;
    Ok(ExtractOutcome {
        summary: summarize(&grid),
        files: out.commit()?,
    })
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub report: FitReport,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for FitOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.report;
        writeln!(
            f,
            "MSE {:.6e} dB² (restart {}, {} iterations{}{})",
            r.mse,
            r.best_restart,
            r.iterations,
            if r.converged { "" } else { ", not converged" },
            if r.saturated { ", exponent clamped" } else { "" }
        )?;
        writeln!(f, "{:<10} {:>16} {:>16}", "parameter", "fitted", "c2·d0 = 1")?;
        let p = &r.params;
        let c = r.canonical_params;
        let rows = [
            ("d_ref [m]", p.d_ref, c.map(|c| c.d_ref)),
            ("c1", p.c1, c.map(|c| c.c1)),
            ("c2 [1/m]", p.c2, c.map(|c| c.c2)),
            ("c3", p.c3, c.map(|c| c.c3)),
            ("c4", p.c4, c.map(|c| c.c4)),
        ];
        for (name, v, canon) in rows {
            let canon = canon.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
            writeln!(f, "{name:<10} {v:>16.6} {canon:>16}")?;
        }
        write_files(&self.files, f)
    }
}

/// Writes `fit.json`, `residuals.json` and `residuals.csv`.
pub fn fit(ctx: &Context, cfg: &RunConfig, input: &Path) -> Result<FitOutcome, CliError> {
    let mut config = cfg.fit()?;
    config.execution = ctx.execution;

    let (m, grid) = read_observations(input)?;
    let report = xfield::fit(&grid, wavelength(m.sweep.center()), m.geometry.d0_m, &config)?;

    let mut rm = m.clone();
    rm.kind = DataKind::Residuals;
    rm.data_file = "residuals.csv".into();
    rm.provenance = provenance(ctx, "fit", Some(config.seed));

    let mut out = OutputSet::new(&ctx.out_dir)?;
    out.stage_str("fit.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    out.stage("residuals.csv", |w| {
        write_observations_csv(w, &grid, Some(("residual_db", &report.residual_db)))
    })?;
    out.stage_str("residuals.json", &rm.to_json()?)?;
    Ok(FitOutcome {
        report,
        files: out.commit()?,
    })
}

/// Field-region summary written by `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    /// Model assessment on the nominal lattice.
    pub assessment: RayleighAssessment,
    /// Largest deviation of the unwrapped measured phase from the planar
    /// wavefront through the element nearest the centre.
    pub measured_max_phase_error_rad: f64,
    pub reference_element: (usize, usize),
    pub threshold_rad: f64,
    /// Measured phase error below π/8.
    pub within_pi_over_8: bool,
    pub model_within_pi_over_8: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_mse_db2: Option<f64>,
    /// Mean square of model minus measured surface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_mse_db2: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ReportOutcome {
    pub region: RegionReport,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for ReportOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.region;
        writeln!(
            f,
            "region {} (R = {:.4} m), phase error measured {:.4} rad, model {:.4} rad, < π/8: {}",
            r.assessment.region,
            r.assessment.rayleigh_distance_m,
            r.measured_max_phase_error_rad,
            r.assessment.max_phase_error_rad,
            r.within_pi_over_8
        )?;
        if let Some(mse) = r.surface_mse_db2 {
            writeln!(f, "surface MSE {mse:.6e} dB²")?;
        }
        write_files(&self.files, f)
    }
}

/// Writes `measured_surface.csv`, `model_surface.csv` (with a fit),
/// `phase_rows.csv`, `phase_cols.csv` and `rayleigh.json`.
pub fn report(ctx: &Context, cfg: &RunConfig, input: &Path, fit: Option<&Path>) -> Result<ReportOutcome, CliError> {
    let band = cfg.boundary_band()?;
    let (m, grid) = read_observations(input)?;
    let fit: Option<FitReport> = match fit {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Some(serde_json::from_str(&text)?)
        }
        None => None,
    };
    if let Some(r) = &fit {
        if r.residual_db.len() != grid.len() {
            return Err(xfield::Error::DimensionMismatch(format!(
                "fit report covers {} elements, observations have {}",
                r.residual_db.len(),
                grid.len()
            ))
            .into());
        }
    }

    let scenario = m.geometry.build()?;
    let lambda = wavelength(m.sweep.center());
    let assessment = classify_region(&scenario, lambda, band)?;
    let unwrapped = unwrap_phase_grid(&grid)?;

    // measured phase error against the plane through the most central element
    let k = 2.0 * PI / lambda;
    let u = scenario.rx_direction();
    let planar = |dx: f64, dz: f64| scenario.d0 - (dx * u[0] + dz * u[2]);
    let (ref_idx, ref_el) = grid
        .elements
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.dx_m.hypot(a.1.dz_m).total_cmp(&b.1.dx_m.hypot(b.1.dz_m)))
        .expect("non-empty grid");
    let ref_planar = planar(ref_el.dx_m, ref_el.dz_m);
    let measured = grid
        .elements
        .iter()
        .zip(&unwrapped)
        .map(|(e, &phi)| ((phi - unwrapped[ref_idx]) + k * (planar(e.dx_m, e.dz_m) - ref_planar)).abs())
        .fold(0.0, f64::max);

    let model = match &fit {
        Some(r) => Some(
            grid.elements
                .iter()
                .map(|e| cross_field_pl(e.dx_m, e.dz_m, r.wavelength_m, r.d0_m, &r.params).map(|pl| -pl.db))
                .collect::<Result<Vec<f64>, _>>()?,
        ),
        None => None,
    };
    let surface_mse = model.as_ref().map(|model| {
        let sum: f64 = model
            .iter()
            .zip(grid.gains_db())
            .map(|(m, g)| (m - g).powi(2))
            .sum();
        sum / grid.len() as f64
    });

    let threshold = PI / 8.0;
    let region = RegionReport {
        assessment,
        measured_max_phase_error_rad: measured,
        reference_element: (ref_el.row, ref_el.col),
        threshold_rad: threshold,
        within_pi_over_8: measured < threshold,
        model_within_pi_over_8: assessment.within_pi_over_8(),
        fit_mse_db2: fit.as_ref().map(|r| r.mse),
        surface_mse_db2: surface_mse,
    };

    let surface = |values: &mut dyn Iterator<Item = f64>| {
        let mut s = String::from("element_row,element_col,dx_m,dz_m,gain_db\n");
        for (e, v) in grid.elements.iter().zip(values) {
            let _ = writeln!(s, "{},{},{},{},{}", e.row, e.col, fmt(e.dx_m), fmt(e.dz_m), fmt(v));
        }
        s
    };

    let mut out = OutputSet::new(&ctx.out_dir)?;
    out.stage_str("measured_surface.csv", &surface(&mut grid.gains_db()))?;
    if let Some(model) = &model {
        out.stage_str("model_surface.csv", &surface(&mut model.iter().copied()))?;
    }
    out.stage("phase_rows.csv", |w| phase_table(w, &grid, &unwrapped, Axis::Row))?;
    out.stage("phase_cols.csv", |w| phase_table(w, &grid, &unwrapped, Axis::Col))?;
    out.stage_str("rayleigh.json", &(serde_json::to_string_pretty(&region)? + "\n"))?;
    Ok(ReportOutcome {
        region,
        files: out.commit()?,
    })
}

#[derive(Clone, Copy)]
enum Axis {
    Row,
    Col,
}

/// Unwrapped phase along each row (over x) or column (over z), with the change
/// relative to the first element of that line.
fn phase_table(w: &mut dyn Write, grid: &ObservationGrid, unwrapped: &[f64], axis: Axis) -> xfield::Result<()> {
    let (rows, cols) = (grid.rows, grid.cols);
    let (outer, inner, header) = match axis {
        Axis::Row => (rows, cols, "element_row,element_col,dx_m,phase_unwrapped_rad,phase_change_rad"),
        Axis::Col => (cols, rows, "element_col,element_row,dz_m,phase_unwrapped_rad,phase_change_rad"),
    };
    writeln!(w, "{header}")?;
    for a in 0..outer {
        let index = |b: usize| match axis {
            Axis::Row => a * cols + b,
            Axis::Col => b * cols + a,
        };
        let first = unwrapped[index(0)];
        for b in 0..inner {
            let i = index(b);
            let e = &grid.elements[i];
            let pos = match axis {
                Axis::Row => e.dx_m,
                Axis::Col => e.dz_m,
            };
            writeln!(w, "{a},{b},{},{},{}", fmt(pos), fmt(unwrapped[i]), fmt(unwrapped[i] - first))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RayleighOutcome {
    pub assessment: RayleighAssessment,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for RayleighOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = &self.assessment;
        writeln!(f, "aperture          {:.6} m", a.aperture_m)?;
        writeln!(f, "wavelength        {:.6e} m", a.wavelength_m)?;
        writeln!(f, "rayleigh distance {:.6} m", a.rayleigh_distance_m)?;
        writeln!(f, "d0                {:.6} m", a.d0_m)?;
        writeln!(f, "region            {}", a.region)?;
        writeln!(
            f,
            "max phase error   {:.6} rad ({} π/8)",
            a.max_phase_error_rad,
            if a.within_pi_over_8() { "<" } else { "≥" }
        )?;
        write_files(&self.files, f)
    }
}

/// Writes `rayleigh.json` for the configured geometry.
pub fn rayleigh(ctx: &Context, cfg: &RunConfig) -> Result<RayleighOutcome, CliError> {
    let scenario = cfg.geometry()?.build()?;
    let freq = match cfg.freq_hz {
        Some(f) if !(f.is_finite() && f > 0.0) => {
            return Err(CliError::Config(format!("freq_hz must be positive, got {f}")))
        }
        Some(f) => f,
        None => cfg.sweep()?.center(),
    };
    let assessment = classify_region(&scenario, wavelength(freq), cfg.boundary_band()?)?;
    let mut out = OutputSet::new(&ctx.out_dir)?;
    out.stage_str("rayleigh.json", &(serde_json::to_string_pretty(&assessment)? + "\n"))?;
    Ok(RayleighOutcome {
        assessment,
        files: out.commit()?,
    })
}
