//! On-disk formats: a JSON manifest next to a CSV body.
//!
//! | body           | columns                                                                  |
//! |----------------|--------------------------------------------------------------------------|
//! | CTF            | `element_index,freq_hz,re,im`                                            |
//! | observations   | `element_row,element_col,dx_m,dz_m,delay_s,distance_m,gain_db,phase_rad` |
//! | residuals      | as observations with `gain_db` replaced by `residual_db`                 |
//!
//! Bodies whose file name ends in `.gz` are gzip-compressed. Floats are written
//! in scientific notation with at least 15 significant digits.

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use tempfile::NamedTempFile;

use crate::geometry::GeometrySpec;
use crate::models::RayleighAssessment;
use crate::propagation::{AperturePattern, CtfGrid, NoiseSpec, SweepPlan, SynthPath};
use crate::spectral::{ElementObservation, ObservationGrid, PathObservation};
use crate::{Error, Result};

pub const SCHEMA_VERSION: &str = "1";

pub const CTF_HEADER: [&str; 4] = ["element_index", "freq_hz", "re", "im"];
pub const OBSERVATION_HEADER: [&str; 8] = [
    "element_row",
    "element_col",
    "dx_m",
    "dz_m",
    "delay_s",
    "distance_m",
    "gain_db",
    "phase_rad",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Ctf,
    Observations,
    Residuals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub seed: Option<u64>,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub kind: DataKind,
    pub geometry: GeometrySpec,
    pub sweep: SweepPlan,
    pub provenance: Provenance,
    /// Body file name, relative to the manifest's directory.
    pub data_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rayleigh: Option<RayleighAssessment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<AperturePattern>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paths: Vec<SynthPath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_jitter_m: Option<f64>,
}

impl Manifest {
    pub fn new(kind: DataKind, geometry: GeometrySpec, sweep: SweepPlan, provenance: Provenance, data_file: impl Into<String>) -> Self {
        Manifest {
            schema_version: SCHEMA_VERSION.to_string(),
            kind,
            geometry,
            sweep,
            provenance,
            data_file: data_file.into(),
            rayleigh: None,
            pattern: None,
            paths: Vec::new(),
            noise: None,
            position_jitter_m: None,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let m: Manifest = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported schema_version '{}' in {}",
                m.schema_version,
                path.display()
            )));
        }
        m.geometry.build()?;
        Ok(m)
    }

    pub fn expect_kind(&self, kind: DataKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Format(format!(
                "expected a {kind:?} manifest, found {:?}",
                self.kind
            )))
        }
    }

    /// Body path resolved against the manifest location.
    pub fn data_path(&self, manifest_path: &Path) -> PathBuf {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&self.data_file)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Opens a body file, transparently decompressing `.gz`.
pub fn open_body(path: &Path) -> Result<Box<dyn Read>> {
    let f = BufReader::new(File::open(path)?);
    if is_gz(path) {
        Ok(Box::new(GzDecoder::new(f)))
    } else {
        Ok(Box::new(f))
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

#[inline]
fn fmt(v: f64) -> String {
    format!("{v:.15e}")
}

pub fn write_ctf_csv<W: Write>(out: W, ctf: &CtfGrid) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CTF_HEADER)?;
    let freqs: Vec<String> = ctf.sweep.frequencies().map(fmt).collect();
    for e in 0..ctf.n_elements() {
        let idx = e.to_string();
        for (h, f) in ctf.element(e).iter().zip(&freqs) {
            w.write_record([idx.as_str(), f, &fmt(h.re), &fmt(h.im)])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct CtfRow {
    element_index: usize,
    freq_hz: f64,
    re: f64,
    im: f64,
}

/// Reads a CTF body and checks it against the manifest's geometry and sweep.
pub fn read_ctf_csv<R: Read>(input: R, manifest: &Manifest) -> Result<CtfGrid> {
    let geometry = manifest.geometry.build()?;
    let sweep = manifest.sweep;
    let n = sweep.n_points();
    let expected = geometry.upa.len() * n;
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &CTF_HEADER)?;
    let mut samples = Vec::with_capacity(expected);
    for (i, row) in r.deserialize::<CtfRow>().enumerate() {
        let row = row?;
        if i >= expected {
            return Err(Error::DimensionMismatch(format!(
                "CTF body has more than {expected} rows"
            )));
        }
        let (e, k) = (i / n, i % n);
        if row.element_index != e {
            return Err(Error::DimensionMismatch(format!(
                "row {i}: element_index {} where {e} was expected",
                row.element_index
            )));
        }
        let f = sweep.frequency(k);
        if (row.freq_hz - f).abs() > 1e-9 * f {
            return Err(Error::DimensionMismatch(format!(
                "row {i}: frequency {} Hz does not match sweep point {f} Hz",
                row.freq_hz
            )));
        }
        samples.push(Complex64::new(row.re, row.im));
    }
    if samples.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "CTF body has {} rows, manifest implies {} elements × {} points",
            samples.len(),
            geometry.upa.len(),
            n
        )));
    }
    CtfGrid::new(geometry, sweep, samples)
}

/// Writes observations. `replacement = Some((name, values))` swaps the `gain_db`
/// column for `values` under the header `name`.
pub fn write_observations_csv<W: Write>(
    out: W,
    grid: &ObservationGrid,
    replacement: Option<(&str, &[f64])>,
) -> Result<()> {
    let mut header = OBSERVATION_HEADER;
    if let Some((name, values)) = replacement {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} replacement values for {} elements",
                values.len(),
                grid.len()
            )));
        }
        header[6] = name;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for (i, e) in grid.elements.iter().enumerate() {
        let value = replacement.map_or(e.path.gain_db, |(_, v)| v[i]);
        w.write_record([
            e.row.to_string(),
            e.col.to_string(),
            fmt(e.dx_m),
            fmt(e.dz_m),
            fmt(e.path.delay_s),
            fmt(e.path.distance_m),
            fmt(value),
            fmt(e.path.phase_rad),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an observation body. Rows may come from external measurements; they are
/// validated against the manifest lattice but offsets are taken from the file.
pub fn read_observations_csv<R: Read>(input: R, manifest: &Manifest) -> Result<ObservationGrid> {
    let (rows, cols) = (manifest.geometry.rows, manifest.geometry.cols);
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &OBSERVATION_HEADER)?;
    let mut elements = Vec::with_capacity(rows * cols);
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != OBSERVATION_HEADER.len() {
            return Err(Error::Format(format!("row {i}: expected 8 fields, found {}", rec.len())));
        }
        let int = |j: usize| -> Result<usize> {
            rec[j].trim().parse().map_err(|_| Error::Format(format!("row {i}: bad integer '{}'", &rec[j])))
        };
        let float = |j: usize| -> Result<f64> {
            rec[j].trim().parse().map_err(|_| Error::Format(format!("row {i}: bad number '{}'", &rec[j])))
        };
        let (row, col) = (int(0)?, int(1)?);
        if row >= rows || col >= cols {
            return Err(Error::DimensionMismatch(format!(
                "row {i}: element ({row}, {col}) outside the {rows}×{cols} lattice"
            )));
        }
        elements.push(ElementObservation {
            row,
            col,
            dx_m: float(2)?,
            dz_m: float(3)?,
            path: PathObservation {
                delay_s: float(4)?,
                distance_m: float(5)?,
                gain_db: float(6)?,
                phase_rad: float(7)?,
            },
        });
    }
    if elements.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "observation body has {} rows, manifest lattice has {}",
            elements.len(),
            rows * cols
        )));
    }
    Ok(ObservationGrid { rows, cols, elements })
}

fn check_header<R: Read>(r: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let h = r.headers()?;
    if h.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::Format(format!(
            "unexpected CSV header {:?}, want {:?}",
            h.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    Ok(())
}

/// Output files staged in temporaries and renamed into place together on [`commit`](Self::commit).
///
/// Dropping an uncommitted set removes every staged file.
pub struct OutputSet {
    dir: PathBuf,
    staged: Vec<(NamedTempFile, PathBuf)>,
}

impl OutputSet {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(OutputSet {
            dir,
            staged: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Stages `name` (relative to the output directory). `.gz` names are compressed.
    pub fn stage<F>(&mut self, name: &str, write: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        let target = self.dir.join(name);
        let parent = target.parent().unwrap_or(&self.dir).to_path_buf();
        std::fs::create_dir_all(&parent)?;
        let tmp = NamedTempFile::new_in(&parent)?;
        {
            let buf = BufWriter::new(tmp.as_file());
            if is_gz(&target) {
                let mut gz = GzEncoder::new(buf, Compression::default());
                write(&mut gz)?;
                gz.finish()?.flush()?;
            } else {
                let mut buf = buf;
                write(&mut buf)?;
                buf.flush()?;
            }
        }
        self.staged.push((tmp, target.clone()));
        Ok(target)
    }

    pub fn stage_str(&mut self, name: &str, content: &str) -> Result<PathBuf> {
        self.stage(name, |w| Ok(w.write_all(content.as_bytes())?))
    }

    /// Moves every staged file into place.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.staged.len());
        for (tmp, target) in self.staged {
            // temporaries are created 0600
            #[cfg(unix)]
            {
                use std::os::unix::fs::PermissionsExt;
                tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
            }
            tmp.persist(&target).map_err(|e| Error::Io(e.error))?;
            written.push(target);
        }
        Ok(written)
    }
}
