//! Array lattice and Tx–Rx scenario geometry.
//!
//! Coordinates: the array lies in the x–z plane centred on the origin, the
//! broadside axis is +y. Elements are stored in scan order, starting at the
//! bottom-left corner, x fastest then z, so index `i` sits at
//! `row = i / cols` (z) and `col = i % cols` (x).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform planar array with centre-referenced element offsets `(Δx, Δz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpaGeometry {
    rows: usize,
    cols: usize,
    spacing: f64,
    offsets: Vec<(f64, f64)>,
}

/// Builds a `rows × cols` lattice with the given element spacing (m).
pub fn build_upa(rows: usize, cols: usize, spacing: f64) -> Result<UpaGeometry> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "array needs at least one row and column, got {rows}×{cols}"
        )));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::invalid(format!(
            "element spacing must be positive, got {spacing}"
        )));
    }
    let x0 = (cols as f64 - 1.0) / 2.0;
    let z0 = (rows as f64 - 1.0) / 2.0;
    let offsets = (0..rows * cols)
        .map(|i| {
            let (row, col) = (i / cols, i % cols);
            ((col as f64 - x0) * spacing, (row as f64 - z0) * spacing)
        })
        .collect();
    Ok(UpaGeometry {
        rows,
        cols,
        spacing,
        offsets,
    })
}

impl UpaGeometry {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// `(Δx, Δz)` of every element in scan order.
    pub fn offsets(&self) -> &[(f64, f64)] {
        &self.offsets
    }

    pub fn offset(&self, index: usize) -> (f64, f64) {
        self.offsets[index]
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Lattice extent along x, `(cols − 1)·spacing`.
    pub fn side_x(&self) -> f64 {
        (self.cols - 1) as f64 * self.spacing
    }

    /// Lattice extent along z, `(rows − 1)·spacing`.
    pub fn side_z(&self) -> f64 {
        (self.rows - 1) as f64 * self.spacing
    }

    /// Aperture `D`, taken as the lattice diagonal.
    pub fn aperture(&self) -> f64 {
        self.side_x().hypot(self.side_z())
    }

    /// Same lattice with replaced offsets (used by the position-jitter model).
    pub(crate) fn with_offsets(&self, offsets: Vec<(f64, f64)>) -> Self {
        debug_assert_eq!(offsets.len(), self.offsets.len());
        UpaGeometry {
            offsets,
            ..self.clone()
        }
    }
}

/// Array plus a single static receive point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGeometry {
    pub upa: UpaGeometry,
    /// Distance from the array centre to the receiver (m).
    pub d0: f64,
    /// Angle between the receive direction and broadside (rad), measured in the x–y plane.
    pub theta: f64,
}

impl ScenarioGeometry {
    pub fn new(upa: UpaGeometry, d0: f64, theta: f64) -> Result<Self> {
        if !(d0.is_finite() && d0 > 0.0) {
            return Err(Error::invalid(format!("d0 must be positive, got {d0}")));
        }
        if !(theta.is_finite() && (0.0..std::f64::consts::FRAC_PI_2).contains(&theta)) {
            return Err(Error::invalid(format!(
                "theta must lie in [0, π/2), got {theta}"
            )));
        }
        Ok(ScenarioGeometry { upa, d0, theta })
    }

    /// Broadside scenario (`theta = 0`).
    pub fn broadside(upa: UpaGeometry, d0: f64) -> Result<Self> {
        Self::new(upa, d0, 0.0)
    }

    /// Receiver position in array coordinates.
    pub fn rx_position(&self) -> [f64; 3] {
        [self.d0 * self.theta.sin(), self.d0 * self.theta.cos(), 0.0]
    }

    /// Unit vector from the array centre towards the receiver.
    pub fn rx_direction(&self) -> [f64; 3] {
        [self.theta.sin(), self.theta.cos(), 0.0]
    }

    /// Exact distances of every element to the receiver, in scan order.
    pub fn distances(&self) -> Vec<f64> {
        self.upa
            .offsets()
            .iter()
            .map(|&o| element_distance(self, o))
            .collect()
    }
}

/// Position of an element with offset `(Δx, Δz)`.
#[inline]
pub fn element_position(offset: (f64, f64)) -> [f64; 3] {
    [offset.0, 0.0, offset.1]
}

/// Exact spherical distance from the element at `offset` to the receiver.
///
/// For broadside this is `√(d0² + Δx² + Δz²)`.
pub fn element_distance(scenario: &ScenarioGeometry, offset: (f64, f64)) -> f64 {
    distance(element_position(offset), scenario.rx_position())
}

#[inline]
pub(crate) fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Plain serialisable form of a scenario, as stored in file manifests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    pub d0_m: f64,
    pub theta_rad: f64,
}

impl GeometrySpec {
    pub fn build(&self) -> Result<ScenarioGeometry> {
        ScenarioGeometry::new(
            build_upa(self.rows, self.cols, self.spacing_m)?,
            self.d0_m,
            self.theta_rad,
        )
    }
}

impl From<&ScenarioGeometry> for GeometrySpec {
    fn from(s: &ScenarioGeometry) -> Self {
        GeometrySpec {
            rows: s.upa.rows(),
            cols: s.upa.cols(),
            spacing_m: s.upa.spacing(),
            d0_m: s.d0,
            theta_rad: s.theta,
        }
    }
}
