//! Closed-form channel models and field-region criteria.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::geometry::{element_distance, element_position, ScenarioGeometry};
use crate::{Error, Result};

/// Free-space path loss `20·log10(4π d / λ)` in dB.
pub fn friis_fspl(d: f64, wavelength: f64) -> Result<f64> {
    positive(d, "distance")?;
    positive(wavelength, "wavelength")?;
    Ok(fspl_db(d, wavelength))
}

#[inline]
pub(crate) fn fspl_db(d: f64, wavelength: f64) -> f64 {
    20.0 * (4.0 * PI * d / wavelength).log10()
}

/// Rayleigh distance `2 D² cos²θ / λ`.
pub fn rayleigh_distance(aperture_d: f64, wavelength: f64, theta: f64) -> Result<f64> {
    if !(aperture_d.is_finite() && aperture_d >= 0.0) {
        return Err(Error::invalid(format!("aperture must be ≥ 0, got {aperture_d}")));
    }
    positive(wavelength, "wavelength")?;
    if !(theta.is_finite() && (0.0..=PI / 2.0).contains(&theta)) {
        return Err(Error::invalid(format!("theta must lie in [0, π/2], got {theta}")));
    }
    if theta == PI / 2.0 {
        return Ok(0.0);
    }
    let c = theta.cos();
    Ok(2.0 * aperture_d * aperture_d * c * c / wavelength)
}

/// Largest phase deviation (rad) between the exact spherical wavefront and the
/// planar wavefront through the array centre, over all elements.
///
/// The planar reference is the first-order expansion of the element distance
/// about the centre, `d0 − r·û`, where `û` points towards the receiver. At
/// broadside this is `2π/λ · max(d − d0)`.
pub fn max_phase_error(scenario: &ScenarioGeometry, wavelength: f64) -> Result<f64> {
    positive(wavelength, "wavelength")?;
    let u = scenario.rx_direction();
    let k = 2.0 * PI / wavelength;
    Ok(scenario
        .upa
        .offsets()
        .iter()
        .map(|&o| {
            let r = element_position(o);
            let along = r[0] * u[0] + r[1] * u[1] + r[2] * u[2];
            let planar = scenario.d0 - along;
            // d² − planar² = |r|² − (r·û)², written out to avoid cancellation at large d0
            let r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
            let excess = (r2 - along * along) / (element_distance(scenario, o) + planar);
            k * excess.abs()
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "FF")]
    FarField,
    Boundary,
    #[serde(rename = "NF")]
    NearField,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Region::FarField => "FF",
            Region::Boundary => "Boundary",
            Region::NearField => "NF",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayleighAssessment {
    pub aperture_m: f64,
    pub wavelength_m: f64,
    pub d0_m: f64,
    pub rayleigh_distance_m: f64,
    pub region: Region,
    pub max_phase_error_rad: f64,
}

impl RayleighAssessment {
    /// Whether the planar-wavefront phase error stays below π/8.
    pub fn within_pi_over_8(&self) -> bool {
        self.max_phase_error_rad < PI / 8.0
    }
}

/// Default half-width of the Boundary band, as a fraction of the Rayleigh distance.
pub const DEFAULT_BOUNDARY_BAND: f64 = 0.15;

/// Classifies `d0` against the Rayleigh distance of the array diagonal.
///
/// NF if `d0 < (1−band)·R`, FF if `d0 > (1+band)·R`, Boundary otherwise.
pub fn classify_region(scenario: &ScenarioGeometry, wavelength: f64, boundary_band: f64) -> Result<RayleighAssessment> {
    if !(boundary_band.is_finite() && (0.0..1.0).contains(&boundary_band)) {
        return Err(Error::invalid(format!(
            "boundary band must lie in [0, 1), got {boundary_band}"
        )));
    }
    let aperture = scenario.upa.aperture();
    let r = rayleigh_distance(aperture, wavelength, scenario.theta)?;
    let d0 = scenario.d0;
    let region = if d0 < (1.0 - boundary_band) * r {
        Region::NearField
    } else if d0 > (1.0 + boundary_band) * r {
        Region::FarField
    } else {
        Region::Boundary
    };
    Ok(RayleighAssessment {
        aperture_m: aperture,
        wavelength_m: wavelength,
        d0_m: d0,
        rayleigh_distance_m: r,
        region,
        max_phase_error_rad: max_phase_error(scenario, wavelength)?,
    })
}

/// Parameters of the cross-field path loss model
///
/// ```text
/// PL = 20 log10(4π d_ref K / λ),  K = 1 + c1^p,
/// p  = [(Δx/c3)² + (Δz/c4)²]/λ − c2·d0
/// ```
///
/// Offsets, λ and d0 are in meters, so `c2` carries 1/m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsSpec", into = "ParamsSpec")]
pub struct CrossFieldParams {
    pub d_ref: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

#[derive(Serialize, Deserialize)]
struct ParamsSpec {
    d_ref_m: f64,
    c1: f64,
    c2_per_m: f64,
    c3: f64,
    c4: f64,
}

impl TryFrom<ParamsSpec> for CrossFieldParams {
    type Error = Error;
    fn try_from(s: ParamsSpec) -> Result<Self> {
        CrossFieldParams::new(s.d_ref_m, s.c1, s.c2_per_m, s.c3, s.c4)
    }
}

impl From<CrossFieldParams> for ParamsSpec {
    fn from(p: CrossFieldParams) -> Self {
        ParamsSpec {
            d_ref_m: p.d_ref,
            c1: p.c1,
            c2_per_m: p.c2,
            c3: p.c3,
            c4: p.c4,
        }
    }
}

/// Cross-field factor together with its exponent and overflow state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor {
    pub k: f64,
    /// Exponent `p` actually used (after clamping).
    pub exponent: f64,
    pub saturated: bool,
}

impl CrossFieldParams {
    /// Fit reported for the measured 64×64 array (0.5 mm spacing, d0 = 0.86 m, 260–320 GHz).
    pub const REFERENCE_FIT: CrossFieldParams = CrossFieldParams {
        d_ref: 0.4459,
        c1: 1.3295,
        c2: 1.1433,
        c3: 0.8885,
        c4: 1.2318,
    };

    pub fn new(d_ref: f64, c1: f64, c2: f64, c3: f64, c4: f64) -> Result<Self> {
        let p = CrossFieldParams { d_ref, c1, c2, c3, c4 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.d_ref.is_finite()
            && self.d_ref > 0.0
            && self.c1.is_finite()
            && self.c1 > 1.0
            && self.c2.is_finite()
            && self.c3.is_finite()
            && self.c3 > 0.0
            && self.c4.is_finite()
            && self.c4 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "cross-field parameters need d_ref > 0, c1 > 1, c3 > 0, c4 > 0 and finite c2: {self:?}"
            )))
        }
    }

    /// Default exponent clamp, `700 / ln c1` (keeps `c1^p` below `e^700`).
    pub fn default_max_exponent(&self) -> f64 {
        700.0 / self.c1.ln()
    }

    /// Exponent `p` before clamping.
    #[inline]
    pub fn exponent(&self, dx: f64, dz: f64, wavelength: f64, d0: f64) -> f64 {
        let ax = dx / self.c3;
        let az = dz / self.c4;
        (ax * ax + az * az) / wavelength - self.c2 * d0
    }

    #[inline]
    pub(crate) fn factor_unchecked(&self, dx: f64, dz: f64, wavelength: f64, d0: f64, max_exponent: f64) -> Factor {
        let p = self.exponent(dx, dz, wavelength, d0);
        let saturated = p > max_exponent;
        let exponent = if saturated { max_exponent } else { p };
        Factor {
            k: 1.0 + (exponent * self.c1.ln()).exp(),
            exponent,
            saturated,
        }
    }

    #[inline]
    pub(crate) fn pl_unchecked(&self, dx: f64, dz: f64, wavelength: f64, d0: f64) -> (f64, bool) {
        let f = self.factor_unchecked(dx, dz, wavelength, d0, self.default_max_exponent());
        (fspl_db(self.d_ref * f.k, wavelength), f.saturated)
    }

    /// Applies the exact reparametrization `c1 → c1^s, c2 → c2/s, c3 → c3√s, c4 → c4√s`,
    /// which leaves `K` unchanged everywhere.
    pub fn rescaled(&self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::invalid(format!("rescale factor must be positive, got {s}")));
        }
        let r = s.sqrt();
        CrossFieldParams::new(self.d_ref, self.c1.powf(s), self.c2 / s, self.c3 * r, self.c4 * r)
    }

    /// Representative with `c2·d0 = 1`, for side-by-side comparison of fits.
    /// `None` when `c2 ≤ 0`, where no positive rescale reaches that gauge.
    pub fn canonical(&self, d0: f64) -> Option<Self> {
        let s = self.c2 * d0;
        if s > 0.0 {
            self.rescaled(s).ok()
        } else {
            None
        }
    }
}

/// Cross-field factor `K(Δx, Δz, λ, d0)` with the default exponent clamp.
pub fn cross_field_factor(dx: f64, dz: f64, wavelength: f64, d0: f64, params: &CrossFieldParams) -> Result<Factor> {
    cross_field_factor_clamped(dx, dz, wavelength, d0, params, params.default_max_exponent())
}

/// [`cross_field_factor`] with an explicit cap on the exponent `p`.
pub fn cross_field_factor_clamped(
    dx: f64,
    dz: f64,
    wavelength: f64,
    d0: f64,
    params: &CrossFieldParams,
    max_exponent: f64,
) -> Result<Factor> {
    positive(wavelength, "wavelength")?;
    positive(d0, "d0")?;
    if !(dx.is_finite() && dz.is_finite()) {
        return Err(Error::NonFinite("element offset"));
    }
    if max_exponent.is_nan() {
        return Err(Error::NonFinite("exponent clamp"));
    }
    params.validate()?;
    Ok(params.factor_unchecked(dx, dz, wavelength, d0, max_exponent))
}

/// Model path loss at an element, in dB, plus the saturation flag of `K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelPathLoss {
    pub db: f64,
    pub saturated: bool,
}

/// Cross-field path loss `20 log10(4π d_ref K / λ)`.
pub fn cross_field_pl(dx: f64, dz: f64, wavelength: f64, d0: f64, params: &CrossFieldParams) -> Result<ModelPathLoss> {
    let f = cross_field_factor(dx, dz, wavelength, d0, params)?;
    Ok(ModelPathLoss {
        db: fspl_db(params.d_ref * f.k, wavelength),
        saturated: f.saturated,
    })
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be positive, got {v}")))
    }
}
