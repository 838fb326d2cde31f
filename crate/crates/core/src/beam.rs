//! Laguerre-Gaussian beam and fiber-mode field evaluation.
//!
//! Everything downstream reduces to overlap integrals between two families of
//! fields on the receive-aperture plane:
//!
//! * the incident free-space LG beam after propagating a distance `z`,
//!   laterally displaced by a pointing error `d` and tilted by an
//!   angle-of-arrival fluctuation `ε`, and
//! * the fiber's guided LP modes, approximated by LG profiles and imaged
//!   backwards through the coupling lens onto the same plane.
//!
//! This module provides the scalar field values for both, plus the special
//! functions (associated Laguerre polynomials, normalization constants) and
//! the propagated-beam geometry they need. All quantities are SI; unit
//! conversions happen at the IO boundary, never here.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

/// Errors from beam-geometry and fiber-specification construction.
#[derive(Debug, Error, PartialEq)]
pub enum BeamError {
    #[error("wavelength must be positive, got {0} m")]
    NonPositiveWavelength(f64),
    #[error("waist radius must be positive, got {0} m")]
    NonPositiveWaist(f64),
    #[error("propagation distance must be non-negative, got {0} m")]
    NegativeDistance(f64),
    #[error("mode-field radius must be positive, got {0} m")]
    NonPositiveModeField(f64),
    #[error("focal length must be positive, got {0} m")]
    NonPositiveFocalLength(f64),
    #[error("fiber must support at least one mode")]
    EmptyModeList,
    #[error("duplicate fiber mode (p={p}, l={l})")]
    DuplicateMode { p: u32, l: i32 },
}

/// Mode index shared by free-space LG beams and their fiber-side LP partners.
///
/// `p` is the radial order and `l` the (signed) azimuthal order. Under the
/// mode-mapping convention used throughout, the fiber mode LP_{l,p+1} and the
/// free-space mode LG_{p,l} are the same object; [`ModeIndex::lp_label`]
/// renders that fiber-side name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeIndex {
    pub p: u32,
    pub l: i32,
}

impl ModeIndex {
    pub const fn new(p: u32, l: i32) -> Self {
        Self { p, l }
    }

    /// Combined order 2p + |l| governing spot growth and Gouy phase.
    pub fn combined_order(&self) -> u32 {
        2 * self.p + self.l.unsigned_abs()
    }

    /// Fiber-side label, e.g. (p=0, l=1) -> "LP11", (p=1, l=0) -> "LP02".
    pub fn lp_label(&self) -> String {
        format!("LP{}{}", self.l.unsigned_abs(), self.p + 1)
    }

    /// The degenerate partner with the azimuthal sign flipped.
    pub fn conjugate_order(&self) -> Self {
        Self { p: self.p, l: -self.l }
    }
}

impl std::fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.p, self.l)
    }
}

/// Which spot-size law to apply when propagating the beam.
///
/// `Linear` takes the spot radius as `ω_z = ω0·√((1+2p+|l|)(1 + z/z_R))`,
/// with a growth factor linear in z; every calibration anchor in this
/// library assumes it. `Standard` is the textbook Gaussian-beam law, with
/// the second factor replaced by `1 + (z/z_R)²`. Both variants are kept
/// because aperture optima are sensitive to the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpotModel {
    #[default]
    Linear,
    Standard,
}

/// Transmitter-side beam description before propagation.
///
/// `flatten_curvature` models a receiver whose coupling optics cancel the
/// quadratic wavefront of the arriving beam (coupling evaluated at the lens
/// image plane): the propagated geometry then carries an infinite curvature
/// radius so the `exp(-jν̃g²/2R_z)` factor drops out of the field while spot
/// size, Gouy phase and tilt response are unchanged. The capacity experiments
/// rely on this; with the raw wavefront, a 24 mm aperture accumulates ~29 rad
/// of quadratic phase and every mode decorrelates from its fiber partner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamParams {
    pub wavelength: f64,
    pub waist: f64,
    pub distance: f64,
    pub spot_model: SpotModel,
    pub flatten_curvature: bool,
}

impl BeamParams {
    pub fn new(wavelength: f64, waist: f64, distance: f64) -> Self {
        Self {
            wavelength,
            waist,
            distance,
            spot_model: SpotModel::Linear,
            flatten_curvature: false,
        }
    }
}

/// Propagated-beam parameters at the receive plane, for one mode.
///
/// Invariants (checked in tests, not at runtime): `z_R = πω0²/λ`,
/// `ν̃ = 2π/λ`, `R_z = z(1+(z_R/z)²)` for z > 0, and `ω_z ≥ ω0` for z ≥ 0.
/// `curvature` is `f64::INFINITY` when the wavefront has been flattened by
/// the receiver optics (see [`BeamParams::flatten_curvature`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamGeometry {
    pub wavelength: f64,
    pub waist: f64,
    pub distance: f64,
    pub rayleigh_range: f64,
    pub spot_radius: f64,
    pub curvature: f64,
    pub gouy: f64,
    pub wavenumber: f64,
}

impl BeamGeometry {
    /// Propagates `params` to distance `z` for the given mode.
    ///
    /// Rejects non-positive wavelength/waist and negative distance. At z = 0
    /// the curvature radius is infinite and the spot radius reduces to
    /// `ω0·√(2p+|l|+1)` under either spot model.
    pub fn propagate(params: &BeamParams, mode: ModeIndex) -> Result<Self, BeamError> {
        if params.wavelength <= 0.0 {
            return Err(BeamError::NonPositiveWavelength(params.wavelength));
        }
        if params.waist <= 0.0 {
            return Err(BeamError::NonPositiveWaist(params.waist));
        }
        if params.distance < 0.0 {
            return Err(BeamError::NegativeDistance(params.distance));
        }
        let z = params.distance;
        let z_r = PI * params.waist * params.waist / params.wavelength;
        let m = f64::from(mode.combined_order()) + 1.0;
        let growth = match params.spot_model {
            SpotModel::Linear => 1.0 + z / z_r,
            SpotModel::Standard => 1.0 + (z / z_r) * (z / z_r),
        };
        let curvature = if params.flatten_curvature || z == 0.0 {
            f64::INFINITY
        } else {
            z * (1.0 + (z_r / z) * (z_r / z))
        };
        Ok(Self {
            wavelength: params.wavelength,
            waist: params.waist,
            distance: z,
            rayleigh_range: z_r,
            spot_radius: params.waist * (m * growth).sqrt(),
            curvature,
            gouy: (z / z_r).atan(),
            wavenumber: 2.0 * PI / params.wavelength,
        })
    }
}

/// Fiber and coupling-lens description.
///
/// The guided modes are represented on the aperture plane by LG profiles of
/// radius `ω = λf/(πω_a)`, the mode-field radius imaged backwards through
/// the lens of focal length `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberSpec {
    pub mode_field_radius: f64,
    pub focal_length: f64,
    pub supported_modes: Vec<ModeIndex>,
    /// Wavelength used for the back-propagation, normally the link wavelength.
    pub wavelength: f64,
}

impl FiberSpec {
    pub fn new(
        mode_field_radius: f64,
        focal_length: f64,
        wavelength: f64,
        supported_modes: Vec<ModeIndex>,
    ) -> Result<Self, BeamError> {
        if mode_field_radius <= 0.0 {
            return Err(BeamError::NonPositiveModeField(mode_field_radius));
        }
        if focal_length <= 0.0 {
            return Err(BeamError::NonPositiveFocalLength(focal_length));
        }
        if wavelength <= 0.0 {
            return Err(BeamError::NonPositiveWavelength(wavelength));
        }
        if supported_modes.is_empty() {
            return Err(BeamError::EmptyModeList);
        }
        for (i, m) in supported_modes.iter().enumerate() {
            if supported_modes[..i].contains(m) {
                return Err(BeamError::DuplicateMode { p: m.p, l: m.l });
            }
        }
        Ok(Self {
            mode_field_radius,
            focal_length,
            supported_modes,
            wavelength,
        })
    }

    /// Back-propagated mode radius ω = λf/(πω_a) on the aperture plane.
    pub fn backprop_radius(&self) -> f64 {
        self.wavelength * self.focal_length / (PI * self.mode_field_radius)
    }

    /// Re-derives the focal length so that `backprop_radius` equals `omega`.
    pub fn with_backprop_radius(mut self, omega: f64) -> Self {
        self.focal_length = omega * PI * self.mode_field_radius / self.wavelength;
        self
    }
}

/// Associated Laguerre polynomial L_p^a(x) by the standard three-term
/// recurrence, exact (up to rounding) for all polynomial degrees.
pub fn laguerre_assoc(p: u32, a: u32, x: f64) -> f64 {
    let a = f64::from(a);
    match p {
        0 => 1.0,
        _ => {
            let mut lm1 = 1.0;
            let mut l = 1.0 + a - x;
            for k in 1..p {
                let k = f64::from(k);
                let next = ((2.0 * k + 1.0 + a - x) * l - (k + a) * lm1) / (k + 1.0);
                lm1 = l;
                l = next;
            }
            l
        }
    }
}

// ln(n!) as a sum of logs; exact enough (error ~n·ulp) at the orders in play
// and immune to the n! > f64::MAX overflow that a direct product hits at 171.
fn ln_factorial(n: u32) -> f64 {
    (2..=u64::from(n)).map(|k| (k as f64).ln()).sum()
}

/// LG normalization constant B_pl = √(2·p!/(π·(|l|+p)!)).
///
/// Evaluated through log-factorials once |l|+p exceeds 20 so that large
/// orders neither overflow nor lose accuracy to a huge ratio.
pub fn lg_normalization(p: u32, l: i32) -> f64 {
    let la = l.unsigned_abs();
    if la + p <= 20 {
        let mut ratio = 1.0; // p!/(|l|+p)! = 1/((p+1)·…·(p+|l|))
        for k in (p + 1)..=(la + p) {
            ratio /= f64::from(k);
        }
        (2.0 * ratio / PI).sqrt()
    } else {
        let ln = f64::ln(2.0 / PI) + ln_factorial(p) - ln_factorial(la + p);
        (0.5 * ln).exp()
    }
}

/// Distance g(r,θ) = √(r² + d² − 2rd·cosθ) from the displaced beam axis to
/// the aperture point (r, θ). The displacement is along θ = 0.
pub fn displaced_radius(r: f64, theta: f64, d: f64) -> f64 {
    // Hypot-style guard: the cosine form can go slightly negative at
    // near-coincident points.
    (r * r + d * d - 2.0 * r * d * theta.cos()).max(0.0).sqrt()
}

/// Azimuth ϑ of the aperture point (r, θ) as seen from the displaced beam
/// axis.
///
/// Piecewise form: ϑ = π ∓ arccos((d − r·cosθ)/g) with the minus branch on
/// θ ∈ [0, π] and the plus branch on (π, 2π). Conventions at the edge cases:
/// g = 0 (point on the displaced axis) returns 0, and d = 0 reduces to
/// ϑ = θ on both branches.
pub fn displaced_azimuth(r: f64, theta: f64, d: f64) -> f64 {
    let g = displaced_radius(r, theta, d);
    if g == 0.0 {
        return 0.0;
    }
    let c = ((d - r * theta.cos()) / g).clamp(-1.0, 1.0);
    let theta = theta.rem_euclid(2.0 * PI);
    if theta <= PI {
        PI - c.acos()
    } else {
        PI + c.acos()
    }
}

/// Complex incident LG field on the aperture plane under pointing error `d`
/// and angle-of-arrival tilt `eps` (field units 1/m; unit norm over the full
/// plane at d = ε = 0).
///
/// The amplitude is the aligned LG profile evaluated at the displaced
/// coordinates (g, ϑ); the tilt contributes a linear phase ramp ν̃·ε·g under
/// the small-angle approximation, and the constant carrier phase −ν̃z and
/// Gouy advance (2p+|l|+1)ζ are retained so that fields of different orders
/// keep their relative phases:
///
/// amp = (B_pl/ω_z)·(√2·g/ω_z)^|l|·L_p^|l|(2g²/ω_z²)·exp(−g²/ω_z²)
/// phase = −ν̃g²/(2R_z) − ν̃(z + ε·g) + (2p+|l|+1)ζ − l·ϑ
pub fn lg_field_misaligned(
    mode: ModeIndex,
    geom: &BeamGeometry,
    r: f64,
    theta: f64,
    d: f64,
    eps: f64,
) -> Complex64 {
    let g = displaced_radius(r, theta, d);
    let vartheta = displaced_azimuth(r, theta, d);
    let wz = geom.spot_radius;
    let la = mode.l.unsigned_abs();
    let u = g / wz;
    let amp = lg_normalization(mode.p, mode.l) / wz
        * (std::f64::consts::SQRT_2 * u).powi(la as i32)
        * laguerre_assoc(mode.p, la, 2.0 * u * u)
        * (-u * u).exp();
    let mut phase = -geom.wavenumber * (geom.distance + eps * g)
        + f64::from(mode.combined_order() + 1) * geom.gouy
        - f64::from(mode.l) * vartheta;
    if geom.curvature.is_finite() {
        phase -= geom.wavenumber * g * g / (2.0 * geom.curvature);
    }
    amp * Complex64::from_polar(1.0, phase)
}

/// Complex fiber-mode field on the aperture plane (back-propagated LP_{l,p+1}
/// as an LG profile of radius ω; unit L² norm over the infinite plane):
///
/// (B_pl/ω)·(√2·r/ω)^|l|·L_p^|l|(2r²/ω²)·exp(−r²/ω²)·exp(−jlθ)
pub fn fiber_mode_backprop(mode: ModeIndex, fiber: &FiberSpec, r: f64, theta: f64) -> Complex64 {
    let w = fiber.backprop_radius();
    let la = mode.l.unsigned_abs();
    let u = r / w;
    let amp = lg_normalization(mode.p, mode.l) / w
        * (std::f64::consts::SQRT_2 * u).powi(la as i32)
        * laguerre_assoc(mode.p, la, 2.0 * u * u)
        * (-u * u).exp();
    amp * Complex64::from_polar(1.0, -f64::from(mode.l) * theta)
}
