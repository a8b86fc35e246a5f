//! Single-photon polarization algebra on the H/V basis.
//!
//! Convention: a wave plate with retardance `G` and fast axis at angle
//! `theta` from H has Jones matrix `R(theta) diag(e^{-iG/2}, e^{+iG/2})
//! R(-theta)` - the fast axis advances phase. This is the one place the sign
//! convention is fixed; everything else inherits it. With this choice a
//! quarter-wave plate at 45 deg maps H to (H - iV)/sqrt(2).

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::{Result, C64};

/// Tolerance below which an amplitude vector is treated as zero.
const ZERO_TOL: f64 = 1e-12;

/// Polarization basis labels used by the analyzers.
///
/// `D = (H + V)/sqrt(2)`, `A = (H - V)/sqrt(2)`, `L = (H - iV)/sqrt(2)`,
/// `R = (H + iV)/sqrt(2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    H,
    V,
    D,
    A,
    L,
    R,
}

impl Basis {
    /// The normalized Jones vector for this label.
    pub fn ket(self) -> JonesVector {
        let s = FRAC_1_SQRT_2;
        let (h, v) = match self {
            Basis::H => (C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
            Basis::V => (C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
            Basis::D => (C64::new(s, 0.0), C64::new(s, 0.0)),
            Basis::A => (C64::new(s, 0.0), C64::new(-s, 0.0)),
            Basis::L => (C64::new(s, 0.0), C64::new(0.0, -s)),
            Basis::R => (C64::new(s, 0.0), C64::new(0.0, s)),
        };
        JonesVector { h, v }
    }

    pub fn label(self) -> &'static str {
        match self {
            Basis::H => "H",
            Basis::V => "V",
            Basis::D => "D",
            Basis::A => "A",
            Basis::L => "L",
            Basis::R => "R",
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "H" => Ok(Basis::H),
            "V" => Ok(Basis::V),
            "D" => Ok(Basis::D),
            "A" => Ok(Basis::A),
            "L" => Ok(Basis::L),
            "R" => Ok(Basis::R),
            other => Err(Error::UnknownBasis(other.to_string())),
        }
    }
}

/// A normalized single-photon (or classical pump) polarization state.
#[derive(Debug, Clone, Copy)]
pub struct JonesVector {
    h: C64,
    v: C64,
}

impl JonesVector {
    /// Builds a normalized Jones vector from raw amplitudes.
    pub fn new(h: C64, v: C64) -> Result<Self> {
        let norm_sqr = h.norm_sqr() + v.norm_sqr();
        if norm_sqr < ZERO_TOL {
            return Err(Error::ZeroAmplitude);
        }
        let n = norm_sqr.sqrt();
        Ok(JonesVector { h: h / n, v: v / n })
    }

    pub fn from_vector(v: &Vector2<C64>) -> Result<Self> {
        Self::new(v[0], v[1])
    }

    /// Linear polarization at `angle` radians from H.
    pub fn linear(angle: f64) -> Self {
        JonesVector {
            h: C64::new(angle.cos(), 0.0),
            v: C64::new(angle.sin(), 0.0),
        }
    }

    pub fn h(&self) -> C64 {
        self.h
    }

    pub fn v(&self) -> C64 {
        self.v
    }

    pub fn vector(&self) -> Vector2<C64> {
        Vector2::new(self.h, self.v)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &JonesVector) -> C64 {
        self.h.conj() * other.h + self.v.conj() * other.v
    }

    pub fn norm_sqr(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }

    /// Applies a Jones matrix and renormalizes. Errors if the output is the
    /// zero vector (e.g. a polarizer fully blocking the state).
    pub fn transform(&self, m: &Matrix2<C64>) -> Result<Self> {
        let out = m * self.vector();
        Self::from_vector(&out)
    }

    /// Canonical global phase: the first amplitude above threshold is made
    /// real-positive. States are rays; this fixes a representative.
    pub fn canonical(&self) -> Self {
        let pivot = if self.h.norm() > ZERO_TOL {
            self.h
        } else {
            self.v
        };
        let phase = pivot / pivot.norm();
        JonesVector {
            h: self.h / phase,
            v: self.v / phase,
        }
    }

    /// Ray equality: agreement up to a global phase within `tol` per entry.
    pub fn approx_eq_up_to_phase(&self, other: &JonesVector, tol: f64) -> bool {
        let a = self.canonical();
        let b = other.canonical();
        (a.h - b.h).norm() <= tol && (a.v - b.v).norm() <= tol
    }

    /// Stokes parameters (S0, S1, S2, S3) with S3 = +1 for the R state.
    pub fn stokes(&self) -> [f64; 4] {
        let cross = self.h.conj() * self.v;
        [
            self.norm_sqr(),
            self.h.norm_sqr() - self.v.norm_sqr(),
            2.0 * cross.re,
            2.0 * cross.im,
        ]
    }

    /// Major-axis orientation of the polarization ellipse, in radians.
    pub fn orientation(&self) -> f64 {
        let s = self.stokes();
        0.5 * f64::atan2(s[2], s[1])
    }

    /// Ellipticity angle chi in [-pi/4, pi/4]; tan(chi) = minor/major with the
    /// sign carrying handedness. Zero for linear states.
    pub fn ellipticity(&self) -> f64 {
        let s = self.stokes();
        0.5 * (s[3] / s[0]).clamp(-1.0, 1.0).asin()
    }

    /// Polarization extinction ratio (major/minor power ratio) in dB.
    /// Infinite for linear states.
    pub fn extinction_ratio_db(&self) -> f64 {
        let chi = self.ellipticity().abs();
        if chi < 1e-300 {
            f64::INFINITY
        } else {
            10.0 * (1.0 / chi.tan().powi(2)).log10()
        }
    }
}

/// Retarder kind; quarter = pi/2 retardance, half = pi.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WavePlateKind {
    Quarter,
    Half,
}

/// A rotatable wave plate with its fast axis at `angle_rad` from H.
#[derive(Debug, Clone, Copy)]
pub struct WavePlate {
    pub kind: WavePlateKind,
    pub angle_rad: f64,
}

impl WavePlate {
    pub fn quarter(angle_rad: f64) -> Self {
        WavePlate {
            kind: WavePlateKind::Quarter,
            angle_rad,
        }
    }

    pub fn half(angle_rad: f64) -> Self {
        WavePlate {
            kind: WavePlateKind::Half,
            angle_rad,
        }
    }

    pub fn retardance(&self) -> f64 {
        match self.kind {
            WavePlateKind::Quarter => FRAC_PI_2,
            WavePlateKind::Half => std::f64::consts::PI,
        }
    }

    /// The unitary Jones matrix of the rotated retarder.
    pub fn matrix(&self) -> Matrix2<C64> {
        retarder(self.retardance(), self.angle_rad)
    }
}

/// Rotation by `theta` in the H/V plane.
pub fn rotation(theta: f64) -> Matrix2<C64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(
        C64::new(c, 0.0),
        C64::new(-s, 0.0),
        C64::new(s, 0.0),
        C64::new(c, 0.0),
    )
}

/// Rotated retarder with retardance `gamma`, fast axis at `theta`.
pub fn retarder(gamma: f64, theta: f64) -> Matrix2<C64> {
    let fast = C64::from_polar(1.0, -gamma / 2.0);
    let slow = C64::from_polar(1.0, gamma / 2.0);
    let diag = Matrix2::new(fast, C64::new(0.0, 0.0), C64::new(0.0, 0.0), slow);
    rotation(theta) * diag * rotation(-theta)
}

/// Ideal polarizer passing the linear state at `theta`: the rank-1 projector.
pub fn polarizer(theta: f64) -> Matrix2<C64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(
        C64::new(c * c, 0.0),
        C64::new(c * s, 0.0),
        C64::new(s * c, 0.0),
        C64::new(s * s, 0.0),
    )
}

/// Rank-1 projector onto an arbitrary state.
pub fn projector(e: &JonesVector) -> Matrix2<C64> {
    let v = e.vector();
    v * v.adjoint()
}

/// Solves the (QWP, HWP) angles that turn a V-polarized input into `target`,
/// up to global phase.
///
/// The chain is polarizer (V) -> QWP(q) -> HWP(h). The QWP sets the
/// ellipticity, the HWP rotates the ellipse into place: `q = pi/2 + chi`,
/// `h = (psi + q)/2` for a target with orientation `psi` and ellipticity
/// `chi` (the HWP reflection flips handedness, which the offset in `q`
/// anticipates).
pub fn solve_plates(target: &JonesVector) -> (f64, f64) {
    let psi = target.orientation();
    let chi = target.ellipticity();
    let q = FRAC_PI_2 + chi;
    let h = 0.5 * (psi + q);
    (q, h)
}
