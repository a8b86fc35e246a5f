//! Two-photon polarization states, density matrices, and entanglement
//! metrics.
//!
//! The basis order is fixed everywhere as (HH, HV, VH, VV), signal index
//! major. Fidelity to a pure target uses the square-root convention
//! `F = sqrt(<t|rho|t>)`; the plain overlap is exposed separately for
//! cross-checks.

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::jones::JonesVector;
use crate::{Result, C64};

/// Index of |HH> in the amplitude vector.
pub const IDX_HH: usize = 0;
pub const IDX_HV: usize = 1;
pub const IDX_VH: usize = 2;
pub const IDX_VV: usize = 3;

const ZERO_TOL: f64 = 1e-12;
/// Hermiticity tolerance on max-entry deviation.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Unit-trace tolerance.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue.
pub const EIGENVALUE_FLOOR: f64 = -1e-9;

/// A normalized two-photon pure state on (HH, HV, VH, VV).
#[derive(Debug, Clone, Copy)]
pub struct TwoPhotonKet {
    c: Vector4<C64>,
}

impl TwoPhotonKet {
    pub fn new(amplitudes: [C64; 4]) -> Result<Self> {
        Self::from_vector(&Vector4::from_row_slice(&amplitudes))
    }

    pub fn from_vector(v: &Vector4<C64>) -> Result<Self> {
        let norm_sqr: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if norm_sqr < ZERO_TOL {
            return Err(Error::ZeroAmplitude);
        }
        Ok(TwoPhotonKet {
            c: v / C64::new(norm_sqr.sqrt(), 0.0),
        })
    }

    /// `(|HH> + e^{i phi} |VV>)/sqrt(2)`.
    pub fn phased_bell(phi: f64) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        TwoPhotonKet {
            c: Vector4::new(
                C64::new(s, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::from_polar(s, phi),
            ),
        }
    }

    /// The Bell state `(|HH> + |VV>)/sqrt(2)`.
    pub fn phi_plus() -> Self {
        Self::phased_bell(0.0)
    }

    /// Product state |s> (x) |i>.
    pub fn product(signal: &JonesVector, idler: &JonesVector) -> Self {
        TwoPhotonKet {
            c: Vector4::new(
                signal.h() * idler.h(),
                signal.h() * idler.v(),
                signal.v() * idler.h(),
                signal.v() * idler.v(),
            ),
        }
    }

    pub fn amplitudes(&self) -> &Vector4<C64> {
        &self.c
    }

    pub fn amplitude(&self, idx: usize) -> C64 {
        self.c[idx]
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &TwoPhotonKet) -> C64 {
        self.c.dotc(&other.c)
    }

    /// Canonical global phase: first amplitude above threshold made
    /// real-positive.
    pub fn canonical(&self) -> Self {
        let pivot = self
            .c
            .iter()
            .find(|z| z.norm() > ZERO_TOL)
            .copied()
            .unwrap_or_else(|| C64::new(1.0, 0.0));
        let phase = pivot / pivot.norm();
        TwoPhotonKet {
            c: self.c.map(|z| z / phase),
        }
    }

    pub fn approx_eq_up_to_phase(&self, other: &TwoPhotonKet, tol: f64) -> bool {
        let a = self.canonical();
        let b = other.canonical();
        a.c.iter()
            .zip(b.c.iter())
            .all(|(x, y)| (x - y).norm() <= tol)
    }
}

/// Kronecker product of two single-photon operators, in the fixed basis
/// order (signal major).
pub fn kron2(signal_op: &Matrix2<C64>, idler_op: &Matrix2<C64>) -> Matrix4<C64> {
    signal_op.kronecker(idler_op)
}

/// Rank-1 projector `|s><s| (x) |i><i|`.
pub fn two_photon_projector(signal: &JonesVector, idler: &JonesVector) -> Matrix4<C64> {
    let ket = TwoPhotonKet::product(signal, idler);
    ket.c * ket.c.adjoint()
}

/// Born-rule expectation `Tr(op rho)`, returned as its real part.
pub fn born_probability(op: &Matrix4<C64>, rho: &DensityMatrix) -> f64 {
    (op * rho.matrix()).trace().re
}

/// JSON form of a density matrix: separate real and imaginary 4x4 arrays,
/// row-major, basis order (HH, HV, VH, VV).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DensityMatrixJson {
    re: [[f64; 4]; 4],
    im: [[f64; 4]; 4],
}

/// A physical 4x4 density matrix: Hermitian, unit trace, positive
/// semidefinite within fixed tolerances. Construction validates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DensityMatrixJson", into = "DensityMatrixJson")]
pub struct DensityMatrix {
    m: Matrix4<C64>,
}

impl DensityMatrix {
    /// Validates and wraps a raw matrix.
    pub fn from_matrix(m: Matrix4<C64>) -> Result<Self> {
        let herm_dev = max_entry_norm(&(m - m.adjoint()));
        if herm_dev > HERMITIAN_TOL {
            return Err(Error::Unphysical {
                invariant: "hermiticity",
                deviation: herm_dev,
                tolerance: HERMITIAN_TOL,
            });
        }
        let trace_dev = (m.trace() - C64::new(1.0, 0.0)).norm();
        if trace_dev > TRACE_TOL {
            return Err(Error::Unphysical {
                invariant: "unit trace",
                deviation: trace_dev,
                tolerance: TRACE_TOL,
            });
        }
        let min_eig = min_eigenvalue(&m);
        if min_eig < EIGENVALUE_FLOOR {
            return Err(Error::Unphysical {
                invariant: "positive semidefiniteness",
                deviation: min_eig,
                tolerance: EIGENVALUE_FLOOR.abs(),
            });
        }
        Ok(DensityMatrix { m })
    }

    /// `|psi><psi|` for a normalized ket.
    pub fn from_ket(psi: &TwoPhotonKet) -> Self {
        let c = psi.amplitudes();
        DensityMatrix { m: c * c.adjoint() }
    }

    /// The rank-1 matrix of the ideal loop output with relative phase `phi`:
    /// diagonal (1/2, 0, 0, 1/2), corner entries of magnitude 1/2 and phase
    /// +/- phi (`<VV|rho|HH> = e^{i phi}/2`).
    pub fn phased_bell_density(phi: f64) -> Self {
        let mut m = Matrix4::zeros();
        m[(IDX_HH, IDX_HH)] = C64::new(0.5, 0.0);
        m[(IDX_VV, IDX_VV)] = C64::new(0.5, 0.0);
        m[(IDX_VV, IDX_HH)] = C64::from_polar(0.5, phi);
        m[(IDX_HH, IDX_VV)] = C64::from_polar(0.5, -phi);
        DensityMatrix { m }
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix {
            m: Matrix4::identity() * C64::new(0.25, 0.0),
        }
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.m
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.m[(row, col)]
    }

    /// Scales the HH<->VV coherences by `factor` in [0, 1]. Models phase
    /// diffusion of the pair's relative phase (the averaged off-diagonal
    /// shrinks by `E[e^{i delta}]`).
    pub fn with_corner_coherence_scaled(&self, factor: f64) -> Self {
        let mut m = self.m;
        let f = C64::new(factor, 0.0);
        m[(IDX_HH, IDX_VV)] *= f;
        m[(IDX_VV, IDX_HH)] *= f;
        DensityMatrix { m }
    }

    /// `Tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        (self.m * self.m).trace().re
    }

    /// Overlap `<target|rho|target>`.
    pub fn overlap(&self, target: &TwoPhotonKet) -> f64 {
        let c = target.amplitudes();
        (c.adjoint() * self.m * c)[(0, 0)].re
    }

    /// Fidelity to a pure target in the square-root convention
    /// `F = sqrt(<target|rho|target>)`.
    pub fn fidelity(&self, target: &TwoPhotonKet) -> f64 {
        self.overlap(target).max(0.0).sqrt()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.m)
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let eig = SymmetricEigen::new(self.m);
        let mut out = [0.0; 4];
        for (slot, value) in out.iter_mut().zip(eig.eigenvalues.iter()) {
            *slot = *value;
        }
        out
    }

    /// `U rho U^dagger` for a (presumed unitary) 4x4 operator.
    pub fn conjugated(&self, u: &Matrix4<C64>) -> Self {
        DensityMatrix {
            m: u * self.m * u.adjoint(),
        }
    }
}

impl From<DensityMatrix> for DensityMatrixJson {
    fn from(rho: DensityMatrix) -> Self {
        let mut re = [[0.0; 4]; 4];
        let mut im = [[0.0; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                re[r][c] = rho.m[(r, c)].re;
                im[r][c] = rho.m[(r, c)].im;
            }
        }
        DensityMatrixJson { re, im }
    }
}

impl TryFrom<DensityMatrixJson> for DensityMatrix {
    type Error = Error;

    fn try_from(j: DensityMatrixJson) -> Result<Self> {
        let mut m = Matrix4::zeros();
        for r in 0..4 {
            for c in 0..4 {
                m[(r, c)] = C64::new(j.re[r][c], j.im[r][c]);
            }
        }
        DensityMatrix::from_matrix(m)
    }
}

pub(crate) fn max_entry_norm(m: &Matrix4<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn min_eigenvalue(m: &Matrix4<C64>) -> f64 {
    let eig = SymmetricEigen::new(*m);
    eig.eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
