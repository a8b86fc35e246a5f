//! Density-matrix reconstruction from 16-setting coincidence counts:
//! accidental subtraction, linear inversion, and maximum-likelihood
//! estimation over the Cholesky-parameterized physical manifold
//! `rho = T^dag T / Tr(T^dag T)`.
//!
//! The count scale (pair rate times arm efficiencies) is a nuisance
//! parameter; both likelihoods profile it out in closed form, so only the
//! 16 T parameters are optimized.

mod optimizer;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, SymmetricEigen, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::jones::Basis;
use crate::records::{aggregate_by_setting, CountRecord};
use crate::source::sample_poisson;
use crate::two_photon::{DensityMatrix, TwoPhotonKet};
use crate::{Result, C64};

pub use optimizer::{minimize, MinimizeOptions, MinimizeOutcome};

/// Probability floor inside the likelihoods.
const P_FLOOR: f64 = 1e-15;
/// Ridge added before the Cholesky factorization of a boundary state.
const CHOLESKY_RIDGE: f64 = 1e-12;

/// The canonical tomographically complete 16-setting list over
/// {H, V, D, L, R} product projectors.
pub fn tomography_settings() -> Vec<(String, Basis, Basis)> {
    use Basis::*;
    [
        ("HH", H, H),
        ("HV", H, V),
        ("VV", V, V),
        ("VH", V, H),
        ("RH", R, H),
        ("RV", R, V),
        ("DV", D, V),
        ("DH", D, H),
        ("DR", D, R),
        ("DD", D, D),
        ("RD", R, D),
        ("HD", H, D),
        ("VD", V, D),
        ("VL", V, L),
        ("HL", H, L),
        ("RL", R, L),
    ]
    .into_iter()
    .map(|(id, s, i)| (id.to_string(), s, i))
    .collect()
}

/// One measurement setting: basis labels and the product projector.
#[derive(Debug, Clone)]
pub struct SettingProjector {
    pub id: String,
    pub signal: Basis,
    pub idler: Basis,
    /// The projected product ket (used for fast Born probabilities).
    pub ket: Vector4<C64>,
    pub op: Matrix4<C64>,
}

/// A set of projective settings used for reconstruction.
#[derive(Debug, Clone)]
pub struct ProjectorSet {
    entries: Vec<SettingProjector>,
}

impl ProjectorSet {
    pub fn from_settings(settings: &[(String, Basis, Basis)]) -> Self {
        let entries = settings
            .iter()
            .map(|(id, s, i)| {
                let ket = TwoPhotonKet::product(&s.ket(), &i.ket());
                SettingProjector {
                    id: id.clone(),
                    signal: *s,
                    idler: *i,
                    ket: *ket.amplitudes(),
                    op: ket.amplitudes() * ket.amplitudes().adjoint(),
                }
            })
            .collect();
        ProjectorSet { entries }
    }

    /// The canonical 16-projector set.
    pub fn default16() -> Self {
        Self::from_settings(&tomography_settings())
    }

    pub fn entries(&self) -> &[SettingProjector] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Design matrix B[nu][k] = Tr(Pi_nu Gamma_k) over the orthonormal
    /// two-qubit Pauli basis Gamma_k = (sigma_a x sigma_b)/2.
    fn design_matrix(&self) -> DMatrix<f64> {
        let basis = pauli_basis();
        let mut b = DMatrix::zeros(self.entries.len(), 16);
        for (row, e) in self.entries.iter().enumerate() {
            for (col, gamma) in basis.iter().enumerate() {
                b[(row, col)] = (e.op * gamma).trace().re;
            }
        }
        b
    }

    /// Condition number of the design matrix (sigma_max / sigma_min).
    pub fn condition_number(&self) -> f64 {
        if self.entries.len() < 16 {
            return f64::INFINITY;
        }
        let svd = self.design_matrix().svd(false, false);
        let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let min = svd
            .singular_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// True when the settings span the space of 4x4 Hermitian matrices.
    pub fn is_spanning(&self) -> bool {
        let cond = self.condition_number();
        cond.is_finite() && cond < 1e9
    }
}

fn pauli_basis() -> [Matrix4<C64>; 16] {
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let sigma = [
        Matrix2::new(one, zero, zero, one),
        Matrix2::new(zero, one, one, zero),
        Matrix2::new(zero, -i, i, zero),
        Matrix2::new(one, zero, zero, -one),
    ];
    let mut out = [Matrix4::zeros(); 16];
    for a in 0..4 {
        for b in 0..4 {
            out[4 * a + b] = sigma[a].kronecker(&sigma[b]) * C64::new(0.5, 0.0);
        }
    }
    out
}

/// True-coincidence estimate: `max(coincidence - accidental, 0)` per record.
/// Returns the corrected records and how many were clamped at zero.
pub fn subtract_accidentals(records: &[CountRecord]) -> (Vec<CountRecord>, usize) {
    let mut clamped = 0;
    let corrected = records
        .iter()
        .map(|r| {
            let diff = r.coincidence - r.accidental;
            if diff < 0.0 {
                clamped += 1;
            }
            CountRecord {
                coincidence: diff.max(0.0),
                ..r.clone()
            }
        })
        .collect();
    (corrected, clamped)
}

/// Outcome of the direct linear inversion; `matrix` is Hermitian with unit
/// trace but may be indefinite on noisy counts.
#[derive(Debug, Clone)]
pub struct LinearReconstruction {
    pub matrix: Matrix4<C64>,
    /// Fitted exposure scale (counts per unit Born probability, per unit
    /// exposure).
    pub scale: f64,
    pub min_eigenvalue: f64,
    pub physical: bool,
    pub condition_number: f64,
}

/// Solves `count_nu / exposure_nu = Tr(Pi_nu sigma)` for the unnormalized
/// Hermitian `sigma` (least squares over the Pauli coordinates), then
/// normalizes to unit trace.
pub fn linear_reconstruct(
    counts: &[(f64, f64)],
    set: &ProjectorSet,
) -> Result<LinearReconstruction> {
    if counts.len() != set.len() {
        return Err(Error::BadCounts(format!(
            "{} counts for {} settings",
            counts.len(),
            set.len()
        )));
    }
    let cond = set.condition_number();
    if !set.is_spanning() {
        return Err(Error::NonSpanningSet { condition: cond });
    }

    let b = set.design_matrix();
    let y = DVector::from_iterator(counts.len(), counts.iter().map(|(n, e)| n / e));
    let bt = b.transpose();
    let normal = &bt * &b;
    let rhs = &bt * &y;
    let c = normal
        .lu()
        .solve(&rhs)
        .ok_or(Error::NonSpanningSet { condition: cond })?;

    let basis = pauli_basis();
    let mut sigma = Matrix4::<C64>::zeros();
    for (k, gamma) in basis.iter().enumerate() {
        sigma += gamma * C64::new(c[k], 0.0);
    }
    let scale = sigma.trace().re;
    if scale.abs() < 1e-300 {
        return Err(Error::BadCounts("all-zero counts".into()));
    }
    let rho = sigma / C64::new(scale, 0.0);
    let min_eig = crate::two_photon::min_eigenvalue(&rho);
    Ok(LinearReconstruction {
        matrix: rho,
        scale,
        min_eigenvalue: min_eig,
        physical: min_eig >= -1e-9,
        condition_number: cond,
    })
}

/// Likelihood model for the observed counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    /// Poisson counting statistics (default).
    Poisson,
    /// Gaussian approximation `sum (n - s N P)^2 / (2 s N P)`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initializer {
    /// Maximally mixed start.
    Identity,
    /// Linear inversion with negative eigenvalues clipped (default).
    ProjectedLinear,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MleOptions {
    pub likelihood: Likelihood,
    pub initializer: Initializer,
    pub max_iterations: usize,
    /// Relative NLL change declaring convergence.
    pub convergence_tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            likelihood: Likelihood::Poisson,
            initializer: Initializer::ProjectedLinear,
            max_iterations: 100_000,
            convergence_tol: 1e-10,
        }
    }
}

impl MleOptions {
    pub fn validate(&self) -> Result<()> {
        if self.convergence_tol <= 0.0 {
            return Err(Error::InvalidConfig {
                key: "convergence_tol",
                reason: "must be > 0".into(),
            });
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig {
                key: "max_iterations",
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Full reconstruction output: the physical density matrix, fit metrics,
/// and optimizer diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TomographyResult {
    pub rho: DensityMatrix,
    pub nll: f64,
    pub initial_nll: f64,
    pub iterations: usize,
    pub converged: bool,
    pub fidelity_phi_plus: f64,
    /// Phase maximizing the overlap with `(|HH> + e^{i phi}|VV>)/sqrt(2)`;
    /// absent when the corner coherence vanishes.
    pub best_phase_rad: Option<f64>,
    pub fidelity_best_phase: Option<f64>,
    pub purity: f64,
    pub raw_mode: bool,
    pub clamped_settings: usize,
    pub condition_number: f64,
    pub options: MleOptions,
}

// T is upper triangular: 4 real diagonal entries, then (re, im) pairs for
// the entries above the diagonal in the order (0,1),(0,2),(0,3),(1,2),
// (1,3),(2,3).
const UPPER_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

fn t_from_params(theta: &[f64]) -> Matrix4<C64> {
    let mut t = Matrix4::zeros();
    for j in 0..4 {
        t[(j, j)] = C64::new(theta[j], 0.0);
    }
    for (m, (r, c)) in UPPER_PAIRS.iter().enumerate() {
        t[(*r, *c)] = C64::new(theta[4 + 2 * m], theta[5 + 2 * m]);
    }
    t
}

fn params_from_rho(rho: &Matrix4<C64>) -> Option<[f64; 16]> {
    let dim_ridge = C64::new(CHOLESKY_RIDGE, 0.0);
    let ridged =
        (rho + Matrix4::identity() * dim_ridge) / C64::new(1.0 + 4.0 * CHOLESKY_RIDGE, 0.0);
    let chol = nalgebra::Cholesky::new(ridged)?;
    let t = chol.l().adjoint();
    let mut theta = [0.0; 16];
    for j in 0..4 {
        theta[j] = t[(j, j)].re;
    }
    for (m, (r, c)) in UPPER_PAIRS.iter().enumerate() {
        theta[4 + 2 * m] = t[(*r, *c)].re;
        theta[5 + 2 * m] = t[(*r, *c)].im;
    }
    Some(theta)
}

fn rho_from_params(theta: &[f64]) -> Matrix4<C64> {
    let t = t_from_params(theta);
    let raw = t.adjoint() * t;
    let trace = raw.trace().re.max(1e-300);
    raw / C64::new(trace, 0.0)
}

/// Clips negative eigenvalues to zero and renormalizes.
fn project_physical(m: &Matrix4<C64>) -> Matrix4<C64> {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let mut total = 0.0;
    let clipped: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            let v = l.max(0.0);
            total += v;
            v
        })
        .collect();
    if total <= 0.0 {
        return Matrix4::identity() * C64::new(0.25, 0.0);
    }
    let mut out = Matrix4::zeros();
    for (k, &l) in clipped.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        out += (v * v.adjoint()) * C64::new(l / total, 0.0);
    }
    out
}

/// Born probabilities for every setting: `P_nu = |T v_nu|^2 / ||T||_F^2`.
fn born_probabilities(theta: &[f64], kets: &[Vector4<C64>], out: &mut [f64]) {
    let t = t_from_params(theta);
    let norm: f64 = t.iter().map(|z| z.norm_sqr()).sum::<f64>().max(1e-300);
    for (slot, v) in out.iter_mut().zip(kets.iter()) {
        let w = t * v;
        *slot = (w.norm_squared() / norm).max(P_FLOOR);
    }
}

fn poisson_nll(counts: &[(f64, f64)], probs: &[f64]) -> f64 {
    let total_counts: f64 = counts.iter().map(|(n, _)| n).sum();
    let total_pred: f64 = counts
        .iter()
        .zip(probs.iter())
        .map(|((_, e), p)| e * p)
        .sum();
    let s = (total_counts / total_pred).max(1e-300);
    // sum s N P - n ln(s N P); the first part telescopes to total_counts.
    let mut nll = total_counts;
    for ((n, e), p) in counts.iter().zip(probs.iter()) {
        if *n > 0.0 {
            nll -= n * (s * e * p).ln();
        }
    }
    nll
}

fn gaussian_nll(counts: &[(f64, f64)], probs: &[f64]) -> f64 {
    let num: f64 = counts
        .iter()
        .zip(probs.iter())
        .map(|((n, e), p)| n * n / (e * p))
        .sum();
    let den: f64 = counts
        .iter()
        .zip(probs.iter())
        .map(|((_, e), p)| e * p)
        .sum();
    let s = (num / den).sqrt().max(1e-300);
    counts
        .iter()
        .zip(probs.iter())
        .map(|((n, e), p)| {
            let pred = s * e * p;
            (n - pred) * (n - pred) / (2.0 * pred)
        })
        .sum()
}

/// Maximum-likelihood reconstruction from per-setting `(count, exposure)`
/// pairs aligned with the projector set.
pub fn mle_reconstruct(
    counts: &[(f64, f64)],
    set: &ProjectorSet,
    opts: &MleOptions,
) -> Result<TomographyResult> {
    opts.validate()?;
    if counts.len() != set.len() {
        return Err(Error::BadCounts(format!(
            "{} counts for {} settings",
            counts.len(),
            set.len()
        )));
    }
    for (n, e) in counts {
        if !n.is_finite() || *n < 0.0 {
            return Err(Error::BadCounts(format!(
                "count {n} must be finite and >= 0"
            )));
        }
        if !e.is_finite() || *e <= 0.0 {
            return Err(Error::BadCounts(format!("exposure {e} must be > 0")));
        }
    }
    if counts.iter().map(|(n, _)| n).sum::<f64>() <= 0.0 {
        return Err(Error::BadCounts("all-zero counts".into()));
    }
    let cond = set.condition_number();
    if !set.is_spanning() {
        return Err(Error::NonSpanningSet { condition: cond });
    }

    let theta0: [f64; 16] = match opts.initializer {
        Initializer::Identity => {
            params_from_rho(&(Matrix4::identity() * C64::new(0.25, 0.0))).expect("I/4 factors")
        }
        Initializer::ProjectedLinear => linear_reconstruct(counts, set)
            .ok()
            .map(|lin| project_physical(&lin.matrix))
            .and_then(|rho| params_from_rho(&rho))
            .unwrap_or_else(|| {
                params_from_rho(&(Matrix4::identity() * C64::new(0.25, 0.0))).expect("I/4 factors")
            }),
    };

    let kets: Vec<Vector4<C64>> = set.entries.iter().map(|e| e.ket).collect();
    let likelihood = opts.likelihood;
    let counts_owned: Vec<(f64, f64)> = counts.to_vec();
    let objective = move |theta: &[f64]| -> f64 {
        let mut probs = [0.0; 64];
        let probs = &mut probs[..kets.len()];
        born_probabilities(theta, &kets, probs);
        match likelihood {
            Likelihood::Poisson => poisson_nll(&counts_owned, probs),
            Likelihood::Gaussian => gaussian_nll(&counts_owned, probs),
        }
    };

    let outcome = minimize(
        objective,
        &theta0,
        &MinimizeOptions {
            max_iterations: opts.max_iterations,
            tol_rel: opts.convergence_tol,
        },
    );
    // Accepted steps only ever decrease the objective.
    for w in outcome.trace.windows(2) {
        assert!(
            w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0),
            "optimizer trace not monotone"
        );
    }

    let rho = DensityMatrix::from_matrix(rho_from_params(&outcome.x))
        .expect("Cholesky-parameterized output is physical");
    let phase = phase_fit(&rho).ok();
    Ok(TomographyResult {
        fidelity_phi_plus: rho.fidelity(&TwoPhotonKet::phi_plus()),
        best_phase_rad: phase.map(|p| p.0),
        fidelity_best_phase: phase.map(|p| p.1),
        purity: rho.purity(),
        rho,
        nll: outcome.value,
        initial_nll: outcome.initial_value,
        iterations: outcome.iterations,
        converged: outcome.converged,
        raw_mode: false,
        clamped_settings: 0,
        condition_number: cond,
        options: *opts,
    })
}

/// Best-fit relative phase: the overlap with `(|HH> + e^{i phi}|VV>)/sqrt(2)`
/// is maximized at `phi = arg(rho_VV,HH)`. Returns `(phase, fidelity at the
/// phase)` in the square-root convention.
pub fn phase_fit(rho: &DensityMatrix) -> Result<(f64, f64)> {
    let corner = rho.entry(3, 0);
    if corner.norm() < 1e-12 {
        return Err(Error::PhaseUndefined(corner.norm()));
    }
    let overlap = 0.5 * (rho.entry(0, 0).re + rho.entry(3, 3).re) + corner.norm();
    Ok((corner.arg(), overlap.clamp(0.0, 1.0 + 1e-12).sqrt()))
}

/// Aligns aggregated records with the projector set and reconstructs.
/// `raw` skips accidental subtraction.
pub fn reconstruct_records(
    records: &[CountRecord],
    set: &ProjectorSet,
    opts: &MleOptions,
    raw: bool,
) -> Result<TomographyResult> {
    if records.is_empty() {
        return Err(Error::BadCounts("no records supplied".into()));
    }
    let merged = aggregate_by_setting(records);
    let (corrected, clamped) = if raw {
        (merged, 0)
    } else {
        subtract_accidentals(&merged)
    };

    let mut counts = Vec::with_capacity(set.len());
    for entry in set.entries() {
        let record = corrected
            .iter()
            .find(|r| r.setting_id == entry.id)
            .ok_or_else(|| Error::BadCounts(format!("missing record for setting {}", entry.id)))?;
        counts.push((record.coincidence, record.n_gates as f64));
    }

    let mut result = mle_reconstruct(&counts, set, opts)?;
    result.raw_mode = raw;
    result.clamped_settings = clamped;
    Ok(result)
}

/// Exact expectation counts `exposure * Tr(Pi_nu rho)` for every setting.
pub fn synthesize_expected_counts(
    set: &ProjectorSet,
    rho: &DensityMatrix,
    exposure: f64,
) -> Vec<(f64, f64)> {
    set.entries
        .iter()
        .map(|e| {
            let p = (e.op * rho.matrix()).trace().re.max(0.0);
            (exposure * p, exposure)
        })
        .collect()
}

/// Parametric-bootstrap error bars: every observed coincidence and
/// accidental count is resampled from Poisson(observed), the full
/// reconstruction is re-run, and sample standard deviations are reported.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapErrors {
    pub n_resamples: usize,
    pub fidelity_std: f64,
    pub purity_std: f64,
    pub phase_std: Option<f64>,
}

pub fn bootstrap_errors(
    records: &[CountRecord],
    set: &ProjectorSet,
    opts: &MleOptions,
    n_resamples: usize,
    raw: bool,
    seed: u64,
) -> Result<BootstrapErrors> {
    if n_resamples < 100 {
        return Err(Error::BadCounts(
            "bootstrap needs at least 100 resamples".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fidelities = Vec::with_capacity(n_resamples);
    let mut purities = Vec::with_capacity(n_resamples);
    let mut phases = Vec::new();

    for _ in 0..n_resamples {
        let resampled: Vec<CountRecord> = records
            .iter()
            .map(|r| CountRecord {
                coincidence: sample_poisson(r.coincidence, &mut rng) as f64,
                accidental: sample_poisson(r.accidental, &mut rng) as f64,
                ..r.clone()
            })
            .collect();
        let result = reconstruct_records(&resampled, set, opts, raw)?;
        fidelities.push(result.fidelity_phi_plus);
        purities.push(result.purity);
        if let Some(phase) = result.best_phase_rad {
            phases.push(phase);
        }
    }

    Ok(BootstrapErrors {
        n_resamples,
        fidelity_std: sample_std(&fidelities),
        purity_std: sample_std(&purities),
        phase_std: if phases.len() >= 2 {
            Some(sample_std(&phases))
        } else {
            None
        },
    })
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::two_photon::max_entry_norm;
    use approx::assert_abs_diff_eq;

    fn max_dev(a: &Matrix4<C64>, b: &Matrix4<C64>) -> f64 {
        max_entry_norm(&(a - b))
    }

    #[test]
    fn default_set_contains_the_rectilinear_block_and_spans() {
        let set = ProjectorSet::default16();
        assert_eq!(set.len(), 16);
        for id in ["HH", "HV", "VH", "VV"] {
            assert!(set.entries().iter().any(|e| e.id == id), "missing {id}");
        }
        let cond = set.condition_number();
        assert!(set.is_spanning());
        assert!(cond < 100.0, "condition number {cond}");
    }

    #[test]
    fn duplicated_projector_breaks_the_spanning_invariant() {
        let mut settings = tomography_settings();
        settings[5] = ("HH2".to_string(), Basis::H, Basis::H);
        let set = ProjectorSet::from_settings(&settings);
        assert!(!set.is_spanning());
    }

    #[test]
    fn subtraction_examples() {
        let mk = |c: f64, a: f64| CountRecord::new("HH", c, a, 1e4, 1e4, 10.0, 1000).unwrap();
        let (out, clamped) = subtract_accidentals(&[mk(90.0, 5.0), mk(5.0, 5.0), mk(3.0, 5.0)]);
        assert_eq!(out[0].coincidence, 85.0);
        assert_eq!(out[1].coincidence, 0.0);
        assert_eq!(out[2].coincidence, 0.0);
        assert_eq!(clamped, 1);
    }

    #[test]
    fn linear_inversion_recovers_exact_states() {
        let set = ProjectorSet::default16();
        for rho in [
            DensityMatrix::phased_bell_density(0.0),
            DensityMatrix::phased_bell_density(0.24),
            DensityMatrix::maximally_mixed(),
        ] {
            let counts = synthesize_expected_counts(&set, &rho, 1e6);
            let lin = linear_reconstruct(&counts, &set).unwrap();
            assert!(
                max_dev(&lin.matrix, rho.matrix()) < 1e-10,
                "deviation {}",
                max_dev(&lin.matrix, rho.matrix())
            );
        }
    }

    #[test]
    fn linear_inversion_flags_indefinite_noise() {
        use rand::SeedableRng;
        let set = ProjectorSet::default16();
        let rho = DensityMatrix::phased_bell_density(0.0);
        let exact = synthesize_expected_counts(&set, &rho, 1000.0);
        let mut saw_unphysical = false;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noisy: Vec<(f64, f64)> = exact
                .iter()
                .map(|(n, e)| (sample_poisson(*n, &mut rng) as f64, *e))
                .collect();
            let lin = linear_reconstruct(&noisy, &set).unwrap();
            // Hermitian and unit trace regardless of noise.
            assert!(max_entry_norm(&(lin.matrix - lin.matrix.adjoint())) < 1e-12);
            assert!((lin.matrix.trace().re - 1.0).abs() < 1e-12);
            if !lin.physical {
                saw_unphysical = true;
            }
        }
        assert!(
            saw_unphysical,
            "pure-state Poisson noise should produce at least one indefinite inversion"
        );
    }

    #[test]
    fn mle_recovers_exact_bell_counts() {
        let set = ProjectorSet::default16();
        let rho = DensityMatrix::phased_bell_density(0.0);
        let counts = synthesize_expected_counts(&set, &rho, 1e4);
        let result = mle_reconstruct(&counts, &set, &MleOptions::default()).unwrap();
        assert!(
            result.fidelity_phi_plus >= 0.999,
            "{}",
            result.fidelity_phi_plus
        );
        assert!(result.converged);
    }

    #[test]
    fn mle_recovers_the_maximally_mixed_state() {
        let set = ProjectorSet::default16();
        let counts = synthesize_expected_counts(&set, &DensityMatrix::maximally_mixed(), 1e4);
        let result = mle_reconstruct(&counts, &set, &MleOptions::default()).unwrap();
        assert!(
            (result.purity - 0.25).abs() < 0.01,
            "purity {}",
            result.purity
        );
    }

    #[test]
    fn mle_matches_linear_inversion_on_exact_counts() {
        let set = ProjectorSet::default16();
        for rho in [
            DensityMatrix::maximally_mixed(),
            DensityMatrix::phased_bell_density(0.24),
        ] {
            let counts = synthesize_expected_counts(&set, &rho, 1e6);
            let lin = linear_reconstruct(&counts, &set).unwrap();
            assert!(lin.physical);
            let mle = mle_reconstruct(&counts, &set, &MleOptions::default()).unwrap();
            let dev = max_dev(mle.rho.matrix(), &lin.matrix);
            assert!(dev < 1e-6, "deviation {dev}");
        }
    }

    #[test]
    fn mle_rejects_degenerate_inputs() {
        let set = ProjectorSet::default16();
        let zero = vec![(0.0, 1e4); 16];
        assert!(matches!(
            mle_reconstruct(&zero, &set, &MleOptions::default()),
            Err(Error::BadCounts(_))
        ));

        let mut settings = tomography_settings();
        settings[3] = ("dup".into(), Basis::H, Basis::H);
        let bad_set = ProjectorSet::from_settings(&settings);
        let counts = synthesize_expected_counts(
            &ProjectorSet::default16(),
            &DensityMatrix::maximally_mixed(),
            1e4,
        );
        assert!(matches!(
            mle_reconstruct(&counts, &bad_set, &MleOptions::default()),
            Err(Error::NonSpanningSet { .. })
        ));
    }

    #[test]
    fn gaussian_likelihood_agrees_at_zero_noise() {
        let set = ProjectorSet::default16();
        let rho = DensityMatrix::phased_bell_density(0.1);
        let counts = synthesize_expected_counts(&set, &rho, 1e6);
        let poisson = mle_reconstruct(&counts, &set, &MleOptions::default()).unwrap();
        let gauss = mle_reconstruct(
            &counts,
            &set,
            &MleOptions {
                likelihood: Likelihood::Gaussian,
                ..MleOptions::default()
            },
        )
        .unwrap();
        let dev = max_dev(poisson.rho.matrix(), gauss.rho.matrix());
        assert!(dev < 1e-4, "deviation {dev}");
    }

    #[test]
    fn reconstruction_is_invariant_under_consistent_scaling() {
        use rand::SeedableRng;
        let set = ProjectorSet::default16();
        let rho = DensityMatrix::phased_bell_density(0.3);
        let exact = synthesize_expected_counts(&set, &rho, 2000.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noisy: Vec<(f64, f64)> = exact
            .iter()
            .map(|(n, e)| (sample_poisson(*n, &mut rng) as f64, *e))
            .collect();
        // Agreement expected up to the optimizer's own stopping precision.
        let tight = |likelihood| MleOptions {
            likelihood,
            convergence_tol: 1e-13,
            ..MleOptions::default()
        };

        // Gaussian: scaling the counts alone does not move the argmax.
        let gauss = tight(Likelihood::Gaussian);
        let base = mle_reconstruct(&noisy, &set, &gauss).unwrap();
        let scaled: Vec<(f64, f64)> = noisy.iter().map(|(n, e)| (7.0 * n, *e)).collect();
        let result = mle_reconstruct(&scaled, &set, &gauss).unwrap();
        let dev = max_dev(base.rho.matrix(), result.rho.matrix());
        assert!(dev < 1e-4, "gaussian deviation {dev}");

        // Poisson: scaling counts and exposure together does not move it.
        let poisson = tight(Likelihood::Poisson);
        let base = mle_reconstruct(&noisy, &set, &poisson).unwrap();
        let scaled: Vec<(f64, f64)> = noisy.iter().map(|(n, e)| (7.0 * n, 7.0 * e)).collect();
        let result = mle_reconstruct(&scaled, &set, &poisson).unwrap();
        let dev = max_dev(base.rho.matrix(), result.rho.matrix());
        assert!(dev < 1e-4, "poisson deviation {dev}");
    }

    #[test]
    fn phase_fit_examples_and_grid() {
        let (phase, fidelity) = phase_fit(&DensityMatrix::phased_bell_density(0.24)).unwrap();
        assert_abs_diff_eq!(phase, 0.24, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity, 1.0, epsilon = 1e-12);

        let (phase, fidelity) = phase_fit(&DensityMatrix::phased_bell_density(0.0)).unwrap();
        assert_abs_diff_eq!(phase, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity, 1.0, epsilon = 1e-12);

        for k in 0..100 {
            let phi = -3.1 + 0.062 * k as f64;
            let (phase, _) = phase_fit(&DensityMatrix::phased_bell_density(phi)).unwrap();
            assert_abs_diff_eq!(phase, phi, epsilon = 1e-9);
        }

        // No corner coherence: phase undefined.
        let mixed = DensityMatrix::maximally_mixed();
        assert!(matches!(phase_fit(&mixed), Err(Error::PhaseUndefined(_))));
    }

    #[test]
    fn identity_initializer_reaches_the_same_optimum() {
        let set = ProjectorSet::default16();
        let rho = DensityMatrix::phased_bell_density(0.24);
        let counts = synthesize_expected_counts(&set, &rho, 1e5);
        let from_identity = mle_reconstruct(
            &counts,
            &set,
            &MleOptions {
                initializer: Initializer::Identity,
                ..MleOptions::default()
            },
        )
        .unwrap();
        assert!(
            from_identity.fidelity_phi_plus > 0.98,
            "fidelity {}",
            from_identity.fidelity_phi_plus
        );
        let (phase, _) = phase_fit(&from_identity.rho).unwrap();
        assert!((phase - 0.24).abs() < 0.01, "phase {phase}");
    }

    fn bench_scale_records(seed: u64, scale: f64) -> Vec<CountRecord> {
        // Poisson records at roughly the published counting statistics:
        // ~900 coincidences and ~50 accidentals per 10 s at the brightest
        // setting. The underlying state is slightly mixed so the likelihood
        // optimum stays off the physicality boundary.
        let set = ProjectorSet::default16();
        let bell = DensityMatrix::phased_bell_density(0.0);
        let mixed = DensityMatrix::maximally_mixed();
        let rho = DensityMatrix::from_matrix(
            bell.matrix() * C64::new(0.92, 0.0) + mixed.matrix() * C64::new(0.08, 0.0),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        set.entries()
            .iter()
            .map(|e| {
                let p = (e.op * rho.matrix()).trace().re.max(0.0);
                let true_counts = scale * 1700.0 * p;
                let acc = scale * 50.0;
                CountRecord::new(
                    e.id.clone(),
                    sample_poisson(true_counts + acc, &mut rng) as f64,
                    sample_poisson(acc, &mut rng) as f64,
                    scale * 1e5,
                    scale * 1e5,
                    10.0,
                    38_800_000,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn bootstrap_bars_match_poisson_scaling() {
        let set = ProjectorSet::default16();
        let opts = MleOptions::default();

        let records = bench_scale_records(11, 1.0);
        let bars = bootstrap_errors(&records, &set, &opts, 100, false, 99).unwrap();
        assert!(
            bars.fidelity_std > 0.005 && bars.fidelity_std < 0.05,
            "fidelity bar {}",
            bars.fidelity_std
        );

        // Doubling every count of the same dataset shrinks the bars by
        // ~sqrt(2).
        let doubled: Vec<CountRecord> = records
            .iter()
            .map(|r| CountRecord {
                coincidence: 2.0 * r.coincidence,
                accidental: 2.0 * r.accidental,
                singles_s: 2.0 * r.singles_s,
                singles_i: 2.0 * r.singles_i,
                duration_s: 2.0 * r.duration_s,
                n_gates: 2 * r.n_gates,
                ..r.clone()
            })
            .collect();
        let bars2 = bootstrap_errors(&doubled, &set, &opts, 100, false, 99).unwrap();
        let ratio = bars.fidelity_std / bars2.fidelity_std;
        assert!(
            ratio > 1.2 && ratio < 1.7,
            "doubling counts should shrink bars by ~sqrt(2); ratio {ratio}"
        );

        // Consistency: with far larger counts the bars collapse.
        let big = bench_scale_records(11, 200.0);
        let bars_big = bootstrap_errors(&big, &set, &opts, 100, false, 99).unwrap();
        assert!(
            bars_big.fidelity_std < 0.3 * bars.fidelity_std,
            "bars {} vs {}",
            bars_big.fidelity_std,
            bars.fidelity_std
        );

        assert!(bootstrap_errors(&records, &set, &opts, 50, false, 1).is_err());
    }

    #[test]
    fn reconstruct_records_subtracts_and_flags() {
        let set = ProjectorSet::default16();
        let records = bench_scale_records(3, 1.0);
        let subtracted =
            reconstruct_records(&records, &set, &MleOptions::default(), false).unwrap();
        let raw = reconstruct_records(&records, &set, &MleOptions::default(), true).unwrap();
        assert!(!subtracted.raw_mode);
        assert!(raw.raw_mode);
        assert!(
            subtracted.fidelity_phi_plus > raw.fidelity_phi_plus,
            "subtracted {} vs raw {}",
            subtracted.fidelity_phi_plus,
            raw.fidelity_phi_plus
        );

        // Missing settings are named.
        let partial = &records[..10];
        let err = reconstruct_records(partial, &set, &MleOptions::default(), false).unwrap_err();
        assert!(err.to_string().contains("missing record"));
    }
}
