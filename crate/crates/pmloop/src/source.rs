//! Pump optics and the fiber-loop pair-emission model.
//!
//! The pump's V component travels the loop counter-clockwise and returns
//! through the H port, so it feeds the |HH> pair amplitude; the H component
//! feeds |VV>. Pair generation annihilates two pump photons, which doubles
//! the pump's H/V phase in the emitted state: the relative phase of the VV
//! term is `2 arg(a_H / a_V) + phi_b`, with `phi_b` the residual
//! birefringence phase of the loop.

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::jones::{JonesVector, WavePlate};
use crate::two_photon::{DensityMatrix, TwoPhotonKet};
use crate::C64;

/// Pump chain settings: average power, pulse rate, and the polarizer/QWP/HWP
/// angles that set the pump polarization entering the loop.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PumpConfig {
    pub avg_power_w: f64,
    pub rep_rate_hz: f64,
    pub polarizer_axis_rad: f64,
    pub qwp_angle_rad: f64,
    pub hwp_angle_rad: f64,
}

/// Loop parameters: residual birefringence phase (with optional slow drift
/// modeled as a per-measurement Gaussian jitter), the quadratic pair-rate
/// coefficient, an effective pair-rate excess for pump-filter spectral
/// mismatch, Raman noise rates, and the collection losses of each arm.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LoopConfig {
    pub phi_b_rad: f64,
    pub phi_b_jitter_rad: f64,
    /// Pairs per pulse per W^2 of average pump power.
    pub pair_gen_coeff_per_w2: f64,
    /// Scales the pair rate only (dB <= 0); spectral mismatch between the
    /// pump filters and the signal/idler filters.
    pub pair_rate_excess_db: f64,
    /// Mean Raman noise photons per pulse reaching each arm's collection
    /// optics (before coupling loss).
    pub raman_rate_s: f64,
    pub raman_rate_i: f64,
    pub coupling_loss_s_db: f64,
    pub coupling_loss_i_db: f64,
}

/// One pump pulse's emission: the pair count, the (shared) two-photon state,
/// and per-arm Raman noise photon counts.
#[derive(Debug, Clone, Copy)]
pub struct PulseEmission {
    pub n_pairs: u32,
    pub state: TwoPhotonKet,
    pub n_noise_s: u32,
    pub n_noise_i: u32,
}

/// Pump polarization entering the loop: polarizer axis state, then QWP, then
/// HWP, expressed on the loop's H/V axes.
pub fn pump_jones(pump: &PumpConfig) -> JonesVector {
    // The polarizer output is its axis state; power is tracked separately
    // in avg_power_w.
    let axis = JonesVector::linear(pump.polarizer_axis_rad);
    let after_qwp = axis
        .transform(&WavePlate::quarter(pump.qwp_angle_rad).matrix())
        .expect("unitary preserves norm");
    after_qwp
        .transform(&WavePlate::half(pump.hwp_angle_rad).matrix())
        .expect("unitary preserves norm")
}

/// The emitted two-photon state for a given pump polarization.
///
/// `c_HH ∝ a_V^2`, `c_VV ∝ a_H^2 e^{i phi_b}`; the HV and VH amplitudes are
/// exactly zero. Zero-amplitude pumps are unrepresentable (`JonesVector` is
/// normalized on construction), which is where such inputs get rejected.
pub fn loop_output_state(pump_jv: &JonesVector, lp: &LoopConfig) -> TwoPhotonKet {
    let c_hh = pump_jv.v() * pump_jv.v();
    let c_vv = pump_jv.h() * pump_jv.h() * C64::from_polar(1.0, lp.phi_b_rad);
    TwoPhotonKet::new([c_hh, C64::new(0.0, 0.0), C64::new(0.0, 0.0), c_vv])
        .expect("normalized pump yields nonzero pair amplitude")
}

/// Coherence left in the HH<->VV corner after averaging over the phase
/// jitter: `E[e^{i delta}] = e^{-sigma^2/2}` for Gaussian delta.
pub fn dephasing_factor(lp: &LoopConfig) -> f64 {
    (-0.5 * lp.phi_b_jitter_rad * lp.phi_b_jitter_rad).exp()
}

/// Expected (jitter-averaged) emitted density matrix.
pub fn loop_output_density(pump_jv: &JonesVector, lp: &LoopConfig) -> DensityMatrix {
    DensityMatrix::from_ket(&loop_output_state(pump_jv, lp))
        .with_corner_coherence_scaled(dephasing_factor(lp))
}

/// Polarization of Raman noise photons leaving the loop: photons generated
/// by the CCW (V) pump component exit through the H port and vice versa, so
/// the mixture is weighted by the pump power split.
pub fn noise_polarization(pump_jv: &JonesVector) -> Matrix2<C64> {
    let w_h = pump_jv.v().norm_sqr();
    let w_v = pump_jv.h().norm_sqr();
    Matrix2::new(
        C64::new(w_h, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(w_v, 0.0),
    )
}

/// Mean pairs per pulse: quadratic in average pump power, `mu = k P^2`,
/// scaled by the pair-rate excess. Pulse-shape bookkeeping between average
/// and peak power is folded into `k`.
pub fn mean_pairs_per_pulse(avg_power_w: f64, lp: &LoopConfig) -> f64 {
    lp.pair_gen_coeff_per_w2 * avg_power_w * avg_power_w * db_to_linear(lp.pair_rate_excess_db)
}

/// dB (power) to linear transmission.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Samples one pump pulse: Poisson pair number at the configured mean,
/// Poisson Raman noise per arm, and the emitted state. Deterministic given
/// the RNG state.
pub fn emit_pulse<R: Rng + ?Sized>(
    pump: &PumpConfig,
    lp: &LoopConfig,
    rng: &mut R,
) -> PulseEmission {
    let jv = pump_jones(pump);
    let mu = mean_pairs_per_pulse(pump.avg_power_w, lp);
    PulseEmission {
        n_pairs: sample_poisson(mu, rng),
        state: loop_output_state(&jv, lp),
        n_noise_s: sample_poisson(lp.raman_rate_s, rng),
        n_noise_i: sample_poisson(lp.raman_rate_i, rng),
    }
}

/// Poisson sample with a zero-mean fast path (the distribution constructor
/// rejects zero).
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("positive finite mean");
    let x: f64 = dist.sample(rng);
    x as u32
}
