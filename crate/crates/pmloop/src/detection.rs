//! Polarization analyzers, gated single-photon detectors, and
//! coincidence/accidental counting, in closed form and as Monte Carlo.
//!
//! One detection gate per pump pulse; the gate window is assumed to contain
//! the photon arrival, so `gate_width_s` is recorded but does not enter the
//! probabilities. Click causes (pair photons, Raman noise, dark counts) are
//! independent, and Poisson emission makes the no-click probabilities exact
//! exponentials:
//!
//! ```text
//! P(no s-click) = (1 - d_s) exp(-mu a - nu_s q_s)
//! P(no click at all) = (1 - d_s)(1 - d_i) exp(-mu (a + b - c) - nu_s q_s - nu_i q_i)
//! ```
//!
//! with `a`, `b`, `c` the per-pair detection operators' expectations and
//! `q` the per-noise-photon pass probabilities. Accidental coincidences are
//! estimated by the adjacent-pulse method: a signal click in gate `g` paired
//! with an idler click in gate `g + 1`.

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Error;
use crate::jones::{projector, rotation, Basis, WavePlate};
use crate::records::CountRecord;
use crate::source::{
    db_to_linear, loop_output_density, loop_output_state, mean_pairs_per_pulse, noise_polarization,
    pump_jones, sample_poisson,
};
use crate::two_photon::{kron2, DensityMatrix};
use crate::{Result, C64};

/// One analyzer's plate angles, the angle-error bound of its manual rotation
/// stages, and its insertion loss.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AnalyzerSetting {
    pub qwp_angle_rad: f64,
    pub hwp_angle_rad: f64,
    pub angle_error_bound_rad: f64,
    pub insertion_loss_db: f64,
}

/// Gated single-photon detector parameters. `gate_width_s` is metadata.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub efficiency: f64,
    pub dark_count_per_gate: f64,
    pub gate_width_s: f64,
}

/// Everything one collection arm contributes: losses, polarization-dependent
/// loss, residual polarization-controller rotation, analyzer, and detector.
#[derive(Debug, Clone, Copy)]
pub struct ArmParams {
    pub coupling_loss_db: f64,
    pub excess_loss_db: f64,
    pub pdl_db: f64,
    pub pc_misalign_rad: f64,
    pub analyzer: AnalyzerSetting,
    pub detector: DetectorConfig,
}

/// Realized plate-angle offsets for one analyzer.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlateErrors {
    pub qwp_rad: f64,
    pub hwp_rad: f64,
}

/// Offsets for both arms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RealizedErrors {
    pub signal: PlateErrors,
    pub idler: PlateErrors,
}

pub fn draw_plate_errors<R: Rng + ?Sized>(bound_rad: f64, rng: &mut R) -> PlateErrors {
    if bound_rad <= 0.0 {
        return PlateErrors::default();
    }
    PlateErrors {
        qwp_rad: rng.random_range(-bound_rad..=bound_rad),
        hwp_rad: rng.random_range(-bound_rad..=bound_rad),
    }
}

pub fn draw_realized_errors<R: Rng + ?Sized>(bound_rad: f64, rng: &mut R) -> RealizedErrors {
    RealizedErrors {
        signal: draw_plate_errors(bound_rad, rng),
        idler: draw_plate_errors(bound_rad, rng),
    }
}

/// Nominal (QWP, HWP) angles that project onto each basis state, for an
/// analyzer whose output polarizer is fixed along H.
pub fn analyzer_angles(basis: Basis) -> (f64, f64) {
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};
    match basis {
        Basis::H => (0.0, 0.0),
        Basis::V => (0.0, FRAC_PI_4),
        Basis::D => (FRAC_PI_4, FRAC_PI_8),
        Basis::A => (FRAC_PI_4, -FRAC_PI_8),
        Basis::R => (FRAC_PI_4, 0.0),
        Basis::L => (FRAC_PI_4, FRAC_PI_4),
    }
}

/// The analyzer's effective projection state: the photon passes QWP then HWP
/// then the H polarizer, so the analyzed state is
/// `QWP(q)^dag HWP(h)^dag |H>` with the realized angle offsets applied.
/// Returns the rank-1 projector and the insertion-loss transmissivity.
pub fn analyzer_projector(setting: &AnalyzerSetting, errors: PlateErrors) -> (Matrix2<C64>, f64) {
    let qwp = WavePlate::quarter(setting.qwp_angle_rad + errors.qwp_rad).matrix();
    let hwp = WavePlate::half(setting.hwp_angle_rad + errors.hwp_rad).matrix();
    let e = Basis::H
        .ket()
        .transform(&hwp.adjoint())
        .and_then(|s| s.transform(&qwp.adjoint()))
        .expect("unitary chain preserves norm");
    (projector(&e), db_to_linear(setting.insertion_loss_db))
}

/// Full-arm detection operator (subnormalized POVM element): PDL, residual
/// PC rotation, analyzer projection, and all scalar efficiencies folded in.
pub fn arm_povm(arm: &ArmParams, basis: Basis, errors: PlateErrors) -> Matrix2<C64> {
    let (qwp_nom, hwp_nom) = analyzer_angles(basis);
    let setting = AnalyzerSetting {
        qwp_angle_rad: qwp_nom,
        hwp_angle_rad: hwp_nom,
        ..arm.analyzer
    };
    let (proj, analyzer_trans) = analyzer_projector(&setting, errors);
    // Photon order: PDL (diag attenuation), PC rotation, analyzer.
    let pdl = Matrix2::new(
        C64::new(1.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(db_to_linear(arm.pdl_db).sqrt(), 0.0),
    );
    let chain = rotation(arm.pc_misalign_rad) * pdl;
    let scalar = db_to_linear(arm.coupling_loss_db)
        * db_to_linear(arm.excess_loss_db)
        * analyzer_trans
        * arm.detector.efficiency;
    chain.adjoint() * proj * chain * C64::new(scalar, 0.0)
}

/// Per-gate click and coincidence probabilities.
#[derive(Debug, Clone, Copy)]
pub struct GateProbabilities {
    pub p_click_s: f64,
    pub p_click_i: f64,
    pub p_coincidence: f64,
    pub p_accidental: f64,
}

/// Per-pair and per-noise-photon pass probabilities for one analyzer
/// setting pair, plus the emission parameters; everything needed to compute
/// or sample gate outcomes.
#[derive(Debug, Clone, Copy)]
pub struct GateModel {
    pub mu: f64,
    /// Per-pair probability that the signal arm clicks.
    pub pair_s: f64,
    /// Per-pair probability that the idler arm clicks.
    pub pair_i: f64,
    /// Per-pair probability that both arms click.
    pub pair_both: f64,
    pub nu_s: f64,
    pub nu_i: f64,
    /// Per-noise-photon pass probability in each arm.
    pub noise_pass_s: f64,
    pub noise_pass_i: f64,
    pub dark_s: f64,
    pub dark_i: f64,
    pub rep_rate_hz: f64,
}

/// How the emitted two-photon state is represented when building a
/// [`GateModel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateModel {
    /// Jitter-averaged density matrix (analytic expectations).
    DephasedAverage,
    /// Pure state at an explicit relative phase (one Monte Carlo repeat).
    PureWithPhase(f64),
}

/// Scan/override knobs for special procedures (analyzer calibration).
#[derive(Debug, Clone, Copy, Default)]
pub struct TrialRotations {
    pub signal_rad: f64,
    pub idler_rad: f64,
}

impl GateModel {
    pub fn build(
        config: &ExperimentConfig,
        setting: (Basis, Basis),
        errors: &RealizedErrors,
        state_model: StateModel,
        trial: TrialRotations,
    ) -> Result<GateModel> {
        let pump = config.pump();
        let lp = config.loop_config();
        let pump_jv = pump_jones(&pump);

        let rho_pair: DensityMatrix = match state_model {
            StateModel::DephasedAverage => loop_output_density(&pump_jv, &lp),
            StateModel::PureWithPhase(phi) => {
                let mut lp_fixed = lp;
                lp_fixed.phi_b_rad = phi;
                DensityMatrix::from_ket(&loop_output_state(&pump_jv, &lp_fixed))
            }
        };

        let mut arm_s = config.arm_s();
        arm_s.pc_misalign_rad += trial.signal_rad;
        let mut arm_i = config.arm_i();
        arm_i.pc_misalign_rad += trial.idler_rad;

        let e_s = arm_povm(&arm_s, setting.0, errors.signal);
        let e_i = arm_povm(&arm_i, setting.1, errors.idler);
        let id = Matrix2::identity();

        let pair_s = (kron2(&e_s, &id) * rho_pair.matrix()).trace().re;
        let pair_i = (kron2(&id, &e_i) * rho_pair.matrix()).trace().re;
        let pair_both = (kron2(&e_s, &e_i) * rho_pair.matrix()).trace().re;

        let noise_pol = noise_polarization(&pump_jv);
        let noise_pass_s = (e_s * noise_pol).trace().re;
        let noise_pass_i = (e_i * noise_pol).trace().re;

        let model = GateModel {
            mu: mean_pairs_per_pulse(pump.avg_power_w, &lp),
            pair_s,
            pair_i,
            pair_both,
            nu_s: lp.raman_rate_s,
            nu_i: lp.raman_rate_i,
            noise_pass_s,
            noise_pass_i,
            dark_s: config.dark_count_s_per_gate,
            dark_i: config.dark_count_i_per_gate,
            rep_rate_hz: pump.rep_rate_hz,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        let in_unit = |v: f64| (-1e-12..=1.0 + 1e-12).contains(&v);
        for (value, context) in [
            (self.pair_s, "per-pair signal click"),
            (self.pair_i, "per-pair idler click"),
            (self.pair_both, "per-pair double click"),
            (self.noise_pass_s, "noise pass (signal)"),
            (self.noise_pass_i, "noise pass (idler)"),
            (self.dark_s, "dark count (signal)"),
            (self.dark_i, "dark count (idler)"),
        ] {
            if !in_unit(value) {
                return Err(Error::ProbabilityOutOfRange { context, value });
            }
        }
        // A double click implies each single click.
        if self.pair_both > self.pair_s + 1e-12 || self.pair_both > self.pair_i + 1e-12 {
            return Err(Error::ProbabilityOutOfRange {
                context: "per-pair double click exceeds a single-arm click",
                value: self.pair_both,
            });
        }
        Ok(())
    }

    /// Closed-form per-gate probabilities.
    pub fn probabilities(&self) -> Result<GateProbabilities> {
        let no_s =
            (1.0 - self.dark_s) * (-self.mu * self.pair_s - self.nu_s * self.noise_pass_s).exp();
        let no_i =
            (1.0 - self.dark_i) * (-self.mu * self.pair_i - self.nu_i * self.noise_pass_i).exp();
        let neither = (1.0 - self.dark_s)
            * (1.0 - self.dark_i)
            * (-self.mu * (self.pair_s + self.pair_i - self.pair_both)
                - self.nu_s * self.noise_pass_s
                - self.nu_i * self.noise_pass_i)
                .exp();
        let p = GateProbabilities {
            p_click_s: 1.0 - no_s,
            p_click_i: 1.0 - no_i,
            p_coincidence: 1.0 - no_s - no_i + neither,
            p_accidental: (1.0 - no_s) * (1.0 - no_i),
        };
        let in_unit = |v: f64| (-1e-12..=1.0 + 1e-12).contains(&v);
        for (value, context) in [
            (p.p_click_s, "gate click (signal)"),
            (p.p_click_i, "gate click (idler)"),
            (p.p_coincidence, "gate coincidence"),
            (p.p_accidental, "gate accidental"),
        ] {
            if !in_unit(value) {
                return Err(Error::ProbabilityOutOfRange { context, value });
            }
        }
        Ok(p)
    }
}

pub fn gates_for(duration_s: f64, rep_rate_hz: f64) -> u64 {
    (duration_s * rep_rate_hz).round() as u64
}

/// Analytic expectations of every [`CountRecord`] field; the oracle for the
/// Monte Carlo path and the fast path for synthesizing tomography input.
pub fn expected_record(
    config: &ExperimentConfig,
    setting_id: &str,
    setting: (Basis, Basis),
    duration_s: f64,
    errors: &RealizedErrors,
) -> Result<CountRecord> {
    let model = GateModel::build(
        config,
        setting,
        errors,
        StateModel::DephasedAverage,
        TrialRotations::default(),
    )?;
    let p = model.probabilities()?;
    let n = gates_for(duration_s, model.rep_rate_hz);
    let nf = n as f64;
    CountRecord::new(
        setting_id,
        nf * p.p_coincidence,
        nf * p.p_accidental,
        nf * p.p_click_s,
        nf * p.p_click_i,
        duration_s,
        n,
    )
}

/// Monte Carlo sampling strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Sample aggregate per-repeat counts from the exact per-gate joint
    /// probabilities (binomial/multinomial); statistically identical to the
    /// gate loop for independent gates and orders of magnitude faster.
    Aggregate,
    /// Literal per-gate loop: sample emission and clicks gate by gate and
    /// pair adjacent gates for accidentals.
    PerGate,
}

/// Runs `repeats` counting blocks of `duration_s` at one analyzer setting
/// pair. Plate-angle errors are drawn once per call (the plates are set
/// once, then all repeats run) unless fixed ones are supplied. The loop
/// phase drifts between repeats when `phi_b_jitter_rad > 0`.
pub fn run_counting<R: Rng + ?Sized>(
    config: &ExperimentConfig,
    setting: (&str, Basis, Basis),
    duration_s: f64,
    repeats: usize,
    fixed_errors: Option<RealizedErrors>,
    mode: SamplingMode,
    rng: &mut R,
) -> Result<Vec<CountRecord>> {
    let (setting_id, signal, idler) = setting;
    let bound = config.angle_error_bound_deg.to_radians();
    let errors = fixed_errors.unwrap_or_else(|| draw_realized_errors(bound, rng));
    let jitter = config.phi_b_jitter_rad;

    let mut records = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let phi = if jitter > 0.0 {
            let normal = Normal::new(config.phi_b_rad, jitter).expect("valid jitter");
            normal.sample(rng)
        } else {
            config.phi_b_rad
        };
        let model = GateModel::build(
            config,
            (signal, idler),
            &errors,
            StateModel::PureWithPhase(phi),
            TrialRotations::default(),
        )?;
        let n = gates_for(duration_s, model.rep_rate_hz);
        let record = match mode {
            SamplingMode::Aggregate => sample_aggregate(&model, setting_id, duration_s, n, rng)?,
            SamplingMode::PerGate => sample_per_gate(&model, setting_id, duration_s, n, rng)?,
        };
        records.push(record);
    }
    Ok(records)
}

fn sample_binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

fn sample_aggregate<R: Rng + ?Sized>(
    model: &GateModel,
    setting_id: &str,
    duration_s: f64,
    n_gates: u64,
    rng: &mut R,
) -> Result<CountRecord> {
    let p = model.probabilities()?;
    // Joint gate outcome: (both, signal only, idler only, none).
    let p_both = p.p_coincidence;
    let p_s_only = p.p_click_s - p_both;
    let p_i_only = p.p_click_i - p_both;

    let n_both = sample_binomial(n_gates, p_both, rng);
    let rest = n_gates - n_both;
    let n_s_only = sample_binomial(rest, (p_s_only / (1.0 - p_both)).clamp(0.0, 1.0), rng);
    let rest = rest - n_s_only;
    let n_i_only = sample_binomial(
        rest,
        (p_i_only / (1.0 - p_both - p_s_only)).clamp(0.0, 1.0),
        rng,
    );
    let accidental = sample_binomial(n_gates, p.p_accidental, rng);

    CountRecord::new(
        setting_id,
        n_both as f64,
        accidental as f64,
        (n_both + n_s_only) as f64,
        (n_both + n_i_only) as f64,
        duration_s,
        n_gates,
    )
}

fn sample_per_gate<R: Rng + ?Sized>(
    model: &GateModel,
    setting_id: &str,
    duration_s: f64,
    n_gates: u64,
    rng: &mut R,
) -> Result<CountRecord> {
    let mut coincidence = 0u64;
    let mut accidental = 0u64;
    let mut singles_s = 0u64;
    let mut singles_i = 0u64;
    let mut prev_s_click = false;

    // Noise clicks per gate are Poisson-thinned emissions.
    let noise_click_rate_s = model.nu_s * model.noise_pass_s;
    let noise_click_rate_i = model.nu_i * model.noise_pass_i;

    for _ in 0..n_gates {
        let mut s_click = false;
        let mut i_click = false;

        let n_pairs = sample_poisson(model.mu, rng);
        for _ in 0..n_pairs {
            let u: f64 = rng.random();
            if u < model.pair_both {
                s_click = true;
                i_click = true;
            } else if u < model.pair_s {
                s_click = true;
            } else if u < model.pair_s + model.pair_i - model.pair_both {
                i_click = true;
            }
        }
        if !s_click && sample_poisson(noise_click_rate_s, rng) > 0 {
            s_click = true;
        }
        if !i_click && sample_poisson(noise_click_rate_i, rng) > 0 {
            i_click = true;
        }
        if !s_click && rng.random::<f64>() < model.dark_s {
            s_click = true;
        }
        if !i_click && rng.random::<f64>() < model.dark_i {
            i_click = true;
        }

        singles_s += s_click as u64;
        singles_i += i_click as u64;
        coincidence += (s_click && i_click) as u64;
        accidental += (prev_s_click && i_click) as u64;
        prev_s_click = s_click;
    }

    CountRecord::new(
        setting_id,
        coincidence as f64,
        accidental as f64,
        singles_s as f64,
        singles_i as f64,
        duration_s,
        n_gates,
    )
}

/// Result of the analyzer initialization procedure: the compensation
/// rotation that maximizes H singles on each arm and the residual
/// misalignment it leaves.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationReport {
    pub compensation_s_rad: f64,
    pub compensation_i_rad: f64,
    pub residual_s_rad: f64,
    pub residual_i_rad: f64,
    pub peak_singles_rate_s: f64,
    pub peak_singles_rate_i: f64,
}

/// Simulates the analyzer initialization: pump forced along V (pairs exit
/// H-polarized), each arm's compensation rotation scanned for maximum
/// singles at the H setting. Errors if the singles response is flat (no
/// pair rate and no polarized signal to align to).
pub fn calibrate_analyzers(config: &ExperimentConfig) -> Result<CalibrationReport> {
    // HWP1 at 0: pump along the V axis.
    let mut cal_config = config.clone();
    cal_config.pump_polarizer_deg = 90.0;
    cal_config.pump_qwp_deg = 90.0;
    cal_config.pump_hwp_deg = 0.0;

    let scan_arm = |idler_side: bool| -> Result<(f64, f64, f64)> {
        let singles_at = |trial: f64| -> Result<f64> {
            let trials = if idler_side {
                TrialRotations {
                    signal_rad: 0.0,
                    idler_rad: trial,
                }
            } else {
                TrialRotations {
                    signal_rad: trial,
                    idler_rad: 0.0,
                }
            };
            let model = GateModel::build(
                &cal_config,
                (Basis::H, Basis::H),
                &RealizedErrors::default(),
                StateModel::DephasedAverage,
                trials,
            )?;
            let p = model.probabilities()?;
            let rate = if idler_side { p.p_click_i } else { p.p_click_s };
            Ok(rate * model.rep_rate_hz)
        };

        // Coarse scan over a half turn, then a parabolic refinement.
        let steps = 181;
        let mut best_k = 0;
        let mut best = f64::NEG_INFINITY;
        let mut worst = f64::INFINITY;
        let grid: Vec<f64> = (0..steps)
            .map(|k| -std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / steps as f64)
            .collect();
        let mut values = Vec::with_capacity(steps);
        for (k, &t) in grid.iter().enumerate() {
            let v = singles_at(t)?;
            if v > best {
                best = v;
                best_k = k;
            }
            worst = worst.min(v);
            values.push(v);
        }
        if best - worst < 1e-9 * best.abs().max(1e-300) || !best.is_finite() {
            return Err(Error::CalibrationFlat);
        }
        let h = std::f64::consts::PI / steps as f64;
        let prev = values[(best_k + steps - 1) % steps];
        let next = values[(best_k + 1) % steps];
        let denom = prev - 2.0 * values[best_k] + next;
        let offset = if denom.abs() > 1e-300 {
            0.5 * (prev - next) / denom * h
        } else {
            0.0
        };
        let t_best = grid[best_k] + offset;
        Ok((t_best, singles_at(t_best)?, best))
    };

    let (t_s, peak_s, _) = scan_arm(false)?;
    let (t_i, peak_i, _) = scan_arm(true)?;

    let wrap = |x: f64| {
        let half = std::f64::consts::FRAC_PI_2;
        (x + half).rem_euclid(std::f64::consts::PI) - half
    };

    Ok(CalibrationReport {
        compensation_s_rad: t_s,
        compensation_i_rad: t_i,
        residual_s_rad: wrap(config.pc_misalign_s_deg.to_radians() + t_s),
        residual_i_rad: wrap(config.pc_misalign_i_deg.to_radians() + t_i),
        peak_singles_rate_s: peak_s,
        peak_singles_rate_i: peak_i,
    })
}
