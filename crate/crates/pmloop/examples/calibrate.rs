//! Derives the calibration constants baked into the default configuration.
//!
//! Run with `cargo run --release --example calibrate` to reproduce the
//! derivation, and add `--sweep` to scan the phase-jitter and PDL knobs
//! against the closed-loop pipeline observables (20 seeds each).
//!
//! Calibration targets, in the order they are solved:
//!
//! 1. Per-arm excess losses from the background-corrected coupling ratios
//!    (idler side 46.9%, signal side 45.1%). The ratio `(C/S_i)` corrected
//!    for the signal analyzer and detector equals the signal arm's coupling
//!    transmission, so the excess is whatever the nominal -3.3/-3.1 dB
//!    couplings are missing.
//! 2. The pair-rate excess (pump-filter spectral mismatch) from the raw HH
//!    coincidence rate. The first-principles rate with the nominal
//!    parameters lands near 128/s; the published ~90/s needs about -1.7 dB
//!    on the pair rate alone, which leaves singles-normalized ratios alone.
//! 3. The Raman rates from the accidental-coincidence rate. Dark counts and
//!    multi-pair events supply < 1/s; the remaining background must be
//!    noise photons.
//!
//! The phase-jitter value is chosen from the sweep so the reconstructed
//! purity and the raw-vs-subtracted fidelity gap of the full Monte Carlo
//! pipeline match the published state metrics.

use pmloop::campaign::CampaignMode;
use pmloop::config::ExperimentConfig;
use pmloop::detection::{expected_record, RealizedErrors, SamplingMode};
use pmloop::jones::Basis;
use pmloop::source::db_to_linear;
use pmloop::tomography::MleOptions;

/// Raw coincidence and accidental rate targets at the HH setting, in 1/s.
const TARGET_COINCIDENCE_PER_S: f64 = 90.0;
const TARGET_ACCIDENTAL_PER_S: f64 = 5.0;
/// Background-corrected coupling-ratio targets.
const TARGET_KAPPA_IDLER_SIDE: f64 = 0.469;
const TARGET_KAPPA_SIGNAL_SIDE: f64 = 0.451;

fn hh_rates(config: &ExperimentConfig) -> (f64, f64) {
    let r = expected_record(
        config,
        "HH",
        (Basis::H, Basis::H),
        10.0,
        &RealizedErrors::default(),
    )
    .unwrap();
    (r.coincidence / r.duration_s, r.accidental / r.duration_s)
}

fn calibrate_rates(base: &ExperimentConfig) -> ExperimentConfig {
    let mut config = base.clone();

    // Step 1: excess losses from the coupling-ratio targets. The idler-side
    // ratio (coincidence per signal single, corrected for the idler analyzer
    // and detector) measures the idler arm's coupling transmission, and vice
    // versa.
    let kappa_sig_nominal = db_to_linear(config.coupling_loss_s_db);
    let kappa_idl_nominal = db_to_linear(config.coupling_loss_i_db);
    config.excess_loss_s_db = 10.0 * (TARGET_KAPPA_SIGNAL_SIDE / kappa_sig_nominal).log10();
    config.excess_loss_i_db = 10.0 * (TARGET_KAPPA_IDLER_SIDE / kappa_idl_nominal).log10();

    // Steps 2 and 3 interact through the background; a short fixed-point
    // iteration settles both.
    for _ in 0..40 {
        let (coinc, acc) = hh_rates(&config);
        let pair_now = coinc - acc;
        let pair_target = TARGET_COINCIDENCE_PER_S - TARGET_ACCIDENTAL_PER_S;
        let scale = pair_target / pair_now;
        config.pair_rate_excess_db += 10.0 * scale.log10();

        // Bisect the (symmetric) Raman rate against the accidental target.
        let mut lo = 0.0;
        let mut hi = 0.2;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            config.raman_rate_s_per_pulse = mid;
            config.raman_rate_i_per_pulse = mid;
            let (_, acc) = hh_rates(&config);
            if acc < TARGET_ACCIDENTAL_PER_S {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    config
}

#[derive(Default, Clone, Copy)]
struct Summary {
    fidelity: f64,
    purity: f64,
    fidelity_raw: f64,
    fidelity_best: f64,
    ordering_ok: usize,
}

fn run_pipeline(config: &ExperimentConfig, seeds: std::ops::RangeInclusive<u64>) -> Summary {
    let opts = MleOptions::default();
    let mode = CampaignMode::MonteCarlo(SamplingMode::Aggregate);
    let mut sum = Summary::default();
    let n = (*seeds.end() - *seeds.start() + 1) as f64;
    for seed in seeds {
        let records = pmloop::campaign::simulate_campaign(config, 10.0, 5, seed, mode).unwrap();
        let set = pmloop::tomography::ProjectorSet::default16();
        let sub = pmloop::tomography::reconstruct_records(&records, &set, &opts, false).unwrap();
        let raw = pmloop::tomography::reconstruct_records(&records, &set, &opts, true).unwrap();
        sum.fidelity += sub.fidelity_phi_plus / n;
        sum.purity += sub.purity / n;
        sum.fidelity_raw += raw.fidelity_phi_plus / n;
        sum.fidelity_best += sub.fidelity_best_phase.unwrap_or(f64::NAN) / n;
        sum.ordering_ok += (raw.fidelity_phi_plus < sub.fidelity_phi_plus) as usize;
    }
    sum
}

fn main() {
    let sweep = std::env::args().any(|a| a == "--sweep");

    let base = ExperimentConfig::reference();
    let calibrated = calibrate_rates(&base);

    println!("# rate calibration");
    println!(
        "excess_loss_s_dB            = {:.6}",
        calibrated.excess_loss_s_db
    );
    println!(
        "excess_loss_i_dB            = {:.6}",
        calibrated.excess_loss_i_db
    );
    println!(
        "pair_rate_excess_dB         = {:.6}",
        calibrated.pair_rate_excess_db
    );
    println!(
        "raman_rate_per_pulse (each) = {:.8}",
        calibrated.raman_rate_s_per_pulse
    );

    let (coinc, acc) = hh_rates(&calibrated);
    println!("-> expected HH coincidence  = {coinc:.3}/s (target {TARGET_COINCIDENCE_PER_S})");
    println!("-> expected HH accidental   = {acc:.3}/s (target {TARGET_ACCIDENTAL_PER_S})");

    // Coupling-ratio cross-check on the background-free config.
    let mut pair_only = calibrated.clone();
    pair_only.raman_rate_s_per_pulse = 0.0;
    pair_only.raman_rate_i_per_pulse = 0.0;
    pair_only.dark_count_s_per_gate = 0.0;
    pair_only.dark_count_i_per_gate = 0.0;
    let r = expected_record(
        &pair_only,
        "HH",
        (Basis::H, Basis::H),
        10.0,
        &RealizedErrors::default(),
    )
    .unwrap();
    let t_s = db_to_linear(pair_only.analyzer_loss_s_db) * pair_only.detector_efficiency_s;
    let t_i = db_to_linear(pair_only.analyzer_loss_i_db) * pair_only.detector_efficiency_i;
    let true_c = r.coincidence - r.accidental;
    println!(
        "-> coupling ratios          = {:.4} (idler side), {:.4} (signal side)",
        (true_c / r.singles_s) / t_i,
        (true_c / r.singles_i) / t_s
    );

    let diff = |a: &ExperimentConfig, b: &ExperimentConfig| {
        serde_json::to_string(a).unwrap() != serde_json::to_string(b).unwrap()
    };
    let mut committed = base.clone();
    committed.excess_loss_s_db = calibrated.excess_loss_s_db;
    committed.excess_loss_i_db = calibrated.excess_loss_i_db;
    committed.pair_rate_excess_db = calibrated.pair_rate_excess_db;
    committed.raman_rate_s_per_pulse = calibrated.raman_rate_s_per_pulse;
    committed.raman_rate_i_per_pulse = calibrated.raman_rate_i_per_pulse;
    if diff(&committed, &base) {
        println!("\nNOTE: derived constants differ from ExperimentConfig::reference():");
        println!("{}", committed.to_json());
    } else {
        println!("\nExperimentConfig::reference() matches the derivation.");
    }

    if !sweep {
        return;
    }

    println!("\n# pipeline sweep (20 seeds each; elliptical pump = compensated)");
    println!(
        "{:>6} {:>6} | {:>7} {:>7} {:>7} | {:>7} {:>7} | {:>5}",
        "jitter", "pdl", "F_sub", "purity", "F_raw", "F_best", "pur_lin", "order"
    );
    for &pdl in &[0.0, -0.4] {
        for &jitter in &[0.0, 0.25, 0.32, 0.38, 0.43, 0.48] {
            let mut elliptical = calibrated.clone();
            elliptical.phi_b_jitter_rad = jitter;
            elliptical.pdl_s_db = pdl;
            elliptical.pdl_i_db = pdl;
            let linear = elliptical.with_linear_pump();

            let e = run_pipeline(&elliptical, 1..=20);
            let l = run_pipeline(&linear, 1..=20);
            println!(
                "{:>6.2} {:>6.2} | {:>7.4} {:>7.4} {:>7.4} | {:>7.4} {:>7.4} | {:>2}/20",
                jitter,
                pdl,
                e.fidelity,
                e.purity,
                e.fidelity_raw,
                l.fidelity_best,
                l.purity,
                e.ordering_ok
            );
        }
    }
}
