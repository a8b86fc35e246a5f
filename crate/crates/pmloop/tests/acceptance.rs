//! Acceptance suite: every closed-loop target the simulator must reproduce,
//! one test per criterion, each printing a single pass/fail line (visible
//! with `cargo test --test acceptance -- --nocapture`).
//!
//! All tolerances are fixed here, not tuned at runtime. Criteria involving
//! Monte Carlo use committed seeds so the suite is deterministic.

use std::time::Instant;

use pmloop::campaign::{fit_phase_law, scan_pump_phase, simulate_campaign, CampaignMode};
use pmloop::config::ExperimentConfig;
use pmloop::detection::{expected_record, run_counting, RealizedErrors, SamplingMode};
use pmloop::jones::Basis;
use pmloop::source::sample_poisson;
use pmloop::tomography::{
    mle_reconstruct, reconstruct_records, synthesize_expected_counts, tomography_settings,
    MleOptions, ProjectorSet, TomographyResult,
};
use pmloop::two_photon::{DensityMatrix, TwoPhotonKet};
use pmloop::C64;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ELLIPTICAL_SEEDS: std::ops::RangeInclusive<u64> = 1..=20;
const LINEAR_SEEDS: std::ops::RangeInclusive<u64> = 1001..=1020;

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn mc_results(
    config: &ExperimentConfig,
    seeds: std::ops::RangeInclusive<u64>,
    raw: bool,
) -> Vec<TomographyResult> {
    let set = ProjectorSet::default16();
    let opts = MleOptions::default();
    seeds
        .map(|seed| {
            let records = simulate_campaign(
                config,
                10.0,
                5,
                seed,
                CampaignMode::MonteCarlo(SamplingMode::Aggregate),
            )
            .unwrap();
            reconstruct_records(&records, &set, &opts, raw).unwrap()
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_1_phase_law() {
    let config = ExperimentConfig::reference().with_linear_pump();
    assert!((config.phi_b_rad - 0.24).abs() < 1e-12);

    let start = Instant::now();
    let records = simulate_campaign(&config, 10.0, 5, 0, CampaignMode::Analytic).unwrap();
    let result = reconstruct_records(
        &records,
        &ProjectorSet::default16(),
        &MleOptions::default(),
        false,
    )
    .unwrap();
    let best_phase = result.best_phase_rad.unwrap();
    let elapsed = start.elapsed();

    let grid = [-0.2, -0.1, 0.0, 0.1, 0.2];
    let points = scan_pump_phase(&config, &grid, 10.0, &MleOptions::default()).unwrap();
    let (slope, _) = fit_phase_law(&points);

    let phase_ok = (best_phase - 0.24).abs() <= 0.01;
    let slope_ok = (slope - 2.0).abs() <= 0.01;
    let runtime_ok = elapsed.as_secs_f64() < 1.0;
    let pass = phase_ok && slope_ok && runtime_ok;
    report(
        "1 (phase law)",
        pass,
        &format!(
            "best_phase {best_phase:.4} rad (target 0.24 +/- 0.01), slope {slope:.4} \
             (target 2.00 +/- 0.01), analytic reconstruction in {:.0} ms (< 1 s)",
            elapsed.as_secs_f64() * 1e3
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_elliptical_pump_bell_state() {
    let start = Instant::now();
    let config = ExperimentConfig::reference();
    let results = mc_results(&config, ELLIPTICAL_SEEDS, false);
    let f_mean = mean(results.iter().map(|r| r.fidelity_phi_plus));
    let p_mean = mean(results.iter().map(|r| r.purity));
    let elapsed = start.elapsed();

    let f_ok = (f_mean - 0.97).abs() <= 0.04;
    let p_ok = (p_mean - 0.94).abs() <= 0.04;
    let runtime_ok = elapsed.as_secs_f64() < 180.0;
    let pass = f_ok && p_ok && runtime_ok;
    report(
        "2 (elliptical-pump Bell state)",
        pass,
        &format!(
            "20-seed mean fidelity(Phi+) {f_mean:.4} (target 0.97 +/- 0.04), \
             mean purity {p_mean:.4} (target 0.94 +/- 0.04), runtime {:.1} s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

// Known-red band check. With unbiased accidental subtraction the raw-mode
// fit resolves to (1 - w) rho_sub + w I/4 with background weight
// w = 4 A / (2 C_true + 4 A); at the calibrated operating point (90/s raw
// coincidences, 5/s accidentals) w is ~0.11, which caps the raw-fidelity
// drop near 0.94. Reaching the 0.85..0.91 band would need >= 8.4/s of
// accidentals, incompatible with the 5/s +/- 20% count-rate check. The
// per-seed ordering below is the physically meaningful half and holds.
#[test]
fn criterion_3_raw_mode_ordering() {
    let config = ExperimentConfig::reference();
    let subtracted = mc_results(&config, ELLIPTICAL_SEEDS, false);
    let raw = mc_results(&config, ELLIPTICAL_SEEDS, true);

    let ordering_violations = subtracted
        .iter()
        .zip(raw.iter())
        .filter(|(s, r)| r.fidelity_phi_plus >= s.fidelity_phi_plus)
        .count();
    let raw_mean = mean(raw.iter().map(|r| r.fidelity_phi_plus));

    let ordering_ok = ordering_violations == 0;
    let band_ok = (0.85..=0.91).contains(&raw_mean);
    let pass = ordering_ok && band_ok;
    report(
        "3 (raw-mode ordering)",
        pass,
        &format!(
            "raw < subtracted on {}/20 seeds (need 20/20), 20-seed mean raw fidelity \
             {raw_mean:.4} (target band 0.85..0.91)",
            20 - ordering_violations
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_count_rates() {
    let config = ExperimentConfig::reference();
    let record = expected_record(
        &config,
        "HH",
        (Basis::H, Basis::H),
        10.0,
        &RealizedErrors::default(),
    )
    .unwrap();
    let coincidence_rate = record.coincidence / record.duration_s;
    let accidental_rate = record.accidental / record.duration_s;

    // The calibration constants ship as a committed artifact.
    let committed =
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.json");
    let artifact_ok = ExperimentConfig::from_path(&committed)
        .map(|c| c == config)
        .unwrap_or(false);

    let coincidence_ok = (coincidence_rate - 90.0).abs() <= 9.0;
    let accidental_ok = (accidental_rate - 5.0).abs() <= 1.0;
    let pass = coincidence_ok && accidental_ok && artifact_ok;
    report(
        "4 (count rates)",
        pass,
        &format!(
            "expected HH coincidence {coincidence_rate:.2}/s (target 90 +/- 10%), \
             accidental {accidental_rate:.2}/s (target 5 +/- 20%), calibration artifact \
             committed: {artifact_ok}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_mle_oracle_recovery() {
    let set = ProjectorSet::default16();
    let opts = MleOptions::default();
    let hh_ket = TwoPhotonKet::new([
        C64::new(1.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
    ])
    .unwrap();
    let cases = [
        ("|Phi+>", DensityMatrix::from_ket(&TwoPhotonKet::phi_plus())),
        (
            "phased Bell (0.24)",
            DensityMatrix::phased_bell_density(0.24),
        ),
        ("I/4", DensityMatrix::maximally_mixed()),
        ("|HH>", DensityMatrix::from_ket(&hh_ket)),
    ];

    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for (name, rho) in &cases {
        let counts = synthesize_expected_counts(&set, rho, 1e6);
        let result = mle_reconstruct(&counts, &set, &opts).unwrap();
        let dev = (result.rho.matrix() - rho.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        worst = worst.max(dev);
        details.push(format!("{name} {dev:.2e}"));
    }

    let pass = worst <= 1e-3;
    report(
        "5 (MLE oracle recovery)",
        pass,
        &format!(
            "max-entry errors at N=1e6: {} (all <= 1e-3)",
            details.join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_physicality_suite() {
    let set = ProjectorSet::default16();
    let opts = MleOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let mut worst_eig = f64::INFINITY;
    let mut worst_trace = 0.0f64;
    for _ in 0..1000 {
        // Random physical state via the Cholesky parameterization.
        let params: [f64; 16] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let mut t = nalgebra::Matrix4::<C64>::zeros();
        let mut k = 0;
        for r in 0..4 {
            t[(r, r)] = C64::new(params[k], 0.0);
            k += 1;
        }
        for r in 0..4 {
            for c in (r + 1)..4 {
                t[(r, c)] = C64::new(params[k % 16], params[(k + 3) % 16]);
                k += 2;
            }
        }
        let raw = t.adjoint() * t;
        let trace = raw.trace().re.max(1e-9);
        let rho = DensityMatrix::from_matrix(raw / C64::new(trace, 0.0)).unwrap();

        // Poisson-noisy counts at modest statistics.
        let exact = synthesize_expected_counts(&set, &rho, 2000.0);
        let noisy: Vec<(f64, f64)> = exact
            .iter()
            .map(|(n, e)| (sample_poisson(*n, &mut rng) as f64, *e))
            .collect();
        if noisy.iter().map(|(n, _)| n).sum::<f64>() <= 0.0 {
            continue;
        }
        let result = mle_reconstruct(&noisy, &set, &opts).unwrap();
        worst_eig = worst_eig.min(result.rho.min_eigenvalue());
        worst_trace = worst_trace.max((result.rho.matrix().trace().re - 1.0).abs());
    }

    let pass = worst_eig >= -1e-9 && worst_trace <= 1e-10;
    report(
        "6 (physicality suite)",
        pass,
        &format!(
            "1000 noisy MLE runs: min eigenvalue {worst_eig:.2e} (>= -1e-9), \
             max |trace - 1| {worst_trace:.2e} (<= 1e-10)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_monte_carlo_vs_analytic() {
    // Oracle comparison with the stochastic nuisance parameters disabled:
    // the per-gate sampler against expected_record, identical settings.
    let mut config = ExperimentConfig::reference();
    config.phi_b_jitter_rad = 0.0;
    config.angle_error_bound_deg = 0.0;

    let duration_s = 1e6 / (config.rep_rate_mhz * 1e6);
    let mut passed = 0;
    let mut failures = Vec::new();
    for (idx, (id, s, i)) in tomography_settings().iter().enumerate() {
        let expected = expected_record(
            &config,
            id,
            (*s, *i),
            duration_s,
            &RealizedErrors::default(),
        )
        .unwrap();
        assert_eq!(expected.n_gates, 1_000_000);

        let mut rng = ChaCha8Rng::seed_from_u64(7000 + idx as u64);
        let got = &run_counting(
            &config,
            (id, *s, *i),
            duration_s,
            1,
            Some(RealizedErrors::default()),
            SamplingMode::PerGate,
            &mut rng,
        )
        .unwrap()[0];

        let within = |obs: f64, exp: f64| (obs - exp).abs() <= 4.0 * exp.sqrt().max(1.0);
        let ok = within(got.coincidence, expected.coincidence)
            && within(got.accidental, expected.accidental)
            && within(got.singles_s, expected.singles_s)
            && within(got.singles_i, expected.singles_i);
        if ok {
            passed += 1;
        } else {
            failures.push(id.clone());
        }
    }

    let pass = passed >= 15;
    report(
        "7 (Monte Carlo vs analytic)",
        pass,
        &format!(
            "{passed}/16 settings within 4 sigma at 1e6 gates (need >= 15){}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; outliers: {}", failures.join(", "))
            }
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_linear_pump_run() {
    let config = ExperimentConfig::reference().with_linear_pump();
    let results = mc_results(&config, LINEAR_SEEDS, false);

    let f_best_mean = mean(results.iter().map(|r| r.fidelity_best_phase.unwrap()));
    let f_phi_plus_mean = mean(results.iter().map(|r| r.fidelity_phi_plus));
    let p_mean = mean(results.iter().map(|r| r.purity));

    // The uncompensated 0.24 rad phase costs a factor cos(0.12) in fidelity.
    let degraded = f_best_mean * (0.12f64).cos();

    let f_best_ok = (f_best_mean - 0.95).abs() <= 0.05;
    let degraded_ok = (f_phi_plus_mean - degraded).abs() <= 0.02;
    let p_ok = (p_mean - 0.88).abs() <= 0.05;
    let pass = f_best_ok && degraded_ok && p_ok;
    report(
        "8 (linear-pump run)",
        pass,
        &format!(
            "20-seed mean best-phase fidelity {f_best_mean:.4} (target 0.95 +/- 0.05), \
             fidelity(Phi+) {f_phi_plus_mean:.4} vs cos(0.12)-degraded {degraded:.4} \
             (|diff| <= 0.02), mean purity {p_mean:.4} (target 0.88 +/- 0.05)"
        ),
    );
    assert!(pass);
}
