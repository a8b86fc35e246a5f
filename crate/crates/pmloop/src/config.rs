//! Experiment configuration: every physical parameter of the source and
//! detection chain, with units embedded in the key names so a config file
//! can never be misread by a factor of 10^6.
//!
//! The default configuration reproduces the published operating point of the
//! setup this models (1.58 uW average pump at 3.88 MHz, -3.3/-3.1 dB
//! coupling, 21.8%/22.6% detector efficiencies, ...). The excess-loss,
//! pair-rate-excess, Raman-rate, and phase-jitter entries are calibration
//! constants; `examples/calibrate.rs` derives them from the target count
//! rates and prints the derivation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::{AnalyzerSetting, ArmParams, DetectorConfig};
use crate::error::Error;
use crate::source::{LoopConfig, PumpConfig};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "avg_power_uW")]
    pub avg_power_uw: f64,
    #[serde(rename = "rep_rate_MHz")]
    pub rep_rate_mhz: f64,

    pub pump_polarizer_deg: f64,
    pub pump_qwp_deg: f64,
    pub pump_hwp_deg: f64,

    pub phi_b_rad: f64,
    pub phi_b_jitter_rad: f64,

    #[serde(rename = "pair_gen_coeff_per_pulse_per_uW2")]
    pub pair_gen_coeff_per_pulse_per_uw2: f64,
    #[serde(rename = "pair_rate_excess_dB")]
    pub pair_rate_excess_db: f64,

    pub raman_rate_s_per_pulse: f64,
    pub raman_rate_i_per_pulse: f64,

    #[serde(rename = "coupling_loss_s_dB")]
    pub coupling_loss_s_db: f64,
    #[serde(rename = "coupling_loss_i_dB")]
    pub coupling_loss_i_db: f64,
    #[serde(rename = "excess_loss_s_dB")]
    pub excess_loss_s_db: f64,
    #[serde(rename = "excess_loss_i_dB")]
    pub excess_loss_i_db: f64,
    #[serde(rename = "analyzer_loss_s_dB")]
    pub analyzer_loss_s_db: f64,
    #[serde(rename = "analyzer_loss_i_dB")]
    pub analyzer_loss_i_db: f64,
    #[serde(rename = "pdl_s_dB")]
    pub pdl_s_db: f64,
    #[serde(rename = "pdl_i_dB")]
    pub pdl_i_db: f64,

    pub detector_efficiency_s: f64,
    pub detector_efficiency_i: f64,
    pub dark_count_s_per_gate: f64,
    pub dark_count_i_per_gate: f64,
    pub gate_width_ns: f64,

    pub angle_error_bound_deg: f64,
    /// Redraw the analyzer plate-angle errors at every setting change
    /// (manual-rotation repeatability) instead of once per experiment.
    pub angle_error_per_setting: bool,

    pub pc_misalign_s_deg: f64,
    pub pc_misalign_i_deg: f64,
}

impl ExperimentConfig {
    /// The calibrated configuration of the demonstrated setup. Pump plates
    /// are set for the compensated (elliptical-pump) operating point where
    /// the emitted phase is zero.
    pub fn reference() -> Self {
        ExperimentConfig {
            avg_power_uw: 1.58,
            rep_rate_mhz: 3.88,
            pump_polarizer_deg: 90.0,
            // chi = 0.06 rad ellipticity at 45 deg compensates
            // phi_b = 0.24 rad (phase doubles through pair generation).
            pump_qwp_deg: 93.43774677078494,
            pump_hwp_deg: 69.21887338539247,
            phi_b_rad: 0.24,
            phi_b_jitter_rad: 0.21,
            pair_gen_coeff_per_pulse_per_uw2: 0.00400576830636116,
            pair_rate_excess_db: -1.7531522527516243,
            raman_rate_s_per_pulse: 0.0200527999435879,
            raman_rate_i_per_pulse: 0.0200527999435879,
            coupling_loss_s_db: -3.3,
            coupling_loss_i_db: -3.1,
            excess_loss_s_db: -0.1582345812203949,
            excess_loss_i_db: -0.18827157284916743,
            analyzer_loss_s_db: -0.8,
            analyzer_loss_i_db: -1.2,
            pdl_s_db: 0.0,
            pdl_i_db: 0.0,
            detector_efficiency_s: 0.218,
            detector_efficiency_i: 0.226,
            dark_count_s_per_gate: 5.82e-5,
            dark_count_i_per_gate: 4.60e-5,
            gate_width_ns: 2.5,
            angle_error_bound_deg: 3.0,
            angle_error_per_setting: true,
            pc_misalign_s_deg: 0.0,
            pc_misalign_i_deg: 0.0,
        }
    }

    /// Same setup with a 45 deg linear pump: the residual phase 0.24 rad is
    /// left uncompensated.
    pub fn with_linear_pump(&self) -> Self {
        let mut c = self.clone();
        // QWP fast axis at 90 deg (no ellipticity), HWP rotating V to 45 deg.
        c.pump_qwp_deg = 90.0;
        c.pump_hwp_deg = 67.5;
        c
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, key: &'static str, reason: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig {
                    key,
                    reason: reason.to_string(),
                })
            }
        }

        check(
            self.avg_power_uw.is_finite() && self.avg_power_uw >= 0.0,
            "avg_power_uW",
            "must be finite and >= 0",
        )?;
        check(
            self.rep_rate_mhz.is_finite() && self.rep_rate_mhz > 0.0,
            "rep_rate_MHz",
            "must be finite and > 0",
        )?;
        check(
            self.pair_gen_coeff_per_pulse_per_uw2 >= 0.0,
            "pair_gen_coeff_per_pulse_per_uW2",
            "must be >= 0",
        )?;
        check(
            self.phi_b_jitter_rad >= 0.0,
            "phi_b_jitter_rad",
            "must be >= 0",
        )?;
        check(
            self.raman_rate_s_per_pulse >= 0.0,
            "raman_rate_s_per_pulse",
            "must be >= 0",
        )?;
        check(
            self.raman_rate_i_per_pulse >= 0.0,
            "raman_rate_i_per_pulse",
            "must be >= 0",
        )?;
        for (value, key) in [
            (self.pair_rate_excess_db, "pair_rate_excess_dB"),
            (self.coupling_loss_s_db, "coupling_loss_s_dB"),
            (self.coupling_loss_i_db, "coupling_loss_i_dB"),
            (self.excess_loss_s_db, "excess_loss_s_dB"),
            (self.excess_loss_i_db, "excess_loss_i_dB"),
            (self.analyzer_loss_s_db, "analyzer_loss_s_dB"),
            (self.analyzer_loss_i_db, "analyzer_loss_i_dB"),
            (self.pdl_s_db, "pdl_s_dB"),
            (self.pdl_i_db, "pdl_i_dB"),
        ] {
            check(
                value.is_finite() && value <= 0.0,
                key,
                "loss must be <= 0 dB",
            )?;
        }
        for (value, key) in [
            (self.detector_efficiency_s, "detector_efficiency_s"),
            (self.detector_efficiency_i, "detector_efficiency_i"),
            (self.dark_count_s_per_gate, "dark_count_s_per_gate"),
            (self.dark_count_i_per_gate, "dark_count_i_per_gate"),
        ] {
            check(
                (0.0..=1.0).contains(&value),
                key,
                "must be a probability in [0, 1]",
            )?;
        }
        check(self.gate_width_ns >= 0.0, "gate_width_ns", "must be >= 0")?;
        check(
            self.angle_error_bound_deg >= 0.0,
            "angle_error_bound_deg",
            "must be >= 0",
        )?;
        Ok(())
    }

    pub fn pump(&self) -> PumpConfig {
        PumpConfig {
            avg_power_w: self.avg_power_uw * 1e-6,
            rep_rate_hz: self.rep_rate_mhz * 1e6,
            polarizer_axis_rad: self.pump_polarizer_deg.to_radians(),
            qwp_angle_rad: self.pump_qwp_deg.to_radians(),
            hwp_angle_rad: self.pump_hwp_deg.to_radians(),
        }
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            phi_b_rad: self.phi_b_rad,
            phi_b_jitter_rad: self.phi_b_jitter_rad,
            // pairs/pulse/uW^2 -> pairs/pulse/W^2.
            pair_gen_coeff_per_w2: self.pair_gen_coeff_per_pulse_per_uw2 * 1e12,
            pair_rate_excess_db: self.pair_rate_excess_db,
            raman_rate_s: self.raman_rate_s_per_pulse,
            raman_rate_i: self.raman_rate_i_per_pulse,
            coupling_loss_s_db: self.coupling_loss_s_db,
            coupling_loss_i_db: self.coupling_loss_i_db,
        }
    }

    pub fn arm_s(&self) -> ArmParams {
        ArmParams {
            coupling_loss_db: self.coupling_loss_s_db,
            excess_loss_db: self.excess_loss_s_db,
            pdl_db: self.pdl_s_db,
            pc_misalign_rad: self.pc_misalign_s_deg.to_radians(),
            analyzer: AnalyzerSetting {
                qwp_angle_rad: 0.0,
                hwp_angle_rad: 0.0,
                angle_error_bound_rad: self.angle_error_bound_deg.to_radians(),
                insertion_loss_db: self.analyzer_loss_s_db,
            },
            detector: DetectorConfig {
                efficiency: self.detector_efficiency_s,
                dark_count_per_gate: self.dark_count_s_per_gate,
                gate_width_s: self.gate_width_ns * 1e-9,
            },
        }
    }

    pub fn arm_i(&self) -> ArmParams {
        ArmParams {
            coupling_loss_db: self.coupling_loss_i_db,
            excess_loss_db: self.excess_loss_i_db,
            pdl_db: self.pdl_i_db,
            pc_misalign_rad: self.pc_misalign_i_deg.to_radians(),
            analyzer: AnalyzerSetting {
                qwp_angle_rad: 0.0,
                hwp_angle_rad: 0.0,
                angle_error_bound_rad: self.angle_error_bound_deg.to_radians(),
                insertion_loss_db: self.analyzer_loss_i_db,
            },
            detector: DetectorConfig {
                efficiency: self.detector_efficiency_i,
                dark_count_per_gate: self.dark_count_i_per_gate,
                gate_width_s: self.gate_width_ns * 1e-9,
            },
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_path(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::reference()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_is_valid() {
        ExperimentConfig::reference().validate().unwrap();
        ExperimentConfig::reference()
            .with_linear_pump()
            .validate()
            .unwrap();
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let config = ExperimentConfig::reference();
        let text = config.to_json();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(config, back);
        // And the serialized form is byte-stable.
        assert_eq!(text, back.to_json());
    }

    #[test]
    fn unknown_keys_are_named_in_the_error() {
        let mut value: serde_json::Value =
            serde_json::from_str(&ExperimentConfig::reference().to_json()).unwrap();
        value["bogus_key_mW"] = serde_json::json!(1.0);
        let err = ExperimentConfig::from_json(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("bogus_key_mW"), "{err}");
    }

    #[test]
    fn invalid_values_name_the_offending_key() {
        let mut config = ExperimentConfig::reference();
        config.coupling_loss_s_db = 1.5;
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("coupling_loss_s_dB"), "{err}");

        let mut config = ExperimentConfig::reference();
        config.detector_efficiency_i = 1.2;
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("detector_efficiency_i"), "{err}");
    }

    #[test]
    fn committed_config_file_matches_the_built_in() {
        let path =
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.json");
        let text = std::fs::read_to_string(&path).unwrap();
        let from_file = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(from_file, ExperimentConfig::reference());
        assert_eq!(text, ExperimentConfig::reference().to_json());
    }

    #[test]
    fn unit_conversions() {
        let config = ExperimentConfig::reference();
        let pump = config.pump();
        assert!((pump.avg_power_w - 1.58e-6).abs() < 1e-18);
        assert!((pump.rep_rate_hz - 3.88e6).abs() < 1e-6);
        let lp = config.loop_config();
        let mu = crate::source::mean_pairs_per_pulse(pump.avg_power_w, &lp);
        let expected = 0.01 * crate::source::db_to_linear(config.pair_rate_excess_db);
        assert!((mu - expected).abs() < 1e-12, "mu = {mu}");
    }
}
