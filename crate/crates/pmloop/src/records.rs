//! Count records and their CSV/JSON interchange forms.
//!
//! The CSV schema is the contract consumed by the tomography stage:
//! `setting_id,coincidence,accidental,singles_s,singles_i,duration_s,n_gates`.
//! Counts are stored as `f64` so the same record type carries integer Monte
//! Carlo counts and real-valued analytic expectations.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

pub const CSV_HEADER: &str =
    "setting_id,coincidence,accidental,singles_s,singles_i,duration_s,n_gates";

/// Per-setting counting result with integration metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting_id: String,
    pub coincidence: f64,
    pub accidental: f64,
    pub singles_s: f64,
    pub singles_i: f64,
    pub duration_s: f64,
    pub n_gates: u64,
}

impl CountRecord {
    pub fn new(
        setting_id: impl Into<String>,
        coincidence: f64,
        accidental: f64,
        singles_s: f64,
        singles_i: f64,
        duration_s: f64,
        n_gates: u64,
    ) -> Result<Self> {
        let record = CountRecord {
            setting_id: setting_id.into(),
            coincidence,
            accidental,
            singles_s,
            singles_i,
            duration_s,
            n_gates,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        for (value, name) in [
            (self.coincidence, "coincidence"),
            (self.accidental, "accidental"),
            (self.singles_s, "singles_s"),
            (self.singles_i, "singles_i"),
            (self.duration_s, "duration_s"),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::BadRecord(format!(
                    "{}: {name} = {value} must be finite and >= 0",
                    self.setting_id
                )));
            }
        }
        // A same-gate coincidence implies a click on both arms.
        let tol = 1e-9 * self.singles_s.max(self.singles_i).max(1.0);
        if self.coincidence > self.singles_s.min(self.singles_i) + tol {
            return Err(Error::BadRecord(format!(
                "{}: coincidence {} exceeds min(singles) = {}",
                self.setting_id,
                self.coincidence,
                self.singles_s.min(self.singles_i)
            )));
        }
        Ok(())
    }
}

/// Serializes records to the canonical CSV form (header + one row each).
pub fn to_csv(records: &[CountRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.setting_id,
            r.coincidence,
            r.accidental,
            r.singles_s,
            r.singles_i,
            r.duration_s,
            r.n_gates
        ));
    }
    out
}

/// Parses the canonical CSV form, validating the header and every row.
pub fn from_csv(text: &str) -> Result<Vec<CountRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::BadRecord(format!(
                "bad CSV header {:?}; expected {:?}",
                other.unwrap_or(""),
                CSV_HEADER
            )))
        }
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::BadRecord(format!(
                "line {}: expected 7 fields, found {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse = |s: &str, name: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| {
                Error::BadRecord(format!("line {}: bad {name} value {s:?}", lineno + 2))
            })
        };
        let n_gates: u64 = fields[6].parse().map_err(|_| {
            Error::BadRecord(format!(
                "line {}: bad n_gates value {:?}",
                lineno + 2,
                fields[6]
            ))
        })?;
        records.push(CountRecord::new(
            fields[0],
            parse(fields[1], "coincidence")?,
            parse(fields[2], "accidental")?,
            parse(fields[3], "singles_s")?,
            parse(fields[4], "singles_i")?,
            parse(fields[5], "duration_s")?,
            n_gates,
        )?);
    }
    Ok(records)
}

pub fn to_json(records: &[CountRecord]) -> String {
    let mut s = serde_json::to_string_pretty(records).expect("records serialize");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<Vec<CountRecord>> {
    let records: Vec<CountRecord> = serde_json::from_str(text)?;
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

/// Sums repeated measurements of the same setting into one record per
/// setting (counts, durations, and gate totals add; first-appearance order
/// is kept).
pub fn aggregate_by_setting(records: &[CountRecord]) -> Vec<CountRecord> {
    let mut order: Vec<String> = Vec::new();
    let mut merged: Vec<CountRecord> = Vec::new();
    for r in records {
        match order.iter().position(|id| *id == r.setting_id) {
            Some(k) => {
                let m = &mut merged[k];
                m.coincidence += r.coincidence;
                m.accidental += r.accidental;
                m.singles_s += r.singles_s;
                m.singles_i += r.singles_i;
                m.duration_s += r.duration_s;
                m.n_gates += r.n_gates;
            }
            None => {
                order.push(r.setting_id.clone());
                merged.push(r.clone());
            }
        }
    }
    merged
}
