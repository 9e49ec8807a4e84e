//! Report records, the JSON-lines stream and the per-suite summary CSV.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Suite};

pub const RNG_ALGORITHM: &str = "ChaCha20";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRecord {
    pub suite: Suite,
    pub check: String,
    pub tower: String,
    pub inputs_digest: String,
    /// Non-finite residuals serialize as `null` and never pass.
    pub residual: f64,
    pub bound: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
    /// Check-specific values (propagations, per-sample data).
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, serde_json::Value>,
}

impl ReportRecord {
    pub fn new(suite: Suite, check: impl Into<String>, tower: &str, inputs: &str, residual: f64, bound: f64) -> Self {
        let check = check.into();
        let residual = if residual.is_nan() { f64::INFINITY } else { residual.max(0.0) };
        ReportRecord {
            suite,
            inputs_digest: digest(&[tower, suite.name(), &check, inputs]),
            check,
            tower: tower.to_string(),
            residual,
            bound,
            pass: residual <= bound,
            wall_time_ms: None,
            details: BTreeMap::new(),
        }
    }

    pub fn with_detail(mut self, key: &str, value: impl Serialize) -> Self {
        self.details.insert(key.to_string(), serde_json::to_value(value).expect("serializable detail"));
        self
    }
}

/// First 16 hex digits of a SHA-256 over the parts, separated by NUL.
pub fn digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
struct Header<'a> {
    report: &'static str,
    tower: &'a str,
    rng: &'static str,
    seed: u64,
    config_digest: String,
    suites: Vec<Suite>,
}

/// Sorts records by `(suite, check)`.
pub fn sort_records(records: &mut [ReportRecord]) {
    records.sort_by(|a, b| (a.suite, &a.check).cmp(&(b.suite, &b.check)));
}

pub fn write_jsonl(out: &mut impl Write, config: &ExperimentConfig, suites: &[Suite], seed: u64, records: &[ReportRecord]) -> io::Result<()> {
    let config_json = serde_json::to_string(config).expect("config serializes");
    let header = Header {
        report: "equifold",
        tower: &config.name,
        rng: RNG_ALGORITHM,
        seed,
        config_digest: digest(&[&config_json]),
        suites: suites.to_vec(),
    };
    writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"))?;
    }
    Ok(())
}

/// `suite,checks,passed,failed,max_residual`.
pub fn write_summary_csv(out: &mut impl Write, records: &[ReportRecord]) -> io::Result<()> {
    writeln!(out, "suite,checks,passed,failed,max_residual")?;
    let mut by_suite: BTreeMap<Suite, Vec<&ReportRecord>> = BTreeMap::new();
    for r in records {
        by_suite.entry(r.suite).or_default().push(r);
    }
    for (suite, rs) in by_suite {
        let passed = rs.iter().filter(|r| r.pass).count();
        let worst = rs.iter().map(|r| r.residual).fold(0.0, f64::max);
        writeln!(out, "{},{},{},{},{:e}", suite, rs.len(), passed, rs.len() - passed, worst)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_iff_within_bound() {
        let r = ReportRecord::new(Suite::Wave, "x", "t", "", 1e-11, 1e-10);
        assert!(r.pass);
        assert!(!ReportRecord::new(Suite::Wave, "x", "t", "", 2e-10, 1e-10).pass);
        let nan = ReportRecord::new(Suite::Wave, "x", "t", "", f64::NAN, 1.0);
        assert!(!nan.pass);
        assert!(serde_json::to_string(&nan).unwrap().contains("\"residual\":null"));
        assert!(ReportRecord::new(Suite::Rho, "x", "t", "", 0.0, 0.0).pass);
    }

    #[test]
    fn digests_are_stable() {
        assert_eq!(digest(&["a", "b"]), digest(&["a", "b"]));
        assert_ne!(digest(&["ab", ""]), digest(&["a", "b"]));
        assert_eq!(digest(&[""]).len(), 16);
    }

    #[test]
    fn sorting_and_summary() {
        let mut rs = vec![
            ReportRecord::new(Suite::Rho, "b", "t", "", 0.0, 1.0),
            ReportRecord::new(Suite::Algebra, "z", "t", "", 2.0, 1.0),
            ReportRecord::new(Suite::Rho, "a", "t", "", 0.5, 1.0),
        ];
        sort_records(&mut rs);
        let order: Vec<_> = rs.iter().map(|r| (r.suite, r.check.as_str())).collect();
        assert_eq!(order, vec![(Suite::Algebra, "z"), (Suite::Rho, "a"), (Suite::Rho, "b")]);
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &rs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "algebra,1,0,1,2e0");
        assert_eq!(text.lines().nth(2).unwrap(), "rho,2,2,0,5e-1");
    }
}
