//! Machine-readable reports: criterion verdict tables, validation suites,
//! and raw path exports. CSV uses a comma separator, `.` decimal point, a
//! header row, and LF line endings; JSON mirrors the same fields.

use serde::Serialize;

use crate::estimator::PathPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// One row of a `criteria` run.
#[derive(Debug, Clone, Serialize)]
pub struct CriteriaRow {
    pub criterion: String,
    pub holds: String,
    pub strength: String,
    pub method: String,
    /// Expected verdict for presets; empty when nothing is asserted.
    pub expected: String,
    #[serde(rename = "match")]
    pub matches: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriteriaReport {
    pub family: String,
    pub rows: Vec<CriteriaRow>,
}

/// One row of a `validate` run.
#[derive(Debug, Clone, Serialize)]
pub struct ValidateRow {
    pub suite: String,
    pub statistic: String,
    pub n: u64,
    pub samples: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub oracle: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub family: String,
    pub seed: u64,
    pub rows: Vec<ValidateRow>,
}

impl ValidateReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub family: String,
    pub n: u64,
    pub samples: u64,
    pub seed: u64,
    pub points: Vec<PathPoint>,
}

impl CriteriaReport {
    pub fn all_match(&self) -> bool {
        self.rows.iter().all(|r| r.matches)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("criterion,holds,strength,method,expected,match\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.criterion, r.holds, r.strength, r.method, r.expected, r.matches
            ));
        }
        out
    }
}

impl ValidateReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("suite,statistic,n,samples,estimate,stderr,oracle,tolerance,pass\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.suite, r.statistic, r.n, r.samples, r.estimate, r.stderr, r.oracle, r.tolerance,
                r.pass
            ));
        }
        out
    }
}

impl SimulateReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,i,sn\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.sample, p.i, p.sn));
        }
        out
    }
}

pub fn to_json<T: Serialize>(value: &T) -> crate::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
