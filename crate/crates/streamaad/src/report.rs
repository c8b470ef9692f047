//! Machine-readable and plain-text comparison reports.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use streamaad_core::data::Partition;
use streamaad_core::eval::{compare, RunReport, Verdict};

use crate::config::{ReportFormat, TOOL_VERSION};
use crate::container::{read_file, write_file};
use crate::error::{Error, Result};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    pub p_value: f64,
    pub verdict: Verdict,
    pub w_plus: f64,
    pub n_used: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSet {
    pub tool_version: String,
    pub reports: Vec<RunReport>,
    pub comparisons: Vec<PairComparison>,
}

impl ReportSet {
    /// Runs the signed-rank test on every pair of methods that share a
    /// partition strategy and subject list.
    pub fn build(reports: Vec<RunReport>) -> Result<Self> {
        let mut names: Vec<&str> = reports.iter().map(|r| r.method.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("report method names must be unique".into()));
        }
        let mut comparisons = Vec::new();
        for (i, a) in reports.iter().enumerate() {
            for b in &reports[i + 1..] {
                if a.partition != b.partition {
                    continue;
                }
                let c = compare(a, b)?;
                comparisons.push(PairComparison {
                    a: a.method.clone(),
                    b: b.method.clone(),
                    p_value: c.test.p_value,
                    verdict: c.verdict,
                    w_plus: c.test.w_plus,
                    n_used: c.test.n_used,
                    degenerate: c.test.degenerate,
                });
            }
        }
        Ok(ReportSet {
            tool_version: TOOL_VERSION.to_string(),
            reports,
            comparisons,
        })
    }

    pub fn report(&self, method: &str) -> Option<&RunReport> {
        self.reports.iter().find(|r| r.method == method)
    }

    pub fn comparison(&self, a: &str, b: &str) -> Option<&PairComparison> {
        self.comparisons
            .iter()
            .find(|c| (c.a == a && c.b == b) || (c.a == b && c.b == a))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let width = self
            .reports
            .iter()
            .map(|r| r.method.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let _ = writeln!(
            s,
            "{:<7}  {:<width$}  {:<12}  {:>8}",
            "subject", "method", "partition", "accuracy"
        );
        for r in &self.reports {
            for (subject, acc) in &r.subjects {
                let _ = writeln!(
                    s,
                    "{:<7}  {:<width$}  {:<12}  {:>7.2}%",
                    subject,
                    r.method,
                    r.partition.name(),
                    acc * 100.0
                );
            }
        }
        let _ = writeln!(s);
        for r in &self.reports {
            let _ = writeln!(
                s,
                "{:<7}  {:<width$}  {:<12}  {:>6.2}% +/- {:.2}%",
                "mean",
                r.method,
                r.partition.name(),
                r.mean() * 100.0,
                r.sd() * 100.0
            );
        }
        if !self.comparisons.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(
                s,
                "exact Wilcoxon signed-rank p-values (two-sided, paired by subject)"
            );
            let cell = 12;
            let _ = write!(s, "{:<width$}", "");
            for r in &self.reports {
                let _ = write!(s, "  {:>cell$}", r.method);
            }
            let _ = writeln!(s);
            for a in &self.reports {
                let _ = write!(s, "{:<width$}", a.method);
                for b in &self.reports {
                    let text = if a.method == b.method {
                        "-".to_string()
                    } else {
                        match self.comparison(&a.method, &b.method) {
                            Some(c) => format!("{:.4} {}", c.p_value, c.verdict),
                            None => "n/a".to_string(),
                        }
                    };
                    let _ = write!(s, "  {text:>cell$}");
                }
                let _ = writeln!(s);
            }
        }
        s
    }

    pub fn write(&self, dir: &Path, formats: &[ReportFormat]) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for f in formats {
            match f {
                ReportFormat::Json => {
                    let mut text = serde_json::to_string_pretty(self).expect("report serializes");
                    text.push('\n');
                    write_file(&dir.join(REPORT_JSON), text.as_bytes())?;
                }
                ReportFormat::Text => {
                    write_file(&dir.join(REPORT_TEXT), self.to_text().as_bytes())?
                }
            }
        }
        Ok(())
    }

    /// Reads `report.json` from a file path or a run directory.
    pub fn read(path: &Path) -> Result<Self> {
        let file = if path.is_dir() {
            path.join(REPORT_JSON)
        } else {
            path.to_path_buf()
        };
        serde_json::from_slice(&read_file(&file)?).map_err(|e| Error::malformed(&file, "report", e))
    }
}

/// Partition of a set of reports, if they agree.
pub fn common_partition(reports: &[RunReport]) -> Option<Partition> {
    let p = reports.first()?.partition;
    reports.iter().all(|r| r.partition == p).then_some(p)
}
