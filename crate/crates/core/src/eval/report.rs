use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{ConfusionCounts, MetricsReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recalls {
    pub present: Option<f64>,
    pub unknown: Option<f64>,
    pub absent: Option<f64>,
}

/// On-disk report: one run (`runs = 1`) or the mean over several runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub w_acc: f64,
    pub uar: Option<f64>,
    pub recalls: Recalls,
    /// For a multi-run report, the sum of the per-run matrices.
    pub confusion: [[u64; 3]; 3],
    pub runs: usize,
}

impl From<&MetricsReport> for ReportFile {
    fn from(r: &MetricsReport) -> Self {
        Self {
            w_acc: r.w_acc,
            uar: r.uar,
            recalls: Recalls {
                present: r.recall_present,
                unknown: r.recall_unknown,
                absent: r.recall_absent,
            },
            confusion: r.confusion.matrix,
            runs: 1,
        }
    }
}

/// Mean taken around the first value, so identical inputs give that value
/// back exactly.
fn mean(v: &[f64]) -> f64 {
    let first = v[0];
    first + v.iter().map(|x| x - first).sum::<f64>() / v.len() as f64
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean(&v))
}

impl ReportFile {
    /// Arithmetic mean of every metric across `reports`, each counted once.
    /// A metric undefined in any report is undefined in the mean.
    pub fn mean(reports: &[ReportFile]) -> Result<ReportFile> {
        if reports.is_empty() {
            return Err(Error::Precondition("no reports to aggregate".into()));
        }
        let mut confusion = ConfusionCounts::default();
        for r in reports {
            confusion = confusion.merged(&ConfusionCounts { matrix: r.confusion });
        }
        Ok(ReportFile {
            w_acc: mean(&reports.iter().map(|r| r.w_acc).collect::<Vec<_>>()),
            uar: mean_opt(reports.iter().map(|r| r.uar)),
            recalls: Recalls {
                present: mean_opt(reports.iter().map(|r| r.recalls.present)),
                unknown: mean_opt(reports.iter().map(|r| r.recalls.unknown)),
                absent: mean_opt(reports.iter().map(|r| r.recalls.absent)),
            },
            confusion: confusion.matrix,
            runs: reports.len(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    /// Plain-text table with columns W.acc, UAR, Present, Unknown, Absent.
    pub fn table(&self, name: &str) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        let width = name.len().max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>7}  {:>7}  {:>6}",
            "Model", "W.acc", "UAR", "Present", "Unknown", "Absent"
        );
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>7}  {:>7}  {:>6}",
            name,
            cell(Some(self.w_acc)),
            cell(self.uar),
            cell(self.recalls.present),
            cell(self.recalls.unknown),
            cell(self.recalls.absent)
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(w_acc: f64) -> ReportFile {
        ReportFile {
            w_acc,
            uar: Some(0.5),
            recalls: Recalls { present: Some(0.5), unknown: Some(0.25), absent: Some(0.75) },
            confusion: [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
            runs: 1,
        }
    }

    #[test]
    fn mean_of_two() {
        let m = ReportFile::mean(&[report(0.8), report(0.9)]).unwrap();
        assert!((m.w_acc - 0.85).abs() < 1e-15);
        assert_eq!(m.runs, 2);
        assert_eq!(m.confusion[2][2], 2);
    }

    #[test]
    fn identical_reports_mean_is_identical() {
        let reports = vec![report(0.8); 15];
        let m = ReportFile::mean(&reports).unwrap();
        assert_eq!(m.w_acc, 0.8);
        assert_eq!(m.uar, Some(0.5));
    }

    #[test]
    fn table_layout() {
        let t = report(0.832).table("M2D");
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].contains("W.acc") && lines[0].contains("Absent"));
        assert!(lines[1].starts_with("M2D") && lines[1].contains("0.832"));
    }
}
