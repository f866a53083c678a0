//! Experiment reports and their CSV / text serialization.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// A count was zero, so nothing was measured.
    Skipped,
    /// Reported for context; not tied to a criterion.
    Info,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skipped => "skipped",
            Status::Info => "info",
        }
    }

    pub fn from_check(passed: bool) -> Self {
        if passed {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub value: Option<f64>,
    pub criterion: Option<&'static str>,
    pub status: Status,
}

impl MetricRow {
    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value: Some(value),
            criterion: None,
            status: Status::Info,
        }
    }

    pub fn check(
        name: impl Into<String>,
        value: f64,
        criterion: &'static str,
        passed: bool,
    ) -> Self {
        Self {
            name: name.into(),
            value: Some(value),
            criterion: Some(criterion),
            status: Status::from_check(passed),
        }
    }

    pub fn skipped(name: impl Into<String>, criterion: Option<&'static str>) -> Self {
        Self {
            name: name.into(),
            value: None,
            criterion,
            status: Status::Skipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// One CSV file's worth of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(render_cell).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// `v` with 12 significant digits; plain notation for moderate magnitudes.
pub fn format_float(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let exponent = v.abs().log10().floor() as i32;
    if (-5..12).contains(&exponent) {
        let decimals = (11 - exponent).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.11e}")
    }
}

fn render_cell(c: &Cell) -> String {
    match c {
        Cell::Num(v) => format_float(*v),
        Cell::Int(v) => v.to_string(),
        Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Cell::Text(s) => s.clone(),
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub metrics: Vec<MetricRow>,
    pub tables: Vec<Table>,
    pub wall_seconds: f64,
}

impl ExperimentReport {
    pub fn all_passed(&self) -> bool {
        self.metrics.iter().all(|m| m.status != Status::Fail)
    }

    /// Criterion → overall status, in first-appearance order.
    pub fn criteria(&self) -> Vec<(&'static str, Status)> {
        let mut out: Vec<(&'static str, Status)> = Vec::new();
        for m in &self.metrics {
            let Some(c) = m.criterion else { continue };
            let entry = match out.iter_mut().find(|(k, _)| *k == c) {
                Some(e) => e,
                None => {
                    out.push((c, m.status));
                    continue;
                }
            };
            entry.1 = match (entry.1, m.status) {
                (Status::Fail, _) | (_, Status::Fail) => Status::Fail,
                (Status::Pass, _) | (_, Status::Pass) => Status::Pass,
                (s, _) => s,
            };
        }
        out
    }

    pub fn metrics_table(&self) -> Table {
        let mut t = Table::new(
            "metrics",
            &["experiment", "metric", "value", "criterion", "status"],
        );
        for m in &self.metrics {
            t.push(vec![
                self.experiment.as_str().into(),
                m.name.clone().into(),
                m.value.map_or(Cell::Text(String::new()), Cell::Num),
                m.criterion.unwrap_or("").into(),
                m.status.as_str().into(),
            ]);
        }
        t
    }

    /// SHA-256 over every CSV this report writes, in write order.
    pub fn csv_digest(&self) -> String {
        let mut h = Sha256::new();
        for t in std::iter::once(self.metrics_table()).chain(self.tables.iter().cloned()) {
            h.update(t.name.as_bytes());
            h.update([0]);
            h.update(t.render().as_bytes());
        }
        h.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment: {}", self.experiment);
        let _ = writeln!(s, "seed: {}", self.config.seed);
        let _ = writeln!(s, "wall-clock seconds: {:.3}", self.wall_seconds);
        for (criterion, status) in self.criteria() {
            let _ = writeln!(s, "{criterion}: {}", status.as_str());
        }
        for m in self.metrics.iter().filter(|m| m.criterion.is_some()) {
            let value = m.value.map_or_else(|| "-".to_string(), format_float);
            let _ = writeln!(
                s,
                "  {} {:<48} {:>20} {}",
                m.criterion.unwrap_or(""),
                m.name,
                value,
                m.status.as_str()
            );
        }
        s
    }
}

fn write_file(path: &Path, contents: &str) -> HarnessResult<()> {
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

/// Writes the metric rows: UTF-8, header row, one metric per line.
pub fn emit_csv(report: &ExperimentReport, path: &Path) -> HarnessResult<()> {
    write_file(path, &report.metrics_table().render())
}

/// Writes `metrics.csv`, one CSV per table and `summary.txt` into `dir`.
pub fn write_outputs(report: &ExperimentReport, dir: &Path) -> HarnessResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    emit_csv(report, &dir.join("metrics.csv"))?;
    for t in &report.tables {
        write_file(&dir.join(format!("{}.csv", t.name)), &t.render())?;
    }
    write_file(&dir.join("summary.txt"), &report.summary())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(metrics: Vec<MetricRow>) -> ExperimentReport {
        ExperimentReport {
            experiment: Experiment::Discriminate,
            config: ExperimentConfig::default(),
            metrics,
            tables: Vec::new(),
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_float(0.158655253931457), "0.158655253931");
        assert_eq!(format_float(1.0), "1.00000000000");
        assert_eq!(format_float(-12.5), "-12.5000000000");
        assert_eq!(format_float(0.0), "0");
        assert_eq!(format_float(1.5e-9), "1.50000000000e-9");
        assert_eq!(format_float(0.5), "0.500000000000");
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(
            report(vec![]).metrics_table().render(),
            "experiment,metric,value,criterion,status\n"
        );
    }

    #[test]
    fn one_metric_is_two_lines() {
        let r = report(vec![MetricRow::check("posterior", 0.6212, "A7", true)]);
        let text = r.metrics_table().render();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(
            text.lines().nth(1),
            Some("discriminate,posterior,0.621200000000,A7,pass")
        );
    }

    #[test]
    fn criterion_status_aggregates() {
        let r = report(vec![
            MetricRow::check("a", 1.0, "A1", true),
            MetricRow::check("b", 1.0, "A1", false),
            MetricRow::check("c", 1.0, "A2", true),
            MetricRow::skipped("d", Some("A3")),
            MetricRow::info("e", 2.0),
        ]);
        assert_eq!(
            r.criteria(),
            vec![
                ("A1", Status::Fail),
                ("A2", Status::Pass),
                ("A3", Status::Skipped)
            ]
        );
        assert!(!r.all_passed());
    }

    #[test]
    fn text_cells_are_quoted() {
        let mut t = Table::new("t", &["a"]);
        t.push(vec!["x,y".into()]);
        assert_eq!(t.render(), "a\n\"x,y\"\n");
    }

    #[test]
    fn emit_to_unwritable_path_fails() {
        let r = report(vec![]);
        let err = emit_csv(&r, Path::new("/nonexistent-dir/metrics.csv")).unwrap_err();
        assert!(matches!(err, HarnessError::Io { .. }));
    }
}
