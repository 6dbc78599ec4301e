//! Check records and the three output formats.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// `upper`: pass when `measured <= tolerance`. `lower`: pass when
/// `measured > tolerance` (negative controls and observed orders).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    Upper,
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    /// What is being compared, in one line.
    pub statement: String,
    pub measured: f64,
    pub tolerance: f64,
    pub bound: Bound,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_order: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn new(suite: &str, name: impl Into<String>, statement: impl Into<String>, measured: f64, tolerance: f64, bound: Bound) -> Self {
        let mut c = Check {
            suite: suite.to_string(),
            name: name.into(),
            statement: statement.into(),
            measured,
            tolerance,
            bound,
            order: None,
            min_order: None,
            pass: false,
        };
        c.pass = c.evaluate();
        c
    }

    pub fn with_order(mut self, order: Option<f64>, min_order: f64) -> Self {
        self.order = order;
        self.min_order = Some(min_order);
        self.pass = self.evaluate();
        self
    }

    fn evaluate(&self) -> bool {
        let bound_ok = match self.bound {
            Bound::Upper => self.measured <= self.tolerance,
            Bound::Lower => self.measured > self.tolerance,
        };
        let order_ok = match (self.order, self.min_order) {
            (Some(o), Some(m)) => o >= m,
            _ => true,
        };
        bound_ok && order_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub suite: String,
    pub config: Value,
    pub checks: Vec<Check>,
    pub pass: bool,
    /// Only filled with `--timing`, so default output is byte-reproducible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl Report {
    pub fn new(suite: &str, config: Value, checks: Vec<Check>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Report { suite: suite.to_string(), config, checks, pass, wall_time_s: None }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Human,
}

pub fn emit(report: &Report, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Csv => to_csv(report),
        Format::Human => to_human(report),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn to_csv(report: &Report) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["suite", "name", "measured", "tolerance", "bound", "order", "min_order", "pass"]).expect("in-memory write");
    for c in &report.checks {
        let bound = match c.bound {
            Bound::Upper => "upper",
            Bound::Lower => "lower",
        };
        w.write_record([
            c.suite.as_str(),
            &c.name,
            &format!("{:e}", c.measured),
            &format!("{:e}", c.tolerance),
            bound,
            &opt(c.order),
            &opt(c.min_order),
            if c.pass { "true" } else { "false" },
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn to_human(report: &Report) -> String {
    let width = report.checks.iter().map(|c| c.suite.len() + c.name.len() + 1).max().unwrap_or(5).max(5);
    let mut s = String::new();
    for c in &report.checks {
        let rel = match c.bound {
            Bound::Upper => "<=",
            Bound::Lower => "> ",
        };
        let order = c.order.map(|o| format!("  order {o:.3}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{}  {:<width$}  {:>10.3e} {rel} {:<9.1e}{order}",
            if c.pass { "PASS" } else { "FAIL" },
            format!("{}/{}", c.suite, c.name),
            c.measured,
            c.tolerance,
        );
    }
    let failed = report.failures().count();
    let _ = writeln!(s, "{}: {} checks, {} failed", report.suite, report.checks.len(), failed);
    if let Some(t) = report.wall_time_s {
        let _ = writeln!(s, "wall time {t:.2} s");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_rules() {
        assert!(Check::new("s", "a", "", 1e-12, 1e-10, Bound::Upper).pass);
        assert!(!Check::new("s", "a", "", 1e-9, 1e-10, Bound::Upper).pass);
        assert!(Check::new("s", "a", "", 0.5, 1e-6, Bound::Lower).pass);
        assert!(!Check::new("s", "a", "", 1e-7, 1e-6, Bound::Lower).pass);
        let c = Check::new("s", "a", "", 1e-6, 1e-4, Bound::Upper);
        assert!(!c.clone().with_order(Some(1.5), 1.9).pass);
        assert!(c.clone().with_order(Some(2.0), 1.9).pass);
        assert!(c.with_order(None, 1.9).pass);
    }

    #[test]
    fn empty_report_is_valid_json() {
        let r = Report::new("none", Value::Null, vec![]);
        let v: Value = serde_json::from_str(&emit(&r, Format::Json)).unwrap();
        assert_eq!(v["checks"], serde_json::json!([]));
        assert_eq!(v["pass"], Value::Bool(true));
        assert!(emit(&r, Format::Csv).starts_with("suite,name"));
    }
}
