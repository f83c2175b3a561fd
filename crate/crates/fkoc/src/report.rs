//! Markdown tables and check records.

use std::path::Path;

use serde::Serialize;

use crate::error::CliResult;
use crate::io;

pub struct Table {
    title: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: &str, header: &[&str]) -> Self {
        Self {
            title: title.to_owned(),
            header: header.iter().map(|s| (*s).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn kv(&mut self, key: &str, value: impl ToString) {
        self.rows.push(vec![key.to_owned(), value.to_string()]);
    }

    pub fn markdown(&self) -> String {
        let mut s = format!("## {}\n\n| {} |\n|", self.title, self.header.join(" | "));
        for _ in &self.header {
            s.push_str("---|");
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("| {} |\n", r.join(" | ")));
        }
        s
    }
}

pub fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub value: f64,
    pub tolerance: Option<f64>,
    /// `None` for diagnostics without a threshold.
    pub passed: Option<bool>,
    pub note: String,
}

impl Check {
    pub fn below(suite: &str, name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            suite: suite.to_owned(),
            name: name.to_owned(),
            value,
            tolerance: Some(tolerance),
            passed: Some(value <= tolerance),
            note: String::new(),
        }
    }

    pub fn flag(suite: &str, name: &str, passed: bool, note: impl Into<String>) -> Self {
        Self {
            suite: suite.to_owned(),
            name: name.to_owned(),
            value: if passed { 1.0 } else { 0.0 },
            tolerance: None,
            passed: Some(passed),
            note: note.into(),
        }
    }

    pub fn info(suite: &str, name: &str, value: f64, note: impl Into<String>) -> Self {
        Self {
            suite: suite.to_owned(),
            name: name.to_owned(),
            value,
            tolerance: None,
            passed: None,
            note: note.into(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    fn status(&self) -> &'static str {
        match self.passed {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "info",
        }
    }
}

pub fn checks_table(title: &str, checks: &[Check]) -> Table {
    let mut t = Table::new(
        title,
        &["suite", "check", "value", "tolerance", "status", "note"],
    );
    for c in checks {
        t.push(vec![
            c.suite.clone(),
            c.name.clone(),
            sci(c.value),
            c.tolerance.map_or_else(String::new, sci),
            c.status().to_owned(),
            c.note.clone(),
        ]);
    }
    t
}

pub fn write_checks_csv(path: &Path, checks: &[Check]) -> CliResult<()> {
    let rows = checks.iter().map(|c| {
        vec![
            c.suite.clone(),
            c.name.clone(),
            io::num(c.value),
            c.tolerance.map_or_else(String::new, io::num),
            c.status().to_owned(),
            c.note.clone(),
        ]
    });
    io::write_csv(
        Some(path),
        &["suite", "check", "value", "tolerance", "status", "note"],
        rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markdown_layout() {
        let mut t = Table::new("Kernel", &["property", "value"]);
        t.kv("alpha", 0.5);
        assert_eq!(
            t.markdown(),
            "## Kernel\n\n| property | value |\n|---|---|\n| alpha | 0.5 |\n"
        );
    }

    #[test]
    fn check_status() {
        assert_eq!(Check::below("s", "c", 1e-3, 1e-2).passed, Some(true));
        assert_eq!(Check::below("s", "c", f64::NAN, 1e-2).passed, Some(false));
        assert_eq!(Check::info("s", "c", 1.0, "").status(), "info");
    }
}
