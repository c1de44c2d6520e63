//! Run records, checks, CSV formatting and the plain-text report.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

/// Pass/fail comparison of a measured value against a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub op: &'static str,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            op: "<",
            threshold,
            pass: value < threshold,
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            op: "<=",
            threshold,
            pass: value <= threshold,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            op: ">=",
            threshold,
            pass: value >= threshold,
        }
    }

    /// A boolean property; `value` is 1 when it holds.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            op: "==",
            threshold: 1.0,
            pass: ok,
        }
    }
}

/// One probe of an experiment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub label: String,
    pub inputs: Vec<(String, String)>,
    pub outputs: Vec<(String, f64)>,
    /// Non-numeric results such as verdicts.
    pub notes: Vec<(String, String)>,
    pub checks: Vec<Check>,
    /// Module error that ended the probe.
    pub error: Option<String>,
    pub runtime: Duration,
}

impl RunRecord {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            ..Default::default()
        }
    }

    pub fn input(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.inputs.push((key.to_string(), value.to_string()));
        self
    }

    pub fn output(&mut self, key: &str, value: f64) -> &mut Self {
        self.outputs.push((key.to_string(), value));
        self
    }

    pub fn note(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.notes.push((key.to_string(), value.to_string()));
        self
    }

    pub fn check(&mut self, c: Check) -> &mut Self {
        self.checks.push(c);
        self
    }

    pub fn fail(&mut self, e: impl ToString) -> &mut Self {
        self.error = Some(e.to_string());
        self
    }

    pub fn pass(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.pass)
    }
}

/// File produced by an experiment, relative to its output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub path: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub name: String,
    pub kind: String,
    pub config_echo: String,
    pub records: Vec<RunRecord>,
    pub files: Vec<OutputFile>,
}

impl RunReport {
    pub fn pass(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(RunRecord::pass)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment {} ({})", self.name, self.kind);
        s.push_str("-- config --\n");
        s.push_str(&self.config_echo);
        if !self.config_echo.ends_with('\n') {
            s.push('\n');
        }
        s.push_str("-- runs --\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "[{}] {} ({:.3} s)",
                if r.pass() { "PASS" } else { "FAIL" },
                r.label,
                r.runtime.as_secs_f64()
            );
            for (k, v) in &r.inputs {
                let _ = writeln!(s, "    in  {k} = {v}");
            }
            for (k, v) in &r.outputs {
                let _ = writeln!(s, "    out {k} = {}", fmt_f(*v));
            }
            for (k, v) in &r.notes {
                let _ = writeln!(s, "    res {k} = {v}");
            }
            for c in &r.checks {
                let _ = writeln!(
                    s,
                    "    {} {}: {} {} {}",
                    if c.pass { "ok  " } else { "FAIL" },
                    c.name,
                    fmt_f(c.value),
                    c.op,
                    fmt_f(c.threshold)
                );
            }
            if let Some(e) = &r.error {
                let _ = writeln!(s, "    error: {e}");
            }
        }
        s.push_str(if self.pass() { "PASS\n" } else { "FAIL\n" });
        s
    }

    /// Writes every file and `report.txt` under `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::with_capacity(self.files.len() + 1);
        for f in &self.files {
            let p = dir.join(&f.path);
            fs::write(&p, &f.contents)?;
            written.push(p);
        }
        let p = dir.join("report.txt");
        fs::write(&p, self.render())?;
        written.push(p);
        Ok(written)
    }
}

/// 17 significant digits.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

/// Comma-separated table with a header line.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(columns: &[&str]) -> Self {
        let mut text = columns.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|&v| fmt_f(v)).collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    /// Leading text cells followed by numbers.
    pub fn row_labeled(&mut self, labels: &[&str], values: &[f64]) {
        let cells: Vec<String> = labels
            .iter()
            .map(|s| s.to_string())
            .chain(values.iter().map(|&v| fmt_f(v)))
            .collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_file(self, path: impl Into<String>) -> OutputFile {
        OutputFile {
            path: path.into(),
            contents: self.text,
        }
    }
}
