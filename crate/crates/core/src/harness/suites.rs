//! Built-in acceptance suites. Each suite is a fixed list of config files
//! under `crates/core/suites/`; `determinism` reruns the others.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;
use std::time::{Duration, Instant};

use super::config::parse_config;
use super::experiments::run_experiment;
use super::report::RunReport;

macro_rules! cfg {
    ($name:literal) => {
        (
            $name,
            include_str!(concat!("../../suites/", $name, ".toml")),
        )
    };
}

pub struct Suite {
    pub name: &'static str,
    pub configs: &'static [(&'static str, &'static str)],
}

pub const DETERMINISM: &str = "determinism";

pub static SUITES: &[Suite] = &[
    Suite {
        name: "lyapunov_closed_forms",
        configs: &[cfg!("lyapunov_pure_nd"), cfg!("lyapunov_pure_dd_drift")],
    },
    Suite {
        name: "mean_shift",
        configs: &[cfg!("mean_shift")],
    },
    Suite {
        name: "critical_lengths",
        configs: &[cfg!("critical_lengths")],
    },
    Suite {
        name: "ode_oracle",
        configs: &[cfg!("ode_oracle")],
    },
    Suite {
        name: "speed_consistency",
        configs: &[cfg!("speed_consistency")],
    },
    Suite {
        name: "dichotomy_threshold",
        configs: &[
            cfg!("dichotomy_vanishing"),
            cfg!("dichotomy_spreading"),
            cfg!("dichotomy_sweep"),
        ],
    },
    Suite {
        name: "critical_mu",
        configs: &[cfg!("critical_mu")],
    },
    Suite {
        name: "double_front_symmetry",
        configs: &[cfg!("double_front_symmetry")],
    },
    Suite {
        name: "part_metric",
        configs: &[cfg!("part_metric")],
    },
    Suite {
        name: "comparison",
        configs: &[cfg!("comparison")],
    },
    Suite {
        name: "eps_bracketing",
        configs: &[cfg!("eps_bracketing")],
    },
    Suite {
        name: "uniform_convergence",
        configs: &[cfg!("uniform_convergence")],
    },
    Suite {
        name: "conservation_refinement",
        configs: &[
            cfg!("mass_balance"),
            cfg!("order_lyapunov"),
            cfg!("order_front_position"),
            cfg!("order_cstar"),
            cfg!("order_synthetic_front"),
        ],
    },
];

/// Names accepted by [`run_suite`], in run order.
pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|s| s.name).chain([DETERMINISM]).collect()
}

pub fn find(name: &str) -> Option<&'static Suite> {
    SUITES.iter().find(|s| s.name == name)
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub name: String,
    pub reports: Vec<RunReport>,
    /// Set for the determinism suite: files whose bytes differed.
    pub mismatches: Vec<String>,
    /// Extra lines for the summary.
    pub notes: Vec<String>,
    pub error: Option<String>,
    pub runtime: Duration,
}

impl SuiteOutcome {
    pub fn pass(&self) -> bool {
        self.error.is_none()
            && self.mismatches.is_empty()
            && self.reports.iter().all(RunReport::pass)
    }

    pub fn summary_line(&self) -> String {
        format!(
            "[{}] {} ({:.1} s)",
            if self.pass() { "PASS" } else { "FAIL" },
            self.name,
            self.runtime.as_secs_f64()
        )
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "suite {}", self.name);
        for r in &self.reports {
            let _ = writeln!(
                s,
                "  [{}] {}",
                if r.pass() { "PASS" } else { "FAIL" },
                r.name
            );
        }
        for m in &self.mismatches {
            let _ = writeln!(s, "  mismatch: {m}");
        }
        for n in &self.notes {
            let _ = writeln!(s, "  {n}");
        }
        if let Some(e) = &self.error {
            let _ = writeln!(s, "  error: {e}");
        }
        s.push_str(if self.pass() { "PASS\n" } else { "FAIL\n" });
        s
    }

    /// Writes each report under `dir/<suite>/<experiment>/`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let base = dir.join(&self.name);
        for r in &self.reports {
            r.write(&base.join(&r.name))?;
        }
        std::fs::create_dir_all(&base)?;
        std::fs::write(base.join("suite.txt"), self.render())
    }
}

fn run_configs(suite: &Suite) -> Result<Vec<RunReport>, String> {
    let mut out = Vec::with_capacity(suite.configs.len());
    for (name, text) in suite.configs {
        let cfg = parse_config(text).map_err(|e| format!("built-in config {name}: {e}"))?;
        out.push(run_experiment(&cfg));
    }
    Ok(out)
}

pub fn run_named(suite: &Suite) -> SuiteOutcome {
    let start = Instant::now();
    let (reports, error) = match run_configs(suite) {
        Ok(r) => (r, None),
        Err(e) => (Vec::new(), Some(e)),
    };
    SuiteOutcome {
        name: suite.name.to_string(),
        reports,
        mismatches: Vec::new(),
        notes: Vec::new(),
        error,
        runtime: start.elapsed(),
    }
}

/// CSV and JSONL contents keyed by `suite/experiment/file`.
fn output_map(outcomes: &[SuiteOutcome]) -> BTreeMap<String, &str> {
    let mut map = BTreeMap::new();
    for o in outcomes {
        for r in &o.reports {
            for f in &r.files {
                map.insert(
                    format!("{}/{}/{}", o.name, r.name, f.path),
                    f.contents.as_str(),
                );
            }
        }
    }
    map
}

/// Compares two runs of the same suites byte for byte.
pub fn compare_runs(
    first: &[SuiteOutcome],
    second: &[SuiteOutcome],
    elapsed: Duration,
) -> SuiteOutcome {
    let (a, b) = (output_map(first), output_map(second));
    let mut mismatches = Vec::new();
    for (k, v) in &a {
        match b.get(k) {
            Some(w) if w == v => {}
            Some(_) => mismatches.push(format!("{k}: contents differ")),
            None => mismatches.push(format!("{k}: missing in second run")),
        }
    }
    for k in b.keys().filter(|k| !a.contains_key(*k)) {
        mismatches.push(format!("{k}: missing in first run"));
    }
    let bytes: usize = a.values().map(|v| v.len()).sum();
    let error = if a.is_empty() {
        Some("no output files to compare".to_string())
    } else {
        None
    };
    SuiteOutcome {
        name: DETERMINISM.to_string(),
        reports: Vec::new(),
        mismatches,
        notes: vec![format!("compared {} files, {} bytes", a.len(), bytes)],
        error,
        runtime: elapsed,
    }
}

/// Runs every non-determinism suite twice and compares outputs.
pub fn run_determinism() -> SuiteOutcome {
    let start = Instant::now();
    let first: Vec<SuiteOutcome> = SUITES.iter().map(run_named).collect();
    let second: Vec<SuiteOutcome> = SUITES.iter().map(run_named).collect();
    compare_runs(&first, &second, start.elapsed())
}

/// Runs all suites; the determinism check reuses the first pass.
pub fn run_all(mut on_done: impl FnMut(&SuiteOutcome)) -> Vec<SuiteOutcome> {
    let start = Instant::now();
    let mut out = Vec::with_capacity(SUITES.len() + 1);
    for s in SUITES {
        let o = run_named(s);
        on_done(&o);
        out.push(o);
    }
    let second: Vec<SuiteOutcome> = SUITES.iter().map(run_named).collect();
    let det = compare_runs(&out, &second, start.elapsed());
    on_done(&det);
    out.push(det);
    out
}

/// Runs one suite by name.
pub fn run_suite(name: &str) -> Option<SuiteOutcome> {
    if name == DETERMINISM {
        return Some(run_determinism());
    }
    find(name).map(run_named)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_configs_parse() {
        for s in SUITES {
            for (name, text) in s.configs {
                let cfg = parse_config(text).unwrap_or_else(|e| panic!("{name}: {e}"));
                assert_eq!(cfg.name(), *name);
            }
        }
        assert_eq!(suite_names().len(), 14);
    }

    #[test]
    fn mismatch_is_detected() {
        let mut r = run_named(find("critical_lengths").unwrap());
        let a = vec![r.clone()];
        r.reports[0].files[0].contents.push('x');
        let d = compare_runs(&a, &[r], Duration::ZERO);
        assert!(!d.pass());
        assert_eq!(d.mismatches.len(), 1);
    }
}
