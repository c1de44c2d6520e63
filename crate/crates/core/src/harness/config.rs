//! Experiment configuration: TOML text (`key = value` lines under
//! `[section]` headers), strict schema, per-kind defaults.
//!
//! Unknown keys, duplicate keys and sections the experiment kind does not
//! read are rejected. After [`parse_config`] every field the experiment uses
//! is filled, so [`emit_config`] echoes the exact inputs of a run.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::forcing::{ReactionModel, TrigPolynomial};
use crate::freeboundary;
use crate::kinetics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LyapunovValidation,
    OdeOracle,
    Semiwave,
    FbSingle,
    FbDouble,
    SpeedConsistency,
    DichotomySweep,
    ConvergenceStudy,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::LyapunovValidation => "lyapunov_validation",
            Self::OdeOracle => "ode_oracle",
            Self::Semiwave => "semiwave",
            Self::FbSingle => "fb_single",
            Self::FbDouble => "fb_double",
            Self::SpeedConsistency => "speed_consistency",
            Self::DichotomySweep => "dichotomy_sweep",
            Self::ConvergenceStudy => "convergence_study",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySpec {
    /// Neumann at 0, Dirichlet at `l`.
    Nd,
    /// Dirichlet at both ends, drift `−γ v_x`.
    Dd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceMode {
    Relative,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileSpec {
    Cosine,
    /// Cosine corrected for the corner condition at the fronts.
    Compatible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedVerdict {
    Spreading,
    Vanishing,
}

impl ExpectedVerdict {
    pub fn verdict(self) -> freeboundary::Verdict {
        match self {
            Self::Spreading => freeboundary::Verdict::Spreading,
            Self::Vanishing => freeboundary::Verdict::Vanishing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `λ(0, l)` against `−π²/(4l²)`.
    Lyapunov,
    /// `h(T)` of a single-front run.
    FrontPosition,
    /// Semi-wave `c*`.
    Cstar,
    /// Least-squares slope of a sampled linear front.
    SyntheticFront,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub a: TrigPolynomial,
    pub b: TrigPolynomial,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let m = ReactionModel::fisher();
        Self { a: m.a, b: m.b }
    }
}

impl ModelSpec {
    pub fn model(&self) -> ReactionModel {
        ReactionModel::new(self.a.clone(), self.b.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSection {
    pub n: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub warmup: Option<f64>,
    pub lengths: Option<Vec<f64>>,
    pub boundary: Option<Vec<BoundarySpec>>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSection {
    pub dt: Option<f64>,
    /// Window `[0, horizon]` of the comparison.
    pub horizon: Option<f64>,
    pub sample_every: Option<f64>,
    pub spinup: Option<f64>,
    /// Quadrature tail of the closed-form reference.
    pub tail: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiwaveSection {
    pub x_len: Option<f64>,
    pub n: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub window_fraction: Option<f64>,
    pub sample_every: Option<f64>,
    pub snapshot_every: Option<f64>,
    pub spinup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontSection {
    pub n: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub h0: Option<f64>,
    /// Left front; single-front runs require 0.
    pub g0: Option<f64>,
    pub amplitude: Option<f64>,
    pub profile: Option<ProfileSpec>,
    pub sample_every: Option<f64>,
    pub snapshot_every: Option<f64>,
    /// Trailing fraction used for the front-speed fit.
    pub window_fraction: Option<f64>,
    pub stop_early: Option<bool>,
    /// Cap on horizon doubling for undetermined verdicts.
    pub max_horizon_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub quantity: Option<Quantity>,
    pub levels: Option<usize>,
    /// Base grid; level `k` uses `n·2^k` and `dt/2^k`.
    pub n: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub mu: Option<f64>,
    /// Interval length for `lyapunov`, `h0` for `front_position`.
    pub extent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub lyapunov: Option<f64>,
    pub lyapunov_mode: Option<ToleranceMode>,
    pub critical_length: Option<f64>,
    pub oracle: Option<f64>,
    pub attraction: Option<f64>,
    pub speed_rel: Option<f64>,
    pub part_metric_slack: Option<f64>,
    pub symmetry: Option<f64>,
    pub ordering: Option<f64>,
    pub uniform: Option<f64>,
    pub uniform_eps_fraction: Option<f64>,
    pub vanish_tol: Option<f64>,
    pub spread_tol: Option<f64>,
    pub plateau_tol: Option<f64>,
    pub slack: Option<f64>,
    pub classify_window: Option<f64>,
    pub min_horizon: Option<f64>,
    pub mass_ratio: Option<f64>,
    pub order_spatial: Option<f64>,
    pub order_speed: Option<f64>,
    pub mu_rel_width: Option<f64>,
    pub recheck_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub mu: Option<Vec<f64>>,
    /// `[lo, hi, count]`, expanded into `mu` on parse.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_logspace: Option<[f64; 3]>,
    pub eps: Option<Vec<f64>>,
    pub bracket: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expect: Option<ExpectedVerdict>,
    #[serde(default)]
    pub critical_lengths: bool,
    #[serde(default)]
    pub part_metric: bool,
    #[serde(default)]
    pub eps_bracket: bool,
    #[serde(default)]
    pub refinement: bool,
    #[serde(default)]
    pub comparison: bool,
    #[serde(default)]
    pub speed: bool,
    #[serde(default)]
    pub symmetry: bool,
    #[serde(default)]
    pub uniform_convergence: bool,
    #[serde(default)]
    pub mass_balance: bool,
    #[serde(default)]
    pub critical_mu: bool,
    #[serde(default)]
    pub mass_doubling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode: Option<OdeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semiwave: Option<SemiwaveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub front: Option<FrontSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSection>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub checks: Checks,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainError {
    pub field: String,
    pub constraint: String,
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Domain(Vec<DomainError>),
}

impl ConfigError {
    pub fn fields(&self) -> Vec<&str> {
        match self {
            Self::Syntax { .. } => Vec::new(),
            Self::Domain(errs) => errs.iter().map(|e| e.field.as_str()).collect(),
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Parses, validates and fills defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ConfigError::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let mut errs = Vec::new();
    cfg.fill_defaults(&mut errs);
    if errs.is_empty() {
        cfg.validate(&mut errs);
    }
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Domain(errs))
    }
}

/// TOML text of a parsed config; parsing it again yields the same config.
pub fn emit_config(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}

macro_rules! fill {
    ($s:expr, $d:expr; $($f:ident),* $(,)?) => {
        $( if $s.$f.is_none() { $s.$f = $d.$f.clone(); } )*
    };
}

fn err(errs: &mut Vec<DomainError>, field: &str, constraint: impl Into<String>) {
    errs.push(DomainError {
        field: field.to_string(),
        constraint: constraint.into(),
    });
}

fn positive(errs: &mut Vec<DomainError>, field: &str, v: Option<f64>) {
    if let Some(v) = v {
        if !(v > 0.0 && v.is_finite()) {
            err(errs, field, format!("must be positive and finite, got {v}"));
        }
    }
}

fn in_range(errs: &mut Vec<DomainError>, field: &str, v: Option<f64>, lo: f64, hi: f64) {
    if let Some(v) = v {
        if !(v > lo && v <= hi) {
            err(errs, field, format!("must lie in ({lo}, {hi}], got {v}"));
        }
    }
}

impl ExperimentConfig {
    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.kind.label())
    }

    pub fn model(&self) -> ReactionModel {
        self.model.model()
    }

    /// Sections the kind reads, given the enabled checks.
    fn uses(&self) -> [bool; 5] {
        use ExperimentKind::*;
        let k = self.kind;
        let c = &self.checks;
        let conv_semiwave = k == ConvergenceStudy
            && matches!(
                self.convergence.as_ref().and_then(|s| s.quantity),
                Some(Quantity::Cstar)
            );
        [
            k == LyapunovValidation,
            k == OdeOracle,
            k == Semiwave
                || k == SpeedConsistency
                || conv_semiwave
                || (matches!(k, FbSingle | FbDouble) && (c.speed || c.uniform_convergence)),
            matches!(k, FbSingle | FbDouble | SpeedConsistency | DichotomySweep),
            k == ConvergenceStudy,
        ]
    }

    fn fill_defaults(&mut self, errs: &mut Vec<DomainError>) {
        use ExperimentKind::*;
        let model = self.model();
        let mean = model.a.mean();
        let [lyap, ode, semi, front, conv] = self.uses();
        let names = ["lyapunov", "ode", "semiwave", "front", "convergence"];
        let present = [
            self.lyapunov.is_some(),
            self.ode.is_some(),
            self.semiwave.is_some(),
            self.front.is_some(),
            self.convergence.is_some(),
        ];
        for ((name, used), given) in names
            .iter()
            .zip([lyap, ode, semi, front, conv])
            .zip(present)
        {
            if given && !used {
                err(
                    errs,
                    name,
                    format!("section is not read by kind {}", self.kind.label()),
                );
            }
        }
        if !errs.is_empty() {
            return;
        }
        if self.name.is_none() {
            self.name = Some(self.kind.label().to_string());
        }
        let spinup = if mean > 0.0 {
            kinetics::default_spinup(&model)
        } else {
            100.0
        };
        if lyap {
            let s = self.lyapunov.get_or_insert_with(Default::default);
            let d = LyapunovSection {
                n: Some(400),
                dt: Some(0.005),
                horizon: Some(50.0),
                warmup: Some(5.0),
                lengths: Some(vec![2.0]),
                boundary: Some(vec![BoundarySpec::Nd]),
                gamma: Some(0.0),
            };
            fill!(s, d; n, dt, horizon, warmup, lengths, boundary, gamma);
        }
        if ode {
            let s = self.ode.get_or_insert_with(Default::default);
            let d = OdeSection {
                dt: Some(0.01),
                horizon: Some(50.0),
                sample_every: Some(0.5),
                spinup: Some(spinup),
                tail: Some(if mean > 0.0 {
                    kinetics::default_tail(&model)
                } else {
                    40.0
                }),
            };
            fill!(s, d; dt, horizon, sample_every, spinup, tail);
        }
        if semi {
            let s = self.semiwave.get_or_insert_with(Default::default);
            let d = SemiwaveSection {
                x_len: Some(40.0),
                n: Some(800),
                dt: Some(0.005),
                horizon: Some(100.0),
                window_fraction: Some(0.5),
                sample_every: Some(1.0),
                snapshot_every: Some(10.0),
                spinup: Some(spinup),
            };
            fill!(s, d; x_len, n, dt, horizon, window_fraction, sample_every, snapshot_every, spinup);
        }
        if front {
            let double = matches!(self.kind, FbDouble | DichotomySweep);
            let s = self.front.get_or_insert_with(Default::default);
            let d = FrontSection {
                n: Some(if self.kind == DichotomySweep {
                    200
                } else {
                    400
                }),
                dt: Some(0.01),
                horizon: Some(if self.kind == DichotomySweep {
                    100.0
                } else {
                    60.0
                }),
                h0: Some(if double { 1.0 } else { 2.0 }),
                g0: Some(if double { -1.0 } else { 0.0 }),
                amplitude: Some(1.0),
                profile: Some(ProfileSpec::Cosine),
                sample_every: Some(1.0),
                snapshot_every: Some(10.0),
                window_fraction: Some(0.5),
                stop_early: Some(self.kind == DichotomySweep),
                max_horizon_factor: Some(8.0),
            };
            fill!(s, d; n, dt, horizon, h0, g0, amplitude, profile, sample_every,
                snapshot_every, window_fraction, stop_early, max_horizon_factor);
        }
        if conv {
            let s = self.convergence.get_or_insert_with(Default::default);
            let q = *s.quantity.get_or_insert(Quantity::FrontPosition);
            let (n, dt, horizon, mu, extent) = match q {
                Quantity::Lyapunov => (50, 0.02, 50.0, 0.0, 2.0),
                Quantity::FrontPosition => (50, 0.04, 5.0, 2.0, 2.0),
                Quantity::Cstar => (200, 0.02, 100.0, 1.0, 40.0),
                Quantity::SyntheticFront => (16, 0.1, 10.0, 2.0, 1.0),
            };
            let d = ConvergenceSection {
                quantity: Some(q),
                levels: Some(3),
                n: Some(n),
                dt: Some(dt),
                horizon: Some(horizon),
                mu: Some(mu),
                extent: Some(extent),
            };
            fill!(s, d; levels, n, dt, horizon, mu, extent);
        }

        let t = &mut self.tolerances;
        let spread = if mean > 0.0 {
            freeboundary::default_spread_tol(&model).ok()
        } else {
            None
        };
        let d = Tolerances {
            lyapunov: Some(1e-3),
            lyapunov_mode: Some(ToleranceMode::Relative),
            critical_length: Some(1e-3),
            oracle: Some(1e-6),
            attraction: Some(1e-5),
            speed_rel: Some(0.02),
            part_metric_slack: Some(1e-6),
            symmetry: Some(1e-8),
            ordering: Some(1e-8),
            uniform: Some(1e-2),
            uniform_eps_fraction: Some(0.25),
            vanish_tol: Some(1e-4),
            spread_tol: Some(spread.unwrap_or(0.1)),
            plateau_tol: Some(1e-3),
            slack: Some(1.05),
            classify_window: Some(0.1),
            min_horizon: Some(5.0),
            mass_ratio: Some(2.0),
            order_spatial: Some(1.5),
            order_speed: Some(0.8),
            mu_rel_width: Some(0.05),
            recheck_factor: Some(0.1),
        };
        fill!(t, d; lyapunov, lyapunov_mode, critical_length, oracle, attraction, speed_rel,
            part_metric_slack, symmetry, ordering, uniform, uniform_eps_fraction, vanish_tol,
            spread_tol, plateau_tol, slack, classify_window, min_horizon, mass_ratio,
            order_spatial, order_speed, mu_rel_width, recheck_factor);

        let sw = &mut self.sweep;
        if let Some([lo, hi, count]) = sw.mu_logspace.take() {
            if sw.mu.is_some() {
                err(errs, "sweep.mu_logspace", "conflicts with sweep.mu");
            } else if !(lo > 0.0 && hi > lo && count >= 2.0 && count.fract() == 0.0) {
                err(
                    errs,
                    "sweep.mu_logspace",
                    "needs 0 < lo < hi and an integer count >= 2",
                );
            } else {
                let k = count as usize;
                let (a, b) = (lo.log10(), hi.log10());
                sw.mu = Some(
                    (0..k)
                        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (k - 1) as f64))
                        .collect(),
                );
            }
        }
        let default_mu: Vec<f64> = match self.kind {
            SpeedConsistency => vec![0.5, 1.0, 2.0, 5.0],
            DichotomySweep => (0..9)
                .map(|i| 10f64.powf(-2.0 + 3.0 * i as f64 / 8.0))
                .collect(),
            _ => vec![1.0],
        };
        if matches!(
            self.kind,
            Semiwave | FbSingle | FbDouble | SpeedConsistency | DichotomySweep
        ) {
            sw.mu.get_or_insert(default_mu);
        }
        if self.kind == Semiwave {
            sw.eps.get_or_insert_with(|| vec![0.1, 0.05, 0.01]);
        }
        if self.kind == DichotomySweep {
            sw.bracket.get_or_insert([0.01, 10.0]);
        }
    }

    fn validate(&self, errs: &mut Vec<DomainError>) {
        use ExperimentKind::*;
        let name = self.name();
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            err(errs, "name", "must be non-empty and use only [A-Za-z0-9_-]");
        }
        let model = self.model();
        let report = model.check_hypotheses();
        // the linear problem needs no hypotheses unless critical lengths are sought
        let needs_hypotheses = self.kind != LyapunovValidation || self.checks.critical_lengths;
        if needs_hypotheses && !report.ok() {
            err(
                errs,
                "model",
                format!(
                    "needs inf b > 0 and mean(a) > 0 (inf b = {}, mean a = {})",
                    report.inf_b_analytic, report.mean_a
                ),
            );
        }
        let mean = model.a.mean();

        if let Some(s) = &self.lyapunov {
            if s.n.unwrap() < 16 {
                err(errs, "lyapunov.n", "must be at least 16");
            }
            positive(errs, "lyapunov.dt", s.dt);
            positive(errs, "lyapunov.horizon", s.horizon);
            positive(errs, "lyapunov.warmup", s.warmup);
            if let (Some(h), Some(w)) = (s.horizon, s.warmup) {
                if h <= w + 2.0 {
                    err(errs, "lyapunov.horizon", "must exceed warmup + 2");
                }
            }
            if s.gamma.unwrap() < 0.0 || !s.gamma.unwrap().is_finite() {
                err(errs, "lyapunov.gamma", "must be nonnegative");
            }
            let lengths = s.lengths.as_ref().unwrap();
            if lengths.is_empty() && !self.checks.critical_lengths {
                err(errs, "lyapunov.lengths", "must be non-empty");
            }
            for l in lengths {
                positive(errs, "lyapunov.lengths", Some(*l));
            }
            if s.boundary.as_ref().unwrap().is_empty() && !lengths.is_empty() {
                err(errs, "lyapunov.boundary", "must be non-empty");
            }
        }
        if let Some(s) = &self.ode {
            positive(errs, "ode.dt", s.dt);
            positive(errs, "ode.horizon", s.horizon);
            positive(errs, "ode.sample_every", s.sample_every);
            positive(errs, "ode.spinup", s.spinup);
            positive(errs, "ode.tail", s.tail);
        }
        if let Some(s) = &self.semiwave {
            positive(errs, "semiwave.x_len", s.x_len);
            if s.n.unwrap() < 16 {
                err(errs, "semiwave.n", "must be at least 16");
            }
            positive(errs, "semiwave.dt", s.dt);
            positive(errs, "semiwave.horizon", s.horizon);
            in_range(
                errs,
                "semiwave.window_fraction",
                s.window_fraction,
                0.0,
                0.5,
            );
            positive(errs, "semiwave.sample_every", s.sample_every);
            positive(errs, "semiwave.snapshot_every", s.snapshot_every);
            positive(errs, "semiwave.spinup", s.spinup);
        }
        if let Some(s) = &self.front {
            if s.n.unwrap() < 16 {
                err(errs, "front.n", "must be at least 16");
            }
            positive(errs, "front.dt", s.dt);
            positive(errs, "front.horizon", s.horizon);
            positive(errs, "front.h0", s.h0);
            positive(errs, "front.amplitude", s.amplitude);
            positive(errs, "front.sample_every", s.sample_every);
            positive(errs, "front.snapshot_every", s.snapshot_every);
            in_range(errs, "front.window_fraction", s.window_fraction, 0.0, 1.0);
            if s.max_horizon_factor.unwrap() < 1.0 {
                err(errs, "front.max_horizon_factor", "must be at least 1");
            }
            let (g0, h0) = (s.g0.unwrap(), s.h0.unwrap());
            let double = matches!(self.kind, FbDouble | DichotomySweep);
            if !double && g0 != 0.0 {
                err(errs, "front.g0", "single-front runs have g0 = 0");
            }
            if double && !(g0 < h0 && g0.is_finite()) {
                err(errs, "front.g0", "must be finite and below h0");
            }
        }
        if let Some(s) = &self.convergence {
            if s.levels.unwrap() < 3 {
                err(errs, "convergence.levels", "must be at least 3");
            }
            if s.levels.unwrap() > 6 {
                err(errs, "convergence.levels", "must be at most 6");
            }
            if s.n.unwrap() < 16 {
                err(errs, "convergence.n", "must be at least 16");
            }
            positive(errs, "convergence.dt", s.dt);
            positive(errs, "convergence.horizon", s.horizon);
            positive(errs, "convergence.extent", s.extent);
            if s.quantity != Some(Quantity::Lyapunov) {
                positive(errs, "convergence.mu", s.mu);
            }
        }

        let t = &self.tolerances;
        for (field, v) in [
            ("tolerances.lyapunov", t.lyapunov),
            ("tolerances.critical_length", t.critical_length),
            ("tolerances.oracle", t.oracle),
            ("tolerances.attraction", t.attraction),
            ("tolerances.speed_rel", t.speed_rel),
            ("tolerances.part_metric_slack", t.part_metric_slack),
            ("tolerances.symmetry", t.symmetry),
            ("tolerances.ordering", t.ordering),
            ("tolerances.uniform", t.uniform),
            ("tolerances.uniform_eps_fraction", t.uniform_eps_fraction),
            ("tolerances.vanish_tol", t.vanish_tol),
            ("tolerances.plateau_tol", t.plateau_tol),
            ("tolerances.classify_window", t.classify_window),
            ("tolerances.mu_rel_width", t.mu_rel_width),
            ("tolerances.recheck_factor", t.recheck_factor),
        ] {
            in_range(errs, field, v, 0.0, 0.5);
        }
        positive(errs, "tolerances.spread_tol", t.spread_tol);
        positive(errs, "tolerances.min_horizon", t.min_horizon);
        in_range(errs, "tolerances.slack", t.slack, 1.0, 2.0);
        if t.slack == Some(1.0) {
            err(errs, "tolerances.slack", "must exceed 1");
        }
        in_range(errs, "tolerances.mass_ratio", t.mass_ratio, 0.0, 16.0);
        in_range(errs, "tolerances.order_spatial", t.order_spatial, 0.0, 8.0);
        in_range(errs, "tolerances.order_speed", t.order_speed, 0.0, 8.0);

        if let Some(mu) = &self.sweep.mu {
            if mu.is_empty() {
                err(errs, "sweep.mu", "must be non-empty");
            }
            for &m in mu {
                positive(errs, "sweep.mu", Some(m));
            }
        }
        if let Some(eps) = &self.sweep.eps {
            for &e in eps {
                if !(e > 0.0 && e < mean) {
                    err(
                        errs,
                        "sweep.eps",
                        format!("entries must lie in (0, mean(a)), got {e}"),
                    );
                }
            }
            if self.checks.eps_bracket && eps.is_empty() {
                err(
                    errs,
                    "sweep.eps",
                    "must be non-empty when checks.eps_bracket is set",
                );
            }
        }
        if let Some([lo, hi]) = self.sweep.bracket {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                err(errs, "sweep.bracket", "needs 0 < lo < hi");
            }
        }

        let c = &self.checks;
        let allowed: &[(&str, bool)] = &[
            ("critical_lengths", c.critical_lengths),
            ("part_metric", c.part_metric),
            ("eps_bracket", c.eps_bracket),
            ("refinement", c.refinement),
            ("comparison", c.comparison),
            ("speed", c.speed),
            ("symmetry", c.symmetry),
            ("uniform_convergence", c.uniform_convergence),
            ("mass_balance", c.mass_balance),
            ("critical_mu", c.critical_mu),
            ("mass_doubling", c.mass_doubling),
            ("expect", c.expect.is_some()),
        ];
        let applies = |check: &str| -> bool {
            match self.kind {
                LyapunovValidation => check == "critical_lengths",
                Semiwave => matches!(check, "part_metric" | "eps_bracket"),
                FbSingle => matches!(
                    check,
                    "expect"
                        | "refinement"
                        | "comparison"
                        | "speed"
                        | "uniform_convergence"
                        | "mass_balance"
                ),
                FbDouble => matches!(
                    check,
                    "expect" | "refinement" | "speed" | "symmetry" | "mass_balance"
                ),
                DichotomySweep => matches!(check, "critical_mu" | "mass_doubling"),
                OdeOracle | SpeedConsistency | ConvergenceStudy => false,
            }
        };
        for (check, on) in allowed {
            if *on && !applies(check) {
                err(
                    errs,
                    &format!("checks.{check}"),
                    format!("not available for kind {}", self.kind.label()),
                );
            }
        }
        if self.kind == DichotomySweep {
            let f = self.front.as_ref().unwrap();
            if f.profile == Some(ProfileSpec::Compatible) {
                err(
                    errs,
                    "front.profile",
                    "dichotomy sweeps need mu-independent data (cosine)",
                );
            }
            let lstar = std::f64::consts::PI / mean.max(1e-300).sqrt();
            if c.critical_mu && f.h0.unwrap() - f.g0.unwrap() >= lstar {
                err(
                    errs,
                    "front.h0",
                    format!("critical_mu needs h0 - g0 below the critical length {lstar}"),
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_semiwave_config_fills_defaults() {
        let cfg = parse_config("kind = \"semiwave\"\n").unwrap();
        let s = cfg.semiwave.as_ref().unwrap();
        assert_eq!(s.n, Some(800));
        assert_eq!(s.x_len, Some(40.0));
        assert_eq!(cfg.sweep.mu, Some(vec![1.0]));
        assert_eq!(cfg.tolerances.vanish_tol, Some(1e-4));
        assert!((cfg.tolerances.spread_tol.unwrap() - 0.1).abs() < 1e-12);
        assert!(cfg.front.is_none());
        let echo = emit_config(&cfg);
        assert!(echo.contains("x_len = 40.0"), "{echo}");
        assert_eq!(parse_config(&echo).unwrap(), cfg);
    }

    #[test]
    fn negative_dt_is_a_domain_error() {
        let e = parse_config("kind = \"semiwave\"\n[semiwave]\ndt = -0.1\n").unwrap_err();
        assert_eq!(e.fields(), vec!["semiwave.dt"]);
    }

    #[test]
    fn duplicate_key_is_rejected_with_position() {
        let e = parse_config("kind = \"semiwave\"\n[semiwave]\nn = 10\nn = 20\n").unwrap_err();
        match e {
            ConfigError::Syntax { line, .. } => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_and_section_are_rejected() {
        assert!(matches!(
            parse_config("kind = \"semiwave\"\n[semiwave]\nbogus = 1\n"),
            Err(ConfigError::Syntax { line: 3, .. })
        ));
        let e = parse_config("kind = \"ode_oracle\"\n[front]\nn = 100\n").unwrap_err();
        assert_eq!(e.fields(), vec!["front"]);
        let e = parse_config("kind = \"ode_oracle\"\n[checks]\nspeed = true\n").unwrap_err();
        assert_eq!(e.fields(), vec!["checks.speed"]);
    }

    #[test]
    fn syntax_error_position() {
        match parse_config("kind = \"semiwave\"\n[semiwave\n").unwrap_err() {
            ConfigError::Syntax { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column >= 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn logspace_expands() {
        let cfg =
            parse_config("kind = \"dichotomy_sweep\"\n[sweep]\nmu_logspace = [0.01, 10.0, 4]\n")
                .unwrap();
        let mu = cfg.sweep.mu.as_ref().unwrap();
        assert_eq!(mu.len(), 4);
        assert!((mu[0] - 0.01).abs() < 1e-15 && (mu[3] - 10.0).abs() < 1e-12);
        assert!(cfg.sweep.mu_logspace.is_none());
        assert_eq!(parse_config(&emit_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn model_text_and_hypotheses() {
        let cfg = parse_config(
            "kind = \"ode_oracle\"\n[model]\na = \"1 | 0.5:1:0, 0.3:sqrt2:0\"\nb = \"1\"\n",
        )
        .unwrap();
        assert_eq!(cfg.model().a.modes().len(), 2);
        let e = parse_config("kind = \"ode_oracle\"\n[model]\na = \"1\"\nb = \"0 | 1:1:0\"\n")
            .unwrap_err();
        assert_eq!(e.fields(), vec!["model"]);
    }

    #[test]
    fn critical_mu_precondition_checked() {
        let e = parse_config(
            "kind = \"dichotomy_sweep\"\n[front]\nh0 = 2.0\ng0 = -2.0\n[checks]\ncritical_mu = true\n",
        )
        .unwrap_err();
        assert_eq!(e.fields(), vec!["front.h0"]);
    }
}
