//! Experiment drivers. Each returns a [`RunReport`] holding records and
//! file contents; nothing here touches the filesystem.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::*;
use super::report::{Check, Csv, OutputFile, RunRecord, RunReport};
use crate::forcing::ReactionModel;
use crate::freeboundary::{
    self, ClassificationOutcome, ClassifyOptions, CriticalMuOptions, FrontMode, FrontParams,
    FrontTrajectory, Side, StopReason, StopRule, Verdict,
};
use crate::kinetics;
use crate::semiwave::{self, SemiWaveParams, SemiWaveResult};
use crate::spectral::{self, BoundaryKind, LinearCoefficient, LyapunovParams};
use crate::speed::fit_line;

/// Runs `body` and stores its runtime and any error in the record.
fn timed(label: String, body: impl FnOnce(&mut RunRecord) -> Result<(), String>) -> RunRecord {
    let start = Instant::now();
    let mut rec = RunRecord::new(label);
    if let Err(e) = body(&mut rec) {
        rec.fail(e);
    }
    rec.runtime = start.elapsed();
    rec
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Spreading => "spreading",
        Verdict::Vanishing => "vanishing",
        Verdict::Undetermined => "undetermined",
    }
}

/// Numerical `(l*, L*)` for the linearization at zero.
fn critical_lengths(m: &ReactionModel) -> Result<(f64, f64), String> {
    let c = LinearCoefficient::new(m.a.clone());
    let root = m.a.mean().sqrt();
    let p = LyapunovParams {
        n: 200,
        ..Default::default()
    };
    let (nd, dd) = rayon::join(
        || {
            spectral::critical_length(
                &c,
                BoundaryKind::NeumannDirichlet,
                (0.5 / root, 5.0 / root),
                &p,
            )
        },
        || {
            spectral::critical_length(
                &c,
                BoundaryKind::DirichletDrift { gamma: 0.0 },
                (1.0 / root, 10.0 / root),
                &p,
            )
        },
    );
    Ok((
        nd.map_err(|e| e.to_string())?.length,
        dd.map_err(|e| e.to_string())?.length,
    ))
}

fn classify_options(t: &Tolerances) -> ClassifyOptions {
    ClassifyOptions {
        vanish_tol: t.vanish_tol.unwrap(),
        spread_tol: t.spread_tol.unwrap(),
        plateau_tol: t.plateau_tol.unwrap(),
        slack: t.slack.unwrap(),
        window_fraction: t.classify_window.unwrap(),
        min_horizon: t.min_horizon.unwrap(),
    }
}

fn semiwave_params(s: &SemiwaveSection, attraction: f64) -> SemiWaveParams {
    SemiWaveParams {
        x_len: s.x_len.unwrap(),
        n: s.n.unwrap(),
        dt: s.dt.unwrap(),
        horizon: s.horizon.unwrap(),
        window_fraction: s.window_fraction.unwrap(),
        attraction_tol: attraction,
        sample_every: s.sample_every.unwrap(),
        spinup: s.spinup,
    }
}

/// Resolved front-run settings.
#[derive(Debug, Clone, Copy)]
struct FrontRun {
    mode: FrontMode,
    n: usize,
    dt: f64,
    horizon: f64,
    h0: f64,
    g0: f64,
    amplitude: f64,
    profile: ProfileSpec,
    sample_every: f64,
    stop: Option<StopRule>,
}

impl FrontRun {
    fn from_section(s: &FrontSection, mode: FrontMode) -> Self {
        Self {
            mode,
            n: s.n.unwrap(),
            dt: s.dt.unwrap(),
            horizon: s.horizon.unwrap(),
            h0: s.h0.unwrap(),
            g0: s.g0.unwrap(),
            amplitude: s.amplitude.unwrap(),
            profile: s.profile.unwrap(),
            sample_every: s.sample_every.unwrap(),
            stop: None,
        }
    }

    fn refined(self) -> Self {
        Self {
            n: 2 * self.n,
            dt: 0.5 * self.dt,
            ..self
        }
    }

    fn params(&self) -> FrontParams {
        FrontParams {
            n: self.n,
            dt: self.dt,
            horizon: self.horizon,
            sample_every: self.sample_every,
            stop: self.stop,
        }
    }

    fn evolve(&self, m: &ReactionModel, mu: f64) -> Result<FrontTrajectory, String> {
        let (a, g0, h0) = (self.amplitude, self.g0, self.h0);
        let p = self.params();
        let r = match (self.mode, self.profile) {
            (FrontMode::Single, ProfileSpec::Cosine) => {
                freeboundary::fb_evolve_single(m, mu, &freeboundary::cosine_single(a, h0), h0, &p)
            }
            (FrontMode::Single, ProfileSpec::Compatible) => freeboundary::fb_evolve_single(
                m,
                mu,
                &freeboundary::compatible_single(a, h0, mu),
                h0,
                &p,
            ),
            (FrontMode::Double, ProfileSpec::Cosine) => freeboundary::fb_evolve_double(
                m,
                mu,
                &freeboundary::cosine_double(a, g0, h0),
                g0,
                h0,
                &p,
            ),
            (FrontMode::Double, ProfileSpec::Compatible) => freeboundary::fb_evolve_double(
                m,
                mu,
                &freeboundary::compatible_double(a, g0, h0, mu),
                g0,
                h0,
                &p,
            ),
        };
        r.map_err(|e| e.to_string())
    }
}

#[derive(Serialize)]
struct ClassificationRecord<'a> {
    experiment: &'a str,
    label: &'a str,
    mode: FrontMode,
    mu: f64,
    h0: f64,
    g0: f64,
    n: usize,
    dt: f64,
    horizon: f64,
    amplitude: f64,
    stop_reason: Option<StopReason>,
    verdict: Verdict,
    outcome: &'a ClassificationOutcome,
}

fn jsonl_line<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("record serializes");
    s.push('\n');
    s
}

/// Trajectory CSV at the snapshot cadence.
fn trajectory_csv(traj: &FrontTrajectory, sample_every: f64, path: String) -> OutputFile {
    let stride = ((sample_every / traj.dt).round() as usize).max(1);
    let mut csv = Csv::new(&["t", "h", "g", "h_dot", "mass", "u_sup", "u_at_0"]);
    let last = traj.steps.len() - 1;
    for (i, r) in traj.steps.iter().enumerate() {
        if i % stride == 0 || i == last {
            csv.row(&[r.t, r.h, r.g, r.h_dot, r.mass, r.u_sup, r.u_at_0]);
        }
    }
    csv.into_file(path)
}

/// Profile CSV `(t, x, u)` for snapshots at multiples of `every`.
fn front_profile_csv(traj: &FrontTrajectory, every: f64, path: String) -> OutputFile {
    let mut csv = Csv::new(&["t", "x", "u"]);
    let last = traj.snapshots.len() - 1;
    for (k, s) in traj.snapshots.iter().enumerate() {
        let phase = s.t / every;
        if (phase - phase.round()).abs() > 1e-6 && k != last {
            continue;
        }
        for (j, &v) in s.v.iter().enumerate() {
            csv.row(&[s.t, s.x(j), v]);
        }
    }
    csv.into_file(path)
}

pub fn lyapunov_validation(cfg: &ExperimentConfig) -> RunReport {
    let m = cfg.model();
    let s = cfg.lyapunov.as_ref().unwrap();
    let t = &cfg.tolerances;
    let tol = t.lyapunov.unwrap();
    let mode = t.lyapunov_mode.unwrap();
    let params = LyapunovParams {
        n: s.n.unwrap(),
        horizon: s.horizon.unwrap(),
        dt: s.dt.unwrap(),
        warmup: s.warmup.unwrap(),
        ..Default::default()
    };
    let coef = LinearCoefficient::new(m.a.clone());
    let mean = m.a.mean();
    let gamma = s.gamma.unwrap();
    let mut cases = Vec::new();
    for b in s.boundary.as_ref().unwrap() {
        for &l in s.lengths.as_ref().unwrap() {
            let kind = match b {
                BoundarySpec::Nd => BoundaryKind::NeumannDirichlet,
                BoundarySpec::Dd => BoundaryKind::DirichletDrift { gamma },
            };
            cases.push((kind, l));
        }
    }
    let results: Vec<(RunRecord, Option<[f64; 5]>)> = cases
        .par_iter()
        .map(|&(kind, l)| {
            let mut row = None;
            let rec = timed(
                format!("{} l={l} gamma={}", kind.label(), kind.gamma()),
                |rec| {
                    rec.input("boundary", kind.label())
                        .input("length", l)
                        .input("gamma", kind.gamma());
                    let est =
                        spectral::lyapunov(&coef, kind, l, &params).map_err(|e| e.to_string())?;
                    let exact = mean + kind.pure_diffusion_exponent(l);
                    let e = (est.value - exact).abs();
                    rec.output("lambda", est.value)
                        .output("exact", exact)
                        .output("abs_error", e)
                        .output("raw_average", est.raw_average);
                    let bound = match mode {
                        ToleranceMode::Relative => tol * exact.abs(),
                        ToleranceMode::Absolute => tol,
                    };
                    rec.check(Check::below("abs_error", e, bound));
                    row = Some([l, kind.gamma(), est.value, exact, e]);
                    Ok(())
                },
            );
            (rec, row)
        })
        .collect();
    let mut csv = Csv::new(&[
        "boundary",
        "length",
        "gamma",
        "lambda",
        "exact",
        "abs_error",
    ]);
    let mut records = Vec::new();
    for ((kind, _), (rec, row)) in cases.iter().zip(results) {
        if let Some(r) = row {
            csv.row_labeled(&[kind.label()], &r);
        }
        records.push(rec);
    }
    let mut files = vec![csv.into_file("lyapunov.csv")];

    if cfg.checks.critical_lengths {
        let p = LyapunovParams {
            n: s.n.unwrap(),
            horizon: s.horizon.unwrap(),
            dt: s.dt.unwrap(),
            warmup: s.warmup.unwrap(),
            ..Default::default()
        };
        let root = mean.sqrt();
        let kinds = [
            (
                BoundaryKind::NeumannDirichlet,
                FRAC_PI_2 / root,
                (0.5 / root, 5.0 / root),
            ),
            (
                BoundaryKind::DirichletDrift { gamma: 0.0 },
                PI / root,
                (1.0 / root, 10.0 / root),
            ),
        ];
        let out: Vec<(RunRecord, Option<[f64; 4]>)> = kinds
            .par_iter()
            .map(|&(kind, exact, bracket)| {
                let mut row = None;
                let rec = timed(format!("critical length {}", kind.label()), |rec| {
                    rec.input("boundary", kind.label())
                        .input("bracket", format!("{:?}", bracket));
                    let c = spectral::critical_length(&coef, kind, bracket, &p)
                        .map_err(|e| e.to_string())?;
                    let e = (c.length - exact).abs();
                    rec.output("length", c.length)
                        .output("exact", exact)
                        .output("lambda_at_length", c.lambda)
                        .output("probes", c.probes as f64);
                    rec.check(Check::below("abs_error", e, t.critical_length.unwrap()));
                    rec.check(Check::at_most(
                        "probes",
                        c.probes as f64,
                        spectral::MAX_CRITICAL_PROBES as f64,
                    ));
                    row = Some([c.length, exact, e, c.probes as f64]);
                    Ok(())
                });
                (rec, row)
            })
            .collect();
        let mut csv = Csv::new(&["boundary", "length", "exact", "abs_error", "probes"]);
        for ((kind, _, _), (rec, row)) in kinds.iter().zip(out) {
            if let Some(r) = row {
                csv.row_labeled(&[kind.label()], &r);
            }
            records.push(rec);
        }
        files.push(csv.into_file("critical_lengths.csv"));
    }
    finish(cfg, records, files)
}

pub fn ode_oracle(cfg: &ExperimentConfig) -> RunReport {
    let m = cfg.model();
    let s = cfg.ode.as_ref().unwrap();
    let mut csv = Csv::new(&["t", "v_star", "oracle", "diff"]);
    let rec = timed("ap_positive_solution vs closed form".into(), |rec| {
        let dt = s.dt.unwrap();
        let horizon = s.horizon.unwrap();
        rec.input("dt", dt).input("window", horizon);
        let traj = kinetics::ap_positive_solution(&m, s.spinup.unwrap(), horizon, dt)
            .map_err(|e| e.to_string())?;
        let stride = ((s.sample_every.unwrap() / dt).round() as usize).max(1);
        let samples: Vec<(f64, f64)> = traj.iter().step_by(stride).collect();
        let oracle: Vec<Result<kinetics::OracleValue, String>> = samples
            .par_iter()
            .map(|&(t, _)| {
                kinetics::logistic_oracle(&m, t, s.tail.unwrap()).map_err(|e| e.to_string())
            })
            .collect();
        let mut sup: f64 = 0.0;
        let mut bound: f64 = 0.0;
        for (&(t, v), o) in samples.iter().zip(oracle) {
            let o = o?;
            let d = (v - o.value).abs();
            sup = sup.max(d);
            bound = bound.max(o.value_error_bound);
            csv.row(&[t, v, o.value, d]);
        }
        rec.output("sup_diff", sup)
            .output("oracle_error_bound", bound)
            .output("samples", samples.len() as f64);
        rec.check(Check::below(
            "sup_diff",
            sup,
            cfg.tolerances.oracle.unwrap(),
        ));
        Ok(())
    });
    finish(cfg, vec![rec], vec![csv.into_file("ode_oracle.csv")])
}

fn semiwave_files(i: usize, r: &SemiWaveResult, snapshot_every: f64) -> Vec<OutputFile> {
    let mut flux = Csv::new(&["t", "flux0", "mu_times_flux0"]);
    let stride = ((0.1 / r.params.dt).round() as usize).max(1);
    for (k, &(t, q)) in r.flux_history.iter().enumerate() {
        if k % stride == 0 {
            flux.row(&[t, q, r.mu * q]);
        }
    }
    let mut prof = Csv::new(&["t", "x", "u"]);
    for s in &r.profile_window {
        let phase = s.t / snapshot_every;
        if (phase - phase.round()).abs() > 1e-6 {
            continue;
        }
        for (j, &v) in s.values.iter().enumerate() {
            prof.row(&[s.t, s.x(j), v]);
        }
    }
    let mut pm = Csv::new(&["t", "rho", "gap"]);
    for (&(t, rho), &(_, gap)) in r
        .diagnostics
        .part_metric_history
        .iter()
        .zip(&r.diagnostics.gap_history)
    {
        pm.row(&[t, rho, gap]);
    }
    vec![
        flux.into_file(format!("flux_{i:02}.csv")),
        prof.into_file(format!("profile_{i:02}.csv")),
        pm.into_file(format!("part_metric_{i:02}.csv")),
    ]
}

/// Nonincreasing within `slack`, strictly decreasing while above `floor`.
fn part_metric_checks(rec: &mut RunRecord, hist: &[(f64, f64)], slack: f64) {
    let floor = 1e-9;
    let mut worst_rise: f64 = f64::NEG_INFINITY;
    let mut strict = true;
    for w in hist.windows(2) {
        let (a, b) = (w[0].1, w[1].1);
        worst_rise = worst_rise.max(b - a);
        if a > floor && !(b < a) {
            strict = false;
        }
    }
    let first = hist.first().map_or(0.0, |p| p.1);
    let last = hist.last().map_or(0.0, |p| p.1);
    rec.output("rho_first", first)
        .output("rho_last", last)
        .output("rho_max_rise", worst_rise);
    rec.check(Check::at_most("rho_max_rise", worst_rise, slack));
    rec.check(Check::holds(
        "rho_strictly_decreasing_in_transient",
        strict && first > floor,
    ));
    rec.check(Check::below("rho_last_over_first", last / first, 1.0));
}

pub fn semiwave_experiment(cfg: &ExperimentConfig) -> RunReport {
    let m = cfg.model();
    let s = cfg.semiwave.as_ref().unwrap();
    let t = &cfg.tolerances;
    let p = semiwave_params(s, t.attraction.unwrap());
    let mus = cfg.sweep.mu.clone().unwrap();
    let eps = cfg.sweep.eps.clone().unwrap_or_default();
    let out: Vec<(RunRecord, Vec<OutputFile>, Option<[f64; 6]>)> = mus
        .par_iter()
        .enumerate()
        .map(|(i, &mu)| {
            let mut files = Vec::new();
            let mut row = None;
            let rec = timed(format!("mu={mu}"), |rec| {
                rec.input("mu", mu)
                    .input("x_len", p.x_len)
                    .input("n", p.n)
                    .input("dt", p.dt);
                let r = semiwave::semiwave_evolve(&m, mu, &p).map_err(|e| e.to_string())?;
                let d = &r.diagnostics;
                rec.output("cstar", r.cstar)
                    .output("cstar_window_residual", r.speed.residual)
                    .output("attraction_gap", r.attraction_gap)
                    .output("far_field_error", d.far_field_error)
                    .output("midfield_error", d.midfield_error)
                    .output("order_excess", d.order_excess)
                    .output("min_forward_difference", d.min_forward_difference);
                rec.check(Check::at_most(
                    "attraction_gap",
                    r.attraction_gap,
                    t.attraction.unwrap(),
                ));
                if cfg.checks.part_metric {
                    let slack = t.part_metric_slack.unwrap();
                    rec.check(Check::at_most("order_excess", d.order_excess, slack));
                    part_metric_checks(rec, &d.part_metric_history, slack);
                }
                if cfg.checks.eps_bracket {
                    let mut sorted = eps.clone();
                    sorted.sort_by(|a, b| b.total_cmp(a));
                    let brackets: Vec<Result<semiwave::EpsBracket, String>> = sorted
                        .par_iter()
                        .map(|&e| semiwave::eps_bracket(&m, mu, e, &p).map_err(|e| e.to_string()))
                        .collect();
                    let mut csv = Csv::new(&["eps", "c_lower", "cstar", "c_upper", "gap"]);
                    let mut prev_gap = f64::INFINITY;
                    for b in brackets {
                        let b = b?;
                        rec.output(&format!("gap_eps_{}", b.eps), b.gap());
                        rec.check(Check::holds(
                            format!("c_lower <= cstar <= c_upper at eps={}", b.eps),
                            b.c_lower <= r.cstar && r.cstar <= b.c_upper,
                        ));
                        rec.check(Check::below(
                            format!("gap shrinks at eps={}", b.eps),
                            b.gap(),
                            prev_gap,
                        ));
                        prev_gap = b.gap();
                        csv.row(&[b.eps, b.c_lower, r.cstar, b.c_upper, b.gap()]);
                    }
                    files.push(csv.into_file(format!("eps_{i:02}.csv")));
                }
                row = Some([
                    mu,
                    r.cstar,
                    r.speed.residual,
                    r.attraction_gap,
                    d.far_field_error,
                    d.order_excess,
                ]);
                files.extend(semiwave_files(i, &r, s.snapshot_every.unwrap()));
                Ok(())
            });
            (rec, files, row)
        })
        .collect();
    let mut summary = Csv::new(&[
        "mu",
        "cstar",
        "residual",
        "attraction_gap",
        "far_field_error",
        "order_excess",
    ]);
    let mut records = Vec::new();
    let mut files = Vec::new();
    for (rec, f, row) in out {
        if let Some(r) = row {
            summary.row(&r);
        }
        records.push(rec);
        files.extend(f);
    }
    files.insert(0, summary.into_file("semiwave.csv"));
    finish(cfg, records, files)
}

/// `max_{x ≤ reach} |u(t,x) − V*(t)|` on the snapshot nearest to `t`.
fn behind_front_error(traj: &FrontTrajectory, t: f64, reach: f64, v_star: f64) -> f64 {
    let s = traj.snapshot_near(t);
    (0..s.v.len())
        .filter(|&j| s.x(j) <= reach)
        .map(|j| (s.v[j] - v_star).abs())
        .fold(0.0, f64::max)
}

/// Profile ordering of run `lo` below run `hi` at shared snapshot times.
fn ordering_excess(lo: &FrontTrajectory, hi: &FrontTrajectory) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for a in &lo.snapshots {
        let b = hi.snapshot_near(a.t);
        if (b.t - a.t).abs() > 1e-9 {
            continue;
        }
        for j in 0..a.v.len() {
            let x = a.x(j);
            worst = worst.max(a.v[j] - b.value_at(x));
        }
    }
    worst
}

pub fn front_experiment(cfg: &ExperimentConfig, mode: FrontMode) -> RunReport {
    let m = cfg.model();
    let fs = cfg.front.as_ref().unwrap();
    let t = &cfg.tolerances;
    let c = &cfg.checks;
    let copts = classify_options(t);
    let base = FrontRun::from_section(fs, mode);
    let mus = cfg.sweep.mu.clone().unwrap();
    let lengths = critical_lengths(&m);
    let v_star_ref = if c.uniform_convergence || c.speed {
        Some(kinetics::ap_positive_solution(
            &m,
            kinetics::default_spinup(&m),
            base.horizon + 1.0,
            0.01,
        ))
    } else {
        None
    };
    let out: Vec<(RunRecord, Vec<OutputFile>, String)> = mus
        .par_iter()
        .enumerate()
        .map(|(i, &mu)| {
            let mut files = Vec::new();
            let mut line = String::new();
            let rec = timed(format!("mu={mu}"), |rec| {
                rec.input("mu", mu)
                    .input("h0", base.h0)
                    .input("g0", base.g0)
                    .input("n", base.n)
                    .input("dt", base.dt)
                    .input("horizon", base.horizon);
                let (l_nd, l_dd) = lengths.clone()?;
                let lstar = match mode {
                    FrontMode::Single => l_nd,
                    FrontMode::Double => l_dd,
                };
                rec.output("critical_length", lstar);
                let mut run = base;
                if fs.stop_early.unwrap() {
                    run.stop = Some(StopRule {
                        critical_length: lstar,
                        classify: copts,
                    });
                }
                let traj = run.evolve(&m, mu)?;
                let out = freeboundary::classify(&traj, lstar, &copts);
                rec.note("verdict", verdict_name(out.verdict));
                rec.output("extent_final", out.h_final)
                    .output("u_sup_final", out.u_sup_final)
                    .output("t_final", out.t_final)
                    .output("core_min_window", out.evidence.core_min_window);
                if out.evidence.slack_binding {
                    rec.note("slack", "binding: final extent lies in (L, slack*L]");
                }
                line = jsonl_line(&ClassificationRecord {
                    experiment: cfg.name(),
                    label: &rec.label,
                    mode,
                    mu,
                    h0: base.h0,
                    g0: base.g0,
                    n: base.n,
                    dt: base.dt,
                    horizon: base.horizon,
                    amplitude: base.amplitude,
                    stop_reason: Some(traj.stop_reason),
                    verdict: out.verdict,
                    outcome: &out,
                });

                // invariants of every run
                let sup0 = traj.snapshots[0].sup();
                let cap = sup0.max(m.m_bound()) * (1.0 + 1e-6);
                rec.output("min_front_velocity", traj.min_h_dot)
                    .output("min_value", traj.min_value)
                    .output("max_value", traj.max_value);
                rec.check(Check::at_least(
                    "min_front_velocity",
                    traj.min_h_dot,
                    -1e-12,
                ));
                rec.check(Check::at_least("min_value", traj.min_value, 0.0));
                rec.check(Check::at_most("max_value", traj.max_value, cap));

                if let Some(expect) = c.expect {
                    rec.check(Check::holds(
                        format!("verdict is {}", verdict_name(expect.verdict())),
                        out.verdict == expect.verdict(),
                    ));
                    if expect == ExpectedVerdict::Vanishing {
                        rec.check(Check::at_most(
                            "extent_final",
                            out.h_final,
                            copts.slack * lstar,
                        ));
                        rec.check(Check::below(
                            "u_sup_final",
                            out.u_sup_final,
                            copts.vanish_tol,
                        ));
                    }
                }
                if c.refinement {
                    let fine = run.refined().evolve(&m, mu)?;
                    let v = freeboundary::classify(&fine, lstar, &copts).verdict;
                    rec.note("verdict_refined", verdict_name(v));
                    rec.check(Check::holds(
                        "verdict stable under refinement",
                        v == out.verdict,
                    ));
                }
                let need_cstar = c.speed || c.uniform_convergence;
                let cstar = if need_cstar {
                    let sw = semiwave_params(cfg.semiwave.as_ref().unwrap(), t.attraction.unwrap());
                    let r = semiwave::semiwave_evolve(&m, mu, &sw).map_err(|e| e.to_string())?;
                    rec.output("semiwave_cstar", r.cstar);
                    r.cstar
                } else {
                    f64::NAN
                };
                if c.speed {
                    let wf = fs.window_fraction.unwrap();
                    let sides: &[Side] = match mode {
                        FrontMode::Single => &[Side::Right],
                        FrontMode::Double => &[Side::Right, Side::Left],
                    };
                    for &side in sides {
                        let name = match side {
                            Side::Right => "h",
                            Side::Left => "-g",
                        };
                        let sp = freeboundary::front_speed_side(&traj, side, out.verdict, wf)
                            .map_err(|e| e.to_string())?;
                        rec.output(&format!("slope({name})"), sp.estimate.value)
                            .output(&format!("ratio({name})"), sp.ratio)
                            .output(&format!("fit_residual({name})"), sp.estimate.residual);
                        rec.check(Check::below(
                            format!("|slope({name}) - cstar|/cstar"),
                            rel(sp.estimate.value, cstar),
                            t.speed_rel.unwrap(),
                        ));
                    }
                }
                if c.symmetry {
                    if base.g0 != -base.h0 {
                        return Err("symmetry check needs g0 = -h0".into());
                    }
                    let worst = traj
                        .steps
                        .iter()
                        .map(|r| (r.g + r.h).abs())
                        .fold(0.0, f64::max);
                    rec.output("max|g+h|", worst);
                    rec.check(Check::below("max|g+h|", worst, t.symmetry.unwrap()));
                }
                if c.comparison {
                    // nested pair: smaller amplitude on a shorter interval
                    let small = FrontRun {
                        h0: 0.75 * base.h0,
                        amplitude: 0.5 * base.amplitude,
                        stop: None,
                        ..base
                    };
                    let large = FrontRun { stop: None, ..base };
                    let (a, b) = rayon::join(|| small.evolve(&m, mu), || large.evolve(&m, mu));
                    let (a, b) = (a?, b?);
                    let front = a
                        .steps
                        .iter()
                        .zip(&b.steps)
                        .map(|(x, y)| x.h - y.h)
                        .fold(f64::NEG_INFINITY, f64::max);
                    let prof = ordering_excess(&a, &b);
                    rec.output("max(h1-h2)", front).output("max(u1-u2)", prof);
                    rec.check(Check::at_most("max(h1-h2)", front, t.ordering.unwrap()));
                    rec.check(Check::at_most("max(u1-u2)", prof, t.ordering.unwrap()));
                }
                if c.uniform_convergence {
                    if out.verdict != Verdict::Spreading {
                        return Err("uniform convergence needs a spreading run".into());
                    }
                    let vs = v_star_ref
                        .as_ref()
                        .unwrap()
                        .as_ref()
                        .map_err(|e| e.to_string())?;
                    let eps = t.uniform_eps_fraction.unwrap() * cstar;
                    let tf = traj.t_final();
                    let half = traj.snapshot_near(0.5 * tf).t;
                    let e_end = behind_front_error(&traj, tf, (cstar - eps) * tf, vs.value_at(tf));
                    let e_half =
                        behind_front_error(&traj, half, (cstar - eps) * half, vs.value_at(half));
                    rec.output("uniform_error_end", e_end)
                        .output("uniform_error_half", e_half);
                    rec.check(Check::below("uniform_error_end", e_end, t.uniform.unwrap()));
                    rec.check(Check::below(
                        "uniform_error_end / half",
                        e_end / e_half,
                        1.0,
                    ));
                }
                if c.mass_balance {
                    let fine_run = FrontRun { stop: None, ..run }.refined();
                    let coarse_traj = if run.stop.is_some() {
                        FrontRun { stop: None, ..run }.evolve(&m, mu)?
                    } else {
                        traj.clone()
                    };
                    let fine = fine_run.evolve(&m, mu)?;
                    let sup = |tr: &FrontTrajectory| {
                        freeboundary::mass_balance_residual(tr)
                            .iter()
                            .map(|p| p.1.abs())
                            .fold(0.0, f64::max)
                    };
                    let (r1, r2) = (sup(&coarse_traj), sup(&fine));
                    rec.output("mass_residual", r1)
                        .output("mass_residual_refined", r2);
                    rec.check(Check::at_least(
                        "mass_residual ratio",
                        r1 / r2,
                        t.mass_ratio.unwrap(),
                    ));
                }
                files.push(trajectory_csv(
                    &traj,
                    base.sample_every,
                    format!("traj_{i:02}.csv"),
                ));
                files.push(front_profile_csv(
                    &traj,
                    fs.snapshot_every.unwrap(),
                    format!("profile_{i:02}.csv"),
                ));
                Ok(())
            });
            (rec, files, line)
        })
        .collect();
    let mut records = Vec::new();
    let mut files = Vec::new();
    let mut jsonl = String::new();
    for (rec, f, line) in out {
        records.push(rec);
        files.extend(f);
        jsonl.push_str(&line);
    }
    files.push(OutputFile {
        path: "classification.jsonl".into(),
        contents: jsonl,
    });
    finish(cfg, records, files)
}

pub fn speed_consistency(cfg: &ExperimentConfig) -> RunReport {
    let m = cfg.model();
    let t = &cfg.tolerances;
    let sw = semiwave_params(cfg.semiwave.as_ref().unwrap(), t.attraction.unwrap());
    let fs = cfg.front.as_ref().unwrap();
    let run = FrontRun::from_section(fs, FrontMode::Single);
    let copts = classify_options(t);
    let mut mus = cfg.sweep.mu.clone().unwrap();
    mus.sort_by(|a, b| a.total_cmp(b));
    let lengths = critical_lengths(&m);
    let kpp = 2.0 * m.a.mean().sqrt();
    let rows: Vec<(RunRecord, Option<[f64; 4]>)> = mus
        .par_iter()
        .map(|&mu| {
            let mut row = None;
            let rec = timed(format!("mu={mu}"), |rec| {
                rec.input("mu", mu)
                    .input("h0", run.h0)
                    .input("front_horizon", run.horizon);
                if !m.is_autonomous() {
                    return Err("shooting needs an autonomous model".into());
                }
                let (l_nd, _) = lengths.clone()?;
                let shoot = semiwave::shoot_autonomous(m.a.mean(), m.b.mean(), mu)
                    .map_err(|e| e.to_string());
                let (sw_res, fb) = rayon::join(
                    || semiwave::semiwave_evolve(&m, mu, &sw).map_err(|e| e.to_string()),
                    || run.evolve(&m, mu),
                );
                let (shoot, sw_res, fb) = (shoot?, sw_res?, fb?);
                let verdict = freeboundary::classify(&fb, l_nd, &copts).verdict;
                rec.note("verdict", verdict_name(verdict));
                let front = freeboundary::front_speed(&fb, verdict, fs.window_fraction.unwrap())
                    .map_err(|e| e.to_string())?;
                let (c_sh, c_sw, c_fb) = (shoot.c, sw_res.cstar, front.estimate.value);
                rec.output("shooting", c_sh)
                    .output("semiwave_cstar", c_sw)
                    .output("front_slope", c_fb)
                    .output("front_ratio", front.ratio);
                let tol = t.speed_rel.unwrap();
                rec.check(Check::below("|front - cstar|/cstar", rel(c_fb, c_sw), tol));
                rec.check(Check::below(
                    "|cstar - shooting|/shooting",
                    rel(c_sw, c_sh),
                    tol,
                ));
                for (name, c) in [
                    ("shooting", c_sh),
                    ("semiwave_cstar", c_sw),
                    ("front_slope", c_fb),
                ] {
                    rec.check(Check::below(format!("{name} below KPP speed"), c, kpp));
                }
                row = Some([mu, c_sh, c_sw, c_fb]);
                Ok(())
            });
            (rec, row)
        })
        .collect();
    let mut csv = Csv::new(&["mu", "shooting", "semiwave_cstar", "front_slope"]);
    let mut records = Vec::new();
    let mut table = Vec::new();
    for (rec, row) in rows {
        if let Some(r) = row {
            csv.row(&r);
            table.push(r);
        }
        records.push(rec);
    }
    let mono = timed("speeds strictly increasing in mu".into(), |rec| {
        if table.len() != mus.len() {
            return Err("a speed probe failed".into());
        }
        for (k, name) in [(1, "shooting"), (2, "semiwave_cstar"), (3, "front_slope")] {
            let ok = table.windows(2).all(|w| w[1][k] > w[0][k]);
            rec.check(Check::holds(format!("{name} increasing"), ok));
        }
        Ok(())
    });
    records.push(mono);
    finish(cfg, records, vec![csv.into_file("speeds.csv")])
}

/// `Vanishing* Spreading*` with no undetermined entries.
fn single_switch(verdicts: &[Verdict]) -> bool {
    let k = verdicts
        .iter()
        .take_while(|v| **v == Verdict::Vanishing)
        .count();
    verdicts[k..].iter().all(|v| *v == Verdict::Spreading)
}

pub fn dichotomy_sweep(cfg: &ExperimentConfig) -> RunReport {
    let m = cfg.model();
    let fs = cfg.front.as_ref().unwrap();
    let t = &cfg.tolerances;
    let base = FrontRun::from_section(fs, FrontMode::Double);
    let mut mus = cfg.sweep.mu.clone().unwrap();
    mus.sort_by(|a, b| a.total_cmp(b));
    let mut records = Vec::new();
    let mut files = Vec::new();
    let l_dd = match critical_lengths(&m) {
        Ok((_, l)) => l,
        Err(e) => {
            let mut rec = RunRecord::new("critical length");
            rec.fail(e);
            return finish(cfg, vec![rec], files);
        }
    };
    let opts = CriticalMuOptions {
        front: base.params(),
        classify: classify_options(t),
        critical_length: l_dd,
        rel_width: t.mu_rel_width.unwrap(),
        max_horizon_factor: fs.max_horizon_factor.unwrap(),
        recheck_factor: t.recheck_factor.unwrap(),
    };
    let (g0, h0) = (base.g0, base.h0);
    let u0 = freeboundary::cosine_double(base.amplitude, g0, h0);
    let u0_double = freeboundary::cosine_double(2.0 * base.amplitude, g0, h0);
    let probes: Vec<(RunRecord, Option<freeboundary::MuProbe>)> = mus
        .par_iter()
        .map(|&mu| {
            let mut probe = None;
            let rec = timed(format!("mu={mu}"), |rec| {
                rec.input("mu", mu).input("h0-g0", h0 - g0);
                let p = freeboundary::probe_mu(&m, &u0, g0, h0, mu, &opts)
                    .map_err(|e| e.to_string())?;
                rec.note("verdict", verdict_name(p.verdict));
                rec.output("horizon_used", p.horizon_used)
                    .output("extent_final", p.extent_final)
                    .output("u_sup_final", p.u_sup_final);
                rec.check(Check::holds(
                    "verdict determined",
                    p.verdict != Verdict::Undetermined,
                ));
                if cfg.checks.mass_doubling && p.verdict == Verdict::Spreading {
                    let q = freeboundary::probe_mu(&m, &u0_double, g0, h0, mu, &opts)
                        .map_err(|e| e.to_string())?;
                    rec.note("verdict_doubled_mass", verdict_name(q.verdict));
                    rec.check(Check::holds(
                        "doubled mass still spreads",
                        q.verdict == Verdict::Spreading,
                    ));
                }
                probe = Some(p);
                Ok(())
            });
            (rec, probe)
        })
        .collect();
    let mut csv = Csv::new(&[
        "mu",
        "verdict",
        "horizon_used",
        "extent_final",
        "u_sup_final",
    ]);
    let mut jsonl = String::new();
    let mut verdicts = Vec::new();
    for (rec, p) in probes {
        if let Some(p) = p {
            csv.row_labeled(
                &[
                    &crate::harness::report::fmt_f(p.mu),
                    verdict_name(p.verdict),
                ],
                &[p.horizon_used, p.extent_final, p.u_sup_final],
            );
            jsonl.push_str(&jsonl_line(&ClassificationRecord {
                experiment: cfg.name(),
                label: &rec.label,
                mode: FrontMode::Double,
                mu: p.mu,
                h0,
                g0,
                n: base.n,
                dt: base.dt,
                horizon: p.horizon_used,
                amplitude: base.amplitude,
                stop_reason: None,
                verdict: p.verdict,
                outcome: &p.outcome,
            }));
            verdicts.push(p.verdict);
        }
        records.push(rec);
    }
    let n_mu = mus.len();
    records.push(timed("verdict sequence".into(), |rec| {
        if verdicts.len() != n_mu {
            return Err("a probe failed".into());
        }
        let seq: Vec<&str> = verdicts.iter().map(|v| verdict_name(*v)).collect();
        rec.note("sequence", seq.join(" "));
        rec.check(Check::holds(
            "vanishing then spreading, single switch",
            single_switch(&verdicts),
        ));
        Ok(())
    }));
    files.push(csv.into_file("verdicts.csv"));
    if cfg.checks.critical_mu {
        let [lo, hi] = cfg.sweep.bracket.unwrap();
        let mut csv = Csv::new(&[
            "mu",
            "verdict",
            "horizon_used",
            "extent_final",
            "u_sup_final",
        ]);
        let mut summary = Csv::new(&["lo", "hi", "rel_width", "recheck_below", "recheck_above"]);
        records.push(timed("critical mu".into(), |rec| {
            rec.input("bracket", format!("({lo}, {hi})"));
            let r = freeboundary::critical_mu(&m, &u0, g0, h0, (lo, hi), &opts)
                .map_err(|e| e.to_string())?;
            rec.output("mu_lo", r.lo)
                .output("mu_hi", r.hi)
                .output("rel_width", r.rel_width())
                .output("probes", r.probes.len() as f64);
            rec.check(Check::at_most("rel_width", r.rel_width(), opts.rel_width));
            let (below, above) = r.recheck;
            rec.note(
                "recheck_below",
                format!("{} at mu={}", verdict_name(below.verdict), below.mu),
            );
            rec.note(
                "recheck_above",
                format!("{} at mu={}", verdict_name(above.verdict), above.mu),
            );
            rec.check(Check::holds(
                "vanishing below bracket",
                below.verdict == Verdict::Vanishing,
            ));
            rec.check(Check::holds(
                "spreading above bracket",
                above.verdict == Verdict::Spreading,
            ));
            for p in r.probes.iter().chain([&below, &above]) {
                csv.row_labeled(
                    &[
                        &crate::harness::report::fmt_f(p.mu),
                        verdict_name(p.verdict),
                    ],
                    &[p.horizon_used, p.extent_final, p.u_sup_final],
                );
            }
            summary.row(&[r.lo, r.hi, r.rel_width(), below.mu, above.mu]);
            Ok(())
        }));
        files.push(csv.into_file("critical_mu_probes.csv"));
        files.push(summary.into_file("critical_mu.csv"));
    }
    files.push(OutputFile {
        path: "classification.jsonl".into(),
        contents: jsonl,
    });
    finish(cfg, records, files)
}

/// Observed orders `log2(|q0 − q1| / |q1 − q2|)` of consecutive triples.
pub fn richardson_orders(values: &[f64]) -> Vec<f64> {
    values
        .windows(3)
        .map(|w| ((w[0] - w[1]).abs() / (w[1] - w[2]).abs()).log2())
        .collect()
}

pub fn convergence_study(cfg: &ExperimentConfig) -> RunReport {
    let m = cfg.model();
    let s = cfg.convergence.as_ref().unwrap();
    let t = &cfg.tolerances;
    let q = s.quantity.unwrap();
    let levels = s.levels.unwrap();
    let (n0, dt0, horizon, mu, extent) = (
        s.n.unwrap(),
        s.dt.unwrap(),
        s.horizon.unwrap(),
        s.mu.unwrap(),
        s.extent.unwrap(),
    );
    let exact: Option<f64> = match q {
        Quantity::Lyapunov => Some(BoundaryKind::NeumannDirichlet.pure_diffusion_exponent(extent)),
        Quantity::Cstar if m.is_autonomous() => {
            semiwave::shoot_autonomous(m.a.mean(), m.b.mean(), mu)
                .ok()
                .map(|r| r.c)
        }
        Quantity::SyntheticFront => Some(mu),
        _ => None,
    };
    let label = match q {
        Quantity::Lyapunov => "lyapunov",
        Quantity::FrontPosition => "front_position",
        Quantity::Cstar => "cstar",
        Quantity::SyntheticFront => "synthetic_front",
    };
    let mut csv = Csv::new(&["level", "n", "dt", "value", "error"]);
    let rec = timed(format!("{label} refinement"), |rec| {
        rec.input("quantity", label)
            .input("levels", levels)
            .input("n0", n0)
            .input("dt0", dt0);
        let level_values: Vec<Result<f64, String>> = (0..levels)
            .into_par_iter()
            .map(|k| {
                let n = n0 << k;
                let dt = dt0 / (1u64 << k) as f64;
                match q {
                    Quantity::Lyapunov => {
                        let p = LyapunovParams {
                            n,
                            dt,
                            horizon,
                            ..Default::default()
                        };
                        spectral::lyapunov_nd(&LinearCoefficient::constant(0.0), extent, &p)
                            .map(|e| e.value)
                            .map_err(|e| e.to_string())
                    }
                    Quantity::FrontPosition => {
                        let p = FrontParams {
                            n,
                            dt,
                            horizon,
                            sample_every: horizon,
                            stop: None,
                        };
                        freeboundary::fb_evolve_single(
                            &m,
                            mu,
                            &freeboundary::cosine_single(1.0, extent),
                            extent,
                            &p,
                        )
                        .map(|tr| tr.final_record().h)
                        .map_err(|e| e.to_string())
                    }
                    Quantity::Cstar => {
                        let base =
                            semiwave_params(cfg.semiwave.as_ref().unwrap(), t.attraction.unwrap());
                        let p = SemiWaveParams {
                            n,
                            dt,
                            horizon,
                            ..base
                        };
                        semiwave::semiwave_evolve(&m, mu, &p)
                            .map(|r| r.cstar)
                            .map_err(|e| e.to_string())
                    }
                    Quantity::SyntheticFront => {
                        let steps = (horizon / dt).round() as usize;
                        let ts: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
                        let ys: Vec<f64> = ts.iter().map(|t| mu * t + extent).collect();
                        fit_line(&ts, &ys)
                            .map(|f| f.slope)
                            .ok_or_else(|| "fit failed".to_string())
                    }
                }
            })
            .collect();
        let mut values = Vec::with_capacity(levels);
        for (k, v) in level_values.into_iter().enumerate() {
            let v = v?;
            let err = exact.map_or(f64::NAN, |e| v - e);
            csv.row(&[k as f64, (n0 << k) as f64, dt0 / (1u64 << k) as f64, v, err]);
            rec.output(&format!("value_{k}"), v);
            values.push(v);
        }
        if let Some(e) = exact {
            rec.output("reference", e);
        }
        if q == Quantity::SyntheticFront {
            for (k, v) in values.iter().enumerate() {
                rec.check(Check::below(
                    format!("|slope_{k} - {mu}|"),
                    (v - mu).abs(),
                    1e-12,
                ));
            }
            return Ok(());
        }
        let diffs: Vec<f64> = values.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
        rec.check(Check::holds(
            "level differences decrease",
            diffs.windows(2).all(|w| w[1] < w[0]),
        ));
        if let Some(e) = exact {
            let errs: Vec<f64> = values.iter().map(|v| (v - e).abs()).collect();
            rec.check(Check::holds(
                "errors decrease",
                errs.windows(2).all(|w| w[1] < w[0]),
            ));
        }
        let gate = match q {
            Quantity::Cstar => t.order_speed.unwrap(),
            _ => t.order_spatial.unwrap(),
        };
        for (k, p) in richardson_orders(&values).into_iter().enumerate() {
            rec.output(&format!("order_{k}"), p);
            rec.check(Check::at_least(format!("order_{k}"), p, gate));
        }
        Ok(())
    });
    finish(cfg, vec![rec], vec![csv.into_file("convergence.csv")])
}

fn finish(cfg: &ExperimentConfig, records: Vec<RunRecord>, files: Vec<OutputFile>) -> RunReport {
    RunReport {
        name: cfg.name().to_string(),
        kind: cfg.kind.label().to_string(),
        config_echo: emit_config(cfg),
        records,
        files,
    }
}

/// Executes the experiment named by `cfg.kind`.
pub fn run_experiment(cfg: &ExperimentConfig) -> RunReport {
    match cfg.kind {
        ExperimentKind::LyapunovValidation => lyapunov_validation(cfg),
        ExperimentKind::OdeOracle => ode_oracle(cfg),
        ExperimentKind::Semiwave => semiwave_experiment(cfg),
        ExperimentKind::FbSingle => front_experiment(cfg, FrontMode::Single),
        ExperimentKind::FbDouble => front_experiment(cfg, FrontMode::Double),
        ExperimentKind::SpeedConsistency => speed_consistency(cfg),
        ExperimentKind::DichotomySweep => dichotomy_sweep(cfg),
        ExperimentKind::ConvergenceStudy => convergence_study(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn richardson_on_exact_second_order() {
        let v: Vec<f64> = (0..4).map(|k| 1.0 + 0.3 * 0.25f64.powi(k)).collect();
        for p in richardson_orders(&v) {
            assert!((p - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn switch_detection() {
        use Verdict::*;
        assert!(single_switch(&[Vanishing, Vanishing, Spreading, Spreading]));
        assert!(single_switch(&[Spreading]));
        assert!(!single_switch(&[Vanishing, Spreading, Vanishing]));
        assert!(!single_switch(&[Vanishing, Undetermined, Spreading]));
    }

    #[test]
    fn synthetic_front_study_is_exact() {
        let cfg = parse_config(
            "kind = \"convergence_study\"\n[convergence]\nquantity = \"synthetic_front\"\n",
        )
        .unwrap();
        let rep = convergence_study(&cfg);
        assert!(rep.pass(), "{}", rep.render());
    }

    #[test]
    fn failed_probe_is_isolated() {
        // mu = 50 breaks the semi-wave Peclet guard; mu = 1 must still be recorded.
        let cfg = parse_config(
            "kind = \"semiwave\"\n[semiwave]\nn = 200\ndt = 0.02\nhorizon = 40\n[sweep]\nmu = [1.0, 1e6]\n",
        )
        .unwrap();
        let rep = semiwave_experiment(&cfg);
        assert_eq!(rep.records.len(), 2);
        assert!(rep.records[0].error.is_none(), "{}", rep.render());
        assert!(rep.records[1].error.is_some());
        assert!(!rep.pass());
        assert!(rep.files[0].contents.lines().count() == 2);
    }
}
