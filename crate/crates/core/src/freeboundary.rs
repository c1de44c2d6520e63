//! Single- and double-front free boundary problems on front-fixed grids,
//! spreading/vanishing classification, front speeds and the critical `μ*`.
//!
//! Single front: `ξ = x/h(t) ∈ [0,1]`,
//! `v_t = v_ξξ/h² + ξ(ḣ/h)v_ξ + v f(t,v)`, `v_ξ(t,0) = v(t,1) = 0`,
//! `ḣ = −μ v_ξ(t,1)/h`.
//!
//! Double front: `ξ = (2x − (h+g))/(h−g) ∈ [−1,1]`,
//! `v_t = 4v_ξξ/L² + ((ḣ+ġ) + ξ(ḣ−ġ))/L · v_ξ + v f(t,v)` with `L = h − g`,
//! `v(t,±1) = 0`, `ḣ = −2μ v_ξ(t,1)/L`, `ġ = −2μ v_ξ(t,−1)/L`.
//!
//! Time stepping is BDF2 for the transformed diffusion and drift, started by
//! one Crank–Nicolson step. Each step is a predictor–corrector pair: the
//! predictor extrapolates the front velocities and reaction, the corrector
//! uses the Stefan velocities and reaction of the predicted profile. Every
//! solve is a scalar tridiagonal system.

use rayon::join;
use serde::Serialize;
use thiserror::Error;

use crate::forcing::ReactionModel;
use crate::kinetics::{self, KineticsError};
use crate::speed::{fit_line, SpeedEstimate, SpeedMethod};
use crate::tridiag::Tridiagonal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FreeBoundaryError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid initial data: {0}")]
    InitialData(String),
    #[error("reaction model fails hypotheses")]
    Hypotheses,
    #[error("step failure at t={t}: {reason}")]
    StepFailure { t: f64, reason: String },
    #[error("front speed needs a spreading trajectory, verdict is {0:?}")]
    NotSpreading(Verdict),
    #[error("critical mu bracket invalid: {0}")]
    Bracket(String),
    #[error("horizon cap exceeded at mu={mu}; last bracket ({lo}, {hi})")]
    HorizonCap { mu: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontMode {
    Single,
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Spreading,
    Vanishing,
    Undetermined,
}

/// Thresholds for the finite-horizon dichotomy verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifyOptions {
    pub vanish_tol: f64,
    pub spread_tol: f64,
    /// `ḣ` (or `ḣ − ġ`) below this counts as a plateau.
    pub plateau_tol: f64,
    /// Allowed excess of the final extent over the critical length.
    pub slack: f64,
    /// Trailing fraction of the run for the windowed interior minimum.
    pub window_fraction: f64,
    pub min_horizon: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            vanish_tol: 1e-4,
            spread_tol: 0.1,
            plateau_tol: 1e-3,
            slack: 1.05,
            window_fraction: 0.1,
            min_horizon: 5.0,
        }
    }
}

impl ClassifyOptions {
    /// Defaults with `spread_tol = 0.1·min V*`.
    pub fn for_model(m: &ReactionModel) -> Result<Self, FreeBoundaryError> {
        Ok(Self {
            spread_tol: default_spread_tol(m)?,
            ..Default::default()
        })
    }
}

/// `0.1 · min V*` sampled over a window of length 100.
pub fn default_spread_tol(m: &ReactionModel) -> Result<f64, FreeBoundaryError> {
    if m.is_autonomous() {
        return Ok(0.1 * m.a.mean() / m.b.mean());
    }
    let v = kinetics::ap_positive_solution(m, kinetics::default_spinup(m), 100.0, 0.01)?;
    Ok(0.1 * v.values.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Stop as soon as the verdict is decided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub critical_length: f64,
    pub classify: ClassifyOptions,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontParams {
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Time between profile snapshots.
    pub sample_every: f64,
    pub stop: Option<StopRule>,
}

impl Default for FrontParams {
    fn default() -> Self {
        Self {
            n: 400,
            dt: 0.01,
            horizon: 50.0,
            sample_every: 1.0,
            stop: None,
        }
    }
}

/// Front-fixed profile and front positions.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontState {
    pub mode: FrontMode,
    pub t: f64,
    pub h: f64,
    pub g: f64,
    /// Profile on `ξ_j`, `j = 0..=N`.
    pub v: Vec<f64>,
    pub h_dot: f64,
    pub g_dot: f64,
}

impl FrontState {
    pub fn n(&self) -> usize {
        self.v.len() - 1
    }

    pub fn xi(&self, j: usize) -> f64 {
        let n = self.n() as f64;
        match self.mode {
            FrontMode::Single => j as f64 / n,
            FrontMode::Double => -1.0 + 2.0 * j as f64 / n,
        }
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_of_xi(self.xi(j))
    }

    pub fn x_of_xi(&self, xi: f64) -> f64 {
        match self.mode {
            FrontMode::Single => xi * self.h,
            FrontMode::Double => 0.5 * (self.h + self.g) + 0.5 * xi * (self.h - self.g),
        }
    }

    fn xi_of_x(&self, x: f64) -> f64 {
        match self.mode {
            FrontMode::Single => x / self.h,
            FrontMode::Double => (2.0 * x - (self.h + self.g)) / (self.h - self.g),
        }
    }

    pub fn extent(&self) -> f64 {
        self.h - self.g
    }

    /// `u(t,x)`, linear in `ξ`; zero outside the occupied interval.
    pub fn value_at(&self, x: f64) -> f64 {
        if x < self.g || x > self.h {
            return 0.0;
        }
        let xi = self.xi_of_x(x);
        let (lo, span) = match self.mode {
            FrontMode::Single => (0.0, 1.0),
            FrontMode::Double => (-1.0, 2.0),
        };
        let n = self.n();
        let s = ((xi - lo) / span * n as f64).clamp(0.0, n as f64);
        let j = (s.floor() as usize).min(n - 1);
        let w = s - j as f64;
        self.v[j] * (1.0 - w) + self.v[j + 1] * w
    }

    pub fn sup(&self) -> f64 {
        self.v.iter().fold(0.0, |a, &b| a.max(b))
    }

    fn dxi(&self) -> f64 {
        match self.mode {
            FrontMode::Single => 1.0 / self.n() as f64,
            FrontMode::Double => 2.0 / self.n() as f64,
        }
    }

    /// `∫ u dx` by the trapezoid rule.
    pub fn mass(&self) -> f64 {
        self.integrate(|_, v| v)
    }

    fn integrate(&self, f: impl Fn(usize, f64) -> f64) -> f64 {
        let n = self.n();
        let mut s = 0.5 * (f(0, self.v[0]) + f(n, self.v[n]));
        for j in 1..n {
            s += f(j, self.v[j]);
        }
        let jac = match self.mode {
            FrontMode::Single => self.h,
            FrontMode::Double => 0.5 * (self.h - self.g),
        };
        s * self.dxi() * jac
    }

    /// `ḣ` and `ġ` implied by the profile and the Stefan conditions.
    fn stefan(&self, mu: f64) -> (f64, f64) {
        let n = self.n();
        let d = self.dxi();
        let v = &self.v;
        match self.mode {
            FrontMode::Single => {
                let vxi = (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * d);
                (-mu * vxi / self.h, 0.0)
            }
            FrontMode::Double => {
                let len = self.h - self.g;
                let right = (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * d);
                let left = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * d);
                (-2.0 * mu * right / len, -2.0 * mu * left / len)
            }
        }
    }
}

/// Scalar series recorded at every time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub h: f64,
    pub g: f64,
    pub h_dot: f64,
    pub g_dot: f64,
    pub mass: f64,
    /// `∫ u f(t,u) dx`.
    pub reaction: f64,
    pub u_sup: f64,
    pub u_at_0: f64,
    /// `min u` over the initial occupied interval.
    pub core_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Horizon,
    Spreading,
    Vanishing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontTrajectory {
    pub mode: FrontMode,
    pub mu: f64,
    pub h0: f64,
    pub g0: f64,
    pub dt: f64,
    pub steps: Vec<StepRecord>,
    pub snapshots: Vec<FrontState>,
    pub stop_reason: StopReason,
    pub min_h_dot: f64,
    pub min_value: f64,
    pub max_value: f64,
}

impl FrontTrajectory {
    pub fn final_record(&self) -> &StepRecord {
        self.steps
            .last()
            .expect("trajectory has at least the initial record")
    }

    pub fn t_final(&self) -> f64 {
        self.final_record().t
    }

    pub fn final_state(&self) -> &FrontState {
        self.snapshots.last().expect("trajectory has snapshots")
    }

    /// Snapshot closest to `t`.
    pub fn snapshot_near(&self, t: f64) -> &FrontState {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("trajectory has snapshots")
    }
}

/// Profile `A·cos(π x / (2h0))` on `[0, h0]`.
pub fn cosine_single(amplitude: f64, h0: f64) -> impl Fn(f64) -> f64 {
    move |x| amplitude * (std::f64::consts::FRAC_PI_2 * x / h0).cos()
}

/// Profile `A·cos(π (x − m) / (h0 − g0))` on `[g0, h0]`, `m` the midpoint.
pub fn cosine_double(amplitude: f64, g0: f64, h0: f64) -> impl Fn(f64) -> f64 {
    let mid = 0.5 * (g0 + h0);
    let len = h0 - g0;
    move |x| amplitude * (std::f64::consts::PI * (x - mid) / len).cos()
}

/// Cosine profile corrected to satisfy the first-order corner condition
/// `u0''(h0) = μ u0'(h0)²` of the moving front, keeping `u0'(0) = 0`.
/// Incompatible data leave an initial layer that limits the observed order
/// of time-local diagnostics such as [`mass_balance_residual`].
pub fn compatible_single(amplitude: f64, h0: f64, mu: f64) -> impl Fn(f64) -> f64 {
    let k = std::f64::consts::FRAC_PI_2 / h0;
    let c = 0.5 * mu * (amplitude * k).powi(2);
    move |x| amplitude * (k * x).cos() + c * ((h0 - x) * x / h0).powi(2)
}

/// Two-front analogue of [`compatible_single`].
pub fn compatible_double(amplitude: f64, g0: f64, h0: f64, mu: f64) -> impl Fn(f64) -> f64 {
    let base = cosine_double(amplitude, g0, h0);
    let len = h0 - g0;
    let c = 0.5 * mu * (amplitude * std::f64::consts::PI / len).powi(2);
    move |x| base(x) + c * ((h0 - x) * (x - g0) / len).powi(2)
}

struct FrontSolver<'a> {
    model: &'a ReactionModel,
    mu: f64,
    state: FrontState,
    dt: f64,
    lhs: Tridiagonal,
    rhs_op: Tridiagonal,
    buf: Vec<f64>,
    out: Vec<f64>,
    reaction_n: Vec<f64>,
    reaction_mid: Vec<f64>,
    /// Previous state and its reaction, for the two-step scheme.
    prev: Option<(FrontState, Vec<f64>)>,
    core: (f64, f64),
    min_extent: f64,
}

impl<'a> FrontSolver<'a> {
    fn unknowns(&self) -> std::ops::Range<usize> {
        let n = self.state.n();
        match self.state.mode {
            FrontMode::Single => 0..n,
            FrontMode::Double => 1..n,
        }
    }

    /// Row coefficients of the transformed operator for geometry
    /// `(h, g, ḣ, ġ)` at unknown `j`: `(lower, diag, upper)`.
    fn row(&self, j: usize, h: f64, g: f64, hd: f64, gd: f64) -> (f64, f64, f64) {
        let d = self.state.dxi();
        let xi = self.state.xi(j);
        let (diff, drift) = match self.state.mode {
            FrontMode::Single => (1.0 / (h * h), xi * hd / h),
            FrontMode::Double => {
                let len = h - g;
                (4.0 / (len * len), ((hd + gd) + xi * (hd - gd)) / len)
            }
        };
        let k = diff / (d * d);
        if self.state.mode == FrontMode::Single && j == 0 {
            // ghost node v_{-1} = v_1, drift vanishes at ξ = 0
            return (0.0, -2.0 * k, 2.0 * k);
        }
        let a = drift / (2.0 * d);
        (k - a, -2.0 * k, k + a)
    }

    fn reaction_into(&self, t: f64, v: &[f64], out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(v) {
            *o = self.model.reaction(t, x);
        }
    }

    /// One Crank–Nicolson solve from the current profile with geometry
    /// `(h, g, ḣ, ġ)` and reaction source `src`; result in `self.out`.
    fn cn_solve(&mut self, h: f64, g: f64, hd: f64, gd: f64, use_mid: bool) {
        let range = self.unknowns();
        let off = range.start;
        let half = 0.5 * self.dt;
        for (k, j) in range.clone().enumerate() {
            let (l, c, u) = self.row(j, h, g, hd, gd);
            self.lhs.lower[k] = -half * l;
            self.lhs.diag[k] = 1.0 - half * c;
            self.lhs.upper[k] = -half * u;
            self.rhs_op.lower[k] = half * l;
            self.rhs_op.diag[k] = 1.0 + half * c;
            self.rhs_op.upper[k] = half * u;
        }
        let v = &self.state.v;
        self.rhs_op.apply(&v[range.clone()], &mut self.buf);
        // boundary values are zero, so no boundary terms enter
        let src = if use_mid {
            &self.reaction_mid
        } else {
            &self.reaction_n
        };
        for (k, j) in range.clone().enumerate() {
            self.buf[k] += self.dt * src[j];
        }
        self.lhs.solve_in_place(&mut self.buf);
        self.out.iter_mut().for_each(|x| *x = 0.0);
        self.out[off..off + self.buf.len()].copy_from_slice(&self.buf);
    }

    /// BDF2 solve `(I − (2/3)dt L) v = (4vⁿ − vⁿ⁻¹)/3 + (2/3)dt R`.
    fn bdf_solve(&mut self, prev: &[f64], h: f64, g: f64, hd: f64, gd: f64) {
        let range = self.unknowns();
        let off = range.start;
        let w = 2.0 * self.dt / 3.0;
        for (k, j) in range.clone().enumerate() {
            let (l, c, u) = self.row(j, h, g, hd, gd);
            self.lhs.lower[k] = -w * l;
            self.lhs.diag[k] = 1.0 - w * c;
            self.lhs.upper[k] = -w * u;
            self.buf[k] = (4.0 * self.state.v[j] - prev[j]) / 3.0 + w * self.reaction_mid[j];
        }
        self.lhs.solve_in_place(&mut self.buf);
        self.out.iter_mut().for_each(|x| *x = 0.0);
        self.out[off..off + self.buf.len()].copy_from_slice(&self.buf);
    }

    /// Predictor–corrector Crank–Nicolson; used for the start step.
    fn cn_step(&mut self) -> (f64, f64) {
        let s = &self.state;
        let (t, h, g, hd, gd) = (s.t, s.h, s.g, s.h_dot, s.g_dot);
        let dt = self.dt;

        // predictor with lagged front velocities
        self.cn_solve(h, g, hd, gd, false);
        let pred = FrontState {
            t: t + dt,
            h: h + dt * hd,
            g: g + dt * gd,
            v: self.out.clone(),
            ..self.state.clone()
        };
        let (hd_p, gd_p) = pred.stefan(self.mu);

        // corrector with trapezoid averages
        let hd_m = 0.5 * (hd + hd_p);
        let gd_m = 0.5 * (gd + gd_p);
        let h1 = h + dt * hd_m;
        let g1 = g + dt * gd_m;
        let mut rm = std::mem::take(&mut self.reaction_mid);
        self.reaction_into(t + dt, &pred.v, &mut rm);
        for (m, n) in rm.iter_mut().zip(&self.reaction_n) {
            *m = 0.5 * (*m + n);
        }
        self.reaction_mid = rm;
        self.cn_solve(0.5 * (h + h1), 0.5 * (g + g1), hd_m, gd_m, true);
        (h1, g1)
    }

    /// BDF2 with extrapolated geometry and reaction, then one correction
    /// with the Stefan velocities and reaction of the predicted profile.
    fn bdf_step(&mut self, prev: &FrontState, prev_reaction: &[f64]) -> (f64, f64) {
        let s = &self.state;
        let (t, h, g, hd, gd) = (s.t, s.h, s.g, s.h_dot, s.g_dot);
        let dt = self.dt;
        let bdf = |x: f64, xp: f64, xd: f64| (4.0 * x - xp + 2.0 * dt * xd) / 3.0;

        let hd_e = 2.0 * hd - prev.h_dot;
        let gd_e = 2.0 * gd - prev.g_dot;
        let (h_e, g_e) = (bdf(h, prev.h, hd_e), bdf(g, prev.g, gd_e));
        for (m, (a, b)) in self
            .reaction_mid
            .iter_mut()
            .zip(self.reaction_n.iter().zip(prev_reaction))
        {
            *m = 2.0 * a - b;
        }
        self.bdf_solve(&prev.v, h_e, g_e, hd_e, gd_e);
        let pred = FrontState {
            t: t + dt,
            h: h_e,
            g: g_e,
            v: self.out.clone(),
            ..self.state.clone()
        };
        let (hd_p, gd_p) = pred.stefan(self.mu);
        let (h1, g1) = (bdf(h, prev.h, hd_p), bdf(g, prev.g, gd_p));
        let mut rm = std::mem::take(&mut self.reaction_mid);
        self.reaction_into(t + dt, &pred.v, &mut rm);
        self.reaction_mid = rm;
        self.bdf_solve(&prev.v, h1, g1, hd_p, gd_p);
        (h1, g1)
    }

    fn step(&mut self) -> Result<(), FreeBoundaryError> {
        let t = self.state.t;
        let dt = self.dt;
        let mut rn = std::mem::take(&mut self.reaction_n);
        self.reaction_into(t, &self.state.v, &mut rn);
        self.reaction_n = rn;

        let (h1, g1) = match self.prev.take() {
            None => self.cn_step(),
            Some((prev, prev_reaction)) => {
                let r = self.bdf_step(&prev, &prev_reaction);
                // recycle the buffers
                self.prev = Some((prev, prev_reaction));
                r
            }
        };
        let (mut old, mut old_reaction) = self
            .prev
            .take()
            .unwrap_or_else(|| (self.state.clone(), vec![0.0; self.reaction_n.len()]));
        old.clone_from(&self.state);
        old_reaction.copy_from_slice(&self.reaction_n);
        self.prev = Some((old, old_reaction));

        std::mem::swap(&mut self.state.v, &mut self.out);
        self.state.t = t + dt;
        self.state.h = h1;
        self.state.g = g1;
        let (hd1, gd1) = self.state.stefan(self.mu);
        self.state.h_dot = hd1;
        self.state.g_dot = gd1;
        if !(h1.is_finite() && g1.is_finite()) || self.state.v.iter().any(|x| !x.is_finite()) {
            return Err(FreeBoundaryError::StepFailure {
                t: t + dt,
                reason: "non-finite state".into(),
            });
        }
        let min_extent = self.min_extent;
        if self.state.extent() < min_extent {
            return Err(FreeBoundaryError::StepFailure {
                t: t + dt,
                reason: format!("front extent {} below {}", self.state.extent(), min_extent),
            });
        }
        Ok(())
    }

    fn record(&self) -> StepRecord {
        let s = &self.state;
        let reaction = s.integrate(|_, v| self.model.reaction(s.t, v));
        let u_at_0 = match s.mode {
            FrontMode::Single => s.v[0],
            FrontMode::Double => s.value_at(0.0),
        };
        let (a, b) = self.core;
        let core_min =
            s.v.iter()
                .enumerate()
                .filter(|(j, _)| {
                    let x = s.x(*j);
                    x >= a && x <= b
                })
                .map(|(_, &v)| v)
                .fold(f64::INFINITY, f64::min);
        StepRecord {
            t: s.t,
            h: s.h,
            g: s.g,
            h_dot: s.h_dot,
            g_dot: s.g_dot,
            mass: s.mass(),
            reaction,
            u_sup: s.sup(),
            u_at_0,
            core_min,
        }
    }
}

fn validate_params(m: &ReactionModel, mu: f64, p: &FrontParams) -> Result<(), FreeBoundaryError> {
    if !m.check_hypotheses().ok() {
        return Err(FreeBoundaryError::Hypotheses);
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(FreeBoundaryError::InvalidArgument(format!(
            "mu must be positive, got {mu}"
        )));
    }
    if p.n < 16 {
        return Err(FreeBoundaryError::InvalidArgument(format!(
            "need at least 16 cells, got {}",
            p.n
        )));
    }
    for (name, v) in [
        ("dt", p.dt),
        ("horizon", p.horizon),
        ("sample_every", p.sample_every),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(FreeBoundaryError::InvalidArgument(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    Ok(())
}

fn sample_profile(
    u0: &dyn Fn(f64) -> f64,
    mode: FrontMode,
    g0: f64,
    h0: f64,
    n: usize,
) -> Result<Vec<f64>, FreeBoundaryError> {
    let probe = FrontState {
        mode,
        t: 0.0,
        h: h0,
        g: g0,
        v: vec![0.0; n + 1],
        h_dot: 0.0,
        g_dot: 0.0,
    };
    let v: Vec<f64> = (0..=n).map(|j| u0(probe.x(j))).collect();
    let sup = v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if v.iter().any(|x| !x.is_finite()) {
        return Err(FreeBoundaryError::InitialData("non-finite values".into()));
    }
    let zero = v.iter().all(|&x| x == 0.0);
    let tol = 1e-12 * sup.max(1.0);
    if u0(h0).abs() > tol {
        return Err(FreeBoundaryError::InitialData(format!(
            "u0(h0) = {} != 0",
            u0(h0)
        )));
    }
    match mode {
        FrontMode::Single => {
            let delta = 1e-4 * h0;
            let slope = (u0(delta) - u0(0.0)) / delta;
            if slope.abs() > 1e-3 * sup.max(1e-300) / h0 {
                return Err(FreeBoundaryError::InitialData(format!(
                    "u0'(0) ≈ {slope} != 0"
                )));
            }
        }
        FrontMode::Double => {
            if u0(g0).abs() > tol {
                return Err(FreeBoundaryError::InitialData(format!(
                    "u0(g0) = {} != 0",
                    u0(g0)
                )));
            }
        }
    }
    let interior = match mode {
        FrontMode::Single => 0..n,
        FrontMode::Double => 1..n,
    };
    // the identically zero profile is admitted as the trivial solution
    if !zero && v[interior].iter().any(|&x| !(x > 0.0)) {
        return Err(FreeBoundaryError::InitialData(
            "u0 must be positive inside the initial interval".into(),
        ));
    }
    let mut v = v;
    v[n] = 0.0;
    if mode == FrontMode::Double {
        v[0] = 0.0;
    }
    Ok(v)
}

fn evolve(
    m: &ReactionModel,
    mu: f64,
    mode: FrontMode,
    u0: &dyn Fn(f64) -> f64,
    g0: f64,
    h0: f64,
    p: &FrontParams,
) -> Result<FrontTrajectory, FreeBoundaryError> {
    validate_params(m, mu, p)?;
    if !(h0 > g0) || !h0.is_finite() || !g0.is_finite() {
        return Err(FreeBoundaryError::InvalidArgument(format!(
            "need g0 < h0, got ({g0}, {h0})"
        )));
    }
    let v = sample_profile(u0, mode, g0, h0, p.n)?;
    let mut state = FrontState {
        mode,
        t: 0.0,
        h: h0,
        g: g0,
        v,
        h_dot: 0.0,
        g_dot: 0.0,
    };
    let (hd, gd) = state.stefan(mu);
    state.h_dot = hd;
    state.g_dot = gd;
    let unknowns = match mode {
        FrontMode::Single => p.n,
        FrontMode::Double => p.n - 1,
    };
    let mut solver = FrontSolver {
        model: m,
        mu,
        state,
        dt: p.dt,
        lhs: Tridiagonal::zeros(unknowns),
        rhs_op: Tridiagonal::zeros(unknowns),
        buf: vec![0.0; unknowns],
        out: vec![0.0; p.n + 1],
        reaction_n: vec![0.0; p.n + 1],
        reaction_mid: vec![0.0; p.n + 1],
        prev: None,
        core: (g0, h0),
        min_extent: 4.0 * (h0 - g0) / p.n as f64,
    };

    let total = (p.horizon / p.dt).round() as usize;
    let stride = ((p.sample_every / p.dt).round() as usize).max(1);
    let mut steps = Vec::with_capacity(total + 1);
    steps.push(solver.record());
    let mut snapshots = vec![solver.state.clone()];
    let mut min_h_dot = solver.state.h_dot.min(-solver.state.g_dot);
    let mut min_value = solver.state.v.iter().copied().fold(f64::INFINITY, f64::min);
    let mut max_value = solver.state.sup();
    let mut stop_reason = StopReason::Horizon;

    for k in 1..=total {
        solver.step()?;
        let rec = solver.record();
        min_h_dot = min_h_dot.min(rec.h_dot).min(-rec.g_dot);
        for &x in &solver.state.v {
            min_value = min_value.min(x);
            max_value = max_value.max(x);
        }
        steps.push(rec);
        if k % stride == 0 || k == total {
            snapshots.push(solver.state.clone());
            if let Some(rule) = p.stop {
                if k < total {
                    let partial = FrontTrajectory {
                        mode,
                        mu,
                        h0,
                        g0,
                        dt: p.dt,
                        steps: Vec::new(),
                        snapshots: Vec::new(),
                        stop_reason,
                        min_h_dot,
                        min_value,
                        max_value,
                    };
                    match verdict_from(&partial, &steps, rule.critical_length, &rule.classify).0 {
                        Verdict::Spreading => {
                            stop_reason = StopReason::Spreading;
                            break;
                        }
                        Verdict::Vanishing => {
                            stop_reason = StopReason::Vanishing;
                            break;
                        }
                        Verdict::Undetermined => {}
                    }
                }
            }
        }
    }
    if snapshots.last().map(|s| s.t) != Some(solver.state.t) {
        snapshots.push(solver.state.clone());
    }
    Ok(FrontTrajectory {
        mode,
        mu,
        h0,
        g0,
        dt: p.dt,
        steps,
        snapshots,
        stop_reason,
        min_h_dot,
        min_value,
        max_value,
    })
}

/// Single front with a Neumann condition at `x = 0`; `u0` on `[0, h0]` must
/// satisfy `u0'(0) = u0(h0) = 0` and be positive on `[0, h0)`.
pub fn fb_evolve_single(
    m: &ReactionModel,
    mu: f64,
    u0: &dyn Fn(f64) -> f64,
    h0: f64,
    p: &FrontParams,
) -> Result<FrontTrajectory, FreeBoundaryError> {
    evolve(m, mu, FrontMode::Single, u0, 0.0, h0, p)
}

/// Two fronts; `u0` on `[g0, h0]` must vanish at both ends and be positive
/// inside.
pub fn fb_evolve_double(
    m: &ReactionModel,
    mu: f64,
    u0: &dyn Fn(f64) -> f64,
    g0: f64,
    h0: f64,
    p: &FrontParams,
) -> Result<FrontTrajectory, FreeBoundaryError> {
    evolve(m, mu, FrontMode::Double, u0, g0, h0, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evidence {
    pub critical_length: f64,
    pub vanish_tol: f64,
    pub spread_tol: f64,
    pub plateau_tol: f64,
    pub slack: f64,
    pub extent_final: f64,
    pub extent_rate_final: f64,
    /// Windowed minimum of `u` over the initial interval.
    pub core_min_window: f64,
    pub spreading_threshold: f64,
    /// The final extent lies in `(l*, slack·l*]`.
    pub slack_binding: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationOutcome {
    pub verdict: Verdict,
    /// `h` for a single front, `h − g` for two fronts.
    pub h_final: f64,
    pub u_sup_final: f64,
    pub t_final: f64,
    pub evidence: Evidence,
}

fn verdict_from(
    traj: &FrontTrajectory,
    steps: &[StepRecord],
    lstar: f64,
    o: &ClassifyOptions,
) -> (Verdict, Evidence, f64, f64) {
    let last = steps.last().expect("non-empty steps");
    let extent = last.h - last.g;
    let rate = last.h_dot - last.g_dot;
    let (initial_extent, margin) = match traj.mode {
        FrontMode::Single => (traj.h0, 5.0),
        FrontMode::Double => (traj.h0 - traj.g0, 10.0),
    };
    let threshold = (2.0 * lstar).max(initial_extent + margin);
    let window_start = last.t * (1.0 - o.window_fraction);
    let core_min_window = steps
        .iter()
        .rev()
        .take_while(|r| r.t >= window_start)
        .map(|r| r.core_min)
        .fold(f64::INFINITY, f64::min);
    let evidence = Evidence {
        critical_length: lstar,
        vanish_tol: o.vanish_tol,
        spread_tol: o.spread_tol,
        plateau_tol: o.plateau_tol,
        slack: o.slack,
        extent_final: extent,
        extent_rate_final: rate,
        core_min_window,
        spreading_threshold: threshold,
        slack_binding: extent > lstar && extent <= lstar * o.slack,
    };
    let verdict = if last.t < o.min_horizon {
        Verdict::Undetermined
    } else if rate < o.plateau_tol && extent <= lstar * o.slack && last.u_sup < o.vanish_tol {
        Verdict::Vanishing
    } else if extent > threshold && core_min_window > o.spread_tol {
        Verdict::Spreading
    } else {
        Verdict::Undetermined
    };
    (verdict, evidence, extent, last.u_sup)
}

/// Finite-horizon dichotomy verdict. `lstar` is `l*` for a single front and
/// `L*` for two fronts.
pub fn classify(
    traj: &FrontTrajectory,
    lstar: f64,
    opts: &ClassifyOptions,
) -> ClassificationOutcome {
    let (verdict, evidence, h_final, u_sup_final) = verdict_from(traj, &traj.steps, lstar, opts);
    ClassificationOutcome {
        verdict,
        h_final,
        u_sup_final,
        t_final: traj.t_final(),
        evidence,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Right,
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontSpeed {
    pub estimate: SpeedEstimate,
    pub intercept: f64,
    /// `|front(T)| / T`.
    pub ratio: f64,
}

/// Least-squares slope of `h(t)` over the trailing `window_fraction`.
pub fn front_speed(
    traj: &FrontTrajectory,
    verdict: Verdict,
    window_fraction: f64,
) -> Result<FrontSpeed, FreeBoundaryError> {
    front_speed_side(traj, Side::Right, verdict, window_fraction)
}

/// As [`front_speed`], for `h` or `−g`.
pub fn front_speed_side(
    traj: &FrontTrajectory,
    side: Side,
    verdict: Verdict,
    window_fraction: f64,
) -> Result<FrontSpeed, FreeBoundaryError> {
    if verdict != Verdict::Spreading {
        return Err(FreeBoundaryError::NotSpreading(verdict));
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(FreeBoundaryError::InvalidArgument(format!(
            "window_fraction must lie in (0, 1], got {window_fraction}"
        )));
    }
    let t_end = traj.t_final();
    let t_start = t_end * (1.0 - window_fraction);
    let pos = |r: &StepRecord| match side {
        Side::Right => r.h,
        Side::Left => -r.g,
    };
    let (ts, ys): (Vec<f64>, Vec<f64>) = traj
        .steps
        .iter()
        .filter(|r| r.t >= t_start - 1e-12)
        .map(|r| (r.t, pos(r)))
        .unzip();
    let fit = fit_line(&ts, &ys).ok_or_else(|| {
        FreeBoundaryError::InvalidArgument("fit window holds fewer than two samples".into())
    })?;
    Ok(FrontSpeed {
        estimate: SpeedEstimate {
            value: fit.slope,
            window: (ts[0], *ts.last().unwrap()),
            residual: fit.rms_residual,
            method: SpeedMethod::FrontSlope,
        },
        intercept: fit.intercept,
        ratio: pos(traj.final_record()) / t_end,
    })
}

/// `r = d/dt ∫u dx + (ḣ − ġ)/μ − ∫ u f dx` per step, from the recorded
/// series with a forward difference and trapezoid averages. Returns
/// `(t_{n+1/2}, r)`.
pub fn mass_balance_residual(traj: &FrontTrajectory) -> Vec<(f64, f64)> {
    traj.steps
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let dt = b.t - a.t;
            let dm = (b.mass - a.mass) / dt;
            let flux = 0.5 * ((a.h_dot + b.h_dot) - (a.g_dot + b.g_dot)) / traj.mu;
            let src = 0.5 * (a.reaction + b.reaction);
            (0.5 * (a.t + b.t), dm + flux - src)
        })
        .collect()
}

/// Options for [`critical_mu`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalMuOptions {
    pub front: FrontParams,
    pub classify: ClassifyOptions,
    /// `L*` of the Dirichlet problem.
    pub critical_length: f64,
    /// Target `hi/lo − 1`.
    pub rel_width: f64,
    /// Horizon multiplier cap for undetermined probes.
    pub max_horizon_factor: f64,
    pub recheck_factor: f64,
}

impl Default for CriticalMuOptions {
    fn default() -> Self {
        Self {
            front: FrontParams {
                n: 200,
                dt: 0.01,
                horizon: 100.0,
                sample_every: 1.0,
                stop: None,
            },
            classify: ClassifyOptions::default(),
            critical_length: std::f64::consts::PI,
            rel_width: 0.05,
            max_horizon_factor: 8.0,
            recheck_factor: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuProbe {
    pub mu: f64,
    pub verdict: Verdict,
    pub horizon_used: f64,
    pub extent_final: f64,
    pub u_sup_final: f64,
    pub outcome: ClassificationOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalMu {
    pub lo: f64,
    pub hi: f64,
    pub probes: Vec<MuProbe>,
    /// Verdicts at `lo·(1 − r)` and `hi·(1 + r)`.
    pub recheck: (MuProbe, MuProbe),
}

impl CriticalMu {
    pub fn rel_width(&self) -> f64 {
        self.hi / self.lo - 1.0
    }
}

/// Evolves and classifies one double-front run, doubling the horizon while
/// the verdict is undetermined.
pub fn probe_mu(
    m: &ReactionModel,
    u0: &dyn Fn(f64) -> f64,
    g0: f64,
    h0: f64,
    mu: f64,
    o: &CriticalMuOptions,
) -> Result<MuProbe, FreeBoundaryError> {
    let mut horizon = o.front.horizon;
    loop {
        let params = FrontParams {
            horizon,
            stop: Some(StopRule {
                critical_length: o.critical_length,
                classify: o.classify,
            }),
            ..o.front
        };
        let traj = fb_evolve_double(m, mu, u0, g0, h0, &params)?;
        let out = classify(&traj, o.critical_length, &o.classify);
        let probe = MuProbe {
            mu,
            verdict: out.verdict,
            horizon_used: out.t_final,
            extent_final: out.h_final,
            u_sup_final: out.u_sup_final,
            outcome: out,
        };
        if out.verdict != Verdict::Undetermined
            || horizon * 2.0 > o.front.horizon * o.max_horizon_factor
        {
            return Ok(probe);
        }
        horizon *= 2.0;
    }
}

/// Bisection (geometric) on `μ` for the double-front spreading threshold.
pub fn critical_mu(
    m: &ReactionModel,
    u0: &(dyn Fn(f64) -> f64 + Sync),
    g0: f64,
    h0: f64,
    bracket: (f64, f64),
    o: &CriticalMuOptions,
) -> Result<CriticalMu, FreeBoundaryError> {
    if !(h0 - g0 < o.critical_length) {
        return Err(FreeBoundaryError::Bracket(format!(
            "h0 - g0 = {} >= L* = {}; spreading is forced",
            h0 - g0,
            o.critical_length
        )));
    }
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(FreeBoundaryError::Bracket(format!(
            "bad bracket ({lo}, {hi})"
        )));
    }
    let (plo, phi) = join(
        || probe_mu(m, u0, g0, h0, lo, o),
        || probe_mu(m, u0, g0, h0, hi, o),
    );
    let (plo, phi) = (plo?, phi?);
    if plo.verdict != Verdict::Vanishing || phi.verdict != Verdict::Spreading {
        return Err(FreeBoundaryError::Bracket(format!(
            "need Vanishing at {lo} and Spreading at {hi}, got {:?} and {:?}",
            plo.verdict, phi.verdict
        )));
    }
    let mut probes = vec![plo, phi];
    while hi / lo - 1.0 > o.rel_width {
        let mid = (lo * hi).sqrt();
        let p = probe_mu(m, u0, g0, h0, mid, o)?;
        probes.push(p);
        match p.verdict {
            Verdict::Vanishing => lo = mid,
            Verdict::Spreading => hi = mid,
            Verdict::Undetermined => return Err(FreeBoundaryError::HorizonCap { mu: mid, lo, hi }),
        }
    }
    let r = o.recheck_factor;
    let (below, above) = join(
        || probe_mu(m, u0, g0, h0, lo * (1.0 - r), o),
        || probe_mu(m, u0, g0, h0, hi * (1.0 + r), o),
    );
    Ok(CriticalMu {
        lo,
        hi,
        probes,
        recheck: (below?, above?),
    })
}
