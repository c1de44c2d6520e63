//! The half-line nonlocal problem
//!
//! ```text
//! u_t = u_xx − μ u_x(t,0) u_x + u f(t,u),   u(t,0) = 0,   u(t,∞) = V*(t)
//! ```
//!
//! evolved to its attracting solution, the spreading speed read off as `μ`
//! times the time-averaged boundary flux, an autonomous shooting oracle for
//! the same speed, `±ε` bracketing, and the part metric.
//!
//! Each step is Lie-split: a Heun reaction substep applied nodewise (and to
//! the pinned far-field value), then backward Euler for diffusion and the
//! drift `−c u_x` with `c = μ u_x(t,0)` lagged one step. With centered drift
//! and `c·Δx/2 < 1` the implicit matrix is an M-matrix, so the scheme keeps
//! order, positivity and spatial monotonicity.

use rayon::join;
use thiserror::Error;

use crate::forcing::ReactionModel;
use crate::kinetics::{self, heun_step, KineticsError};
use crate::speed::{SpeedEstimate, SpeedMethod};
use crate::tridiag::Tridiagonal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemiWaveError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
    #[error("boundary flux collapsed to {flux:e} at t={t}; parameters are on the vanishing side")]
    FluxCollapse { t: f64, flux: f64 },
    #[error(
        "two starts disagree by {gap:e} (> {tol:e}) after half the horizon; raise horizon or X"
    )]
    NotAttracted { gap: f64, tol: f64 },
    #[error("cell Péclet number {0} >= 1; refine the grid")]
    Peclet(f64),
    #[error("profiles are not ordered: u1 - u2 = {excess:e} at node {node}")]
    OrderViolation { node: usize, excess: f64 },
    #[error("profile lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("shooting bracket failed: {0}")]
    Bracket(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiWaveParams {
    /// Truncation length `X`.
    pub x_len: f64,
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Trailing fraction of the horizon used for the flux average.
    pub window_fraction: f64,
    /// Required two-start agreement after half the horizon.
    pub attraction_tol: f64,
    /// Time between recorded diagnostics and window snapshots.
    pub sample_every: f64,
    /// Spinup for `V*`; `None` uses `100 / mean(a)`.
    pub spinup: Option<f64>,
}

impl Default for SemiWaveParams {
    fn default() -> Self {
        Self {
            x_len: 40.0,
            n: 800,
            dt: 0.005,
            horizon: 100.0,
            window_fraction: 0.5,
            attraction_tol: 1e-5,
            sample_every: 1.0,
            spinup: None,
        }
    }
}

impl SemiWaveParams {
    pub fn dx(&self) -> f64 {
        self.x_len / self.n as f64
    }

    fn validate(&self, m: &ReactionModel) -> Result<(), SemiWaveError> {
        let bad = |what: String| Err(SemiWaveError::InvalidArgument(what));
        if self.n < 16 {
            return bad(format!("need at least 16 cells, got {}", self.n));
        }
        for (name, v) in [
            ("x_len", self.x_len),
            ("dt", self.dt),
            ("horizon", self.horizon),
            ("sample_every", self.sample_every),
            ("attraction_tol", self.attraction_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 0.5) {
            return bad(format!(
                "window_fraction must lie in (0, 0.5] so the window follows the attraction gate, got {}",
                self.window_fraction
            ));
        }
        let mean = m.a.mean();
        if mean > 0.0 && self.x_len < 10.0 / mean.sqrt() {
            return bad(format!(
                "X = {} is shorter than 10 front widths ({})",
                self.x_len,
                10.0 / mean.sqrt()
            ));
        }
        Ok(())
    }
}

/// Profile of the half-line problem on the uniform grid `x_i = i·X/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfLineState {
    pub x_len: f64,
    pub n: usize,
    pub t: f64,
    pub values: Vec<f64>,
    /// One-sided second-order `u_x(t,0)`.
    pub flux0: f64,
}

impl HalfLineState {
    pub fn dx(&self) -> f64 {
        self.x_len / self.n as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    /// Value at `x`, linearly interpolated.
    pub fn value_at(&self, x: f64) -> f64 {
        let s = (x / self.dx()).clamp(0.0, self.n as f64);
        let i = (s.floor() as usize).min(self.n - 1);
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

/// `(4u₁ − u₂)/(2Δx)`, using `u₀ = 0`.
pub fn boundary_flux(values: &[f64], dx: f64) -> f64 {
    (4.0 * values[1] - values[2] - 3.0 * values[0]) / (2.0 * dx)
}

/// Smallest forward difference `u_{i+1} − u_i`.
pub fn min_forward_difference(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// One run of the half-line solver.
struct HalfLineSolver<'a> {
    model: &'a ReactionModel,
    mu: f64,
    dx: f64,
    dt: f64,
    t: f64,
    u: Vec<f64>,
    far: f64,
    flux: f64,
    matrix: Tridiagonal,
    rhs: Vec<f64>,
}

impl<'a> HalfLineSolver<'a> {
    fn new(model: &'a ReactionModel, mu: f64, p: &SemiWaveParams, u0: Vec<f64>, far: f64) -> Self {
        let dx = p.dx();
        let flux = boundary_flux(&u0, dx);
        let m = p.n - 1;
        Self {
            model,
            mu,
            dx,
            dt: p.dt,
            t: 0.0,
            u: u0,
            far,
            flux,
            matrix: Tridiagonal::zeros(m),
            rhs: vec![0.0; m],
        }
    }

    fn step(&mut self) -> Result<(), SemiWaveError> {
        let n = self.u.len() - 1;
        let (dt, dx) = (self.dt, self.dx);
        for i in 1..n {
            self.rhs[i - 1] = heun_step(self.model, self.t, self.u[i], dt);
        }
        self.far = heun_step(self.model, self.t, self.far, dt);

        let c = self.mu * self.flux;
        let peclet = c.abs() * dx / 2.0;
        if peclet >= 1.0 {
            return Err(SemiWaveError::Peclet(peclet));
        }
        let diff = dt / (dx * dx);
        let adv = dt * c / (2.0 * dx);
        for k in 0..n - 1 {
            self.matrix.lower[k] = -(diff + adv);
            self.matrix.diag[k] = 1.0 + 2.0 * diff;
            self.matrix.upper[k] = -(diff - adv);
        }
        self.rhs[n - 2] += (diff - adv) * self.far;
        self.matrix.solve_in_place(&mut self.rhs);
        self.u[1..n].copy_from_slice(&self.rhs);
        self.u[0] = 0.0;
        self.u[n] = self.far;
        self.t += dt;
        self.flux = boundary_flux(&self.u, dx);
        if self.flux <= 0.0 {
            return Err(SemiWaveError::FluxCollapse {
                t: self.t,
                flux: self.flux,
            });
        }
        Ok(())
    }

    fn state(&self, x_len: f64) -> HalfLineState {
        HalfLineState {
            x_len,
            n: self.u.len() - 1,
            t: self.t,
            values: self.u.clone(),
            flux0: self.flux,
        }
    }
}

/// Per-run diagnostics of [`semiwave_evolve`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SemiWaveDiagnostics {
    /// `(t, sup_x |u_low − u_up|)` at sample times.
    pub gap_history: Vec<(f64, f64)>,
    /// `(t, ρ(u_low, u_up))` at sample times.
    pub part_metric_history: Vec<(f64, f64)>,
    /// Worst `u_low − u_up` over sample times (≤ 0 when ordered).
    pub order_excess: f64,
    /// Smallest forward difference seen in either run over all steps.
    pub min_forward_difference: f64,
    /// `sup |u(t,X) − V*(t)|` over the averaging window.
    pub far_field_error: f64,
    /// `sup |u(t,X/2) − V*(t)|` over the averaging window.
    pub midfield_error: f64,
    /// Smallest boundary flux over the second half of the run.
    pub min_flux_late: f64,
    /// Largest profile value seen.
    pub sup_value: f64,
    /// Reference `V*` samples `(t, V*(t))` at sample times.
    pub v_star: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiWaveResult {
    pub mu: f64,
    pub params: SemiWaveParams,
    /// Upper-start snapshots over the averaging window.
    pub profile_window: Vec<HalfLineState>,
    pub cstar: f64,
    /// `(t, u_x(t,0))` at every step of the upper start.
    pub flux_history: Vec<(f64, f64)>,
    /// Two-start disagreement over the second half of the run.
    pub attraction_gap: f64,
    pub speed: SpeedEstimate,
    pub diagnostics: SemiWaveDiagnostics,
}

/// Profiles bracketing the attractor from below and above.
pub fn canonical_starts(v0: f64, p: &SemiWaveParams) -> (Vec<f64>, Vec<f64>) {
    let dx = p.dx();
    let high: Vec<f64> = (0..=p.n).map(|i| v0 * (i as f64 * dx).tanh()).collect();
    // capped by the upper start so the pair is ordered at every node
    let low = high
        .iter()
        .enumerate()
        .map(|(i, &hi)| (i as f64 * dx / 10.0).min(v0).min(hi))
        .collect();
    (low, high)
}

fn spinup(m: &ReactionModel, p: &SemiWaveParams) -> f64 {
    p.spinup.unwrap_or_else(|| kinetics::default_spinup(m))
}

/// `V*` on the solver's time lattice.
fn reference_v_star(
    m: &ReactionModel,
    p: &SemiWaveParams,
) -> Result<kinetics::ScalarTrajectory, KineticsError> {
    kinetics::ap_positive_solution(m, spinup(m, p), p.horizon + p.dt, p.dt)
}

/// Evolves the canonical low and near-`V*` starts.
pub fn semiwave_evolve(
    m: &ReactionModel,
    mu: f64,
    p: &SemiWaveParams,
) -> Result<SemiWaveResult, SemiWaveError> {
    let v0 = reference_v_star(m, p)?.values[0];
    let (low, high) = canonical_starts(v0, p);
    semiwave_evolve_from(m, mu, p, low, high)
}

/// Evolves two nested starts `low ≤ high` in lockstep.
pub fn semiwave_evolve_from(
    m: &ReactionModel,
    mu: f64,
    p: &SemiWaveParams,
    low: Vec<f64>,
    high: Vec<f64>,
) -> Result<SemiWaveResult, SemiWaveError> {
    p.validate(m)?;
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(SemiWaveError::InvalidArgument(format!(
            "mu must be positive, got {mu}"
        )));
    }
    for u0 in [&low, &high] {
        if u0.len() != p.n + 1 {
            return Err(SemiWaveError::LengthMismatch(u0.len(), p.n + 1));
        }
        if u0[0] != 0.0 || u0.iter().any(|&v| !(v >= 0.0)) {
            return Err(SemiWaveError::InvalidArgument(
                "initial profile must vanish at x=0 and be nonnegative".into(),
            ));
        }
    }
    let vstar = reference_v_star(m, p)?;
    let far0 = vstar.values[0];
    let mut lo = HalfLineSolver::new(m, mu, p, low, far0);
    let mut hi = HalfLineSolver::new(m, mu, p, high, far0);

    let steps = (p.horizon / p.dt).round() as usize;
    let sample_stride = ((p.sample_every / p.dt).round() as usize).max(1);
    let half = steps / 2;
    let window_start = steps - ((p.window_fraction * steps as f64).round() as usize).max(1);
    let mid = p.n / 2;

    let mut diag = SemiWaveDiagnostics {
        min_forward_difference: min_forward_difference(&lo.u).min(min_forward_difference(&hi.u)),
        min_flux_late: f64::INFINITY,
        sup_value: lo.u.iter().chain(&hi.u).fold(0.0, |a, &b| a.max(b)),
        ..Default::default()
    };
    let mut flux_history = Vec::with_capacity(steps + 1);
    flux_history.push((0.0, hi.flux));
    let mut profile_window = Vec::new();
    let mut attraction_gap: f64 = 0.0;
    let record =
        |step: usize, lo: &HalfLineSolver, hi: &HalfLineSolver, diag: &mut SemiWaveDiagnostics| {
            let gap =
                lo.u.iter()
                    .zip(&hi.u)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
            let excess =
                lo.u.iter()
                    .zip(&hi.u)
                    .map(|(a, b)| a - b)
                    .fold(f64::NEG_INFINITY, f64::max);
            diag.order_excess = if step == 0 {
                excess
            } else {
                diag.order_excess.max(excess)
            };
            let t = step as f64 * p.dt;
            diag.gap_history.push((t, gap));
            if let Ok(rho) = part_metric(&lo.u, &hi.u) {
                diag.part_metric_history.push((t, rho));
            }
            diag.v_star.push((t, vstar.values[step]));
            gap
        };
    record(0, &lo, &hi, &mut diag);

    for step in 1..=steps {
        lo.step()?;
        hi.step()?;
        flux_history.push((hi.t, hi.flux));
        for u in [&lo.u, &hi.u] {
            diag.min_forward_difference =
                diag.min_forward_difference.min(min_forward_difference(u));
            diag.sup_value = u.iter().fold(diag.sup_value, |a, &b| a.max(b));
        }
        if step >= half {
            diag.min_flux_late = diag.min_flux_late.min(lo.flux).min(hi.flux);
            let gap =
                lo.u.iter()
                    .zip(&hi.u)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
            attraction_gap = attraction_gap.max(gap);
        }
        if step >= window_start {
            let v = vstar.values[step];
            diag.far_field_error = diag.far_field_error.max((hi.u[p.n] - v).abs());
            diag.midfield_error = diag.midfield_error.max((hi.u[mid] - v).abs());
        }
        if step % sample_stride == 0 || step == steps {
            record(step, &lo, &hi, &mut diag);
            if step >= window_start {
                profile_window.push(hi.state(p.x_len));
            }
        }
    }

    if attraction_gap >= p.attraction_tol {
        return Err(SemiWaveError::NotAttracted {
            gap: attraction_gap,
            tol: p.attraction_tol,
        });
    }

    let window = &flux_history[window_start..];
    let avg = |w: &[(f64, f64)]| {
        let mut s = 0.0;
        for pair in w.windows(2) {
            s += 0.5 * (pair[0].1 + pair[1].1) * (pair[1].0 - pair[0].0);
        }
        s / (w.last().unwrap().0 - w[0].0)
    };
    let mean_flux = avg(window);
    let cstar = mu * mean_flux;
    let split = window.len() / 2;
    let drift = mu * (avg(&window[..=split]) - avg(&window[split..])).abs();
    let span = (window[0].0, window.last().unwrap().0);
    Ok(SemiWaveResult {
        mu,
        params: *p,
        profile_window,
        cstar,
        flux_history,
        attraction_gap,
        speed: SpeedEstimate {
            value: cstar,
            window: span,
            residual: drift,
            method: SpeedMethod::SemiWaveFlux,
        },
        diagnostics: diag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsBracket {
    pub eps: f64,
    pub c_lower: f64,
    pub c_upper: f64,
}

impl EpsBracket {
    pub fn gap(&self) -> f64 {
        self.c_upper - self.c_lower
    }
}

/// Speeds of the `f − ε` and `f + ε` problems.
pub fn eps_bracket(
    m: &ReactionModel,
    mu: f64,
    eps: f64,
    p: &SemiWaveParams,
) -> Result<EpsBracket, SemiWaveError> {
    if !(eps >= 0.0) || eps >= m.a.mean() {
        return Err(SemiWaveError::InvalidArgument(format!(
            "eps must lie in [0, mean(a)), got {eps}"
        )));
    }
    let lower_model = m.perturbed(-eps);
    let upper_model = m.perturbed(eps);
    let (lo, hi) = join(
        || semiwave_evolve(&lower_model, mu, p),
        || semiwave_evolve(&upper_model, mu, p),
    );
    Ok(EpsBracket {
        eps,
        c_lower: lo?.cstar,
        c_upper: hi?.cstar,
    })
}

/// `ln max(1, max_i u2ᵢ/u1ᵢ)` over interior nodes, skipping `x = 0`.
/// Nodes where `u1 < 1e-12` are excluded.
pub fn part_metric(u1: &[f64], u2: &[f64]) -> Result<f64, SemiWaveError> {
    if u1.len() != u2.len() {
        return Err(SemiWaveError::LengthMismatch(u1.len(), u2.len()));
    }
    let mut ratio: f64 = 1.0;
    for (i, (&a, &b)) in u1.iter().zip(u2).enumerate().skip(1) {
        let scale = a.abs().max(b.abs()).max(1.0);
        if a > b + 1e-12 * scale {
            return Err(SemiWaveError::OrderViolation {
                node: i,
                excess: a - b,
            });
        }
        if a < 1e-12 {
            continue;
        }
        ratio = ratio.max(b / a);
    }
    Ok(ratio.ln())
}

/// Autonomous semi-wave speed from shooting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingResult {
    pub c: f64,
    /// `q'(0) = c / μ`.
    pub qprime0: f64,
    pub outer_iterations: usize,
}

impl ShootingResult {
    pub fn speed(&self) -> SpeedEstimate {
        SpeedEstimate {
            value: self.c,
            window: (0.0, 0.0),
            residual: OUTER_TOL,
            method: SpeedMethod::Shooting,
        }
    }
}

const INNER_TOL: f64 = 1e-10;
const OUTER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shot {
    Overshoot,
    TurnBack,
}

/// Integrates `q'' = c q' − q(a − bq)` from `(0, s)` until it passes the
/// saddle level `a/b` or turns back.
fn shoot(a: f64, b: f64, c: f64, s: f64) -> Shot {
    let target = a / b;
    let h = 2e-3 / a.sqrt();
    let x_max = 600.0 / a.sqrt();
    let rhs = |q: f64, p: f64| (p, c * p - q * (a - b * q));
    let (mut q, mut p) = (0.0, s);
    let mut x = 0.0;
    while x < x_max {
        let (k1q, k1p) = rhs(q, p);
        let (k2q, k2p) = rhs(q + 0.5 * h * k1q, p + 0.5 * h * k1p);
        let (k3q, k3p) = rhs(q + 0.5 * h * k2q, p + 0.5 * h * k2p);
        let (k4q, k4p) = rhs(q + h * k3q, p + h * k3p);
        q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        x += h;
        if q >= target {
            return Shot::Overshoot;
        }
        if p <= 0.0 {
            return Shot::TurnBack;
        }
    }
    // lingering at the saddle: only reachable when s is within rounding of the
    // separatrix
    Shot::TurnBack
}

/// `q'(0)` of the monotone profile joining `0` to `a/b` at speed `c`.
pub fn semiwave_slope(a: f64, b: f64, c: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = (a.sqrt() * a / b).max(1e-3);
    while shoot(a, b, c, hi) == Shot::TurnBack {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > INNER_TOL * hi.max(1e-3) {
        let mid = 0.5 * (lo + hi);
        match shoot(a, b, c, mid) {
            Shot::Overshoot => hi = mid,
            Shot::TurnBack => lo = mid,
        }
    }
    0.5 * (lo + hi)
}

/// Solves `c = μ·q'(0; c)` for the steady semi-wave of `f = a − b u` by
/// bisection on `c ∈ (0, 2√a)`.
pub fn shoot_autonomous(a: f64, b: f64, mu: f64) -> Result<ShootingResult, SemiWaveError> {
    if !(a > 0.0 && b > 0.0 && mu > 0.0) {
        return Err(SemiWaveError::InvalidArgument(format!(
            "a, b, mu must be positive (a={a}, b={b}, mu={mu})"
        )));
    }
    let kpp = 2.0 * a.sqrt();
    let mut lo = 0.0;
    let mut hi = kpp * (1.0 - 1e-6);
    if hi - mu * semiwave_slope(a, b, hi) <= 0.0 {
        return Err(SemiWaveError::Bracket(format!(
            "c saturates at the KPP speed {kpp} for mu={mu}"
        )));
    }
    let mut iterations = 0;
    while hi - lo > OUTER_TOL {
        let mid = 0.5 * (lo + hi);
        if mid - mu * semiwave_slope(a, b, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let c = 0.5 * (lo + hi);
    Ok(ShootingResult {
        c,
        qprime0: c / mu,
        outer_iterations: iterations,
    })
}
