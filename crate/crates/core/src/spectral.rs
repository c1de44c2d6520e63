//! Principal Lyapunov exponents of `v_t = v_xx − γ v_x + a(t) v` on `[0, l]`
//! by normalized long-time evolution, and the critical lengths where they
//! change sign.
//!
//! Diffusion (and drift) are advanced with BDF2 after one backward Euler
//! start step; BDF2 is L-stable, so stiff grid modes cannot outlive the
//! principal mode on short domains. The space-independent `a(t)` enters as
//! the exact factor `exp(∫a)`, accumulated in the log growth. The profile
//! is renormalized to unit sup-norm once per time unit.

use thiserror::Error;

use crate::forcing::TrigPolynomial;
use crate::tridiag::Tridiagonal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(
        "exponent has the same sign at both bracket ends: λ({lo})={lambda_lo}, λ({hi})={lambda_hi}"
    )]
    BracketSign {
        lo: f64,
        hi: f64,
        lambda_lo: f64,
        lambda_hi: f64,
    },
    #[error("critical length requires mean(a) > 0, got {0}")]
    NonPositiveMean(f64),
}

/// Zeroth-order coefficient `a(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCoefficient {
    pub a: TrigPolynomial,
}

impl LinearCoefficient {
    pub fn new(a: TrigPolynomial) -> Self {
        Self { a }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(TrigPolynomial::constant(c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryKind {
    /// `v_x(t,0) = v(t,l) = 0`, no drift.
    NeumannDirichlet,
    /// `v(t,0) = v(t,l) = 0` with drift `−γ v_x`.
    DirichletDrift { gamma: f64 },
}

impl BoundaryKind {
    pub fn label(&self) -> &'static str {
        match self {
            BoundaryKind::NeumannDirichlet => "neumann_dirichlet",
            BoundaryKind::DirichletDrift { .. } => "dirichlet_drift",
        }
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            BoundaryKind::NeumannDirichlet => 0.0,
            BoundaryKind::DirichletDrift { gamma } => gamma,
        }
    }

    /// Closed-form exponent for `a ≡ 0`.
    pub fn pure_diffusion_exponent(&self, l: f64) -> f64 {
        use std::f64::consts::PI;
        match *self {
            BoundaryKind::NeumannDirichlet => -PI * PI / (4.0 * l * l),
            BoundaryKind::DirichletDrift { gamma } => -(gamma * gamma / 4.0 + PI * PI / (l * l)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovParams {
    /// Grid cells on `[0, l]`.
    pub n: usize,
    pub horizon: f64,
    pub dt: f64,
    /// Tail-variation tolerance for the convergence flag.
    pub tol: f64,
    /// Initial time excluded from the fitted estimate.
    pub warmup: f64,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        Self {
            n: 400,
            horizon: 50.0,
            dt: 0.005,
            tol: 1e-4,
            warmup: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovEstimate {
    /// Least-squares growth rate of the accumulated log-norm after warmup.
    pub value: f64,
    pub horizon: f64,
    /// `log ‖v‖∞` gained during each unit time interval.
    pub growth_log: Vec<f64>,
    /// `(Σ growth_log) / horizon`, the finite-time version of the limsup.
    pub raw_average: f64,
    /// Spread of the running estimate over the last half of the horizon.
    pub tail_variation: f64,
    pub converged: bool,
}

struct Operator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

fn build_operator(kind: BoundaryKind, n: usize, dx: f64) -> (Operator, Vec<f64>) {
    let inv = 1.0 / (dx * dx);
    match kind {
        BoundaryKind::NeumannDirichlet => {
            // unknowns x_0..x_{n-1}; ghost node v_{-1} = v_1
            let m = n;
            let mut op = Operator {
                lower: vec![inv; m],
                diag: vec![-2.0 * inv; m],
                upper: vec![inv; m],
            };
            op.upper[0] = 2.0 * inv;
            let l = n as f64 * dx;
            let init = (0..m)
                .map(|i| {
                    let x = i as f64 * dx / l;
                    1.0 - x * x
                })
                .collect();
            (op, init)
        }
        BoundaryKind::DirichletDrift { gamma } => {
            // unknowns x_1..x_{n-1}
            let m = n - 1;
            let adv = gamma / (2.0 * dx);
            let op = Operator {
                lower: vec![inv + adv; m],
                diag: vec![-2.0 * inv; m],
                upper: vec![inv - adv; m],
            };
            let init = (1..n)
                .map(|i| {
                    let x = i as f64 / n as f64;
                    4.0 * x * (1.0 - x)
                })
                .collect();
            (op, init)
        }
    }
}

fn implicit_matrix(op: &Operator, theta_dt: f64) -> Tridiagonal {
    let m = op.diag.len();
    let mut a = Tridiagonal::zeros(m);
    for i in 0..m {
        a.lower[i] = -theta_dt * op.lower[i];
        a.diag[i] = 1.0 - theta_dt * op.diag[i];
        a.upper[i] = -theta_dt * op.upper[i];
    }
    a
}

fn validate(l: f64, p: &LyapunovParams, kind: BoundaryKind) -> Result<(), SpectralError> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(SpectralError::InvalidArgument(format!(
            "l must be positive, got {l}"
        )));
    }
    if p.n < 16 {
        return Err(SpectralError::InvalidArgument(format!(
            "need at least 16 cells, got {}",
            p.n
        )));
    }
    if !(p.horizon > p.warmup + 2.0) || p.warmup < 0.0 {
        return Err(SpectralError::InvalidArgument(format!(
            "horizon {} must exceed warmup {} by at least 2",
            p.horizon, p.warmup
        )));
    }
    let dx = l / p.n as f64;
    if !(p.dt > 0.0) || p.dt > dx * (1.0 + 1e-12) {
        return Err(SpectralError::InvalidArgument(format!(
            "dt = {} must satisfy 0 < dt <= dx = {dx}",
            p.dt
        )));
    }
    if let BoundaryKind::DirichletDrift { gamma } = kind {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(SpectralError::InvalidArgument(format!(
                "gamma must be >= 0, got {gamma}"
            )));
        }
    }
    Ok(())
}

/// Running least-squares slope accumulator.
#[derive(Default, Clone, Copy)]
struct SlopeFit {
    n: f64,
    st: f64,
    sy: f64,
    stt: f64,
    sty: f64,
}

impl SlopeFit {
    fn push(&mut self, t: f64, y: f64) {
        self.n += 1.0;
        self.st += t;
        self.sy += y;
        self.stt += t * t;
        self.sty += t * y;
    }

    fn slope(&self) -> f64 {
        let den = self.n * self.stt - self.st * self.st;
        (self.n * self.sty - self.st * self.sy) / den
    }
}

/// Exponent for the given boundary kind.
pub fn lyapunov(
    c: &LinearCoefficient,
    kind: BoundaryKind,
    l: f64,
    p: &LyapunovParams,
) -> Result<LyapunovEstimate, SpectralError> {
    validate(l, p, kind)?;
    let dx = l / p.n as f64;
    let steps_per_unit = (1.0 / p.dt).round().max(1.0) as usize;
    let dt = 1.0 / steps_per_unit as f64;
    let units = p.horizon.ceil() as usize;
    let horizon = units as f64;
    let warmup_units = p.warmup.ceil() as usize;

    let (op, mut v) = build_operator(kind, p.n, dx);
    let m = v.len();
    let mut be = implicit_matrix(&op, dt);
    let mut bdf2 = implicit_matrix(&op, 2.0 / 3.0 * dt);
    let mut prev = v.clone();
    let mut work = vec![0.0; m];

    let mut growth_log = Vec::with_capacity(units);
    let mut cumulative = 0.0;
    let mut fit = SlopeFit::default();
    let mut running = Vec::new();
    let mut step = 0usize;
    for unit in 1..=units {
        let t_unit = (unit - 1) as f64;
        for _ in 0..steps_per_unit {
            if step == 0 {
                prev.copy_from_slice(&v);
                be.solve_in_place(&mut v);
            } else {
                for i in 0..m {
                    work[i] = (4.0 * v[i] - prev[i]) / 3.0;
                }
                bdf2.solve_in_place(&mut work);
                std::mem::swap(&mut prev, &mut v);
                std::mem::swap(&mut v, &mut work);
            }
            step += 1;
        }
        let norm = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        // exact integrating factor for the space-independent coefficient
        let g = norm.ln() + c.a.integral(t_unit, t_unit + 1.0);
        v.iter_mut().for_each(|x| *x /= norm);
        prev.iter_mut().for_each(|x| *x /= norm);
        growth_log.push(g);
        cumulative += g;
        if unit >= warmup_units {
            fit.push(unit as f64, cumulative);
            if unit > warmup_units && 2 * unit >= units {
                running.push(fit.slope());
            }
        }
    }
    let value = fit.slope();
    let (lo, hi) = running
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let tail_variation = if running.is_empty() {
        f64::INFINITY
    } else {
        hi - lo
    };
    Ok(LyapunovEstimate {
        value,
        horizon,
        raw_average: growth_log.iter().sum::<f64>() / horizon,
        growth_log,
        tail_variation,
        converged: tail_variation < p.tol,
    })
}

/// `λ(a, l)`: Neumann at 0, Dirichlet at `l`.
pub fn lyapunov_nd(
    c: &LinearCoefficient,
    l: f64,
    p: &LyapunovParams,
) -> Result<LyapunovEstimate, SpectralError> {
    lyapunov(c, BoundaryKind::NeumannDirichlet, l, p)
}

/// `λ̃(a, γ, l)`: Dirichlet at both ends with drift `−γ v_x`.
pub fn lyapunov_dd_drift(
    c: &LinearCoefficient,
    gamma: f64,
    l: f64,
    p: &LyapunovParams,
) -> Result<LyapunovEstimate, SpectralError> {
    lyapunov(c, BoundaryKind::DirichletDrift { gamma }, l, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalLength {
    pub length: f64,
    pub lambda: f64,
    pub probes: usize,
}

/// Stop criterion on `|λ|` at the bisection midpoint.
pub const CRITICAL_LAMBDA_TOL: f64 = 1e-4;
pub const MAX_CRITICAL_PROBES: usize = 30;

/// Length where the exponent changes sign, by bisection on `l`.
/// Each probe uses `dt = min(p.dt, l / p.n)`.
pub fn critical_length(
    c: &LinearCoefficient,
    kind: BoundaryKind,
    bracket: (f64, f64),
    p: &LyapunovParams,
) -> Result<CriticalLength, SpectralError> {
    let mean = c.a.mean();
    if !(mean > 0.0) {
        return Err(SpectralError::NonPositiveMean(mean));
    }
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(SpectralError::InvalidArgument(format!(
            "bad bracket ({lo}, {hi})"
        )));
    }
    let probe = |l: f64| -> Result<f64, SpectralError> {
        let params = LyapunovParams {
            dt: p.dt.min(l / p.n as f64),
            ..*p
        };
        Ok(lyapunov(c, kind, l, &params)?.value)
    };
    let lambda_lo = probe(lo)?;
    let lambda_hi = probe(hi)?;
    let mut probes = 2;
    if !(lambda_lo < 0.0 && lambda_hi > 0.0) {
        return Err(SpectralError::BracketSign {
            lo,
            hi,
            lambda_lo,
            lambda_hi,
        });
    }
    let mut best = (0.5 * (lo + hi), f64::INFINITY);
    while probes < MAX_CRITICAL_PROBES {
        let mid = 0.5 * (lo + hi);
        let lam = probe(mid)?;
        probes += 1;
        best = (mid, lam);
        if lam.abs() < CRITICAL_LAMBDA_TOL {
            break;
        }
        if lam < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalLength {
        length: best.0,
        lambda: best.1,
        probes,
    })
}
