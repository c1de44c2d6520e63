//! The spatially homogeneous problem `u' = u·f(t,u)` and its attracting
//! almost periodic positive solution `V*(t)`.

use thiserror::Error;

use crate::forcing::{HypothesisReport, ReactionModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KineticsError {
    #[error("reaction model fails hypotheses: {0:?}")]
    Hypotheses(HypothesisReport),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("time step {dt} violates stability guard dt < {limit}")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("{count} steps undershot zero and were clipped")]
    PositivityViolation { count: usize },
    #[error("two-start agreement gap {gap:e} exceeds {tol:e}; increase spinup")]
    NotAttracted { gap: f64, tol: f64 },
    #[error("oracle requires mean(a) > 0, got {0}")]
    NonPositiveMean(f64),
}

/// Uniformly sampled solution `values[i] ≈ u(t0 + i·dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTrajectory {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    /// Steps that went negative and were clipped to zero.
    pub clipped: usize,
}

impl ScalarTrajectory {
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.values.len().saturating_sub(1))
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("empty trajectory")
    }

    /// Linear interpolation, clamped to the sampled range.
    pub fn value_at(&self, t: f64) -> f64 {
        let s = ((t - self.t0) / self.dt).max(0.0);
        let i = (s.floor() as usize).min(self.values.len() - 1);
        if i + 1 >= self.values.len() {
            return self.values[i];
        }
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Samples with `t ≥ t_from`, re-based so the result starts at the first
    /// such sample.
    pub fn tail_from(&self, t_from: f64) -> ScalarTrajectory {
        let start = (((t_from - self.t0) / self.dt) - 1e-9).ceil().max(0.0) as usize;
        ScalarTrajectory {
            t0: self.time(start),
            dt: self.dt,
            values: self.values[start.min(self.values.len())..].to_vec(),
            clipped: self.clipped,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.time(i), v))
    }
}

/// One classical RK4 step of `u' = u·f(t,u)`.
#[inline]
pub fn rk4_step(m: &ReactionModel, t: f64, u: f64, dt: f64) -> f64 {
    let k1 = m.reaction(t, u);
    let k2 = m.reaction(t + 0.5 * dt, u + 0.5 * dt * k1);
    let k3 = m.reaction(t + 0.5 * dt, u + 0.5 * dt * k2);
    let k4 = m.reaction(t + dt, u + dt * k3);
    u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// One Heun (explicit trapezoid) step of `u' = u·f(t,u)`; increasing in `u`
/// for small `dt`, so it preserves pointwise order when applied nodewise.
#[inline]
pub fn heun_step(m: &ReactionModel, t: f64, u: f64, dt: f64) -> f64 {
    let k1 = m.reaction(t, u);
    let k2 = m.reaction(t + dt, u + dt * k1);
    u + 0.5 * dt * (k1 + k2)
}

fn require_hypotheses(m: &ReactionModel) -> Result<(), KineticsError> {
    let report = m.check_hypotheses();
    if report.ok() {
        Ok(())
    } else {
        Err(KineticsError::Hypotheses(report))
    }
}

/// Largest accepted RK4 step: `0.5 / sup|a|`.
pub fn step_limit(m: &ReactionModel) -> f64 {
    let s = m.a.abs_bound();
    if s > 0.0 {
        0.5 / s
    } else {
        f64::INFINITY
    }
}

pub fn ode_integrate(
    m: &ReactionModel,
    u0: f64,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<ScalarTrajectory, KineticsError> {
    require_hypotheses(m)?;
    if !(t1 > t0) || !(dt > 0.0) || !(u0 >= 0.0) || !u0.is_finite() {
        return Err(KineticsError::InvalidArgument(format!(
            "need t1 > t0, dt > 0, u0 >= 0 (t0={t0}, t1={t1}, dt={dt}, u0={u0})"
        )));
    }
    let limit = step_limit(m);
    if dt >= limit {
        return Err(KineticsError::StepTooLarge { dt, limit });
    }
    let steps = ((t1 - t0) / dt - 1e-9).ceil() as usize;
    let mut values = Vec::with_capacity(steps + 1);
    let mut u = u0;
    let mut clipped = 0;
    values.push(u);
    for n in 0..steps {
        u = rk4_step(m, t0 + n as f64 * dt, u, dt);
        if u < 0.0 {
            u = 0.0;
            clipped += 1;
        }
        values.push(u);
    }
    if clipped > 0 {
        return Err(KineticsError::PositivityViolation { count: clipped });
    }
    Ok(ScalarTrajectory {
        t0,
        dt,
        values,
        clipped,
    })
}

/// Default spinup `100 / mean(a)`.
pub fn default_spinup(m: &ReactionModel) -> f64 {
    100.0 / m.a.mean()
}

/// Agreement gate between the two starts of [`ap_positive_solution`].
pub const UNIQUENESS_TOL: f64 = 1e-6;

/// Fraction of `M_bound` used as the small start.
const SMALL_START: f64 = 1e-3;

/// `V*(t)` on `[0, horizon]`: forward attraction from `M_bound` and from a
/// small positive value, both started at `−spinup`, which must agree.
pub fn ap_positive_solution(
    m: &ReactionModel,
    spinup: f64,
    horizon: f64,
    dt: f64,
) -> Result<ScalarTrajectory, KineticsError> {
    require_hypotheses(m)?;
    if !(spinup > 0.0) || !(horizon > 0.0) {
        return Err(KineticsError::InvalidArgument(format!(
            "spinup and horizon must be positive (spinup={spinup}, horizon={horizon})"
        )));
    }
    // start on the dt lattice so that t = 0 is a sample
    let lead = (spinup / dt).ceil();
    let t_start = -lead * dt;
    let t_end = horizon;
    let upper = ode_integrate(m, m.m_bound(), t_start, t_end, dt)?;
    let lower = ode_integrate(m, SMALL_START * m.m_bound(), t_start, t_end, dt)?;
    let skip = lead as usize;
    let gap = upper.values[skip..]
        .iter()
        .zip(&lower.values[skip..])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if gap >= UNIQUENESS_TOL {
        return Err(KineticsError::NotAttracted {
            gap,
            tol: UNIQUENESS_TOL,
        });
    }
    Ok(ScalarTrajectory {
        t0: 0.0,
        dt,
        values: upper.values[skip..].to_vec(),
        clipped: 0,
    })
}

/// `V*(t)` at a single time, using the default spinup.
pub fn v_star_at(m: &ReactionModel, t: f64, dt: f64) -> Result<f64, KineticsError> {
    let shifted = m.translate(t);
    let traj = ap_positive_solution(&shifted, default_spinup(m), dt, dt)?;
    Ok(traj.values[0])
}

/// Quadrature value of the closed form for the logistic family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub value: f64,
    /// Bound on the omitted tail of `∫_{-∞}^t exp(−∫_s^t a)·b(s) ds`.
    pub truncation_bound: f64,
    /// Induced bound on `|value − V*(t)|`.
    pub value_error_bound: f64,
}

const ORACLE_STEP: f64 = 2.5e-3;

/// Default truncation length `40 / mean(a)`.
pub fn default_tail(m: &ReactionModel) -> f64 {
    40.0 / m.a.mean()
}

/// `V*(t) = 1 / ∫_{−∞}^t exp(−∫_s^t a(r) dr)·b(s) ds`, truncated to
/// `s ∈ [t − tail, t]` and evaluated with composite Simpson. The inner
/// integral is exact per mode.
pub fn logistic_oracle(m: &ReactionModel, t: f64, tail: f64) -> Result<OracleValue, KineticsError> {
    let mean = m.a.mean();
    if !(mean > 0.0) {
        return Err(KineticsError::NonPositiveMean(mean));
    }
    if !(tail > 0.0) {
        return Err(KineticsError::InvalidArgument(format!(
            "tail must be positive, got {tail}"
        )));
    }
    let integrand = |s: f64| (-m.a.integral(s, t)).exp() * m.b.eval(s);
    let mut n = (tail / ORACLE_STEP).ceil() as usize;
    n += n % 2;
    let h = tail / n as f64;
    let s0 = t - tail;
    let mut sum = integrand(s0) + integrand(t);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * integrand(s0 + i as f64 * h);
    }
    let w = sum * h / 3.0;
    let truncation_bound =
        m.b.upper_bound().max(0.0) * m.a.primitive_oscillation_bound().exp() * (-mean * tail).exp()
            / mean;
    Ok(OracleValue {
        value: 1.0 / w,
        truncation_bound,
        value_error_bound: truncation_bound / (w * w),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::TrigPolynomial;
    use std::f64::consts::TAU;

    fn forced() -> ReactionModel {
        ReactionModel::new(
            TrigPolynomial::from_triples(1.0, &[(0.5, 1.0, 0.0)]).unwrap(),
            TrigPolynomial::constant(1.0),
        )
    }

    #[test]
    fn equilibrium_and_zero() {
        let m = ReactionModel::fisher();
        let traj = ode_integrate(&m, 1.0, 0.0, 10.0, 0.01).unwrap();
        assert!(traj.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let traj = ode_integrate(&m, 0.0, 0.0, 10.0, 0.01).unwrap();
        assert!(traj.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fisher_matches_logistic_closed_form() {
        let m = ReactionModel::fisher();
        let traj = ode_integrate(&m, 0.5, 0.0, 20.0, 0.01).unwrap();
        let mut prev = 0.0;
        for (t, v) in traj.iter() {
            let exact = 1.0 / (1.0 + (-t).exp());
            assert!((v - exact).abs() < 1e-9, "t={t}");
            assert!(v >= prev);
            prev = v;
        }
        assert!((traj.last() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = ReactionModel::fisher();
        assert!(matches!(
            ode_integrate(&m, 0.5, 0.0, 1.0, 0.6),
            Err(KineticsError::StepTooLarge { .. })
        ));
        assert!(ode_integrate(&m, -0.1, 0.0, 1.0, 0.1).is_err());
        assert!(ode_integrate(&m, 0.1, 1.0, 0.0, 0.1).is_err());
        let bad = ReactionModel::autonomous(-1.0, 1.0);
        assert!(matches!(
            ode_integrate(&bad, 0.1, 0.0, 1.0, 0.1),
            Err(KineticsError::Hypotheses(_))
        ));
        assert!(matches!(
            logistic_oracle(&bad, 0.0, 10.0),
            Err(KineticsError::NonPositiveMean(_))
        ));
    }

    #[test]
    fn positive_solution_constant_cases() {
        let v = ap_positive_solution(&ReactionModel::fisher(), 100.0, 10.0, 0.01).unwrap();
        assert!(v.values.iter().all(|&x| (x - 1.0).abs() < 1e-12));
        let o = logistic_oracle(&ReactionModel::fisher(), 0.0, 40.0).unwrap();
        assert!((o.value - 1.0).abs() < 1e-12);
        let o = logistic_oracle(&ReactionModel::autonomous(1.0, 2.0), 3.0, 40.0).unwrap();
        assert!((o.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn positive_solution_matches_oracle() {
        let m = forced();
        let v = ap_positive_solution(&m, default_spinup(&m), 20.0, 0.01).unwrap();
        for i in (0..v.values.len()).step_by(25) {
            let t = v.time(i);
            let o = logistic_oracle(&m, t, default_tail(&m)).unwrap();
            assert!(o.value_error_bound < 1e-12);
            assert!((o.value - v.values[i]).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn periodic_forcing_gives_periodic_solution() {
        let m = forced();
        let dt = TAU / 1000.0;
        let v = ap_positive_solution(&m, 100.0, 2.0 * TAU + dt, dt).unwrap();
        for i in 0..1000 {
            assert!((v.values[i + 1000] - v.values[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn attraction_from_several_starts() {
        let m = forced();
        let spin = default_spinup(&m);
        let vstar = ap_positive_solution(&m, spin, 30.0, 0.01).unwrap();
        let lead = (spin / 0.01).ceil();
        let t_start = -lead * 0.01;
        for factor in [0.1, 1.0, 3.0] {
            let traj = ode_integrate(&m, factor * m.m_bound(), t_start, 30.0, 0.01).unwrap();
            let tail = &traj.values[lead as usize..];
            let gap = tail
                .iter()
                .zip(&vstar.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(gap <= 1e-6, "factor {factor}: {gap}");
        }
    }

    #[test]
    fn eps_bracketing_of_positive_solution() {
        let m = forced();
        let v = ap_positive_solution(&m, 100.0, 30.0, 0.01).unwrap();
        let mut prev_gap = f64::INFINITY;
        for eps in [0.1, 0.05, 0.01] {
            let up = ap_positive_solution(&m.perturbed(eps), 100.0, 30.0, 0.01).unwrap();
            let lo = ap_positive_solution(&m.perturbed(-eps), 100.0, 30.0, 0.01).unwrap();
            let mut gap: f64 = 0.0;
            for i in 0..v.values.len() {
                assert!(lo.values[i] <= v.values[i] && v.values[i] <= up.values[i]);
                gap = gap.max(up.values[i] - lo.values[i]);
            }
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
    }

    #[test]
    fn ode_residual_is_second_order_small() {
        let m = forced();
        let dt = 0.01;
        let v = ap_positive_solution(&m, 100.0, 20.0, dt).unwrap();
        let mut worst: f64 = 0.0;
        let mut second: f64 = 0.0;
        for i in 1..v.values.len() - 1 {
            let d = (v.values[i + 1] - v.values[i - 1]) / (2.0 * dt);
            let r = d - m.reaction(v.time(i), v.values[i]);
            worst = worst.max(r.abs());
            second = second
                .max(((v.values[i + 1] - 2.0 * v.values[i] + v.values[i - 1]) / (dt * dt)).abs());
        }
        // the central difference error carries the third derivative; bound it
        // by the observed second derivative times the forcing frequency
        assert!(worst <= 10.0 * dt * dt * second.max(1.0), "{worst}");
    }
}
