//! Time almost periodic coefficients as finite trigonometric polynomials.
//!
//! A [`TrigPolynomial`] is `c0 + Σ aᵢ·sin(ωᵢ t + φᵢ)`. With incommensurate
//! frequencies (say 1 and √2) the function is almost periodic but not
//! periodic. This sub-class has an exact time mean (`c0`) and its hull is the
//! torus of phase shifts, so translates are exact.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForcingError {
    #[error("frequency must be positive and finite, got {0}")]
    BadFrequency(f64),
    #[error("non-finite coefficient {0}")]
    NonFinite(f64),
    #[error("cannot parse trig polynomial `{text}`: {reason}")]
    Parse { text: String, reason: String },
}

/// One sinusoidal mode `amplitude·sin(frequency·t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub amplitude: f64,
    pub frequency: f64,
    /// Canonical phase in `[0, 2π)`.
    pub phase: f64,
}

fn canonical_phase(phase: f64) -> f64 {
    let p = phase.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if p >= TAU {
        0.0
    } else {
        p
    }
}

impl Mode {
    pub fn new(amplitude: f64, frequency: f64, phase: f64) -> Result<Self, ForcingError> {
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(ForcingError::BadFrequency(frequency));
        }
        for v in [amplitude, phase] {
            if !v.is_finite() {
                return Err(ForcingError::NonFinite(v));
            }
        }
        Ok(Self {
            amplitude,
            frequency,
            phase: canonical_phase(phase),
        })
    }

    #[inline]
    fn eval(&self, t: f64) -> f64 {
        self.amplitude * (self.frequency * t + self.phase).sin()
    }

    /// `∫_s^t amplitude·sin(ω r + φ) dr` in closed form.
    #[inline]
    fn integral(&self, s: f64, t: f64) -> f64 {
        self.amplitude / self.frequency
            * ((self.frequency * s + self.phase).cos() - (self.frequency * t + self.phase).cos())
    }
}

/// `constant_term + Σ amplitude·sin(frequency·t + phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    constant_term: f64,
    modes: Vec<Mode>,
}

impl TrigPolynomial {
    pub fn new(constant_term: f64, modes: Vec<Mode>) -> Result<Self, ForcingError> {
        if !constant_term.is_finite() {
            return Err(ForcingError::NonFinite(constant_term));
        }
        Ok(Self {
            constant_term,
            modes,
        })
    }

    /// Builds from `(amplitude, frequency, phase)` triples.
    pub fn from_triples(
        constant_term: f64,
        triples: &[(f64, f64, f64)],
    ) -> Result<Self, ForcingError> {
        let modes = triples
            .iter()
            .map(|&(a, w, p)| Mode::new(a, w, p))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(constant_term, modes)
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant_term: c,
            modes: Vec::new(),
        }
    }

    pub fn constant_term(&self) -> f64 {
        self.constant_term
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn is_constant(&self) -> bool {
        self.modes.iter().all(|m| m.amplitude == 0.0)
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.constant_term + self.modes.iter().map(|m| m.eval(t)).sum::<f64>()
    }

    /// Exact long-time average; every sinusoidal mode averages to zero.
    pub fn mean(&self) -> f64 {
        self.constant_term
    }

    /// `p(· + tau)`: phases advance by `frequency·tau`, reduced mod 2π.
    pub fn translate(&self, tau: f64) -> Self {
        Self {
            constant_term: self.constant_term,
            modes: self
                .modes
                .iter()
                .map(|m| Mode {
                    phase: canonical_phase(m.phase + m.frequency * tau),
                    ..*m
                })
                .collect(),
        }
    }

    /// `p + c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            constant_term: self.constant_term + c,
            modes: self.modes.clone(),
        }
    }

    /// `∫_s^t p(r) dr`, exact.
    pub fn integral(&self, s: f64, t: f64) -> f64 {
        self.constant_term * (t - s) + self.modes.iter().map(|m| m.integral(s, t)).sum::<f64>()
    }

    pub fn amplitude_sum(&self) -> f64 {
        self.modes.iter().map(|m| m.amplitude.abs()).sum()
    }

    /// `constant_term + Σ|amplitude|`, an upper bound for `p`.
    pub fn upper_bound(&self) -> f64 {
        self.constant_term + self.amplitude_sum()
    }

    /// `constant_term − Σ|amplitude|`, a lower bound for `p`.
    pub fn lower_bound(&self) -> f64 {
        self.constant_term - self.amplitude_sum()
    }

    /// `sup_t |p(t)|` bound.
    pub fn abs_bound(&self) -> f64 {
        self.constant_term.abs() + self.amplitude_sum()
    }

    /// Bound on the oscillating part of the primitive:
    /// `|∫_s^t (p − mean)| ≤ Σ 2|aᵢ|/ωᵢ`.
    pub fn primitive_oscillation_bound(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| 2.0 * m.amplitude.abs() / m.frequency)
            .sum()
    }

    /// Smallest sampled value over `[t0, t0 + window]` at spacing `step`.
    pub fn sampled_min(&self, t0: f64, window: f64, step: f64) -> f64 {
        let n = (window / step).ceil() as usize;
        (0..=n)
            .map(|i| self.eval(t0 + i as f64 * step))
            .fold(f64::INFINITY, f64::min)
    }
}

impl fmt::Display for TrigPolynomial {
    /// `c0 | amp:freq:phase, amp:freq:phase, ...`, shortest round-trip digits.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.constant_term)?;
        if !self.modes.is_empty() {
            f.write_str(" |")?;
            for (i, m) in self.modes.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, " {:?}:{:?}:{:?}", m.amplitude, m.frequency, m.phase)?;
            }
        }
        Ok(())
    }
}

fn parse_number(text: &str, token: &str) -> Result<f64, ForcingError> {
    let token = token.trim();
    let value = match token {
        "pi" => std::f64::consts::PI,
        "pi/2" => std::f64::consts::FRAC_PI_2,
        "sqrt2" => std::f64::consts::SQRT_2,
        _ => token.parse::<f64>().map_err(|e| ForcingError::Parse {
            text: text.to_string(),
            reason: format!("`{token}`: {e}"),
        })?,
    };
    Ok(value)
}

impl FromStr for TrigPolynomial {
    type Err = ForcingError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let (head, tail) = match text.split_once('|') {
            Some((h, t)) => (h, Some(t)),
            None => (text, None),
        };
        let constant_term = parse_number(text, head)?;
        let mut modes = Vec::new();
        if let Some(tail) = tail {
            for chunk in tail.split(',') {
                if chunk.trim().is_empty() {
                    continue;
                }
                let parts: Vec<&str> = chunk.split(':').collect();
                if parts.len() != 3 {
                    return Err(ForcingError::Parse {
                        text: text.to_string(),
                        reason: format!("mode `{}` is not amp:freq:phase", chunk.trim()),
                    });
                }
                modes.push(Mode::new(
                    parse_number(text, parts[0])?,
                    parse_number(text, parts[1])?,
                    parse_number(text, parts[2])?,
                )?);
            }
        }
        Self::new(constant_term, modes)
    }
}

impl Serialize for TrigPolynomial {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TrigPolynomial {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// KPP nonlinearity `f(t,u) = a(t) − b(t)·u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionModel {
    pub a: TrigPolynomial,
    pub b: TrigPolynomial,
}

/// Outcome of checking the monostability hypotheses on a [`ReactionModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    /// `inf b > 0` from the analytic lower bound (authoritative).
    pub h1_ok: bool,
    /// `mean(a) > 0`.
    pub h3_ok: bool,
    pub inf_b_sampled: f64,
    pub inf_b_analytic: f64,
    pub mean_a: f64,
    /// `sup a / inf b`; infinite when `inf b ≤ 0`.
    pub m_bound: f64,
}

impl HypothesisReport {
    pub fn ok(&self) -> bool {
        self.h1_ok && self.h3_ok
    }
}

const INF_SAMPLE_STEP: f64 = 1e-3;
const INF_SAMPLE_WINDOW: f64 = 1e3;

impl ReactionModel {
    pub fn new(a: TrigPolynomial, b: TrigPolynomial) -> Self {
        Self { a, b }
    }

    /// `f = a − b·u` with constant coefficients.
    pub fn autonomous(a: f64, b: f64) -> Self {
        Self::new(TrigPolynomial::constant(a), TrigPolynomial::constant(b))
    }

    /// Fisher–KPP `f = 1 − u`.
    pub fn fisher() -> Self {
        Self::autonomous(1.0, 1.0)
    }

    #[inline]
    pub fn f(&self, t: f64, u: f64) -> f64 {
        self.a.eval(t) - self.b.eval(t) * u
    }

    /// `u·f(t,u)`.
    #[inline]
    pub fn reaction(&self, t: f64, u: f64) -> f64 {
        u * self.f(t, u)
    }

    /// `f + eps`, which only moves the constant term of `a`.
    pub fn perturbed(&self, eps: f64) -> Self {
        Self::new(self.a.shifted(eps), self.b.clone())
    }

    pub fn translate(&self, tau: f64) -> Self {
        Self::new(self.a.translate(tau), self.b.translate(tau))
    }

    pub fn is_autonomous(&self) -> bool {
        self.a.is_constant() && self.b.is_constant()
    }

    pub fn m_bound(&self) -> f64 {
        let inf_b = self.b.lower_bound();
        if inf_b > 0.0 {
            self.a.upper_bound() / inf_b
        } else {
            f64::INFINITY
        }
    }

    pub fn check_hypotheses(&self) -> HypothesisReport {
        let inf_b_analytic = self.b.lower_bound();
        let inf_b_sampled = if self.b.is_constant() {
            self.b.constant_term()
        } else {
            self.b.sampled_min(0.0, INF_SAMPLE_WINDOW, INF_SAMPLE_STEP)
        };
        let mean_a = self.a.mean();
        HypothesisReport {
            h1_ok: inf_b_analytic > 0.0,
            h3_ok: mean_a > 0.0,
            inf_b_sampled,
            inf_b_analytic,
            mean_a,
            m_bound: self.m_bound(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    fn two_mode() -> TrigPolynomial {
        TrigPolynomial::from_triples(1.0, &[(0.5, 1.0, 0.0), (0.3, SQRT_2, 0.0)]).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(two_mode().eval(0.0), 1.0);
        assert_eq!(TrigPolynomial::constant(2.5).eval(17.0), 2.5);
        let p = TrigPolynomial::from_triples(0.0, &[(1.0, 1.0, FRAC_PI_2)]).unwrap();
        assert!((p.eval(0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mean_matches_trapezoid_average() {
        let p = two_mode();
        assert_eq!(p.mean(), 1.0);
        assert_eq!(TrigPolynomial::constant(-3.0).mean(), -3.0);
        // trapezoid average over [0, 1e4]
        let horizon = 1e4;
        let n = 1_000_000;
        let h = horizon / n as f64;
        let mut sum = 0.5 * (p.eval(0.0) + p.eval(horizon));
        for i in 1..n {
            sum += p.eval(i as f64 * h);
        }
        let avg = sum * h / horizon;
        assert!((avg - 1.0).abs() < 1e-3, "avg {avg}");
        assert!((avg - 1.0).abs() <= 10.0 * p.abs_bound() / horizon);
    }

    #[test]
    fn translate_examples() {
        let p = two_mode();
        assert_eq!(p.translate(0.0), p);
        let q = TrigPolynomial::from_triples(0.0, &[(1.0, 1.0, 0.0)]).unwrap();
        let phase = q.translate(2.0 * PI).modes()[0].phase;
        assert!(phase < 1e-12 || (TAU - phase) < 1e-12, "phase {phase}");
    }

    #[test]
    fn closed_form_integral() {
        let p = two_mode();
        let (s, t) = (-3.0, 11.0);
        let n = 200_000;
        let h = (t - s) / n as f64;
        let mut sum = 0.5 * (p.eval(s) + p.eval(t));
        for i in 1..n {
            sum += p.eval(s + i as f64 * h);
        }
        assert!((sum * h - p.integral(s, t)).abs() < 1e-7);
    }

    #[test]
    fn hypotheses_examples() {
        let r = ReactionModel::fisher().check_hypotheses();
        assert!(r.ok());
        assert_eq!(r.m_bound, 1.0);

        let r = ReactionModel::autonomous(-1.0, 1.0).check_hypotheses();
        assert!(r.h1_ok && !r.h3_ok);

        let a = TrigPolynomial::from_triples(1.0, &[(0.5, 1.0, 0.0)]).unwrap();
        let near = TrigPolynomial::from_triples(1.0, &[(0.99, 1.0, 0.0)]).unwrap();
        let r = ReactionModel::new(a.clone(), near).check_hypotheses();
        assert!(r.h1_ok);
        assert!((r.inf_b_analytic - 0.01).abs() < 1e-12);
        assert!(r.inf_b_sampled >= r.inf_b_analytic - 1e-12);
        assert!(r.inf_b_sampled < 0.01 + 1e-6);

        let degenerate = TrigPolynomial::from_triples(1.0, &[(1.0, 1.0, 0.0)]).unwrap();
        let r = ReactionModel::new(a, degenerate).check_hypotheses();
        assert!(!r.h1_ok);
        assert!(!r.ok());
    }

    #[test]
    fn m_bound_makes_f_negative() {
        let a = two_mode();
        let b = TrigPolynomial::from_triples(2.0, &[(0.5, 0.7, 1.0)]).unwrap();
        let m = ReactionModel::new(a, b);
        let bound = m.m_bound();
        for i in 0..5000 {
            let t = i as f64 * 0.37;
            assert!(m.f(t, bound * 1.000001) < 0.0);
        }
    }

    #[test]
    fn text_format() {
        let p: TrigPolynomial = "1 | 0.5:1:0, 0.3:1.4142135623730951:0".parse().unwrap();
        assert_eq!(p, two_mode());
        let c: TrigPolynomial = " 2.0 ".parse().unwrap();
        assert_eq!(c, TrigPolynomial::constant(2.0));
        assert!("1 | 0.5:0:0".parse::<TrigPolynomial>().is_err());
        assert!("1 | 0.5:1".parse::<TrigPolynomial>().is_err());
        assert!("x".parse::<TrigPolynomial>().is_err());
        let back: TrigPolynomial = p.to_string().parse().unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn single_frequency_is_periodic() {
        let p = TrigPolynomial::from_triples(0.2, &[(0.8, 1.0, 0.3)]).unwrap();
        for i in 0..200 {
            let t = i as f64 * 0.173;
            assert!((p.eval(t + TAU) - p.eval(t)).abs() < 1e-12);
        }
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn poly() -> impl Strategy<Value = TrigPolynomial> {
        (
            -2.0..2.0f64,
            prop::collection::vec((-1.0..1.0f64, 0.1..3.0f64, 0.0..TAU), 0..4),
        )
            .prop_map(|(c, modes)| TrigPolynomial::from_triples(c, &modes).unwrap())
    }

    proptest! {
        #[test]
        fn translate_matches_shifted_eval(p in poly(), t in -50.0..50.0f64, tau in -50.0..50.0f64) {
            let lhs = p.translate(tau).eval(t);
            let rhs = p.eval(t + tau);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn translate_is_group_action(p in poly(), t in -20.0..20.0f64, t1 in -20.0..20.0f64, t2 in -20.0..20.0f64) {
            let twice = p.translate(t1).translate(t2).eval(t);
            let once = p.translate(t1 + t2).eval(t);
            prop_assert!((twice - once).abs() < 1e-9);
        }

        #[test]
        fn eval_within_bound(p in poly(), t in -1e3..1e3f64) {
            let v = p.eval(t);
            prop_assert!(v <= p.upper_bound() + 1e-12);
            prop_assert!(v >= p.lower_bound() - 1e-12);
        }

        #[test]
        fn phases_canonical(p in poly(), tau in -1e4..1e4f64) {
            for m in p.translate(tau).modes() {
                prop_assert!(m.phase >= 0.0 && m.phase < TAU);
            }
        }
    }
}
