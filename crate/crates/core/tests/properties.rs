use apspread::forcing::{ReactionModel, TrigPolynomial};
use apspread::freeboundary::{self, FrontParams};
use apspread::harness::config::{emit_config, parse_config};
use apspread::harness::report::fmt_f;
use apspread::semiwave::part_metric;
use apspread::spectral::{self, LinearCoefficient, LyapunovParams};
use apspread::speed::fit_line;
use proptest::prelude::*;

fn coarse_front(horizon: f64) -> FrontParams {
    FrontParams {
        n: 60,
        dt: 0.02,
        horizon,
        sample_every: 0.5,
        stop: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn csv_numbers_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn line_fit_recovers_slope(c in -5.0f64..5.0, b in -10.0f64..10.0, n in 3usize..200) {
        let t: Vec<f64> = (0..n).map(|i| 0.1 * i as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| c * t + b).collect();
        let f = fit_line(&t, &y).unwrap();
        prop_assert!((f.slope - c).abs() < 1e-9);
        prop_assert!(f.rms_residual < 1e-9);
    }

    #[test]
    fn part_metric_of_scaled_profile(alpha in 1.0f64..20.0, n in 4usize..60) {
        let u: Vec<f64> = (0..n).map(|i| (i as f64 / n as f64).sqrt()).collect();
        let v: Vec<f64> = u.iter().map(|x| alpha * x).collect();
        let r = part_metric(&u, &v).unwrap();
        prop_assert!((r - alpha.ln()).abs() < 1e-12);
        prop_assert_eq!(part_metric(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn config_echo_round_trips(
        n in 16usize..2000,
        dt in 1e-4f64..0.1,
        h0 in 0.5f64..3.0,
        mu in proptest::collection::vec(0.01f64..10.0, 1..5),
    ) {
        let mus: Vec<String> = mu.iter().map(|m| format!("{m:?}")).collect();
        let text = format!(
            "kind = \"fb_single\"\n[front]\nn = {n}\ndt = {dt:?}\nh0 = {h0:?}\n[sweep]\nmu = [{}]\n",
            mus.join(", ")
        );
        let a = parse_config(&text).unwrap();
        let b = parse_config(&emit_config(&a)).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn front_advances_and_stays_bounded(mu in 0.05f64..5.0, amp in 0.1f64..3.0, h0 in 0.5f64..3.0) {
        let m = ReactionModel::fisher();
        let tr = freeboundary::fb_evolve_single(
            &m, mu, &freeboundary::cosine_single(amp, h0), h0, &coarse_front(5.0),
        ).unwrap();
        prop_assert!(tr.min_h_dot >= -1e-12);
        prop_assert!(tr.min_value >= 0.0);
        prop_assert!(tr.max_value <= amp.max(m.m_bound()) * (1.0 + 1e-6));
        prop_assert!(tr.steps.windows(2).all(|w| w[1].h >= w[0].h - 1e-12));
    }

    #[test]
    fn nested_data_keep_fronts_ordered(mu in 0.1f64..3.0, amp in 0.2f64..2.0, shrink in 0.3f64..0.95) {
        let m = ReactionModel::fisher();
        let h0 = 2.0;
        let p = coarse_front(6.0);
        let small = freeboundary::fb_evolve_single(
            &m, mu, &freeboundary::cosine_single(shrink * amp, shrink * h0), shrink * h0, &p,
        ).unwrap();
        let large = freeboundary::fb_evolve_single(
            &m, mu, &freeboundary::cosine_single(amp, h0), h0, &p,
        ).unwrap();
        for (a, b) in small.steps.iter().zip(&large.steps) {
            prop_assert!(a.h <= b.h + 1e-8, "t={} {} > {}", a.t, a.h, b.h);
        }
    }

    #[test]
    fn even_data_give_symmetric_fronts(mu in 0.1f64..5.0, amp in 0.2f64..2.0, h0 in 0.5f64..2.0) {
        let m = ReactionModel::fisher();
        let tr = freeboundary::fb_evolve_double(
            &m, mu, &freeboundary::cosine_double(amp, -h0, h0), -h0, h0, &coarse_front(5.0),
        ).unwrap();
        let worst = tr.steps.iter().map(|r| (r.g + r.h).abs()).fold(0.0, f64::max);
        prop_assert!(worst < 1e-8, "max |g+h| = {worst}");
    }

    #[test]
    fn lyapunov_shifts_with_constant(c in -2.0f64..2.0) {
        let p = LyapunovParams { n: 60, dt: 0.02, horizon: 20.0, ..Default::default() };
        let a = TrigPolynomial::from_triples(0.5, &[(0.4, 1.0, 0.0)]).unwrap();
        let base = spectral::lyapunov_nd(&LinearCoefficient::new(a.clone()), 2.0, &p).unwrap().value;
        let shifted = spectral::lyapunov_nd(&LinearCoefficient::new(a.shifted(c)), 2.0, &p).unwrap().value;
        prop_assert!((shifted - base - c).abs() < 1e-9, "{shifted} vs {base} + {c}");
    }
}
