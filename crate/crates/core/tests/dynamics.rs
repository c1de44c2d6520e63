use std::f64::consts::FRAC_PI_2;

use apspread::forcing::{ReactionModel, TrigPolynomial};
use apspread::freeboundary::{
    self, ClassifyOptions, FreeBoundaryError, FrontParams, Side, Verdict,
};
use apspread::kinetics;
use apspread::semiwave::{self, SemiWaveParams};

fn params(n: usize, dt: f64, horizon: f64) -> FrontParams {
    FrontParams {
        n,
        dt,
        horizon,
        sample_every: 1.0,
        stop: None,
    }
}

fn forced() -> ReactionModel {
    ReactionModel::new(
        TrigPolynomial::from_triples(1.0, &[(0.5, 1.0, 0.0), (0.3, 2f64.sqrt(), 0.0)]).unwrap(),
        TrigPolynomial::constant(1.0),
    )
}

#[test]
fn vanishing_run_meets_evidence_rules() {
    let m = ReactionModel::fisher();
    let tr = freeboundary::fb_evolve_single(
        &m,
        0.05,
        &freeboundary::cosine_single(1.0, 1.2),
        1.2,
        &params(200, 0.01, 60.0),
    )
    .unwrap();
    let out = freeboundary::classify(&tr, FRAC_PI_2, &ClassifyOptions::for_model(&m).unwrap());
    assert_eq!(out.verdict, Verdict::Vanishing);
    assert!(out.h_final <= 1.05 * FRAC_PI_2);
    assert!(out.u_sup_final < 1e-4);
    assert!(tr.min_value >= 0.0);
}

#[test]
fn forced_spreading_tracks_v_star_behind_front() {
    let m = forced();
    let tr = freeboundary::fb_evolve_single(
        &m,
        2.0,
        &freeboundary::cosine_single(1.0, 2.0),
        2.0,
        &params(400, 0.01, 60.0),
    )
    .unwrap();
    let out = freeboundary::classify(&tr, FRAC_PI_2, &ClassifyOptions::for_model(&m).unwrap());
    assert_eq!(out.verdict, Verdict::Spreading);
    let vs = kinetics::v_star_at(&m, tr.t_final(), 0.01).unwrap();
    let s = tr.final_state();
    assert!(
        (s.value_at(0.0) - vs).abs() < 1e-3,
        "{} vs {vs}",
        s.value_at(0.0)
    );
    let sp = freeboundary::front_speed(&tr, out.verdict, 0.5).unwrap();
    assert!(sp.estimate.value > 0.0 && sp.estimate.value < 2.0 * m.a.mean().sqrt());
}

#[test]
fn forced_front_speed_matches_semiwave() {
    let m = forced();
    let mu = 2.0;
    let tr = freeboundary::fb_evolve_single(
        &m,
        mu,
        &freeboundary::cosine_single(1.0, 2.0),
        2.0,
        &params(400, 0.01, 100.0),
    )
    .unwrap();
    let sw = semiwave::semiwave_evolve(&m, mu, &SemiWaveParams::default()).unwrap();
    let c = freeboundary::front_speed(&tr, Verdict::Spreading, 0.5)
        .unwrap()
        .estimate
        .value;
    assert!(
        ((c - sw.cstar) / sw.cstar).abs() < 0.02,
        "front {c} semiwave {}",
        sw.cstar
    );
}

#[test]
fn double_front_sides_agree_for_even_data() {
    let m = ReactionModel::fisher();
    let tr = freeboundary::fb_evolve_double(
        &m,
        2.0,
        &freeboundary::cosine_double(1.0, -1.0, 1.0),
        -1.0,
        1.0,
        &params(400, 0.01, 40.0),
    )
    .unwrap();
    let r = freeboundary::front_speed_side(&tr, Side::Right, Verdict::Spreading, 0.5).unwrap();
    let l = freeboundary::front_speed_side(&tr, Side::Left, Verdict::Spreading, 0.5).unwrap();
    assert!((r.estimate.value - l.estimate.value).abs() < 1e-8);
}

#[test]
fn shifted_double_front_is_translation_of_centered_run() {
    let m = ReactionModel::fisher();
    let p = params(100, 0.02, 10.0);
    let a = freeboundary::fb_evolve_double(
        &m,
        1.0,
        &freeboundary::cosine_double(1.0, -1.0, 1.0),
        -1.0,
        1.0,
        &p,
    )
    .unwrap();
    let b = freeboundary::fb_evolve_double(
        &m,
        1.0,
        &freeboundary::cosine_double(1.0, 2.0, 4.0),
        2.0,
        4.0,
        &p,
    )
    .unwrap();
    let (ra, rb) = (a.final_record(), b.final_record());
    assert!((rb.h - 3.0 - ra.h).abs() < 1e-10);
    assert!((rb.g - 3.0 - ra.g).abs() < 1e-10);
}

#[test]
fn front_position_converges_under_dt_refinement() {
    let m = ReactionModel::fisher();
    let h = |k: u32| {
        let s = 1 << k;
        freeboundary::fb_evolve_single(
            &m,
            2.0,
            &freeboundary::cosine_single(1.0, 2.0),
            2.0,
            &params(50 * s, 0.04 / s as f64, 5.0),
        )
        .unwrap()
        .final_record()
        .h
    };
    let (h0, h1, h2) = (h(0), h(1), h(2));
    let p = ((h0 - h1) / (h1 - h2)).abs().log2();
    assert!(p > 1.5, "observed order {p}");
}

#[test]
fn critical_mu_brackets_the_threshold() {
    let m = ReactionModel::fisher();
    let u0 = freeboundary::cosine_double(1.0, -1.0, 1.0);
    let o = freeboundary::CriticalMuOptions::default();
    let r = freeboundary::critical_mu(&m, &u0, -1.0, 1.0, (0.1, 1.0), &o).unwrap();
    assert!(r.rel_width() <= 0.05);
    assert_eq!(r.recheck.0.verdict, Verdict::Vanishing);
    assert_eq!(r.recheck.1.verdict, Verdict::Spreading);
    assert!(r.lo < r.hi && r.lo > 0.1 && r.hi < 1.0);
}

#[test]
fn critical_mu_rejects_supercritical_interval() {
    let m = ReactionModel::fisher();
    let u0 = freeboundary::cosine_double(1.0, -2.0, 2.0);
    let o = freeboundary::CriticalMuOptions::default();
    let e = freeboundary::critical_mu(&m, &u0, -2.0, 2.0, (0.1, 1.0), &o).unwrap_err();
    assert!(matches!(e, FreeBoundaryError::Bracket(_)), "{e:?}");
}

#[test]
fn semiwave_invariants_hold_for_forced_model() {
    let m = forced();
    let r = semiwave::semiwave_evolve(&m, 1.0, &SemiWaveParams::default()).unwrap();
    let d = &r.diagnostics;
    assert!(d.far_field_error < 1e-3);
    assert!(d.midfield_error < 1e-2);
    assert!(d.min_forward_difference >= -1e-8);
    assert!(d.min_flux_late > 0.0);
    assert!(d.order_excess <= 1e-10, "order excess {}", d.order_excess);
    assert!(r.attraction_gap <= 1e-5);
    let worst_rise = d
        .part_metric_history
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(worst_rise <= 1e-6);
}

#[test]
fn semiwave_speed_is_monotone_in_mu_and_matches_shooting() {
    let m = ReactionModel::fisher();
    let p = SemiWaveParams {
        n: 400,
        dt: 0.01,
        ..Default::default()
    };
    let mut prev = 0.0;
    for mu in [0.5, 1.0, 2.0] {
        let c = semiwave::semiwave_evolve(&m, mu, &p).unwrap().cstar;
        let shoot = semiwave::shoot_autonomous(1.0, 1.0, mu).unwrap().c;
        assert!(c > prev);
        assert!(
            ((c - shoot) / shoot).abs() < 0.02,
            "mu={mu}: {c} vs {shoot}"
        );
        prev = c;
    }
}

#[test]
fn speed_invariant_under_b_rescaling() {
    // q -> q/b maps (a, b, mu) to (a, 1, mu/b)
    let r1 = semiwave::shoot_autonomous(1.0, 2.0, 1.0).unwrap().c;
    let r2 = semiwave::shoot_autonomous(1.0, 1.0, 0.5).unwrap().c;
    assert!((r1 - r2).abs() < 1e-7, "{r1} vs {r2}");
}
