mod common;

use std::f64::consts::PI;

use common::{lattice, meter, moments, pps, strength};
use dsa_core::analytic::{
    self, bdsa_reduced_snr, bdsa_signal, dsa_snr, dsa_snr_ratio_route, dsa_variance, psa_psr_means, ratio_factors,
    subensemble_variances, weak_value, MixtureDensity, SpinState, WeakValueMode,
};
use dsa_core::DsaError;
use proptest::prelude::*;

#[test]
fn densities_are_normalized() {
    for p in lattice(40, 3) {
        let (b, theta, d) = (2.0 * p[0] - 1.0, PI * p[1], 3.0 * p[2] - 1.5);
        let (c, m) = (pps(b, theta), meter(d));
        let (pf, pfbar) = analytic::postselection_probs(&c);
        let m1 = moments(&MixtureDensity::psa(&c, &m)).mass;
        let m2 = moments(&MixtureDensity::psr(&c, &m)).mass;
        assert!((m1 + m2 - 1.0).abs() < 1e-10, "b={b} theta={theta}: {}", m1 + m2);
        assert!((m1 - pf).abs() < 1e-10 && (m2 - pfbar).abs() < 1e-10);
        assert!((moments(&MixtureDensity::total(&c, &m)).mass - 1.0).abs() < 1e-10);
    }
}

#[test]
fn closed_form_moments_match_quadrature() {
    let mut checked = 0;
    for p in lattice(120, 3) {
        let b = 1.9 * p[0] - 0.95;
        let theta = 0.02 + (PI - 0.04) * p[1];
        let g = 10f64.powf(-3.0 + 4.0 * p[2]);
        let (c, m) = (pps(b, theta), strength(g));
        let Ok((xf, xfbar)) = psa_psr_means(&c, &m) else { continue };
        let (v1, v2) = subensemble_variances(&c, &m).unwrap();
        let q1 = moments(&MixtureDensity::psa(&c, &m));
        let q2 = moments(&MixtureDensity::psr(&c, &m));
        let tol = 1e-8;
        assert!((q1.mean - xf).abs() < tol, "PSA mean at b={b} theta={theta} g={g}");
        assert!((q2.mean - xfbar).abs() < tol, "PSR mean at b={b} theta={theta} g={g}");
        assert!((q1.var - v1).abs() < tol * v1, "PSA var at b={b} theta={theta} g={g}");
        assert!((q2.var - v2).abs() < tol * v2, "PSR var at b={b} theta={theta} g={g}");
        checked += 1;
    }
    assert!(checked >= 100, "{checked}");
}

#[test]
fn psa_mean_is_four_fifths_of_d() {
    // B = 0.5, y = 0.5: F(y) = (B + y)/(1 + By) d = 0.8 d.
    let (c, m) = (pps(0.5, PI / 3.0), meter(0.2));
    let q = moments(&MixtureDensity::psa(&c, &m));
    assert!((q.mean / 0.2 - 0.8).abs() < 1e-10, "{}", q.mean / 0.2);
    assert!((psa_psr_means(&c, &m).unwrap().0 / 0.2 - 0.8).abs() < 1e-14);
}

#[test]
fn variance_oracle_from_quadrature() {
    // D[x̂] assembled from quadrature moments, checked against the closed form
    // and the frozen high-precision value 0.0016384.
    let (c, m) = (pps(0.5, PI / 3.0), meter(0.2));
    let n = 10_000u64;
    let (pf, pfbar) = analytic::postselection_probs(&c);
    let (b1, b2) = ratio_factors(&c).unwrap();
    let q1 = moments(&MixtureDensity::psa(&c, &m));
    let q2 = moments(&MixtureDensity::psr(&c, &m));
    let oracle = b1 * b1 * q1.var / (n as f64 * pf) + b2 * b2 * q2.var / (n as f64 * pfbar);
    let closed = dsa_variance(&c, &m, n).unwrap();
    assert!((oracle - closed).abs() < 1e-12 * closed);
    assert!((closed - 0.0016384).abs() < 1e-12 * 0.0016384, "{closed}");
}

#[test]
fn ratio_factors_differ_by_one() {
    for p in lattice(500, 2) {
        let (b, theta) = (2.0 * p[0] - 1.0, PI * p[1]);
        if let Ok((b1, b2)) = ratio_factors(&pps(b, theta)) {
            let ulps = 4.0 * f64::EPSILON * b1.abs().max(1.0);
            assert!((b1 - b2 - 1.0).abs() <= ulps, "b={b} theta={theta}: {}", b1 - b2);
        }
    }
}

#[test]
fn signal_is_d_over_b_and_means_route_agrees() {
    for p in lattice(200, 3) {
        let (b, theta, d) = (0.05 + 0.95 * p[0], PI * p[1], 2.0 * p[2] - 1.0);
        let (c, m) = (pps(b, theta), meter(d));
        let Ok(x) = analytic::dsa_signal(&c, &m) else { continue };
        assert_eq!(x, d / b);
        let via_means = analytic::dsa_signal_from_means(&c, &m).unwrap();
        // The means route cancels two terms of size ~β1·d; allow for that.
        let (b1, _) = ratio_factors(&c).unwrap();
        assert!((via_means - x).abs() <= 1e-14 * b1.abs().max(1.0) * d.abs().max(1e-300) * 8.0, "b={b} theta={theta}");
    }
}

#[test]
fn classical_weak_value_is_bounded_and_matches_mean() {
    for i in 0..100 {
        for j in 0..100 {
            let (alpha2, a2) = (i as f64 / 99.0, j as f64 / 99.0);
            let pre = SpinState::Weights { up: alpha2, down: 1.0 - alpha2 };
            let post = SpinState::Weights { up: a2, down: 1.0 - a2 };
            match weak_value(pre, post, WeakValueMode::Classical) {
                Ok(w) => assert!(w.abs() <= 1.0, "{alpha2} {a2}: {w}"),
                Err(e) => assert!(
                    matches!(e, DsaError::DegeneratePostselection { .. })
                        && ((alpha2 == 0.0 && a2 == 1.0) || (alpha2 == 1.0 && a2 == 0.0)),
                    "{alpha2} {a2}: {e}"
                ),
            }
        }
    }
    let c = pps(0.3, 1.1);
    let w = weak_value(
        SpinState::Weights { up: c.alpha2(), down: c.beta2() },
        SpinState::Weights { up: c.a2(), down: c.b2() },
        WeakValueMode::Classical,
    )
    .unwrap();
    assert!((w - analytic::psa_psr_means_per_d(&c).unwrap().0).abs() < 1e-15);
}

#[test]
fn quantum_weak_value() {
    let pre = SpinState::Amplitudes { up: 0.8, down: 0.6 };
    let singular = SpinState::Amplitudes { up: 0.6, down: -0.8 };
    assert_eq!(weak_value(pre, singular, WeakValueMode::Quantum), Err(DsaError::SingularWeakValue));
    // Anomalous: (αa − βb)/(αa + βb) with a small overlap.
    let post = SpinState::Amplitudes { up: 0.62, down: -(1.0f64 - 0.62 * 0.62).sqrt() };
    let w = weak_value(pre, post, WeakValueMode::Quantum).unwrap();
    let (a, b) = (0.62, -(1.0f64 - 0.62 * 0.62).sqrt());
    assert!((w - (0.8 * a - 0.6 * b) / (0.8 * a + 0.6 * b)).abs() < 1e-12 * w.abs());
    assert!(w.abs() > 1.0);
}

#[test]
fn weak_limit_is_independent_of_b() {
    for g in [1e-4, 1e-5, 1e-6] {
        let m = strength(g);
        let values: Vec<f64> = (0..=90)
            .map(|i| dsa_snr(&pps(i as f64 / 100.0, PI / 4.0), &m, 1).unwrap().reduced)
            .collect();
        let spread = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 10.0 * g, "g={g}: spread {spread}");
    }
}

#[test]
fn frozen_reduced_snr_value() {
    let r = dsa_snr(&pps(0.2, PI / 4.0), &strength(0.1), 1).unwrap().reduced;
    assert!((r - 0.646597817195020530571).abs() < 1e-14, "{r}");
}

#[test]
fn snr_endpoints_and_balance_zero() {
    let m = strength(0.1);
    for i in 1..=9 {
        let b = i as f64 / 10.0;
        for theta in [0.0, PI] {
            assert!((dsa_snr(&pps(b, theta), &m, 1).unwrap().reduced - 1.0).abs() < 1e-12);
        }
        assert_eq!(dsa_snr(&pps(b, PI / 2.0), &m, 1).unwrap().reduced, 0.0);
    }
}

#[test]
fn bdsa_unit_bias_is_dsa() {
    for p in lattice(200, 2) {
        let (b, theta) = (0.05 + 0.9 * p[0], 0.01 + (PI - 0.02) * p[1]);
        let (c, m) = (pps(b, theta), strength(0.1));
        let (Ok(x), Ok(s)) = (analytic::dsa_signal(&c, &m), bdsa_signal(&c, &m, 1.0)) else { continue };
        assert!((s.exact - x).abs() <= 1e-12 * x.abs(), "b={b} theta={theta}");
    }
}

#[test]
fn bdsa_ridge_follows_eta_equals_beta() {
    // η = 2 ⇔ By = 1/3. Approach the ridge along θ at B = 0.6.
    let m = strength(0.1);
    let theta_ridge = (1.0f64 / 3.0 / 0.6).acos();
    let near = bdsa_signal(&pps(0.6, theta_ridge + 1e-6), &m, 2.0).unwrap();
    assert!(near.exact.abs() / m.d() > 1e4);
    let on = bdsa_signal(&pps(0.6, theta_ridge), &m, 2.0);
    assert!(matches!(on, Err(DsaError::SingularBias { .. })) || on.unwrap().exact.abs() / m.d() > 1e10);
    // Reduced BDSA SNR vanishes on the y = 0 line.
    assert_eq!(bdsa_reduced_snr(&pps(0.4, PI / 2.0), &m, 0.4).unwrap(), 0.0);
}

proptest! {
    #[test]
    fn probabilities_sum_to_one(b in -1.0f64..=1.0, theta in 0.0f64..=PI) {
        let (pf, pfbar) = analytic::postselection_probs(&pps(b, theta));
        prop_assert!((pf + pfbar - 1.0).abs() <= 2.0 * f64::EPSILON);
        prop_assert!(pf >= 0.0 && pfbar >= 0.0);
    }

    #[test]
    fn snr_routes_agree(b in 0.01f64..0.99, theta in 0.0f64..=PI, g in 1e-4f64..10.0, n in 1u64..1_000_000) {
        let (c, m) = (pps(b, theta), strength(g));
        if let (Ok(s), Ok(r)) = (dsa_snr(&c, &m, n), dsa_snr_ratio_route(&c, &m, n)) {
            prop_assert!((s.snr - r).abs() <= 1e-9 * s.snr.max(1e-300));
            prop_assert!(s.reduced >= 0.0 && s.reduced <= 1.0 + 1e-12);
        }
    }
}
