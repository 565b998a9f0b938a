mod common;

use std::f64::consts::PI;

use common::{pps, strength};
use dsa_core::analytic::{self, dsa_snr};
use dsa_core::sweep::{figure, linspace, run_sweep, write_figure, Axis, Cell, Param, Quantity, SweepSpec};

#[test]
fn single_point_equals_direct_call() {
    let spec = SweepSpec::new(
        vec![Axis::new(Param::B, vec![0.3]), Axis::new(Param::Theta, vec![0.7])],
        vec![Quantity::Xbar, Quantity::DsaVariance, Quantity::BdsaSnr],
    )
    .fix(Param::G, 0.05)
    .fix(Param::N, 1e4)
    .fix(Param::BetaBias, 0.4);
    let t = run_sweep(&spec).unwrap();
    assert_eq!(t.rows.len(), 1);
    let (c, m) = (pps(0.3, 0.7), strength(0.05));
    assert_eq!(t.rows[0][2], Cell::Value(analytic::dsa_signal(&c, &m).unwrap()));
    assert_eq!(t.rows[0][3], Cell::Value(analytic::dsa_variance(&c, &m, 10_000).unwrap()));
    let bdsa = analytic::bdsa_variance_snr(&c, &m, 0.4, 10_000).unwrap();
    assert_eq!(t.rows[0][4], Cell::Value(bdsa.snr));
}

#[test]
fn balance_point_gives_sentinels() {
    let spec = SweepSpec::new(
        vec![Axis::new(Param::Theta, linspace(0.0, PI, 3))],
        vec![Quantity::Beta1, Quantity::Beta2, Quantity::Xbar, Quantity::PF],
    )
    .fix(Param::B, 0.4)
    .fix(Param::G, 0.1);
    let t = run_sweep(&spec).unwrap();
    let mid = &t.rows[1];
    assert_eq!(mid[0], Cell::Value(PI / 2.0));
    for cell in &mid[1..4] {
        assert_eq!(*cell, Cell::Degenerate("degenerate_balance"));
    }
    assert_eq!(mid[4], Cell::Value(0.5));
    let csv = t.to_csv();
    assert_eq!(csv.matches("DEGENERATE:degenerate_balance").count(), 3);
}

#[test]
fn surface_matches_direct_evaluation() {
    let spec = SweepSpec::new(
        vec![Axis::new(Param::B, linspace(0.0, 1.0, 101)), Axis::new(Param::Theta, linspace(0.0, PI, 101))],
        vec![Quantity::ReducedSnr],
    )
    .fix(Param::G, 0.1);
    let t = run_sweep(&spec).unwrap();
    assert_eq!(t.rows.len(), 101 * 101);
    let m = strength(0.1);
    for (i, b) in linspace(0.0, 1.0, 101).into_iter().enumerate() {
        for (j, theta) in linspace(0.0, PI, 101).into_iter().enumerate() {
            let direct = dsa_snr(&pps(b, theta), &m, 1).map(|s| s.reduced);
            let cell = &t.rows[i * 101 + j][2];
            match direct {
                Ok(v) => assert_eq!(*cell, Cell::Value(v), "B={b} theta={theta}"),
                Err(e) => assert_eq!(*cell, Cell::Degenerate(e.kind())),
            }
        }
    }
}

#[test]
fn csv_has_no_non_finite_text_and_is_stable() {
    for id in 1..=5u8 {
        for ft in figure(id).unwrap() {
            let csv = ft.table.to_csv();
            for token in csv.lines().filter(|l| !l.starts_with('#')).flat_map(|l| l.split(',')) {
                let lower = token.to_ascii_lowercase();
                assert!(!lower.contains("nan") && !lower.contains("inf"), "{}: {token}", ft.name);
            }
            assert_eq!(csv, figure(id).unwrap().into_iter().find(|f| f.name == ft.name).unwrap().table.to_csv());
        }
    }
}

#[test]
fn written_figures_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pa = write_figure(4, a.path()).unwrap();
    let pb = write_figure(4, b.path()).unwrap();
    assert_eq!(pa.len(), 1);
    assert_eq!(std::fs::read(&pa[0]).unwrap(), std::fs::read(&pb[0]).unwrap());
}

#[test]
fn fig5_vanishes_on_the_balance_line() {
    for ft in figure(5).unwrap() {
        let k = ft.table.column_index("theta").unwrap();
        let rows: Vec<_> = ft.table.rows.iter().filter(|r| r[k] == Cell::Value(PI / 2.0)).collect();
        assert_eq!(rows.len(), 101);
        for r in rows {
            assert_eq!(r[2], Cell::Value(0.0), "{}: {:?}", ft.name, r);
        }
    }
}

#[test]
fn overlay_agrees_with_closed_form() {
    let spec = SweepSpec::new(
        vec![Axis::new(Param::Theta, vec![0.3, 2.5])],
        vec![Quantity::Xbar, Quantity::McXbar, Quantity::McXbarSe],
    )
    .fix(Param::B, 0.2)
    .fix(Param::G, 0.0025)
    .with_overlay(dsa_core::sweep::McOverlay { n: 200_000, seeds: vec![1, 2, 3] });
    let t = run_sweep(&spec).unwrap();
    for r in &t.rows {
        let (x, mc, se) = (r[1].value().unwrap(), r[2].value().unwrap(), r[3].value().unwrap());
        assert!((mc - x).abs() < 5.0 * se, "{mc} vs {x} (se {se})");
    }
    assert!(t.metadata.iter().any(|l| l.contains("seeds = 1 2 3")));
}
