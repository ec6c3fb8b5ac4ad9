mod common;

use locc_usd::closedform::{critical_sc, optimal_ssd_stage, ssd_delta, ssd_hybrid_setup, SsdRegion};
use locc_usd::ensembles::EnsembleParams;
use locc_usd::protocols::ProtocolKind;

use common::{ssd_hybrid_gap, stage, THR};

fn grid() -> impl Iterator<Item = (f64, f64)> {
    (1..20).flat_map(|i| (1..20).map(move |j| (i as f64 / 20.0, j as f64 / 20.0)))
}

#[test]
fn protocol_at_stage_optima_reproduces_delta() {
    for (s, sp) in grid() {
        let d = ssd_delta(s, sp).unwrap();
        let p = EnsembleParams::pure_product(s, sp);
        let setup = ssd_hybrid_setup(&d, &p).unwrap();
        assert_eq!(setup.kind(), ProtocolKind::SsdHybrid);
        let rep = setup.run(&p).unwrap();
        assert!((rep.delta.unwrap() - d.delta).abs() < 1e-12, "({s}, {sp})");
        assert!((rep.total_success - d.local_success).abs() < 1e-12);
        assert!((rep.global_success.unwrap() - d.global_success).abs() < 1e-12);
    }
}

#[test]
fn trace_path_matches_formula_path() {
    for (s, sp) in [(0.1, 0.05), (0.1, 0.6), (0.5, 0.05), (0.5, 0.7), (0.3, 0.4), (0.9, 0.9)] {
        let d = ssd_delta(s, sp).unwrap();
        let p = EnsembleParams::pure_product(s, sp);
        let setup = ssd_hybrid_setup(&d, &p).unwrap();
        let formula = setup.run(&p).unwrap();
        let trace = setup.trace(&p).unwrap();
        assert!(formula.max_difference(&trace) < 1e-10, "({s}, {sp}): {formula:?} vs {trace:?}");
    }
}

#[test]
fn delta_matches_direct_optimization_everywhere() {
    for (s, sp) in grid() {
        if (s - THR).abs() < 1e-6 {
            continue;
        }
        let d = ssd_delta(s, sp).unwrap();
        let reference = ssd_hybrid_gap(s, sp);
        assert!((d.delta - reference).abs() < 1e-10, "({s}, {sp}): {} vs {reference}", d.delta);
        if let Some(cf) = d.closed_form {
            assert!((cf - d.delta).abs() < 1e-10, "({s}, {sp}) {:?}", d.region);
        }
    }
}

#[test]
fn regions_follow_the_thresholds() {
    for (s, sp) in grid() {
        let d = ssd_delta(s, sp).unwrap();
        let expected = if s <= THR {
            if sp <= THR {
                SsdRegion::SymI
            } else {
                SsdRegion::SymIi
            }
        } else if sp <= d.s_c.unwrap() {
            SsdRegion::AsymIii
        } else if s * sp <= THR {
            SsdRegion::AsymIi
        } else {
            SsdRegion::AsymI
        };
        assert_eq!(d.region, expected, "({s}, {sp})");
        assert_eq!(d.closed_form.is_none(), expected == SsdRegion::AsymIii);
    }
}

#[test]
fn stage_optimum_matches_direct_search() {
    for p1 in [0.05, 0.2, 0.35, 0.5] {
        for k in 1..40 {
            let s = k as f64 / 40.0;
            let closed = optimal_ssd_stage(p1, s).unwrap().p_max;
            let (reference, _) = stage(p1, s);
            assert!((closed - reference).abs() < 1e-12, "P_f1 {p1}, s {s}: {closed} vs {reference}");
        }
    }
}

/// Overlap where the interior stationary value meets the ignore-first
/// value, found by bisection over a dense scan of the stage objective.
fn critical_overlap_oracle(p1: f64) -> Option<f64> {
    let p2 = 1.0 - p1;
    let advantage = |s: f64| -> Option<f64> {
        let value = |q: f64| p1 * (1.0 - q).powi(2) + p2 * (1.0 - s / q).powi(2);
        // Largest local maximum strictly inside (s, 1).
        let n = 20_000;
        let qs: Vec<f64> = (0..=n).map(|k| s + (1.0 - s) * k as f64 / n as f64).collect();
        let interior = (1..n)
            .filter(|&k| value(qs[k]) >= value(qs[k - 1]) && value(qs[k]) >= value(qs[k + 1]))
            .map(|k| {
                let (_, v) = common::golden_min(qs[k - 1], qs[k + 1], |q| -value(q));
                -v
            })
            .fold(None, |b: Option<f64>, v| Some(b.map_or(v, |b| b.max(v))))?;
        Some(interior - p2 * (1.0 - s).powi(2))
    };
    // Interior wins at small overlap and loses (or disappears) near 1.
    let (mut lo, mut hi) = (1e-6, 1.0 - 1e-6);
    if advantage(lo)? <= 0.0 {
        return None;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        match advantage(mid) {
            Some(a) if a > 0.0 => lo = mid,
            _ => hi = mid,
        }
    }
    Some(0.5 * (lo + hi))
}

#[test]
fn critical_overlap_matches_dense_scan() {
    for p1 in [0.02, 0.1, 0.2, 0.3, 0.4, 0.45, 0.49] {
        let sc = critical_sc(p1, 1.0 - p1).unwrap();
        let reference = critical_overlap_oracle(p1).expect("interior branch at small overlap");
        assert!((sc.s_c - reference).abs() < 1e-9, "P_f1 {p1}: {} vs {reference}", sc.s_c);
    }
}

#[test]
fn equal_prior_critical_overlap_is_the_threshold() {
    let sc = critical_sc(0.5, 0.5).unwrap();
    assert!((sc.s_c - (3.0 - 2.0 * 2f64.sqrt())).abs() < 1e-8);
}

#[test]
fn diagonal_has_zero_gap_below_root_threshold() {
    for k in 1..30 {
        let s = THR + (THR.sqrt() - THR) * k as f64 / 30.0;
        let d = ssd_delta(s, s).unwrap();
        assert_eq!(d.region, SsdRegion::AsymIi);
        assert!(d.delta.abs() < 1e-10, "s = {s}: {}", d.delta);
    }
}
