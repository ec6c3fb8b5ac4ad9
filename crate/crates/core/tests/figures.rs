mod common;

use locc_usd::analysis::{emit_figure, FigureId, FigureSeries, FigureSpec};
use locc_usd::closedform::critical_sc;

use common::THR;

fn small() -> FigureSpec {
    FigureSpec {
        points: 80,
        region_points: 40,
        ..FigureSpec::default()
    }
}

#[test]
fn every_figure_round_trips_and_writes_csv() {
    for id in FigureId::ALL {
        let fig = emit_figure(id, &small()).unwrap();
        let csv = fig.to_csv();
        let total: usize = fig.series.iter().map(|s| s.points.len()).sum();
        assert_eq!(csv.lines().count(), total + 1, "{id}");
        assert_eq!(csv.lines().next(), Some("x,y,series"));
        let back: FigureSeries = serde_json::from_str(&serde_json::to_string(&fig).unwrap()).unwrap();
        assert_eq!(back, fig);
        assert_eq!(id.as_str().parse::<FigureId>().unwrap(), id);
    }
    assert!("fig5".parse::<FigureId>().is_err());
}

#[test]
fn fig7_switches_branch_near_the_critical_overlap() {
    let fig = emit_figure(FigureId::Fig7, &FigureSpec { points: 400, ..small() }).unwrap();
    for s in [0.2f64, 0.5, 0.9] {
        let series = fig.series(&format!("s={s}")).unwrap();
        // Second-stage priors after the first stage ignores one state.
        let rest = 1.0 - (1.0 - s).powi(2);
        let p1 = rest / (1.0 + rest);
        let sc = critical_sc(p1, 1.0 - p1).unwrap().s_c;
        // Above s_c the ignore branch gives (1 − P_f1)(1 − s′)².
        for p in &series.points {
            if p[0] > sc + 1e-3 {
                assert!((p[1] - (1.0 - p1) * (1.0 - p[0]).powi(2)).abs() < 1e-12, "s={s} at {}", p[0]);
            } else if p[0] < sc - 1e-3 {
                assert!(p[1] > (1.0 - p1) * (1.0 - p[0]).powi(2), "s={s} at {}", p[0]);
            }
        }
        let note = &fig.metadata[&format!("s={s}")];
        assert!(note.contains(&format!("{sc:.10}")), "{note}");
    }
}

#[test]
fn fig8_boundaries() {
    let fig = emit_figure(FigureId::Fig8, &small()).unwrap();
    for p in &fig.series("product-threshold").unwrap().points {
        assert!((p[0] * p[1] - THR).abs() < 1e-12);
    }
    for p in &fig.series("diagonal").unwrap().points {
        assert_eq!(p[0], p[1]);
        assert!(p[0] >= THR - 1e-15 && p[0] <= THR.sqrt() + 1e-15);
    }
    let sc = &fig.series("critical-overlap").unwrap().points;
    assert!(!sc.is_empty());
    for p in sc {
        assert!(p[0] > THR && p[1] > 0.0 && p[1] < 1.0);
    }
}

#[test]
fn fig3_rejects_two_to_one_range() {
    let spec = FigureSpec {
        r_range: (0.05, 0.95),
        ..small()
    };
    assert!(emit_figure(FigureId::Fig3, &spec).is_err());
    assert!(emit_figure(FigureId::Fig6, &FigureSpec { points: 1, ..small() }).is_err());
}
