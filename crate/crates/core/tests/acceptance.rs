//! End-to-end acceptance checks, one line per criterion with its tolerance
//! and runtime budget. Reference values come from `common`, not from the
//! library's closed forms.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use locc_usd::analysis::{emit_figure, overlap_point, ConjectureSetup, FigureId, FigureSpec};
use locc_usd::closedform::{
    critical_sc, grid_search_optimum, optimal_global_mixed, quartic_qstar, ssd_delta, ssd_f, ssd_f_stationary,
    ssd_hybrid_setup, theorem1_delta, GapCase, GridSettings, SsdRegion,
};
use locc_usd::ensembles::EnsembleParams;
use locc_usd::measurements::MeasurementSchedule;
use locc_usd::montecarlo::{sample_appendix_c_case_iii, sample_protocol, CaseIiiSpec};
use locc_usd::protocols::{
    global_trace, locc_trace, run_broadcast, run_global, run_locc, run_reproduce, run_ssd, ssd_trace,
    ProtocolSetup,
};
use locc_usd::Error;
use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

struct Check {
    ok: bool,
    detail: String,
}

impl Check {
    fn new(ok: bool, detail: impl Into<String>) -> Self {
        Self { ok, detail: detail.into() }
    }
}

/// Worst residual and a pass flag for a batch of comparisons.
#[derive(Default)]
struct Worst {
    value: f64,
    failures: usize,
    first_failure: Option<String>,
}

impl Worst {
    fn residual(&mut self, r: f64, tol: f64, ctx: impl FnOnce() -> String) {
        if !(r <= tol) {
            self.fail(ctx);
        }
        if r.is_nan() || r > self.value {
            self.value = r;
        }
    }

    fn require(&mut self, cond: bool, ctx: impl FnOnce() -> String) {
        if !cond {
            self.fail(ctx);
        }
    }

    fn fail(&mut self, ctx: impl FnOnce() -> String) {
        self.failures += 1;
        if self.first_failure.is_none() {
            self.first_failure = Some(ctx());
        }
    }

    fn ok(&self) -> bool {
        self.failures == 0
    }

    fn summary(&self) -> String {
        match &self.first_failure {
            None => format!("worst residual {:.2e}", self.value),
            Some(f) => format!("worst residual {:.2e}; {} failures, first: {f}", self.value, self.failures),
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn criterion(id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let check = f();
    let elapsed = start.elapsed();
    let in_budget = elapsed <= budget;
    let ok = check.ok && in_budget;
    let line = format!(
        "criterion {id:>2} {} {name}: {}; {:.2} s (budget {} s{})\n",
        if ok { "PASS" } else { "FAIL" },
        check.detail,
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_budget { "" } else { ", exceeded" },
    );
    // Written directly so the line shows even when test output is captured.
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    ok
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

// ---------------------------------------------------------------------------

fn locc_global_identity() -> Check {
    let mut w = Worst::default();
    let mut r = rng(1001);
    for k in 0..1000 {
        let p = draw_params(&mut r);
        let optimal_b = r.gen_bool(0.5);
        let a = draw_schedule(&mut r, p.s, p.s_tilde, false);
        let b = draw_schedule(&mut r, p.s_prime, p.s_tilde_prime, optimal_b);
        let local = run_locc(&p, &a, &b).expect("locc").total_success;
        let global = run_global(&p, &a.product(&b)).expect("global").total_success;
        let reference = success_from_failures(&p, [a.q1 * b.q1, a.q2 * b.q2], [a.q1_tilde * b.q1_tilde, a.q2_tilde * b.q2_tilde]);
        let ctx = || format!("{p:?}: P_L = {local}, P_G = {global}, reference {reference}");
        w.residual((local - global).abs(), 1e-12, ctx);
        w.residual((local - reference).abs(), 1e-12, ctx);
        // The operational path on a subset.
        if k % 20 == 0 {
            let lt = locc_trace(&p, &a, &b).expect("locc trace").total_success;
            let gt = global_trace(&p, &a.product(&b)).expect("global trace").total_success;
            w.residual((lt - reference).abs().max((gt - reference).abs()), 1e-10, || {
                format!("{p:?}: trace L = {lt}, trace G = {gt}")
            });
        }
    }
    Check::new(w.ok(), format!("1000 draws, tol 1e-12 (trace subset 1e-10), {}", w.summary()))
}

fn theorem2_identity() -> Check {
    let mut w = Worst::default();
    let mut r = rng(1002);
    for k in 0..1000 {
        let p = draw_params(&mut r);
        let alice = draw_schedule(&mut r, p.s, p.s_tilde, false);
        let optimal = r.gen_bool(0.5);
        let shared = draw_schedule(&mut r, alice.t, alice.t_tilde, optimal);
        let ssd = run_ssd(&p, &alice, &shared).expect("ssd");
        let at_least_one = ssd.at_least_one.expect("at_least_one");
        let mut bp = p;
        bp.s_prime = alice.t;
        bp.s_tilde_prime = alice.t_tilde;
        let locc = run_locc(&bp, &alice, &shared).expect("locc").total_success;
        let reference = success_from_failures(
            &p,
            [alice.q1 * shared.q1, alice.q2 * shared.q2],
            [alice.q1_tilde * shared.q1_tilde, alice.q2_tilde * shared.q2_tilde],
        );
        let ctx = || format!("{p:?}: at least one {at_least_one}, P_L {locc}, reference {reference}");
        w.residual((at_least_one - locc).abs(), 1e-12, ctx);
        w.residual((at_least_one - reference).abs(), 1e-12, ctx);
        if k % 20 == 0 {
            let tr = ssd_trace(&p, &alice, &shared).expect("ssd trace");
            let t1 = tr.at_least_one.unwrap_or(tr.total_success);
            w.residual((t1 - reference).abs(), 1e-10, || format!("{p:?}: trace {t1}"));
        }
    }
    Check::new(w.ok(), format!("1000 draws with q^C = q^B, tol 1e-12, {}", w.summary()))
}

/// Whether the first state is the less likely one in both blocks.
fn ordered(p: &EnsembleParams) -> bool {
    let p2 = 1.0 - p.p1;
    p.p1 * p.r1 <= p2 * p.r2 && p.p1 * (1.0 - p.r1) <= p2 * (1.0 - p.r2)
}

fn orient(p: EnsembleParams) -> Option<EnsembleParams> {
    [p, p.relabeled()].into_iter().find(ordered)
}

/// `le`/`gt` of each block against its identification threshold.
fn cell(p: &EnsembleParams) -> String {
    let p2 = 1.0 - p.p1;
    let side = |ov: f64, a: f64, b: f64| if ov <= (a / b).sqrt() { "le" } else { "gt" };
    format!(
        "{}-{}",
        side(p.s * p.s_prime, p.p1 * p.r1, p2 * p.r2),
        side(p.s_tilde * p.s_tilde_prime, p.p1 * (1.0 - p.r1), p2 * (1.0 - p.r2))
    )
}

fn table1() -> Check {
    let settings = GridSettings {
        resolution: 1e-4,
        ..GridSettings::default()
    };
    let mut w = Worst::default();
    let mut r = rng(1003);
    let mut per_cell = Vec::new();
    for target in ["le-le", "le-gt", "gt-le", "gt-gt"] {
        let mut worst = 0.0f64;
        let mut found = 0;
        let mut attempts = 0;
        while found < 100 {
            attempts += 1;
            assert!(attempts < 1_000_000, "cannot draw cell {target}");
            let mut p = draw_params(&mut r);
            p.p1 = r.gen_range(0.05..0.5);
            let Some(p) = orient(p) else { continue };
            if cell(&p) != target {
                continue;
            }
            found += 1;
            let closed = optimal_global_mixed(&p).expect("closed form");
            w.require(closed.region == target, || format!("{p:?}: region {} vs {target}", closed.region));
            let (s0, s0t) = (p.s * p.s_prime, p.s_tilde * p.s_tilde_prime);
            let objective = |u: &[f64]| -> Option<f64> {
                let q1 = (s0 * s0).powf(1.0 - u[0]);
                let q1t = (s0t * s0t).powf(1.0 - u[1]);
                Some(success_from_failures(&p, [q1, s0 * s0 / q1], [q1t, s0t * s0t / q1t]))
            };
            let grid = grid_search_optimum(2, objective, &settings).expect("grid search").value;
            let d = (closed.p_max - grid).abs();
            worst = worst.max(d);
            w.residual(d, 1e-6, || format!("{p:?}: closed {} vs grid {grid}", closed.p_max));
            let direct = mixed_global(&p);
            w.residual((closed.p_max - direct).abs(), 1e-12, || {
                format!("{p:?}: closed {} vs blockwise {direct}", closed.p_max)
            });
        }
        per_cell.push(format!("{target} {worst:.1e}"));
    }
    Check::new(
        w.ok(),
        format!("100 draws per cell vs grid oracle (resolution 1e-4), tol 1e-6; per cell [{}]; {}", per_cell.join(", "), w.summary()),
    )
}

fn theorem1() -> Check {
    let mut w = Worst::default();
    let mut r = rng(1004);
    let mut counts = [0usize; 4];
    let mut off_line_min = f64::INFINITY;
    let mut positive_min = f64::INFINITY;
    let mut sampled = 0;
    while sampled < 10_000 {
        let mut p = draw_params(&mut r);
        p.p1 = r.gen_range(0.02..0.5);
        let Some(p) = orient(p) else { continue };
        sampled += 1;
        let delta = pure_global(p.p1, pure_overlap(&p)) - mixed_global(&p);
        let rep = theorem1_delta(&p).expect("gap");
        let ctx = || format!("{p:?}: reference {delta}, library {} ({:?})", rep.delta, rep.case);
        w.residual((rep.delta - delta).abs(), 1e-12, ctx);
        let c = cell(&p);
        let expected = match c.as_str() {
            "le-le" => GapCase::I,
            "gt-gt" => GapCase::Ii,
            _ if pure_overlap(&p) <= (p.p1 / (1.0 - p.p1)).sqrt() => GapCase::Iii,
            _ => GapCase::Iv,
        };
        w.require(rep.case == expected, || format!("{p:?}: case {:?}, expected {expected:?}", rep.case));
        match expected {
            GapCase::I => {
                counts[0] += 1;
                w.residual(delta.abs(), 1e-12, ctx);
            }
            GapCase::Ii => {
                counts[1] += 1;
                off_line_min = off_line_min.min(delta);
                w.require(delta > 0.0, ctx);
            }
            GapCase::Iii | GapCase::Iv => {
                counts[if expected == GapCase::Iii { 2 } else { 3 }] += 1;
                positive_min = positive_min.min(delta);
                w.require(delta > 0.0, ctx);
            }
        }
    }
    // On the case-ii line √(r₁r̃₂)s̃₀ = √(r₂r̃₁)s₀.
    let mut on_line = 0;
    let mut line_worst = 0.0f64;
    while on_line < 1000 {
        let mut p = draw_params(&mut r);
        p.p1 = r.gen_range(0.02..0.5);
        let (r1t, r2t) = (1.0 - p.r1, 1.0 - p.r2);
        p.s_tilde_prime = (p.r2 * r1t).sqrt() * p.s * p.s_prime / ((p.r1 * r2t).sqrt() * p.s_tilde);
        if !(p.s_tilde_prime < 1.0) || !ordered(&p) || cell(&p) != "gt-gt" {
            continue;
        }
        on_line += 1;
        let delta = pure_global(p.p1, pure_overlap(&p)) - mixed_global(&p);
        let lib = theorem1_delta(&p).expect("gap").delta;
        line_worst = line_worst.max(delta.abs()).max(lib.abs());
        w.residual(delta.abs().max(lib.abs()), 1e-12, || format!("{p:?}: on-line gap {delta} / {lib}"));
    }
    let all_cases = counts.iter().all(|&c| c > 0);
    Check::new(
        w.ok() && all_cases,
        format!(
            "1e4 points (cases i/ii/iii/iv: {}/{}/{}/{}), case i and 1000 line points within 1e-12 (line worst {line_worst:.1e}), min gap off-line {off_line_min:.2e}, cases iii/iv {positive_min:.2e}; {}",
            counts[0],
            counts[1],
            counts[2],
            counts[3],
            w.summary()
        ),
    )
}

fn hybrids() -> Check {
    let mut w = Worst::default();
    let re = |x: f64| (1.0 - x).powi(2);
    let br = |x: f64| (1.0 - x).powi(2) / (1.0 + x);
    let composed = |f: &dyn Fn(f64) -> f64, s: f64, sp: f64| f(s * sp) - (1.0 - (1.0 - f(s)) * (1.0 - f(sp)));
    let mut min = f64::INFINITY;
    for i in 1..=50 {
        for j in 1..=50 {
            let (s, sp) = (i as f64 / 51.0, j as f64 / 51.0);
            let p = EnsembleParams::pure_product(s, sp);
            let closed_re = 2.0 * s * sp * (1.0 - s) * (1.0 - sp);
            let s0 = s * sp;
            let closed_br = 2.0 * (1.0 - s) * (1.0 - sp) * s0 * (3.0 + s0) / ((1.0 + s) * (1.0 + sp) * (1.0 + s0));
            for (name, closed, comp, report) in [
                ("reproduce", closed_re, composed(&re, s, sp), run_reproduce(&p).expect("reproduce")),
                ("broadcast", closed_br, composed(&br, s, sp), run_broadcast(&p).expect("broadcast")),
            ] {
                let lib = report.delta.expect("delta");
                let ctx = || format!("{name} at ({s}, {sp}): closed {closed}, composed {comp}, protocol {lib}");
                w.residual((closed - comp).abs().max((lib - comp).abs()), 1e-12, ctx);
                w.require(closed > 0.0 && lib > 0.0, ctx);
                min = min.min(closed).min(lib);
            }
        }
    }
    Check::new(w.ok(), format!("50×50 grid, tol 1e-12, smallest ΔP {min:.2e}; {}", w.summary()))
}

fn appendix_b() -> Check {
    let mut w = Worst::default();
    for i in 1..=50 {
        for j in 1..=50 {
            let s = THR * i as f64 / 50.0;
            let sp = j as f64 / 51.0;
            let (a, b) = (s.sqrt(), sp.sqrt());
            // Both expressions of the sub-threshold regions.
            let formula = if sp <= THR {
                2.0 * a * b * (1.0 - a) * (1.0 - b)
            } else {
                0.5 * a * (1.0 - b) * ((2.0 - a) * (1.0 + b) * (1.0 + sp) - 4.0 * b)
            };
            if s == THR || (sp - THR).abs() < 1e-9 {
                continue;
            }
            let composed = ssd_hybrid_gap(s, sp);
            let lib = ssd_delta(s, sp).expect("ssd delta");
            let ctx = || format!("({s}, {sp}): formula {formula}, composed {composed}, library {}", lib.delta);
            w.residual((formula - composed).abs().max((lib.delta - composed).abs()), 1e-10, ctx);
        }
    }
    let r2 = 2f64.sqrt();
    let closed = (29.0 + 12.0 * r2 - 2.0 * (154.0 + 84.0 * r2).sqrt()) / 63.0;
    let f = |x: f64| {
        let b = x.sqrt();
        (2.0 - THR.sqrt()) * (1.0 + b) * (1.0 + x) - 4.0 * b
    };
    let (x_num, f_num) = golden_min(1e-6, 1.0, f);
    let h = 1e-4;
    let second = (f(closed + h) - 2.0 * f(closed) + f(closed - h)) / (h * h);
    let st = ssd_f_stationary();
    let mut ok = w.ok();
    ok &= (st.s0_f - closed).abs() < 1e-10 && (x_num - closed).abs() < 1e-6;
    ok &= (st.f_min - f_num).abs() < 1e-12 && (st.f_min - 0.96).abs() <= 0.01;
    ok &= (st.second_derivative - second).abs() < 1e-4 && (st.second_derivative - 9.11).abs() <= 0.05;
    ok &= (ssd_f(THR, closed) - f(closed)).abs() < 1e-14;
    Check::new(
        ok,
        format!(
            "50×50 grid tol 1e-10 ({}); s0_F = {:.12} (closed {closed:.12}), F = {:.5}, F'' = {:.4} (finite difference {second:.4})",
            w.summary(),
            st.s0_f,
            st.f_min,
            st.second_derivative
        ),
    )
}

fn appendix_c() -> Check {
    let mut w = Worst::default();
    let mut r = rng(1007);
    let mut no_root = 0;
    for _ in 0..1000 {
        let p1: f64 = r.gen_range(0.01..0.5);
        let sp: f64 = r.gen_range(0.001..0.999);
        let p2 = 1.0 - p1;
        let quartic = |q: f64| p1 * q.powi(4) - p1 * q.powi(3) + p2 * sp * q - p2 * sp * sp;
        match quartic_qstar(p1, p2, sp) {
            Ok(root) => {
                w.residual(quartic(root.q_star).abs(), 1e-10, || format!("P_f1 {p1}, s′ {sp}: q* {}", root.q_star));
            }
            Err(Error::NoRoot(_)) => {
                no_root += 1;
                // Confirm there is no sign change inside (s′, 1).
                let n = 20_000;
                let signs = (1..n).map(|k| quartic(sp + (1.0 - sp) * k as f64 / n as f64) > 0.0);
                let changes = signs.collect::<Vec<_>>().windows(2).filter(|w| w[0] != w[1]).count();
                w.require(changes == 0, || format!("P_f1 {p1}, s′ {sp}: reported no root, {changes} sign changes"));
            }
            Err(e) => panic!("{e}"),
        }
    }
    let quartic_summary = w.summary();
    let sc = critical_sc(0.5, 0.5).expect("s_c");
    let sc_ok = (sc.s_c - THR).abs() < 1e-8;

    let mut diag = Worst::default();
    for k in 1..50 {
        let s = THR + (THR.sqrt() - THR) * k as f64 / 50.0;
        let lib = ssd_delta(s, s).expect("diagonal").delta;
        let reference = ssd_hybrid_gap(s, s);
        diag.residual(lib.abs().max(reference.abs()), 1e-10, || format!("s = {s}: {lib} / {reference}"));
    }

    let rep = sample_appendix_c_case_iii(&CaseIiiSpec::default(), 100_000, 1007).expect("case iii");
    let at_min = ssd_hybrid_gap(rep.argmin.0, rep.argmin.1);
    let mut cross = Worst::default();
    let mut checked = 0;
    while checked < 500 {
        let s: f64 = r.gen_range(THR..1.0);
        let sp: f64 = r.gen_range(0.0..THR);
        let d = ssd_delta(s, sp).expect("delta");
        if d.region != SsdRegion::AsymIii {
            continue;
        }
        checked += 1;
        let reference = ssd_hybrid_gap(s, sp);
        cross.residual((d.delta - reference).abs(), 1e-10, || format!("({s}, {sp}): {} vs {reference}", d.delta));
        cross.require(reference > 0.0, || format!("({s}, {sp}): reference gap {reference}"));
    }
    let ok = w.ok() && sc_ok && diag.ok() && rep.all_positive && rep.min_delta > 0.0 && at_min > 0.0 && cross.ok();
    Check::new(
        ok,
        format!(
            "quartic: 1000 draws, tol 1e-10, {quartic_summary} ({no_root} without a root); s_c(½) − (3−2√2) = {:.1e} (tol 1e-8); diagonal tol 1e-10, {}; case iii: min ΔP {:.3e} at ({:.6}, {:.6}) over {} samples (reference there {at_min:.3e}), 500-point cross-check {}",
            sc.s_c - THR,
            diag.summary(),
            rep.min_delta,
            rep.argmin.0,
            rep.argmin.1,
            rep.n_points,
            cross.summary()
        ),
    )
}

/// Bob's success with the dual-vector measurement: identifying `|v_k⟩` among
/// four vectors with Gram `G` succeeds with `c_k / (G⁻¹)_kk`.
fn bob_success_dual(sp: f64, stp: f64, eps: f64, c: f64, pf: [f64; 2], v: [(f64, f64); 2]) -> f64 {
    // Order: r₁′, r₂′, r̃₁′, r̃₂′; only r₂′ and r̃₂′ overlap across blocks.
    let g = Matrix4::new(
        1.0, sp, 0.0, 0.0, //
        sp, 1.0, 0.0, eps, //
        0.0, 0.0, 1.0, stp, //
        0.0, eps, stp, 1.0,
    );
    let inv = g.try_inverse().expect("Gram invertible");
    pf[0] * (v[0].0 * c / inv[(0, 0)] + v[0].1 * c / inv[(2, 2)])
        + pf[1] * (v[1].0 * c / inv[(1, 1)] + v[1].1 * c / inv[(3, 3)])
}

fn appendix_a() -> Check {
    let setup = ConjectureSetup::default();
    let p = setup.params;
    let a = setup.alice;
    let c = setup.coefficients.c1;
    assert!([setup.coefficients.c2, setup.coefficients.c1_tilde, setup.coefficients.c2_tilde]
        .iter()
        .all(|&x| x == c));
    // Post-measurement priors and block weights after Alice's failure.
    let pr = [p.p1, 1.0 - p.p1];
    let r = [p.r1, p.r2];
    let fail = |i: usize| {
        let (q, qt) = a.q(i);
        (r[i] * q, (1.0 - r[i]) * qt)
    };
    let f = [fail(0), fail(1)];
    let tot = [f[0].0 + f[0].1, f[1].0 + f[1].1];
    let norm = pr[0] * tot[0] + pr[1] * tot[1];
    let pf = [pr[0] * tot[0] / norm, pr[1] * tot[1] / norm];
    let v = [(f[0].0 / tot[0], f[0].1 / tot[0]), (f[1].0 / tot[1], f[1].1 / tot[1])];

    let mut w = Worst::default();
    let mut prev = f64::INFINITY;
    let mut n = 0;
    let mut last_gap = f64::NAN;
    for k in 0..=24 {
        let eps = 0.3 * (1e-6f64 / 0.3).powf(k as f64 / 24.0);
        let pt = overlap_point(&setup, eps).expect("overlap point");
        let star = bob_success_dual(p.s_prime, p.s_tilde_prime, eps, c, pf, v);
        let plain = bob_success_dual(p.s_prime, p.s_tilde_prime, 0.0, c, pf, v);
        let gap = plain - star;
        let ctx = || format!("ε = {eps:e}: P^B* {star} (library {}), P^B {plain} (library {})", pt.p_b_star, pt.p_b);
        w.residual((pt.p_b_star - star).abs().max((pt.p_b - plain).abs()), 1e-10, ctx);
        w.require(gap > 0.0 && pt.p_b - pt.p_b_star > 0.0, ctx);
        w.require(gap < prev, ctx);
        if eps <= 1e-4 {
            w.require(gap < 1e-6, ctx);
        }
        prev = gap;
        last_gap = gap;
        n += 1;
    }
    Check::new(
        w.ok(),
        format!("{n} ε values from 0.3 to 1e-6, P^B* < P^B and decreasing gap, gap at 1e-6 = {last_gap:.2e}; {}", w.summary()),
    )
}

fn monte_carlo() -> Check {
    let mut r = rng(1009);
    let mut configs: Vec<(EnsembleParams, ProtocolSetup, Option<f64>)> = Vec::new();
    for k in 0..4 {
        let p = draw_params(&mut r);
        let a = draw_schedule(&mut r, p.s, p.s_tilde, false);
        let b = draw_schedule(&mut r, p.s_prime, p.s_tilde_prime, k % 2 == 0);
        let reference = success_from_failures(&p, [a.q1 * b.q1, a.q2 * b.q2], [a.q1_tilde * b.q1_tilde, a.q2_tilde * b.q2_tilde]);
        configs.push((p, ProtocolSetup::Locc { alice: a, bob: b }, Some(reference)));
    }
    for k in 0..3 {
        let p = draw_params(&mut r);
        let g = draw_schedule(&mut r, p.s * p.s_prime, p.s_tilde * p.s_tilde_prime, k != 1);
        let reference = success_from_failures(&p, [g.q1, g.q2], [g.q1_tilde, g.q2_tilde]);
        configs.push((p, ProtocolSetup::Global { global: g }, Some(reference)));
    }
    for _ in 0..3 {
        let p = draw_params(&mut r);
        let a = draw_schedule(&mut r, p.s, p.s_tilde, false);
        let c = draw_schedule(&mut r, a.t, a.t_tilde, true);
        configs.push((p, ProtocolSetup::Ssd { alice: a, charlie: c }, None));
    }
    for _ in 0..3 {
        let p = draw_params(&mut r);
        let a = MeasurementSchedule::symmetric_optimal(p.s, p.s_tilde);
        let b = draw_schedule(&mut r, p.s_prime, p.s_tilde_prime, true);
        configs.push((p, ProtocolSetup::PureLocal { alice: a, bob: b }, None));
    }
    for (s, sp) in [(0.3, 0.7), (0.8, 0.15)] {
        configs.push((EnsembleParams::pure_product(s, sp), ProtocolSetup::Reproduce, None));
        configs.push((EnsembleParams::pure_product(sp, s), ProtocolSetup::Broadcast, None));
    }
    for (s, sp) in [(0.1, 0.5), (0.5, 0.1), (0.6, 0.7)] {
        let p = EnsembleParams::pure_product(s, sp);
        let d = ssd_delta(s, sp).expect("delta");
        configs.push((p, ssd_hybrid_setup(&d, &p).expect("setup"), None));
    }
    assert_eq!(configs.len(), 20);

    let n = 1_000_000;
    let mut w = Worst::default();
    let mut worst_z = 0.0f64;
    let mut estimates = 0;
    for (k, (p, setup, reference)) in configs.iter().enumerate() {
        let seed = 5000 + k as u64;
        let rep = sample_protocol(p, setup, n, seed).expect("sample");
        for e in &rep.estimates {
            estimates += 1;
            let sd = (e.analytic * (1.0 - e.analytic) / n as f64).sqrt();
            if sd > 0.0 {
                worst_z = worst_z.max((e.probability - e.analytic).abs() / sd);
            }
            w.require(e.within(5.0, n), || format!("{:?} {}: {} vs {}", setup.kind(), e.event, e.probability, e.analytic));
        }
        if let Some(reference) = reference {
            let analytic = rep.estimate("total_success").expect("total").analytic;
            w.residual((analytic - reference).abs(), 1e-12, || format!("{:?}: analytic {analytic} vs {reference}", setup.kind()));
        }
        let again = sample_protocol(p, setup, n, seed).expect("rerun");
        w.require(again == rep, || format!("{:?}: rerun differs", setup.kind()));
    }
    Check::new(
        w.ok(),
        format!("20 configurations, n = 1e6, {estimates} estimates within 5σ (largest |z| = {worst_z:.2}), reruns identical; {}", w.summary()),
    )
}

fn figures() -> Check {
    let spec = FigureSpec::default();
    let mut w = Worst::default();
    let fig6 = emit_figure(FigureId::Fig6, &spec).expect("fig6");
    let mut notes = Vec::new();
    for s in [0.2, 0.3, 0.4, 0.8] {
        let series = fig6.series(&format!("s={s}")).expect("series");
        let (xmin, ymin) = series.points.iter().fold((f64::NAN, f64::INFINITY), |b, p| if p[1] < b.1 { (p[0], p[1]) } else { b });
        if s < 0.5 {
            let at = series.points.iter().find(|p| (p[0] - s).abs() < 1e-12).expect("grid point at s′ = s");
            w.residual(at[1].abs(), 1e-10, || format!("fig6 s = {s}: ΔP(s′ = s) = {}", at[1]));
            w.require(ymin >= -1e-10, || format!("fig6 s = {s}: negative value {ymin} at {xmin}"));
            w.require(series.points.iter().any(|p| p[0] < s && p[1] > 1e-6) && series.points.iter().any(|p| p[0] > s && p[1] > 1e-6), || {
                format!("fig6 s = {s}: no positive values on both sides of s′ = s")
            });
        } else {
            w.require(ymin > 0.0, || format!("fig6 s = {s}: minimum {ymin} at {xmin}"));
        }
        notes.push(format!("s={s} min {ymin:.1e} at {xmin}"));
        for p in series.points.iter().step_by(40) {
            let reference = ssd_hybrid_gap(s, p[0]);
            w.residual((p[1] - reference).abs(), 1e-10, || format!("fig6 s = {s}, s′ = {}: {} vs {reference}", p[0], p[1]));
        }
    }
    let fig3 = emit_figure(FigureId::Fig3, &spec).expect("fig3");
    for series in &fig3.series {
        for pair in series.points.windows(2) {
            w.require(pair[1][0] > pair[0][0] && pair[1][1] >= pair[0][1] - 1e-15, || {
                format!("fig3 {}: decreasing between {:?} and {:?}", series.label, pair[0], pair[1])
            });
        }
    }
    // Where a series' case applies, it is the actual gap.
    let (lo, hi) = spec.r_range;
    let iii = fig3.series("case-iii").expect("case iii");
    let iv = fig3.series("case-iv").expect("case iv");
    for k in 0..spec.points {
        let r = lo + (hi - lo) * k as f64 / (spec.points - 1) as f64;
        let p = EnsembleParams::new(0.1, r, r, 0.7f64.sqrt(), 0.2f64.sqrt(), 0.7f64.sqrt(), 0.2f64.sqrt());
        let gap = pure_global(0.1, pure_overlap(&p)) - mixed_global(&p);
        let series = if pure_overlap(&p) <= (0.1f64 / 0.9).sqrt() { iii } else { iv };
        w.residual((series.points[k][1] - gap).abs(), 1e-12, || format!("fig3 r = {r}: {} vs {gap}", series.points[k][1]));
    }
    Check::new(w.ok(), format!("fig6 [{}]; fig3 non-decreasing, applicable case equals the gap; {}", notes.join(", "), w.summary()))
}

#[test]
fn acceptance() {
    let results = [
        criterion(1, "LOCC equals global with product schedules", secs(5), locc_global_identity),
        criterion(2, "at least one sequential observer succeeds as often as LOCC", secs(5), theorem2_identity),
        criterion(3, "mixed-pair global optimum, four threshold cells", secs(60), table1),
        criterion(4, "pure-pair versus mixed-pair optimum gap", secs(30), theorem1),
        criterion(5, "reproducing and broadcasting hybrids", secs(10), hybrids),
        criterion(6, "sequential hybrid below the threshold overlap", secs(5), appendix_b),
        criterion(7, "sequential hybrid above the threshold overlap", secs(120), appendix_c),
        criterion(8, "overlapping supports on Bob's side", secs(5), appendix_a),
        criterion(9, "Monte Carlo consistency", secs(300), monte_carlo),
        criterion(10, "figure data", secs(60), figures),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(k, _)| k + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
