//! Closed-form optima and the numerical search used to cross-check them.
//!
//! Three families of optima live here:
//!
//! * global discrimination of the mixed pair (four cells, one per block
//!   being above or below its prior-weighted threshold) and of the pure pair
//!   with overlap `s*`;
//! * the gap between the two ([`theorem1_delta`]);
//! * the joint optimum of a two-observer sequential stage on one particle
//!   ([`optimal_ssd_stage`]) and the hybrid comparison built on it
//!   ([`ssd_delta`]).
//!
//! [`grid_search_optimum`] and [`random_search`] know nothing about the
//! formulas. They optimize over a unit cube that the caller maps onto a
//! constraint manifold, and serve as oracles.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::EnsembleParams;
use crate::error::{Error, Result};
use crate::measurements::MeasurementSchedule;
use crate::protocols::{ProtocolSetup, SsdStage};

/// `3 − 2√2`, where the equal-prior sequential optimum switches branch.
pub const SSD_THRESHOLD: f64 = 0.171_572_875_253_809_9;

/// Ties closer than this to a branch boundary take the left branch and are
/// flagged.
pub const BOUNDARY_TOL: f64 = 1e-14;

const BISECTION_CAP: usize = 200;
const SC_SCAN: usize = 32;

/// Which states an optimal measurement actually identifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    BothIdentified,
    OneIdentified,
    /// One block identified, the other ignored.
    PartiallyIdentified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumReport {
    pub p_max: f64,
    pub argmax: BTreeMap<String, f64>,
    pub branch: Branch,
    pub region: String,
    /// Parameters sit on a branch boundary (within [`BOUNDARY_TOL`]).
    pub boundary: bool,
}

impl OptimumReport {
    fn new(p_max: f64, branch: Branch, region: impl Into<String>, boundary: bool) -> Self {
        Self {
            p_max,
            argmax: BTreeMap::new(),
            branch,
            region: region.into(),
            boundary,
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.argmax.insert(key.to_string(), value);
        self
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        self.argmax
            .get(key)
            .copied()
            .ok_or_else(|| Error::UnknownId(key.to_string()))
    }
}

/// `x ≤ threshold` with the boundary rule; returns `(left, on_boundary)`.
fn at_most(x: f64, threshold: f64) -> (bool, bool) {
    let boundary = (x - threshold).abs() <= BOUNDARY_TOL;
    (boundary || x <= threshold, boundary)
}

fn require_unit_open(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::validation(format!("{name} = {v} must lie strictly inside (0, 1)")))
    }
}

// ---------------------------------------------------------------------------
// Global optima

/// Optimum of one block: minimize `a q₁ + b s₀²/q₁` over `q₁ ∈ [s₀², 1]`.
/// Returns `(failure, q₁, identified, boundary)`.
fn block_optimum(a: f64, b: f64, s0: f64) -> (f64, f64, bool, bool) {
    if a <= 0.0 || b <= 0.0 {
        // An empty side: nothing to gain from identifying the other state.
        return (a + b * s0 * s0, 1.0, false, false);
    }
    let (le, boundary) = at_most(s0, (a / b).sqrt());
    if le {
        (2.0 * (a * b).sqrt() * s0, ((b / a).sqrt() * s0).min(1.0), true, boundary)
    } else {
        (a + b * s0 * s0, 1.0, false, boundary)
    }
}

fn require_orthogonal_supports(p: &EnsembleParams) -> Result<()> {
    if p.active_epsilon().is_some() {
        return Err(Error::Unsupported(
            "closed-form optima assume orthogonal block supports (epsilon = 0)".into(),
        ));
    }
    Ok(())
}

/// Global optimum for the mixed pair.
///
/// Requires `P₁r₁ ≤ P₂r₂` and `P₁r̃₁ ≤ P₂r̃₂`; otherwise relabel first
/// (see [`EnsembleParams::relabeled`]). Region labels are
/// `"<main>-<tilde>"` with each part `le` or `gt` against
/// `√(P₁r₁/P₂r₂)` and `√(P₁r̃₁/P₂r̃₂)`.
pub fn optimal_global_mixed(p: &EnsembleParams) -> Result<OptimumReport> {
    p.validate()?;
    require_orthogonal_supports(p)?;
    let [(r1, r1t), (r2, r2t)] = p.weights();
    let (p1, p2) = (p.p1, p.p2());
    let slack = 1e-15;
    if p1 * r1 > p2 * r2 + slack || p1 * r1t > p2 * r2t + slack {
        return Err(Error::Relabel(format!(
            "need P1·r1 ≤ P2·r2 and P1·r̃1 ≤ P2·r̃2, got {} vs {} and {} vs {}; \
             swap the states or treat the blocks separately",
            p1 * r1,
            p2 * r2,
            p1 * r1t,
            p2 * r2t
        )));
    }
    let (s0, s0t) = (p.s0(), p.s0_tilde());
    let (f, q1, main_id, b1) = block_optimum(p1 * r1, p2 * r2, s0);
    let (ft, q1t, tilde_id, b2) = block_optimum(p1 * r1t, p2 * r2t, s0t);
    let branch = match (main_id, tilde_id) {
        (true, true) => Branch::BothIdentified,
        (false, false) => Branch::OneIdentified,
        _ => Branch::PartiallyIdentified,
    };
    let label = |id: bool| if id { "le" } else { "gt" };
    let region = format!("{}-{}", label(main_id), label(tilde_id));
    Ok(OptimumReport::new(1.0 - f - ft, branch, region, b1 || b2)
        .with("q1", q1)
        .with("q2", s0 * s0 / q1)
        .with("q1_tilde", q1t)
        .with("q2_tilde", s0t * s0t / q1t))
}

/// Global optimum for the zero-phase pure pair with overlap `s*`.
pub fn optimal_global_pure(p: &EnsembleParams) -> Result<OptimumReport> {
    p.validate()?;
    require_orthogonal_supports(p)?;
    if p.phase_difference() != 0.0 {
        return Err(Error::Unsupported(
            "the pure-pair optimum is stated for equal phases".into(),
        ));
    }
    Ok(pure_optimum(p.p1, p.s_star()))
}

/// Optimum of `1 − P₁q₁ − P₂q₂` subject to `q₁q₂ = s²`, `qᵢ ∈ [s², 1]`.
pub fn pure_optimum(p1: f64, s: f64) -> OptimumReport {
    let p2 = 1.0 - p1;
    let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
    let (le, boundary) = at_most(s, (lo / hi).sqrt());
    if le {
        OptimumReport::new(1.0 - 2.0 * (p1 * p2).sqrt() * s, Branch::BothIdentified, "s_star-le", boundary)
            .with("q1", (p2 / p1).sqrt() * s)
            .with("q2", (p1 / p2).sqrt() * s)
    } else {
        let (q1, q2) = if p1 <= p2 { (1.0, s * s) } else { (s * s, 1.0) };
        OptimumReport::new(hi * (1.0 - s * s), Branch::OneIdentified, "s_star-gt", boundary)
            .with("q1", q1)
            .with("q2", q2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapCase {
    I,
    Ii,
    Iii,
    Iv,
}

impl GapCase {
    pub fn label(self) -> &'static str {
        match self {
            GapCase::I => "i",
            GapCase::Ii => "ii",
            GapCase::Iii => "iii",
            GapCase::Iv => "iv",
        }
    }
}

/// Pure-pair minus mixed-pair global optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub case: GapCase,
    /// For cases iii/iv: the tilde block (rather than the main one) is the
    /// ignored one.
    pub mirrored: bool,
    pub delta: f64,
    /// Independent per-case expression for `delta`.
    pub closed_form: f64,
    pub pure: OptimumReport,
    pub mixed: OptimumReport,
    pub boundary: bool,
}

/// Gap between the global optimum for the pure pair and for the mixed pair
/// with the same fidelity. Requires the same state ordering as
/// [`optimal_global_mixed`].
pub fn theorem1_delta(p: &EnsembleParams) -> Result<GapReport> {
    let mixed = optimal_global_mixed(p)?;
    let pure = optimal_global_pure(p)?;
    let main_id = mixed.region.starts_with("le");
    let tilde_id = mixed.region.ends_with("le");
    let pure_id = pure.branch == Branch::BothIdentified;
    let (case, mirrored) = match (main_id, tilde_id, pure_id) {
        (true, true, _) => (GapCase::I, false),
        (false, false, _) => (GapCase::Ii, false),
        (false, true, true) => (GapCase::Iii, false),
        (false, true, false) => (GapCase::Iv, false),
        (true, false, true) => (GapCase::Iii, true),
        (true, false, false) => (GapCase::Iv, true),
    };
    let closed_form = gap_case_expression(p, case, mirrored);
    Ok(GapReport {
        case,
        mirrored,
        delta: pure.p_max - mixed.p_max,
        closed_form,
        boundary: pure.boundary || mixed.boundary,
        pure,
        mixed,
    })
}

/// The gap expression of one case, evaluated whether or not `p` lies in
/// that case's region. `mirrored` selects the tilde block as the ignored one
/// for cases iii/iv.
pub fn gap_case_expression(p: &EnsembleParams, case: GapCase, mirrored: bool) -> f64 {
    let [(r1, r1t), (r2, r2t)] = p.weights();
    let (p1, p2) = (p.p1, p.p2());
    let (s0, s0t) = (p.s0(), p.s0_tilde());
    // Roles of (ignored block, identified block).
    let (ri, rit, si, ra, rat, sa) = if mirrored {
        (r1t, r2t, s0t, r1, r2, s0)
    } else {
        (r1, r2, s0, r1t, r2t, s0t)
    };
    match case {
        GapCase::I => 0.0,
        GapCase::Ii => p2 * ((r1 * r2t).sqrt() * s0t - (r2 * r1t).sqrt() * s0).powi(2),
        GapCase::Iii => ((p1 * ri).sqrt() - (p2 * rit).sqrt() * si).powi(2),
        GapCase::Iv => {
            let a = -p2 * ra * rat;
            let b = 2.0 * (ra * rat).sqrt() * ((p1 * p2).sqrt() - p2 * (ri * rit).sqrt() * si);
            let c = -ra * (p1 - p2 * rit * si * si);
            a * sa * sa + b * sa + c
        }
    }
}

// ---------------------------------------------------------------------------
// Sequential stage optima

fn check_stage_priors(p_f1: f64, p_f2: f64) -> Result<()> {
    if !(p_f1.is_finite() && p_f2.is_finite() && p_f1 > 0.0 && p_f2 > 0.0) {
        return Err(Error::validation(format!(
            "priors ({p_f1}, {p_f2}) must be positive"
        )));
    }
    if (p_f1 + p_f2 - 1.0).abs() > 1e-12 {
        return Err(Error::validation(format!(
            "priors ({p_f1}, {p_f2}) must sum to 1"
        )));
    }
    if p_f1 > p_f2 + BOUNDARY_TOL {
        return Err(Error::Relabel(format!(
            "the first prior must be the smaller one, got P_f1 = {p_f1} > P_f2 = {p_f2}"
        )));
    }
    Ok(())
}

/// Objective of the interior branch along `q₁ᴮ = q₁ᴰ = q`, `t = √s`.
pub fn stage_objective(p_f1: f64, p_f2: f64, s: f64, q: f64) -> f64 {
    p_f1 * (1.0 - q).powi(2) + p_f2 * (1.0 - s / q).powi(2)
}

/// The stationarity quartic of [`stage_objective`] in `q`.
pub fn quartic(p_f1: f64, p_f2: f64, s: f64, q: f64) -> f64 {
    let q3 = q * q * q;
    p_f1 * q3 * q - p_f1 * q3 + p_f2 * s * q - p_f2 * s * s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarticRoot {
    pub q_star: f64,
    /// Every root found in `(s, 1)`, ascending.
    pub roots: Vec<f64>,
    pub residual: f64,
}

/// Root of `f` on a sign-changing bracket by Illinois steps. A bisection is
/// forced after three steps that failed to halve the bracket; iteration stops
/// once a step moves the iterate by less than a few ulps.
fn bisect(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut last = f64::NAN;
    let mut reference = b - a;
    let mut stalled = 0;
    let mut side = 0i8;
    for _ in 0..BISECTION_CAP {
        let width = b - a;
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return mid;
        }
        let interp = a - fa * width / (fb - fa);
        let x = if stalled >= 3 || !(interp > a && interp < b) {
            stalled = 0;
            reference = width;
            mid
        } else {
            interp
        };
        if (x - last).abs() <= 4.0 * f64::EPSILON * x.abs() {
            return x;
        }
        last = x;
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if (fx < 0.0) == (fa < 0.0) {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
        if b - a > 0.5 * reference {
            stalled += 1;
        } else {
            stalled = 0;
            reference = b - a;
        }
    }
    0.5 * (a + b)
}

/// Interior stationary point of the stage objective.
///
/// The quartic's derivative `4P_f1q³ − 3P_f1q² + P_f2 s` is convex on
/// `q > 0` with its minimum at `q = ½`, so it has at most one root on each
/// side of `½`. Those roots split `[s, 1]` into at most three monotone
/// pieces; each sign change on a piece brackets exactly one root, which is
/// then bisected. When several roots are admissible the one maximizing the
/// objective wins.
pub fn quartic_qstar(p_f1: f64, p_f2: f64, s: f64) -> Result<QuarticRoot> {
    check_stage_priors(p_f1, p_f2)?;
    require_unit_open("s", s)?;
    let roots = quartic_roots(p_f1, p_f2, s);
    let q_star = roots
        .iter()
        .copied()
        .max_by(|a, b| {
            stage_objective(p_f1, p_f2, s, *a).total_cmp(&stage_objective(p_f1, p_f2, s, *b))
        })
        .ok_or_else(|| Error::NoRoot(format!("no root of the quartic in ({s}, 1)")))?;
    Ok(QuarticRoot {
        q_star,
        residual: quartic(p_f1, p_f2, s, q_star).abs(),
        roots,
    })
}

fn quartic_roots(p_f1: f64, p_f2: f64, s: f64) -> Vec<f64> {
    let f = |q: f64| quartic(p_f1, p_f2, s, q);
    let df = |q: f64| 4.0 * p_f1 * q * q * q - 3.0 * p_f1 * q * q + p_f2 * s;
    let mut knots = vec![s];
    for (lo, hi) in [(s.min(0.5), 0.5), (0.5f64.max(s), 1.0)] {
        if hi > lo && (df(lo) < 0.0) != (df(hi) < 0.0) {
            knots.push(bisect(lo, hi, df));
        }
    }
    knots.push(1.0);
    knots.sort_by(f64::total_cmp);
    let mut roots = Vec::new();
    for w in knots.windows(2) {
        let (a, b) = (f(w[0]), f(w[1]));
        if a == 0.0 {
            roots.push(w[0]);
        } else if b != 0.0 && (a < 0.0) != (b < 0.0) {
            roots.push(bisect(w[0], w[1], f));
        }
    }
    roots.retain(|&q| q > s && q < 1.0);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
    roots
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalOverlap {
    pub s_c: f64,
    pub q_star: f64,
    /// Interior-branch value minus ignore-branch value at `s_c`.
    pub residual: f64,
}

/// Interior-branch value minus ignore-branch value at overlap `s`.
fn branch_gap(p_f1: f64, p_f2: f64, s: f64) -> Option<(f64, f64)> {
    let root = quartic_qstar(p_f1, p_f2, s).ok()?;
    let gap = stage_objective(p_f1, p_f2, s, root.q_star) - p_f2 * (1.0 - s).powi(2);
    Some((gap, root.q_star))
}

fn scan_trace(trace: &[(f64, Option<f64>)]) -> String {
    trace
        .iter()
        .map(|(s, gap)| format!("s={s:.3e}: {}", gap.map_or("no root".into(), |g| format!("{g:.3e}"))))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Overlap at which the interior and ignore branches exchange optimality.
pub fn critical_sc(p_f1: f64, p_f2: f64) -> Result<CriticalOverlap> {
    check_stage_priors(p_f1, p_f2)?;
    let lo: f64 = 1e-12;
    let hi = 1.0 - 1e-9;
    let ratio = (hi / lo).ln();
    let mut trace = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..=SC_SCAN {
        let s = lo * (ratio * k as f64 / SC_SCAN as f64).exp();
        let gap = branch_gap(p_f1, p_f2, s).map(|g| g.0);
        trace.push((s, gap));
        let Some(gap) = gap else { continue };
        if let Some((ps, pg)) = prev {
            if pg > 0.0 && gap <= 0.0 {
                let h = |x: f64| branch_gap(p_f1, p_f2, x).map_or(f64::NAN, |g| g.0);
                let s_c = if gap == 0.0 { s } else { bisect(ps, s, h) };
                let (residual, q_star) = branch_gap(p_f1, p_f2, s_c).ok_or_else(|| {
                    Error::Bracketing {
                        reason: format!("no interior root at the bracketed s_c = {s_c}"),
                        trace: scan_trace(&trace),
                    }
                })?;
                return Ok(CriticalOverlap { s_c, q_star, residual });
            }
        } else if gap <= 0.0 {
            return Err(Error::Bracketing {
                reason: format!("interior branch already loses at the smallest scanned s = {s:e}"),
                trace: scan_trace(&trace),
            });
        }
        prev = Some((s, gap));
    }
    Err(Error::Bracketing {
        reason: "no sign change of the branch gap on (0, 1)".into(),
        trace: scan_trace(&trace),
    })
}

/// Joint success optimum of two observers measuring one particle in turn,
/// states with priors `(P_f1, 1 − P_f1)`, `P_f1 ≤ ½`, overlap `s`.
///
/// The argmax keys are `q1_first, q2_first, q1_second, q2_second, t`.
/// Regions: `interior` (both identified) or `ignore-first` (the state with
/// the smaller prior is never identified).
pub fn optimal_ssd_stage(p_f1: f64, s: f64) -> Result<OptimumReport> {
    ssd_stage_with_sc(p_f1, s).map(|(report, _)| report)
}

/// The stage optimum and, for unequal priors, the critical overlap used.
fn ssd_stage_with_sc(p_f1: f64, s: f64) -> Result<(OptimumReport, Option<f64>)> {
    require_unit_open("s", s)?;
    if !(p_f1.is_finite() && p_f1 > 0.0) {
        return Err(Error::validation(format!("P_f1 = {p_f1} must be positive")));
    }
    if p_f1 > 0.5 + BOUNDARY_TOL {
        return Err(Error::Relabel(format!(
            "P_f1 = {p_f1} > 1/2: label the less likely state first"
        )));
    }
    let p_f2 = 1.0 - p_f1;
    let t = s.sqrt();
    let equal = (p_f1 - 0.5).abs() <= BOUNDARY_TOL;
    let (interior, boundary, q, s_c) = if equal {
        let (le, b) = at_most(s, SSD_THRESHOLD);
        (le, b, t, None)
    } else {
        let sc = critical_sc(p_f1, p_f2)?;
        let (le, b) = at_most(s, sc.s_c);
        let q = if le { quartic_qstar(p_f1, p_f2, s)?.q_star } else { 1.0 };
        (le, b, q, Some(sc.s_c))
    };
    let report = if interior {
        let value = if equal {
            (1.0 - t).powi(2)
        } else {
            stage_objective(p_f1, p_f2, s, q)
        };
        OptimumReport::new(value, Branch::BothIdentified, "interior", boundary)
            .with("q1_first", q)
            .with("q2_first", s / q)
    } else {
        OptimumReport::new(p_f2 * (1.0 - s).powi(2), Branch::OneIdentified, "ignore-first", boundary)
            .with("q1_first", 1.0)
            .with("q2_first", s)
    };
    let (q1, q2) = (report.get("q1_first")?, report.get("q2_first")?);
    Ok((report.with("q1_second", q1).with("q2_second", q2).with("t", t), s_c))
}

/// Schedules realizing a stage optimum on the main block, with the tilde
/// block left unmeasured. With `swap`, the report's first state is the
/// ensemble's second one.
pub fn stage_schedules(report: &OptimumReport, s_tilde: f64, swap: bool) -> Result<SsdStage> {
    let order = |a: f64, b: f64| if swap { (b, a) } else { (a, b) };
    let t = report.get("t")?;
    let (q1, q2) = order(report.get("q1_first")?, report.get("q2_first")?);
    let (c1, c2) = order(report.get("q1_second")?, report.get("q2_second")?);
    Ok(SsdStage {
        first: MeasurementSchedule::new(q1, q2, 1.0, 1.0, t, s_tilde),
        second: MeasurementSchedule::new(c1, c2, 1.0, 1.0, 1.0, s_tilde),
    })
}

/// The three stages of the sequential hybrid at the optima `delta` was
/// computed from, ready for [`crate::protocols::run_ssd_hybrid`] on
/// `params` (pure product states with overlaps `s`, `s′`).
pub fn ssd_hybrid_setup(delta: &SsdDelta, params: &EnsembleParams) -> Result<ProtocolSetup> {
    let global = optimal_ssd_stage(0.5, params.s0())?;
    Ok(ProtocolSetup::SsdHybrid {
        first: stage_schedules(&delta.first, params.s_tilde, false)?,
        second: stage_schedules(&delta.second, params.s_tilde_prime, delta.second_swapped)?,
        global: stage_schedules(&global, params.s0_tilde(), false)?,
    })
}

/// Per-state joint success `(1 − q_i)(1 − q_i^C)` of a stage optimum.
pub fn stage_joint_success(report: &OptimumReport) -> Result<[f64; 2]> {
    Ok([
        (1.0 - report.get("q1_first")?) * (1.0 - report.get("q1_second")?),
        (1.0 - report.get("q2_first")?) * (1.0 - report.get("q2_second")?),
    ])
}

/// Region of the `(s, s′)` plane for the hybrid sequential comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SsdRegion {
    /// `s ≤ 3−2√2`, `s′ ≤ 3−2√2`.
    SymI,
    /// `s ≤ 3−2√2 < s′`.
    SymIi,
    /// `s > 3−2√2`, `s′ > s_c`, `ss′ > 3−2√2`.
    AsymI,
    /// `s > 3−2√2`, `s′ > s_c`, `ss′ ≤ 3−2√2`.
    AsymIi,
    /// `s > 3−2√2`, `s′ ≤ s_c`.
    AsymIii,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsdDelta {
    pub region: SsdRegion,
    /// Global minus local optimal success.
    pub delta: f64,
    /// Per-region expression, where one is known.
    pub closed_form: Option<f64>,
    pub local_success: f64,
    pub global_success: f64,
    pub first: OptimumReport,
    pub second: OptimumReport,
    /// Priors of the states reaching the second particle, in ensemble order.
    pub second_priors: [f64; 2],
    /// The second stage's report labels the ensemble's states in reverse.
    pub second_swapped: bool,
    pub s_c: Option<f64>,
    pub boundary: bool,
}

/// `(2 − √s)(1 + √s′)(1 + s′) − 4√s′`.
pub fn ssd_f(s: f64, s_prime: f64) -> f64 {
    let b = s_prime.sqrt();
    (2.0 - s.sqrt()) * (1.0 + b) * (1.0 + s_prime) - 4.0 * b
}

/// Equal-prior pure product states: stage optima on each particle in turn
/// (the second only when the first did not jointly succeed) against one
/// stage on the whole system with overlap `ss′`.
pub fn ssd_delta(s: f64, s_prime: f64) -> Result<SsdDelta> {
    require_unit_open("s", s)?;
    require_unit_open("s_prime", s_prime)?;
    let first = optimal_ssd_stage(0.5, s)?;
    let j = stage_joint_success(&first)?;
    let rest = [0.5 * (1.0 - j[0]), 0.5 * (1.0 - j[1])];
    let norm = rest[0] + rest[1];
    let second_priors = [rest[0] / norm, rest[1] / norm];
    let swapped = second_priors[0] > second_priors[1];
    let p_f1 = second_priors[0].min(second_priors[1]);
    let (second, second_sc) = ssd_stage_with_sc(p_f1, s_prime)?;
    let j1 = first.p_max;
    let j2 = second.p_max;
    let local_success = 1.0 - (1.0 - j1) * (1.0 - j2);
    let global = optimal_ssd_stage(0.5, s * s_prime)?;
    let (a, b) = (s.sqrt(), s_prime.sqrt());

    let (sym, mut boundary) = at_most(s, SSD_THRESHOLD);
    let mut s_c = None;
    let (region, closed_form) = if sym {
        let (le, bd) = at_most(s_prime, SSD_THRESHOLD);
        boundary |= bd;
        if le {
            (SsdRegion::SymI, Some(2.0 * a * b * (1.0 - a) * (1.0 - b)))
        } else {
            (SsdRegion::SymIi, Some(0.5 * a * (1.0 - b) * ssd_f(s, s_prime)))
        }
    } else {
        let sc = match second_sc {
            Some(sc) => sc,
            None => critical_sc(p_f1, 1.0 - p_f1)?.s_c,
        };
        s_c = Some(sc);
        let (below, bd) = at_most(s_prime, sc);
        boundary |= bd;
        if below {
            (SsdRegion::AsymIii, None)
        } else {
            let (le, bd) = at_most(s * s_prime, SSD_THRESHOLD);
            boundary |= bd;
            if le {
                (
                    SsdRegion::AsymIi,
                    Some(0.5 * (a - b).powi(2) * (2.0 - (a + b).powi(2))),
                )
            } else {
                (
                    SsdRegion::AsymI,
                    Some(0.5 * (1.0 - s) * (1.0 - s_prime) * (s + s_prime + s * s_prime - 1.0)),
                )
            }
        }
    };
    Ok(SsdDelta {
        region,
        delta: global.p_max - local_success,
        closed_form,
        local_success,
        global_success: global.p_max,
        first,
        second,
        second_priors,
        second_swapped: swapped,
        s_c,
        boundary: boundary || global.boundary,
    })
}

/// Minimum of `F(3 − 2√2, s′)` over `s′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    /// `(29 + 12√2 − 2√(154 + 84√2))/63`.
    pub s0_f_closed: f64,
    pub s0_f: f64,
    pub f_min: f64,
    pub second_derivative: f64,
}

pub fn ssd_f_stationary() -> StationaryPoint {
    let r2 = std::f64::consts::SQRT_2;
    let closed = (29.0 + 12.0 * r2 - 2.0 * (154.0 + 84.0 * r2).sqrt()) / 63.0;
    let f = |x: f64| ssd_f(SSD_THRESHOLD, x);
    // With b = √s′: dF/db = (2 − √s)(1 + 2b + 3b²) − 4, negative at b = 0
    // and positive at b = 1.
    let k = 2.0 - SSD_THRESHOLD.sqrt();
    let b = bisect(0.0, 1.0, |b| k * (1.0 + 2.0 * b + 3.0 * b * b) - 4.0);
    let s0_f = b * b;
    // d²F/ds′² = (dF/db)′/(4b²) where dF/db vanishes.
    let second_derivative = k * (2.0 + 6.0 * b) / (4.0 * b * b);
    StationaryPoint {
        s0_f_closed: closed,
        s0_f,
        f_min: f(s0_f),
        second_derivative,
    }
}

// ---------------------------------------------------------------------------
// Numerical oracles

/// `q₁q₂ = product` with both factors in `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductConstraint {
    pub product: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ProductConstraint {
    /// Feasible range of `q₁`.
    pub fn interval(&self) -> Option<(f64, f64)> {
        let lo = self.lower.max(self.product / self.upper);
        let hi = self.upper.min(self.product / self.lower);
        (lo <= hi && lo.is_finite() && hi.is_finite()).then_some((lo, hi))
    }

    /// Maps `u ∈ [0, 1]` linearly onto the feasible `q₁` range.
    pub fn map(&self, u: f64) -> Option<(f64, f64)> {
        let (lo, hi) = self.interval()?;
        let q1 = lo + (hi - lo) * u;
        Some((q1, self.product / q1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSettings {
    /// Points per axis of the initial grid.
    pub coarse_points: usize,
    /// Zooming stops once a grid cell is this small (unit-cube units).
    pub resolution: f64,
    /// Coordinate-wise golden-section sweeps after zooming.
    pub refine_rounds: usize,
    /// Distinct coarse maxima each zoomed independently.
    pub starts: usize,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            coarse_points: 101,
            resolution: 1e-4,
            refine_rounds: 4,
            starts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    pub value: f64,
    /// Maximizer in unit-cube coordinates.
    pub point: Vec<f64>,
    pub evaluations: usize,
}

fn grid_index(mut k: usize, n: usize, dims: usize) -> Vec<usize> {
    let mut idx = vec![0; dims];
    for slot in idx.iter_mut().rev() {
        *slot = k % n;
        k /= n;
    }
    idx
}

/// Best of a regular grid on the box `[lo, hi]`, ties to the lowest index.
fn grid_max<F>(objective: &F, lo: &[f64], hi: &[f64], n: usize) -> (usize, f64, Vec<(usize, f64)>)
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    let dims = lo.len();
    let total = n.pow(dims as u32);
    let values: Vec<(usize, f64)> = (0..total)
        .into_par_iter()
        .map(|k| {
            let idx = grid_index(k, n, dims);
            let x: Vec<f64> = (0..dims)
                .map(|d| {
                    if n == 1 {
                        0.5 * (lo[d] + hi[d])
                    } else {
                        lo[d] + (hi[d] - lo[d]) * idx[d] as f64 / (n - 1) as f64
                    }
                })
                .collect();
            (k, objective(&x).filter(|v| v.is_finite()).unwrap_or(f64::NEG_INFINITY))
        })
        .collect();
    let (best, value) = values
        .iter()
        .fold((0, f64::NEG_INFINITY), |acc, &(k, v)| if v > acc.1 { (k, v) } else { acc });
    (best, value, values)
}

/// Golden-section search for a maximum of a unimodal function.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..BISECTION_CAP {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

/// Maximizes `objective` over the unit cube `[0, 1]^dims`.
///
/// A coarse grid picks up to `starts` well-separated candidates; each is
/// zoomed (11 points per axis, window shrinking five-fold per round) down to
/// `resolution`, then polished by golden-section sweeps along each axis.
/// `None` marks infeasible points. Deterministic: parallel evaluation is
/// reduced in grid order.
pub fn grid_search_optimum<F>(dims: usize, objective: F, settings: &GridSettings) -> Result<GridOptimum>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    if dims == 0 || settings.coarse_points < 2 || !(settings.resolution > 0.0) {
        return Err(Error::validation(
            "grid search needs dims ≥ 1, coarse_points ≥ 2 and resolution > 0",
        ));
    }
    let n = settings.coarse_points;
    let zero = vec![0.0; dims];
    let one = vec![1.0; dims];
    let (_, best, values) = grid_max(&objective, &zero, &one, n);
    let mut evaluations = values.len();
    if best == f64::NEG_INFINITY {
        return Err(Error::EmptyFeasibleSet(format!(
            "no feasible point on a {n}^{dims} grid"
        )));
    }
    let mut ranked: Vec<(usize, f64)> = values.into_iter().filter(|v| v.1.is_finite()).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut starts: Vec<Vec<usize>> = Vec::new();
    for &(k, _) in &ranked {
        if starts.len() >= settings.starts.max(1) {
            break;
        }
        let idx = grid_index(k, n, dims);
        let far = starts
            .iter()
            .all(|s| s.iter().zip(&idx).any(|(a, b)| a.abs_diff(*b) > 2));
        if far {
            starts.push(idx);
        }
    }

    let cell0 = 1.0 / (n - 1) as f64;
    let mut winner: Option<(f64, Vec<f64>)> = None;
    for idx in starts {
        let mut x: Vec<f64> = idx.iter().map(|&i| i as f64 * cell0).collect();
        let mut fx = objective(&x).unwrap_or(f64::NEG_INFINITY);
        let mut half = cell0;
        while half > settings.resolution {
            let lo: Vec<f64> = x.iter().map(|v| (v - half).max(0.0)).collect();
            let hi: Vec<f64> = x.iter().map(|v| (v + half).min(1.0)).collect();
            let (k, v, vals) = grid_max(&objective, &lo, &hi, 11);
            evaluations += vals.len();
            if v > fx {
                let g = grid_index(k, 11, dims);
                x = (0..dims).map(|d| lo[d] + (hi[d] - lo[d]) * g[d] as f64 / 10.0).collect();
                fx = v;
            }
            half /= 5.0;
        }
        let mut width = half.max(settings.resolution);
        for _ in 0..settings.refine_rounds {
            for d in 0..dims {
                let line = |u: f64| {
                    let mut y = x.clone();
                    y[d] = u;
                    objective(&y).unwrap_or(f64::NEG_INFINITY)
                };
                let u = golden_max(line, (x[d] - width).max(0.0), (x[d] + width).min(1.0), 1e-15);
                evaluations += 80;
                let fu = line(u);
                if fu > fx {
                    x[d] = u;
                    fx = fu;
                }
            }
            width *= 0.5;
        }
        if winner.as_ref().is_none_or(|w| fx > w.0) {
            winner = Some((fx, x));
        }
    }
    let (value, point) = winner.expect("at least one start");
    Ok(GridOptimum {
        value,
        point,
        evaluations,
    })
}

/// Samples per random-search shard.
pub const SHARD_SAMPLES: usize = 4096;

/// Uniform random search on the unit cube.
///
/// Sample `k` is drawn in shard `k / SHARD_SAMPLES` from a ChaCha8 stream
/// seeded with `seed` on stream number equal to the shard index, so the
/// result does not depend on how shards are scheduled. Ties go to the lowest
/// sample index.
pub fn random_search<F>(dims: usize, objective: F, samples: usize, seed: u64) -> Result<GridOptimum>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    if dims == 0 || samples == 0 {
        return Err(Error::validation("random search needs dims ≥ 1 and samples ≥ 1"));
    }
    let shards = samples.div_ceil(SHARD_SAMPLES);
    let best = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard as u64);
            let start = shard * SHARD_SAMPLES;
            let end = (start + SHARD_SAMPLES).min(samples);
            let mut x = vec![0.0; dims];
            let mut best: Option<(usize, f64, Vec<f64>)> = None;
            for k in start..end {
                x.iter_mut().for_each(|v| *v = rng.gen::<f64>());
                if let Some(v) = objective(&x).filter(|v| v.is_finite()) {
                    if best.as_ref().is_none_or(|b| v > b.1) {
                        best = Some((k, v, x.clone()));
                    }
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .fold(None::<(usize, f64, Vec<f64>)>, |acc, b| match acc {
            Some(a) if a.1 > b.1 || (a.1 == b.1 && a.0 < b.0) => Some(a),
            _ => Some(b),
        });
    let (_, value, point) =
        best.ok_or_else(|| Error::EmptyFeasibleSet(format!("none of {samples} samples feasible")))?;
    Ok(GridOptimum {
        value,
        point,
        evaluations: samples,
    })
}

/// Mixed-pair global success over the manifold `q₁q₂ = s₀²`, `q̃₁q̃₂ = s̃₀²`,
/// parametrized by `(q₁, q̃₁)`.
pub fn global_mixed_objective(p: &EnsembleParams) -> impl Fn(&[f64]) -> Option<f64> + Sync {
    let [(r1, r1t), (r2, r2t)] = p.weights();
    let (p1, p2) = (p.p1, p.p2());
    let main = ProductConstraint { product: p.s0().powi(2), lower: p.s0().powi(2), upper: 1.0 };
    let tilde = ProductConstraint {
        product: p.s0_tilde().powi(2),
        lower: p.s0_tilde().powi(2),
        upper: 1.0,
    };
    move |u: &[f64]| {
        let (q1, q2) = main.map(u[0])?;
        let (q1t, q2t) = tilde.map(u[1])?;
        Some(1.0 - p1 * (r1 * q1 + r1t * q1t) - p2 * (r2 * q2 + r2t * q2t))
    }
}

/// Two observers on one particle: `(t, q₁ᶠⁱʳˢᵗ, q₁ˢᵉᶜᵒⁿᵈ)` with
/// `t ∈ [s, 1]`, `q₁q₂ = s²/t²` for the first and `t²` for the second.
pub fn ssd_stage_objective(p_f1: f64, s: f64) -> impl Fn(&[f64]) -> Option<f64> + Sync {
    let p_f2 = 1.0 - p_f1;
    move |u: &[f64]| {
        let t = s + (1.0 - s) * u[0];
        let first = ProductConstraint { product: (s / t).powi(2), lower: (s / t).powi(2), upper: 1.0 };
        let second = ProductConstraint { product: t * t, lower: t * t, upper: 1.0 };
        let (a1, a2) = first.map(u[1])?;
        let (c1, c2) = second.map(u[2])?;
        Some(p_f1 * (1.0 - a1) * (1.0 - c1) + p_f2 * (1.0 - a2) * (1.0 - c2))
    }
}

/// Grid-search counterpart of [`optimal_global_mixed`].
pub fn global_mixed_oracle(p: &EnsembleParams, settings: &GridSettings) -> Result<GridOptimum> {
    p.validate()?;
    grid_search_optimum(2, global_mixed_objective(p), settings)
}

/// Grid-search counterpart of [`pure_optimum`].
pub fn pure_oracle(p1: f64, s: f64, settings: &GridSettings) -> Result<GridOptimum> {
    let c = ProductConstraint { product: s * s, lower: s * s, upper: 1.0 };
    grid_search_optimum(
        1,
        move |u: &[f64]| {
            let (q1, q2) = c.map(u[0])?;
            Some(1.0 - p1 * q1 - (1.0 - p1) * q2)
        },
        settings,
    )
}

/// Grid-search counterpart of [`optimal_ssd_stage`].
pub fn ssd_stage_oracle(p_f1: f64, s: f64, settings: &GridSettings) -> Result<GridOptimum> {
    require_unit_open("s", s)?;
    grid_search_optimum(3, ssd_stage_objective(p_f1, s), settings)
}
