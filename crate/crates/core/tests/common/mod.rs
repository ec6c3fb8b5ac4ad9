//! Reference values computed from first principles: plain success sums and
//! direct numerical optimization, without the library's closed forms.
#![allow(dead_code)]

use locc_usd::ensembles::EnsembleParams;
use locc_usd::measurements::MeasurementSchedule;
use rand::Rng;

pub const THR: f64 = 0.171_572_875_253_809_9;

/// Minimizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_min(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc <= fd {
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
    let mut best = (c, fc);
    for x in [lo, hi, d] {
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    best
}

/// Least `a q + b s²/q` over `q ∈ [s², 1]`: the failure of one block. Convex
/// in `ln q`.
pub fn block_failure(a: f64, b: f64, s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let lo = 2.0 * s.ln();
    golden_min(lo, 0.0, |x| a * x.exp() + b * s * s * (-x).exp()).1
}

/// Optimal global success for the mixed pair, block by block.
pub fn mixed_global(p: &EnsembleParams) -> f64 {
    let (p1, p2) = (p.p1, 1.0 - p.p1);
    let (r1t, r2t) = (1.0 - p.r1, 1.0 - p.r2);
    1.0 - block_failure(p1 * p.r1, p2 * p.r2, p.s * p.s_prime)
        - block_failure(p1 * r1t, p2 * r2t, p.s_tilde * p.s_tilde_prime)
}

/// Overlap of the coherent pure pair (no phases).
pub fn pure_overlap(p: &EnsembleParams) -> f64 {
    let (r1t, r2t) = (1.0 - p.r1, 1.0 - p.r2);
    (p.r1 * p.r2).sqrt() * p.s * p.s_prime + (r1t * r2t).sqrt() * p.s_tilde * p.s_tilde_prime
}

pub fn pure_global(p1: f64, s: f64) -> f64 {
    1.0 - block_failure(p1, 1.0 - p1, s)
}

/// `Σᵢ Pᵢ[rᵢ(1 − qᵢ) + r̃ᵢ(1 − q̃ᵢ)]` for per-state failure values.
pub fn success_from_failures(p: &EnsembleParams, q: [f64; 2], q_tilde: [f64; 2]) -> f64 {
    let pr = [p.p1, 1.0 - p.p1];
    let r = [p.r1, p.r2];
    (0..2)
        .map(|i| pr[i] * (r[i] * (1.0 - q[i]) + (1.0 - r[i]) * (1.0 - q_tilde[i])))
        .sum()
}

/// Two observers in sequence on one particle with priors `(p1, 1 − p1)` and
/// overlap `s`, both measuring along `q` (the second with `s/q`). Returns the
/// best joint success and its `q`.
pub fn stage(p1: f64, s: f64) -> (f64, f64) {
    let p2 = 1.0 - p1;
    let value = |q: f64| p1 * (1.0 - q).powi(2) + p2 * (1.0 - s / q).powi(2);
    // The objective is not unimodal; scan in ln q, then polish the best cell.
    let n = 4000;
    let lo = s.ln();
    let xs: Vec<f64> = (0..=n).map(|k| lo * (1.0 - k as f64 / n as f64)).collect();
    let (k, _) = xs
        .iter()
        .enumerate()
        .map(|(k, &x)| (k, value(x.exp())))
        .fold((0, f64::NEG_INFINITY), |b, (k, v)| if v > b.1 { (k, v) } else { b });
    let a = xs[k.saturating_sub(1)];
    let b = xs[(k + 1).min(n)];
    let (x, _) = golden_min(a.min(b), a.max(b), |x| -value(x.exp()));
    // The per-state joint successes move to first order with q, so polish an
    // interior maximizer on the sign change of the derivative.
    let slope = |q: f64| -p1 * (1.0 - q) + p2 * (1.0 - s / q) * s / (q * q);
    let q0 = x.exp();
    let (mut lo, mut hi) = ((q0 * (1.0 - 1e-6)).max(s), (q0 * (1.0 + 1e-6)).min(1.0));
    let q = if slope(lo) > 0.0 && slope(hi) < 0.0 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    } else {
        q0
    };
    (value(q), q)
}

/// Equal-prior pure product states: stage on the first particle, then (on
/// failure of the joint outcome) a stage on the second, against one stage on
/// the whole system. Returns `global − local`.
pub fn ssd_hybrid_gap(s: f64, s_prime: f64) -> f64 {
    let (j1, q) = stage(0.5, s);
    let joint = [(1.0 - q).powi(2), (1.0 - s / q).powi(2)];
    let rest = [0.5 * (1.0 - joint[0]), 0.5 * (1.0 - joint[1])];
    let p1 = rest[0] / (rest[0] + rest[1]);
    let (j2, _) = stage(p1, s_prime);
    let (g, _) = stage(0.5, s * s_prime);
    g - (1.0 - (1.0 - j1) * (1.0 - j2))
}

/// Parameters with overlaps and weights in `[0.05, 0.95]`.
pub fn draw_params(rng: &mut impl Rng) -> EnsembleParams {
    let mut u = || rng.gen_range(0.05..0.95);
    EnsembleParams::new(u(), u(), u(), u(), u(), u(), u())
}

/// A schedule with `q₁q₂ = (s/t)²` per block and post overlaps `t`; `t = 1`
/// when `optimal`.
pub fn draw_schedule(rng: &mut impl Rng, s: f64, s_tilde: f64, optimal: bool) -> MeasurementSchedule {
    let mut block = |ov: f64| {
        let t: f64 = if optimal { 1.0 } else { rng.gen_range(ov..1.0) };
        let prod = (ov / t).powi(2);
        let q1 = rng.gen_range(prod..=1.0);
        (q1, prod / q1, t)
    };
    let (q1, q2, t) = block(s);
    let (q1t, q2t, tt) = block(s_tilde);
    MeasurementSchedule::new(q1, q2, q1t, q2t, t, tt)
}
