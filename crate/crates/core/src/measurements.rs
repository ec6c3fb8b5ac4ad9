//! Local POVMs, Kraus operators and post-measurement states.
//!
//! A local measurement acts blockwise on a [`LocalBasis`]. For a block
//! spanned by `|r₁⟩, |r₂⟩` with overlap `s`:
//!
//! ```text
//! M₁ = c₁ |r₂⊥⟩⟨r₂⊥|,   M₂ = c₂ |r₁⊥⟩⟨r₁⊥|,   M₀ = I − M₁ − M₂
//! cᵢ = (1 − qᵢ) / (1 − s²),   qᵢ = ⟨rᵢ|M₀|rᵢ⟩
//! ```
//!
//! `M₀ ⪰ 0` on the block iff `q₁q₂ ≥ s²`. The Kraus operator of the
//! inconclusive outcome sends `|rᵢ⟩ ↦ √qᵢ |vᵢ⟩` with `⟨v₁|v₂⟩ = t`, which is
//! consistent with `M₀` exactly when `q₁q₂ t² = s²`.

use serde::{Deserialize, Serialize};

use crate::ensembles::{EnsembleParams, EnsemblePair, LocalBasis, PurePair, VectorPair};
use crate::error::{Error, Result};
use crate::linalg::{re, ComplexMatrix, Ket, C64};
use crate::quantum::{is_psd, QuantumOperator, PSD_TOL};

/// Tolerance on `q₁q₂t² = s²` and on completeness / Kraus consistency.
pub const EQUALITY_TOL: f64 = 1e-12;
/// Tolerance on the unambiguity traces `Tr[ρᵢ M_j]`, `i ≠ j`.
pub const UNAMBIGUITY_TOL: f64 = 1e-10;
const PERP_MIN_NORM: f64 = 1e-12;

/// Failure-branch parameters of one observer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSchedule {
    pub q1: f64,
    pub q2: f64,
    pub q1_tilde: f64,
    pub q2_tilde: f64,
    pub t: f64,
    pub t_tilde: f64,
}

/// Derived POVM weights `cᵢ` and Kraus weights `aᵢ` for one schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub c: [f64; 2],
    pub c_tilde: [f64; 2],
    pub a: [f64; 2],
    pub a_tilde: [f64; 2],
}

impl MeasurementSchedule {
    pub fn new(q1: f64, q2: f64, q1_tilde: f64, q2_tilde: f64, t: f64, t_tilde: f64) -> Self {
        Self {
            q1,
            q2,
            q1_tilde,
            q2_tilde,
            t,
            t_tilde,
        }
    }

    /// Schedule with the post overlaps implied by `t = s/√(q₁q₂)`.
    pub fn from_q(q1: f64, q2: f64, q1_tilde: f64, q2_tilde: f64, s: f64, s_tilde: f64) -> Result<Self> {
        let sched = Self::new(
            q1,
            q2,
            q1_tilde,
            q2_tilde,
            implied_overlap(q1, q2, s, "q1·q2 ≥ s²")?,
            implied_overlap(q1_tilde, q2_tilde, s_tilde, "q̃1·q̃2 ≥ s̃²")?,
        );
        sched.validate(s, s_tilde)?;
        Ok(sched)
    }

    /// Optimal (`t = t̃ = 1`) schedule fixed by `q₁` and `q̃₁`.
    pub fn optimal(q1: f64, q1_tilde: f64, s: f64, s_tilde: f64) -> Result<Self> {
        for (name, q, ov) in [("q1", q1, s), ("q1_tilde", q1_tilde, s_tilde)] {
            if !(q >= ov * ov - EQUALITY_TOL && q <= 1.0 + EQUALITY_TOL) {
                return Err(Error::constraint(
                    "q_i ∈ [s², 1]",
                    format!("{name} = {q} with overlap {ov}"),
                ));
            }
        }
        let sched = Self::new(q1, s * s / q1, q1_tilde, s_tilde * s_tilde / q1_tilde, 1.0, 1.0);
        sched.validate(s, s_tilde)?;
        Ok(sched)
    }

    /// `qᵢ = s`, `q̃ᵢ = s̃`, `t = t̃ = 1`.
    pub fn symmetric_optimal(s: f64, s_tilde: f64) -> Self {
        Self::new(s, s, s_tilde, s_tilde, 1.0, 1.0)
    }

    /// No measurement at all: every outcome is inconclusive and the
    /// overlaps are left untouched.
    pub fn trivial(s: f64, s_tilde: f64) -> Self {
        Self::new(1.0, 1.0, 1.0, 1.0, s, s_tilde)
    }

    pub fn q(&self, i: usize) -> (f64, f64) {
        match i {
            0 => (self.q1, self.q1_tilde),
            1 => (self.q2, self.q2_tilde),
            _ => panic!("state index {i} out of range"),
        }
    }

    /// Elementwise product of two observers' schedules; overlaps multiply.
    pub fn product(&self, other: &Self) -> Self {
        Self::new(
            self.q1 * other.q1,
            self.q2 * other.q2,
            self.q1_tilde * other.q1_tilde,
            self.q2_tilde * other.q2_tilde,
            self.t * other.t,
            self.t_tilde * other.t_tilde,
        )
    }

    /// Checks the schedule against the block overlaps it targets.
    pub fn validate(&self, s: f64, s_tilde: f64) -> Result<()> {
        let fields = [
            ("q1", self.q1),
            ("q2", self.q2),
            ("q1_tilde", self.q1_tilde),
            ("q2_tilde", self.q2_tilde),
            ("t", self.t),
            ("t_tilde", self.t_tilde),
        ];
        if let Some((name, v)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::validation(format!("{name} = {v} is not finite")));
        }
        if !(self.t > 0.0 && self.t <= 1.0 + EQUALITY_TOL)
            || !(self.t_tilde > 0.0 && self.t_tilde <= 1.0 + EQUALITY_TOL)
        {
            return Err(Error::validation(format!(
                "post overlaps t = {}, t̃ = {} must lie in (0, 1]",
                self.t, self.t_tilde
            )));
        }
        let blocks = [
            ("", self.q1, self.q2, s, self.t),
            ("~", self.q1_tilde, self.q2_tilde, s_tilde, self.t_tilde),
        ];
        for (tag, q1, q2, ov, t) in blocks {
            if q1 * q2 < ov * ov - EQUALITY_TOL {
                return Err(Error::constraint(
                    format!("q{tag}1·q{tag}2 ≥ s{tag}²"),
                    format!("q1·q2 = {:e} < s² = {:e}; M0 would not be positive", q1 * q2, ov * ov),
                ));
            }
            let lower = ov * ov / (t * t);
            for (i, q) in [q1, q2].into_iter().enumerate() {
                if q < lower - EQUALITY_TOL || q > 1.0 + EQUALITY_TOL {
                    return Err(Error::constraint(
                        format!("q{tag}{} ∈ [s²/t², 1]", i + 1),
                        format!("q = {q}, lower bound {lower}"),
                    ));
                }
            }
            if (q1 * q2 * t * t - ov * ov).abs() > EQUALITY_TOL {
                return Err(Error::constraint(
                    format!("q{tag}1·q{tag}2 = s{tag}²/t{tag}²"),
                    format!("q1·q2·t² = {:e}, s² = {:e}", q1 * q2 * t * t, ov * ov),
                ));
            }
        }
        Ok(())
    }

    pub fn coefficients(&self, s: f64, s_tilde: f64) -> Coefficients {
        let d = 1.0 - s * s;
        let dt = 1.0 - s_tilde * s_tilde;
        Coefficients {
            c: [(1.0 - self.q1) / d, (1.0 - self.q2) / d],
            c_tilde: [(1.0 - self.q1_tilde) / dt, (1.0 - self.q2_tilde) / dt],
            a: [self.q1 / d, self.q2 / d],
            a_tilde: [self.q1_tilde / dt, self.q2_tilde / dt],
        }
    }

    /// `Qᵢ = rᵢqᵢ + r̃ᵢq̃ᵢ`: probability that state `i` yields the
    /// inconclusive outcome.
    pub fn failure_weight(&self, weights: [(f64, f64); 2], i: usize) -> f64 {
        let (q, qt) = self.q(i);
        weights[i].0 * q + weights[i].1 * qt
    }

    /// `vᵢ = qᵢrᵢ / Qᵢ` and `ṽᵢ = q̃ᵢr̃ᵢ / Qᵢ`.
    pub fn post_weights(&self, weights: [(f64, f64); 2], i: usize) -> (f64, f64) {
        let (q, qt) = self.q(i);
        let total = self.failure_weight(weights, i);
        (weights[i].0 * q / total, weights[i].1 * qt / total)
    }
}

fn implied_overlap(q1: f64, q2: f64, s: f64, bound: &str) -> Result<f64> {
    let prod = q1 * q2;
    if !(prod > 0.0) || prod < s * s - EQUALITY_TOL {
        return Err(Error::constraint(
            bound,
            format!("q1·q2 = {prod:e} < s² = {:e}", s * s),
        ));
    }
    Ok((s / prod.sqrt()).min(1.0))
}

/// Priors of the states entering the next stage after an inconclusive
/// outcome: `P_fi = PᵢQᵢ / (P₁Q₁ + P₂Q₂)`.
pub fn conditional_priors(params: &EnsembleParams, sched: &MeasurementSchedule) -> [f64; 2] {
    let w = params.weights();
    let f = [
        params.p1 * sched.failure_weight(w, 0),
        params.p2() * sched.failure_weight(w, 1),
    ];
    let total = f[0] + f[1];
    [f[0] / total, f[1] / total]
}

/// Which factor of the bipartite space a local operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    First { other_dim: usize },
    Second { first_dim: usize },
    Whole,
}

impl Placement {
    pub fn lift(&self, local: &ComplexMatrix) -> ComplexMatrix {
        match *self {
            Placement::First { other_dim } => local.kron(&ComplexMatrix::identity(other_dim)),
            Placement::Second { first_dim } => ComplexMatrix::identity(first_dim).kron(local),
            Placement::Whole => local.clone(),
        }
    }
}

/// A three-outcome measurement. `elements[k]` is `M_k`: index 0 is the
/// inconclusive outcome, 1 and 2 identify the first and second state.
#[derive(Debug, Clone)]
pub struct PovmSet {
    pub elements: [QuantumOperator; 3],
    pub placement: Placement,
    pub targets: [QuantumOperator; 2],
}

impl PovmSet {
    /// Validates completeness, positivity and unambiguity, then wraps.
    pub fn new(
        elements: [ComplexMatrix; 3],
        placement: Placement,
        targets: [QuantumOperator; 2],
    ) -> Result<Self> {
        let dim = elements[0].rows();
        let completeness = (&(&elements[0] + &elements[1]) + &elements[2])
            .max_abs_diff(&ComplexMatrix::identity(dim));
        if completeness > EQUALITY_TOL {
            return Err(Error::Contract(format!(
                "POVM elements sum to identity only within {completeness:e}"
            )));
        }
        for (k, m) in elements.iter().enumerate() {
            if !is_psd(m, PSD_TOL)? {
                return Err(Error::constraint(
                    format!("M{k} ⪰ 0"),
                    format!("minimum eigenvalue {:e}", m.min_eigenvalue()?),
                ));
            }
        }
        let [m0, m1, m2] = elements;
        let set = Self {
            elements: [
                QuantumOperator::povm_element(m0)?,
                QuantumOperator::povm_element(m1)?,
                QuantumOperator::povm_element(m2)?,
            ],
            placement,
            targets,
        };
        let residual = set.unambiguity_residual();
        if residual > UNAMBIGUITY_TOL {
            return Err(Error::Contract(format!(
                "measurement misidentifies a target with probability {residual:e}"
            )));
        }
        Ok(set)
    }

    pub fn lifted(&self, k: usize) -> ComplexMatrix {
        self.placement.lift(self.elements[k].matrix())
    }

    /// `Tr[ρ (M_k lifted)]`.
    pub fn probability(&self, rho: &QuantumOperator, k: usize) -> f64 {
        rho.trace_with(&self.lifted(k))
    }

    /// `max(|Tr[ρ₁M₂]|, |Tr[ρ₂M₁]|)`.
    pub fn unambiguity_residual(&self) -> f64 {
        let a = self.probability(&self.targets[0], 2).abs();
        let b = self.probability(&self.targets[1], 1).abs();
        a.max(b)
    }

    pub fn completeness_residual(&self) -> f64 {
        let sum = &(self.elements[0].matrix() + self.elements[1].matrix()) + self.elements[2].matrix();
        sum.max_abs_diff(&ComplexMatrix::identity(sum.rows()))
    }
}

/// Kraus operators `ops[k]` with `K_k†K_k = M_k`, plus the orthonormal-pair
/// basis the inconclusive outcome maps the input vectors onto.
#[derive(Debug, Clone)]
pub struct KrausSet {
    pub ops: [QuantumOperator; 3],
    pub placement: Placement,
    pub post_basis: LocalBasis,
}

impl KrausSet {
    pub fn lifted(&self, k: usize) -> ComplexMatrix {
        self.placement.lift(self.ops[k].matrix())
    }

    /// `(p, K ρ K† / p)`; the state is `None` when `p` vanishes.
    pub fn apply(&self, rho: &QuantumOperator, k: usize) -> Result<(f64, Option<QuantumOperator>)> {
        let kl = self.lifted(k);
        let out = &(&kl * rho.matrix()) * &kl.adjoint();
        let p = out.trace().re;
        if p <= 1e-15 {
            return Ok((p.max(0.0), None));
        }
        Ok((p, Some(QuantumOperator::state(out.scale_real(1.0 / p))?)))
    }

    /// `max_k ‖K_k†K_k − M_k‖_max`.
    pub fn povm_residual(&self, povm: &PovmSet) -> f64 {
        (0..3)
            .map(|k| {
                let kk = self.ops[k].matrix();
                (&kk.adjoint() * kk).max_abs_diff(povm.elements[k].matrix())
            })
            .fold(0.0, f64::max)
    }
}

/// Anything that supplies the two target states and the local vectors they
/// are built from.
pub trait Bipartite {
    fn params(&self) -> &EnsembleParams;
    fn targets(&self) -> [&QuantumOperator; 2];
    fn alice_basis(&self) -> &LocalBasis;
    fn bob_basis(&self) -> &LocalBasis;

    fn dims(&self) -> (usize, usize) {
        (self.alice_basis().dim(), self.bob_basis().dim())
    }

    fn owned_targets(&self) -> [QuantumOperator; 2] {
        let [a, b] = self.targets();
        [a.clone(), b.clone()]
    }
}

impl Bipartite for EnsemblePair {
    fn params(&self) -> &EnsembleParams {
        &self.params
    }
    fn targets(&self) -> [&QuantumOperator; 2] {
        [&self.rho1, &self.rho2]
    }
    fn alice_basis(&self) -> &LocalBasis {
        &self.alice
    }
    fn bob_basis(&self) -> &LocalBasis {
        &self.bob
    }
}

impl Bipartite for PurePair {
    fn params(&self) -> &EnsembleParams {
        &self.params
    }
    fn targets(&self) -> [&QuantumOperator; 2] {
        [&self.rho1, &self.rho2]
    }
    fn alice_basis(&self) -> &LocalBasis {
        &self.alice
    }
    fn bob_basis(&self) -> &LocalBasis {
        &self.bob
    }
}

/// States left after Alice's inconclusive outcome.
#[derive(Debug, Clone)]
pub struct PostMeasurePair {
    pub params: EnsembleParams,
    pub sigma1: QuantumOperator,
    pub sigma2: QuantumOperator,
    /// `(vᵢ, ṽᵢ)` for each state.
    pub weights: [(f64, f64); 2],
    pub t: f64,
    pub t_tilde: f64,
    /// `Qᵢ` of the measurement that produced this pair.
    pub failure_weights: [f64; 2],
    /// `P_fi`.
    pub priors: [f64; 2],
    pub alice: LocalBasis,
    pub bob: LocalBasis,
}

impl Bipartite for PostMeasurePair {
    fn params(&self) -> &EnsembleParams {
        &self.params
    }
    fn targets(&self) -> [&QuantumOperator; 2] {
        [&self.sigma1, &self.sigma2]
    }
    fn alice_basis(&self) -> &LocalBasis {
        &self.alice
    }
    fn bob_basis(&self) -> &LocalBasis {
        &self.bob
    }
}

/// Block geometry: the two spanning vectors and their in-span complements.
struct Frame<'a> {
    pair: &'a VectorPair,
    /// `|r₁⊥⟩`: orthogonal to `|r₁⟩` within the span.
    perp1: Ket,
    /// `|r₂⊥⟩`: orthogonal to `|r₂⟩` within the span.
    perp2: Ket,
    overlap: C64,
}

fn in_span_perp(of: &Ket, other: &Ket) -> Result<Ket> {
    other
        .sub(&of.scale(of.inner_product(other)))
        .normalized(PERP_MIN_NORM)
        .map(|k| k.with_positive_lead(1e-14))
        .ok_or_else(|| Error::Contract("block vectors are parallel".into()))
}

impl<'a> Frame<'a> {
    fn new(pair: &'a VectorPair) -> Result<Self> {
        Ok(Self {
            perp1: in_span_perp(&pair.first, &pair.second)?,
            perp2: in_span_perp(&pair.second, &pair.first)?,
            overlap: pair.overlap(),
            pair,
        })
    }

    fn span_projector(&self) -> ComplexMatrix {
        &self.pair.first.projector() + &self.perp1.projector()
    }

    /// `(M₁, M₂)` restricted to this block.
    fn conclusive(&self, q1: f64, q2: f64) -> (ComplexMatrix, ComplexMatrix) {
        let d = 1.0 - self.overlap.norm_sqr();
        (
            self.perp2.projector().scale_real((1.0 - q1) / d),
            self.perp1.projector().scale_real((1.0 - q2) / d),
        )
    }

    /// `(|v₁⟩, |v₂⟩)` with `⟨v₁|v₂⟩ = t`, inside the block span.
    fn outputs(&self, t: f64) -> (Ket, Ket) {
        let v1 = self.pair.first.clone();
        let v2 = v1
            .scale(re(t))
            .add(&self.perp1.scale(re((1.0 - t * t).max(0.0).sqrt())));
        (v1, v2)
    }

    /// `[K₀, K₁, K₂]` on this block.
    fn kraus(&self, q1: f64, q2: f64, t: f64) -> ([ComplexMatrix; 3], VectorPair) {
        let (v1, v2) = self.outputs(t);
        let phase = if self.overlap.norm() > 0.0 {
            self.overlap / self.overlap.norm()
        } else {
            re(1.0)
        };
        let d1 = self.perp2.inner_product(&self.pair.first);
        let d2 = self.perp1.inner_product(&self.pair.second);
        let into1 = |w: f64| v1.outer(&self.perp2).scale(re(w) / d1);
        let into2 = |w: f64, ph: C64| v2.outer(&self.perp1).scale(ph * re(w) / d2);
        let k0 = &into1(q1.sqrt()) + &into2(q2.sqrt(), phase);
        let k1 = into1((1.0 - q1).max(0.0).sqrt());
        let k2 = into2((1.0 - q2).max(0.0).sqrt(), re(1.0));
        ([k0, k1, k2], VectorPair { first: v1, second: v2 })
    }
}

fn check_blocks_orthogonal(basis: &LocalBasis) -> Result<()> {
    for a in [&basis.main.first, &basis.main.second] {
        for b in [&basis.tilde.first, &basis.tilde.second] {
            let ov = a.inner_product(b).norm();
            if ov > UNAMBIGUITY_TOL {
                return Err(Error::Contract(format!(
                    "main and tilde blocks overlap ({ov:e}); use the Gram-inverse construction"
                )));
            }
        }
    }
    Ok(())
}

fn block_overlaps(basis: &LocalBasis) -> (f64, f64) {
    (basis.main.overlap().norm(), basis.tilde.overlap().norm())
}

/// Local POVM (and Kraus set) for a blockwise basis.
pub fn local_measurement(
    basis: &LocalBasis,
    sched: &MeasurementSchedule,
    placement: Placement,
    targets: [QuantumOperator; 2],
) -> Result<(PovmSet, KrausSet)> {
    check_blocks_orthogonal(basis)?;
    let (s, st) = block_overlaps(basis);
    sched.validate(s, st)?;
    let main = Frame::new(&basis.main)?;
    let tilde = Frame::new(&basis.tilde)?;
    let dim = basis.dim();

    let (m1a, m2a) = main.conclusive(sched.q1, sched.q2);
    let (m1b, m2b) = tilde.conclusive(sched.q1_tilde, sched.q2_tilde);
    let m1 = &m1a + &m1b;
    let m2 = &m2a + &m2b;
    let m0 = &(&ComplexMatrix::identity(dim) - &m1) - &m2;

    let ([k0a, k1a, k2a], post_main) = main.kraus(sched.q1, sched.q2, sched.t);
    let ([k0b, k1b, k2b], post_tilde) = tilde.kraus(sched.q1_tilde, sched.q2_tilde, sched.t_tilde);
    let complement = &(&ComplexMatrix::identity(dim) - &main.span_projector()) - &tilde.span_projector();
    let k0 = &(&k0a + &k0b) + &complement;

    let povm = PovmSet::new([m0, m1, m2], placement, targets)?;
    let kraus = KrausSet {
        ops: [
            QuantumOperator::kraus(k0)?,
            QuantumOperator::kraus(&k1a + &k1b)?,
            QuantumOperator::kraus(&k2a + &k2b)?,
        ],
        placement,
        post_basis: LocalBasis {
            main: post_main,
            tilde: post_tilde,
        },
    };
    Ok((povm, kraus))
}

pub fn alice_povm(ens: &impl Bipartite, sched: &MeasurementSchedule) -> Result<PovmSet> {
    alice_measurement(ens, sched).map(|(p, _)| p)
}

pub fn alice_kraus(ens: &impl Bipartite, sched: &MeasurementSchedule) -> Result<KrausSet> {
    alice_measurement(ens, sched).map(|(_, k)| k)
}

fn alice_measurement(ens: &impl Bipartite, sched: &MeasurementSchedule) -> Result<(PovmSet, KrausSet)> {
    let placement = Placement::First {
        other_dim: ens.bob_basis().dim(),
    };
    local_measurement(ens.alice_basis(), sched, placement, ens.owned_targets())
}

/// Bob's measurement on the second particle; targets are whatever states
/// `ens` carries (the original pair or Alice's post-measurement pair).
pub fn bob_povm(ens: &impl Bipartite, sched: &MeasurementSchedule) -> Result<PovmSet> {
    bob_measurement(ens, sched).map(|(p, _)| p)
}

pub fn bob_measurement(ens: &impl Bipartite, sched: &MeasurementSchedule) -> Result<(PovmSet, KrausSet)> {
    let placement = Placement::Second {
        first_dim: ens.alice_basis().dim(),
    };
    local_measurement(ens.bob_basis(), sched, placement, ens.owned_targets())
}

/// Applies Alice's inconclusive Kraus operator to both targets.
pub fn post_measure(ens: &impl Bipartite, sched: &MeasurementSchedule) -> Result<PostMeasurePair> {
    let kraus = alice_kraus(ens, sched)?;
    let params = *ens.params();
    let [rho1, rho2] = ens.targets();
    let apply = |rho: &QuantumOperator| -> Result<QuantumOperator> {
        kraus.apply(rho, 0)?.1.ok_or_else(|| {
            Error::Contract("inconclusive outcome has zero probability for a target".into())
        })
    };
    let w = params.weights();
    let failure = [sched.failure_weight(w, 0), sched.failure_weight(w, 1)];
    Ok(PostMeasurePair {
        sigma1: apply(rho1)?,
        sigma2: apply(rho2)?,
        weights: [sched.post_weights(w, 0), sched.post_weights(w, 1)],
        t: sched.t,
        t_tilde: sched.t_tilde,
        failure_weights: failure,
        priors: conditional_priors(&params, sched),
        params,
        alice: kraus.post_basis,
        bob: ens.bob_basis().clone(),
    })
}

/// A third observer measuring Alice's particle after her non-optimal
/// (`t, t̃ < 1`) inconclusive outcome.
pub fn charlie_povm(post: &PostMeasurePair, sched: &MeasurementSchedule) -> Result<PovmSet> {
    if post.t >= 1.0 || post.t_tilde >= 1.0 {
        return Err(Error::validation(format!(
            "a follow-up measurement on the same particle needs t, t̃ < 1 (got {}, {})",
            post.t, post.t_tilde
        )));
    }
    alice_povm(post, sched)
}

/// POVM weights for the Gram-inverse construction, `0 < c < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c1_tilde: f64,
    pub c2_tilde: f64,
}

/// Bob's POVM when his vectors overlap across blocks:
/// `M_i = c′ᵢ|αᵢ⟩⟨αᵢ| + c̃′ᵢ|α̃ᵢ⟩⟨α̃ᵢ|`, `M₀ = I − M₁ − M₂`, with `|αᵢ⟩`
/// the normalized dual vectors read off the columns of `G⁻¹`.
///
/// `vectors` and `gram` use the ordering `(r₁′, r̃₁′, r₂′, r̃₂′)`.
pub fn bob_povm_general(
    gram: &ComplexMatrix,
    vectors: &[Ket; 4],
    coeffs: &GeneralCoefficients,
    targets: [QuantumOperator; 2],
    first_dim: usize,
) -> Result<PovmSet> {
    for (name, c) in [
        ("c1", coeffs.c1),
        ("c2", coeffs.c2),
        ("c1_tilde", coeffs.c1_tilde),
        ("c2_tilde", coeffs.c2_tilde),
    ] {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::validation(format!("{name} = {c} must lie in (0, 1)")));
        }
    }
    if gram.rows() != 4 || !gram.is_square() {
        return Err(Error::Dimension("Gram matrix must be 4x4".into()));
    }
    let actual = crate::ensembles::gram_matrix(vectors)?;
    if actual.max_abs_diff(gram) > 1e-10 {
        return Err(Error::Contract("Gram matrix does not match the vectors".into()));
    }
    let min = gram.min_eigenvalue()?;
    if min <= 1e-12 {
        return Err(Error::SingularGram(format!("minimum eigenvalue {min:e}")));
    }
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::SingularGram("inversion failed".into()))?;
    let dim = vectors[0].dim();
    let dual = |col: usize| -> Result<Ket> {
        let mut acc = Ket::zeros(dim);
        for (k, v) in vectors.iter().enumerate() {
            acc = acc.add(&v.scale(inv.get(k, col)));
        }
        acc.normalized(1e-12)
            .ok_or_else(|| Error::SingularGram(format!("dual vector {col} has vanishing norm")))
    };
    let alpha = [dual(0)?, dual(1)?, dual(2)?, dual(3)?];
    let m1 = &alpha[0].projector().scale_real(coeffs.c1) + &alpha[1].projector().scale_real(coeffs.c1_tilde);
    let m2 = &alpha[2].projector().scale_real(coeffs.c2) + &alpha[3].projector().scale_real(coeffs.c2_tilde);
    let m0 = &(&ComplexMatrix::identity(dim) - &m1) - &m2;
    PovmSet::new([m0, m1, m2], Placement::Second { first_dim }, targets)
}
