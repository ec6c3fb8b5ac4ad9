//! Two-state bipartite ensembles realized as explicit vectors and density
//! operators.
//!
//! Each local space is a direct sum of a "main" block spanned by `|r₁⟩, |r₂⟩`
//! and a "tilde" block spanned by `|r̃₁⟩, |r̃₂⟩`. The canonical embedding is
//! real and four-dimensional on each side:
//!
//! ```text
//! |r₁⟩ = (1, 0, 0, 0)    |r₂⟩ = (s, √(1−s²), 0, 0)
//! |r̃₁⟩ = (0, 0, 1, 0)    |r̃₂⟩ = (0, 0, s̃, √(1−s̃²))
//! ```
//!
//! Bob's side uses the same layout with the primed overlaps, except in the
//! overlapping-support mode (`epsilon > 0`) where `⟨r₂′|r̃₂′⟩ = ε`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{re, ComplexMatrix, Ket, C64};
use crate::quantum::{tensor, QuantumOperator};

/// Scalar parameters of a two-state ensemble.
///
/// Serialized as a flat object with keys `P1, r1, r2, s, s_tilde, s_prime,
/// s_tilde_prime` and optional `epsilon, phi1, phi2`. `P2 = 1 − P1` and
/// `r̃ᵢ = 1 − rᵢ` are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleParams {
    #[serde(rename = "P1")]
    pub p1: f64,
    pub r1: f64,
    pub r2: f64,
    pub s: f64,
    pub s_tilde: f64,
    pub s_prime: f64,
    pub s_tilde_prime: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi2: Option<f64>,
}

impl EnsembleParams {
    pub fn new(
        p1: f64,
        r1: f64,
        r2: f64,
        s: f64,
        s_tilde: f64,
        s_prime: f64,
        s_tilde_prime: f64,
    ) -> Self {
        Self {
            p1,
            r1,
            r2,
            s,
            s_tilde,
            s_prime,
            s_tilde_prime,
            epsilon: None,
            phi1: None,
            phi2: None,
        }
    }

    /// Equal priors, pure product states (`r₁ = r₂ = 1`).
    pub fn pure_product(s: f64, s_prime: f64) -> Self {
        Self::new(0.5, 1.0, 1.0, s, 0.5, s_prime, 0.5)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn with_phases(mut self, phi1: f64, phi2: f64) -> Self {
        self.phi1 = Some(phi1);
        self.phi2 = Some(phi2);
        self
    }

    pub fn p2(&self) -> f64 {
        1.0 - self.p1
    }

    pub fn priors(&self) -> [f64; 2] {
        [self.p1, self.p2()]
    }

    pub fn r1_tilde(&self) -> f64 {
        1.0 - self.r1
    }

    pub fn r2_tilde(&self) -> f64 {
        1.0 - self.r2
    }

    /// `[(r₁, r̃₁), (r₂, r̃₂)]`.
    pub fn weights(&self) -> [(f64, f64); 2] {
        [(self.r1, self.r1_tilde()), (self.r2, self.r2_tilde())]
    }

    /// Combined main-block overlap `s s′`.
    pub fn s0(&self) -> f64 {
        self.s * self.s_prime
    }

    /// Combined tilde-block overlap `s̃ s̃′`.
    pub fn s0_tilde(&self) -> f64 {
        self.s_tilde * self.s_tilde_prime
    }

    /// `√(r₁r₂) s₀ + √(r̃₁r̃₂) s̃₀`: the fidelity of the mixed pair and the
    /// overlap of the zero-phase pure pair.
    pub fn s_star(&self) -> f64 {
        (self.r1 * self.r2).sqrt() * self.s0()
            + (self.r1_tilde() * self.r2_tilde()).sqrt() * self.s0_tilde()
    }

    pub fn phase_difference(&self) -> f64 {
        self.phi2.unwrap_or(0.0) - self.phi1.unwrap_or(0.0)
    }

    /// `|⟨Ψ₁|Ψ₂⟩|` of the phased pure pair.
    pub fn pure_overlap(&self) -> f64 {
        let a = (self.r1 * self.r2).sqrt() * self.s0();
        let b = (self.r1_tilde() * self.r2_tilde()).sqrt() * self.s0_tilde();
        (re(a) + C64::from_polar(b, self.phase_difference())).norm()
    }

    /// Upper bound on `ε` for the overlapping-support embedding.
    pub fn epsilon_bound(&self) -> f64 {
        ((1.0 - self.s_prime.powi(2)) * (1.0 - self.s_tilde_prime.powi(2))).sqrt()
    }

    /// `ε` when overlapping-support mode is on (`ε > 0`).
    pub fn active_epsilon(&self) -> Option<f64> {
        self.epsilon.filter(|&e| e != 0.0)
    }

    /// Swaps the roles of the two states.
    pub fn relabeled(&self) -> Self {
        Self {
            p1: self.p2(),
            r1: self.r2,
            r2: self.r1,
            phi1: self.phi2,
            phi2: self.phi1,
            ..*self
        }
    }

    /// Checks every parameter constraint and reports all failures at once.
    pub fn validate(&self) -> Result<()> {
        let mut failing = Vec::new();
        let named = [
            ("P1", self.p1),
            ("r1", self.r1),
            ("r2", self.r2),
            ("s", self.s),
            ("s_tilde", self.s_tilde),
            ("s_prime", self.s_prime),
            ("s_tilde_prime", self.s_tilde_prime),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                failing.push(format!("{name} must be finite"));
            }
        }
        if !(self.p1 > 0.0 && self.p1 < 1.0) {
            failing.push(format!("P1 = {} must lie in (0, 1)", self.p1));
        }
        for (name, r) in [("r1", self.r1), ("r2", self.r2)] {
            if !(0.0..=1.0).contains(&r) {
                failing.push(format!("{name} = {r} must lie in [0, 1]"));
            }
        }
        for (name, v) in &named[3..] {
            if !(*v > 0.0 && *v < 1.0) {
                failing.push(format!("{name} = {v} must lie strictly inside (0, 1)"));
            }
        }
        if let Some(eps) = self.epsilon {
            if !eps.is_finite() || eps < 0.0 {
                failing.push(format!("epsilon = {eps} must be non-negative"));
            } else if eps > self.epsilon_bound() {
                failing.push(format!(
                    "epsilon = {eps} exceeds √((1−s′²)(1−s̃′²)) = {}",
                    self.epsilon_bound()
                ));
            }
        }
        for (name, phi) in [("phi1", self.phi1), ("phi2", self.phi2)] {
            if phi.is_some_and(|p| !p.is_finite()) {
                failing.push(format!("{name} must be finite"));
            }
        }
        if failing.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(failing.join("; ")))
        }
    }
}

/// Two vectors spanning one block of a local space.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorPair {
    pub first: Ket,
    pub second: Ket,
}

impl VectorPair {
    pub fn overlap(&self) -> C64 {
        self.first.inner_product(&self.second)
    }

    pub fn get(&self, index: usize) -> &Ket {
        match index {
            0 => &self.first,
            1 => &self.second,
            _ => panic!("vector pair index {index} out of range"),
        }
    }
}

/// The four vectors one observer's measurement is built from.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBasis {
    pub main: VectorPair,
    pub tilde: VectorPair,
}

impl LocalBasis {
    /// Canonical real embedding with the given block overlaps.
    pub fn canonical(overlap: f64, overlap_tilde: f64) -> Self {
        let comp = |x: f64| (1.0 - x * x).max(0.0).sqrt();
        Self {
            main: VectorPair {
                first: Ket::from_real(&[1.0, 0.0, 0.0, 0.0]),
                second: Ket::from_real(&[overlap, comp(overlap), 0.0, 0.0]),
            },
            tilde: VectorPair {
                first: Ket::from_real(&[0.0, 0.0, 1.0, 0.0]),
                second: Ket::from_real(&[0.0, 0.0, overlap_tilde, comp(overlap_tilde)]),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.main.first.dim()
    }

    /// Vectors in Gram order `(r₁, r̃₁, r₂, r̃₂)`.
    pub fn gram_ordered(&self) -> [Ket; 4] {
        [
            self.main.first.clone(),
            self.tilde.first.clone(),
            self.main.second.clone(),
            self.tilde.second.clone(),
        ]
    }

    /// `(|rᵢ⟩, |r̃ᵢ⟩)` for state index `i ∈ {0, 1}`.
    pub fn for_state(&self, i: usize) -> (&Ket, &Ket) {
        (self.main.get(i), self.tilde.get(i))
    }
}

/// Density operators of the two hypotheses together with the vectors they
/// were assembled from.
#[derive(Debug, Clone)]
pub struct EnsemblePair {
    pub params: EnsembleParams,
    pub rho1: QuantumOperator,
    pub rho2: QuantumOperator,
    pub alice: LocalBasis,
    pub bob: LocalBasis,
}

impl EnsemblePair {
    pub fn states(&self) -> [&QuantumOperator; 2] {
        [&self.rho1, &self.rho2]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.alice.dim(), self.bob.dim())
    }
}

/// Pure entangled pair `|Ψᵢ⟩ = √rᵢ |rᵢ⟩|rᵢ′⟩ + e^{iφᵢ} √r̃ᵢ |r̃ᵢ⟩|r̃ᵢ′⟩`.
#[derive(Debug, Clone)]
pub struct PurePair {
    pub params: EnsembleParams,
    pub psi1: Ket,
    pub psi2: Ket,
    pub rho1: QuantumOperator,
    pub rho2: QuantumOperator,
    pub alice: LocalBasis,
    pub bob: LocalBasis,
}

impl PurePair {
    pub fn overlap(&self) -> C64 {
        self.psi1.inner_product(&self.psi2)
    }

    pub fn states(&self) -> [&QuantumOperator; 2] {
        [&self.rho1, &self.rho2]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.alice.dim(), self.bob.dim())
    }
}

fn mixed_state(
    weights: (f64, f64),
    alice: (&Ket, &Ket),
    bob: (&Ket, &Ket),
) -> Result<QuantumOperator> {
    let term = |w: f64, a: &Ket, b: &Ket| -> Result<ComplexMatrix> {
        let pa = QuantumOperator::generic(a.projector())?;
        let pb = QuantumOperator::generic(b.projector())?;
        Ok(tensor(&pa, &pb)?.into_matrix().scale_real(w))
    };
    let m = &term(weights.0, alice.0, bob.0)? + &term(weights.1, alice.1, bob.1)?;
    QuantumOperator::state(m)
}

fn assemble(params: &EnsembleParams, alice: LocalBasis, bob: LocalBasis) -> Result<EnsemblePair> {
    let w = params.weights();
    let rho1 = mixed_state(w[0], alice.for_state(0), bob.for_state(0))?;
    let rho2 = mixed_state(w[1], alice.for_state(1), bob.for_state(1))?;
    Ok(EnsemblePair {
        params: *params,
        rho1,
        rho2,
        alice,
        bob,
    })
}

/// Mixed pair with non-overlapping supports in the canonical embedding.
pub fn build_mixed_pair(params: &EnsembleParams) -> Result<EnsemblePair> {
    params.validate()?;
    if params.active_epsilon().is_some() {
        return Err(Error::validation(
            "epsilon > 0 selects the overlapping-support embedding; use build_appendix_a_pair",
        ));
    }
    assemble(
        params,
        LocalBasis::canonical(params.s, params.s_tilde),
        LocalBasis::canonical(params.s_prime, params.s_tilde_prime),
    )
}

/// Pure entangled pair with optional phases. Requires `rᵢ ∈ (0, 1)`.
pub fn build_pure_pair(params: &EnsembleParams) -> Result<PurePair> {
    params.validate()?;
    for (name, r) in [("r1", params.r1), ("r2", params.r2)] {
        if r <= 0.0 || r >= 1.0 {
            return Err(Error::validation(format!(
                "{name} = {r} must lie strictly inside (0, 1) for a pure entangled pair"
            )));
        }
    }
    if params.active_epsilon().is_some() {
        return Err(Error::Unsupported(
            "pure pairs use the non-overlapping embedding".into(),
        ));
    }
    let alice = LocalBasis::canonical(params.s, params.s_tilde);
    let bob = LocalBasis::canonical(params.s_prime, params.s_tilde_prime);
    let phases = [params.phi1.unwrap_or(0.0), params.phi2.unwrap_or(0.0)];
    let w = params.weights();
    let psi = |i: usize| -> Ket {
        let (a, at) = alice.for_state(i);
        let (b, bt) = bob.for_state(i);
        a.kron(b)
            .scale(re(w[i].0.sqrt()))
            .add(&at.kron(bt).scale(C64::from_polar(w[i].1.sqrt(), phases[i])))
    };
    let psi1 = psi(0);
    let psi2 = psi(1);
    Ok(PurePair {
        params: *params,
        rho1: QuantumOperator::pure_state(&psi1)?,
        rho2: QuantumOperator::pure_state(&psi2)?,
        psi1,
        psi2,
        alice,
        bob,
    })
}

/// Bob's vectors in the overlapping-support embedding:
///
/// ```text
/// |r₁′⟩ = |0⟩,  |r̃₁′⟩ = |1⟩,  |r₂′⟩ = s′|0⟩ + √(1−s′²)|2⟩,
/// |r̃₂′⟩ = s̃′|1⟩ + ε/√(1−s′²) |2⟩ + √(1 − s̃′² − ε²/(1−s′²)) |3⟩
/// ```
pub fn appendix_a_bob_basis(s_prime: f64, s_tilde_prime: f64, epsilon: f64) -> LocalBasis {
    let cp = (1.0 - s_prime * s_prime).sqrt();
    let e2 = epsilon / cp;
    let e3 = (1.0 - s_tilde_prime * s_tilde_prime - e2 * e2).max(0.0).sqrt();
    LocalBasis {
        main: VectorPair {
            first: Ket::from_real(&[1.0, 0.0, 0.0, 0.0]),
            second: Ket::from_real(&[s_prime, 0.0, cp, 0.0]),
        },
        tilde: VectorPair {
            first: Ket::from_real(&[0.0, 1.0, 0.0, 0.0]),
            second: Ket::from_real(&[0.0, s_tilde_prime, e2, e3]),
        },
    }
}

/// Mixed pair whose Bob-side supports overlap through `⟨r₂′|r̃₂′⟩ = ε`.
/// An absent or zero `ε` yields the same embedding at `ε = 0`.
pub fn build_appendix_a_pair(params: &EnsembleParams) -> Result<EnsemblePair> {
    params.validate()?;
    let eps = params.epsilon.unwrap_or(0.0);
    assemble(
        params,
        LocalBasis::canonical(params.s, params.s_tilde),
        appendix_a_bob_basis(params.s_prime, params.s_tilde_prime, eps),
    )
}

/// `G[j,k] = ⟨v_j|v_k⟩`.
pub fn gram_matrix(vectors: &[Ket]) -> Result<ComplexMatrix> {
    let Some(first) = vectors.first() else {
        return Err(Error::Contract("Gram matrix of an empty sequence".into()));
    };
    if vectors.iter().any(|v| v.dim() != first.dim()) {
        return Err(Error::Dimension("Gram vectors differ in dimension".into()));
    }
    let n = vectors.len();
    Ok(ComplexMatrix::from_fn(n, n, |j, k| {
        vectors[j].inner_product(&vectors[k])
    }))
}

/// Default ensemble used by examples and the CLI when none is given.
pub fn sample_params() -> EnsembleParams {
    EnsembleParams::new(0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5)
}
