//! Success and failure probabilities of every discrimination protocol.
//!
//! Each protocol has a formula path (`run_*`) written in the q-parameters and
//! an operational path (`*_trace`) that builds the states and measurements
//! and evaluates trace-rule chains `Tr[… K ρ K† … M]`. The two are
//! independent and are expected to agree to ~1e-12.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ensembles::{build_mixed_pair, build_pure_pair, EnsembleParams, EnsemblePair, LocalBasis, VectorPair};
use crate::error::{Error, Result};
use crate::measurements::{
    alice_kraus, alice_povm, bob_measurement, bob_povm, charlie_povm, local_measurement, post_measure,
    Bipartite, KrausSet, MeasurementSchedule, Placement, PovmSet,
};
use crate::quantum::QuantumOperator;

/// Slack allowed outside `[0, 1]` before a probability is treated as a bug.
pub const PROBABILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Locc,
    Global,
    Ssd,
    PureLocal,
    Reproduce,
    Broadcast,
    SsdHybrid,
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProtocolKind::Locc => "locc",
            ProtocolKind::Global => "global",
            ProtocolKind::Ssd => "ssd",
            ProtocolKind::PureLocal => "pure-local",
            ProtocolKind::Reproduce => "reproduce",
            ProtocolKind::Broadcast => "broadcast",
            ProtocolKind::SsdHybrid => "ssd-hybrid",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "locc" => ProtocolKind::Locc,
            "global" => ProtocolKind::Global,
            "ssd" => ProtocolKind::Ssd,
            "pure-local" => ProtocolKind::PureLocal,
            "reproduce" => ProtocolKind::Reproduce,
            "broadcast" => ProtocolKind::Broadcast,
            "ssd-hybrid" => ProtocolKind::SsdHybrid,
            other => return Err(Error::UnknownId(other.to_string())),
        })
    }
}

/// Every intermediate of a protocol run. Stage fields that do not apply to
/// a protocol are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub protocol: ProtocolKind,
    pub p_a_success: Option<f64>,
    pub p_a_fail: Option<f64>,
    pub p_f1: Option<f64>,
    pub p_f2: Option<f64>,
    pub p_b_success: Option<f64>,
    pub p_b_fail: Option<f64>,
    pub total_success: f64,
    pub total_fail: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_success: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_least_one: Option<f64>,
    /// `|⟨Ψ₁|Ψ₂⟩|` for coherent pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<f64>,
    /// Whether the coherent pair keeps the mixed-state fidelity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity_condition: Option<bool>,
    /// Global-scheme success for hybrid protocols.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_success: Option<f64>,
    /// `global_success − total_success` for hybrid protocols.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_closed_form: Option<f64>,
}

impl ProtocolReport {
    fn new(protocol: ProtocolKind, total_success: f64) -> Self {
        Self {
            protocol,
            p_a_success: None,
            p_a_fail: None,
            p_f1: None,
            p_f2: None,
            p_b_success: None,
            p_b_fail: None,
            total_success,
            total_fail: 1.0 - total_success,
            joint_success: None,
            at_least_one: None,
            overlap: None,
            fidelity_condition: None,
            global_success: None,
            delta: None,
            delta_closed_form: None,
        }
    }

    fn stage_a(mut self, fail: f64) -> Self {
        self.p_a_fail = Some(fail);
        self.p_a_success = Some(1.0 - fail);
        self
    }

    fn stage_b(mut self, fail: f64) -> Self {
        self.p_b_fail = Some(fail);
        self.p_b_success = Some(1.0 - fail);
        self
    }

    fn priors(mut self, p: [f64; 2]) -> Self {
        self.p_f1 = Some(p[0]);
        self.p_f2 = Some(p[1]);
        self
    }

    /// `(name, value)` for every probability-valued field that is present.
    pub fn probabilities(&self) -> Vec<(&'static str, f64)> {
        let named = [
            ("p_a_success", self.p_a_success),
            ("p_a_fail", self.p_a_fail),
            ("p_f1", self.p_f1),
            ("p_f2", self.p_f2),
            ("p_b_success", self.p_b_success),
            ("p_b_fail", self.p_b_fail),
            ("total_success", Some(self.total_success)),
            ("total_fail", Some(self.total_fail)),
            ("joint_success", self.joint_success),
            ("at_least_one", self.at_least_one),
            ("overlap", self.overlap),
            ("global_success", self.global_success),
        ];
        named.into_iter().filter_map(|(n, v)| v.map(|v| (n, v))).collect()
    }

    /// Largest absolute difference over the probability fields both reports
    /// carry.
    pub fn max_difference(&self, other: &Self) -> f64 {
        let theirs = other.probabilities();
        self.probabilities()
            .into_iter()
            .filter_map(|(n, v)| theirs.iter().find(|(m, _)| *m == n).map(|(_, w)| (v - w).abs()))
            .fold(0.0, f64::max)
    }

    fn checked(self, dump: impl Fn() -> String) -> Result<Self> {
        for (name, value) in self.probabilities() {
            if !value.is_finite() || !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&value) {
                return Err(Error::ProbabilityOutOfRange {
                    name: name.to_string(),
                    value,
                    dump: dump(),
                });
            }
        }
        Ok(self)
    }
}

fn dump(params: &EnsembleParams, scheds: &[&MeasurementSchedule]) -> String {
    format!("params = {params:?}; schedules = {scheds:?}")
}

/// `Σᵢ Pᵢ(rᵢ aᵢ + r̃ᵢ ãᵢ)` for per-state block values `(aᵢ, ãᵢ)`.
fn weighted(params: &EnsembleParams, per_state: impl Fn(usize) -> (f64, f64)) -> f64 {
    let w = params.weights();
    params
        .priors()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (a, at) = per_state(i);
            p * (w[i].0 * a + w[i].1 * at)
        })
        .sum()
}

/// Alice on the first particle, then Bob on the second after Alice fails.
pub fn run_locc(
    params: &EnsembleParams,
    sched_a: &MeasurementSchedule,
    sched_b: &MeasurementSchedule,
) -> Result<ProtocolReport> {
    params.validate()?;
    sched_a.validate(params.s, params.s_tilde)?;
    sched_b.validate(params.s_prime, params.s_tilde_prime)?;
    locc_formula(params, sched_a, sched_b, ProtocolKind::Locc).checked(|| dump(params, &[sched_a, sched_b]))
}

fn locc_formula(
    params: &EnsembleParams,
    sched_a: &MeasurementSchedule,
    sched_b: &MeasurementSchedule,
    kind: ProtocolKind,
) -> ProtocolReport {
    let w = params.weights();
    let fail_a = weighted(params, |i| sched_a.q(i));
    let priors = crate::measurements::conditional_priors(params, sched_a);
    let fail_b: f64 = (0..2)
        .map(|i| {
            let (v, vt) = sched_a.post_weights(w, i);
            let (q, qt) = sched_b.q(i);
            priors[i] * (v * q + vt * qt)
        })
        .sum();
    let total_fail = fail_a * fail_b;
    ProtocolReport::new(kind, 1.0 - total_fail)
        .stage_a(fail_a)
        .priors(priors)
        .stage_b(fail_b)
}

/// One joint measurement with `q₁q₂ = (ss′)²`, `q̃₁q̃₂ = (s̃s̃′)²`.
pub fn run_global(params: &EnsembleParams, sched_g: &MeasurementSchedule) -> Result<ProtocolReport> {
    params.validate()?;
    sched_g.validate(params.s0(), params.s0_tilde())?;
    let fail = weighted(params, |i| sched_g.q(i));
    ProtocolReport::new(ProtocolKind::Global, 1.0 - fail)
        .stage_a(fail)
        .checked(|| dump(params, &[sched_g]))
}

pub(crate) fn require_nonoptimal(sched: &MeasurementSchedule) -> Result<()> {
    if sched.t >= 1.0 || sched.t_tilde >= 1.0 {
        return Err(Error::validation(format!(
            "sequential discrimination needs a first measurement with t, t̃ < 1 (got {}, {})",
            sched.t, sched.t_tilde
        )));
    }
    Ok(())
}

/// Alice (non-optimal) then Charlie on the same particle, without
/// communication.
pub fn run_ssd(
    params: &EnsembleParams,
    sched_a: &MeasurementSchedule,
    sched_c: &MeasurementSchedule,
) -> Result<ProtocolReport> {
    params.validate()?;
    sched_a.validate(params.s, params.s_tilde)?;
    require_nonoptimal(sched_a)?;
    sched_c.validate(sched_a.t, sched_a.t_tilde)?;
    let fail_a = weighted(params, |i| sched_a.q(i));
    let fail_c = weighted(params, |i| sched_c.q(i));
    let joint = weighted(params, |i| {
        let (a, at) = sched_a.q(i);
        let (c, ct) = sched_c.q(i);
        ((1.0 - a) * (1.0 - c), (1.0 - at) * (1.0 - ct))
    });
    let both_fail = weighted(params, |i| {
        let (a, at) = sched_a.q(i);
        let (c, ct) = sched_c.q(i);
        (a * c, at * ct)
    });
    let mut report = ProtocolReport::new(ProtocolKind::Ssd, 1.0 - both_fail)
        .stage_a(fail_a)
        .stage_b(fail_c);
    report.joint_success = Some(joint);
    report.at_least_one = Some(1.0 - both_fail);
    report.checked(|| dump(params, &[sched_a, sched_c]))
}

/// LOCC on the coherent pair `√rᵢ|rᵢ⟩|rᵢ′⟩ + e^{iφᵢ}√r̃ᵢ|r̃ᵢ⟩|r̃ᵢ′⟩`.
pub fn run_pure_local(
    params: &EnsembleParams,
    sched_a: &MeasurementSchedule,
    sched_b: &MeasurementSchedule,
) -> Result<ProtocolReport> {
    params.validate()?;
    require_entangled(params)?;
    sched_a.validate(params.s, params.s_tilde)?;
    sched_b.validate(params.s_prime, params.s_tilde_prime)?;
    let mut report = locc_formula(params, sched_a, sched_b, ProtocolKind::PureLocal);
    let overlap = params.pure_overlap();
    report.overlap = Some(overlap);
    report.fidelity_condition = Some((overlap - params.s_star()).abs() <= 1e-12);
    report.checked(|| dump(params, &[sched_a, sched_b]))
}

fn require_entangled(params: &EnsembleParams) -> Result<()> {
    for (name, r) in [("r1", params.r1), ("r2", params.r2)] {
        if r <= 0.0 || r >= 1.0 {
            return Err(Error::validation(format!(
                "{name} = {r} must lie strictly inside (0, 1) for a coherent pair"
            )));
        }
    }
    Ok(())
}

fn require_hybrid_setting(params: &EnsembleParams) -> Result<()> {
    params.validate()?;
    if (params.p1 - 0.5).abs() > 1e-12 || params.r1 != 1.0 || params.r2 != 1.0 {
        return Err(Error::Unsupported(format!(
            "hybrid protocols are evaluated for equal priors and pure product states \
             (P1 = 0.5, r1 = r2 = 1); got P1 = {}, r1 = {}, r2 = {}",
            params.p1, params.r1, params.r2
        )));
    }
    Ok(())
}

/// Joint success of one reproduce stage: Alice and Charlie both succeed
/// with the symmetric optimal measurement, `(1 − s)²`.
pub fn reproduce_stage_success(s: f64) -> f64 {
    (1.0 - s).powi(2)
}

/// Broadcasting succeeds with `1/(1 + s)`; both partial states are then
/// identified with probability `(1 − s)²`.
pub fn broadcast_stage_success(s: f64) -> f64 {
    (1.0 - s).powi(2) / (1.0 + s)
}

pub fn reproduce_delta_closed_form(s: f64, s_prime: f64) -> f64 {
    2.0 * s * s_prime * (1.0 - s) * (1.0 - s_prime)
}

pub fn broadcast_delta_closed_form(s: f64, s_prime: f64) -> f64 {
    let s0 = s * s_prime;
    2.0 * (1.0 - s) * (1.0 - s_prime) * s0 * (3.0 + s0) / ((1.0 + s) * (1.0 + s_prime) * (1.0 + s0))
}

fn hybrid_report(
    kind: ProtocolKind,
    stage1: f64,
    stage2: f64,
    global: f64,
    closed: Option<f64>,
) -> ProtocolReport {
    let total_fail = (1.0 - stage1) * (1.0 - stage2);
    let mut report = ProtocolReport::new(kind, 1.0 - total_fail)
        .stage_a(1.0 - stage1)
        .priors([0.5, 0.5])
        .stage_b(1.0 - stage2);
    report.global_success = Some(global);
    report.delta = Some(global - report.total_success);
    report.delta_closed_form = closed;
    report
}

/// Reproduce-and-forward on each particle in turn, against the same
/// protocol run once on the whole system.
pub fn run_reproduce(params: &EnsembleParams) -> Result<ProtocolReport> {
    require_hybrid_setting(params)?;
    let (s, sp) = (params.s, params.s_prime);
    hybrid_report(
        ProtocolKind::Reproduce,
        reproduce_stage_success(s),
        reproduce_stage_success(sp),
        reproduce_stage_success(s * sp),
        Some(reproduce_delta_closed_form(s, sp)),
    )
    .checked(|| dump(params, &[]))
}

pub fn run_broadcast(params: &EnsembleParams) -> Result<ProtocolReport> {
    require_hybrid_setting(params)?;
    let (s, sp) = (params.s, params.s_prime);
    hybrid_report(
        ProtocolKind::Broadcast,
        broadcast_stage_success(s),
        broadcast_stage_success(sp),
        broadcast_stage_success(s * sp),
        Some(broadcast_delta_closed_form(s, sp)),
    )
    .checked(|| dump(params, &[]))
}

/// Schedules for a sequential pair of observers on one system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsdStage {
    pub first: MeasurementSchedule,
    pub second: MeasurementSchedule,
}

/// Joint success per state of an SSD stage on pure states.
fn ssd_joint(stage: &SsdStage, i: usize) -> f64 {
    (1.0 - stage.first.q(i).0) * (1.0 - stage.second.q(i).0)
}

/// SSD on the first particle; unless both observers there succeed, a second
/// SSD runs on the other particle. Compared with one SSD on the whole system.
pub fn run_ssd_hybrid(
    params: &EnsembleParams,
    local1: &SsdStage,
    local2: &SsdStage,
    global: &SsdStage,
) -> Result<ProtocolReport> {
    params.validate()?;
    if params.r1 != 1.0 || params.r2 != 1.0 {
        return Err(Error::Unsupported(
            "the SSD hybrid is evaluated for pure product states (r1 = r2 = 1)".into(),
        ));
    }
    let check = |st: &SsdStage, s: f64, st_: f64| -> Result<()> {
        st.first.validate(s, st_)?;
        require_nonoptimal(&st.first)?;
        st.second.validate(st.first.t, st.first.t_tilde)
    };
    check(local1, params.s, params.s_tilde)?;
    check(local2, params.s_prime, params.s_tilde_prime)?;
    check(global, params.s0(), params.s0_tilde())?;
    let p = params.priors();
    let j1: f64 = (0..2).map(|i| p[i] * ssd_joint(local1, i)).sum();
    let rest = [p[0] * (1.0 - ssd_joint(local1, 0)), p[1] * (1.0 - ssd_joint(local1, 1))];
    let priors = [rest[0] / (rest[0] + rest[1]), rest[1] / (rest[0] + rest[1])];
    let j2: f64 = (0..2).map(|i| priors[i] * ssd_joint(local2, i)).sum();
    let g: f64 = (0..2).map(|i| p[i] * ssd_joint(global, i)).sum();
    let total_fail = (1.0 - j1) * (1.0 - j2);
    let mut report = ProtocolReport::new(ProtocolKind::SsdHybrid, 1.0 - total_fail)
        .stage_a(1.0 - j1)
        .priors(priors)
        .stage_b(1.0 - j2);
    report.global_success = Some(g);
    report.delta = Some(g - report.total_success);
    report.checked(|| dump(params, &[&local1.first, &local1.second, &local2.first, &local2.second]))
}

/// A protocol together with the schedules it runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProtocolSetup {
    Locc {
        alice: MeasurementSchedule,
        bob: MeasurementSchedule,
    },
    Global {
        global: MeasurementSchedule,
    },
    Ssd {
        alice: MeasurementSchedule,
        charlie: MeasurementSchedule,
    },
    PureLocal {
        alice: MeasurementSchedule,
        bob: MeasurementSchedule,
    },
    Reproduce,
    Broadcast,
    SsdHybrid {
        first: SsdStage,
        second: SsdStage,
        global: SsdStage,
    },
}

impl ProtocolSetup {
    pub fn kind(&self) -> ProtocolKind {
        match self {
            ProtocolSetup::Locc { .. } => ProtocolKind::Locc,
            ProtocolSetup::Global { .. } => ProtocolKind::Global,
            ProtocolSetup::Ssd { .. } => ProtocolKind::Ssd,
            ProtocolSetup::PureLocal { .. } => ProtocolKind::PureLocal,
            ProtocolSetup::Reproduce => ProtocolKind::Reproduce,
            ProtocolSetup::Broadcast => ProtocolKind::Broadcast,
            ProtocolSetup::SsdHybrid { .. } => ProtocolKind::SsdHybrid,
        }
    }

    /// Formula path.
    pub fn run(&self, params: &EnsembleParams) -> Result<ProtocolReport> {
        match self {
            ProtocolSetup::Locc { alice, bob } => run_locc(params, alice, bob),
            ProtocolSetup::Global { global } => run_global(params, global),
            ProtocolSetup::Ssd { alice, charlie } => run_ssd(params, alice, charlie),
            ProtocolSetup::PureLocal { alice, bob } => run_pure_local(params, alice, bob),
            ProtocolSetup::Reproduce => run_reproduce(params),
            ProtocolSetup::Broadcast => run_broadcast(params),
            ProtocolSetup::SsdHybrid { first, second, global } => run_ssd_hybrid(params, first, second, global),
        }
    }

    /// Operational (trace-rule) path.
    pub fn trace(&self, params: &EnsembleParams) -> Result<ProtocolReport> {
        match self {
            ProtocolSetup::Locc { alice, bob } => locc_trace(params, alice, bob),
            ProtocolSetup::Global { global } => global_trace(params, global),
            ProtocolSetup::Ssd { alice, charlie } => ssd_trace(params, alice, charlie),
            ProtocolSetup::PureLocal { alice, bob } => pure_local_trace(params, alice, bob),
            ProtocolSetup::Reproduce => reproduce_trace(params),
            ProtocolSetup::Broadcast => broadcast_trace(params),
            ProtocolSetup::SsdHybrid { first, second, global } => ssd_hybrid_trace(params, first, second, global),
        }
    }
}

// ---------------------------------------------------------------------------
// Operational (trace-rule) evaluation

/// One step of a measurement chain.
#[derive(Debug, Clone, Copy)]
pub enum Stage<'a> {
    /// Apply `K_k` and continue.
    Kraus(&'a KrausSet),
    /// Terminal measurement: `Tr[ρ M_k]`.
    Povm(&'a PovmSet),
}

impl Stage<'_> {
    fn dim(&self) -> usize {
        match self {
            Stage::Kraus(k) => k.lifted(0).rows(),
            Stage::Povm(p) => p.lifted(0).rows(),
        }
    }
}

/// Probability that `state` yields outcome `pattern[k]` at stage `k` for
/// every stage, computed purely through the trace rule.
pub fn operational_probability(state: &QuantumOperator, stages: &[Stage<'_>], pattern: &[usize]) -> Result<f64> {
    if stages.len() != pattern.len() {
        return Err(Error::Contract(format!(
            "{} stages but {} outcomes",
            stages.len(),
            pattern.len()
        )));
    }
    if let Some(pos) = stages.iter().position(|s| matches!(s, Stage::Povm(_))) {
        if pos + 1 != stages.len() {
            return Err(Error::Contract("a POVM without Kraus operators must be the final stage".into()));
        }
    }
    if pattern.iter().any(|&k| k > 2) {
        return Err(Error::Contract("outcomes are 0, 1 or 2".into()));
    }
    let mut rho = state.matrix().clone();
    for (stage, &k) in stages.iter().zip(pattern) {
        if stage.dim() != rho.rows() {
            return Err(Error::Dimension(format!(
                "stage acts on dimension {} but the state has dimension {}",
                stage.dim(),
                rho.rows()
            )));
        }
        match stage {
            Stage::Kraus(set) => {
                let kl = set.lifted(k);
                rho = &(&kl * &rho) * &kl.adjoint();
            }
            Stage::Povm(set) => {
                return Ok(QuantumOperator::generic(rho)?.trace_with(&set.lifted(k)));
            }
        }
    }
    Ok(rho.trace().re)
}

/// `Σᵢ Pᵢ Σ_{pattern ∈ patterns(i)} P(pattern | ρᵢ)`.
pub fn ensemble_probability(
    priors: [f64; 2],
    states: [&QuantumOperator; 2],
    stages: &[Stage<'_>],
    patterns: impl Fn(usize) -> Vec<Vec<usize>>,
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..2 {
        for pat in patterns(i) {
            total += priors[i] * operational_probability(states[i], stages, &pat)?;
        }
    }
    Ok(total)
}

/// Main and tilde blocks of the whole system, `|rᵢ⟩|rᵢ′⟩` and
/// `|r̃ᵢ⟩|r̃ᵢ′⟩`.
pub fn combined_basis(alice: &LocalBasis, bob: &LocalBasis) -> LocalBasis {
    let pair = |a: &VectorPair, b: &VectorPair| VectorPair {
        first: a.first.kron(&b.first),
        second: a.second.kron(&b.second),
    };
    LocalBasis {
        main: pair(&alice.main, &bob.main),
        tilde: pair(&alice.tilde, &bob.tilde),
    }
}

fn fail_fail(_: usize) -> Vec<Vec<usize>> {
    vec![vec![0, 0]]
}

fn locc_report_from(
    kind: ProtocolKind,
    ens: &impl Bipartite,
    sched_a: &MeasurementSchedule,
    sched_b: &MeasurementSchedule,
) -> Result<ProtocolReport> {
    let params = *ens.params();
    let alice = alice_povm(ens, sched_a)?;
    let kraus = alice_kraus(ens, sched_a)?;
    let post = post_measure(ens, sched_a)?;
    let bob = bob_povm(&post, sched_b)?;
    let priors = params.priors();
    let states = ens.targets();
    let fail_a = ensemble_probability(priors, states, &[Stage::Povm(&alice)], |_| vec![vec![0]])?;
    let total_fail = ensemble_probability(priors, states, &[Stage::Kraus(&kraus), Stage::Povm(&bob)], fail_fail)?;
    let per_state_a: Vec<f64> = (0..2)
        .map(|i| operational_probability(states[i], &[Stage::Povm(&alice)], &[0]))
        .collect::<Result<_>>()?;
    let f = [priors[0] * per_state_a[0], priors[1] * per_state_a[1]];
    let cond = [f[0] / (f[0] + f[1]), f[1] / (f[0] + f[1])];
    let fail_b = ensemble_probability(cond, post.targets(), &[Stage::Povm(&bob)], |_| vec![vec![0]])?;
    let mut report = ProtocolReport::new(kind, 1.0 - total_fail)
        .stage_a(fail_a)
        .priors(cond)
        .stage_b(fail_b);
    report.total_fail = total_fail;
    Ok(report)
}

pub fn locc_trace(
    params: &EnsembleParams,
    sched_a: &MeasurementSchedule,
    sched_b: &MeasurementSchedule,
) -> Result<ProtocolReport> {
    let ens = build_mixed_pair(params)?;
    locc_report_from(ProtocolKind::Locc, &ens, sched_a, sched_b)
}

pub fn pure_local_trace(
    params: &EnsembleParams,
    sched_a: &MeasurementSchedule,
    sched_b: &MeasurementSchedule,
) -> Result<ProtocolReport> {
    let pair = build_pure_pair(params)?;
    let mut report = locc_report_from(ProtocolKind::PureLocal, &pair, sched_a, sched_b)?;
    let overlap = pair.overlap().norm();
    report.overlap = Some(overlap);
    report.fidelity_condition = Some((overlap - params.s_star()).abs() <= 1e-12);
    Ok(report)
}

pub(crate) fn whole_measurement(
    ens: &EnsemblePair,
    basis: &LocalBasis,
    sched: &MeasurementSchedule,
) -> Result<(PovmSet, KrausSet)> {
    let targets = [ens.rho1.clone(), ens.rho2.clone()];
    local_measurement(basis, sched, Placement::Whole, targets)
}

pub fn global_trace(params: &EnsembleParams, sched_g: &MeasurementSchedule) -> Result<ProtocolReport> {
    let ens = build_mixed_pair(params)?;
    let basis = combined_basis(&ens.alice, &ens.bob);
    let (povm, _) = whole_measurement(&ens, &basis, sched_g)?;
    let fail = ensemble_probability(params.priors(), [&ens.rho1, &ens.rho2], &[Stage::Povm(&povm)], |_| {
        vec![vec![0]]
    })?;
    let mut report = ProtocolReport::new(ProtocolKind::Global, 1.0 - fail).stage_a(fail);
    report.total_fail = fail;
    Ok(report)
}

pub fn ssd_trace(
    params: &EnsembleParams,
    sched_a: &MeasurementSchedule,
    sched_c: &MeasurementSchedule,
) -> Result<ProtocolReport> {
    require_nonoptimal(sched_a)?;
    let ens = build_mixed_pair(params)?;
    let kraus = alice_kraus(&ens, sched_a)?;
    let alice = alice_povm(&ens, sched_a)?;
    let post = post_measure(&ens, sched_a)?;
    let charlie = charlie_povm(&post, sched_c)?;
    let priors = params.priors();
    let states = [&ens.rho1, &ens.rho2];
    let chain = [Stage::Kraus(&kraus), Stage::Povm(&charlie)];
    let fail_a = ensemble_probability(priors, states, &[Stage::Povm(&alice)], |_| vec![vec![0]])?;
    // Charlie's marginal: sum over every outcome Alice may have had.
    let fail_c = ensemble_probability(priors, states, &chain, |_| (0..3).map(|a| vec![a, 0]).collect())?;
    let joint = ensemble_probability(priors, states, &chain, |i| vec![vec![i + 1, i + 1]])?;
    let both_fail = ensemble_probability(priors, states, &chain, fail_fail)?;
    let mut report = ProtocolReport::new(ProtocolKind::Ssd, 1.0 - both_fail)
        .stage_a(fail_a)
        .stage_b(fail_c);
    report.total_fail = both_fail;
    report.joint_success = Some(joint);
    report.at_least_one = Some(1.0 - both_fail);
    Ok(report)
}

/// Stage success of reproduce-and-forward from constructed measurements:
/// `Σᵢ Pᵢ Tr[ρᵢMᵢ]²`, the second factor being Charlie's measurement on a
/// faithful copy.
fn reproduce_stage_trace(ens: &EnsemblePair, povm: &PovmSet) -> Result<f64> {
    let mut total = 0.0;
    for (i, p) in ens.params.priors().iter().enumerate() {
        let hit = operational_probability(ens.states()[i], &[Stage::Povm(povm)], &[i + 1])?;
        total += p * hit * hit;
    }
    Ok(total)
}

pub(crate) fn hybrid_stage_povms(params: &EnsembleParams) -> Result<(EnsemblePair, PovmSet, PovmSet, PovmSet)> {
    require_hybrid_setting(params)?;
    let ens = build_mixed_pair(params)?;
    let a = alice_povm(&ens, &MeasurementSchedule::symmetric_optimal(params.s, params.s_tilde))?;
    let b = bob_measurement(&ens, &MeasurementSchedule::symmetric_optimal(params.s_prime, params.s_tilde_prime))?.0;
    let basis = combined_basis(&ens.alice, &ens.bob);
    let g = whole_measurement(
        &ens,
        &basis,
        &MeasurementSchedule::symmetric_optimal(params.s0(), params.s0_tilde()),
    )?
    .0;
    Ok((ens, a, b, g))
}

pub fn reproduce_trace(params: &EnsembleParams) -> Result<ProtocolReport> {
    let (ens, a, b, g) = hybrid_stage_povms(params)?;
    Ok(hybrid_report(
        ProtocolKind::Reproduce,
        reproduce_stage_trace(&ens, &a)?,
        reproduce_stage_trace(&ens, &b)?,
        reproduce_stage_trace(&ens, &g)?,
        None,
    ))
}

/// Broadcasting itself is modelled only by its success probability
/// `1/(1 + s)`; the discrimination factors come from the constructed POVMs.
pub fn broadcast_trace(params: &EnsembleParams) -> Result<ProtocolReport> {
    let (ens, a, b, g) = hybrid_stage_povms(params)?;
    let (s, sp) = (params.s, params.s_prime);
    Ok(hybrid_report(
        ProtocolKind::Broadcast,
        reproduce_stage_trace(&ens, &a)? / (1.0 + s),
        reproduce_stage_trace(&ens, &b)? / (1.0 + sp),
        reproduce_stage_trace(&ens, &g)? / (1.0 + s * sp),
        None,
    ))
}

pub fn ssd_hybrid_trace(
    params: &EnsembleParams,
    local1: &SsdStage,
    local2: &SsdStage,
    global: &SsdStage,
) -> Result<ProtocolReport> {
    let ens = build_mixed_pair(params)?;
    require_nonoptimal(&local1.first)?;
    require_nonoptimal(&local2.first)?;
    require_nonoptimal(&global.first)?;
    let other_a = Placement::First { other_dim: ens.bob.dim() };
    let other_b = Placement::Second { first_dim: ens.alice.dim() };
    let targets = || [ens.rho1.clone(), ens.rho2.clone()];

    let (_, ka) = local_measurement(&ens.alice, &local1.first, other_a, targets())?;
    let (_, kc) = local_measurement(&ka.post_basis, &local1.second, other_a, targets_after(&ens, &ka)?)?;
    let (_, kb) = local_measurement(&ens.bob, &local2.first, other_b, targets())?;
    let (pd, _) = local_measurement(&kb.post_basis, &local2.second, other_b, targets_after(&ens, &kb)?)?;

    let priors = params.priors();
    let states = [&ens.rho1, &ens.rho2];
    let stage1 = [Stage::Kraus(&ka), Stage::Kraus(&kc)];
    let j1 = ensemble_probability(priors, states, &stage1, |i| vec![vec![i + 1, i + 1]])?;
    // Every first-stage record except joint success hands over to stage two.
    let chain = [Stage::Kraus(&ka), Stage::Kraus(&kc), Stage::Kraus(&kb), Stage::Povm(&pd)];
    let handover = |i: usize| -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for a in 0..3 {
            for c in 0..3 {
                if !(a == i + 1 && c == i + 1) {
                    out.push(vec![a, c, i + 1, i + 1]);
                }
            }
        }
        out
    };
    let j_after = ensemble_probability(priors, states, &chain, handover)?;
    let rest: Vec<f64> = (0..2)
        .map(|i| {
            let joint = operational_probability(states[i], &stage1, &[i + 1, i + 1])?;
            Ok(priors[i] * (1.0 - joint))
        })
        .collect::<Result<_>>()?;
    let cond = [rest[0] / (rest[0] + rest[1]), rest[1] / (rest[0] + rest[1])];
    let j2 = j_after / (1.0 - j1);

    let basis = combined_basis(&ens.alice, &ens.bob);
    let (_, kg) = local_measurement(&basis, &global.first, Placement::Whole, targets())?;
    let (pg2, _) = local_measurement(&kg.post_basis, &global.second, Placement::Whole, targets_after(&ens, &kg)?)?;
    let g = ensemble_probability(priors, states, &[Stage::Kraus(&kg), Stage::Povm(&pg2)], |i| {
        vec![vec![i + 1, i + 1]]
    })?;

    let total_success = j1 + j_after;
    let mut report = ProtocolReport::new(ProtocolKind::SsdHybrid, total_success)
        .stage_a(1.0 - j1)
        .priors(cond)
        .stage_b(1.0 - j2);
    report.total_fail = 1.0 - total_success;
    report.global_success = Some(g);
    report.delta = Some(g - total_success);
    Ok(report)
}

/// Normalized targets after the inconclusive Kraus operator of `k`.
pub(crate) fn targets_after(ens: &EnsemblePair, k: &KrausSet) -> Result<[QuantumOperator; 2]> {
    let take = |rho: &QuantumOperator| -> Result<QuantumOperator> {
        k.apply(rho, 0)?
            .1
            .ok_or_else(|| Error::Contract("inconclusive outcome has zero probability".into()))
    };
    Ok([take(&ens.rho1)?, take(&ens.rho2)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::sample_params;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn no_measurement_never_succeeds() {
        let p = sample_params();
        let r = run_locc(
            &p,
            &MeasurementSchedule::trivial(p.s, p.s_tilde),
            &MeasurementSchedule::trivial(p.s_prime, p.s_tilde_prime),
        )
        .unwrap();
        assert!(close(r.total_success, 0.0, 1e-15));
        let g = run_global(&p, &MeasurementSchedule::trivial(p.s0(), p.s0_tilde())).unwrap();
        assert!(close(g.total_success, 0.0, 1e-15));
    }

    #[test]
    fn symmetric_pure_product_locc_matches_trace() {
        let p = EnsembleParams::pure_product(0.4, 0.4);
        let a = MeasurementSchedule::symmetric_optimal(0.4, 0.5);
        let b = MeasurementSchedule::symmetric_optimal(0.4, 0.5);
        let formula = run_locc(&p, &a, &b).unwrap();
        let trace = locc_trace(&p, &a, &b).unwrap();
        assert!(formula.max_difference(&trace) < 1e-12);
        assert!(close(trace.total_success, 0.84, 1e-12));
    }

    #[test]
    fn exchange_symmetry() {
        let p = EnsembleParams::new(0.3, 0.6, 0.2, 0.5, 0.5, 0.5, 0.5);
        let a = MeasurementSchedule::optimal(0.7, 0.4, 0.5, 0.5).unwrap();
        let b = MeasurementSchedule::optimal(0.3, 0.9, 0.5, 0.5).unwrap();
        let ab = run_locc(&p, &a, &b).unwrap();
        let ba = run_locc(&p, &b, &a).unwrap();
        assert!(close(ab.total_success, ba.total_success, 1e-12));
    }

    #[test]
    fn orthogonal_limit_global_near_one() {
        let p = EnsembleParams::new(0.5, 0.5, 0.5, 1e-4, 1e-4, 1e-4, 1e-4);
        let s0 = p.s0();
        let g = run_global(&p, &MeasurementSchedule::symmetric_optimal(s0, s0)).unwrap();
        assert!(g.total_success > 1.0 - 1e-7);
    }

    #[test]
    fn ssd_symmetric_point() {
        let s = 0.3f64;
        let p = EnsembleParams::pure_product(s, 0.5);
        let q = s.sqrt();
        let a = MeasurementSchedule::from_q(q, q, 0.7, 0.7, s, 0.5).unwrap();
        let c = MeasurementSchedule::symmetric_optimal(a.t, a.t_tilde);
        let r = run_ssd(&p, &a, &c).unwrap();
        assert!(close(r.joint_success.unwrap(), (1.0 - s.sqrt()).powi(2), 1e-12));
        let t = ssd_trace(&p, &a, &c).unwrap();
        assert!(r.max_difference(&t) < 1e-12, "{r:?}\n{t:?}");
    }

    #[test]
    fn ssd_all_failing() {
        let p = sample_params();
        let a = MeasurementSchedule::trivial(p.s, p.s_tilde);
        let c = MeasurementSchedule::trivial(a.t, a.t_tilde);
        let r = run_ssd(&p, &a, &c).unwrap();
        assert_eq!(r.joint_success, Some(0.0));
        assert_eq!(r.at_least_one, Some(0.0));
        let opt = MeasurementSchedule::symmetric_optimal(0.5, 0.5);
        assert!(matches!(run_ssd(&p, &opt, &opt), Err(Error::Validation { .. })));
    }

    #[test]
    fn reproduce_values() {
        let r = run_reproduce(&EnsembleParams::pure_product(0.5, 0.5)).unwrap();
        assert!(close(r.delta.unwrap(), 0.125, 1e-12));
        assert!(close(r.delta_closed_form.unwrap(), 0.125, 1e-15));
        let r = run_reproduce(&EnsembleParams::pure_product(0.9, 0.9)).unwrap();
        assert!(close(r.delta.unwrap(), 0.0162, 1e-12));
        let tiny = run_reproduce(&EnsembleParams::pure_product(1e-6, 0.5)).unwrap();
        assert!(tiny.delta.unwrap() < 1e-6);
        let t = reproduce_trace(&EnsembleParams::pure_product(0.5, 0.5)).unwrap();
        assert!(close(t.delta.unwrap(), 0.125, 1e-12));
    }

    #[test]
    fn broadcast_values() {
        let r = run_broadcast(&EnsembleParams::pure_product(0.5, 0.5)).unwrap();
        assert!(close(r.delta.unwrap(), 0.40625 / 2.8125, 1e-12));
        let t = broadcast_trace(&EnsembleParams::pure_product(0.5, 0.5)).unwrap();
        assert!(r.max_difference(&t) < 1e-12);
        let near = run_broadcast(&EnsembleParams::pure_product(1.0 - 1e-7, 0.5)).unwrap();
        assert!(near.delta.unwrap().abs() < 1e-6);
        assert!(run_broadcast(&EnsembleParams::pure_product(0.2, 0.7)).unwrap().delta.unwrap() > 0.0);
    }

    #[test]
    fn hybrids_reject_unequal_priors() {
        let p = EnsembleParams::new(0.4, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5);
        assert!(matches!(run_reproduce(&p), Err(Error::Unsupported(_))));
        assert!(matches!(run_broadcast(&p), Err(Error::Unsupported(_))));
    }

    #[test]
    fn identity_povm_has_unit_probability() {
        let ens = build_mixed_pair(&sample_params()).unwrap();
        let povm = alice_povm(&ens, &MeasurementSchedule::trivial(0.5, 0.5)).unwrap();
        let p = operational_probability(&ens.rho1, &[Stage::Povm(&povm)], &[0]).unwrap();
        assert!(close(p, 1.0, 1e-14));
        assert!(operational_probability(&ens.rho1, &[Stage::Povm(&povm)], &[0, 0]).is_err());
    }

    #[test]
    fn alice_stage_matches_q_terms() {
        let p = EnsembleParams::new(0.4, 0.7, 0.2, 0.5, 0.6, 0.5, 0.5);
        let ens = build_mixed_pair(&p).unwrap();
        let sched = MeasurementSchedule::symmetric_optimal(0.5, 0.6);
        let povm = alice_povm(&ens, &sched).unwrap();
        let hit = operational_probability(&ens.rho1, &[Stage::Povm(&povm)], &[1]).unwrap();
        assert!(close(hit, 1.0 - sched.failure_weight(p.weights(), 0), 1e-12));
    }

    #[test]
    fn phase_flags_fidelity_condition() {
        let p = sample_params().with_phases(0.0, 1.0);
        let sched = MeasurementSchedule::symmetric_optimal(0.5, 0.5);
        let r = run_pure_local(&p, &sched, &sched).unwrap();
        assert_eq!(r.fidelity_condition, Some(false));
        assert!(r.overlap.unwrap() < p.s_star());
        let t = pure_local_trace(&p, &sched, &sched).unwrap();
        assert_eq!(t.fidelity_condition, Some(false));
        assert!(r.max_difference(&t) < 1e-12);
        let mixed = run_locc(&p, &sched, &sched).unwrap();
        assert!(close(mixed.total_fail, r.total_fail, 1e-12));
    }

    #[test]
    fn report_json_uses_stable_names() {
        let p = sample_params();
        let s = MeasurementSchedule::symmetric_optimal(0.5, 0.5);
        let r = run_locc(&p, &s, &s).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["protocol", "p_a_success", "p_a_fail", "p_f1", "p_f2", "p_b_success", "p_b_fail", "total_success", "total_fail"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["protocol"], "locc");
    }

    #[test]
    fn out_of_range_probability_is_reported() {
        let r = ProtocolReport::new(ProtocolKind::Global, 1.5);
        let err = r.checked(|| "dump".into()).unwrap_err();
        assert!(matches!(err, Error::ProbabilityOutOfRange { ref name, .. } if name == "total_success"));
    }

    // -- invariants ---------------------------------------------------------

    prop_compose! {
        fn ensemble()(p1 in 0.05f64..0.95, r1 in 0.0f64..=1.0, r2 in 0.0f64..=1.0,
                      s in 0.05f64..0.95, st in 0.05f64..0.95, sp in 0.05f64..0.95, stp in 0.05f64..0.95)
                      -> EnsembleParams {
            EnsembleParams::new(p1, r1, r2, s, st, sp, stp)
        }
    }

    fn optimal_for(s: f64, st: f64, x: f64, y: f64) -> MeasurementSchedule {
        MeasurementSchedule::optimal(s * s + (1.0 - s * s) * x, st * st + (1.0 - st * st) * y, s, st).unwrap()
    }

    fn nonoptimal_for(s: f64, st: f64, u: [f64; 4]) -> MeasurementSchedule {
        // strictly inside so that t < 1
        let pick = |lo: f64, x: f64| lo + (1.0 - lo) * (0.05 + 0.9 * x);
        let q1 = pick(s * s, u[0]);
        let q2 = pick(s * s / q1, u[1]);
        let q1t = pick(st * st, u[2]);
        let q2t = pick(st * st / q1t, u[3]);
        MeasurementSchedule::from_q(q1, q2, q1t, q2t, s, st).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn locc_formula_equals_trace(p in ensemble(), x in proptest::array::uniform4(0.0f64..=1.0)) {
            let a = optimal_for(p.s, p.s_tilde, x[0], x[1]);
            let b = optimal_for(p.s_prime, p.s_tilde_prime, x[2], x[3]);
            let f = run_locc(&p, &a, &b).unwrap();
            let t = locc_trace(&p, &a, &b).unwrap();
            prop_assert!(f.max_difference(&t) < 1e-10);
            prop_assert!(close(f.total_fail, f.p_a_fail.unwrap() * f.p_b_fail.unwrap(), 1e-12));
            let direct = weighted(&p, |i| { let (qa, qat) = a.q(i); let (qb, qbt) = b.q(i); (qa * qb, qat * qbt) });
            prop_assert!(close(f.total_fail, direct, 1e-12));
            let g = run_global(&p, &a.product(&b)).unwrap();
            prop_assert!(close(g.total_success, f.total_success, 1e-12));
            prop_assert!(close(global_trace(&p, &a.product(&b)).unwrap().total_success, g.total_success, 1e-10));
        }

        #[test]
        fn ssd_formula_equals_trace_and_theorem2(p in ensemble(), u in proptest::array::uniform4(0.0f64..=1.0), x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            let a = nonoptimal_for(p.s, p.s_tilde, u);
            let c = optimal_for(a.t, a.t_tilde, x, y);
            let f = run_ssd(&p, &a, &c).unwrap();
            let t = ssd_trace(&p, &a, &c).unwrap();
            prop_assert!(f.max_difference(&t) < 1e-10);
            // Bob's overlaps set to Charlie's so the same schedule is valid for him
            let q = EnsembleParams { s_prime: a.t, s_tilde_prime: a.t_tilde, ..p };
            let l = run_locc(&q, &a, &c).unwrap();
            prop_assert!(close(f.at_least_one.unwrap(), l.total_success, 1e-12));
        }

        #[test]
        fn pure_local_equals_mixed(p in ensemble(), r1 in 0.05f64..0.95, r2 in 0.05f64..0.95, x in proptest::array::uniform4(0.0f64..=1.0)) {
            let p = EnsembleParams { r1, r2, ..p };
            let a = optimal_for(p.s, p.s_tilde, x[0], x[1]);
            let b = optimal_for(p.s_prime, p.s_tilde_prime, x[2], x[3]);
            let pure = pure_local_trace(&p, &a, &b).unwrap();
            let mixed = locc_trace(&p, &a, &b).unwrap();
            prop_assert!(close(pure.total_fail, mixed.total_fail, 1e-12));
            prop_assert!(pure.fidelity_condition == Some(true));
            prop_assert!(run_pure_local(&p, &a, &b).unwrap().max_difference(&pure) < 1e-10);
        }

        #[test]
        fn ssd_hybrid_formula_equals_trace(p1 in 0.1f64..0.9, s in 0.1f64..0.9, sp in 0.1f64..0.9,
                                           u in proptest::array::uniform4(0.0f64..=1.0),
                                           v in proptest::array::uniform4(0.0f64..=1.0),
                                           w in proptest::array::uniform4(0.0f64..=1.0)) {
            let p = EnsembleParams::new(p1, 1.0, 1.0, s, 0.5, sp, 0.5);
            let stage = |s: f64, st: f64, u: [f64; 4]| {
                let first = nonoptimal_for(s, st, u);
                let second = optimal_for(first.t, first.t_tilde, u[2], u[3]);
                SsdStage { first, second }
            };
            let l1 = stage(p.s, p.s_tilde, u);
            let l2 = stage(p.s_prime, p.s_tilde_prime, v);
            let g = stage(p.s0(), p.s0_tilde(), w);
            let f = run_ssd_hybrid(&p, &l1, &l2, &g).unwrap();
            let t = ssd_hybrid_trace(&p, &l1, &l2, &g).unwrap();
            prop_assert!(f.max_difference(&t) < 1e-10, "{:?}\n{:?}", f, t);
        }

        #[test]
        fn hybrid_deltas_match_closed_forms(s in 0.01f64..0.99, sp in 0.01f64..0.99) {
            let p = EnsembleParams::pure_product(s, sp);
            let re = run_reproduce(&p).unwrap();
            prop_assert!(close(re.delta.unwrap(), re.delta_closed_form.unwrap(), 1e-12));
            prop_assert!(re.delta.unwrap() > 0.0);
            let br = run_broadcast(&p).unwrap();
            prop_assert!(close(br.delta.unwrap(), br.delta_closed_form.unwrap(), 1e-12));
            prop_assert!(br.delta.unwrap() > 0.0);
        }
    }
}
