//! Seeded sampling of measurement records.
//!
//! An [`Experiment`] is a prior over the two states followed by a fixed
//! number of three-outcome draws. Draws come in segments; each segment starts
//! from a fresh copy of the prepared state and chains Kraus operators, an
//! optional terminal POVM, or draws with fixed per-state probabilities (used
//! for re-prepared copies and for the broadcasting step). The conditional
//! outcome probabilities of every record prefix are computed once, exactly,
//! from the trace rule; trials then walk this tree with inverse-CDF draws.
//!
//! RNG layout: trial `k` belongs to shard `k / SHARD_TRIALS`; shard `j` uses
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `j`, and every trial consumes
//! exactly `depth + 1` uniforms (state first, then one per draw). Counts are
//! additive, so the merge does not depend on thread scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closedform::{ssd_delta, SsdRegion, SSD_THRESHOLD};
use crate::ensembles::{build_mixed_pair, build_pure_pair, EnsembleParams};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::measurements::{
    alice_kraus, bob_povm, charlie_povm, local_measurement, post_measure, Bipartite, KrausSet, Placement, PovmSet,
};
use crate::protocols::{
    combined_basis, hybrid_stage_povms, require_nonoptimal, targets_after, whole_measurement, ProtocolKind,
    ProtocolReport, ProtocolSetup,
};
use crate::quantum::QuantumOperator;

pub const SHARD_TRIALS: u64 = 1 << 16;
/// Longest record an experiment may have (`3^depth` leaves per state).
pub const MAX_DEPTH: usize = 10;

/// One three-outcome draw.
#[derive(Debug, Clone, Copy)]
pub enum Draw<'a> {
    /// Apply `K_k` to the running state.
    Kraus(&'a KrausSet),
    /// Measure the running state; it is not used afterwards.
    Povm(&'a PovmSet),
    /// Outcome probabilities per prepared state, independent of the record.
    Fixed([[f64; 3]; 2]),
}

/// Prior plus the exact conditional outcome distribution at every node.
#[derive(Debug, Clone)]
pub struct Experiment {
    priors: [f64; 2],
    depth: usize,
    /// `nodes[i][id]`, with prefixes of length `d` stored from
    /// `(3^d − 1)/2` in base-3 order.
    nodes: [Vec<[f64; 3]>; 2],
}

fn node_offset(d: usize) -> usize {
    (3usize.pow(d as u32) - 1) / 2
}

impl Experiment {
    pub fn new(priors: [f64; 2], states: [&QuantumOperator; 2], segments: &[Vec<Draw<'_>>]) -> Result<Self> {
        if priors.iter().any(|p| !(0.0..=1.0).contains(p)) || (priors[0] + priors[1] - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!("priors {priors:?} must be a distribution")));
        }
        let draws: Vec<(usize, Draw<'_>)> = segments
            .iter()
            .enumerate()
            .flat_map(|(g, seg)| seg.iter().map(move |d| (g, *d)))
            .collect();
        let depth = draws.len();
        if depth == 0 || depth > MAX_DEPTH {
            return Err(Error::validation(format!("an experiment needs 1..={MAX_DEPTH} draws, got {depth}")));
        }
        for seg in segments {
            if let Some(pos) = seg.iter().position(|d| matches!(d, Draw::Povm(_))) {
                if seg[pos + 1..].iter().any(|d| !matches!(d, Draw::Fixed(_))) {
                    return Err(Error::Contract(
                        "within a segment a POVM may only be followed by fixed draws".into(),
                    ));
                }
            }
        }
        let mut nodes = [Vec::new(), Vec::new()];
        for i in 0..2 {
            let mut out = vec![[0.0; 3]; node_offset(depth)];
            let root = states[i].matrix().clone();
            build(&draws, i, &root, Some(root.clone()), 0, 0, &mut out)?;
            nodes[i] = out;
        }
        Ok(Self { priors, depth, nodes })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    fn conditional(&self, i: usize, prefix: &[usize]) -> [f64; 3] {
        let code = prefix.iter().fold(0, |c, &k| 3 * c + k);
        self.nodes[i][node_offset(prefix.len()) + code]
    }

    /// Exact probability of state `i` followed by `pattern`.
    pub fn probability(&self, i: usize, pattern: &[usize]) -> f64 {
        let mut p = self.priors[i];
        for d in 0..pattern.len() {
            p *= self.conditional(i, &pattern[..d])[pattern[d]];
        }
        p
    }

    /// Counts indexed by `i · 3^depth + code(pattern)`.
    pub fn sample(&self, n: u64, seed: u64) -> Result<Vec<u64>> {
        if n == 0 {
            return Err(Error::validation("n must be at least 1"));
        }
        let leaves = 3usize.pow(self.depth as u32);
        let shards = n.div_ceil(SHARD_TRIALS);
        let counts = (0..shards)
            .into_par_iter()
            .map(|shard| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(shard);
                let trials = SHARD_TRIALS.min(n - shard * SHARD_TRIALS);
                let mut counts = vec![0u64; 2 * leaves];
                let mut u = vec![0.0f64; self.depth + 1];
                for _ in 0..trials {
                    u.iter_mut().for_each(|x| *x = rng.gen::<f64>());
                    let i = usize::from(u[0] >= self.priors[0]);
                    let mut code = 0;
                    for d in 0..self.depth {
                        let probs = self.nodes[i][node_offset(d) + code];
                        code = 3 * code + pick(&probs, u[d + 1]);
                    }
                    counts[i * leaves + code] += 1;
                }
                counts
            })
            .reduce(
                || vec![0u64; 2 * leaves],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        Ok(counts)
    }

    /// `(state, pattern)` of a count index.
    pub fn decode(&self, index: usize) -> (usize, Vec<usize>) {
        let leaves = 3usize.pow(self.depth as u32);
        let (i, mut code) = (index / leaves, index % leaves);
        let mut pattern = vec![0; self.depth];
        for slot in pattern.iter_mut().rev() {
            *slot = code % 3;
            code /= 3;
        }
        (i, pattern)
    }
}

fn pick(probs: &[f64; 3], u: f64) -> usize {
    let total: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p.max(0.0);
        if u * total < acc {
            return k;
        }
    }
    // u·total can only reach the last cumulative value through rounding.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Fills the conditional distributions below one prefix. `running` is the
/// unnormalized state of the current segment (`None` once measured).
fn build(
    draws: &[(usize, Draw<'_>)],
    i: usize,
    root: &ComplexMatrix,
    running: Option<ComplexMatrix>,
    d: usize,
    code: usize,
    out: &mut Vec<[f64; 3]>,
) -> Result<()> {
    if d == draws.len() {
        return Ok(());
    }
    let (segment, draw) = draws[d];
    let running = if d > 0 && draws[d - 1].0 != segment {
        Some(root.clone())
    } else {
        running
    };
    let mut children: [Option<ComplexMatrix>; 3] = [None, None, None];
    let probs = match draw {
        Draw::Fixed(p) => {
            children = [running.clone(), running.clone(), running.clone()];
            p[i]
        }
        Draw::Kraus(set) => {
            let rho = running.ok_or_else(|| Error::Contract("Kraus draw after a terminal POVM".into()))?;
            let norm = rho.trace().re;
            let mut p = [0.0; 3];
            for k in 0..3 {
                let kl = set.lifted(k);
                check_dim(kl.rows(), rho.rows())?;
                let next = &(&kl * &rho) * &kl.adjoint();
                p[k] = if norm > 0.0 { next.trace().re / norm } else { 0.0 };
                children[k] = Some(next);
            }
            p
        }
        Draw::Povm(set) => {
            let rho = running.ok_or_else(|| Error::Contract("POVM draw after a terminal POVM".into()))?;
            let norm = rho.trace().re;
            let mut p = [0.0; 3];
            for (k, slot) in p.iter_mut().enumerate() {
                let m = set.lifted(k);
                check_dim(m.rows(), rho.rows())?;
                *slot = if norm > 0.0 { (&rho * &m).trace().re / norm } else { 0.0 };
            }
            p
        }
    };
    out[node_offset(d) + code] = probs;
    for (k, child) in children.into_iter().enumerate() {
        build(draws, i, root, child, d + 1, 3 * code + k, out)?;
    }
    Ok(())
}

fn check_dim(op: usize, state: usize) -> Result<()> {
    if op != state {
        return Err(Error::Dimension(format!("operator of dimension {op} on a state of dimension {state}")));
    }
    Ok(())
}

/// Sampled frequency of an event next to its analytic value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub event: String,
    pub count: u64,
    pub probability: f64,
    /// `√(p̂(1 − p̂)/n)`.
    pub std_error: f64,
    pub analytic: f64,
}

impl Estimate {
    /// `|p̂ − p| ≤ sigmas·√(p(1 − p)/n) + 1e-9`, with `p` the analytic value.
    pub fn within(&self, sigmas: f64, n: u64) -> bool {
        let p = self.analytic.clamp(0.0, 1.0);
        (self.probability - self.analytic).abs() <= sigmas * (p * (1.0 - p) / n as f64).sqrt() + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub protocol: ProtocolKind,
    pub n_samples: u64,
    pub seed: u64,
    /// Non-zero counts keyed `"<state>:<outcomes>"`, e.g. `"1:02"`.
    pub counts: BTreeMap<String, u64>,
    pub estimates: Vec<Estimate>,
}

impl SampleReport {
    pub fn all_within(&self, sigmas: f64) -> bool {
        self.estimates.iter().all(|e| e.within(sigmas, self.n_samples))
    }

    pub fn estimate(&self, event: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.event == event)
    }

    /// Per-pattern counts as CSV: `state,pattern,count,frequency`.
    pub fn counts_csv(&self) -> String {
        let mut out = String::from("state,pattern,count,frequency\n");
        for (key, count) in &self.counts {
            let (state, pattern) = key.split_once(':').unwrap_or((key, ""));
            let _ = writeln!(out, "{state},{pattern},{count},{}", *count as f64 / self.n_samples as f64);
        }
        out
    }
}

pub fn pattern_key(i: usize, pattern: &[usize]) -> String {
    let mut key = format!("{}:", i + 1);
    for k in pattern {
        key.push(char::from(b'0' + *k as u8));
    }
    key
}

type Event = (&'static str, Box<dyn Fn(usize, &[usize]) -> bool>, f64);

fn hit(i: usize, k: usize) -> bool {
    k == i + 1
}

fn wrong(i: usize, k: usize) -> bool {
    k != 0 && k != i + 1
}

/// Samples `n` runs of a protocol and compares event frequencies with the
/// formula path.
pub fn sample_protocol(params: &EnsembleParams, setup: &ProtocolSetup, n: u64, seed: u64) -> Result<SampleReport> {
    let analytic = setup.run(params)?;
    let (experiment, events) = protocol_experiment(params, setup, &analytic)?;
    let counts = experiment.sample(n, seed)?;
    Ok(report(setup.kind(), &experiment, &counts, events, n, seed))
}

fn report(
    protocol: ProtocolKind,
    experiment: &Experiment,
    counts: &[u64],
    events: Vec<Event>,
    n: u64,
    seed: u64,
) -> SampleReport {
    let mut keyed = BTreeMap::new();
    let mut hits = vec![0u64; events.len()];
    for (index, &c) in counts.iter().enumerate().filter(|(_, c)| **c > 0) {
        let (i, pattern) = experiment.decode(index);
        for (e, (_, pred, _)) in events.iter().enumerate() {
            if pred(i, &pattern) {
                hits[e] += c;
            }
        }
        keyed.insert(pattern_key(i, &pattern), c);
    }
    let estimates = events
        .iter()
        .zip(hits)
        .map(|((name, _, analytic), count)| {
            let p = count as f64 / n as f64;
            Estimate {
                event: name.to_string(),
                count,
                probability: p,
                std_error: (p * (1.0 - p) / n as f64).sqrt(),
                analytic: *analytic,
            }
        })
        .collect();
    SampleReport {
        protocol,
        n_samples: n,
        seed,
        counts: keyed,
        estimates,
    }
}

fn missing(name: &str) -> Error {
    Error::Contract(format!("formula report lacks `{name}`"))
}

fn two_step_events(analytic: &ProtocolReport) -> Result<Vec<Event>> {
    Ok(vec![
        ("total_success", Box::new(|_, p: &[usize]| p[0] != 0 || p[1] != 0), analytic.total_success),
        (
            "first_success",
            Box::new(|_, p: &[usize]| p[0] != 0),
            analytic.p_a_success.ok_or_else(|| missing("p_a_success"))?,
        ),
        (
            "misidentified",
            Box::new(|i, p: &[usize]| wrong(i, if p[0] != 0 { p[0] } else { p[1] })),
            0.0,
        ),
    ])
}

fn povm_probs(states: [&QuantumOperator; 2], povm: &PovmSet) -> [[f64; 3]; 2] {
    let mut out = [[0.0; 3]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = povm.probability(states[i], k);
        }
    }
    out
}

fn bernoulli(p: f64) -> [[f64; 3]; 2] {
    [[1.0 - p, p, 0.0]; 2]
}

fn protocol_experiment(
    params: &EnsembleParams,
    setup: &ProtocolSetup,
    analytic: &ProtocolReport,
) -> Result<(Experiment, Vec<Event>)> {
    let priors = params.priors();
    match setup {
        ProtocolSetup::Locc { alice, bob } => {
            let ens = build_mixed_pair(params)?;
            let kraus = alice_kraus(&ens, alice)?;
            let bob = bob_povm(&post_measure(&ens, alice)?, bob)?;
            let exp = Experiment::new(priors, ens.states(), &[vec![Draw::Kraus(&kraus), Draw::Povm(&bob)]])?;
            Ok((exp, two_step_events(analytic)?))
        }
        ProtocolSetup::PureLocal { alice, bob } => {
            let pair = build_pure_pair(params)?;
            let kraus = alice_kraus(&pair, alice)?;
            let bob = bob_povm(&post_measure(&pair, alice)?, bob)?;
            let exp = Experiment::new(priors, pair.states(), &[vec![Draw::Kraus(&kraus), Draw::Povm(&bob)]])?;
            Ok((exp, two_step_events(analytic)?))
        }
        ProtocolSetup::Global { global } => {
            let ens = build_mixed_pair(params)?;
            let basis = combined_basis(&ens.alice, &ens.bob);
            let (povm, _) = whole_measurement(&ens, &basis, global)?;
            let exp = Experiment::new(priors, ens.states(), &[vec![Draw::Povm(&povm)]])?;
            let events: Vec<Event> = vec![
                ("total_success", Box::new(|_, p: &[usize]| p[0] != 0), analytic.total_success),
                ("misidentified", Box::new(|i, p: &[usize]| wrong(i, p[0])), 0.0),
            ];
            Ok((exp, events))
        }
        ProtocolSetup::Ssd { alice, charlie } => {
            require_nonoptimal(alice)?;
            let ens = build_mixed_pair(params)?;
            let kraus = alice_kraus(&ens, alice)?;
            let charlie = charlie_povm(&post_measure(&ens, alice)?, charlie)?;
            let exp = Experiment::new(priors, ens.states(), &[vec![Draw::Kraus(&kraus), Draw::Povm(&charlie)]])?;
            let events: Vec<Event> = vec![
                (
                    "joint_success",
                    Box::new(|i, p: &[usize]| hit(i, p[0]) && hit(i, p[1])),
                    analytic.joint_success.ok_or_else(|| missing("joint_success"))?,
                ),
                (
                    "at_least_one",
                    Box::new(|_, p: &[usize]| p[0] != 0 || p[1] != 0),
                    analytic.at_least_one.ok_or_else(|| missing("at_least_one"))?,
                ),
                (
                    "first_success",
                    Box::new(|_, p: &[usize]| p[0] != 0),
                    analytic.p_a_success.ok_or_else(|| missing("p_a_success"))?,
                ),
                (
                    "second_success",
                    Box::new(|_, p: &[usize]| p[1] != 0),
                    analytic.p_b_success.ok_or_else(|| missing("p_b_success"))?,
                ),
                ("misidentified", Box::new(|i, p: &[usize]| wrong(i, p[0]) || wrong(i, p[1])), 0.0),
            ];
            Ok((exp, events))
        }
        ProtocolSetup::Reproduce | ProtocolSetup::Broadcast => {
            let (ens, a, b, g) = hybrid_stage_povms(params)?;
            let states = ens.states();
            let (pa, pb, pg) = (povm_probs(states, &a), povm_probs(states, &b), povm_probs(states, &g));
            let broadcast = matches!(setup, ProtocolSetup::Broadcast);
            let (s, sp) = (params.s, params.s_prime);
            let mut local1 = vec![Draw::Fixed(pa), Draw::Fixed(pa)];
            let mut local2 = vec![Draw::Fixed(pb), Draw::Fixed(pb)];
            let mut global = vec![Draw::Fixed(pg), Draw::Fixed(pg)];
            if broadcast {
                local1.insert(0, Draw::Fixed(bernoulli(1.0 / (1.0 + s))));
                local2.insert(0, Draw::Fixed(bernoulli(1.0 / (1.0 + sp))));
                global.insert(0, Draw::Fixed(bernoulli(1.0 / (1.0 + s * sp))));
            }
            let w = local1.len();
            let exp = Experiment::new(params.priors(), states, &[local1, local2, global])?;
            // Within a stage of width w: [gate], first, second.
            let stage = move |i: usize, p: &[usize]| p[w - 2..w].iter().all(|&k| hit(i, k)) && p[0] != 0;
            let events: Vec<Event> = vec![
                (
                    "local_success",
                    Box::new(move |i, p: &[usize]| stage(i, &p[..w]) || stage(i, &p[w..2 * w])),
                    analytic.total_success,
                ),
                (
                    "first_stage_success",
                    Box::new(move |i, p: &[usize]| stage(i, &p[..w])),
                    analytic.p_a_success.ok_or_else(|| missing("p_a_success"))?,
                ),
                (
                    "global_success",
                    Box::new(move |i, p: &[usize]| stage(i, &p[2 * w..])),
                    analytic.global_success.ok_or_else(|| missing("global_success"))?,
                ),
            ];
            Ok((exp, events))
        }
        ProtocolSetup::SsdHybrid { first, second, global } => {
            let ens = build_mixed_pair(params)?;
            require_nonoptimal(&first.first)?;
            require_nonoptimal(&second.first)?;
            require_nonoptimal(&global.first)?;
            let on_a = Placement::First { other_dim: ens.bob.dim() };
            let on_b = Placement::Second { first_dim: ens.alice.dim() };
            let targets = || ens.owned_targets();
            let (_, ka) = local_measurement(&ens.alice, &first.first, on_a, targets())?;
            let (_, kc) = local_measurement(&ka.post_basis, &first.second, on_a, targets_after(&ens, &ka)?)?;
            let (_, kb) = local_measurement(&ens.bob, &second.first, on_b, targets())?;
            let (pd, _) = local_measurement(&kb.post_basis, &second.second, on_b, targets_after(&ens, &kb)?)?;
            let basis = combined_basis(&ens.alice, &ens.bob);
            let (_, kg) = local_measurement(&basis, &global.first, Placement::Whole, targets())?;
            let (pg, _) =
                local_measurement(&kg.post_basis, &global.second, Placement::Whole, targets_after(&ens, &kg)?)?;
            let exp = Experiment::new(
                priors,
                ens.states(),
                &[
                    vec![Draw::Kraus(&ka), Draw::Kraus(&kc), Draw::Kraus(&kb), Draw::Povm(&pd)],
                    vec![Draw::Kraus(&kg), Draw::Povm(&pg)],
                ],
            )?;
            let pair = |i: usize, p: &[usize]| hit(i, p[0]) && hit(i, p[1]);
            let events: Vec<Event> = vec![
                (
                    "local_success",
                    Box::new(move |i, p: &[usize]| pair(i, &p[0..2]) || pair(i, &p[2..4])),
                    analytic.total_success,
                ),
                (
                    "first_stage_success",
                    Box::new(move |i, p: &[usize]| pair(i, &p[0..2])),
                    analytic.p_a_success.ok_or_else(|| missing("p_a_success"))?,
                ),
                (
                    "global_success",
                    Box::new(move |i, p: &[usize]| pair(i, &p[4..6])),
                    analytic.global_success.ok_or_else(|| missing("global_success"))?,
                ),
            ];
            Ok((exp, events))
        }
    }
}

/// Sampling region for the search over the sequential-hybrid region where
/// the local optimum has no closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseIiiSpec {
    /// Box the candidates are drawn from, uniformly; candidates are kept
    /// only when classified into the region.
    pub s_range: (f64, f64),
    pub s_prime_range: (f64, f64),
    /// Candidates drawn without a single hit before giving up.
    pub give_up_after: u64,
}

impl Default for CaseIiiSpec {
    fn default() -> Self {
        Self {
            s_range: (SSD_THRESHOLD, 1.0),
            s_prime_range: (0.0, SSD_THRESHOLD),
            give_up_after: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseIiiReport {
    pub n_points: u64,
    pub seed: u64,
    pub candidates: u64,
    pub min_delta: f64,
    pub argmin: (f64, f64),
    pub all_positive: bool,
}

const CANDIDATE_BATCH: u64 = 1 << 12;

/// Draws `n_points` uniform points of the region `s > 3−2√2`, `s′ ≤ s_c`,
/// `ss′ ≤ 3−2√2` (by rejection from `spec`'s box) and reports the smallest
/// global-minus-local gap found.
pub fn sample_appendix_c_case_iii(spec: &CaseIiiSpec, n_points: u64, seed: u64) -> Result<CaseIiiReport> {
    if n_points == 0 {
        return Err(Error::validation("n_points must be at least 1"));
    }
    let ((s_lo, s_hi), (t_lo, t_hi)) = (spec.s_range, spec.s_prime_range);
    if !(s_lo <= s_hi && t_lo <= t_hi && s_lo >= 0.0 && s_hi <= 1.0 && t_lo >= 0.0 && t_hi <= 1.0) {
        return Err(Error::validation(format!("invalid sampling box {spec:?}")));
    }
    let mut accepted = 0u64;
    let mut candidates = 0u64;
    let mut best = (f64::INFINITY, (f64::NAN, f64::NAN));
    let mut batch = 0u64;
    while accepted < n_points {
        // Streams are consumed in order, so grouping them into rounds does
        // not change the result.
        let parallel_batches = (n_points - accepted).div_ceil(CANDIDATE_BATCH).clamp(1, 16);
        if accepted == 0 && candidates >= spec.give_up_after {
            return Err(Error::EmptyFeasibleSet(format!(
                "no point of the region among {candidates} candidates drawn from {spec:?}"
            )));
        }
        let results: Vec<Vec<Option<(f64, f64, f64)>>> = (batch..batch + parallel_batches)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(b);
                (0..CANDIDATE_BATCH)
                    .map(|_| {
                        let s = s_lo + (s_hi - s_lo) * rng.gen::<f64>();
                        let sp = t_lo + (t_hi - t_lo) * rng.gen::<f64>();
                        let inside = s > SSD_THRESHOLD && s < 1.0 && sp > 0.0 && sp < 1.0;
                        if !inside || s * sp > SSD_THRESHOLD {
                            return None;
                        }
                        match ssd_delta(s, sp) {
                            Ok(d) if d.region == SsdRegion::AsymIii => Some((s, sp, d.delta)),
                            _ => None,
                        }
                    })
                    .collect()
            })
            .collect();
        batch += parallel_batches;
        for hit in results.into_iter().flatten() {
            if accepted >= n_points {
                break;
            }
            candidates += 1;
            if let Some((s, sp, delta)) = hit {
                accepted += 1;
                if delta < best.0 {
                    best = (delta, (s, sp));
                }
            }
        }
    }
    Ok(CaseIiiReport {
        n_points,
        seed,
        candidates,
        min_delta: best.0,
        argmin: best.1,
        all_positive: best.0 > 0.0,
    })
}
