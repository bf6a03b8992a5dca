//! Markovian coupling of two embedded chains started one job apart.
//!
//! Both sides read one shared event stream. The upper side moves exactly as
//! the embedded chain. The lower side copies the upper move whenever the
//! served classes at the event's station agree, and freezes otherwise.
//! While uncoupled, the upper side holds one extra job whose class is the
//! mark; the mark drops to 0 when that job leaves the network, after which
//! the two sides coincide forever.

use indexmap::IndexMap;
use serde::Serialize;

use crate::allocation::{served_class, ServiceAllocation};
use crate::config::{is_subconfig, ClassId, QueueConfig, QueuePolicy};
use crate::error::{Error, Result};
use crate::exact::exact_step_distribution;
use crate::network::NetworkSpec;
use crate::qprocess::{apply_in_place, departure_branches, kernel_row, Event, EventAlphabet, Sampler};
use crate::rng::RandomStream;
use crate::state::{NetworkState, TransitionLabel};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct CoupledState {
    pub lower: NetworkState,
    pub upper: NetworkState,
    /// Class of the extra upper job; 0 once coupled.
    pub mark: u16,
    pub frozen_count: u64,
    pub lower_departures: u64,
    pub upper_departures: u64,
}

impl CoupledState {
    /// Starts a pair that is equal or exactly one job apart.
    pub fn new(lower: NetworkState, upper: NetworkState) -> Result<Self> {
        let mark = extra_class(&lower, &upper)?;
        Ok(CoupledState { lower, upper, mark, frozen_count: 0, lower_departures: 0, upper_departures: 0 })
    }

    pub fn is_coupled(&self) -> bool {
        self.mark == 0
    }
}

/// Which branch of the coupling a step took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CouplingCase {
    /// Arrival: both sides insert the same job.
    Arrival,
    /// Departure event at a station not holding the extra job.
    OtherStation,
    /// Departure event at the extra job's station, served classes agree.
    SameServed,
    /// Served classes differ: the lower side freezes.
    Frozen,
}

/// Class of the single job `upper` holds beyond `lower`, 0 if equal.
fn extra_class(lower: &NetworkState, upper: &NetworkState) -> Result<u16> {
    if !lower.is_subconfig_of(upper) {
        return Err(Error::NotSubconfiguration);
    }
    match upper.norm() as i64 - lower.norm() as i64 {
        0 => Ok(0),
        1 => {
            let classes = upper.queues().iter().flat_map(|q| q.digits()).map(|k| k.0 as usize).max().unwrap_or(0);
            let (lo, up) = (lower.class_counts(classes), upper.class_counts(classes));
            let k = (0..classes).find(|&k| up[k] > lo[k]).expect("one extra job");
            Ok(k as u16 + 1)
        }
        _ => Err(Error::InvalidArgument("pair is more than one job apart".into())),
    }
}

/// Every multi-class station must serve one class at a time and insert
/// order-preservingly (FCFS or SBP).
pub fn check_coupling_regime(spec: &NetworkSpec) -> Result<()> {
    for (i, st) in spec.stations().iter().enumerate() {
        if st.classes.len() <= 1 {
            continue;
        }
        let alloc_ok =
            matches!(st.protocol.allocation, ServiceAllocation::HeadOfQueue | ServiceAllocation::Preferential(_));
        let policy_ok = matches!(st.protocol.policy, QueuePolicy::Fcfs | QueuePolicy::Sbp(_));
        if !(alloc_ok && policy_ok) {
            return Err(Error::CouplingPrecondition { station: i + 1 });
        }
    }
    Ok(())
}

fn served(spec: &NetworkSpec, i: usize, q: &QueueConfig) -> Option<ClassId> {
    if spec.stations()[i].classes.len() == 1 {
        return q.digits().first().copied();
    }
    served_class(&spec.stations()[i].protocol.allocation, q)
}

/// Advances the pair given the shared event and the upper side's outcome
/// (`None` is a self-loop).
fn advance(
    spec: &NetworkSpec,
    cs: &mut CoupledState,
    event: Event,
    upper_fired: Option<TransitionLabel>,
) -> CouplingCase {
    match event {
        Event::Arrival(k) => {
            let t = TransitionLabel::arrival(k);
            apply_in_place(spec, &mut cs.upper, t);
            apply_in_place(spec, &mut cs.lower, t);
            CouplingCase::Arrival
        }
        Event::Departure(i) => {
            let agree = served(spec, i, cs.lower.queue(i)) == served(spec, i, cs.upper.queue(i));
            if agree {
                if let Some(t) = upper_fired {
                    apply_in_place(spec, &mut cs.upper, t);
                    apply_in_place(spec, &mut cs.lower, t);
                    if t.to == 0 {
                        cs.upper_departures += 1;
                        cs.lower_departures += 1;
                    }
                }
                if cs.mark != 0 && spec.station_of(ClassId(cs.mark)) == i {
                    CouplingCase::SameServed
                } else {
                    CouplingCase::OtherStation
                }
            } else {
                cs.frozen_count += 1;
                if let Some(t) = upper_fired {
                    apply_in_place(spec, &mut cs.upper, t);
                    if t.to == 0 {
                        cs.upper_departures += 1;
                    }
                    cs.mark = t.to;
                }
                CouplingCase::Frozen
            }
        }
    }
}

/// Pair-chain sampler sharing the event alphabet of the upper chain.
pub struct CouplingSampler<'a> {
    sampler: Sampler<'a>,
}

impl<'a> CouplingSampler<'a> {
    pub fn new(spec: &'a NetworkSpec) -> Result<Self> {
        check_coupling_regime(spec)?;
        Ok(CouplingSampler { sampler: Sampler::new(spec) })
    }

    pub fn step(&self, cs: &mut CoupledState, rng: &mut RandomStream) -> CouplingCase {
        let event = self.sampler.alphabet().sample(rng);
        let fired = match event {
            Event::Arrival(k) => Some(TransitionLabel::arrival(k)),
            Event::Departure(i) => self.sampler.draw_departure(&cs.upper, i, rng),
        };
        advance(self.sampler.spec(), cs, event, fired)
    }
}

pub fn coupled_step(
    spec: &NetworkSpec,
    cs: &CoupledState,
    rng: &mut RandomStream,
) -> Result<(CoupledState, CouplingCase)> {
    let sampler = CouplingSampler::new(spec)?;
    let mut next = cs.clone();
    let case = sampler.step(&mut next, rng);
    Ok((next, case))
}

/// An instrumented run of one adjacent pair.
#[derive(Debug, Clone, Serialize)]
pub struct CoupledPath {
    /// `steps + 1` states.
    pub states: Vec<CoupledState>,
    /// `cases[m]` is the branch taken from `states[m]` to `states[m + 1]`.
    pub cases: Vec<CouplingCase>,
    /// First index with mark 0; `None` if not coupled within the run.
    pub tau: Option<usize>,
}

impl CoupledPath {
    pub fn steps(&self) -> usize {
        self.cases.len()
    }

    pub fn last(&self) -> &CoupledState {
        self.states.last().expect("nonempty path")
    }
}

/// Runs of the adjacent pairs bridging lower to upper.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingRun {
    pub legs: Vec<CoupledPath>,
}

impl CouplingRun {
    /// Coupling time of the whole chain: the latest leg's, `None` if any
    /// leg is censored.
    pub fn tau(&self) -> Option<usize> {
        self.legs.iter().try_fold(0, |acc, leg| leg.tau.map(|t| acc.max(t)))
    }
}

/// Intermediate states ξ = ξ_0 ⊆ ξ_1 ⊆ … ⊆ ξ_m = ζ, consecutive ones
/// exactly one job apart. Extra jobs are added in station order, front to
/// back.
pub fn adjacent_chain(lower: &NetworkState, upper: &NetworkState) -> Result<Vec<NetworkState>> {
    if !lower.is_subconfig_of(upper) {
        return Err(Error::NotSubconfiguration);
    }
    // Greedy embedding per station; unmatched upper positions are extras.
    let mut extras: Vec<(usize, usize)> = Vec::new();
    let mut matched: Vec<Vec<bool>> = Vec::new();
    for (i, (p, q)) in lower.queues().iter().zip(upper.queues()).enumerate() {
        let mut used = vec![false; q.len()];
        let mut j = 0;
        for d in p.digits() {
            while q.digits()[j] != *d {
                j += 1;
            }
            used[j] = true;
            j += 1;
        }
        extras.extend(used.iter().enumerate().filter(|(_, &u)| !u).map(|(pos, _)| (i, pos)));
        matched.push(used);
    }
    let mut chain = Vec::with_capacity(extras.len() + 1);
    for added in 0..=extras.len() {
        let mut keep = matched.clone();
        for &(i, pos) in &extras[..added] {
            keep[i][pos] = true;
        }
        let queues = upper
            .queues()
            .iter()
            .zip(&keep)
            .map(|(q, k)| QueueConfig::from_classes(q.digits().iter().zip(k).filter(|(_, &k)| k).map(|(d, _)| d.0)))
            .collect();
        chain.push(NetworkState::from_queues(queues));
    }
    Ok(chain)
}

fn run_leg(sampler: &CouplingSampler<'_>, start: CoupledState, n: usize, rng: &mut RandomStream) -> CoupledPath {
    let mut states = Vec::with_capacity(n + 1);
    let mut cases = Vec::with_capacity(n);
    let mut tau = start.is_coupled().then_some(0);
    let mut cur = start;
    states.push(cur.clone());
    for m in 1..=n {
        cases.push(sampler.step(&mut cur, rng));
        if tau.is_none() && cur.is_coupled() {
            tau = Some(m);
        }
        states.push(cur.clone());
    }
    CoupledPath { states, cases, tau }
}

/// Couples the chains started at `lower ⊆ upper` for `n` steps. Pairs
/// further apart are bridged by adjacent pairs, each run in turn on the
/// same stream.
pub fn run_coupling(
    spec: &NetworkSpec,
    lower: &NetworkState,
    upper: &NetworkState,
    n: usize,
    rng: &mut RandomStream,
) -> Result<CouplingRun> {
    lower.check(spec)?;
    upper.check(spec)?;
    let sampler = CouplingSampler::new(spec)?;
    let chain = adjacent_chain(lower, upper)?;
    let legs = if chain.len() == 1 {
        vec![run_leg(&sampler, CoupledState::new(lower.clone(), upper.clone())?, n, rng)]
    } else {
        chain
            .windows(2)
            .map(|w| Ok(run_leg(&sampler, CoupledState::new(w[0].clone(), w[1].clone())?, n, rng)))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(CouplingRun { legs })
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct InvariantCheck {
    pub name: &'static str,
    /// Path indices at which the check failed.
    pub failures: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantReport {
    pub steps: usize,
    pub tau: Option<usize>,
    pub checks: Vec<InvariantCheck>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.failures.is_empty())
    }

    pub fn violations(&self) -> usize {
        self.checks.iter().map(|c| c.failures.len()).sum()
    }

    pub fn check(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Re-derives the coupling invariants from the recorded states alone:
/// membership of every pair in the set its mark names, absorption of the
/// coupled set, the departure-count relation around τ, and monotone
/// counters. τ is recomputed as the first index with equal sides.
pub fn verify_coupling_path(path: &CoupledPath) -> InvariantReport {
    let mut membership = InvariantCheck { name: "membership", ..Default::default() };
    let mut absorption = InvariantCheck { name: "absorption", ..Default::default() };
    let mut departures = InvariantCheck { name: "departure-relation", ..Default::default() };
    let mut monotone = InvariantCheck { name: "monotone-counters", ..Default::default() };
    let mut frozen_bound = InvariantCheck { name: "frozen-bound", ..Default::default() };

    let tau = path.states.iter().position(|s| s.lower == s.upper);
    for (m, s) in path.states.iter().enumerate() {
        let ok = if s.mark == 0 {
            s.lower == s.upper
        } else {
            let d = s.mark as usize;
            let classes = d.max(max_class(&s.upper)).max(max_class(&s.lower));
            let (lo, up) = (s.lower.class_counts(classes), s.upper.class_counts(classes));
            let extra_is_mark = (0..classes).all(|k| up[k] == lo[k] + u32::from(k + 1 == d));
            extra_is_mark && s.lower.queues().iter().zip(s.upper.queues()).all(|(p, q)| is_subconfig(p, q))
        };
        if !ok {
            membership.failures.push(m);
        }
        if let Some(t) = tau {
            if m >= t && (s.lower != s.upper || s.mark != 0) {
                absorption.failures.push(m);
            }
        }
        let expected = match tau {
            Some(t) if m >= t => s.lower_departures + 1,
            _ => s.lower_departures,
        };
        // Starting coupled there is no extra job to leave.
        let expected = if tau == Some(0) { s.lower_departures } else { expected };
        if s.upper_departures != expected {
            departures.failures.push(m);
        }
        if s.frozen_count > m as u64 {
            frozen_bound.failures.push(m);
        }
        if m > 0 {
            let p = &path.states[m - 1];
            if s.frozen_count < p.frozen_count
                || s.lower_departures < p.lower_departures
                || s.upper_departures < p.upper_departures
            {
                monotone.failures.push(m);
            }
        }
    }
    InvariantReport {
        steps: path.steps(),
        tau,
        checks: vec![membership, absorption, departures, monotone, frozen_bound],
    }
}

fn max_class(s: &NetworkState) -> usize {
    s.queues().iter().flat_map(|q| q.digits()).map(|k| k.0 as usize).max().unwrap_or(0)
}

/// Checks that deleting the frozen steps from the lower side leaves a path
/// of the embedded chain: frozen steps keep the lower state and every other
/// step lands in the support of the kernel. Returns failing step indices.
pub fn lower_path_failures(spec: &NetworkSpec, path: &CoupledPath) -> Vec<usize> {
    let alphabet = EventAlphabet::new(spec);
    let mut failures = Vec::new();
    for m in 0..path.steps() {
        let (a, b) = (&path.states[m], &path.states[m + 1]);
        let frozen = b.frozen_count > a.frozen_count;
        let ok = if frozen {
            b.frozen_count == a.frozen_count + 1 && a.lower == b.lower && path.cases[m] == CouplingCase::Frozen
        } else {
            b.lower == a.lower || kernel_row(spec, &alphabet, &a.lower).iter().any(|(s, p)| *p > 0.0 && *s == b.lower)
        };
        if !ok {
            failures.push(m);
        }
    }
    failures
}

/// One branch of the enumerated pair kernel.
#[derive(Debug, Clone)]
pub struct PairTransition {
    pub next: CoupledState,
    pub prob: f64,
    pub case: CouplingCase,
    pub upper_fired: Option<TransitionLabel>,
}

/// All branches of one pair-chain step with their probabilities.
pub fn pair_transitions(spec: &NetworkSpec, alphabet: &EventAlphabet, cs: &CoupledState) -> Vec<PairTransition> {
    let mut out = Vec::new();
    for &(event, pe) in alphabet.events() {
        let mut push = |fired: Option<TransitionLabel>, p: f64| {
            let mut next = cs.clone();
            let case = advance(spec, &mut next, event, fired);
            out.push(PairTransition { next, prob: pe * p, case, upper_fired: fired });
        };
        match event {
            Event::Arrival(k) => push(Some(TransitionLabel::arrival(k)), 1.0),
            Event::Departure(i) => {
                let mut fired = 0.0;
                for (t, p) in departure_branches(spec, &cs.upper, i) {
                    fired += p;
                    push(Some(t), p);
                }
                if 1.0 - fired > 0.0 {
                    push(None, 1.0 - fired);
                }
            }
        }
    }
    out
}

/// Largest violation of P(‖X‖ ≥ m) ≤ P(‖Y‖ ≥ m) over m, for norm laws
/// indexed by m. Nonpositive means X ≤_st Y.
pub fn dominance_gap(lower_law: &[f64], upper_law: &[f64]) -> f64 {
    let len = lower_law.len().max(upper_law.len());
    let mut gap = f64::NEG_INFINITY;
    let (mut tail_lo, mut tail_up) = (0.0, 0.0);
    for m in (0..len).rev() {
        tail_lo += lower_law.get(m).copied().unwrap_or(0.0);
        tail_up += upper_law.get(m).copied().unwrap_or(0.0);
        gap = gap.max(tail_lo - tail_up);
    }
    gap.max(0.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct PairLawReport {
    pub steps: usize,
    /// Distinct (lower, upper) pairs at the final step.
    pub pair_states: usize,
    /// Total variation between the pair chain's upper marginal and the
    /// law of the chain started at the upper state.
    pub upper_tv: f64,
    /// Dominance gap between the two sides of the pair chain.
    pub pair_norm_gap: f64,
    /// Dominance gap between the chains started at lower and at upper.
    pub chain_norm_gap: f64,
}

/// Exact n-step law of the pair chain by breadth-first expansion, compared
/// against the exact law of the chain started at the upper state.
pub fn exact_pair_law_check(
    spec: &NetworkSpec,
    lower: &NetworkState,
    upper: &NetworkState,
    n: usize,
    budget: usize,
) -> Result<PairLawReport> {
    check_coupling_regime(spec)?;
    let alphabet = EventAlphabet::new(spec);
    let start = CoupledState::new(lower.clone(), upper.clone())?;
    let key = |c: &CoupledState| (c.lower.clone(), c.upper.clone(), c.mark);
    let mut current: IndexMap<_, (CoupledState, f64)> = IndexMap::new();
    current.insert(key(&start), (start, 1.0));
    for step in 1..=n {
        let mut next: IndexMap<_, (CoupledState, f64)> = IndexMap::with_capacity(current.len() * 2);
        for (cs, p) in current.values() {
            for tr in pair_transitions(spec, &alphabet, cs) {
                if tr.prob <= 0.0 {
                    continue;
                }
                let mut state = tr.next;
                // Counters are irrelevant to the marginals.
                state.frozen_count = 0;
                state.lower_departures = 0;
                state.upper_departures = 0;
                next.entry(key(&state)).or_insert((state, 0.0)).1 += p * tr.prob;
            }
            if next.len() > budget {
                return Err(Error::BudgetExceeded { budget, step });
            }
        }
        current = next;
    }

    let mut upper_marginal: IndexMap<NetworkState, f64> = IndexMap::new();
    let mut lower_norms = Vec::new();
    let mut upper_norms = Vec::new();
    let add = |law: &mut Vec<f64>, m: usize, p: f64| {
        if law.len() <= m {
            law.resize(m + 1, 0.0);
        }
        law[m] += p;
    };
    for (cs, p) in current.values() {
        *upper_marginal.entry(cs.upper.clone()).or_insert(0.0) += p;
        add(&mut lower_norms, cs.lower.norm(), *p);
        add(&mut upper_norms, cs.upper.norm(), *p);
    }
    let direct = exact_step_distribution(spec, upper, n)?;
    let mut tv = 0.0;
    for (s, p) in direct.iter() {
        tv += (p - upper_marginal.get(s).copied().unwrap_or(0.0)).abs();
    }
    for (s, p) in &upper_marginal {
        if direct.get(s) == 0.0 {
            tv += p;
        }
    }
    let from_lower = exact_step_distribution(spec, lower, n)?;
    Ok(PairLawReport {
        steps: n,
        pair_states: current.len(),
        upper_tv: 0.5 * tv,
        pair_norm_gap: dominance_gap(&lower_norms, &upper_norms),
        chain_norm_gap: dominance_gap(&from_lower.norm_law(), &direct.norm_law()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::builtin_fixture;
    use std::collections::HashSet;

    fn st(spec: &NetworkSpec, lists: &[&[u16]]) -> NetworkState {
        NetworkState::from_lists(spec, lists).unwrap()
    }

    #[test]
    fn mm1_departure_couples() {
        let mm1 = builtin_fixture("mm1").unwrap();
        let mut cs = CoupledState::new(st(&mm1, &[&[]]), st(&mm1, &[&[1]])).unwrap();
        assert_eq!(cs.mark, 1);
        let case = advance(&mm1, &mut cs, Event::Departure(0), Some(TransitionLabel { from: 1, to: 0 }));
        assert_eq!(case, CouplingCase::Frozen);
        assert!(cs.is_coupled());
        assert!(cs.lower.is_empty() && cs.upper.is_empty());
        assert_eq!((cs.upper_departures, cs.lower_departures, cs.frozen_count), (1, 0, 1));
    }

    #[test]
    fn mm1_arrival_keeps_mark() {
        let mm1 = builtin_fixture("mm1").unwrap();
        let mut cs = CoupledState::new(st(&mm1, &[&[]]), st(&mm1, &[&[1]])).unwrap();
        let case = advance(&mm1, &mut cs, Event::Arrival(ClassId(1)), Some(TransitionLabel::arrival(ClassId(1))));
        assert_eq!(case, CouplingCase::Arrival);
        assert_eq!(cs.lower, st(&mm1, &[&[1]]));
        assert_eq!(cs.upper, st(&mm1, &[&[1, 1]]));
        assert_eq!(cs.mark, 1);
    }

    #[test]
    fn lk_sbp_other_station_moves_both() {
        let lk = builtin_fixture("lk-sbp").unwrap();
        // Extra job of class 1 at station 1; a departure at station 2.
        let mut cs = CoupledState::new(st(&lk, &[&[4], &[2]]), st(&lk, &[&[1, 4], &[2]])).unwrap();
        assert_eq!(cs.mark, 1);
        let case = advance(&lk, &mut cs, Event::Departure(1), Some(TransitionLabel { from: 2, to: 3 }));
        assert_eq!(case, CouplingCase::OtherStation);
        assert_eq!(cs.lower, st(&lk, &[&[4], &[3]]));
        assert_eq!(cs.upper, st(&lk, &[&[1, 4], &[3]]));
        assert_eq!(cs.mark, 1);
    }

    #[test]
    fn regime_check() {
        assert!(check_coupling_regime(&builtin_fixture("lk-sbp").unwrap()).is_ok());
        assert!(check_coupling_regime(&builtin_fixture("fcfs-reentrant").unwrap()).is_ok());
        assert!(matches!(
            check_coupling_regime(&builtin_fixture("lk-prop").unwrap()),
            Err(Error::CouplingPrecondition { station: 1 })
        ));
    }

    #[test]
    fn equal_pair_is_coupled_from_the_start() {
        let spec = builtin_fixture("fcfs-reentrant").unwrap();
        let xi = st(&spec, &[&[1, 4], &[2]]);
        let run = run_coupling(&spec, &xi, &xi, 50, &mut RandomStream::new(3)).unwrap();
        assert_eq!(run.legs.len(), 1);
        assert_eq!(run.tau(), Some(0));
        assert!(run.legs[0].states.iter().all(|s| s.lower == s.upper));
        assert!(verify_coupling_path(&run.legs[0]).passed());
    }

    #[test]
    fn mm1_couples_at_first_departure_from_single_job() {
        let mm1 = builtin_fixture("mm1").unwrap();
        for seed in 0..200 {
            let run =
                run_coupling(&mm1, &st(&mm1, &[&[]]), &st(&mm1, &[&[1]]), 100, &mut RandomStream::new(seed)).unwrap();
            let leg = &run.legs[0];
            // With one server, the first step where the lower queue is empty
            // and a departure happens couples the pair: before any arrival
            // that is the first departure event.
            let first = leg.cases.iter().position(|c| *c != CouplingCase::Arrival);
            if leg.cases.first() != Some(&CouplingCase::Arrival) {
                assert_eq!(leg.tau, Some(1));
            }
            if let (Some(t), Some(f)) = (leg.tau, first) {
                assert!(t > f);
            }
            assert!(verify_coupling_path(leg).passed());
        }
    }

    #[test]
    fn two_jobs_apart_gives_two_legs() {
        let spec = builtin_fixture("fcfs-reentrant").unwrap();
        let run =
            run_coupling(&spec, &st(&spec, &[&[], &[]]), &st(&spec, &[&[1, 4], &[]]), 30, &mut RandomStream::new(1))
                .unwrap();
        assert_eq!(run.legs.len(), 2);
        assert_eq!(run.legs[0].states[0].upper, st(&spec, &[&[1], &[]]));
        assert_eq!(run.legs[1].states[0].lower, st(&spec, &[&[1], &[]]));
        for leg in &run.legs {
            assert!(verify_coupling_path(leg).passed());
        }
    }

    #[test]
    fn adjacent_chain_steps_by_one() {
        let spec = builtin_fixture("fcfs-reentrant").unwrap();
        let lower = st(&spec, &[&[4], &[2]]);
        let upper = st(&spec, &[&[1, 4, 4], &[3, 2]]);
        let chain = adjacent_chain(&lower, &upper).unwrap();
        assert_eq!(chain.len(), 4);
        assert_eq!(chain[0], lower);
        assert_eq!(chain[3], upper);
        for w in chain.windows(2) {
            assert!(w[0].is_subconfig_of(&w[1]));
            assert_eq!(w[0].norm() + 1, w[1].norm());
        }
        assert!(matches!(adjacent_chain(&upper, &lower), Err(Error::NotSubconfiguration)));
    }

    #[test]
    fn corrupted_path_fails_membership_at_that_index() {
        let spec = builtin_fixture("fcfs-reentrant").unwrap();
        let run = run_coupling(&spec, &st(&spec, &[&[], &[]]), &st(&spec, &[&[1], &[]]), 40, &mut RandomStream::new(9))
            .unwrap();
        let mut leg = run.legs[0].clone();
        leg.states[7].lower = st(&spec, &[&[1, 1, 1], &[3]]);
        let report = verify_coupling_path(&leg);
        assert!(!report.passed());
        assert!(report.check("membership").unwrap().failures.contains(&7));
    }

    #[test]
    fn censored_run_checks_only_the_uncoupled_branch() {
        let mm1 = builtin_fixture("mm1").unwrap();
        let run =
            run_coupling(&mm1, &st(&mm1, &[&[1, 1]]), &st(&mm1, &[&[1, 1, 1]]), 0, &mut RandomStream::new(0)).unwrap();
        let report = verify_coupling_path(&run.legs[0]);
        assert_eq!(report.tau, None);
        assert!(report.passed());
    }

    /// Exhaustive case table over the reachable pair graph.
    fn check_case_table(name: &str, starts: &[(&[&[u16]], &[&[u16]])], depth: usize) {
        let spec = builtin_fixture(name).unwrap();
        let alphabet = EventAlphabet::new(&spec);
        let mut seen = HashSet::new();
        let mut frontier: Vec<CoupledState> =
            starts.iter().map(|(l, u)| CoupledState::new(st(&spec, l), st(&spec, u)).unwrap()).collect();
        let mut checked = 0;
        for _ in 0..depth {
            let mut next = Vec::new();
            for cs in frontier {
                if !seen.insert((cs.lower.clone(), cs.upper.clone())) {
                    continue;
                }
                let mut total = 0.0;
                for tr in pair_transitions(&spec, &alphabet, &cs) {
                    total += tr.prob;
                    let expected_mark = match (tr.case, tr.upper_fired) {
                        (CouplingCase::Frozen, Some(t)) => {
                            assert_eq!(t.from, cs.mark, "{name}: frozen branch fires the extra job");
                            t.to
                        }
                        _ => cs.mark,
                    };
                    assert_eq!(tr.next.mark, expected_mark, "{name} {:?}", tr.case);
                    assert_eq!(tr.next.frozen_count, cs.frozen_count + u64::from(tr.case == CouplingCase::Frozen));
                    if cs.is_coupled() {
                        assert_ne!(tr.case, CouplingCase::Frozen);
                    }
                    let path =
                        CoupledPath { states: vec![cs.clone(), tr.next.clone()], cases: vec![tr.case], tau: None };
                    assert!(verify_coupling_path(&path).check("membership").unwrap().failures.is_empty());
                    checked += 1;
                    next.push(tr.next);
                }
                assert!((total - 1.0).abs() < 1e-12);
            }
            frontier = next;
        }
        assert!(checked > 0);
    }

    #[test]
    fn case_table_is_exhaustively_respected() {
        check_case_table("mm1", &[(&[&[]], &[&[1]]), (&[&[1]], &[&[1, 1]])], 5);
        check_case_table(
            "fcfs-reentrant",
            &[(&[&[], &[]], &[&[1], &[]]), (&[&[4], &[]], &[&[1, 4], &[]]), (&[&[1], &[2]], &[&[1], &[3, 2]])],
            5,
        );
        check_case_table("lk-sbp", &[(&[&[], &[]], &[&[4], &[]]), (&[&[4], &[]], &[&[1, 4], &[]])], 4);
    }

    #[test]
    fn sampled_paths_keep_invariants_and_lower_is_a_chain_path() {
        for name in ["mm1", "fcfs-reentrant", "lk-sbp"] {
            let spec = builtin_fixture(name).unwrap();
            let upper = if spec.station_count() == 1 { st(&spec, &[&[1]]) } else { st(&spec, &[&[1], &[]]) };
            for r in 0..100 {
                let mut rng = RandomStream::substream(5, r);
                let run = run_coupling(&spec, &NetworkState::empty_for(&spec), &upper, 150, &mut rng).unwrap();
                let leg = &run.legs[0];
                assert!(verify_coupling_path(leg).passed(), "{name}");
                assert!(lower_path_failures(&spec, leg).is_empty(), "{name}");
            }
        }
    }

    #[test]
    fn pair_law_matches_direct_law() {
        let mm1 = builtin_fixture("mm1").unwrap();
        let r = exact_pair_law_check(&mm1, &st(&mm1, &[&[]]), &st(&mm1, &[&[1]]), 4, 100_000).unwrap();
        assert!(r.upper_tv <= 1e-10);
        assert!(r.pair_norm_gap <= 1e-12);
        let r0 = exact_pair_law_check(&mm1, &st(&mm1, &[&[]]), &st(&mm1, &[&[1]]), 0, 10).unwrap();
        assert_eq!(r0.upper_tv, 0.0);
        let fr = builtin_fixture("fcfs-reentrant").unwrap();
        let r = exact_pair_law_check(&fr, &st(&fr, &[&[], &[]]), &st(&fr, &[&[1], &[]]), 6, 1_000_000).unwrap();
        assert!(r.upper_tv <= 1e-10);
        assert!(r.chain_norm_gap <= 1e-9);
        assert!(r.pair_norm_gap <= 1e-12);
    }

    #[test]
    fn dominance_gap_oracle() {
        assert_eq!(dominance_gap(&[0.5, 0.5], &[0.25, 0.5, 0.25]), 0.0);
        assert!((dominance_gap(&[0.0, 1.0], &[0.5, 0.5]) - 0.5).abs() < 1e-15);
    }
}
