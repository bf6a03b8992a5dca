//! Q-process dynamics: transition maps and rates, the uniformization
//! constant, and the embedded chain with kernel Q = I + A/λ.
//!
//! The embedded chain is driven by a state-independent event stream: each
//! step is an arrival to class k with probability θ_k/λ or a potential
//! departure from station i with probability β̄_i/λ. A departure event at a
//! nonempty station fires (k, l) with probability (β_k/β̄_i)·W_k·R_kl and
//! is a self-loop otherwise.

use crate::allocation::{allocate, served_class, ServiceAllocation};
use crate::config::ClassId;
use crate::network::NetworkSpec;
use crate::rng::RandomStream;
use crate::state::{NetworkState, TransitionLabel};

/// λ = ‖θ‖ + Σ_i β̄_i.
pub fn uniformization_rate(spec: &NetworkSpec) -> f64 {
    let arrivals: f64 = spec.theta().iter().sum();
    arrivals + (0..spec.station_count()).map(|i| spec.max_service_rate(i)).sum::<f64>()
}

/// Applies f_(k,l) in place. Returns false (and leaves the state alone)
/// when the deletion part is vacuous.
pub fn apply_in_place(spec: &NetworkSpec, xi: &mut NetworkState, t: TransitionLabel) -> bool {
    if t.from != 0 {
        let k = ClassId(t.from);
        if !xi.queue_mut(spec.station_of(k)).delete_in_place(k) {
            return false;
        }
    }
    if t.to != 0 {
        let l = ClassId(t.to);
        let i = spec.station_of(l);
        let policy = &spec.stations()[i].protocol.policy;
        xi.queue_mut(i).insert_in_place(policy, l);
    }
    true
}

pub fn apply_transition(spec: &NetworkSpec, xi: &NetworkState, t: TransitionLabel) -> NetworkState {
    let mut next = xi.clone();
    apply_in_place(spec, &mut next, t);
    next
}

/// h_(k,l)(ξ): θ_l for arrivals, W_k(p_i)·β_k·R_kl otherwise.
pub fn transition_rate(spec: &NetworkSpec, xi: &NetworkState, t: TransitionLabel) -> f64 {
    if t.from == 0 {
        return spec.theta()[t.to as usize - 1];
    }
    let k = ClassId(t.from);
    let i = spec.station_of(k);
    let w = allocate(&spec.stations()[i].protocol.allocation, xi.queue(i)).weight(k);
    if w == 0.0 {
        return 0.0;
    }
    w * spec.beta()[k.index()] * spec.route(k, t.to)
}

/// Nonzero generator entries out of ξ.
pub fn generator_row(spec: &NetworkSpec, xi: &NetworkState) -> Vec<(TransitionLabel, f64)> {
    TransitionLabel::all(spec.classes()).map(|t| (t, transition_rate(spec, xi, t))).filter(|&(_, r)| r > 0.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Event {
    Arrival(ClassId),
    /// Potential departure from a (0-based) station.
    Departure(usize),
}

/// The state-independent event distribution. Zero-probability arrivals
/// are left out.
#[derive(Debug, Clone)]
pub struct EventAlphabet {
    events: Vec<(Event, f64)>,
    cumulative: Vec<f64>,
    lambda: f64,
}

impl EventAlphabet {
    pub fn new(spec: &NetworkSpec) -> Self {
        let lambda = uniformization_rate(spec);
        let mut events = Vec::new();
        for (k, &t) in spec.theta().iter().enumerate() {
            if t > 0.0 {
                events.push((Event::Arrival(ClassId::from_index(k)), t / lambda));
            }
        }
        for i in 0..spec.station_count() {
            events.push((Event::Departure(i), spec.max_service_rate(i) / lambda));
        }
        let mut acc = 0.0;
        let cumulative = events
            .iter()
            .map(|&(_, p)| {
                acc += p;
                acc
            })
            .collect();
        EventAlphabet { events, cumulative, lambda }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn events(&self) -> &[(Event, f64)] {
        &self.events
    }

    pub fn sample(&self, rng: &mut RandomStream) -> Event {
        let u = rng.uniform() * self.cumulative[self.cumulative.len() - 1];
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.events[idx.min(self.events.len() - 1)].0
    }
}

/// Outcomes of a departure event at station `i`: fired labels with their
/// conditional probabilities. The self-loop takes the remaining mass.
pub fn departure_branches(spec: &NetworkSpec, xi: &NetworkState, i: usize) -> Vec<(TransitionLabel, f64)> {
    let p = xi.queue(i);
    if p.is_empty() {
        return Vec::new();
    }
    let bar = spec.max_service_rate(i);
    let alloc = &spec.stations()[i].protocol.allocation;
    let mut out = Vec::new();
    let mut push_class = |k: ClassId, w: f64| {
        let scale = spec.beta()[k.index()] / bar * w;
        for l in 0..=spec.classes() as u16 {
            let r = spec.route(k, l);
            if r > 0.0 {
                out.push((TransitionLabel { from: k.0, to: l }, scale * r));
            }
        }
    };
    match alloc {
        ServiceAllocation::HeadOfQueue | ServiceAllocation::Preferential(_) => {
            push_class(served_class(alloc, p).expect("nonempty"), 1.0)
        }
        _ => {
            for (k, w) in allocate(alloc, p).iter() {
                push_class(k, w);
            }
        }
    }
    out
}

/// What one embedded step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepRecord {
    pub event: Event,
    /// `None` for a self-loop.
    pub fired: Option<TransitionLabel>,
}

/// Embedded-chain sampler with the event alphabet precomputed.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    spec: &'a NetworkSpec,
    alphabet: EventAlphabet,
}

impl<'a> Sampler<'a> {
    pub fn new(spec: &'a NetworkSpec) -> Self {
        Sampler { spec, alphabet: EventAlphabet::new(spec) }
    }

    pub fn spec(&self) -> &'a NetworkSpec {
        self.spec
    }

    pub fn alphabet(&self) -> &EventAlphabet {
        &self.alphabet
    }

    /// Picks the fired label of a departure event at station `i`, or `None`
    /// for a self-loop.
    pub fn draw_departure(&self, xi: &NetworkState, i: usize, rng: &mut RandomStream) -> Option<TransitionLabel> {
        let u = rng.uniform();
        let mut acc = 0.0;
        for (t, p) in departure_branches(self.spec, xi, i) {
            acc += p;
            if u < acc {
                return Some(t);
            }
        }
        None
    }

    pub fn step(&self, xi: &mut NetworkState, rng: &mut RandomStream) -> StepRecord {
        let event = self.alphabet.sample(rng);
        let fired = match event {
            Event::Arrival(k) => Some(TransitionLabel::arrival(k)),
            Event::Departure(i) => self.draw_departure(xi, i, rng),
        };
        if let Some(t) = fired {
            apply_in_place(self.spec, xi, t);
        }
        StepRecord { event, fired }
    }
}

pub fn embedded_step(spec: &NetworkSpec, xi: &NetworkState, rng: &mut RandomStream) -> NetworkState {
    let mut next = xi.clone();
    Sampler::new(spec).step(&mut next, rng);
    next
}

/// Path of length `n + 1` starting at `xi0`.
pub fn simulate_path(spec: &NetworkSpec, xi0: &NetworkState, n: usize, rng: &mut RandomStream) -> Vec<NetworkState> {
    let sampler = Sampler::new(spec);
    let mut path = Vec::with_capacity(n + 1);
    let mut cur = xi0.clone();
    path.push(cur.clone());
    for _ in 0..n {
        sampler.step(&mut cur, rng);
        path.push(cur.clone());
    }
    path
}

/// Runs `n` steps and returns only the final state.
pub fn simulate_final(sampler: &Sampler<'_>, xi0: &NetworkState, n: usize, rng: &mut RandomStream) -> NetworkState {
    let mut cur = xi0.clone();
    for _ in 0..n {
        sampler.step(&mut cur, rng);
    }
    cur
}

/// One-step law of the embedded chain built from the event alphabet.
/// Entries are not merged: equal successor states may appear repeatedly.
pub fn kernel_row(spec: &NetworkSpec, alphabet: &EventAlphabet, xi: &NetworkState) -> Vec<(NetworkState, f64)> {
    let mut out = Vec::new();
    for &(event, pe) in alphabet.events() {
        match event {
            Event::Arrival(k) => out.push((apply_transition(spec, xi, TransitionLabel::arrival(k)), pe)),
            Event::Departure(i) => {
                let mut fired = 0.0;
                for (t, p) in departure_branches(spec, xi, i) {
                    fired += p;
                    out.push((apply_transition(spec, xi, t), pe * p));
                }
                let idle = pe * (1.0 - fired);
                if idle > 0.0 {
                    out.push((xi.clone(), idle));
                }
            }
        }
    }
    out
}

/// One-step law from the generator: Q = I + A/λ.
pub fn kernel_row_from_generator(spec: &NetworkSpec, xi: &NetworkState) -> Vec<(NetworkState, f64)> {
    let lambda = uniformization_rate(spec);
    let row = generator_row(spec, xi);
    let total: f64 = row.iter().map(|(_, r)| r).sum();
    let mut out: Vec<(NetworkState, f64)> =
        row.into_iter().map(|(t, r)| (apply_transition(spec, xi, t), r / lambda)).collect();
    out.push((xi.clone(), 1.0 - total / lambda));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::builtin_fixture;
    use std::collections::BTreeMap;

    fn t(k: u16, l: u16) -> TransitionLabel {
        TransitionLabel::new(k, l).unwrap()
    }

    fn merged(row: Vec<(NetworkState, f64)>) -> BTreeMap<NetworkState, f64> {
        let mut m = BTreeMap::new();
        for (s, p) in row {
            *m.entry(s).or_insert(0.0) += p;
        }
        m.retain(|_, p| *p > 1e-15);
        m
    }

    #[test]
    fn uniformization_rate_examples() {
        assert_eq!(uniformization_rate(&builtin_fixture("mm1").unwrap()), 3.0);
        assert_eq!(uniformization_rate(&builtin_fixture("lk-prop").unwrap()), 10.0);
        let idle = builtin_fixture("mm1").unwrap();
        let idle = crate::network::NetworkSpec::new(1, idle.stations().to_vec(), vec![0.0], vec![5.0], vec![vec![0.0]])
            .unwrap();
        assert_eq!(uniformization_rate(&idle), 5.0);
    }

    #[test]
    fn apply_transition_examples() {
        let mm1 = builtin_fixture("mm1").unwrap();
        let one = NetworkState::from_lists(&mm1, &[&[1]]).unwrap();
        assert_eq!(apply_transition(&mm1, &one, t(0, 1)), NetworkState::from_lists(&mm1, &[&[1, 1]]).unwrap());

        let lk = builtin_fixture("lk-prop").unwrap();
        let xi = NetworkState::from_lists(&lk, &[&[1], &[]]).unwrap();
        assert_eq!(apply_transition(&lk, &xi, t(1, 2)), NetworkState::from_lists(&lk, &[&[], &[2]]).unwrap());

        let empty = NetworkState::empty_for(&lk);
        for k in 1..=4 {
            for l in 0..=4 {
                assert_eq!(apply_transition(&lk, &empty, t(k, l)), empty);
            }
        }
    }

    #[test]
    fn transition_rate_examples() {
        let mm1 = builtin_fixture("mm1").unwrap();
        let one = NetworkState::from_lists(&mm1, &[&[1]]).unwrap();
        assert_eq!(transition_rate(&mm1, &one, t(1, 0)), 2.0);

        let lk = builtin_fixture("lk-prop").unwrap();
        let xi = NetworkState::from_lists(&lk, &[&[1, 4, 1], &[]]).unwrap();
        assert!((transition_rate(&lk, &xi, t(1, 2)) - 8.0 / 3.0).abs() < 1e-12);

        for name in crate::network::FIXTURE_NAMES {
            let spec = builtin_fixture(name).unwrap();
            let empty = NetworkState::empty_for(&spec);
            for lab in TransitionLabel::all(spec.classes()).filter(|l| l.from != 0) {
                assert_eq!(transition_rate(&spec, &empty, lab), 0.0);
            }
        }
    }

    #[test]
    fn label_zero_zero_rejected() {
        assert!(TransitionLabel::new(0, 0).is_err());
        assert_eq!(TransitionLabel::all(2).count(), 8);
    }

    #[test]
    fn embedded_step_laws_by_enumeration() {
        let mm1 = builtin_fixture("mm1").unwrap();
        let al = EventAlphabet::new(&mm1);
        let empty = NetworkState::empty_for(&mm1);
        let one = NetworkState::from_lists(&mm1, &[&[1]]).unwrap();
        let two = NetworkState::from_lists(&mm1, &[&[1, 1]]).unwrap();

        let from_empty = merged(kernel_row(&mm1, &al, &empty));
        assert!((from_empty[&one] - 1.0 / 3.0).abs() < 1e-15);
        assert!((from_empty[&empty] - 2.0 / 3.0).abs() < 1e-15);

        let from_one = merged(kernel_row(&mm1, &al, &one));
        assert!((from_one[&two] - 1.0 / 3.0).abs() < 1e-15);
        assert!((from_one[&empty] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(from_one.len(), 2);

        let lk = builtin_fixture("lk-prop").unwrap();
        let xi = NetworkState::from_lists(&lk, &[&[4], &[]]).unwrap();
        let br = departure_branches(&lk, &xi, 0);
        assert_eq!(br, vec![(t(4, 0), 0.5)]);
    }

    #[test]
    fn paths_and_frozen_empty_state() {
        let mm1 = builtin_fixture("mm1").unwrap();
        let empty = NetworkState::empty_for(&mm1);
        let mut rng = RandomStream::new(1);
        assert_eq!(simulate_path(&mm1, &empty, 0, &mut rng), vec![empty.clone()]);

        let idle = builtin_fixture("lk-sbp").unwrap().with_theta(vec![0.0; 4]).unwrap();
        let e = NetworkState::empty_for(&idle);
        let path = simulate_path(&idle, &e, 500, &mut rng);
        assert!(path.iter().all(|s| *s == e));

        let a = simulate_path(&mm1, &empty, 200, &mut RandomStream::new(9));
        let b = simulate_path(&mm1, &empty, 200, &mut RandomStream::new(9));
        assert_eq!(a, b);
    }

    #[test]
    fn mm1_long_path_idles_half_the_time() {
        let mm1 = builtin_fixture("mm1").unwrap();
        let mut rng = RandomStream::new(2024);
        let path = simulate_path(&mm1, &NetworkState::empty_for(&mm1), 11_000, &mut rng);
        let tail = &path[1000..];
        let frac = tail.iter().filter(|s| s.is_empty()).count() as f64 / tail.len() as f64;
        // Batch means for the standard error of a correlated average.
        let batches = 20;
        let len = tail.len() / batches;
        let means: Vec<f64> = (0..batches)
            .map(|b| tail[b * len..(b + 1) * len].iter().filter(|s| s.is_empty()).count() as f64 / len as f64)
            .collect();
        let m = means.iter().sum::<f64>() / batches as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let se = (var / batches as f64).sqrt();
        assert!((frac - 0.5).abs() < 3.0 * se, "frac {frac} se {se}");
    }

    /// Depth-limited reachable set from the empty state.
    fn reachable(spec: &NetworkSpec, depth: usize) -> Vec<NetworkState> {
        let al = EventAlphabet::new(spec);
        let mut seen = std::collections::BTreeSet::new();
        let mut frontier = vec![NetworkState::empty_for(spec)];
        seen.insert(frontier[0].clone());
        for _ in 0..depth {
            let mut next = Vec::new();
            for s in &frontier {
                for (n, _) in kernel_row(spec, &al, s) {
                    if seen.insert(n.clone()) {
                        next.push(n);
                    }
                }
            }
            frontier = next;
        }
        seen.into_iter().collect()
    }

    #[test]
    fn generator_identity_on_reachable_sets() {
        for name in crate::network::FIXTURE_NAMES {
            let spec = builtin_fixture(name).unwrap();
            let lambda = uniformization_rate(&spec);
            let al = EventAlphabet::new(&spec);
            for xi in reachable(&spec, 4) {
                let total: f64 = generator_row(&spec, &xi).iter().map(|(_, r)| r).sum();
                assert!(total <= lambda + 1e-12);
                let from_gen = merged(kernel_row_from_generator(&spec, &xi));
                let from_events = merged(kernel_row(&spec, &al, &xi));
                assert!(from_gen.values().all(|&p| p >= 0.0));
                assert!((from_gen.values().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!((from_events.values().sum::<f64>() - 1.0).abs() < 1e-12);
                assert_eq!(from_gen.len(), from_events.len(), "{name} {xi}");
                for (s, p) in &from_gen {
                    assert!((p - from_events[s]).abs() < 1e-12, "{name} {xi} -> {s}");
                }
            }
        }
    }

    #[test]
    fn arrivals_move_up_in_the_order() {
        for name in crate::network::FIXTURE_NAMES {
            let spec = builtin_fixture(name).unwrap();
            for xi in reachable(&spec, 4) {
                for k in 1..=spec.classes() as u16 {
                    assert!(xi.is_subconfig_of(&apply_transition(&spec, &xi, t(0, k))));
                }
            }
        }
    }

    #[test]
    fn sampled_kernel_matches_exact_kernel() {
        let draws = 100_000;
        for name in crate::network::FIXTURE_NAMES {
            let spec = builtin_fixture(name).unwrap();
            let sampler = Sampler::new(&spec);
            let states: Vec<_> = reachable(&spec, 6).into_iter().filter(|s| s.norm() <= 3).collect();
            for (j, xi) in states.iter().enumerate() {
                let exact = merged(kernel_row(&spec, sampler.alphabet(), xi));
                let mut rng = RandomStream::substream(77, j as u64);
                let mut counts: BTreeMap<NetworkState, usize> = BTreeMap::new();
                for _ in 0..draws {
                    let mut s = xi.clone();
                    sampler.step(&mut s, &mut rng);
                    *counts.entry(s).or_insert(0) += 1;
                }
                for s in counts.keys() {
                    assert!(exact.contains_key(s), "{name}: sampled impossible successor {s} of {xi}");
                }
                for (s, &p) in &exact {
                    let f = *counts.get(s).unwrap_or(&0) as f64 / draws as f64;
                    let se = (p * (1.0 - p) / draws as f64).sqrt();
                    assert!((f - p).abs() <= 4.0 * se + 1e-12, "{name} {xi}->{s}: {f} vs {p}");
                }
            }
        }
    }
}
