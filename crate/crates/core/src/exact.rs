//! Exact n-step laws of the embedded chain.
//!
//! Each step adds at most one job, so the set reachable from a fixed start
//! in n steps is finite. The engine expands it breadth-first and merges the
//! probability of equal successor states. An optional lumped mode keys
//! states by their reduced representation and carries one representative
//! sequence per key.

use std::hash::Hash;

use indexmap::IndexMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::qprocess::{kernel_row, uniformization_rate, EventAlphabet};
use crate::state::{reduce_state, NetworkState, ReducedState};

pub const DEFAULT_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    /// Abort once a step holds more distinct states than this.
    pub budget: usize,
    /// Drop states whose mass falls below this; the dropped mass is
    /// reported. Zero keeps the computation exact.
    pub prune_below: f64,
    /// Merge states with equal reduced representation.
    pub reduced: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions { budget: DEFAULT_BUDGET, prune_below: 0.0, reduced: false }
    }
}

/// Law of Ξ_n: a finite map from states to probabilities.
#[derive(Debug, Clone, Default)]
pub struct StateDistribution {
    support: IndexMap<NetworkState, f64>,
    dropped_mass: f64,
}

impl StateDistribution {
    pub fn point(xi: NetworkState) -> Self {
        let mut support = IndexMap::new();
        support.insert(xi, 1.0);
        StateDistribution { support, dropped_mass: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn get(&self, xi: &NetworkState) -> f64 {
        self.support.get(xi).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NetworkState, f64)> {
        self.support.iter().map(|(s, &p)| (s, p))
    }

    pub fn total_mass(&self) -> f64 {
        self.support.values().sum()
    }

    /// Mass removed by pruning (zero for exact runs).
    pub fn dropped_mass(&self) -> f64 {
        self.dropped_mass
    }

    pub fn expect<F: Fn(&NetworkState) -> f64>(&self, phi: F) -> f64 {
        self.support.iter().map(|(s, &p)| p * phi(s)).sum()
    }

    /// P(‖Ξ‖ = m), indexed by m.
    pub fn norm_law(&self) -> Vec<f64> {
        let max = self.support.keys().map(NetworkState::norm).max().unwrap_or(0);
        let mut law = vec![0.0; max + 1];
        for (s, &p) in &self.support {
            law[s.norm()] += p;
        }
        law
    }

    /// Pushforward onto reduced states.
    pub fn project(&self, spec: &NetworkSpec) -> IndexMap<ReducedState, f64> {
        let mut out = IndexMap::new();
        for (s, &p) in &self.support {
            *out.entry(reduce_state(spec, s)).or_insert(0.0) += p;
        }
        out
    }

    /// Entries sorted by (norm, state), for stable output.
    pub fn sorted(&self) -> Vec<(&NetworkState, f64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| (a.0.norm(), a.0).cmp(&(b.0.norm(), b.0)));
        v
    }

    /// `{"[[1],[]]": 0.25, ...}`.
    pub fn to_json_map(&self) -> serde_json::Map<String, serde_json::Value> {
        self.sorted()
            .into_iter()
            .map(|(s, p)| (serde_json::to_string(s).expect("state serializes"), serde_json::json!(p)))
            .collect()
    }
}

/// Breadth-first propagation of a law under the embedded kernel.
pub struct ExactEngine<'a> {
    spec: &'a NetworkSpec,
    alphabet: EventAlphabet,
    options: ExactOptions,
}

impl<'a> ExactEngine<'a> {
    pub fn new(spec: &'a NetworkSpec, options: ExactOptions) -> Self {
        ExactEngine { spec, alphabet: EventAlphabet::new(spec), options }
    }

    /// Calls `observe(m, law_m)` for m = 0..=n and returns the law at n.
    pub fn run<O>(&self, xi0: &NetworkState, n: usize, mut observe: O) -> Result<StateDistribution>
    where
        O: FnMut(usize, &StateDistribution),
    {
        if self.options.reduced {
            let spec = self.spec;
            self.propagate(xi0, n, |s| reduce_state(spec, s), &mut observe)
        } else {
            self.propagate(xi0, n, |s| s.clone(), &mut observe)
        }
    }

    fn propagate<K, F, O>(&self, xi0: &NetworkState, n: usize, key: F, observe: &mut O) -> Result<StateDistribution>
    where
        K: Hash + Eq,
        F: Fn(&NetworkState) -> K,
        O: FnMut(usize, &StateDistribution),
    {
        let mut current = StateDistribution::point(xi0.clone());
        observe(0, &current);
        for step in 1..=n {
            let mut next: IndexMap<K, (NetworkState, f64)> = IndexMap::with_capacity(current.len() * 2);
            for (s, &p) in &current.support {
                for (succ, q) in kernel_row(self.spec, &self.alphabet, s) {
                    let mass = p * q;
                    if mass <= 0.0 {
                        continue;
                    }
                    next.entry(key(&succ)).or_insert_with(|| (succ, 0.0)).1 += mass;
                }
                if next.len() > self.options.budget {
                    return Err(Error::BudgetExceeded { budget: self.options.budget, step });
                }
            }
            let mut dropped = current.dropped_mass;
            let support = next
                .into_values()
                .filter(|&(_, p)| {
                    if p < self.options.prune_below {
                        dropped += p;
                        false
                    } else {
                        true
                    }
                })
                .collect();
            current = StateDistribution { support, dropped_mass: dropped };
            observe(step, &current);
        }
        Ok(current)
    }
}

pub fn exact_step_distribution(spec: &NetworkSpec, xi0: &NetworkState, n: usize) -> Result<StateDistribution> {
    ExactEngine::new(spec, ExactOptions::default()).run(xi0, n, |_, _| {})
}

/// Poisson(μ) weights e^{-μ} μ^m / m! for m = 0..len, and tails
/// Σ_{j>m} weight_j computed by backward summation.
fn poisson_weights_and_tails(mu: f64, tol: f64) -> (Vec<f64>, Vec<f64>) {
    // Far enough out that the remaining tail is negligible next to tol.
    let horizon = (mu + 12.0 * mu.sqrt() + 40.0 - tol.log10().min(0.0) * 2.0).ceil() as usize;
    let mut w = Vec::with_capacity(horizon + 1);
    let mut log_w = -mu;
    for m in 0..=horizon {
        if m > 0 {
            log_w += mu.ln() - (m as f64).ln();
        }
        w.push(if mu == 0.0 {
            if m == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            log_w.exp()
        });
    }
    let mut tails = vec![0.0; w.len()];
    let mut acc = 0.0;
    for m in (0..w.len()).rev() {
        tails[m] = acc;
        acc += w[m];
    }
    (w, tails)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransientValue {
    pub value: f64,
    /// Bound on |value − E[φ(X_t)]|: Poisson tail plus pruned mass.
    pub error_bound: f64,
    /// Number of embedded steps summed.
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientOptions {
    pub tol: f64,
    pub budget: usize,
    /// Prune states lighter than `tol * prune_factor` from the expansion.
    pub prune_factor: f64,
    /// Run the engine on reduced states; φ must then be constant on
    /// reduction classes (any function of the per-class counts is).
    pub reduced: bool,
}

impl TransientOptions {
    pub fn new(tol: f64) -> Self {
        TransientOptions { tol, budget: DEFAULT_BUDGET, prune_factor: 1e-6, reduced: false }
    }
}

/// E[φ(X_t) | X_0 = ξ0] for the continuous-time process, by uniformization:
/// e^{-λt} Σ_m (λt)^m/m! · E[φ(Ξ_m)], truncated where the Poisson tail is
/// below half the tolerance. Requires 0 ≤ φ ≤ 1.
pub fn transient_functional<F>(
    spec: &NetworkSpec,
    xi0: &NetworkState,
    t: f64,
    phi: F,
    options: TransientOptions,
) -> Result<TransientValue>
where
    F: Fn(&NetworkState) -> f64,
{
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    if !(options.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if t == 0.0 {
        return Ok(TransientValue { value: phi(xi0), error_bound: 0.0, steps: 0 });
    }
    let mu = uniformization_rate(spec) * t;
    let (weights, tails) = poisson_weights_and_tails(mu, options.tol);
    let steps = tails.iter().position(|&tail| tail < 0.5 * options.tol).unwrap_or(weights.len() - 1);
    let engine = ExactEngine::new(
        spec,
        ExactOptions {
            budget: options.budget,
            prune_below: options.tol * options.prune_factor,
            reduced: options.reduced,
        },
    );
    let mut value = 0.0;
    let mut dropped: f64 = 0.0;
    engine.run(xi0, steps, |m, law| {
        value += weights[m] * law.expect(&phi);
        dropped = dropped.max(law.dropped_mass());
    })?;
    let error_bound = tails[steps] + dropped;
    if error_bound > options.tol {
        return Err(Error::ToleranceNotMet { bound: error_bound, tol: options.tol });
    }
    Ok(TransientValue { value, error_bound, steps })
}
