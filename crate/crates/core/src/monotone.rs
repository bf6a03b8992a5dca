//! Exact stochastic-monotonicity checks on small reachable sets.
//!
//! Two orders are compared. For networks whose stations each serve one
//! class, states are count vectors and the comparison runs over the upper
//! orthant indicators 1{x ≥ y}, which generate the increasing sets. For
//! general networks only the total job count is compared, between states
//! ξ ⊆ ζ one job apart.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::coupling::dominance_gap;
use crate::error::{Error, Result};
use crate::exact::{ExactEngine, ExactOptions};
use crate::network::NetworkSpec;
use crate::qprocess::{kernel_row, EventAlphabet};
use crate::state::NetworkState;

/// States reachable from `start` within `depth` steps, in BFS order.
pub fn reachable_states(spec: &NetworkSpec, start: &NetworkState, depth: usize) -> Vec<NetworkState> {
    let alphabet = EventAlphabet::new(spec);
    let mut seen = BTreeSet::new();
    let mut order = vec![start.clone()];
    seen.insert(start.clone());
    let mut frontier = vec![start.clone()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for s in &frontier {
            for (t, p) in kernel_row(spec, &alphabet, s) {
                if p > 0.0 && seen.insert(t.clone()) {
                    order.push(t.clone());
                    next.push(t);
                }
            }
        }
        frontier = next;
    }
    order
}

/// Norm laws P(‖Ξ_m‖ = ·) from `start` for m = 0..=n.
pub fn norm_law_series(spec: &NetworkSpec, start: &NetworkState, n: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(n + 1);
    let options = ExactOptions { reduced: spec.is_reducible(), ..Default::default() };
    ExactEngine::new(spec, options).run(start, n, |_, law| out.push(law.norm_law()))?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct NormDominanceReport {
    pub pairs: usize,
    pub horizon: usize,
    /// Largest P(‖Ξ_n^ξ‖ ≥ m) − P(‖Ξ_n^ζ‖ ≥ m) over pairs, n and m.
    pub max_gap: f64,
    pub worst: Option<(NetworkState, NetworkState, usize)>,
}

/// For every pair ξ ⊆ ζ of states reachable from ∅ with ‖ξ‖ ≤ `max_lower`
/// and ‖ζ‖ = ‖ξ‖ + 1, compares the norm laws at every horizon up to `n`.
pub fn norm_dominance_check(spec: &NetworkSpec, max_lower: usize, n: usize) -> Result<NormDominanceReport> {
    let empty = NetworkState::empty_for(spec);
    // Each job needs one arrival; extra depth lets jobs move downstream.
    let depth = 3 * (max_lower + 1) + 2;
    let states: Vec<NetworkState> =
        reachable_states(spec, &empty, depth).into_iter().filter(|s| s.norm() <= max_lower + 1).collect();
    let mut laws: HashMap<NetworkState, Vec<Vec<f64>>> = HashMap::new();
    for s in &states {
        laws.insert(s.clone(), norm_law_series(spec, s, n)?);
    }
    let mut pairs = 0;
    let mut max_gap: f64 = 0.0;
    let mut worst = None;
    for lower in states.iter().filter(|s| s.norm() <= max_lower) {
        for upper in states.iter().filter(|s| s.norm() == lower.norm() + 1 && lower.is_subconfig_of(s)) {
            pairs += 1;
            let (lo, up) = (&laws[lower], &laws[upper]);
            for m in 0..=n {
                let gap = dominance_gap(&lo[m], &up[m]);
                if gap > max_gap {
                    max_gap = gap;
                    worst = Some((lower.clone(), upper.clone(), m));
                }
            }
        }
    }
    Ok(NormDominanceReport { pairs, horizon: n, max_gap, worst })
}

#[derive(Debug, Clone, Serialize)]
pub struct OrthantDominanceReport {
    pub pairs: usize,
    pub indicators: usize,
    pub horizon: usize,
    /// Largest P_x(Ξ_n ≥ y) − P_z(Ξ_n ≥ y) over x ≤ z, y and n.
    pub max_gap: f64,
}

/// All count vectors of length `dims` with total at most `max_norm`.
fn count_vectors(dims: usize, max_norm: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..dims {
        out = out
            .into_iter()
            .flat_map(|v: Vec<u32>| {
                let used: u32 = v.iter().sum();
                (0..=(max_norm as u32 - used)).map(move |c| {
                    let mut w = v.clone();
                    w.push(c);
                    w
                })
            })
            .collect();
    }
    out
}

/// Exact Qⁿ-dominance for upper orthant indicators on a network whose
/// stations each hold one class: for all x ≤ z componentwise with
/// ‖z‖ ≤ `max_norm`, all y with ‖y‖ ≤ `max_indicator` and all m ≤ n,
/// reports the largest excess of P_x(Ξ_m ≥ y) over P_z(Ξ_m ≥ y).
pub fn orthant_dominance_check(
    spec: &NetworkSpec,
    max_norm: usize,
    max_indicator: usize,
    n: usize,
) -> Result<OrthantDominanceReport> {
    if spec.stations().iter().any(|st| st.classes.len() != 1) {
        return Err(Error::InvalidArgument("orthant order needs one class per station".into()));
    }
    let d = spec.classes();
    let to_state = |x: &[u32]| -> NetworkState {
        let mut lists = vec![Vec::new(); spec.station_count()];
        for (k, &c) in x.iter().enumerate() {
            let i = spec.station_of(crate::config::ClassId::from_index(k));
            lists[i].extend(std::iter::repeat(k as u16 + 1).take(c as usize));
        }
        NetworkState::from_queues(lists.into_iter().map(crate::config::QueueConfig::from_classes).collect())
    };
    let xs = count_vectors(d, max_norm);
    let ys = count_vectors(d, max_indicator);
    // tails[x][m][y] = P_x(Ξ_m ≥ y).
    let mut tails: HashMap<Vec<u32>, Vec<Vec<f64>>> = HashMap::new();
    for x in &xs {
        let mut series = Vec::with_capacity(n + 1);
        ExactEngine::new(spec, ExactOptions::default()).run(&to_state(x), n, |_, law| {
            let row: Vec<f64> = ys
                .iter()
                .map(|y| {
                    law.iter()
                        .filter(|(s, _)| s.class_counts(d).iter().zip(y).all(|(a, b)| a >= b))
                        .map(|(_, p)| p)
                        .sum()
                })
                .collect();
            series.push(row);
        })?;
        tails.insert(x.clone(), series);
    }
    let mut pairs = 0;
    let mut max_gap: f64 = 0.0;
    for x in &xs {
        for z in &xs {
            if x == z || !x.iter().zip(z).all(|(a, b)| a <= b) {
                continue;
            }
            pairs += 1;
            for m in 0..=n {
                for (px, pz) in tails[x][m].iter().zip(&tails[z][m]) {
                    max_gap = max_gap.max(px - pz);
                }
            }
        }
    }
    Ok(OrthantDominanceReport { pairs, indicators: ys.len(), horizon: n, max_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::builtin_fixture;

    #[test]
    fn count_vectors_enumerates_simplex() {
        // C(3 + 2, 2) = 10 vectors of length 2 with total ≤ 3.
        assert_eq!(count_vectors(2, 3).len(), 10);
        assert_eq!(count_vectors(3, 0), vec![vec![0, 0, 0]]);
    }

    #[test]
    fn reachable_from_empty_grows_by_one_job_per_step() {
        let mm1 = builtin_fixture("mm1").unwrap();
        let r = reachable_states(&mm1, &NetworkState::empty_for(&mm1), 4);
        assert_eq!(r.len(), 5);
        assert!(r.iter().all(|s| s.norm() <= 4));
    }

    #[test]
    fn tandem_is_orthant_monotone_small() {
        let tandem = builtin_fixture("tandem2").unwrap();
        let r = orthant_dominance_check(&tandem, 2, 2, 3).unwrap();
        assert!(r.max_gap <= 1e-12, "{}", r.max_gap);
        assert!(r.pairs > 0);
        assert!(orthant_dominance_check(&builtin_fixture("lk-sbp").unwrap(), 1, 1, 1).is_err());
    }

    #[test]
    fn mm1_norm_dominance() {
        let mm1 = builtin_fixture("mm1").unwrap();
        let r = norm_dominance_check(&mm1, 2, 5).unwrap();
        assert_eq!(r.pairs, 3);
        assert!(r.max_gap <= 1e-12);
    }
}
