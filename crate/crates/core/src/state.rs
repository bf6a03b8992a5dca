//! Network states and transition labels.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{is_subconfig, reduce, ClassId, QueueConfig, ReducedConfig};
use crate::error::{Error, Result};
use crate::network::NetworkSpec;

/// One queue configuration per station. Serializes as a JSON array of
/// arrays, e.g. `[[1,4],[]]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NetworkState {
    queues: Vec<QueueConfig>,
}

impl NetworkState {
    pub fn empty(stations: usize) -> Self {
        NetworkState { queues: vec![QueueConfig::empty(); stations] }
    }

    pub fn empty_for(spec: &NetworkSpec) -> Self {
        Self::empty(spec.station_count())
    }

    pub fn from_queues(queues: Vec<QueueConfig>) -> Self {
        NetworkState { queues }
    }

    /// Builds a state from raw class lists, checking station membership.
    pub fn from_lists(spec: &NetworkSpec, lists: &[&[u16]]) -> Result<Self> {
        let st = NetworkState { queues: lists.iter().map(|l| QueueConfig::from_classes(l.iter().copied())).collect() };
        st.check(spec)?;
        Ok(st)
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.queues.len() != spec.station_count() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} queues, network has {} stations",
                self.queues.len(),
                spec.station_count()
            )));
        }
        for (i, q) in self.queues.iter().enumerate() {
            for &k in q.digits() {
                if k.0 == 0 || k.index() >= spec.classes() || spec.station_of(k) != i {
                    return Err(Error::InvalidArgument(format!("class {k} does not belong to station {}", i + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn queues(&self) -> &[QueueConfig] {
        &self.queues
    }

    pub fn queue(&self, i: usize) -> &QueueConfig {
        &self.queues[i]
    }

    pub(crate) fn queue_mut(&mut self, i: usize) -> &mut QueueConfig {
        &mut self.queues[i]
    }

    /// Total number of jobs ‖ξ‖.
    pub fn norm(&self) -> usize {
        self.queues.iter().map(QueueConfig::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(QueueConfig::is_empty)
    }

    /// Dense per-class counts, index `k - 1`.
    pub fn class_counts(&self, classes: usize) -> Vec<u32> {
        let mut v = vec![0u32; classes];
        for q in &self.queues {
            for k in q.digits() {
                v[k.index()] += 1;
            }
        }
        v
    }

    /// Componentwise subsequence order ξ ⊆ ζ.
    pub fn is_subconfig_of(&self, other: &NetworkState) -> bool {
        self.queues.len() == other.queues.len()
            && self.queues.iter().zip(&other.queues).all(|(p, q)| is_subconfig(p, q))
    }
}

impl fmt::Display for NetworkState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, q) in self.queues.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{q}")?;
        }
        write!(f, "]")
    }
}

/// Transition (k, l) ∈ {0..d}² ∖ {(0,0)}; 0 is the outside world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransitionLabel {
    pub from: u16,
    pub to: u16,
}

impl TransitionLabel {
    pub fn new(from: u16, to: u16) -> Result<Self> {
        if from == 0 && to == 0 {
            return Err(Error::InvalidArgument("(0,0) is not a transition".into()));
        }
        Ok(TransitionLabel { from, to })
    }

    pub fn arrival(k: ClassId) -> Self {
        TransitionLabel { from: 0, to: k.0 }
    }

    /// All labels for `d` classes.
    pub fn all(d: usize) -> impl Iterator<Item = TransitionLabel> {
        let d = d as u16;
        (0..=d)
            .flat_map(move |k| (0..=d).map(move |l| TransitionLabel { from: k, to: l }))
            .filter(|t| t.from != 0 || t.to != 0)
    }
}

/// Per-station lumped key; stations without a reduction keep the sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum StationKey {
    Full(QueueConfig),
    Reduced(ReducedConfig),
}

pub type ReducedState = Vec<StationKey>;

pub fn reduce_state(spec: &NetworkSpec, xi: &NetworkState) -> ReducedState {
    spec.stations()
        .iter()
        .zip(xi.queues())
        .map(|(st, p)| match reduce(p, &st.protocol, &st.classes) {
            Ok(r) => StationKey::Reduced(r),
            Err(_) => StationKey::Full(p.clone()),
        })
        .collect()
}
