//! Multi-class queue configurations.
//!
//! A station's buffer is an ordered sequence of class ids ("digits"). The
//! order is the service order: the leading digit is the job that would be
//! served under a head-of-queue allocation. Queue policies decide where an
//! arriving digit is inserted; deletions always remove the first digit of
//! the requested class.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::allocation::ServiceAllocation;
use crate::error::{Error, Result};

/// A job class. Stored classes are 1-based; 0 only appears in transition
/// labels as the external virtual class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u16);

impl ClassId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(i: usize) -> Self {
        ClassId((i + 1) as u16)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One station's buffer, serialized as a JSON array of class ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueueConfig(Vec<ClassId>);

impl QueueConfig {
    pub fn empty() -> Self {
        QueueConfig(Vec::new())
    }

    pub fn from_classes<I: IntoIterator<Item = u16>>(classes: I) -> Self {
        QueueConfig(classes.into_iter().map(ClassId).collect())
    }

    pub fn digits(&self) -> &[ClassId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, k: ClassId) -> bool {
        self.0.contains(&k)
    }

    pub fn count(&self, k: ClassId) -> usize {
        self.0.iter().filter(|&&c| c == k).count()
    }

    pub fn composition(&self) -> CompositionVector {
        composition(self)
    }

    /// Leading digit.
    pub fn head(&self) -> Result<ClassId> {
        head(self)
    }

    pub fn is_subconfig_of(&self, other: &QueueConfig) -> bool {
        is_subconfig(self, other)
    }

    /// Raw positional insertion (0-based). Used to build test pairs; the
    /// dynamics go through [`insert`].
    pub fn insert_at(&mut self, pos: usize, k: ClassId) {
        self.0.insert(pos, k);
    }

    pub(crate) fn insert_in_place(&mut self, policy: &QueuePolicy, k: ClassId) {
        let m = insertion_index(policy, self, k);
        self.0.insert(m - 1, k);
    }

    /// Removes the first `k`-digit; returns whether one was found.
    pub(crate) fn delete_in_place(&mut self, k: ClassId) -> bool {
        match self.0.iter().position(|&c| c == k) {
            Some(pos) => {
                self.0.remove(pos);
                true
            }
            None => false,
        }
    }
}

impl fmt::Display for QueueConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Number of digits of each class. Only nonzero entries are stored, so two
/// vectors compare equal iff their counts agree.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CompositionVector {
    counts: BTreeMap<ClassId, u32>,
}

impl CompositionVector {
    pub fn get(&self, k: ClassId) -> u32 {
        self.counts.get(&k).copied().unwrap_or(0)
    }

    pub fn norm(&self) -> u32 {
        self.counts.values().sum()
    }

    /// The support σ[x].
    pub fn support(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.counts.keys().copied()
    }

    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, k: ClassId) {
        *self.counts.entry(k).or_insert(0) += 1;
    }

    pub fn remove(&mut self, k: ClassId) {
        if let Some(c) = self.counts.get_mut(&k) {
            *c -= 1;
            if *c == 0 {
                self.counts.remove(&k);
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, u32)> + '_ {
        self.counts.iter().map(|(&k, &c)| (k, c))
    }
}

impl FromIterator<(ClassId, u32)> for CompositionVector {
    fn from_iter<I: IntoIterator<Item = (ClassId, u32)>>(iter: I) -> Self {
        let mut cv = CompositionVector::default();
        for (k, c) in iter {
            if c > 0 {
                *cv.counts.entry(k).or_insert(0) += c;
            }
        }
        cv
    }
}

/// Ordered partition of a station's classes into castes; `castes[0]` is the
/// highest caste. `k ≺ l` iff `k` sits in a strictly higher caste than `l`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorityRanking {
    castes: Vec<Vec<ClassId>>,
}

impl PriorityRanking {
    /// Checks disjointness and nonemptiness; coverage of a station's class
    /// set is checked by [`PriorityRanking::covers`].
    pub fn new(castes: Vec<Vec<ClassId>>) -> Result<Self> {
        let mut seen = Vec::new();
        for caste in &castes {
            if caste.is_empty() {
                return Err(Error::InvalidSpec("empty caste in priority ranking".into()));
            }
            for &k in caste {
                if seen.contains(&k) {
                    return Err(Error::InvalidSpec(format!("class {k} appears in two castes")));
                }
                seen.push(k);
            }
        }
        Ok(PriorityRanking { castes })
    }

    /// A total ranking from a list of classes, highest first.
    pub fn total(order: &[u16]) -> Result<Self> {
        Self::new(order.iter().map(|&k| vec![ClassId(k)]).collect())
    }

    pub fn castes(&self) -> &[Vec<ClassId>] {
        &self.castes
    }

    pub fn caste_of(&self, k: ClassId) -> Option<usize> {
        self.castes.iter().position(|c| c.contains(&k))
    }

    /// `k ≺ l`: `k` outranks `l`.
    pub fn precedes(&self, k: ClassId, l: ClassId) -> bool {
        match (self.caste_of(k), self.caste_of(l)) {
            (Some(a), Some(b)) => a < b,
            _ => false,
        }
    }

    pub fn is_total(&self) -> bool {
        self.castes.iter().all(|c| c.len() == 1)
    }

    pub fn covers(&self, classes: &[ClassId]) -> bool {
        let n: usize = self.castes.iter().map(Vec::len).sum();
        n == classes.len() && classes.iter().all(|&k| self.caste_of(k).is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueuePolicy {
    Fcfs,
    Lcfs,
    /// Static buffer priority.
    Sbp(PriorityRanking),
}

/// A server protocol: queue policy combined with a service allocation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Protocol {
    pub policy: QueuePolicy,
    pub allocation: ServiceAllocation,
}

impl Protocol {
    pub fn new(policy: QueuePolicy, allocation: ServiceAllocation) -> Self {
        Protocol { policy, allocation }
    }

    pub fn fcfs() -> Self {
        Protocol::new(QueuePolicy::Fcfs, ServiceAllocation::HeadOfQueue)
    }
}

/// Lumped representation of a configuration.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReducedConfig {
    Empty,
    Count(u32),
    HeadAndCastes { head: ClassId, castes: Vec<QueueConfig> },
    Composition(CompositionVector),
}

pub fn composition(p: &QueueConfig) -> CompositionVector {
    p.0.iter().map(|&k| (k, 1)).collect()
}

pub fn head(p: &QueueConfig) -> Result<ClassId> {
    p.0.first().copied().ok_or(Error::EmptyConfiguration)
}

/// 1-based position the new `k`-digit occupies after insertion.
///
/// For the empty configuration this is 1. Otherwise it is at least 2: the
/// job in service is never overtaken.
pub fn insertion_index(policy: &QueuePolicy, p: &QueueConfig, k: ClassId) -> usize {
    let n = p.len();
    if n == 0 {
        return 1;
    }
    match policy {
        QueuePolicy::Fcfs => n + 1,
        QueuePolicy::Lcfs => 2,
        QueuePolicy::Sbp(ranking) => {
            // Insert in front of the longest tail of (k_2..k_n) made only of
            // classes that k outranks.
            let dominated = p.0[1..].iter().rev().take_while(|&&l| ranking.precedes(k, l)).count();
            n + 1 - dominated
        }
    }
}

pub fn insert(policy: &QueuePolicy, p: &QueueConfig, k: ClassId) -> QueueConfig {
    let mut q = p.clone();
    q.insert_in_place(policy, k);
    q
}

/// Removes the first `k`-digit, or returns `p` unchanged when there is none.
pub fn delete(p: &QueueConfig, k: ClassId) -> QueueConfig {
    let mut q = p.clone();
    q.delete_in_place(k);
    q
}

/// Subsequence test: the digits of `p` occur in `q` in the same order.
pub fn is_subconfig(p: &QueueConfig, q: &QueueConfig) -> bool {
    let mut it = q.0.iter();
    p.0.iter().all(|d| it.any(|c| c == d))
}

/// Lumps `p` according to the protocol and class set of its station.
pub fn reduce(p: &QueueConfig, protocol: &Protocol, classes: &[ClassId]) -> Result<ReducedConfig> {
    let kind = reduction_kind(protocol, classes)?;
    if p.is_empty() {
        return Ok(ReducedConfig::Empty);
    }
    Ok(match kind {
        ReductionKind::Count => ReducedConfig::Count(p.len() as u32),
        ReductionKind::Composition => ReducedConfig::Composition(composition(p)),
        ReductionKind::Castes(ranking) => ReducedConfig::HeadAndCastes {
            head: p.0[0],
            castes: ranking
                .castes()
                .iter()
                .map(|caste| QueueConfig(p.0.iter().copied().filter(|k| caste.contains(k)).collect()))
                .collect(),
        },
    })
}

/// Whether [`reduce`] succeeds for this station.
pub fn is_reducible(protocol: &Protocol, classes: &[ClassId]) -> bool {
    reduction_kind(protocol, classes).is_ok()
}

enum ReductionKind<'a> {
    Count,
    Composition,
    Castes(&'a PriorityRanking),
}

fn reduction_kind<'a>(protocol: &'a Protocol, classes: &[ClassId]) -> Result<ReductionKind<'a>> {
    if classes.len() == 1 {
        return Ok(ReductionKind::Count);
    }
    if protocol.allocation.is_order_insensitive() {
        return Ok(ReductionKind::Composition);
    }
    match &protocol.policy {
        QueuePolicy::Sbp(ranking) => Ok(ReductionKind::Castes(ranking)),
        other => Err(Error::UnsupportedReduction(format!(
            "head-of-queue allocation with {other:?} on a multi-class station"
        ))),
    }
}
