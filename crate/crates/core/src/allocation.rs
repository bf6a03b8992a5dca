//! Service allocations: how a station's capacity is split over the classes
//! present in its buffer.
//!
//! Every allocation here yields rational weights (1, 1/#σ, x_k/‖x‖), so the
//! vector keeps them as exact fractions and converts to `f64` on demand.

use num_rational::Ratio;

use crate::config::{ClassId, PriorityRanking, QueueConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ServiceAllocation {
    HeadOfQueue,
    Egalitarian,
    Proportional,
    /// Preemptive priority: all capacity to the highest-ranked class present.
    Preferential(PriorityRanking),
}

impl ServiceAllocation {
    /// Preferential allocation needs a total ranking.
    pub fn preferential(ranking: PriorityRanking) -> Result<Self> {
        if !ranking.is_total() {
            return Err(Error::InvalidSpec("preferential allocation requires a total priority ranking".into()));
        }
        Ok(ServiceAllocation::Preferential(ranking))
    }

    /// Depends on the configuration only through its composition vector.
    pub fn is_order_insensitive(&self) -> bool {
        !matches!(self, ServiceAllocation::HeadOfQueue)
    }

    /// At most one class receives service at a time.
    pub fn is_indivisible(&self) -> bool {
        matches!(self, ServiceAllocation::HeadOfQueue | ServiceAllocation::Preferential(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            ServiceAllocation::HeadOfQueue => "hq",
            ServiceAllocation::Egalitarian => "egalitarian",
            ServiceAllocation::Proportional => "proportional",
            ServiceAllocation::Preferential(_) => "preferential",
        }
    }
}

/// Service fractions per class; empty for the empty configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct AllocationVector {
    weights: Vec<(ClassId, Ratio<u32>)>,
}

impl AllocationVector {
    pub fn weight(&self, k: ClassId) -> f64 {
        let r = self.weight_exact(k);
        *r.numer() as f64 / *r.denom() as f64
    }

    pub fn weight_exact(&self, k: ClassId) -> Ratio<u32> {
        self.weights.iter().find(|(c, _)| *c == k).map(|&(_, w)| w).unwrap_or_else(|| Ratio::from_integer(0))
    }

    /// Nonzero entries in increasing class order.
    pub fn iter(&self) -> impl Iterator<Item = (ClassId, f64)> + '_ {
        self.weights.iter().map(|&(k, w)| (k, *w.numer() as f64 / *w.denom() as f64))
    }

    pub fn total(&self) -> Ratio<u32> {
        self.weights.iter().fold(Ratio::from_integer(0), |acc, &(_, w)| acc + w)
    }

    fn single(k: ClassId) -> Self {
        AllocationVector { weights: vec![(k, Ratio::from_integer(1))] }
    }
}

/// Class receiving all of the service under an indivisible allocation.
/// `None` for the empty configuration or a divisible allocation.
pub fn served_class(alloc: &ServiceAllocation, p: &QueueConfig) -> Option<ClassId> {
    match alloc {
        ServiceAllocation::HeadOfQueue => p.digits().first().copied(),
        ServiceAllocation::Preferential(ranking) => {
            p.digits().iter().copied().min_by_key(|&k| ranking.caste_of(k).unwrap_or(usize::MAX))
        }
        _ => None,
    }
}

pub fn allocate(alloc: &ServiceAllocation, p: &QueueConfig) -> AllocationVector {
    if p.is_empty() {
        return AllocationVector::default();
    }
    match alloc {
        ServiceAllocation::HeadOfQueue | ServiceAllocation::Preferential(_) => {
            AllocationVector::single(served_class(alloc, p).expect("nonempty"))
        }
        ServiceAllocation::Egalitarian => {
            let x = p.composition();
            let n = x.support_size() as u32;
            AllocationVector { weights: x.support().map(|k| (k, Ratio::new(1, n))).collect() }
        }
        ServiceAllocation::Proportional => {
            let x = p.composition();
            let n = x.norm();
            AllocationVector { weights: x.iter().map(|(k, c)| (k, Ratio::new(c, n))).collect() }
        }
    }
}
