//! Queue configurations under the three queue policies, their reductions
//! and the service allocations they induce.

use qnet::allocation::{allocate, served_class, ServiceAllocation};
use qnet::config::{delete, insert, is_subconfig, ClassId, PriorityRanking, QueueConfig, QueuePolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ranking = PriorityRanking::total(&[3, 1, 2])?;
    let policies =
        [("fcfs", QueuePolicy::Fcfs), ("lcfs", QueuePolicy::Lcfs), ("sbp 3>1>2", QueuePolicy::Sbp(ranking.clone()))];
    let arrivals = [1u16, 2, 3, 1, 3];
    for (name, policy) in &policies {
        let mut p = QueueConfig::empty();
        for &k in &arrivals {
            p = insert(policy, &p, ClassId(k));
        }
        let counts: Vec<String> = p.composition().iter().map(|(k, c)| format!("{k}:{c}")).collect();
        println!("{name:>10}: {p}  composition [{}]", counts.join(" "));
    }

    let p = QueueConfig::from_classes([2, 1, 3, 1]);
    let q = delete(&p, ClassId(1));
    println!("delete 1 from {p}: {q}; subconfiguration: {}", is_subconfig(&q, &p));

    for alloc in [
        ServiceAllocation::HeadOfQueue,
        ServiceAllocation::Egalitarian,
        ServiceAllocation::Proportional,
        ServiceAllocation::preferential(ranking)?,
    ] {
        let weights: Vec<String> = allocate(&alloc, &p).iter().map(|(k, w)| format!("{k}:{w:.3}")).collect();
        println!("{:>12} on {p}: [{}] served {:?}", alloc.name(), weights.join(" "), served_class(&alloc, &p));
    }
    Ok(())
}
