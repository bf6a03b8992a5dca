//! Coupled chains from ξ ⊆ ζ: a simulated run with its invariant report,
//! and the exact law of the pair chain.

use qnet::coupling::{exact_pair_law_check, run_coupling, verify_coupling_path};
use qnet::network::builtin_fixture;
use qnet::rng::RandomStream;
use qnet::state::NetworkState;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = builtin_fixture("lk-sbp")?;
    let lower = NetworkState::from_lists(&spec, &[&[1], &[]])?;
    let upper = NetworkState::from_lists(&spec, &[&[1, 4], &[3]])?;
    let mut rng = RandomStream::new(11);
    let run = run_coupling(&spec, &lower, &upper, 200, &mut rng)?;
    println!("{} legs, coupling time {:?}", run.legs.len(), run.tau());
    for (j, leg) in run.legs.iter().enumerate() {
        let report = verify_coupling_path(leg);
        println!("  leg {j}: tau {:?}, {} invariant violations", leg.tau, report.violations());
    }

    let a = NetworkState::from_lists(&spec, &[&[], &[]])?;
    let b = NetworkState::from_lists(&spec, &[&[1], &[]])?;
    let exact = exact_pair_law_check(&spec, &a, &b, 8, 1_000_000)?;
    println!(
        "exact pair law over {} steps: {} pair states, upper TV {:.1e}, norm gap {:.1e}",
        exact.steps, exact.pair_states, exact.upper_tv, exact.pair_norm_gap
    );
    Ok(())
}
