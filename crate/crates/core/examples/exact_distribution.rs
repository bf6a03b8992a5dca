//! Exact n-step laws by breadth-first expansion, plus a continuous-time
//! functional with its truncation bound.

use qnet::exact::{exact_step_distribution, transient_functional, TransientOptions};
use qnet::network::builtin_fixture;
use qnet::state::NetworkState;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = builtin_fixture("lk-sbp")?;
    let start = NetworkState::empty_for(&spec);
    let law = exact_step_distribution(&spec, &start, 6)?;
    println!("{} states after 6 steps, mass {:.15}", law.len(), law.total_mass());
    for (xi, p) in law.sorted().into_iter().take(8) {
        println!("  {xi}  {p:.6}");
    }
    println!("norm law {:?}", law.norm_law());

    let mm1 = builtin_fixture("mm1")?;
    let value = transient_functional(
        &mm1,
        &NetworkState::empty_for(&mm1),
        2.0,
        |xi| (-(xi.norm() as f64)).exp(),
        TransientOptions::new(1e-10),
    )?;
    println!("E exp(-|X(2)|) on mm1 = {:.10} ± {:.1e} ({} steps)", value.value, value.error_bound, value.steps);
    Ok(())
}
