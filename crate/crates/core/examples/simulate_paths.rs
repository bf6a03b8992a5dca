//! Sample paths of the uniformized chain on the reentrant FCFS line.

use qnet::network::builtin_fixture;
use qnet::qprocess::{simulate_path, uniformization_rate};
use qnet::rng::RandomStream;
use qnet::state::NetworkState;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = builtin_fixture("fcfs-reentrant")?;
    println!("uniformization rate {}", uniformization_rate(&spec));
    let mut rng = RandomStream::new(7);
    let path = simulate_path(&spec, &NetworkState::empty_for(&spec), 25, &mut rng);
    for (m, xi) in path.iter().enumerate() {
        println!("{m:>3}  {xi}  jobs {}", xi.norm());
    }
    Ok(())
}
