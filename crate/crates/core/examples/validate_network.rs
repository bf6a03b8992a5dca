//! Traffic equations, station loads and the workload matrix of every
//! built-in network.

use qnet::network::{builtin_fixture, validate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in ["mm1", "tandem2", "lk-prop", "lk-sbp", "fcfs-reentrant"] {
        let spec = builtin_fixture(name)?;
        let analysis = validate(&spec)?;
        println!("{name}");
        println!("  effective rates {:?}", analysis.effective_rates);
        println!("  station loads   {:?}", analysis.workload);
        println!("  subcritical {}  reducible {}", analysis.subcritical(), spec.is_reducible());
        for (i, row) in spec.workload_matrix()?.iter().enumerate() {
            println!("  C[{}] = {row:?}", i + 1);
        }
    }
    Ok(())
}
