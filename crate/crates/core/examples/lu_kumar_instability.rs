//! The reentrant priority line: both station loads are below one, yet the
//! mean job count keeps growing. The proportional-sharing line stays
//! bounded.

use qnet::network::{builtin_fixture, validate};
use qnet::stability::mean_norm_growth;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let checkpoints = [250, 500, 1000, 2000, 4000];
    for name in ["lk-sbp", "lk-prop"] {
        let spec = builtin_fixture(name)?;
        println!("{name}: station loads {:?}", validate(&spec)?.workload);
        for point in mean_norm_growth(&spec, &checkpoints, 200, 21) {
            println!("  n = {:>5}  E|X_n| = {:>8.2} ± {:.2}", point.steps, point.mean, point.stderr);
        }
    }
    Ok(())
}
