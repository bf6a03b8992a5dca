//! φ on a grid of arrival scales and horizons, exactly and by Monte Carlo,
//! with flagged increases.

use qnet::network::builtin_fixture;
use qnet::stability::{monotonicity_table, TableMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = builtin_fixture("tandem2")?;
    let scales = [0.25, 0.5, 0.75, 1.0];
    let steps = [5, 10, 20, 40];
    for mode in [TableMode::Exact, TableMode::MonteCarlo] {
        let table = monotonicity_table(&spec, &scales, &steps, 1.0, mode, 4000, 3)?;
        println!("{mode:?}: {} violations", table.violations());
        print!("{}", table.to_csv());
    }
    Ok(())
}
