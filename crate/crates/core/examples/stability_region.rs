//! Star-shaped stability region estimate for the two-station tandem,
//! printed beside the subcriticality boundary on each ray.

use qnet::network::builtin_fixture;
use qnet::stability::{quadrant_rays, region_scan, BisectionOptions, ProbeOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = builtin_fixture("tandem2")?;
    let rays = quadrant_rays(spec.classes(), 5)?;
    let probe = ProbeOptions { horizon: 400, alpha: 1.0, reps: 300, seed: 1 };
    let scan = region_scan(&spec, &rays, 0.3, probe, BisectionOptions { iters: 10, ..Default::default() })?;
    println!("{:>18}  {:>9}  {:>11}", "direction", "threshold", "subcritical");
    for ray in &scan.rays {
        let d: Vec<String> = ray.direction.iter().map(|x| format!("{x:.3}")).collect();
        println!("{:>18}  {:>9.4}  {:>11.4}", d.join(","), ray.threshold, ray.subcritical_scale);
    }
    Ok(())
}
