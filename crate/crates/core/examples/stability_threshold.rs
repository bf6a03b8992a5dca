//! Threshold search along one direction by bisection and by Robbins–Monro,
//! next to the exact equilibrium value on mm1.

use qnet::network::builtin_fixture;
use qnet::stability::{
    equilibrium_estimate, product_form_exp_norm, threshold_bisection, threshold_robbins_monro, BisectionOptions,
    ProbeOptions, RobbinsMonroOptions,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = builtin_fixture("mm1")?;
    let probe = ProbeOptions { horizon: 500, alpha: 1.0, reps: 400, seed: 5 };
    let b = threshold_bisection(&spec, &[1.0], 0.3, probe, BisectionOptions { iters: 12, ..Default::default() })?;
    println!("bisection threshold {:.4} after {} probes", b.threshold, b.trace.len());
    let rm =
        threshold_robbins_monro(&spec, &[1.0], 0.3, probe, RobbinsMonroOptions { iters: 4000, ..Default::default() })?;
    println!("robbins-monro threshold {:.4}", rm.threshold);

    let scaled = spec.with_theta(vec![1.0])?;
    let rho = qnet::network::validate(&scaled)?.workload;
    let eq = equilibrium_estimate(&scaled, 200_000, 2_000, 1.0, 20, 9)?;
    println!(
        "equilibrium E exp(-|X|): {:.4} ± {:.4}, product form {:.4}",
        eq.mean,
        eq.stderr,
        product_form_exp_norm(&rho, 1.0)
    );
    Ok(())
}
