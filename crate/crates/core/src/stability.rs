//! Stability-region tooling built on the functional φ_n(θ) = E[exp(−α‖Ξ_n‖)]
//! started from the empty network: Monte Carlo and exact evaluation,
//! monotonicity tables, regenerative cycle lengths, equilibrium averages,
//! and threshold search along rays of arrival vectors.
//!
//! All Monte Carlo estimators take a master seed; replication `r` uses
//! substream `r`, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{ExactEngine, ExactOptions, DEFAULT_BUDGET};
use crate::network::{validate, NetworkSpec};
use crate::qprocess::{simulate_final, Sampler};
use crate::rng::RandomStream;
use crate::state::NetworkState;

/// Sample mean and its standard error.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
    pub n: usize,
    pub alpha: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("decay must be positive, got {alpha}")))
    }
}

/// Norms ‖Ξ_m‖ at each checkpoint m (ascending) for `reps` independent
/// paths from `xi0`; row `r` is replication `r`.
pub fn norm_samples(
    spec: &NetworkSpec,
    xi0: &NetworkState,
    checkpoints: &[usize],
    reps: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    debug_assert!(checkpoints.windows(2).all(|w| w[0] <= w[1]));
    let sampler = Sampler::new(spec);
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = RandomStream::substream(seed, r as u64);
            let mut cur = xi0.clone();
            let mut at = 0;
            checkpoints
                .iter()
                .map(|&m| {
                    cur = simulate_final(&sampler, &cur, m - at, &mut rng);
                    at = m;
                    cur.norm()
                })
                .collect()
        })
        .collect()
}

/// Monte Carlo estimate of E[exp(−α‖Ξ_n‖)] from `xi0`.
pub fn phi_estimate_from(
    spec: &NetworkSpec,
    xi0: &NetworkState,
    n: usize,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<PhiEstimate> {
    check_alpha(alpha)?;
    let values: Vec<f64> =
        norm_samples(spec, xi0, &[n], reps, seed).into_iter().map(|row| (-alpha * row[0] as f64).exp()).collect();
    let (mean, stderr) = mean_and_stderr(&values);
    Ok(PhiEstimate { mean, stderr, reps, n, alpha })
}

/// Monte Carlo estimate of φ_n(θ) from the empty network.
pub fn phi_estimate(
    spec: &NetworkSpec,
    theta: &[f64],
    n: usize,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<PhiEstimate> {
    let spec = spec.with_theta(theta.to_vec())?;
    phi_estimate_from(&spec, &NetworkState::empty_for(&spec), n, alpha, reps, seed)
}

fn exact_options(spec: &NetworkSpec) -> ExactOptions {
    // φ depends on the norm only, which every reduction preserves.
    ExactOptions { reduced: spec.is_reducible(), budget: DEFAULT_BUDGET, prune_below: 0.0 }
}

/// Exact E[exp(−α‖Ξ_m‖)] from `xi0` for m = 0..=n.
pub fn phi_exact_series_from(spec: &NetworkSpec, xi0: &NetworkState, n: usize, alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let mut out = Vec::with_capacity(n + 1);
    ExactEngine::new(spec, exact_options(spec)).run(xi0, n, |_, law| {
        out.push(law.expect(|s| (-alpha * s.norm() as f64).exp()));
    })?;
    Ok(out)
}

/// Exact φ_m(θ) from the empty network for m = 0..=n.
pub fn phi_exact_series(spec: &NetworkSpec, theta: &[f64], n: usize, alpha: f64) -> Result<Vec<f64>> {
    let spec = spec.with_theta(theta.to_vec())?;
    phi_exact_series_from(&spec, &NetworkState::empty_for(&spec), n, alpha)
}

pub fn phi_exact(spec: &NetworkSpec, theta: &[f64], n: usize, alpha: f64) -> Result<f64> {
    Ok(*phi_exact_series(spec, theta, n, alpha)?.last().expect("n + 1 values"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableMode {
    Exact,
    MonteCarlo,
}

/// A flagged increase: `value` at the later cell exceeds the earlier one
/// by `excess` beyond the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub scale_index: usize,
    pub step_index: usize,
    pub excess: f64,
}

/// φ values on a grid of arrival scales (rows) and horizons (columns).
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityTable {
    pub mode: TableMode,
    pub scales: Vec<f64>,
    pub steps: Vec<usize>,
    pub alpha: f64,
    pub values: Vec<Vec<f64>>,
    /// Empty in exact mode.
    pub stderr: Vec<Vec<f64>>,
    /// Increases along a row (later horizon larger).
    pub step_violations: Vec<Violation>,
    /// Increases down a column (larger scale larger).
    pub scale_violations: Vec<Violation>,
}

impl MonotonicityTable {
    pub fn violations(&self) -> usize {
        self.step_violations.len() + self.scale_violations.len()
    }

    /// One row per scale, one column per horizon.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["scale".to_string()];
        header.extend(self.steps.iter().map(|n| format!("n={n}")));
        w.write_record(&header).expect("in-memory write");
        for (a, row) in self.scales.iter().zip(&self.values) {
            let mut record = vec![a.to_string()];
            record.extend(row.iter().map(|v| format!("{v:.12}")));
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

pub const EXACT_TABLE_TOL: f64 = 1e-10;
pub const MC_TABLE_SIGMAS: f64 = 3.0;

/// The table of φ_n(a·θ) over `scales` × `steps`, where θ is the spec's
/// arrival vector. Both grids must be ascending. In Monte Carlo mode each
/// scale uses one set of `reps` paths observed at every horizon, and a
/// violation needs an increase above 3 pooled standard errors.
pub fn monotonicity_table(
    spec: &NetworkSpec,
    scales: &[f64],
    steps: &[usize],
    alpha: f64,
    mode: TableMode,
    reps: usize,
    seed: u64,
) -> Result<MonotonicityTable> {
    check_alpha(alpha)?;
    if scales.windows(2).any(|w| w[0] >= w[1]) || steps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("grids must be strictly ascending".into()));
    }
    let mut values = Vec::with_capacity(scales.len());
    let mut stderr = Vec::new();
    for (si, &a) in scales.iter().enumerate() {
        let scaled = spec.with_theta_scale(a)?;
        match mode {
            TableMode::Exact => {
                let max_n = steps.last().copied().unwrap_or(0);
                let series = phi_exact_series_from(&scaled, &NetworkState::empty_for(&scaled), max_n, alpha)?;
                values.push(steps.iter().map(|&n| series[n]).collect());
            }
            TableMode::MonteCarlo => {
                let rows =
                    norm_samples(&scaled, &NetworkState::empty_for(&scaled), steps, reps, seed ^ (si as u64) << 32);
                let mut row_values = Vec::new();
                let mut row_err = Vec::new();
                for j in 0..steps.len() {
                    let xs: Vec<f64> = rows.iter().map(|r| (-alpha * r[j] as f64).exp()).collect();
                    let (m, s) = mean_and_stderr(&xs);
                    row_values.push(m);
                    row_err.push(s);
                }
                values.push(row_values);
                stderr.push(row_err);
            }
        }
    }
    let allowance = |(a, b): ((usize, usize), (usize, usize))| -> f64 {
        match mode {
            TableMode::Exact => EXACT_TABLE_TOL,
            TableMode::MonteCarlo => {
                let (sa, sb) = (stderr[a.0][a.1], stderr[b.0][b.1]);
                MC_TABLE_SIGMAS * (sa * sa + sb * sb).sqrt()
            }
        }
    };
    let mut step_violations = Vec::new();
    let mut scale_violations = Vec::new();
    for si in 0..scales.len() {
        for j in 1..steps.len() {
            let excess = values[si][j] - values[si][j - 1] - allowance(((si, j), (si, j - 1)));
            if excess > 0.0 {
                step_violations.push(Violation { scale_index: si, step_index: j, excess });
            }
        }
    }
    for si in 1..scales.len() {
        for j in 0..steps.len() {
            let excess = values[si][j] - values[si - 1][j] - allowance(((si, j), (si - 1, j)));
            if excess > 0.0 {
                scale_violations.push(Violation { scale_index: si, step_index: j, excess });
            }
        }
    }
    Ok(MonotonicityTable {
        mode,
        scales: scales.to_vec(),
        steps: steps.to_vec(),
        alpha,
        values,
        stderr,
        step_violations,
        scale_violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleEstimate {
    /// Mean steps from the empty network until it is empty again after
    /// having left, over uncensored cycles; `None` if there are none.
    pub mean_return: Option<f64>,
    pub stderr: Option<f64>,
    /// Fraction of cycles still running at the cap.
    pub censor_fraction: f64,
    pub cycles: usize,
    /// No arrivals at all: the empty network is never left.
    pub frozen_at_empty: bool,
}

/// Regenerative cycle lengths from ∅, counted in embedded steps including
/// the idle steps before the first arrival, censored at `cap`.
pub fn cycle_estimate(spec: &NetworkSpec, cap: usize, reps: usize, seed: u64) -> Result<CycleEstimate> {
    if cap == 0 {
        return Err(Error::InvalidArgument("cycle cap must be at least 1".into()));
    }
    if spec.theta().iter().all(|&t| t == 0.0) {
        return Ok(CycleEstimate {
            mean_return: None,
            stderr: None,
            censor_fraction: 1.0,
            cycles: reps,
            frozen_at_empty: true,
        });
    }
    let sampler = Sampler::new(spec);
    let lengths: Vec<Option<usize>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = RandomStream::substream(seed, r as u64);
            let mut cur = NetworkState::empty_for(spec);
            let mut left = false;
            for m in 1..=cap {
                sampler.step(&mut cur, &mut rng);
                if cur.is_empty() {
                    if left {
                        return Some(m);
                    }
                } else {
                    left = true;
                }
            }
            None
        })
        .collect();
    let done: Vec<f64> = lengths.iter().flatten().map(|&m| m as f64).collect();
    let censored = lengths.len() - done.len();
    let (mean, se) = mean_and_stderr(&done);
    Ok(CycleEstimate {
        mean_return: (!done.is_empty()).then_some(mean),
        stderr: (!done.is_empty()).then_some(se),
        censor_fraction: censored as f64 / reps.max(1) as f64,
        cycles: reps,
        frozen_at_empty: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumEstimate {
    pub mean: f64,
    /// Batch-means standard error.
    pub stderr: f64,
    pub steps: usize,
    pub batches: usize,
}

/// Long-run average of exp(−α‖Ξ_m‖) along one path from ∅, after
/// `burn_in` discarded steps. The embedded chain shares the stationary law
/// of the continuous-time process.
pub fn equilibrium_estimate(
    spec: &NetworkSpec,
    steps: usize,
    burn_in: usize,
    alpha: f64,
    batches: usize,
    seed: u64,
) -> Result<EquilibriumEstimate> {
    check_alpha(alpha)?;
    if batches < 2 || steps < batches {
        return Err(Error::InvalidArgument("need at least two nonempty batches".into()));
    }
    let sampler = Sampler::new(spec);
    let mut rng = RandomStream::new(seed);
    let mut cur = simulate_final(&sampler, &NetworkState::empty_for(spec), burn_in, &mut rng);
    let size = steps / batches;
    let mut means = Vec::with_capacity(batches);
    for _ in 0..batches {
        let mut acc = 0.0;
        for _ in 0..size {
            sampler.step(&mut cur, &mut rng);
            acc += (-alpha * cur.norm() as f64).exp();
        }
        means.push(acc / size as f64);
    }
    let (mean, stderr) = mean_and_stderr(&means);
    Ok(EquilibriumEstimate { mean, stderr, steps: size * batches, batches })
}

/// ⟨π, exp(−α‖·‖)⟩ for independent geometric queues with loads `rho`:
/// Π (1 − ρ_i)/(1 − ρ_i e^{−α}).
pub fn product_form_exp_norm(rho: &[f64], alpha: f64) -> f64 {
    let z = (-alpha).exp();
    rho.iter().map(|r| (1.0 - r) / (1.0 - r * z)).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMethod {
    Bisection,
    RobbinsMonro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub scale: f64,
    pub value: f64,
}

/// A root of φ(a) = ε along a ray; the threshold arrival vector is
/// `threshold · direction`.
#[derive(Debug, Clone, Serialize)]
pub struct RaySearchResult {
    pub direction: Vec<f64>,
    pub threshold: f64,
    pub method: SearchMethod,
    pub epsilon: f64,
    /// Horizon of the finite-step proxy the result refers to.
    pub horizon: usize,
    pub trace: Vec<TraceEntry>,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {epsilon}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionOptions {
    pub iters: usize,
    pub initial_scale: f64,
    /// Doubling stops here with a bracket failure.
    pub max_scale: f64,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        BisectionOptions { iters: 20, initial_scale: 1.0, max_scale: 1024.0 }
    }
}

/// Root of a non-increasing `oracle` at level ε: bracket [0, hi] with hi
/// doubled until oracle(hi) < ε, then `iters` halvings. Returns the
/// bracket midpoint and the probe trace.
pub fn bisect_root<F>(mut oracle: F, epsilon: f64, options: BisectionOptions) -> Result<(f64, Vec<TraceEntry>)>
where
    F: FnMut(f64) -> Result<f64>,
{
    check_epsilon(epsilon)?;
    let mut trace = Vec::new();
    let mut lo = 0.0;
    let mut hi = options.initial_scale;
    loop {
        let v = oracle(hi)?;
        trace.push(TraceEntry { scale: hi, value: v });
        if v < epsilon {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > options.max_scale {
            return Err(Error::BracketFailure { epsilon, max_scale: options.max_scale });
        }
    }
    for _ in 0..options.iters {
        let mid = 0.5 * (lo + hi);
        let v = oracle(mid)?;
        trace.push(TraceEntry { scale: mid, value: v });
        if v < epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((0.5 * (lo + hi), trace))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobbinsMonroOptions {
    /// Gain numerator c in a_m = c/(m₀ + m).
    pub gain: f64,
    /// Gain offset m₀.
    pub offset: f64,
    pub iters: usize,
    pub initial_scale: f64,
    /// Iterates are clamped at or above this.
    pub min_scale: f64,
    /// Fraction of the trace, from the end, averaged into the estimate.
    pub tail_fraction: f64,
}

impl Default for RobbinsMonroOptions {
    fn default() -> Self {
        RobbinsMonroOptions {
            gain: 8.0,
            offset: 10.0,
            iters: 10_000,
            initial_scale: 1.0,
            min_scale: 1e-6,
            tail_fraction: 0.5,
        }
    }
}

/// Stochastic approximation of the root of a non-increasing mean function
/// observed through `noisy`: a_{m+1} = max(a_min, a_m + g_m(φ̂(a_m) − ε)).
/// Returns the average of the trace tail and the trace.
pub fn robbins_monro<F>(mut noisy: F, epsilon: f64, options: RobbinsMonroOptions) -> Result<(f64, Vec<TraceEntry>)>
where
    F: FnMut(f64, u64) -> Result<f64>,
{
    check_epsilon(epsilon)?;
    if options.iters == 0 {
        return Err(Error::InvalidArgument("at least one iteration".into()));
    }
    let mut a = options.initial_scale.max(options.min_scale);
    let mut trace = Vec::with_capacity(options.iters);
    for m in 0..options.iters {
        let v = noisy(a, m as u64)?;
        trace.push(TraceEntry { scale: a, value: v });
        let gain = options.gain / (options.offset + m as f64);
        a = (a + gain * (v - epsilon)).max(options.min_scale);
    }
    let tail = ((options.iters as f64 * options.tail_fraction).ceil() as usize).clamp(1, options.iters);
    let estimate = trace[options.iters - tail..].iter().map(|t| t.scale).sum::<f64>() / tail as f64;
    Ok((estimate, trace))
}

fn check_direction(spec: &NetworkSpec, v: &[f64]) -> Result<()> {
    if v.len() != spec.classes() {
        return Err(Error::DimensionMismatch(format!(
            "direction has {} entries, network has {} classes",
            v.len(),
            spec.classes()
        )));
    }
    if v.iter().any(|&x| !(x >= 0.0)) || v.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidArgument("direction must be nonnegative and nonzero".into()));
    }
    Ok(())
}

fn along(v: &[f64], a: f64) -> Vec<f64> {
    v.iter().map(|x| a * x).collect()
}

/// Parameters of a Monte Carlo threshold probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    pub horizon: usize,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Bisection on a ↦ φ̂_n(a·v). Every probe reuses the same seed, so the
/// estimated curve is smooth in a and the comparisons share their noise.
pub fn threshold_bisection(
    spec: &NetworkSpec,
    direction: &[f64],
    epsilon: f64,
    probe: ProbeOptions,
    options: BisectionOptions,
) -> Result<RaySearchResult> {
    check_direction(spec, direction)?;
    check_alpha(probe.alpha)?;
    let oracle = |a: f64| -> Result<f64> {
        Ok(phi_estimate(spec, &along(direction, a), probe.horizon, probe.alpha, probe.reps, probe.seed)?.mean)
    };
    let (threshold, trace) = bisect_root(oracle, epsilon, options)?;
    Ok(RaySearchResult {
        direction: direction.to_vec(),
        threshold,
        method: SearchMethod::Bisection,
        epsilon,
        horizon: probe.horizon,
        trace,
    })
}

/// Robbins–Monro on a ↦ φ_n(a·v) with one simulated path per iterate.
pub fn threshold_robbins_monro(
    spec: &NetworkSpec,
    direction: &[f64],
    epsilon: f64,
    probe: ProbeOptions,
    options: RobbinsMonroOptions,
) -> Result<RaySearchResult> {
    check_direction(spec, direction)?;
    check_alpha(probe.alpha)?;
    let noisy = |a: f64, m: u64| -> Result<f64> {
        let scaled = spec.with_theta(along(direction, a))?;
        let sampler = Sampler::new(&scaled);
        let mut rng = RandomStream::substream(probe.seed, m);
        let end = simulate_final(&sampler, &NetworkState::empty_for(&scaled), probe.horizon, &mut rng);
        Ok((-probe.alpha * end.norm() as f64).exp())
    };
    let (threshold, trace) = robbins_monro(noisy, epsilon, options)?;
    Ok(RaySearchResult {
        direction: direction.to_vec(),
        threshold,
        method: SearchMethod::RobbinsMonro,
        epsilon,
        horizon: probe.horizon,
        trace,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RayResult {
    pub direction: Vec<f64>,
    pub threshold: f64,
    /// Largest scale with every station load below one along this ray.
    pub subcritical_scale: f64,
    pub trace: Vec<TraceEntry>,
}

/// Star-shaped under-approximation of the stability region from per-ray
/// thresholds, next to the subcriticality polytope {θ ≥ 0 : Cθ < 1}.
#[derive(Debug, Clone, Serialize)]
pub struct RegionScan {
    pub epsilon: f64,
    pub horizon: usize,
    pub rays: Vec<RayResult>,
    /// Rows of C: station i is subcritical iff Σ_k C_ik θ_k < 1.
    pub subcritical_polytope: Vec<Vec<f64>>,
    /// Polygon vertices threshold · direction, in ray order.
    pub polygon: Vec<Vec<f64>>,
}

/// `k` unit directions spread over the positive quadrant of the first two
/// classes, endpoints excluded.
pub fn quadrant_rays(classes: usize, k: usize) -> Result<Vec<Vec<f64>>> {
    if classes < 2 || k == 0 {
        return Err(Error::InvalidArgument("a planar scan needs two classes and at least one ray".into()));
    }
    Ok((1..=k)
        .map(|j| {
            let angle = std::f64::consts::FRAC_PI_2 * j as f64 / (k + 1) as f64;
            let mut v = vec![0.0; classes];
            v[0] = angle.cos();
            v[1] = angle.sin();
            v
        })
        .collect())
}

/// Largest a with max_i ρ_i(a·v) < 1, i.e. 1 / max_i (Cv)_i.
pub fn subcritical_scale(spec: &NetworkSpec, direction: &[f64]) -> Result<f64> {
    let c = spec.workload_matrix()?;
    let peak = c.iter().map(|row| row.iter().zip(direction).map(|(a, b)| a * b).sum::<f64>()).fold(0.0, f64::max);
    Ok(if peak > 0.0 { 1.0 / peak } else { f64::INFINITY })
}

pub fn region_scan(
    spec: &NetworkSpec,
    rays: &[Vec<f64>],
    epsilon: f64,
    probe: ProbeOptions,
    options: BisectionOptions,
) -> Result<RegionScan> {
    validate(spec)?;
    let results = rays
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let probe = ProbeOptions { seed: probe.seed.wrapping_add(j as u64), ..probe };
            let r = threshold_bisection(spec, v, epsilon, probe, options)?;
            Ok(RayResult {
                direction: v.clone(),
                threshold: r.threshold,
                subcritical_scale: subcritical_scale(spec, v)?,
                trace: r.trace,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let polygon = results.iter().map(|r| along(&r.direction, r.threshold)).collect();
    Ok(RegionScan {
        epsilon,
        horizon: probe.horizon,
        rays: results,
        subcritical_polytope: spec.workload_matrix()?,
        polygon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormGrowthPoint {
    pub steps: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// E‖Ξ_n‖ from the empty network at each checkpoint.
pub fn mean_norm_growth(spec: &NetworkSpec, checkpoints: &[usize], reps: usize, seed: u64) -> Vec<NormGrowthPoint> {
    let rows = norm_samples(spec, &NetworkState::empty_for(spec), checkpoints, reps, seed);
    checkpoints
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let xs: Vec<f64> = rows.iter().map(|r| r[j] as f64).collect();
            let (mean, stderr) = mean_and_stderr(&xs);
            NormGrowthPoint { steps: n, mean, stderr }
        })
        .collect()
}
