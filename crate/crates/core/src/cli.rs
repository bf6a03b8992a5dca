//! Command-line front end. Every run writes its outputs and a run manifest
//! (parameters, seed, version, output digests) into the output directory.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::coupling::{exact_pair_law_check, lower_path_failures, run_coupling, verify_coupling_path};
use crate::error::Error;
use crate::exact::{ExactEngine, ExactOptions, DEFAULT_BUDGET};
use crate::network::{builtin_fixture, validate, NetworkSpec, FIXTURE_NAMES};
use crate::qprocess::Sampler;
use crate::rng::RandomStream;
use crate::stability::{
    monotonicity_table, phi_estimate_from, phi_exact_series_from, quadrant_rays, region_scan, threshold_bisection,
    threshold_robbins_monro, BisectionOptions, ProbeOptions, RobbinsMonroOptions, TableMode,
};
use crate::state::NetworkState;

#[derive(Debug, Parser)]
#[command(name = "qnet", version, about = "Q-process toolkit for multi-class queueing networks")]
pub struct Cli {
    /// Master seed for all random streams.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for replications.
    #[arg(long, global = true, env = "QNET_THREADS")]
    pub threads: Option<usize>,
    /// Directory receiving outputs and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Traffic equations, station loads and routing checks.
    Validate(SpecArgs),
    /// Sample paths of the embedded chain as CSV.
    Simulate(SimulateArgs),
    /// Exact n-step law as JSON.
    Exact(ExactArgs),
    /// The functional E[exp(−α‖Ξ_n‖)] from the empty network.
    Phi(PhiArgs),
    /// Table of the functional over arrival scales and horizons.
    Monotone(MonotoneArgs),
    /// Coupled paths from an ordered pair of states, with invariant checks.
    Couple(CoupleArgs),
    /// Stability threshold along one ray of arrival vectors.
    Threshold(ThresholdArgs),
    /// Thresholds over a fan of rays in the first two arrival coordinates.
    Region(RegionArgs),
    /// Built-in example networks.
    Fixtures(FixturesArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SpecArgs {
    /// Network spec: a JSON file, or the name of a built-in fixture.
    #[arg(long)]
    pub spec: String,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Multiplies the arrival vector.
    #[arg(long, default_value_t = 1.0)]
    pub theta_scale: f64,
    /// Start state as JSON, e.g. `[[1,4],[]]`; empty network by default.
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Record every k-th step.
    #[arg(long, default_value_t = 1)]
    pub every: usize,
    #[arg(long, default_value = "simulate.csv")]
    pub out: String,
}

#[derive(Debug, Args, Serialize)]
pub struct ExactArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub steps: usize,
    /// Functional reported next to the law; only `exp-norm` is defined.
    #[arg(long, default_value = "exp-norm")]
    pub functional: String,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: usize,
    #[arg(long, default_value = "exact.json")]
    pub out: String,
}

#[derive(Debug, Args, Serialize)]
pub struct PhiArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long, default_value_t = 1.0)]
    pub theta_scale: f64,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    /// Use the exact engine instead of sampling.
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value = "phi.json")]
    pub out: String,
}

#[derive(Debug, Args, Serialize)]
pub struct MonotoneArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Ascending arrival scales, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub scales: Vec<f64>,
    /// Ascending horizons, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub steps: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value = "monotone.csv")]
    pub out: String,
}

#[derive(Debug, Args, Serialize)]
pub struct CoupleArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Lower start state as JSON.
    #[arg(long)]
    pub lower: String,
    /// Upper start state as JSON; must contain the lower one.
    #[arg(long)]
    pub upper: String,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Also compare the exact pair law at this horizon (adjacent pairs).
    #[arg(long)]
    pub exact_steps: Option<usize>,
    #[arg(long, default_value = "couple.json")]
    pub report: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bisect,
    Rm,
}

#[derive(Debug, Args, Serialize)]
pub struct SearchArgs {
    /// Level ε in (0, 1).
    #[arg(long)]
    pub epsilon: f64,
    /// Horizon n of the finite-step functional.
    #[arg(long, default_value_t = 2_000)]
    pub horizon: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Paths per bisection probe.
    #[arg(long, default_value_t = 1_000)]
    pub reps: usize,
    /// Bisection halvings or stochastic-approximation iterations.
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Ray direction, one nonnegative entry per class.
    #[arg(long, value_delimiter = ',', required = true)]
    pub direction: Vec<f64>,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, value_enum, default_value_t = Method::Bisect)]
    pub method: Method,
    #[arg(long, default_value = "threshold.json")]
    pub out: String,
}

#[derive(Debug, Args, Serialize)]
pub struct RegionArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long, default_value_t = 5)]
    pub rays: usize,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value = "region.json")]
    pub out: String,
}

#[derive(Debug, Args, Serialize)]
pub struct FixturesArgs {
    /// List the fixture names.
    #[arg(long)]
    pub list: bool,
    /// Write the named fixture as a spec document.
    #[arg(long)]
    pub show: Option<String>,
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

#[derive(Debug, Serialize)]
struct OutputDigest {
    path: String,
    sha256: String,
}

/// Record of one invocation. Outputs are reproducible from the recorded
/// parameters and seed; only `wall_clock_seconds` varies between runs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    subcommand: &'static str,
    spec: Option<String>,
    spec_sha256: Option<String>,
    parameters: Value,
    seed: u64,
    threads: Option<usize>,
    version: &'static str,
    wall_clock_seconds: f64,
    outputs: Vec<OutputDigest>,
}

struct Run<'a> {
    out_dir: &'a Path,
    outputs: Vec<(String, Vec<u8>)>,
    spec: Option<(String, String)>,
}

impl Run<'_> {
    fn emit(&mut self, name: &str, bytes: Vec<u8>) {
        self.outputs.push((name.to_string(), bytes));
    }

    fn emit_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(Error::from)?;
        bytes.push(b'\n');
        self.emit(name, bytes);
        Ok(())
    }

    fn load_spec(&mut self, arg: &SpecArgs) -> CliResult<NetworkSpec> {
        let path = Path::new(&arg.spec);
        let (spec, text) = if path.exists() {
            let text = fs::read_to_string(path).map_err(Error::from)?;
            (NetworkSpec::from_json(&text)?, text)
        } else if FIXTURE_NAMES.contains(&arg.spec.as_str()) {
            let spec = builtin_fixture(&arg.spec)?;
            let text = spec.to_json()?;
            (spec, text)
        } else {
            return Err(Failure::Usage(format!("no spec file or fixture named '{}'", arg.spec)));
        };
        self.spec = Some((arg.spec.clone(), hex::encode(Sha256::digest(text.as_bytes()))));
        Ok(spec)
    }
}

fn parse_state(spec: &NetworkSpec, text: Option<&str>) -> CliResult<NetworkState> {
    match text {
        None => Ok(NetworkState::empty_for(spec)),
        Some(t) => {
            let state: NetworkState =
                serde_json::from_str(t).map_err(|e| Failure::Usage(format!("bad state '{t}': {e}")))?;
            state.check(spec).map_err(|e| Failure::Usage(e.to_string()))?;
            Ok(state)
        }
    }
}

fn check_functional(name: &str) -> CliResult<()> {
    if name == "exp-norm" {
        Ok(())
    } else {
        Err(Failure::Usage(format!("unknown functional '{name}', expected exp-norm")))
    }
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Domain(Error::Io(e.into()));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.into_inner().map_err(|e| Failure::Domain(Error::Io(e.into_error())))
}

fn cmd_validate(run: &mut Run<'_>, a: &SpecArgs) -> CliResult<()> {
    let spec = run.load_spec(a)?;
    let r = validate(&spec)?;
    println!("effective arrival rates: {:?}", r.effective_rates);
    for (i, rho) in r.workload.iter().enumerate() {
        println!("station {}: load {rho:.6}", i + 1);
    }
    println!("irreducible: {}, transient routing: {}, subcritical: {}", r.irreducible, r.transient, r.subcritical());
    run.emit_json(
        "validate.json",
        &json!({
            "effective_rates": r.effective_rates,
            "workload": r.workload,
            "irreducible": r.irreducible,
            "transient": r.transient,
            "subcritical": r.subcritical(),
            "vanishing_doublings": r.vanishing_doublings,
        }),
    )
}

fn cmd_simulate(run: &mut Run<'_>, a: &SimulateArgs, seed: u64) -> CliResult<()> {
    let spec = run.load_spec(&a.spec)?.with_theta_scale(a.theta_scale)?;
    validate(&spec)?;
    let start = parse_state(&spec, a.start.as_deref())?;
    if a.every == 0 {
        return Err(Failure::Usage("--every must be at least 1".into()));
    }
    let d = spec.classes();
    let mut header: Vec<String> = ["rep", "step", "total_jobs"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=d).map(|k| format!("class_{k}")));
    let sampler = Sampler::new(&spec);
    let mut rows = Vec::new();
    for r in 0..a.reps {
        let mut rng = RandomStream::substream(seed, r as u64);
        let mut cur = start.clone();
        for m in 0..=a.steps {
            if m > 0 {
                sampler.step(&mut cur, &mut rng);
            }
            if m % a.every == 0 || m == a.steps {
                let mut row = vec![r.to_string(), m.to_string(), cur.norm().to_string()];
                row.extend(cur.class_counts(d).iter().map(u32::to_string));
                rows.push(row);
            }
        }
    }
    println!("{} rows for {} paths of {} steps", rows.len(), a.reps, a.steps);
    let bytes = csv_bytes(&header, rows)?;
    run.emit(&a.out, bytes);
    Ok(())
}

fn cmd_exact(run: &mut Run<'_>, a: &ExactArgs) -> CliResult<()> {
    check_functional(&a.functional)?;
    let spec = run.load_spec(&a.spec)?;
    validate(&spec)?;
    let start = parse_state(&spec, a.start.as_deref())?;
    let law = ExactEngine::new(&spec, ExactOptions { budget: a.budget, ..Default::default() }).run(
        &start,
        a.steps,
        |_, _| {},
    )?;
    let value = law.expect(|s| (-a.alpha * s.norm() as f64).exp());
    println!("{} states; E[exp(-{}·jobs)] = {value:.12}", law.len(), a.alpha);
    run.emit_json(&a.out, &law.to_json_map())
}

fn cmd_phi(run: &mut Run<'_>, a: &PhiArgs, seed: u64) -> CliResult<()> {
    let spec = run.load_spec(&a.spec)?.with_theta_scale(a.theta_scale)?;
    validate(&spec)?;
    let empty = NetworkState::empty_for(&spec);
    let doc = if a.exact {
        let series = phi_exact_series_from(&spec, &empty, a.steps, a.alpha)?;
        let value = series[a.steps];
        println!("phi = {value:.12} (exact)");
        json!({ "mode": "exact", "n": a.steps, "alpha": a.alpha, "value": value, "series": series })
    } else {
        let e = phi_estimate_from(&spec, &empty, a.steps, a.alpha, a.reps, seed)?;
        println!("phi = {:.6} ± {:.6} ({} paths)", e.mean, e.stderr, e.reps);
        json!({ "mode": "monte-carlo", "n": e.n, "alpha": e.alpha, "value": e.mean, "stderr": e.stderr, "reps": e.reps })
    };
    run.emit_json(&a.out, &doc)
}

fn cmd_monotone(run: &mut Run<'_>, a: &MonotoneArgs, seed: u64) -> CliResult<()> {
    let spec = run.load_spec(&a.spec)?;
    validate(&spec)?;
    let mode = if a.exact { TableMode::Exact } else { TableMode::MonteCarlo };
    let t = monotonicity_table(&spec, &a.scales, &a.steps, a.alpha, mode, a.reps, seed).map_err(|e| match e {
        Error::InvalidArgument(m) => Failure::Usage(m),
        e => Failure::Domain(e),
    })?;
    let bytes = t.to_csv().into_bytes();
    print!("{}", String::from_utf8_lossy(&bytes));
    println!("violations: {} in horizon, {} in scale", t.step_violations.len(), t.scale_violations.len());
    run.emit(&a.out, bytes);
    run.emit_json(
        "monotone-violations.json",
        &json!({ "step_violations": t.step_violations, "scale_violations": t.scale_violations, "stderr": t.stderr }),
    )
}

fn cmd_couple(run: &mut Run<'_>, a: &CoupleArgs, seed: u64) -> CliResult<()> {
    let spec = run.load_spec(&a.spec)?;
    validate(&spec)?;
    let lower = parse_state(&spec, Some(&a.lower))?;
    let upper = parse_state(&spec, Some(&a.upper))?;
    let mut paths = Vec::with_capacity(a.reps);
    let mut total_violations = 0;
    for r in 0..a.reps {
        let mut rng = RandomStream::substream(seed, r as u64);
        let run_r = run_coupling(&spec, &lower, &upper, a.steps, &mut rng)?;
        let legs: Vec<Value> = run_r
            .legs
            .iter()
            .map(|leg| {
                let report = verify_coupling_path(leg);
                let lower_failures = lower_path_failures(&spec, leg);
                total_violations += report.violations() + lower_failures.len();
                let last = leg.last();
                json!({
                    "tau": leg.tau,
                    "frozen_steps": last.frozen_count,
                    "lower_departures": last.lower_departures,
                    "upper_departures": last.upper_departures,
                    "checks": report.checks,
                    "lower_path_failures": lower_failures,
                })
            })
            .collect();
        paths.push(json!({ "rep": r, "tau": run_r.tau(), "legs": legs }));
    }
    let coupled = paths.iter().filter(|p| !p["tau"].is_null()).count();
    println!("{coupled}/{} runs coupled within {} steps; {total_violations} invariant violations", a.reps, a.steps);
    let exact = match a.exact_steps {
        Some(n) => Some(exact_pair_law_check(&spec, &lower, &upper, n, DEFAULT_BUDGET)?),
        None => None,
    };
    if let Some(e) = &exact {
        println!("exact pair law at n={}: upper TV {:.2e}", e.steps, e.upper_tv);
    }
    run.emit_json(
        &a.report,
        &json!({ "steps": a.steps, "reps": a.reps, "coupled": coupled, "violations": total_violations, "exact": exact, "paths": paths }),
    )
}

fn probe(s: &SearchArgs, seed: u64) -> ProbeOptions {
    ProbeOptions { horizon: s.horizon, alpha: s.alpha, reps: s.reps, seed }
}

fn cmd_threshold(run: &mut Run<'_>, a: &ThresholdArgs, seed: u64) -> CliResult<()> {
    let spec = run.load_spec(&a.spec)?;
    validate(&spec)?;
    let result = match a.method {
        Method::Bisect => {
            let mut o = BisectionOptions::default();
            if let Some(i) = a.search.iters {
                o.iters = i;
            }
            threshold_bisection(&spec, &a.direction, a.search.epsilon, probe(&a.search, seed), o)?
        }
        Method::Rm => {
            let mut o = RobbinsMonroOptions::default();
            if let Some(i) = a.search.iters {
                o.iters = i;
            }
            threshold_robbins_monro(&spec, &a.direction, a.search.epsilon, probe(&a.search, seed), o)?
        }
    };
    println!("threshold scale {:.6} at horizon {}", result.threshold, result.horizon);
    run.emit_json(&a.out, &result)
}

fn cmd_region(run: &mut Run<'_>, a: &RegionArgs, seed: u64) -> CliResult<()> {
    let spec = run.load_spec(&a.spec)?;
    let rays = quadrant_rays(spec.classes(), a.rays).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut o = BisectionOptions::default();
    if let Some(i) = a.search.iters {
        o.iters = i;
    }
    let scan = region_scan(&spec, &rays, a.search.epsilon, probe(&a.search, seed), o)?;
    for r in &scan.rays {
        println!(
            "direction {:?}: threshold {:.4}, subcritical up to {:.4}",
            r.direction, r.threshold, r.subcritical_scale
        );
    }
    run.emit_json(&a.out, &scan)
}

fn cmd_fixtures(run: &mut Run<'_>, a: &FixturesArgs) -> CliResult<()> {
    if let Some(name) = &a.show {
        let spec = builtin_fixture(name).map_err(|e| Failure::Usage(e.to_string()))?;
        let text = spec.to_json()?;
        println!("{text}");
        run.emit(&format!("{name}.json"), format!("{text}\n").into_bytes());
        return Ok(());
    }
    if !a.list {
        return Err(Failure::Usage("fixtures needs --list or --show NAME".into()));
    }
    let listing: String = FIXTURE_NAMES.iter().map(|n| format!("{n}\n")).collect();
    print!("{listing}");
    run.emit("fixtures.txt", listing.into_bytes());
    Ok(())
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Validate(_) => "validate",
        Command::Simulate(_) => "simulate",
        Command::Exact(_) => "exact",
        Command::Phi(_) => "phi",
        Command::Monotone(_) => "monotone",
        Command::Couple(_) => "couple",
        Command::Threshold(_) => "threshold",
        Command::Region(_) => "region",
        Command::Fixtures(_) => "fixtures",
    }
}

fn parameters(c: &Command) -> Value {
    let v = match c {
        Command::Validate(a) => serde_json::to_value(a),
        Command::Simulate(a) => serde_json::to_value(a),
        Command::Exact(a) => serde_json::to_value(a),
        Command::Phi(a) => serde_json::to_value(a),
        Command::Monotone(a) => serde_json::to_value(a),
        Command::Couple(a) => serde_json::to_value(a),
        Command::Threshold(a) => serde_json::to_value(a),
        Command::Region(a) => serde_json::to_value(a),
        Command::Fixtures(a) => serde_json::to_value(a),
    };
    v.unwrap_or(Value::Null)
}

fn execute(cli: &Cli) -> CliResult<()> {
    let started = Instant::now();
    let mut run = Run { out_dir: &cli.out_dir, outputs: Vec::new(), spec: None };
    let seed = cli.seed;
    match &cli.command {
        Command::Validate(a) => cmd_validate(&mut run, a)?,
        Command::Simulate(a) => cmd_simulate(&mut run, a, seed)?,
        Command::Exact(a) => cmd_exact(&mut run, a)?,
        Command::Phi(a) => cmd_phi(&mut run, a, seed)?,
        Command::Monotone(a) => cmd_monotone(&mut run, a, seed)?,
        Command::Couple(a) => cmd_couple(&mut run, a, seed)?,
        Command::Threshold(a) => cmd_threshold(&mut run, a, seed)?,
        Command::Region(a) => cmd_region(&mut run, a, seed)?,
        Command::Fixtures(a) => cmd_fixtures(&mut run, a)?,
    }
    fs::create_dir_all(run.out_dir).map_err(Error::from)?;
    let mut outputs = Vec::new();
    for (name, bytes) in &run.outputs {
        fs::write(run.out_dir.join(name), bytes).map_err(Error::from)?;
        outputs.push(OutputDigest { path: name.clone(), sha256: hex::encode(Sha256::digest(bytes)) });
    }
    let name = subcommand_name(&cli.command);
    let (spec, spec_sha256) = match run.spec.take() {
        Some((s, d)) => (Some(s), Some(d)),
        None => (None, None),
    };
    let manifest = RunManifest {
        subcommand: name,
        spec,
        spec_sha256,
        parameters: parameters(&cli.command),
        seed,
        threads: cli.threads,
        version: env!("CARGO_PKG_VERSION"),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(Error::from)?;
    bytes.push(b'\n');
    fs::write(run.out_dir.join(format!("{name}.manifest.json")), bytes).map_err(Error::from)?;
    Ok(())
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // Fails only if a pool already exists, e.g. a second call in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match execute(&cli) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}
