//! Network definitions and routing algebra.
//!
//! A network assigns each class to one station, gives every class an
//! external arrival rate θ_k and a service rate β_k, and routes completed
//! class-k jobs to class l with probability R_kl (leaving with the row
//! deficit R_k0).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::allocation::ServiceAllocation;
use crate::config::{is_reducible, ClassId, PriorityRanking, Protocol, QueuePolicy};
use crate::error::{Error, Result};

/// Entries of R^(2^j) below this count as vanished.
const TRANSIENCE_EPS: f64 = 1e-12;
const TRANSIENCE_MAX_DOUBLINGS: u32 = 64;
const RESIDUAL_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-12;

pub const FIXTURE_NAMES: [&str; 5] = ["mm1", "tandem2", "lk-prop", "lk-sbp", "fcfs-reentrant"];

#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub classes: Vec<ClassId>,
    pub protocol: Protocol,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    classes: usize,
    stations: Vec<Station>,
    theta: Vec<f64>,
    beta: Vec<f64>,
    routing: Vec<Vec<f64>>,
    station_of: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutingAnalysis {
    /// γ = (I − R')⁻¹ θ.
    pub effective_rates: Vec<f64>,
    /// ρ_i = Σ_{k∈K_i} γ_k / β_k.
    pub workload: Vec<f64>,
    pub irreducible: bool,
    pub transient: bool,
    /// Number of squarings after which R^(2^j) vanished.
    pub vanishing_doublings: u32,
}

impl RoutingAnalysis {
    pub fn subcritical(&self) -> bool {
        self.workload.iter().all(|&r| r < 1.0)
    }
}

impl NetworkSpec {
    /// Structural validation: dimensions, station partition, rate signs,
    /// routing entries and protocol compatibility. Transience is checked by
    /// [`validate`].
    pub fn new(
        classes: usize,
        stations: Vec<Station>,
        theta: Vec<f64>,
        beta: Vec<f64>,
        routing: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let d = classes;
        if d == 0 {
            return Err(Error::InvalidSpec("at least one class is required".into()));
        }
        if d > u16::MAX as usize {
            return Err(Error::InvalidSpec("too many classes".into()));
        }
        if theta.len() != d || beta.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "{d} classes but {} arrival and {} service rates",
                theta.len(),
                beta.len()
            )));
        }
        if routing.len() != d || routing.iter().any(|row| row.len() != d) {
            return Err(Error::DimensionMismatch(format!("routing matrix must be {d}x{d}")));
        }
        for (k, &t) in theta.iter().enumerate() {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::NegativeRate(format!("theta[{}] = {t}", k + 1)));
            }
        }
        for (k, &b) in beta.iter().enumerate() {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::NegativeRate(format!("beta[{}] = {b} must be positive", k + 1)));
            }
        }
        for (k, row) in routing.iter().enumerate() {
            if row.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
                return Err(Error::InvalidSpec(format!("routing row {} has entries outside [0,1]", k + 1)));
            }
            if row.iter().sum::<f64>() > 1.0 + 1e-12 {
                return Err(Error::InvalidSpec(format!("routing row {} sums above 1", k + 1)));
            }
        }
        let mut station_of = vec![usize::MAX; d];
        for (i, st) in stations.iter().enumerate() {
            if st.classes.is_empty() {
                return Err(Error::InvalidSpec(format!("station {} has no classes", i + 1)));
            }
            for &k in &st.classes {
                if k.0 == 0 || k.index() >= d {
                    return Err(Error::InvalidSpec(format!("class {k} out of range 1..={d}")));
                }
                if station_of[k.index()] != usize::MAX {
                    return Err(Error::InvalidSpec(format!("class {k} assigned to two stations")));
                }
                station_of[k.index()] = i;
            }
            check_protocol(i, st)?;
        }
        if let Some(k) = station_of.iter().position(|&s| s == usize::MAX) {
            return Err(Error::InvalidSpec(format!("class {} not assigned to a station", k + 1)));
        }
        Ok(NetworkSpec { classes, stations, theta, beta, routing, station_of })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn routing(&self) -> &[Vec<f64>] {
        &self.routing
    }

    /// 0-based station serving class `k`.
    pub fn station_of(&self, k: ClassId) -> usize {
        self.station_of[k.index()]
    }

    /// R_kl for l ≥ 1, or the exit probability R_k0 for `l = 0`.
    pub fn route(&self, k: ClassId, l: u16) -> f64 {
        let row = &self.routing[k.index()];
        if l == 0 {
            (1.0 - row.iter().sum::<f64>()).max(0.0)
        } else {
            row[l as usize - 1]
        }
    }

    /// β̄_i, the fastest service rate at station `i`.
    pub fn max_service_rate(&self, i: usize) -> f64 {
        self.stations[i].classes.iter().map(|k| self.beta[k.index()]).fold(0.0, f64::max)
    }

    /// Same network with a different arrival vector.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        NetworkSpec::new(self.classes, self.stations.clone(), theta, self.beta.clone(), self.routing.clone())
    }

    pub fn with_theta_scale(&self, a: f64) -> Result<Self> {
        self.with_theta(self.theta.iter().map(|t| t * a).collect())
    }

    /// Every station admits a lumped representation.
    pub fn is_reducible(&self) -> bool {
        self.stations.iter().all(|s| is_reducible(&s.protocol, &s.classes))
    }

    /// Every station serves one class at a time.
    pub fn is_indivisible(&self) -> bool {
        self.stations.iter().all(|s| s.classes.len() == 1 || s.protocol.allocation.is_indivisible())
    }

    /// Matrix C with ρ(θ) = C θ; row i holds Σ_{k∈K_i} [(I−R')⁻¹]_{k,·} / β_k.
    pub fn workload_matrix(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.classes;
        let inv = traffic_matrix(&self.routing).try_inverse().ok_or(Error::SingularTraffic)?;
        Ok(self
            .stations
            .iter()
            .map(|st| {
                (0..d).map(|j| st.classes.iter().map(|k| inv[(k.index(), j)] / self.beta[k.index()]).sum()).collect()
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SpecDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: SpecDoc = serde_json::from_str(s)?;
        doc.try_into()
    }
}

fn check_protocol(i: usize, st: &Station) -> Result<()> {
    let station = i + 1;
    if let QueuePolicy::Sbp(r) = &st.protocol.policy {
        if !r.covers(&st.classes) {
            return Err(Error::InvalidSpec(format!(
                "SBP ranking at station {station} must partition the station's classes"
            )));
        }
    }
    if let ServiceAllocation::Preferential(r) = &st.protocol.allocation {
        if !r.is_total() || !r.covers(&st.classes) {
            return Err(Error::InvalidSpec(format!(
                "preferential ranking at station {station} must totally order the station's classes"
            )));
        }
    }
    Ok(())
}

/// I − R'.
fn traffic_matrix(routing: &[Vec<f64>]) -> DMatrix<f64> {
    let d = routing.len();
    DMatrix::from_fn(d, d, |k, l| if k == l { 1.0 } else { 0.0 } - routing[l][k])
}

/// Decides transience by repeated squaring of R; returns the number of
/// squarings after which every entry fell below 1e-12.
pub fn transience_certificate(routing: &[Vec<f64>]) -> Result<u32> {
    let d = routing.len();
    let mut m = DMatrix::from_fn(d, d, |k, l| routing[k][l]);
    for j in 0..=TRANSIENCE_MAX_DOUBLINGS {
        if m.amax() < TRANSIENCE_EPS {
            return Ok(j);
        }
        m = &m * &m;
    }
    Err(Error::NonTransientRouting { doublings: TRANSIENCE_MAX_DOUBLINGS })
}

/// Solves the traffic equations and derives workloads and irreducibility.
pub fn validate(spec: &NetworkSpec) -> Result<RoutingAnalysis> {
    let vanishing_doublings = transience_certificate(&spec.routing)?;
    let a = traffic_matrix(&spec.routing);
    let theta = DVector::from_column_slice(&spec.theta);
    let gamma = a.clone().lu().solve(&theta).ok_or(Error::SingularTraffic)?;
    let residual = (&a * &gamma - &theta).amax();
    if residual > RESIDUAL_TOL * theta.amax().max(1.0) {
        return Err(Error::SingularTraffic);
    }
    let effective_rates: Vec<f64> = gamma.iter().copied().collect();
    let workload = spec
        .stations
        .iter()
        .map(|st| st.classes.iter().map(|k| effective_rates[k.index()] / spec.beta[k.index()]).sum())
        .collect();
    let irreducible = effective_rates.iter().all(|&g| g > POSITIVITY_TOL);
    Ok(RoutingAnalysis { effective_rates, workload, irreducible, transient: true, vanishing_doublings })
}

fn classes(v: &[u16]) -> Vec<ClassId> {
    v.iter().map(|&k| ClassId(k)).collect()
}

/// Reentrant line 1 → 2 → 3 → 4 → exit with K_1 = {1,4}, K_2 = {2,3}.
fn reentrant_line(theta: f64, beta: [f64; 4], p1: Protocol, p2: Protocol) -> Result<NetworkSpec> {
    let mut routing = vec![vec![0.0; 4]; 4];
    routing[0][1] = 1.0;
    routing[1][2] = 1.0;
    routing[2][3] = 1.0;
    NetworkSpec::new(
        4,
        vec![Station { classes: classes(&[1, 4]), protocol: p1 }, Station { classes: classes(&[2, 3]), protocol: p2 }],
        vec![theta, 0.0, 0.0, 0.0],
        beta.to_vec(),
        routing,
    )
}

/// Built-in networks.
///
/// * `mm1`: one FCFS station, θ = 1, β = 2.
/// * `tandem2`: two single-class FCFS stations in series, θ = (1, 0), β = (2, 3).
/// * `lk-prop`: the two-station reentrant line with proportional allocation
///   at both stations, θ = 1, β = (4, 3, 5, 2).
/// * `lk-sbp`: the same line under preemptive priority (class 4 over 1,
///   class 2 over 3), θ = 1, β = (4, 1.5, 4, 1.5); both stations carry
///   workload 11/12 while the high-priority pair {2, 4} carries 4/3.
/// * `fcfs-reentrant`: the line with FCFS everywhere, θ = 0.5, β = (2, 1.5, 2, 1.5).
pub fn builtin_fixture(name: &str) -> Result<NetworkSpec> {
    let single = |k: u16| Station { classes: classes(&[k]), protocol: Protocol::fcfs() };
    match name {
        "mm1" => NetworkSpec::new(1, vec![single(1)], vec![1.0], vec![2.0], vec![vec![0.0]]),
        "tandem2" => NetworkSpec::new(
            2,
            vec![single(1), single(2)],
            vec![1.0, 0.0],
            vec![2.0, 3.0],
            vec![vec![0.0, 1.0], vec![0.0, 0.0]],
        ),
        "lk-prop" => {
            let prop = Protocol::new(QueuePolicy::Fcfs, ServiceAllocation::Proportional);
            reentrant_line(1.0, [4.0, 3.0, 5.0, 2.0], prop.clone(), prop)
        }
        "lk-sbp" => {
            let pref = |order: &[u16]| -> Result<Protocol> {
                Ok(Protocol::new(QueuePolicy::Fcfs, ServiceAllocation::preferential(PriorityRanking::total(order)?)?))
            };
            reentrant_line(1.0, [4.0, 1.5, 4.0, 1.5], pref(&[4, 1])?, pref(&[2, 3])?)
        }
        "fcfs-reentrant" => reentrant_line(0.5, [2.0, 1.5, 2.0, 1.5], Protocol::fcfs(), Protocol::fcfs()),
        other => Err(Error::UnknownFixture(other.to_string())),
    }
}

// JSON document form.

#[derive(Debug, Serialize, Deserialize)]
struct SpecDoc {
    classes: usize,
    stations: Vec<Vec<u16>>,
    theta: Vec<f64>,
    beta: Vec<f64>,
    routing: Vec<Vec<f64>>,
    protocols: Vec<ProtocolDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProtocolDoc {
    policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ranking: Option<Vec<Vec<u16>>>,
    allocation: AllocationDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum AllocationDoc {
    Name(String),
    Ranked {
        #[serde(rename = "type")]
        kind: String,
        ranking: Vec<u16>,
    },
}

impl From<&NetworkSpec> for SpecDoc {
    fn from(spec: &NetworkSpec) -> Self {
        let raw = |k: &[ClassId]| k.iter().map(|c| c.0).collect::<Vec<_>>();
        SpecDoc {
            classes: spec.classes,
            stations: spec.stations.iter().map(|s| raw(&s.classes)).collect(),
            theta: spec.theta.clone(),
            beta: spec.beta.clone(),
            routing: spec.routing.clone(),
            protocols: spec
                .stations
                .iter()
                .map(|s| {
                    let (policy, ranking) = match &s.protocol.policy {
                        QueuePolicy::Fcfs => ("fcfs", None),
                        QueuePolicy::Lcfs => ("lcfs", None),
                        QueuePolicy::Sbp(r) => ("sbp", Some(r.castes().iter().map(|c| raw(c)).collect())),
                    };
                    let allocation = match &s.protocol.allocation {
                        ServiceAllocation::Preferential(r) => AllocationDoc::Ranked {
                            kind: "preferential".into(),
                            ranking: r.castes().iter().map(|c| c[0].0).collect(),
                        },
                        a => AllocationDoc::Name(a.name().into()),
                    };
                    ProtocolDoc { policy: policy.into(), ranking, allocation }
                })
                .collect(),
        }
    }
}

impl TryFrom<SpecDoc> for NetworkSpec {
    type Error = Error;

    fn try_from(doc: SpecDoc) -> Result<Self> {
        if doc.protocols.len() != doc.stations.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} stations but {} protocols",
                doc.stations.len(),
                doc.protocols.len()
            )));
        }
        let stations = doc
            .stations
            .iter()
            .zip(doc.protocols)
            .map(|(cls, p)| {
                let policy = match (p.policy.as_str(), p.ranking) {
                    ("fcfs", _) => QueuePolicy::Fcfs,
                    ("lcfs", _) => QueuePolicy::Lcfs,
                    ("sbp", Some(r)) => {
                        QueuePolicy::Sbp(PriorityRanking::new(r.into_iter().map(|c| classes(&c)).collect())?)
                    }
                    ("sbp", None) => return Err(Error::InvalidSpec("sbp policy needs a \"ranking\"".into())),
                    (other, _) => return Err(Error::InvalidSpec(format!("unknown policy '{other}'"))),
                };
                let allocation = match p.allocation {
                    AllocationDoc::Name(n) => match n.as_str() {
                        "hq" => ServiceAllocation::HeadOfQueue,
                        "egalitarian" => ServiceAllocation::Egalitarian,
                        "proportional" => ServiceAllocation::Proportional,
                        "preferential" => {
                            return Err(Error::InvalidSpec(
                                "preferential allocation needs {\"type\": \"preferential\", \"ranking\": [...]}".into(),
                            ))
                        }
                        other => return Err(Error::InvalidSpec(format!("unknown allocation '{other}'"))),
                    },
                    AllocationDoc::Ranked { kind, ranking } if kind == "preferential" => {
                        ServiceAllocation::preferential(PriorityRanking::total(&ranking)?)?
                    }
                    AllocationDoc::Ranked { kind, .. } => {
                        return Err(Error::InvalidSpec(format!("unknown allocation '{kind}'")))
                    }
                };
                Ok(Station { classes: classes(cls), protocol: Protocol::new(policy, allocation) })
            })
            .collect::<Result<Vec<_>>>()?;
        NetworkSpec::new(doc.classes, stations, doc.theta, doc.beta, doc.routing)
    }
}
