//! Experiment orchestration: seeded replication, per-replicate records,
//! summaries and reports.
//!
//! Replicate `i` always uses `seed::derive_seed(master, i)`, and records are
//! sorted by replicate before they are written or folded, so the output does
//! not depend on the thread count.

pub mod audit;
pub mod lambda2;
pub mod relay;
pub mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{survival_bracket, BoundsError};
use crate::engine::{frozen_boundary_run, simulate_direct, Configuration, EngineError, SimOptions};
use crate::oracle::OracleError;
use crate::seed;
use crate::starchain::{
    ignition_levels, ignition_run, lambda_from_c, run_reduced_chain, ChainError, StarChainParams,
    StopReason, StopRule,
};
use crate::stats::{median, Frequency, Moments};
use crate::topology::{Graph, GraphSpec, TopologyError};

pub use audit::{duality_audit, negative_control, AuditFailure, AuditReport};
pub use lambda2::{lambda2_bisect, probe, proxy_run, BisectOptions, Lambda2Estimate, ProbeResult, ProxyRun};
pub use relay::{hub_relay_experiment, relay_run, RelayResult, RelayRun, RelaySpec};
pub use report::{emit_report, ReportFormat};

/// Event budget of one survival replicate.
pub const SURVIVAL_EVENT_CAP: u64 = 1_000_000_000;
/// Default horizon of a λ₂ proxy replicate.
pub const DEFAULT_PROXY_HORIZON: f64 = 1000.0;
/// Default horizon of a duality-audit log.
pub const DEFAULT_AUDIT_HORIZON: f64 = 1.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("spec error: {0}")]
    Spec(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("audit failed: {0}")]
    AuditFailed(String),
}

impl HarnessError {
    /// Process exit code: 3 for resource caps, 4 for audit failures, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Topology(TopologyError::TooLarge { .. })
            | HarnessError::Engine(EngineError::TooManyEvents { .. })
            | HarnessError::Oracle(
                OracleError::TooLarge { .. }
                | OracleError::EnumerationCap { .. }
                | OracleError::NotConverged(_),
            ) => 3,
            HarnessError::AuditFailed(_) => 4,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Survival,
    Ignite,
    Chain,
    Relay,
    Lambda2,
    DualityAudit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Survival,
        ExperimentKind::Ignite,
        ExperimentKind::Chain,
        ExperimentKind::Relay,
        ExperimentKind::Lambda2,
        ExperimentKind::DualityAudit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Survival => "survival",
            ExperimentKind::Ignite => "ignite",
            ExperimentKind::Chain => "chain",
            ExperimentKind::Relay => "relay",
            ExperimentKind::Lambda2 => "lambda2",
            ExperimentKind::DualityAudit => "duality-audit",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| HarnessError::Spec(format!("unknown experiment kind {s:?}")))
    }
}

fn default_id() -> String {
    "experiment".into()
}
fn default_delta() -> f64 {
    0.1
}
fn default_eta() -> f64 {
    0.2
}
fn default_multiple() -> f64 {
    10.0
}
fn default_replicates() -> u64 {
    1
}

/// One experiment, as read from a JSON config or assembled from CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_id")]
    pub id: String,
    pub kind: ExperimentKind,
    /// Graph description, e.g. `star:100` or `periodic:50:1:4`.
    pub graph: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Alternative to `lambda`: `λ = sqrt(c log n / n)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default, rename = "K", skip_serializing_if = "Option::is_none")]
    pub k_level: Option<u64>,
    #[serde(default, rename = "L", skip_serializing_if = "Option::is_none")]
    pub l_level: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Survival runs without a horizon stop at this multiple of the lower
    /// end of the survival bracket.
    #[serde(default = "default_multiple")]
    pub horizon_multiple: f64,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Relay time budget; defaults to `n^c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    /// Reduced-chain start; defaults to `L - 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<u64>,
    /// Survival on a depth `k + 1` tree with a frozen last level.
    #[serde(default)]
    pub freeze: bool,
    /// Record wall time per replicate (off by default, since it breaks
    /// byte-identical reruns).
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, graph: impl Into<String>) -> Self {
        Self {
            id: default_id(),
            kind,
            graph: graph.into(),
            lambda: None,
            c: None,
            delta: default_delta(),
            eta: default_eta(),
            k_level: None,
            l_level: None,
            horizon: None,
            horizon_multiple: default_multiple(),
            replicates: default_replicates(),
            seed: 0,
            output: None,
            threads: None,
            budget: None,
            x0: None,
            freeze: false,
            timing: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Checks the spec and fixes every derived quantity.
    pub fn resolve(&self) -> Result<Plan, HarnessError> {
        let spec_err = |m: String| Err(HarnessError::Spec(m));
        if self.replicates == 0 {
            return spec_err("replicates must be >= 1".into());
        }
        if self.threads == Some(0) {
            return spec_err("threads must be >= 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 0.25) {
            return spec_err(format!("delta = {} not in (0, 1/4)", self.delta));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return spec_err(format!("eta = {} not in (0, 1)", self.eta));
        }
        if let Some(h) = self.horizon {
            if h.is_nan() || h < 0.0 {
                return spec_err(format!("horizon = {h}"));
            }
        }
        if !(self.horizon_multiple > 0.0) {
            return spec_err(format!("horizon_multiple = {}", self.horizon_multiple));
        }
        let graph: GraphSpec = self.graph.parse()?;
        let n = graph.n() as u64;
        let lambda = match (self.lambda, self.c) {
            (Some(l), None) if l >= 0.0 && l.is_finite() => l,
            (None, Some(c)) if c > 0.0 && c.is_finite() && n >= 2 => lambda_from_c(c, n),
            (Some(_), Some(_)) | (None, None) => {
                return spec_err("give exactly one of lambda and c".into());
            }
            _ => return spec_err(format!("bad rate: lambda = {:?}, c = {:?}", self.lambda, self.c)),
        };
        let uses_levels = matches!(self.kind, ExperimentKind::Ignite | ExperimentKind::Chain);
        if !uses_levels && (self.k_level.is_some() || self.l_level.is_some()) {
            return spec_err(format!("K and L do not apply to {}", self.kind));
        }
        if self.kind == ExperimentKind::Chain && self.k_level.is_some() {
            return spec_err("K does not apply to chain".into());
        }
        if self.budget.is_some() && self.kind != ExperimentKind::Relay {
            return spec_err(format!("budget does not apply to {}", self.kind));
        }
        if self.x0.is_some() && self.kind != ExperimentKind::Chain {
            return spec_err(format!("x0 does not apply to {}", self.kind));
        }
        if self.freeze && self.kind != ExperimentKind::Survival {
            return spec_err(format!("freeze does not apply to {}", self.kind));
        }

        let star_n = || match graph {
            GraphSpec::Star(n) => Ok(n as u64),
            _ => Err(HarnessError::Spec(format!("{} needs a star:<n> graph", self.kind))),
        };
        let task = match self.kind {
            ExperimentKind::Survival => {
                let horizon = match self.horizon {
                    Some(h) => h,
                    None => {
                        let lower = survival_bracket(n, lambda, 0.5, 0.5, 10.0).lower;
                        let h = self.horizon_multiple * lower;
                        if h.is_finite() { h } else { f64::INFINITY }
                    }
                };
                let g = graph.build()?;
                if self.freeze {
                    let ok = matches!(&graph, GraphSpec::Periodic(s, d) if *d as usize == s.k() + 1);
                    if !ok {
                        return spec_err("freeze needs periodic:<n>:<a..>:<k+1>".into());
                    }
                } else if horizon.is_infinite() && lambda > 0.0 {
                    return spec_err("survival with λ > 0 needs a finite horizon".into());
                }
                Task::Survival { g, horizon, freeze: self.freeze }
            }
            ExperimentKind::Ignite => {
                let n = star_n()?;
                if lambda <= 0.0 {
                    return spec_err("ignite needs λ > 0".into());
                }
                let (k0, l0) = ignition_levels(n, lambda, self.delta);
                let (k, l) = (self.k_level.unwrap_or(k0), self.l_level.unwrap_or(l0));
                if !(k > 0 && k <= l && l <= n) {
                    return spec_err(format!("need 0 < K <= L <= n, got K = {k}, L = {l}, n = {n}"));
                }
                Task::Ignite { n, k, l }
            }
            ExperimentKind::Chain => {
                let n = star_n()?;
                let mut params = StarChainParams::new(lambda, n, self.delta)?;
                if let Some(l) = self.l_level {
                    if l == 0 {
                        return spec_err("L must be >= 1".into());
                    }
                    params.level = l;
                }
                let l = params.level;
                let below = ((self.eta * l as f64).ceil() as u64).max(1);
                if below >= l {
                    return spec_err(format!("stop level ⌈ηL⌉ = {below} is not below L = {l}"));
                }
                let x0 = self.x0.unwrap_or(l - 1);
                if x0 > l {
                    return spec_err(format!("x0 = {x0} above L = {l}"));
                }
                let stop = StopRule {
                    below: Some(below),
                    target: Some(l),
                    horizon: self.horizon.unwrap_or(f64::INFINITY),
                };
                Task::Chain { params, x0, stop }
            }
            ExperimentKind::Relay => {
                let GraphSpec::HubPair(hn, hk) = graph else {
                    return spec_err("relay needs a hubpair:<n>:<k> graph".into());
                };
                let c = lambda * lambda * n as f64 / (n as f64).ln();
                let budget = self.budget.unwrap_or_else(|| (n as f64).powf(c));
                if !(budget > 0.0 && budget.is_finite()) {
                    return spec_err(format!("budget = {budget}"));
                }
                let rs = RelaySpec { n: hn, k: hk, lambda, delta: self.delta, eta: self.eta, budget };
                let g = graph.build()?;
                if rs.level() == 0 {
                    return spec_err("relay needs L >= 1".into());
                }
                Task::Relay { g, spec: rs }
            }
            ExperimentKind::Lambda2 => {
                if matches!(graph, GraphSpec::HubPair(..) | GraphSpec::Pinned(_)) {
                    return spec_err("lambda2 needs a star or periodic graph".into());
                }
                let horizon = self.horizon.unwrap_or(DEFAULT_PROXY_HORIZON);
                if !(horizon > 0.0 && horizon.is_finite()) {
                    return spec_err(format!("horizon = {horizon}"));
                }
                Task::Lambda2 { g: graph.build()?, horizon }
            }
            ExperimentKind::DualityAudit => {
                let horizon = self.horizon.unwrap_or(DEFAULT_AUDIT_HORIZON);
                if !horizon.is_finite() {
                    return spec_err("audit needs a finite horizon".into());
                }
                let g = graph.build()?;
                if g.vertex_count() > audit::AUDIT_VERTEX_LIMIT {
                    return spec_err(format!(
                        "audit needs at most {} vertices, graph has {}",
                        audit::AUDIT_VERTEX_LIMIT,
                        g.vertex_count()
                    ));
                }
                Task::Audit { g, horizon }
            }
        };
        Ok(Plan {
            id: self.id.clone(),
            kind: self.kind,
            graph: graph.to_string(),
            n,
            k: graph.k(),
            degrees: graph.degrees().iter().map(|a| a.to_string()).collect::<Vec<_>>().join(","),
            lambda,
            c: self.c,
            delta: self.delta,
            eta: self.eta,
            master: self.seed,
            replicates: self.replicates,
            threads: self.threads,
            timing: self.timing,
            task,
        })
    }
}

#[derive(Debug, Clone)]
enum Task {
    Survival { g: Graph, horizon: f64, freeze: bool },
    Ignite { n: u64, k: u64, l: u64 },
    Chain { params: StarChainParams, x0: u64, stop: StopRule },
    Relay { g: Graph, spec: RelaySpec },
    Lambda2 { g: Graph, horizon: f64 },
    Audit { g: Graph, horizon: f64 },
}

/// A validated experiment with all derived quantities fixed.
#[derive(Debug, Clone)]
pub struct Plan {
    pub id: String,
    pub kind: ExperimentKind,
    pub graph: String,
    pub n: u64,
    pub k: usize,
    pub degrees: String,
    pub lambda: f64,
    pub c: Option<f64>,
    pub delta: f64,
    pub eta: f64,
    pub master: u64,
    pub replicates: u64,
    pub threads: Option<usize>,
    pub timing: bool,
    task: Task,
}

impl Plan {
    /// Horizon, budget or stop time that bounds each replicate.
    pub fn horizon(&self) -> f64 {
        match &self.task {
            Task::Survival { horizon, .. } | Task::Lambda2 { horizon, .. } | Task::Audit { horizon, .. } => {
                *horizon
            }
            Task::Relay { spec, .. } => spec.budget,
            Task::Chain { stop, .. } => stop.horizon,
            Task::Ignite { .. } => f64::INFINITY,
        }
    }

    /// Ignition or reduced-chain levels `(K, L)` where they apply.
    pub fn levels(&self) -> Option<(u64, u64)> {
        match &self.task {
            Task::Ignite { k, l, .. } => Some((*k, *l)),
            Task::Chain { params, stop, .. } => Some((stop.below.unwrap_or(0), params.level)),
            Task::Relay { spec, .. } => Some((spec.wet_threshold(), spec.level())),
            _ => None,
        }
    }

    fn replicate(&self, i: u64) -> Result<RunRecord, HarnessError> {
        let seed = seed::derive_seed(self.master, i);
        let mut rng = seed::stream(seed);
        let start = Instant::now();
        let (outcome, tau, censored, hits, frozen_total): (String, f64, bool, u64, u64) = match &self.task {
            Task::Survival { g, horizon, freeze } => {
                if *freeze {
                    let run = frozen_boundary_run(g, self.lambda, &mut rng)?;
                    let outcome = if run.censored { "censored" } else { "extinct" };
                    (outcome.into(), run.duration, run.censored, 0, run.total())
                } else {
                    let options = SimOptions {
                        horizon: *horizon,
                        max_events: SURVIVAL_EVENT_CAP,
                        ..SimOptions::default()
                    };
                    let out = simulate_direct(g, self.lambda, &Configuration::all_occupied(g), &options, &mut rng)?;
                    if out.events >= SURVIVAL_EVENT_CAP {
                        return Err(EngineError::TooManyEvents {
                            expected: out.events as f64,
                            cap: SURVIVAL_EVENT_CAP,
                        }
                        .into());
                    }
                    match out.extinction_time {
                        Some(t) => ("extinct".into(), t, false, 0, 0),
                        None => ("censored".into(), out.end_time, true, 0, 0),
                    }
                }
            }
            Task::Ignite { n, k, l } => {
                let r = ignition_run(*n, self.lambda, *k, *l, &mut rng)?;
                let outcome = if r.hit_l {
                    "reached_L"
                } else if r.hit_k {
                    "reached_K"
                } else {
                    "extinct"
                };
                (outcome.into(), r.elapsed, false, r.hit_k as u64 + r.hit_l as u64, 0)
            }
            Task::Chain { params, x0, stop } => {
                let r = run_reduced_chain(params, *x0, stop, &mut rng)?;
                let outcome = match r.reason {
                    StopReason::Below => "below",
                    StopReason::Target => "target",
                    StopReason::Horizon => "horizon",
                    StopReason::Absorbed => "absorbed",
                };
                let below = matches!(r.reason, StopReason::Below | StopReason::Absorbed);
                (outcome.into(), r.time, r.reason == StopReason::Horizon, below as u64, 0)
            }
            Task::Relay { g, spec } => {
                let r = relay_run(g, spec, seed)?;
                let outcome = if r.success { "wet" } else { "dry" };
                let censored = !r.success && r.time >= spec.budget;
                (outcome.into(), r.time, censored, r.success as u64, 0)
            }
            Task::Lambda2 { g, horizon } => {
                let r = proxy_run(g, self.lambda, *horizon, seed)?;
                let outcome = if r.success { "reoccupied" } else { "lost" };
                (outcome.into(), r.time, false, r.success as u64, 0)
            }
            Task::Audit { g, horizon } => {
                let (out, _) = audit::audit_trial(g, self.lambda, *horizon, seed)?;
                let outcome = if out.failure.is_none() { "pass" } else { "fail" };
                (outcome.into(), *horizon, false, out.checks, 0)
            }
        };
        let wall_ms = if self.timing { start.elapsed().as_millis() as u64 } else { 0 };
        Ok(RunRecord {
            experiment_id: self.id.clone(),
            kind: self.kind.to_string(),
            graph: self.graph.clone(),
            n: self.n,
            k: self.k as u64,
            degrees: self.degrees.clone(),
            lambda: self.lambda,
            c: self.c,
            delta: self.delta,
            eta: self.eta,
            seed,
            replicate: i,
            outcome,
            tau,
            censored,
            hits,
            frozen_total,
            wall_ms,
        })
    }

}

/// One replicate, one CSV row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment_id: String,
    pub kind: String,
    pub graph: String,
    pub n: u64,
    pub k: u64,
    pub degrees: String,
    pub lambda: f64,
    pub c: Option<f64>,
    pub delta: f64,
    pub eta: f64,
    pub seed: u64,
    pub replicate: u64,
    pub outcome: String,
    pub tau: f64,
    pub censored: bool,
    pub hits: u64,
    pub frozen_total: u64,
    pub wall_ms: u64,
}

pub const RECORD_HEADER: &str = "experiment_id,kind,graph,n,k,degrees,lambda,c,delta,eta,seed,replicate,outcome,tau,censored,hits,frozen_total,wall_ms";

pub fn write_records<W: Write>(out: W, records: &[RunRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(RECORD_HEADER.split(','))?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn records_to_csv(records: &[RunRecord]) -> Result<String, HarnessError> {
    let mut buf = Vec::new();
    write_records(&mut buf, records)?;
    String::from_utf8(buf).map_err(|e| HarnessError::Spec(e.to_string()))
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<RunRecord>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != RECORD_HEADER {
        return Err(HarnessError::Spec(format!("unexpected record header {header:?}")));
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
}

/// Runs every replicate of `spec`. The spec is fully validated before the
/// first replicate starts.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, HarnessError> {
    let plan = spec.resolve()?;
    let records = run_plan(&plan)?;
    let summary = summarize(&records)?;
    Ok(ExperimentOutput { records, summary })
}

fn run_plan(plan: &Plan) -> Result<Vec<RunRecord>, HarnessError> {
    let work = || -> Result<Vec<RunRecord>, HarnessError> {
        (0..plan.replicates).into_par_iter().map(|i| plan.replicate(i)).collect()
    };
    let mut records = match plan.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| HarnessError::Spec(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    records.sort_by_key(|r| r.replicate);
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCount {
    pub count: u64,
    pub frequency: f64,
    pub std_error: f64,
    pub interval95: (f64, f64),
}

/// Statistics over uncensored τ values only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSummary {
    pub count: u64,
    pub mean: f64,
    pub median: f64,
    pub std_error: f64,
    pub interval95: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment_id: String,
    pub kind: String,
    pub graph: String,
    pub n: u64,
    pub k: u64,
    pub degrees: String,
    pub lambda: f64,
    pub c: Option<f64>,
    pub delta: f64,
    pub eta: f64,
    pub replicates: u64,
    pub censored: u64,
    pub censored_fraction: f64,
    pub tau: TauSummary,
    pub outcomes: BTreeMap<String, OutcomeCount>,
    pub hits_mean: f64,
    pub frozen_mean: f64,
    pub seed_derivation: String,
    /// Empirical `P(τ > t)` at up to [`CURVE_POINTS`] values of `t`.
    pub survival_curve: Vec<(f64, f64)>,
}

pub const CURVE_POINTS: usize = 200;

/// Folds the records of one experiment. The result does not depend on the
/// record order.
pub fn summarize(records: &[RunRecord]) -> Result<Summary, HarnessError> {
    let first = records.first().ok_or_else(|| HarnessError::Spec("no records to summarize".into()))?;
    for r in records {
        if r.experiment_id != first.experiment_id {
            return Err(HarnessError::Spec(format!(
                "mixed experiment ids {:?} and {:?}",
                first.experiment_id, r.experiment_id
            )));
        }
        let same = r.kind == first.kind
            && r.graph == first.graph
            && r.lambda.to_bits() == first.lambda.to_bits()
            && r.delta.to_bits() == first.delta.to_bits()
            && r.eta.to_bits() == first.eta.to_bits();
        if !same {
            return Err(HarnessError::Spec(format!(
                "records of {:?} disagree on parameters",
                first.experiment_id
            )));
        }
    }
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.replicate);
    if sorted.windows(2).any(|w| w[0].replicate == w[1].replicate) {
        return Err(HarnessError::Spec("duplicate replicate index".into()));
    }
    let total = sorted.len() as u64;
    let censored = sorted.iter().filter(|r| r.censored).count() as u64;
    let taus: Vec<f64> = sorted.iter().filter(|r| !r.censored).map(|r| r.tau).collect();
    let m = Moments::of(&taus);
    let tau = TauSummary {
        count: taus.len() as u64,
        mean: m.mean,
        median: median(&taus),
        std_error: m.std_error,
        interval95: m.interval95(),
    };
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for r in &sorted {
        *counts.entry(r.outcome.clone()).or_default() += 1;
    }
    let outcomes = counts
        .into_iter()
        .map(|(k, c)| {
            let f = Frequency::new(c, total);
            let oc = OutcomeCount { count: c, frequency: f.estimate, std_error: f.std_error, interval95: f.interval95() };
            (k, oc)
        })
        .collect();
    let mean_of = |f: &dyn Fn(&RunRecord) -> f64| sorted.iter().map(|r| f(r)).sum::<f64>() / total as f64;
    Ok(Summary {
        experiment_id: first.experiment_id.clone(),
        kind: first.kind.clone(),
        graph: first.graph.clone(),
        n: first.n,
        k: first.k,
        degrees: first.degrees.clone(),
        lambda: first.lambda,
        c: first.c,
        delta: first.delta,
        eta: first.eta,
        replicates: total,
        censored,
        censored_fraction: censored as f64 / total as f64,
        tau,
        outcomes,
        hits_mean: mean_of(&|r| r.hits as f64),
        frozen_mean: mean_of(&|r| r.frozen_total as f64),
        seed_derivation: seed::SEED_DERIVATION.to_string(),
        survival_curve: survival_curve(&sorted),
    })
}

fn survival_curve(records: &[&RunRecord]) -> Vec<(f64, f64)> {
    let mut taus: Vec<f64> = records.iter().map(|r| r.tau).filter(|t| t.is_finite()).collect();
    if taus.is_empty() {
        return Vec::new();
    }
    taus.sort_by(f64::total_cmp);
    let total = records.len() as f64;
    let step = taus.len().div_ceil(CURVE_POINTS);
    let mut curve = vec![(0.0, 1.0)];
    let mut idx: Vec<usize> = (step - 1..taus.len()).step_by(step).collect();
    if idx.last() != Some(&(taus.len() - 1)) {
        idx.push(taus.len() - 1);
    }
    for i in idx {
        let t = taus[i];
        let above = records.iter().filter(|r| r.tau > t).count() as f64;
        curve.push((t, above / total));
    }
    curve
}
