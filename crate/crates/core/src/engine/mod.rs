//! Contact process dynamics: recovery at rate 1, transmission at rate λ
//! along every edge out of an occupied vertex.
//!
//! Two realisations share the same semantics. [`simulate_direct`] races
//! exponential clocks and never materialises the future; [`evolve_on_log`]
//! runs the process deterministically over a pre-drawn [`EventLog`], which
//! is what makes duality, additivity and monotonicity checkable pathwise.

mod direct;
mod log;
pub(crate) mod mask;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::topology::{Graph, VertexId};

pub use direct::{
    frozen_boundary_run, simulate_direct, survival_time, DirectSim, FrozenRun, Probe, SimOptions,
    SimOutcome, StepEvent, SurvivalTime,
};
pub use log::{generate_event_log, generate_event_log_capped, Event, EventKind, EventLog,
    DEFAULT_EVENT_CAP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("requested time {t} is beyond the log horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },
    #[error("expected {expected:.0} events, above the cap of {cap}")]
    TooManyEvents { expected: f64, cap: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("cannot parse event log line {line}: {reason}")]
    LogParse { line: usize, reason: String },
}

/// Occupied vertices plus the bookkeeping for pins and frozen boundaries.
///
/// Pinned vertices ignore recovery marks until `pin_expiry` (forever when
/// unset). Vertices with a `frozen` entry form the boundary: a transmission
/// onto one increments its counter instead of occupying it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Configuration {
    occupied: BTreeSet<VertexId>,
    pinned: BTreeSet<VertexId>,
    pin_expiry: Option<OrderedTime>,
    frozen: BTreeMap<VertexId, u64>,
}

/// f64 time wrapper so `Configuration` can stay `Eq`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderedTime(f64);
impl Eq for OrderedTime {}

impl Configuration {
    pub fn new(occupied: impl IntoIterator<Item = VertexId>) -> Self {
        Self {
            occupied: occupied.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn all_occupied(g: &Graph) -> Self {
        Self::new(0..g.vertex_count() as VertexId)
    }

    /// Adds permanently occupied vertices (they are also marked occupied).
    pub fn with_pins(mut self, pins: impl IntoIterator<Item = VertexId>) -> Self {
        for p in pins {
            self.pinned.insert(p);
            self.occupied.insert(p);
        }
        self
    }

    /// Pins hold only until `t`; afterwards pinned vertices recover normally.
    pub fn with_pin_expiry(mut self, t: f64) -> Self {
        self.pin_expiry = Some(OrderedTime(t));
        self
    }

    pub fn with_frozen_boundary(mut self, boundary: impl IntoIterator<Item = VertexId>) -> Self {
        for b in boundary {
            self.frozen.insert(b, 0);
        }
        self
    }

    pub fn occupied(&self) -> &BTreeSet<VertexId> {
        &self.occupied
    }

    pub fn pinned(&self) -> &BTreeSet<VertexId> {
        &self.pinned
    }

    pub fn pin_expiry(&self) -> Option<f64> {
        self.pin_expiry.map(|t| t.0)
    }

    pub fn frozen(&self) -> &BTreeMap<VertexId, u64> {
        &self.frozen
    }

    pub fn frozen_total(&self) -> u64 {
        self.frozen.values().sum()
    }

    pub fn is_occupied(&self, v: VertexId) -> bool {
        self.occupied.contains(&v)
    }

    pub fn is_boundary(&self, v: VertexId) -> bool {
        self.frozen.contains_key(&v)
    }

    /// Whether `v` ignores a recovery mark at time `t`.
    pub fn holds_pin(&self, v: VertexId, t: f64) -> bool {
        self.pinned.contains(&v) && self.pin_expiry.is_none_or(|e| t < e.0)
    }

    pub fn validate(&self, g: &Graph) -> Result<(), EngineError> {
        let v_count = g.vertex_count() as VertexId;
        if let Some(&v) = self.occupied.iter().chain(self.frozen.keys()).find(|&&v| v >= v_count) {
            return Err(EngineError::InvalidConfiguration(format!(
                "vertex {v} is not in the graph"
            )));
        }
        if !self.pinned.is_subset(&self.occupied) {
            return Err(EngineError::InvalidConfiguration("pinned vertex not occupied".into()));
        }
        if let Some(v) = self.frozen.keys().find(|v| self.occupied.contains(v)) {
            return Err(EngineError::InvalidConfiguration(format!(
                "boundary vertex {v} cannot be occupied"
            )));
        }
        Ok(())
    }
}

/// Runs the process deterministically over `log` up to time `t`.
pub fn evolve_on_log(
    g: &Graph,
    log: &EventLog,
    init: &Configuration,
    t: f64,
) -> Result<Configuration, EngineError> {
    if t > log.horizon() {
        return Err(EngineError::BeyondHorizon { t, horizon: log.horizon() });
    }
    init.validate(g)?;
    let mut state = init.clone();
    for ev in log.timeline() {
        if ev.time > t {
            break;
        }
        match ev.kind {
            EventKind::Recovery(v) => {
                if !state.holds_pin(v, ev.time) {
                    state.occupied.remove(&v);
                    state.pinned.remove(&v);
                }
            }
            EventKind::Arrow(from, to) => {
                if state.occupied.contains(&from) {
                    if let Some(count) = state.frozen.get_mut(&to) {
                        *count += 1;
                    } else {
                        state.occupied.insert(to);
                    }
                }
            }
        }
    }
    if state.pin_expiry().is_some_and(|e| t >= e) {
        state.pinned.clear();
    }
    Ok(state)
}

/// The dual set at dual time `t`: every vertex `y` with an active path from
/// `(y, 0)` to `(x, t)` in the graphical representation.
pub fn dual_on_log(
    g: &Graph,
    log: &EventLog,
    x: VertexId,
    t: f64,
) -> Result<BTreeSet<VertexId>, EngineError> {
    dual_on_log_with(g, log, x, t, &Configuration::empty())
}

/// Dual set honouring the pins and frozen boundary of `constraints` (its
/// occupied set is ignored). For every `A` containing the pins,
/// `x ∈ evolve(A, t)` iff `A` meets the returned set.
pub fn dual_on_log_with(
    g: &Graph,
    log: &EventLog,
    x: VertexId,
    t: f64,
    constraints: &Configuration,
) -> Result<BTreeSet<VertexId>, EngineError> {
    if t > log.horizon() {
        return Err(EngineError::BeyondHorizon { t, horizon: log.horizon() });
    }
    if x as usize >= g.vertex_count() {
        return Err(EngineError::InvalidParameter(format!("vertex {x} is not in the graph")));
    }
    let mut dual = BTreeSet::new();
    if constraints.is_boundary(x) {
        return Ok(dual);
    }
    dual.insert(x);
    for ev in log.timeline().iter().rev() {
        if ev.time > t {
            continue;
        }
        match ev.kind {
            EventKind::Recovery(v) => {
                if !constraints.holds_pin(v, ev.time) {
                    dual.remove(&v);
                }
            }
            EventKind::Arrow(from, to) => {
                if dual.contains(&to) && !constraints.is_boundary(from) {
                    dual.insert(from);
                }
            }
        }
    }
    Ok(dual)
}
