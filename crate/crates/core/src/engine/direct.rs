use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::{Configuration, EngineError};
use crate::topology::{Graph, VertexId};

/// Pending clock of an occupied vertex; ordered so the heap pops the earliest.
#[derive(Debug, Clone, Copy)]
struct Clock {
    time: f64,
    vertex: VertexId,
}

impl PartialEq for Clock {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Clock {}
impl PartialOrd for Clock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Clock {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepEvent {
    /// Recovery mark at `vertex`; `effective` is false when a pin held it.
    Recovery { time: f64, vertex: VertexId, effective: bool },
    /// Transmission that occupied a vacant vertex.
    Birth { time: f64, from: VertexId, to: VertexId },
    /// Transmission onto an already occupied vertex.
    Blocked { time: f64, from: VertexId, to: VertexId },
    /// Transmission onto a frozen boundary vertex.
    Frozen { time: f64, from: VertexId, to: VertexId },
}

impl StepEvent {
    pub fn time(&self) -> f64 {
        match *self {
            StepEvent::Recovery { time, .. }
            | StepEvent::Birth { time, .. }
            | StepEvent::Blocked { time, .. }
            | StepEvent::Frozen { time, .. } => time,
        }
    }
}

/// Event-driven contact process.
///
/// Each occupied vertex `v` carries a single exponential clock of rate
/// `1 + λ·deg(v)`; on ringing it either recovers or fires an arrow at a
/// uniformly chosen neighbour. Clocks never need resampling because an
/// occupied vertex's rates do not depend on its neighbours.
#[derive(Debug, Clone)]
pub struct DirectSim<'g> {
    g: &'g Graph,
    lambda: f64,
    time: f64,
    occupied: Vec<bool>,
    pinned: Vec<bool>,
    pin_count: usize,
    pin_expiry: f64,
    boundary: Vec<bool>,
    frozen: Vec<u64>,
    occupied_count: usize,
    clocks: BinaryHeap<Clock>,
}

impl<'g> DirectSim<'g> {
    pub fn new<R: Rng + ?Sized>(
        g: &'g Graph,
        lambda: f64,
        init: &Configuration,
        freeze_level: Option<u32>,
        rng: &mut R,
    ) -> Result<Self, EngineError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(EngineError::InvalidParameter(format!("lambda = {lambda}")));
        }
        let vcount = g.vertex_count();
        let mut boundary = vec![false; vcount];
        let mut any_boundary = false;
        for &b in init.frozen().keys() {
            boundary[b as usize] = true;
            any_boundary = true;
        }
        if let Some(level) = freeze_level {
            for (v, &l) in g.levels().iter().enumerate() {
                if l == level {
                    boundary[v] = true;
                    any_boundary = true;
                }
            }
        }
        let mut init = init.clone();
        if freeze_level.is_some() {
            init = init.with_frozen_boundary(
                (0..vcount as VertexId).filter(|&v| boundary[v as usize]),
            );
        }
        init.validate(g)?;
        let mut sim = Self {
            g,
            lambda,
            time: 0.0,
            occupied: vec![false; vcount],
            pinned: vec![false; vcount],
            pin_count: init.pinned().len(),
            pin_expiry: init.pin_expiry().unwrap_or(f64::INFINITY),
            boundary: if any_boundary { boundary } else { Vec::new() },
            frozen: if any_boundary { vec![0; vcount] } else { Vec::new() },
            occupied_count: 0,
            clocks: BinaryHeap::new(),
        };
        for (&v, &c) in init.frozen() {
            sim.frozen[v as usize] = c;
        }
        for &p in init.pinned() {
            sim.pinned[p as usize] = true;
        }
        for &v in init.occupied() {
            sim.occupy(v, rng);
        }
        Ok(sim)
    }

    #[inline]
    fn rate(&self, v: VertexId) -> f64 {
        1.0 + self.lambda * self.g.degree(v) as f64
    }

    #[inline]
    fn occupy<R: Rng + ?Sized>(&mut self, v: VertexId, rng: &mut R) {
        self.occupied[v as usize] = true;
        self.occupied_count += 1;
        self.schedule(v, rng);
    }

    #[inline]
    fn schedule<R: Rng + ?Sized>(&mut self, v: VertexId, rng: &mut R) {
        let gap: f64 = Exp1.sample(rng);
        self.clocks.push(Clock { time: self.time + gap / self.rate(v), vertex: v });
    }

    #[inline]
    fn is_boundary(&self, v: VertexId) -> bool {
        !self.boundary.is_empty() && self.boundary[v as usize]
    }

    pub fn graph(&self) -> &'g Graph {
        self.g
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Time of the next clock, or `None` once nothing can happen.
    pub fn peek_time(&self) -> Option<f64> {
        self.clocks.peek().map(|c| c.time)
    }

    pub fn is_occupied(&self, v: VertexId) -> bool {
        self.occupied[v as usize]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied_count
    }

    /// Occupied vertices not currently held by a pin.
    pub fn free_occupied_count(&self) -> usize {
        if self.time < self.pin_expiry {
            self.occupied_count - self.pin_count
        } else {
            self.occupied_count
        }
    }

    /// Occupied children of `v`.
    pub fn occupied_children(&self, v: VertexId) -> usize {
        self.g.children(v).iter().filter(|&&c| self.occupied[c as usize]).count()
    }

    pub fn frozen_counts(&self) -> BTreeMap<VertexId, u64> {
        (0..self.boundary.len())
            .filter(|&v| self.boundary[v])
            .map(|v| (v as VertexId, self.frozen[v]))
            .collect()
    }

    pub fn frozen_total(&self) -> u64 {
        self.frozen.iter().sum()
    }

    pub fn occupied_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.occupied.len() as VertexId).filter(|&v| self.occupied[v as usize])
    }

    /// Advances to the next event. Returns `None` when no clocks remain.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<StepEvent> {
        let Clock { time, vertex: v } = self.clocks.pop()?;
        self.time = time;
        let deg = self.g.degree(v);
        let u: f64 = rng.random::<f64>() * self.rate(v);
        if u < 1.0 || deg == 0 {
            let held = self.pinned[v as usize] && time < self.pin_expiry;
            if held {
                self.schedule(v, rng);
            } else {
                self.occupied[v as usize] = false;
                self.occupied_count -= 1;
            }
            return Some(StepEvent::Recovery { time, vertex: v, effective: !held });
        }
        let idx = (((u - 1.0) / self.lambda) as usize).min(deg - 1);
        let to = self.g.neighbor_at(v, idx);
        self.schedule(v, rng);
        if self.is_boundary(to) {
            self.frozen[to as usize] += 1;
            Some(StepEvent::Frozen { time, from: v, to })
        } else if self.occupied[to as usize] {
            Some(StepEvent::Blocked { time, from: v, to })
        } else {
            self.occupy(to, rng);
            Some(StepEvent::Birth { time, from: v, to })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Stop at this time; may be infinite when `stop_when_empty` is set.
    pub horizon: f64,
    /// Stop as soon as no unpinned vertex is occupied.
    pub stop_when_empty: bool,
    /// Times (ascending) at which to record a [`Probe`].
    pub probe_times: Vec<f64>,
    /// Vertices at this level form a frozen boundary.
    pub freeze_level: Option<u32>,
    /// Records the first time `watch.0` is occupied inside `[watch.1, watch.2]`.
    pub watch: Option<(VertexId, f64, f64)>,
    /// End the run once the watched vertex is seen in its window.
    pub stop_on_watch: bool,
    /// Runs exceeding this many events are reported as censored.
    pub max_events: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            horizon: f64::INFINITY,
            stop_when_empty: true,
            probe_times: Vec::new(),
            freeze_level: None,
            watch: None,
            stop_on_watch: false,
            max_events: 1_000_000_000,
        }
    }
}

impl SimOptions {
    pub fn with_horizon(horizon: f64) -> Self {
        Self { horizon, ..Self::default() }
    }

    /// `count` probe times spaced geometrically over `[first, last]`.
    pub fn geometric_probes(first: f64, last: f64, count: usize) -> Vec<f64> {
        match count {
            0 => Vec::new(),
            1 => vec![first],
            _ => {
                let ratio = (last / first).powf(1.0 / (count - 1) as f64);
                let mut v: Vec<f64> = (0..count).map(|i| first * ratio.powi(i as i32)).collect();
                // pin the end point against rounding
                v[count - 1] = last;
                v
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub time: f64,
    pub occupied: usize,
    pub root_occupied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    /// First time the unpinned occupied set was empty.
    pub extinction_time: Option<f64>,
    /// True when the run ended without extinction (horizon or event cap).
    pub censored: bool,
    pub end_time: f64,
    pub probes: Vec<Probe>,
    pub frozen: BTreeMap<VertexId, u64>,
    pub watch_hit: Option<f64>,
    pub events: u64,
    pub final_occupied: usize,
}

impl SimOutcome {
    pub fn frozen_total(&self) -> u64 {
        self.frozen.values().sum()
    }
}

pub fn simulate_direct<R: Rng + ?Sized>(
    g: &Graph,
    lambda: f64,
    init: &Configuration,
    options: &SimOptions,
    rng: &mut R,
) -> Result<SimOutcome, EngineError> {
    if options.horizon.is_nan() || options.horizon < 0.0 {
        return Err(EngineError::InvalidParameter(format!("horizon = {}", options.horizon)));
    }
    if options.horizon.is_infinite() && !options.stop_when_empty && init.pinned().is_empty() {
        // fine: extinction is absorbing without pins
    } else if options.horizon.is_infinite() && !options.stop_when_empty {
        return Err(EngineError::InvalidParameter(
            "pinned run needs a finite horizon or stop_when_empty".into(),
        ));
    }
    if options.probe_times.windows(2).any(|w| w[0] > w[1]) {
        return Err(EngineError::InvalidParameter("probe times must be ascending".into()));
    }
    let mut sim = DirectSim::new(g, lambda, init, options.freeze_level, rng)?;
    let root = g.root();
    let horizon = options.horizon;
    let mut probes = Vec::with_capacity(options.probe_times.len());
    let mut next_probe = 0usize;
    let mut extinction_time = None;
    let mut watch_hit = None;
    let mut events = 0u64;
    let mut capped = false;

    if sim.free_occupied_count() == 0 {
        extinction_time = Some(0.0);
    }
    loop {
        if extinction_time.is_some() && options.stop_when_empty {
            break;
        }
        let now = sim.time();
        let next = sim.peek_time().unwrap_or(f64::INFINITY);
        let until = next.min(horizon);
        while next_probe < options.probe_times.len() && options.probe_times[next_probe] < until {
            let time = options.probe_times[next_probe];
            if time >= now {
                probes.push(Probe {
                    time,
                    occupied: sim.occupied_count(),
                    root_occupied: sim.is_occupied(root),
                });
            }
            next_probe += 1;
        }
        if let (None, Some((w, lo, hi))) = (watch_hit, options.watch) {
            if sim.is_occupied(w) && now <= hi && until >= lo {
                watch_hit = Some(now.max(lo));
            }
        }
        if watch_hit.is_some() && options.stop_on_watch {
            break;
        }
        if next > horizon || next.is_infinite() {
            break;
        }
        if events >= options.max_events {
            capped = true;
            break;
        }
        sim.step(rng);
        events += 1;
        if extinction_time.is_none() && sim.free_occupied_count() == 0 {
            extinction_time = Some(sim.time());
        }
    }
    while next_probe < options.probe_times.len() && options.probe_times[next_probe] <= horizon {
        // the state is frozen after the last event (or extinction)
        let time = options.probe_times[next_probe];
        if !capped && (time >= sim.time()) && !(options.stop_on_watch && watch_hit.is_some()) {
            probes.push(Probe {
                time,
                occupied: sim.occupied_count(),
                root_occupied: sim.is_occupied(root),
            });
        }
        next_probe += 1;
    }
    let end_time = match extinction_time {
        Some(t) if options.stop_when_empty => t,
        _ if capped => sim.time(),
        _ if options.stop_on_watch && watch_hit.is_some() => watch_hit.unwrap_or(sim.time()),
        _ if horizon.is_finite() => horizon,
        _ => sim.time(),
    };
    Ok(SimOutcome {
        extinction_time,
        censored: extinction_time.is_none(),
        end_time,
        probes,
        frozen: sim.frozen_counts(),
        watch_hit,
        events,
        final_occupied: sim.occupied_count(),
    })
}

/// Survival time from the all-occupied start, or the censoring cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurvivalTime {
    Extinct(f64),
    Censored(f64),
}

impl SurvivalTime {
    pub fn time(&self) -> f64 {
        match *self {
            SurvivalTime::Extinct(t) | SurvivalTime::Censored(t) => t,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, SurvivalTime::Censored(_))
    }
}

pub fn survival_time<R: Rng + ?Sized>(
    g: &Graph,
    lambda: f64,
    cap: f64,
    rng: &mut R,
) -> Result<SurvivalTime, EngineError> {
    if cap.is_nan() || cap < 0.0 {
        return Err(EngineError::InvalidParameter(format!("cap = {cap}")));
    }
    if cap == 0.0 {
        return Ok(SurvivalTime::Censored(0.0));
    }
    let out = simulate_direct(
        g,
        lambda,
        &Configuration::all_occupied(g),
        &SimOptions::with_horizon(cap),
        rng,
    )?;
    Ok(match out.extinction_time {
        Some(t) => SurvivalTime::Extinct(t),
        None => SurvivalTime::Censored(cap),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenRun {
    /// Births onto each boundary vertex, `B(S(ρ), y)`.
    pub counts: BTreeMap<VertexId, u64>,
    pub duration: f64,
    pub censored: bool,
}

impl FrozenRun {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Starts from the root of a periodic tree of depth `k + 1`, freezes births
/// onto level `k + 1` and runs until the interior is empty.
pub fn frozen_boundary_run<R: Rng + ?Sized>(
    g: &Graph,
    lambda: f64,
    rng: &mut R,
) -> Result<FrozenRun, EngineError> {
    let spec = g
        .spec()
        .ok_or_else(|| EngineError::InvalidParameter("graph has no degree spec".into()))?;
    let freeze = spec.k() as u32 + 1;
    if g.depth() != freeze {
        return Err(EngineError::InvalidParameter(format!(
            "expected a truncation of depth k + 1 = {freeze}, got depth {}",
            g.depth()
        )));
    }
    let options = SimOptions {
        freeze_level: Some(freeze),
        max_events: 200_000_000,
        ..SimOptions::default()
    };
    let out = simulate_direct(g, lambda, &Configuration::new([g.root()]), &options, rng)?;
    Ok(FrozenRun { counts: out.frozen.clone(), duration: out.end_time, censored: out.censored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::topology::{build_periodic_tree, build_star, DegreeSpec};

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn zero_rate_extinction_is_max_of_exponentials() {
        let g = build_star(3).unwrap();
        let taus: Vec<f64> = (0..100_000u64)
            .map(|i| {
                let mut rng = seed::replicate_stream(31, i);
                survival_time(&g, 0.0, 1e9, &mut rng).unwrap().time()
            })
            .collect();
        let (m, se) = mean_se(&taus);
        let exact = 1.0 + 0.5 + 1.0 / 3.0 + 0.25;
        assert!((m - exact).abs() < 3.0 * se, "mean {m} vs {exact} (se {se})");
    }

    #[test]
    fn single_vertex_is_unit_exponential() {
        let g = build_periodic_tree(&DegreeSpec::new(2, vec![]).unwrap(), 0).unwrap();
        let taus: Vec<f64> = (0..50_000u64)
            .map(|i| {
                let mut rng = seed::replicate_stream(4, i);
                survival_time(&g, 3.0, 1e9, &mut rng).unwrap().time()
            })
            .collect();
        let (m, se) = mean_se(&taus);
        assert!((m - 1.0).abs() < 3.0 * se);
    }

    #[test]
    fn zero_cap_is_censored() {
        let g = build_star(3).unwrap();
        let mut rng = seed::stream(0);
        assert_eq!(survival_time(&g, 1.0, 0.0, &mut rng).unwrap(), SurvivalTime::Censored(0.0));
        let t = survival_time(&g, 5.0, 0.5, &mut rng).unwrap();
        assert!(t.is_censored() || t.time() <= 0.5);
    }

    #[test]
    fn probes_and_watch_window() {
        let g = build_star(5).unwrap();
        let mut rng = seed::stream(12);
        let options = SimOptions {
            horizon: 4.0,
            stop_when_empty: false,
            probe_times: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            watch: Some((0, 2.0, 4.0)),
            ..SimOptions::default()
        };
        let init = Configuration::new([0]).with_pins([0]);
        let out = simulate_direct(&g, 1.0, &init, &options, &mut rng).unwrap();
        assert_eq!(out.probes.len(), 5);
        assert!(out.probes.iter().all(|p| p.root_occupied && p.occupied >= 1));
        assert_eq!(out.watch_hit, Some(2.0));
        assert_eq!(out.end_time, 4.0);
    }

    #[test]
    fn frozen_run_with_zero_rate_has_no_births() {
        let g = build_periodic_tree(&DegreeSpec::new(3, vec![1]).unwrap(), 2).unwrap();
        let mut rng = seed::stream(2);
        let run = frozen_boundary_run(&g, 0.0, &mut rng).unwrap();
        assert_eq!(run.total(), 0);
        assert_eq!(run.counts.len(), 3);
        assert!(!run.censored);
        let shallow = build_periodic_tree(&DegreeSpec::new(3, vec![1]).unwrap(), 1).unwrap();
        assert!(frozen_boundary_run(&shallow, 0.1, &mut rng).is_err());
    }

    #[test]
    fn boundary_vertices_never_occupied() {
        let g = build_periodic_tree(&DegreeSpec::new(3, vec![2]).unwrap(), 2).unwrap();
        let mut rng = seed::stream(9);
        let init = Configuration::new([0]);
        let mut sim = DirectSim::new(&g, 2.0, &init, Some(2), &mut rng).unwrap();
        for _ in 0..10_000 {
            if sim.step(&mut rng).is_none() {
                break;
            }
            assert!(g.vertices_at_level(2).all(|v| !sim.is_occupied(v)));
        }
    }

    #[test]
    fn pinned_vertex_stays_occupied() {
        let g = build_star(4).unwrap();
        let mut rng = seed::stream(19);
        let init = Configuration::new([0]).with_pins([0]);
        let mut sim = DirectSim::new(&g, 0.5, &init, None, &mut rng).unwrap();
        for _ in 0..5_000 {
            sim.step(&mut rng);
            assert!(sim.is_occupied(0));
        }
        let timed = Configuration::new([0]).with_pins([0]).with_pin_expiry(1.0);
        let mut sim = DirectSim::new(&g, 0.5, &timed, None, &mut rng).unwrap();
        while let Some(ev) = sim.step(&mut rng) {
            if let StepEvent::Recovery { time, vertex: 0, effective } = ev {
                assert_eq!(effective, time >= 1.0);
            }
        }
        assert_eq!(sim.occupied_count(), 0);
    }
}
