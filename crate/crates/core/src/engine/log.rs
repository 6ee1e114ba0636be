use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::EngineError;
use crate::topology::{Graph, VertexId};

/// Refuse logs whose expected size exceeds this many events.
pub const DEFAULT_EVENT_CAP: u64 = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Recovery(VertexId),
    Arrow(VertexId, VertexId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// Poisson recovery marks (rate 1 per vertex) and transmission arrows (rate λ
/// per directed edge) on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    horizon: f64,
    lambda: f64,
    recoveries: Vec<Vec<f64>>,
    arrows: Vec<Vec<f64>>,
    endpoints: Vec<(VertexId, VertexId)>,
    timeline: Vec<Event>,
}

pub fn generate_event_log<R: Rng + ?Sized>(
    g: &Graph,
    lambda: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<EventLog, EngineError> {
    generate_event_log_capped(g, lambda, horizon, DEFAULT_EVENT_CAP, rng)
}

pub fn generate_event_log_capped<R: Rng + ?Sized>(
    g: &Graph,
    lambda: f64,
    horizon: f64,
    cap: u64,
    rng: &mut R,
) -> Result<EventLog, EngineError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(EngineError::InvalidParameter(format!("lambda = {lambda}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(EngineError::InvalidParameter(format!("horizon = {horizon}")));
    }
    let expected =
        horizon * (g.vertex_count() as f64 + lambda * g.directed_edge_count() as f64);
    if expected > cap as f64 {
        return Err(EngineError::TooManyEvents { expected, cap });
    }
    let mut poisson = |rate: f64| -> Vec<f64> {
        let mut times = Vec::new();
        if rate <= 0.0 {
            return times;
        }
        let mut t = 0.0;
        loop {
            let gap: f64 = Exp1.sample(rng);
            t += gap / rate;
            if t > horizon {
                return times;
            }
            times.push(t);
        }
    };
    let recoveries = (0..g.vertex_count()).map(|_| poisson(1.0)).collect();
    let arrows = (0..g.directed_edge_count()).map(|_| poisson(lambda)).collect();
    let endpoints = (0..g.directed_edge_count()).map(|e| g.directed_edge(e)).collect();
    Ok(EventLog::assemble(horizon, lambda, recoveries, arrows, endpoints))
}

impl EventLog {
    fn assemble(
        horizon: f64,
        lambda: f64,
        recoveries: Vec<Vec<f64>>,
        arrows: Vec<Vec<f64>>,
        endpoints: Vec<(VertexId, VertexId)>,
    ) -> Self {
        let mut timeline: Vec<Event> = recoveries
            .iter()
            .enumerate()
            .flat_map(|(v, ts)| {
                ts.iter().map(move |&time| Event { time, kind: EventKind::Recovery(v as VertexId) })
            })
            .chain(arrows.iter().zip(&endpoints).flat_map(|(ts, &(a, b))| {
                ts.iter().map(move |&time| Event { time, kind: EventKind::Arrow(a, b) })
            }))
            .collect();
        timeline.sort_by(|x, y| x.time.total_cmp(&y.time));
        Self { horizon, lambda, recoveries, arrows, endpoints, timeline }
    }

    /// A log with no events.
    pub fn empty(g: &Graph, lambda: f64, horizon: f64) -> Self {
        let endpoints = (0..g.directed_edge_count()).map(|e| g.directed_edge(e)).collect();
        Self::assemble(
            horizon,
            lambda,
            vec![Vec::new(); g.vertex_count()],
            vec![Vec::new(); g.directed_edge_count()],
            endpoints,
        )
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn recovery_marks(&self, v: VertexId) -> &[f64] {
        &self.recoveries[v as usize]
    }

    /// Arrow times on directed edge `id` (see [`Graph::directed_edge`]).
    pub fn arrow_times(&self, id: usize) -> &[f64] {
        &self.arrows[id]
    }

    pub fn arrow_count(&self) -> usize {
        self.arrows.iter().map(Vec::len).sum()
    }

    pub fn recovery_count(&self) -> usize {
        self.recoveries.iter().map(Vec::len).sum()
    }

    /// All events merged in time order.
    pub fn timeline(&self) -> &[Event] {
        &self.timeline
    }

    /// Copy of this log with the `index`-th arrow (in time order) pointing the
    /// other way. Used as a negative control for pathwise audits.
    pub fn with_reversed_arrow(&self, index: usize) -> Option<Self> {
        let ev = self
            .timeline
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Arrow(..)))
            .nth(index)?;
        let EventKind::Arrow(a, b) = ev.kind else { unreachable!() };
        let from = self.endpoints.iter().position(|&p| p == (a, b))?;
        let to = self.endpoints.iter().position(|&p| p == (b, a))?;
        let mut arrows = self.arrows.clone();
        arrows[from].retain(|&t| t != ev.time);
        let pos = arrows[to].partition_point(|&t| t < ev.time);
        arrows[to].insert(pos, ev.time);
        Some(Self::assemble(
            self.horizon,
            self.lambda,
            self.recoveries.clone(),
            arrows,
            self.endpoints.clone(),
        ))
    }

    /// Line-oriented debug dump: `t <time> R <vertex>` or `t <time> A <from> <to>`,
    /// sorted by time, after a `#` header carrying horizon and λ.
    pub fn to_text(&self) -> String {
        let mut out = format!("# horizon={} lambda={}\n", self.horizon, self.lambda);
        for ev in &self.timeline {
            match ev.kind {
                EventKind::Recovery(v) => writeln!(out, "t {} R {}", ev.time, v),
                EventKind::Arrow(a, b) => writeln!(out, "t {} A {} {}", ev.time, a, b),
            }
            .expect("writing to a String");
        }
        out
    }

    /// Parses the debug format. `#` lines are ignored; times must lie in
    /// `[0, horizon]` and arrows must follow graph edges.
    pub fn from_text(g: &Graph, horizon: f64, lambda: f64, text: &str) -> Result<Self, EngineError> {
        let mut recoveries = vec![Vec::new(); g.vertex_count()];
        let mut arrows = vec![Vec::new(); g.directed_edge_count()];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| EngineError::LogParse { line: i + 1, reason };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<u32>().map_err(|e| bad(format!("{s:?}: {e}")));
            let time = match fields.as_slice() {
                ["t", t, ..] => t.parse::<f64>().map_err(|e| bad(format!("{t:?}: {e}")))?,
                _ => return Err(bad("expected leading `t <time>`".into())),
            };
            if !(0.0..=horizon).contains(&time) {
                return Err(bad(format!("time {time} outside [0, {horizon}]")));
            }
            match &fields[2..] {
                ["R", v] => {
                    let v = num(v)?;
                    recoveries
                        .get_mut(v as usize)
                        .ok_or_else(|| bad(format!("vertex {v} not in graph")))?
                        .push(time);
                }
                ["A", a, b] => {
                    let (a, b) = (num(a)?, num(b)?);
                    if a as usize >= g.vertex_count() || b as usize >= g.vertex_count() {
                        return Err(bad(format!("arrow {a}->{b} leaves the graph")));
                    }
                    let id = g
                        .directed_edge_id(a, b)
                        .ok_or_else(|| bad(format!("{a}->{b} is not an edge")))?;
                    arrows[id].push(time);
                }
                _ => return Err(bad("expected `R <v>` or `A <from> <to>`".into())),
            }
        }
        for list in recoveries.iter_mut().chain(arrows.iter_mut()) {
            list.sort_by(f64::total_cmp);
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(EngineError::LogParse {
                    line: 0,
                    reason: "repeated event time on one clock".into(),
                });
            }
        }
        let endpoints = (0..g.directed_edge_count()).map(|e| g.directed_edge(e)).collect();
        Ok(Self::assemble(horizon, lambda, recoveries, arrows, endpoints))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::topology::build_star;

    #[test]
    fn zero_rate_and_zero_horizon() {
        let g = build_star(4).unwrap();
        let mut rng = seed::stream(3);
        let log = generate_event_log(&g, 0.0, 5.0, &mut rng).unwrap();
        assert_eq!(log.arrow_count(), 0);
        assert!(log.recovery_count() > 0);
        let log = generate_event_log(&g, 1.0, 0.0, &mut rng).unwrap();
        assert!(log.timeline().is_empty());
    }

    #[test]
    fn lists_are_sorted_inside_horizon() {
        let g = build_star(6).unwrap();
        let mut rng = seed::stream(11);
        let log = generate_event_log(&g, 0.7, 4.0, &mut rng).unwrap();
        for v in 0..g.vertex_count() as u32 {
            let m = log.recovery_marks(v);
            assert!(m.windows(2).all(|w| w[0] < w[1]));
            assert!(m.iter().all(|&t| (0.0..=4.0).contains(&t)));
        }
        for e in 0..g.directed_edge_count() {
            assert!(log.arrow_times(e).windows(2).all(|w| w[0] < w[1]));
        }
        assert!(log.timeline().windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn cap_reports_expected_count() {
        let g = build_star(100).unwrap();
        let mut rng = seed::stream(1);
        match generate_event_log_capped(&g, 1.0, 10.0, 1000, &mut rng) {
            Err(EngineError::TooManyEvents { expected, cap }) => {
                assert_eq!(cap, 1000);
                assert!((expected - 10.0 * (101.0 + 200.0)).abs() < 1e-9);
            }
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn text_round_trip() {
        let g = build_star(3).unwrap();
        let mut rng = seed::stream(8);
        let log = generate_event_log(&g, 0.8, 3.0, &mut rng).unwrap();
        let text = log.to_text();
        let back = EventLog::from_text(&g, 3.0, 0.8, &text).unwrap();
        assert_eq!(back, log);
        assert!(EventLog::from_text(&g, 3.0, 0.8, "t 1 A 1 2\n").is_err());
        assert!(EventLog::from_text(&g, 3.0, 0.8, "t 4 R 1\n").is_err());
        assert!(EventLog::from_text(&g, 3.0, 0.8, "R 1\n").is_err());
    }

    #[test]
    fn reversing_an_arrow_moves_it() {
        let g = build_star(2).unwrap();
        let log = EventLog::from_text(&g, 2.0, 1.0, "t 0.5 A 0 1\nt 1 R 2\n").unwrap();
        let rev = log.with_reversed_arrow(0).unwrap();
        assert_eq!(rev.timeline()[0].kind, EventKind::Arrow(1, 0));
        assert_eq!(rev.arrow_count(), 1);
        assert!(log.with_reversed_arrow(1).is_none());
    }

    /// Total arrow count on star(100), λ = 0.2, horizon 10 is Poisson with
    /// mean 2 * 100 * 0.2 * 10 = 400.
    #[test]
    fn arrow_count_mean() {
        let g = build_star(100).unwrap();
        let runs = 10_000u64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for i in 0..runs {
            let mut rng = seed::replicate_stream(2024, i);
            let c = generate_event_log(&g, 0.2, 10.0, &mut rng).unwrap().arrow_count() as f64;
            sum += c;
            sum_sq += c * c;
        }
        let mean = sum / runs as f64;
        let var = (sum_sq / runs as f64 - mean * mean) * runs as f64 / (runs as f64 - 1.0);
        let se = (var / runs as f64).sqrt();
        assert!((mean - 400.0).abs() < 3.0 * se, "mean {mean} se {se}");
        assert!((var - 400.0).abs() < 40.0, "variance {var}");
    }
}
