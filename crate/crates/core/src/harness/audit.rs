//! Pathwise audits of duality, additivity, monotonicity and pin dominance
//! on shared event logs, with a reversed-arrow negative control.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::HarnessError;
use crate::engine::mask::MaskTimeline;
use crate::engine::{generate_event_log, EventLog};
use crate::seed;
use crate::topology::Graph;

/// Graphs up to this size are audited over every initial set.
pub const EXHAUSTIVE_LIMIT: usize = 10;
/// Largest graph the bitmask audit accepts.
pub const AUDIT_VERTEX_LIMIT: usize = 64;
/// Initial sets drawn per log when the graph is too large to enumerate.
pub const SAMPLED_SETS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditFailure {
    pub trial: u64,
    pub seed: u64,
    pub check: String,
    pub detail: String,
    /// The offending log in the debug text format.
    pub log: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub trials: u64,
    pub checks: u64,
    pub exhaustive: bool,
    pub failure: Option<AuditFailure>,
    /// The corrupted-log control produced a violation, as it must.
    pub negative_control_detected: bool,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.negative_control_detected
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TrialOutcome {
    pub checks: u64,
    pub failure: Option<(String, String)>,
}

fn check_graph(g: &Graph) -> Result<(), HarnessError> {
    if g.vertex_count() > AUDIT_VERTEX_LIMIT {
        return Err(HarnessError::Spec(format!(
            "audit needs at most {AUDIT_VERTEX_LIMIT} vertices, graph has {}",
            g.vertex_count()
        )));
    }
    Ok(())
}

fn initial_sets<R: Rng + ?Sized>(vcount: usize, rng: &mut R) -> Vec<u64> {
    if vcount <= EXHAUSTIVE_LIMIT {
        (0..1u64 << vcount).collect()
    } else {
        let mask = if vcount == 64 { u64::MAX } else { (1u64 << vcount) - 1 };
        (0..SAMPLED_SETS).map(|_| rng.random::<u64>() & mask).collect()
    }
}

fn bits(mask: u64) -> impl Iterator<Item = u32> {
    (0..64).filter(move |i| mask >> i & 1 == 1)
}

/// Runs every check on one log. `forward` and `backward` are normally the
/// same log; the negative control passes a corrupted `backward`.
fn audit_pair(
    g: &Graph,
    forward: &MaskTimeline,
    backward: &MaskTimeline,
    horizon: f64,
    sets: &[u64],
    full: bool,
) -> TrialOutcome {
    let vcount = g.vertex_count();
    let pin = 1u64 << g.pin_target().unwrap_or(g.root());
    let mut checks = 0u64;
    let fail = |check: &str, detail: String, checks| TrialOutcome {
        checks,
        failure: Some((check.to_string(), detail)),
    };
    for t in [0.5 * horizon, horizon] {
        let duals: Vec<u64> = (0..vcount).map(|x| backward.dual(1 << x, 0, f64::INFINITY, t)).collect();
        let pinned_duals: Vec<u64> =
            (0..vcount).map(|x| backward.dual(1 << x, pin, f64::INFINITY, t)).collect();
        let singles: Vec<u64> =
            (0..vcount).map(|v| forward.evolve(1 << v, 0, f64::INFINITY, t)).collect();
        for &a in sets {
            let xi = forward.evolve(a, 0, f64::INFINITY, t);
            for x in 0..vcount {
                checks += 1;
                if (xi >> x & 1 == 1) != (a & duals[x] != 0) {
                    return fail(
                        "duality",
                        format!("t={t} A={a:#b} x={x}: forward {} dual {:#b}", xi >> x & 1, duals[x]),
                        checks,
                    );
                }
            }
            if !full {
                continue;
            }
            checks += 1;
            let union = bits(a).fold(0u64, |m, v| m | singles[v as usize]);
            if union != xi {
                return fail(
                    "additivity",
                    format!("t={t} A={a:#b}: evolved {xi:#b}, union of singletons {union:#b}"),
                    checks,
                );
            }
            for v in 0..vcount {
                if a >> v & 1 == 0 {
                    checks += 1;
                    let bigger = forward.evolve(a | 1 << v, 0, f64::INFINITY, t);
                    if xi & !bigger != 0 {
                        return fail(
                            "monotonicity",
                            format!("t={t} A={a:#b} v={v}: {xi:#b} not inside {bigger:#b}"),
                            checks,
                        );
                    }
                    // one added vertex per set keeps the cost linear in |sets|
                    break;
                }
            }
            checks += 1;
            let pinned = forward.evolve(a, pin, f64::INFINITY, t);
            if xi & !pinned != 0 {
                return fail(
                    "pin dominance",
                    format!("t={t} A={a:#b}: {xi:#b} not inside pinned {pinned:#b}"),
                    checks,
                );
            }
            for x in 0..vcount {
                checks += 1;
                if (pinned >> x & 1 == 1) != ((a | pin) & pinned_duals[x] != 0) {
                    return fail(
                        "pinned duality",
                        format!("t={t} A={a:#b} x={x}: forward {} dual {:#b}", pinned >> x & 1, pinned_duals[x]),
                        checks,
                    );
                }
            }
        }
    }
    TrialOutcome { checks, failure: None }
}

fn trial_log(g: &Graph, lambda: f64, horizon: f64, seed: u64) -> Result<(EventLog, Vec<u64>), HarnessError> {
    let mut rng = seed::stream(seed);
    let log = generate_event_log(g, lambda, horizon, &mut rng)?;
    let sets = initial_sets(g.vertex_count(), &mut rng);
    Ok((log, sets))
}

/// One audited log drawn from `seed`.
pub(crate) fn audit_trial(g: &Graph, lambda: f64, horizon: f64, seed: u64) -> Result<(TrialOutcome, EventLog), HarnessError> {
    check_graph(g)?;
    let (log, sets) = trial_log(g, lambda, horizon, seed)?;
    let tl = MaskTimeline::new(&log);
    Ok((audit_pair(g, &tl, &tl, horizon, &sets, true), log))
}

/// Reverses one arrow per log and looks for a duality violation between
/// the original forward evolution and the corrupted dual.
pub fn negative_control(
    g: &Graph,
    lambda: f64,
    horizon: f64,
    master: u64,
    max_logs: u64,
) -> Result<Option<u64>, HarnessError> {
    check_graph(g)?;
    for i in 0..max_logs {
        let s = seed::derive_seed(master ^ 0x6e65_6761_7469_7665, i);
        let (log, sets) = trial_log(g, lambda, horizon, s)?;
        if log.arrow_count() == 0 {
            continue;
        }
        let mut rng = seed::stream(s.rotate_left(17));
        let idx = rng.random_range(0..log.arrow_count());
        let Some(bad) = log.with_reversed_arrow(idx) else { continue };
        let (fwd, bwd) = (MaskTimeline::new(&log), MaskTimeline::new(&bad));
        if audit_pair(g, &fwd, &bwd, horizon, &sets, false).failure.is_some() {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

/// Audits `trials` independent logs, in parallel, and runs the negative
/// control. The first failing trial (by index) is reported with its log.
pub fn duality_audit(g: &Graph, lambda: f64, horizon: f64, trials: u64, master: u64) -> Result<AuditReport, HarnessError> {
    check_graph(g)?;
    let results: Vec<(u64, TrialOutcome, Option<String>)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = seed::derive_seed(master, i);
            let (out, log) = audit_trial(g, lambda, horizon, s)?;
            let text = out.failure.as_ref().map(|_| log.to_text());
            Ok((i, out, text))
        })
        .collect::<Result<_, HarnessError>>()?;
    let checks = results.iter().map(|(_, o, _)| o.checks).sum();
    let failure = results.into_iter().find_map(|(i, o, text)| {
        o.failure.map(|(check, detail)| AuditFailure {
            trial: i,
            seed: seed::derive_seed(master, i),
            check,
            detail,
            log: text.unwrap_or_default(),
        })
    });
    let detected = negative_control(g, lambda, horizon, master, 1000)?.is_some();
    Ok(AuditReport {
        trials,
        checks,
        exhaustive: g.vertex_count() <= EXHAUSTIVE_LIMIT,
        failure,
        negative_control_detected: detected,
    })
}
