//! Hub-to-hub relay: an ignited source hub tries to make a hub `k + 1`
//! steps away wet, i.e. to hold `⌈ηL⌉` occupied leaves.

use rayon::prelude::*;
use serde::Serialize;

use super::HarnessError;
use crate::bounds::{push_probability_lower, relay_schedule};
use crate::engine::{Configuration, DirectSim, StepEvent};
use crate::seed;
use crate::starchain::floor_level;
use crate::stats::Frequency;
use crate::topology::{build_hub_pair, Graph, VertexId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaySpec {
    pub n: usize,
    pub k: usize,
    pub lambda: f64,
    pub delta: f64,
    pub eta: f64,
    pub budget: f64,
}

impl RelaySpec {
    /// `L = ⌊(1-4δ)λn⌋`, at most `n - 1` since one source child is on the path.
    pub fn level(&self) -> u64 {
        floor_level((1.0 - 4.0 * self.delta) * self.lambda * self.n as f64).min(self.n as u64 - 1)
    }

    /// Occupied target leaves that make the target wet, `⌈ηL⌉` (at least 1).
    pub fn wet_threshold(&self) -> u64 {
        ((self.eta * self.level() as f64).ceil() as u64).max(1)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.n < 2 || self.k == 0 {
            return Err(HarnessError::Spec("relay needs n >= 2 and k >= 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(HarnessError::Spec(format!("lambda = {}", self.lambda)));
        }
        if !(self.delta > 0.0 && self.delta < 0.25) || !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(HarnessError::Spec("need δ in (0, 1/4) and η in (0, 1)".into()));
        }
        if !(self.budget >= 0.0) {
            return Err(HarnessError::Spec(format!("budget = {}", self.budget)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelayRun {
    pub success: bool,
    /// Time the target became wet, or when the run ended.
    pub time: f64,
    pub target_reached: bool,
}

/// One relay attempt on the hub-pair graph `g` built for `spec`.
pub fn relay_run(g: &Graph, spec: &RelaySpec, seed: u64) -> Result<RelayRun, HarnessError> {
    let target = g.relay_target().ok_or_else(|| HarnessError::Spec("graph has no relay target".into()))?;
    let l = spec.level() as usize;
    // source center plus its first L off-path children
    let source_leaves = g.children(g.root())[1..=l].iter().copied();
    let init = Configuration::new(std::iter::once(g.root()).chain(source_leaves));
    let mut rng = seed::stream(seed);
    let mut sim = DirectSim::new(g, spec.lambda, &init, None, &mut rng)?;
    let wet = spec.wet_threshold() as usize;
    let is_leaf = |v: VertexId| g.parent(v) == Some(target);
    let mut leaves = 0usize;
    let mut target_reached = false;
    loop {
        match sim.peek_time() {
            Some(t) if t <= spec.budget => {}
            _ => return Ok(RelayRun { success: false, time: spec.budget, target_reached }),
        }
        match sim.step(&mut rng) {
            Some(StepEvent::Birth { to, time, .. }) => {
                if to == target {
                    target_reached = true;
                } else if is_leaf(to) {
                    leaves += 1;
                    if leaves >= wet {
                        return Ok(RelayRun { success: true, time, target_reached });
                    }
                }
            }
            Some(StepEvent::Recovery { vertex, effective: true, .. }) if is_leaf(vertex) => {
                leaves -= 1;
            }
            Some(_) => {}
            None => return Ok(RelayRun { success: false, time: sim.time(), target_reached }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelayResult {
    pub n: usize,
    pub k: usize,
    pub lambda: f64,
    pub budget: f64,
    pub level: u64,
    pub wet_threshold: u64,
    pub successes: u64,
    pub trials: u64,
    pub frequency: f64,
    pub std_error: f64,
    pub interval95: (f64, f64),
    /// Push lower bound per attempt, `(e^{-1}(1-e^{-λ})e^{-1})^{k+1}`.
    pub push: f64,
    /// `budget / t₁` attempts.
    pub attempts: f64,
    /// `1 - (1 - push)^{attempts}`.
    pub predicted: f64,
}

pub fn hub_relay_experiment(spec: &RelaySpec, replicates: u64, master: u64) -> Result<RelayResult, HarnessError> {
    spec.validate()?;
    if replicates == 0 {
        return Err(HarnessError::Spec("replicates must be >= 1".into()));
    }
    let g = build_hub_pair(spec.n, spec.k)?;
    let successes: u64 = (0..replicates)
        .into_par_iter()
        .map(|i| relay_run(&g, spec, seed::derive_seed(master, i)).map(|r| r.success as u64))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    let f = Frequency::new(successes, replicates);
    let push = push_probability_lower(spec.lambda, spec.k as u32).exact;
    let c = spec.lambda * spec.lambda * spec.n as f64 / (spec.n as f64).ln();
    let t1 = relay_schedule(spec.delta, spec.eta, spec.n as u64, c).t1;
    let attempts = spec.budget / t1;
    Ok(RelayResult {
        n: spec.n,
        k: spec.k,
        lambda: spec.lambda,
        budget: spec.budget,
        level: spec.level(),
        wet_threshold: spec.wet_threshold(),
        successes,
        trials: replicates,
        frequency: f.estimate,
        std_error: f.std_error,
        interval95: f.interval95(),
        push,
        attempts,
        predicted: 1.0 - (1.0 - push).powf(attempts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::starchain::lambda_from_c;

    fn spec(lambda: f64, budget: f64) -> RelaySpec {
        RelaySpec { n: 40, k: 1, lambda, delta: 0.1, eta: 0.2, budget }
    }

    #[test]
    fn zero_rate_or_budget_never_succeeds() {
        let s = spec(0.0, 50.0);
        assert_eq!(hub_relay_experiment(&s, 200, 1).unwrap().successes, 0);
        let s = spec(0.5, 0.0);
        assert_eq!(hub_relay_experiment(&s, 200, 1).unwrap().successes, 0);
    }

    #[test]
    fn frequency_respects_push_prediction() {
        let n = 200;
        let lambda = lambda_from_c(0.8, n as u64);
        let s = RelaySpec { n, k: 1, lambda, delta: 0.1, eta: 0.2, budget: (n as f64).powf(0.8) };
        let r = hub_relay_experiment(&s, 400, 7).unwrap();
        assert_eq!(r.level, 17);
        assert!(r.frequency + 3.0 * r.std_error.max(1.0 / 400.0) >= r.predicted);
    }

    #[test]
    fn runs_are_reproducible() {
        let s = spec(0.4, 30.0);
        let g = build_hub_pair(s.n, s.k).unwrap();
        assert_eq!(relay_run(&g, &s, 5).unwrap(), relay_run(&g, &s, 5).unwrap());
    }
}
