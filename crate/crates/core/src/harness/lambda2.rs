//! Finite proxy for the local-survival threshold: start from the root alone
//! and call a run a success when the root is occupied at some time in
//! `[horizon/2, horizon]`. The success frequency increases with λ by
//! attractiveness, so λ can be bisected against a target frequency.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::engine::{simulate_direct, Configuration, EngineError, SimOptions};
use crate::seed;
use crate::stats::Frequency;
use crate::topology::{build_periodic_tree, DegreeSpec, Graph};

/// Event budget of a single proxy run.
pub const PROXY_EVENT_CAP: u64 = 500_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProxyRun {
    pub success: bool,
    /// First time the root is seen occupied in the window, or the end time.
    pub time: f64,
    pub events: u64,
}

/// One proxy run on `g` from the root alone.
pub fn proxy_run(g: &Graph, lambda: f64, horizon: f64, seed: u64) -> Result<ProxyRun, HarnessError> {
    let options = SimOptions {
        horizon,
        stop_when_empty: true,
        watch: Some((g.root(), 0.5 * horizon, horizon)),
        stop_on_watch: true,
        max_events: PROXY_EVENT_CAP,
        ..SimOptions::default()
    };
    let mut rng = seed::stream(seed);
    let out = simulate_direct(g, lambda, &Configuration::new([g.root()]), &options, &mut rng)?;
    if out.events >= PROXY_EVENT_CAP {
        return Err(EngineError::TooManyEvents { expected: out.events as f64, cap: PROXY_EVENT_CAP }.into());
    }
    Ok(ProxyRun { success: out.watch_hit.is_some(), time: out.end_time, events: out.events })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub lambda: f64,
    pub successes: u64,
    pub trials: u64,
    pub frequency: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lambda2Estimate {
    pub n: usize,
    pub degrees: Vec<usize>,
    pub depth: u32,
    pub horizon: f64,
    pub threshold: f64,
    /// Final bracket: frequency below the threshold at `lo`, at or above at `hi`.
    pub lo: f64,
    pub hi: f64,
    /// Geometric midpoint of the bracket.
    pub estimate: f64,
    pub probes: Vec<ProbeResult>,
    /// The empirical response was non-monotone beyond noise; the bracket was
    /// widened to cover every crossing.
    pub non_monotone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectOptions {
    pub horizon: f64,
    pub threshold: f64,
    pub replicates: u64,
    pub steps: u32,
    /// Initial bracket; widened geometrically if it does not straddle the threshold.
    pub lo: f64,
    pub hi: f64,
    pub seed: u64,
}

/// Success frequency at one λ. Replicate `i` uses the same derived seed at
/// every λ (common random numbers across probes).
pub fn probe(g: &Graph, lambda: f64, horizon: f64, replicates: u64, master: u64) -> Result<ProbeResult, HarnessError> {
    let successes = (0..replicates)
        .into_par_iter()
        .map(|i| proxy_run(g, lambda, horizon, seed::derive_seed(master, i)).map(|r| r.success as u64))
        .collect::<Result<Vec<u64>, HarnessError>>()?
        .into_iter()
        .sum();
    let f = Frequency::new(successes, replicates);
    Ok(ProbeResult {
        lambda,
        successes,
        trials: replicates,
        frequency: f.estimate,
        std_error: f.std_error,
    })
}

/// Bisects λ (geometrically) until the proxy success frequency brackets the
/// threshold, on the periodic tree `family` truncated at `depth`.
pub fn lambda2_bisect(family: &DegreeSpec, depth: u32, opts: &BisectOptions) -> Result<Lambda2Estimate, HarnessError> {
    let period = family.k() as u32 + 1;
    if depth == 0 || depth % period != 0 {
        return Err(HarnessError::Spec(format!("depth {depth} is not a multiple of k + 1 = {period}")));
    }
    if !(opts.threshold > 0.0 && opts.threshold < 1.0) {
        return Err(HarnessError::Spec(format!("threshold {} not in (0, 1)", opts.threshold)));
    }
    if !(opts.lo > 0.0 && opts.lo < opts.hi) || opts.replicates == 0 || !(opts.horizon > 0.0) {
        return Err(HarnessError::Spec("need 0 < lo < hi, replicates >= 1, horizon > 0".into()));
    }
    let g = build_periodic_tree(family, depth)?;
    let q = opts.threshold;
    let mut probes = Vec::new();
    let run = |lambda: f64, probes: &mut Vec<ProbeResult>| -> Result<f64, HarnessError> {
        let p = probe(&g, lambda, opts.horizon, opts.replicates, opts.seed)?;
        probes.push(p);
        Ok(p.frequency)
    };
    let (mut lo, mut hi) = (opts.lo, opts.hi);
    for _ in 0..8 {
        if run(lo, &mut probes)? < q {
            break;
        }
        lo /= 2.0;
    }
    for _ in 0..8 {
        if run(hi, &mut probes)? >= q {
            break;
        }
        hi *= 2.0;
    }
    for _ in 0..opts.steps {
        let mid = (lo * hi).sqrt();
        if run(mid, &mut probes)? >= q {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    probes.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let non_monotone = probes.iter().enumerate().any(|(i, a)| {
        probes[i + 1..].iter().any(|b| {
            let noise = 3.0 * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
            a.frequency - b.frequency > noise.max(1.0 / a.trials as f64)
        })
    });
    if non_monotone {
        // cover every λ whose frequency disagrees with its side of the bracket
        for p in &probes {
            if p.frequency >= q {
                lo = lo.min(p.lambda);
            } else {
                hi = hi.max(p.lambda);
            }
        }
    }
    Ok(Lambda2Estimate {
        n: family.n(),
        degrees: family.degrees().to_vec(),
        depth,
        horizon: opts.horizon,
        threshold: q,
        lo,
        hi,
        estimate: (lo * hi).sqrt(),
        probes,
        non_monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_star;

    #[test]
    fn zero_rate_never_reoccupies() {
        let g = build_star(50).unwrap();
        let p = probe(&g, 0.0, 20.0, 200, 3).unwrap();
        assert_eq!(p.successes, 0);
    }

    #[test]
    fn large_rate_nearly_always_reoccupies() {
        let g = build_star(50).unwrap();
        let p = probe(&g, 2.0, 20.0, 200, 3).unwrap();
        assert!(p.frequency > 0.95, "{}", p.frequency);
    }

    #[test]
    fn bisection_brackets_the_threshold() {
        let spec = DegreeSpec::star(30).unwrap();
        let opts = BisectOptions {
            horizon: 20.0,
            threshold: 0.5,
            replicates: 200,
            steps: 5,
            lo: 0.05,
            hi: 1.0,
            seed: 11,
        };
        let est = lambda2_bisect(&spec, 1, &opts).unwrap();
        assert!(est.lo < est.hi);
        assert!(est.probes.len() >= 7);
        let at = |l: f64| est.probes.iter().find(|p| p.lambda == l).unwrap().frequency;
        if !est.non_monotone {
            assert!(at(est.lo) < 0.5 && at(est.hi) >= 0.5);
        }
        assert!(lambda2_bisect(&DegreeSpec::new(3, vec![1]).unwrap(), 3, &opts).is_err());
    }
}
