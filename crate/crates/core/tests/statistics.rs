//! Distributional checks of the simulators against each other and against
//! exact solves.

use rayon::prelude::*;

use contact_core::engine::{evolve_on_log, frozen_boundary_run, generate_event_log, survival_time, Configuration, EventLog};
use contact_core::oracle::{frozen_boundary_expectation, small_graph_extinction_time};
use contact_core::seed;
use contact_core::starchain::{reduced_value_at, StarChainParams, StarState, StarWalk};
use contact_core::stats::{ks_one_sided, ks_one_sided_critical, ks_statistic, Moments};
use contact_core::topology::{build_periodic_tree, build_star, DegreeSpec, Graph, VertexId};

/// Extinction time on a fixed log, found by bisection over the recovery
/// marks (the empty set is absorbing, so emptiness is monotone in t).
fn extinction_on_log(g: &Graph, log: &EventLog, init: &Configuration) -> Option<f64> {
    let mut marks: Vec<f64> = (0..g.vertex_count() as VertexId).flat_map(|v| log.recovery_marks(v).to_vec()).collect();
    marks.sort_by(f64::total_cmp);
    let empty_at = |t: f64| evolve_on_log(g, log, init, t).unwrap().occupied().is_empty();
    if !empty_at(log.horizon()) {
        return None;
    }
    let (mut lo, mut hi) = (0usize, marks.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if empty_at(marks[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(marks[lo])
}

#[test]
fn direct_and_log_simulations_agree_in_law() {
    let g = build_star(2).unwrap();
    let lambda = 0.5;
    let reps = 100_000u64;
    let horizon = 80.0;
    let init = Configuration::all_occupied(&g);
    let direct: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|i| survival_time(&g, lambda, 1e6, &mut seed::replicate_stream(1, i)).unwrap().time())
        .collect();
    let replay: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let log = generate_event_log(&g, lambda, horizon, &mut seed::replicate_stream(2, i)).unwrap();
            extinction_on_log(&g, &log, &init).expect("survived the whole log")
        })
        .collect();
    let d = ks_statistic(&direct, &replay);
    assert!(d < 0.01, "KS = {d}");
    let exact = small_graph_extinction_time(&g, lambda, &[0, 1, 2]).unwrap();
    let m = Moments::of(&replay);
    assert!(m.within(exact, 3.0), "{} vs {exact}", m.mean);
}

/// The reduced chain started at L sits below the star's leaf count at the
/// same occupied-center time.
#[test]
fn reduced_chain_is_dominated_by_the_star() {
    let n = 10_000u64;
    let p = StarChainParams::from_c(1.0, n, 0.1).unwrap();
    let l = p.level;
    let reps = 100_000u64;
    for (k, s) in [1.0, 4.0].into_iter().enumerate() {
        let chain: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|i| reduced_value_at(&p, l, s, &mut seed::replicate_stream(30 + k as u64, i)).unwrap() as f64)
            .collect();
        let star: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed::replicate_stream(40 + k as u64, i);
                let mut walk = StarWalk::new(n, p.lambda, StarState::new(l, true)).unwrap();
                walk.leaves_at_center_time(s, &mut rng) as f64
            })
            .collect();
        // F_chain - F_star should be >= 0; its negative part is the violation
        let (_, violation) = ks_one_sided(&chain, &star);
        let crit = ks_one_sided_critical(chain.len(), star.len(), 1e-3);
        assert!(violation <= crit, "s = {s}: violation {violation} > {crit}");
        assert!(Moments::of(&chain).mean <= Moments::of(&star).mean);
    }
}

#[test]
fn frozen_counts_match_the_exact_expectation() {
    let spec = DegreeSpec::new(3, vec![1]).unwrap();
    let g = build_periodic_tree(&spec, 2).unwrap();
    let lambda = 0.3;
    let exact: f64 = frozen_boundary_expectation(&g, lambda).unwrap().values().sum();
    let totals: Vec<f64> = (0..100_000u64)
        .into_par_iter()
        .map(|i| frozen_boundary_run(&g, lambda, &mut seed::replicate_stream(7, i)).unwrap().total() as f64)
        .collect();
    let m = Moments::of(&totals);
    assert!(m.mean > 0.0 && m.mean.is_finite());
    assert!(m.within(exact, 3.0), "MC {} ± {} vs {exact}", m.mean, m.std_error);
}

#[test]
fn root_start_extinction_matches_oracle_on_a_small_tree() {
    let spec = DegreeSpec::new(2, vec![1]).unwrap();
    let g = build_periodic_tree(&spec, 3).unwrap();
    let lambda = 0.8;
    let exact = small_graph_extinction_time(&g, lambda, &[g.root()]).unwrap();
    let init = Configuration::new([g.root()]);
    let times: Vec<f64> = (0..50_000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::replicate_stream(8, i);
            let opts = contact_core::engine::SimOptions::default();
            contact_core::engine::simulate_direct(&g, lambda, &init, &opts, &mut rng)
                .unwrap()
                .extinction_time
                .unwrap()
        })
        .collect();
    let m = Moments::of(&times);
    assert!(m.within(exact, 3.0), "MC {} ± {} vs {exact}", m.mean, m.std_error);
}
