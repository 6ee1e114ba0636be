//! Randomized structural properties.

use std::collections::BTreeMap;

use proptest::prelude::*;

use contact_core::bounds::{dual_path_bound, eval};
use contact_core::engine::{dual_on_log, evolve_on_log, generate_event_log, Configuration};
use contact_core::harness::{summarize, RunRecord};
use contact_core::seed;
use contact_core::starchain::{hitting_bound, loss_pmf};
use contact_core::topology::{build_periodic_tree, DegreeSpec, GraphSpec, VertexId};

fn small_graph() -> impl Strategy<Value = String> {
    prop_oneof![
        (1usize..6).prop_map(|n| format!("star:{n}")),
        (1usize..4, 1usize..3, 1u32..4).prop_map(|(n, a, d)| format!("periodic:{n}:{a}:{d}")),
        (1usize..3, 1usize..3).prop_map(|(a, b)| format!("pinned:{a},{b}")),
    ]
}

fn subset(mask: u32, v: u32) -> Configuration {
    Configuration::new((0..v).filter(|i| mask >> i & 1 == 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn periodic_trees_are_consistent(n in 1usize..5, degrees in prop::collection::vec(1usize..4, 0..3), depth in 0u32..6) {
        let spec = DegreeSpec::new(n, degrees.clone()).unwrap();
        let g = build_periodic_tree(&spec, depth).unwrap();
        let sizes = g.level_sizes();
        prop_assert_eq!(sizes[0], 1);
        for l in 0..depth as usize {
            prop_assert_eq!(sizes[l + 1], sizes[l] * spec.offspring(l as u32, depth));
        }
        let roots = (0..g.vertex_count() as VertexId).filter(|&v| g.parent(v).is_none()).count();
        prop_assert_eq!(roots, 1);
        for v in 0..g.vertex_count() as VertexId {
            for &c in g.children(v) {
                prop_assert_eq!(g.parent(c), Some(v));
            }
        }
        let text = GraphSpec::Periodic(spec.clone(), depth).to_string();
        let again = text.parse::<GraphSpec>().unwrap().build().unwrap();
        prop_assert_eq!(again.edges(), g.edges());
    }

    #[test]
    fn shared_log_couplings(graph in small_graph(), lambda in 0.0f64..2.0, horizon in 0.0f64..3.0, s in any::<u64>(), a in any::<u32>(), b in any::<u32>()) {
        let g = graph.parse::<GraphSpec>().unwrap().build().unwrap();
        let v = g.vertex_count() as u32;
        let mask = if v >= 32 { u32::MAX } else { (1u32 << v) - 1 };
        let (a, b) = (a & mask, b & mask);
        let log = generate_event_log(&g, lambda, horizon, &mut seed::stream(s)).unwrap();
        let t = horizon;
        let ea = evolve_on_log(&g, &log, &subset(a, v), t).unwrap();
        let eb = evolve_on_log(&g, &log, &subset(b, v), t).unwrap();
        let eab = evolve_on_log(&g, &log, &subset(a | b, v), t).unwrap();
        // additivity
        let union: std::collections::BTreeSet<_> = ea.occupied().union(eb.occupied()).copied().collect();
        prop_assert_eq!(eab.occupied(), &union);
        // monotonicity
        let ei = evolve_on_log(&g, &log, &subset(a & b, v), t).unwrap();
        prop_assert!(ei.occupied().is_subset(ea.occupied()));
        // pin dominance
        let pinned = evolve_on_log(&g, &log, &subset(a, v).with_pins([g.root()]), t).unwrap();
        prop_assert!(ea.occupied().is_subset(pinned.occupied()));
        // duality
        for x in 0..v {
            let dual = dual_on_log(&g, &log, x, t).unwrap();
            let meets = dual.iter().any(|y| a >> y & 1 == 1);
            prop_assert_eq!(ea.is_occupied(x), meets);
        }
    }

    #[test]
    fn summary_ignores_record_order(taus in prop::collection::vec((0.0f64..100.0, any::<bool>()), 1..60), rot in 0usize..60) {
        let records: Vec<RunRecord> = taus
            .iter()
            .enumerate()
            .map(|(i, &(tau, censored))| RunRecord {
                experiment_id: "p".into(),
                kind: "survival".into(),
                graph: "star:3".into(),
                n: 3,
                k: 0,
                degrees: String::new(),
                lambda: 0.5,
                c: None,
                delta: 0.1,
                eta: 0.2,
                seed: seed::derive_seed(1, i as u64),
                replicate: i as u64,
                outcome: if censored { "censored" } else { "extinct" }.into(),
                tau,
                censored,
                hits: 0,
                frozen_total: 0,
                wall_ms: 0,
            })
            .collect();
        let mut shuffled = records.clone();
        let len = shuffled.len();
        shuffled.rotate_left(rot % len);
        shuffled.reverse();
        // compared serialized, since an all-censored batch has NaN moments
        let a = serde_json::to_string(&summarize(&records).unwrap()).unwrap();
        let b = serde_json::to_string(&summarize(&shuffled).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn hitting_bound_is_a_probability(a in 0u64..50, gap in 2u64..200, theta in 0.001f64..0.5) {
        let b = a + gap;
        let mut prev = 1.0f64;
        for x in (a + 1)..=b {
            let p = hitting_bound(a, x, b, theta).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(p <= prev + 1e-12);
            prev = p;
        }
        prop_assert_eq!(hitting_bound(a, b, b, theta).unwrap(), 0.0);
    }

    #[test]
    fn loss_pmf_sums_to_one(lambda in 0.05f64..5.0) {
        let partial: f64 = (0..=200).map(|j| loss_pmf(lambda, j)).sum();
        prop_assert!(partial >= 1.0 - (1.0 / (1.0 + lambda)).powi(201) - 1e-12);
        prop_assert!(partial <= 1.0 + 1e-12);
    }

    #[test]
    fn dual_path_partial_sums(i in 0u32..6, lambda in 0.01f64..0.5, d in 0.5f64..20.0) {
        let mut prev = 0.0;
        for m in 0..40 {
            let b = dual_path_bound(i, lambda, d, m);
            prop_assert!(b.partial_sum >= prev);
            if b.converges {
                prop_assert!(b.partial_sum <= b.closed * (1.0 + 1e-12));
            }
            prev = b.partial_sum;
        }
    }

    #[test]
    fn evaluators_are_pure(n in 10u64..100_000, lambda in 0.01f64..1.0) {
        let args: BTreeMap<String, String> = [
            ("n", n.to_string()),
            ("lambda", lambda.to_string()),
            ("eps", "0.5".into()),
            ("eta", "0.5".into()),
            ("c0", "10".into()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let r1 = eval("survival_bracket", &args).unwrap();
        let r2 = eval("survival_bracket", &args).unwrap();
        prop_assert_eq!(r1.value.to_bits(), r2.value.to_bits());
        prop_assert_eq!(r1, r2);
    }
}
