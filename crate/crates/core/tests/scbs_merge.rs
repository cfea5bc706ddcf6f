//! Sparsification and plan-merging properties.

use std::sync::Arc;

use mrpp_core::budget::Budget;
use mrpp_core::ecbs::{solve_ecbs, EcbsConfig};
use mrpp_core::scbs::{local_density, mcp_merge, solve_scbs, sparsify_config, synchronized_concatenation, DensityParams, ScbsConfig};
use mrpp_core::scenario::{gen_corner_rearrangement, gen_uniform};
use mrpp_core::{metrics, validate_plan, DistanceOracle, GridMap};
use mrpp_testkit::{check_plan, random_three_phase, same_route};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn merge_keeps_routes_and_dominates(seed in any::<u64>()) {
        let Some((inst, phases)) = random_three_phase(seed) else { return Ok(()) };
        let merged = mcp_merge(&phases).unwrap();
        let sync = synchronized_concatenation(&phases).unwrap();
        prop_assert!(check_plan(&inst.map, &inst.starts, &inst.goals, &merged).is_ok());
        prop_assert!(check_plan(&inst.map, &inst.starts, &inst.goals, &sync).is_ok());
        prop_assert!(metrics(&merged).soc <= metrics(&sync).soc);
        for r in 0..inst.num_robots() {
            prop_assert!(same_route(&merged.paths[r], &sync.paths[r]));
        }
        // Every step moves at least one robot.
        let total: usize = phases.iter().map(|p| p.paths.iter().map(|q| q.len()).sum::<usize>()).sum();
        prop_assert!(metrics(&merged).makespan <= total);
    }

    #[test]
    fn sparsified_vertices_are_free_distinct_and_sparse(seed in 0u64..1000, k in 4usize..=36, window in prop_oneof![Just(3usize), Just(5)]) {
        let map = Arc::new(GridMap::empty(20, 20));
        let inst = gen_corner_rearrangement(map.clone(), k, seed).unwrap();
        let oracle = DistanceOracle::new(map.clone());
        let params = DensityParams::new(window, 0.5).unwrap();
        let out = sparsify_config(&oracle, &inst.starts, &inst.goals, &params, None);
        let mut sorted = out.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), k);
        for &v in &out {
            prop_assert!(map.is_free(v));
            prop_assert!(local_density(&map, &out, v, &params) <= 0.5 + 1e-12);
        }
    }
}

#[test]
fn no_sparsification_reduces_to_ecbs() {
    let map = Arc::new(GridMap::empty(10, 10));
    for seed in 0..5 {
        let inst = gen_uniform(map.clone(), 12, seed).unwrap();
        let config = ScbsConfig {
            density: DensityParams::new(1, 1.0).unwrap(),
            ..Default::default()
        };
        let sol = solve_scbs(&inst, &config, &Budget::unlimited()).unwrap();
        assert_eq!(sol.sparsified.start_intermediate, inst.starts);
        assert_eq!(sol.sparsified.goal_intermediate, inst.goals);
        let ecbs = solve_ecbs(&inst, EcbsConfig::new(1.5), &Budget::unlimited()).unwrap();
        assert!(validate_plan(&map, &inst, &sol.plan).is_empty());
        assert!(metrics(&sol.plan).soc <= metrics(&ecbs.plan).soc);
    }
}

#[test]
fn corner_rearrangement_beats_plain_search() {
    let map = Arc::new(GridMap::empty(20, 20));
    let inst = gen_corner_rearrangement(map.clone(), 49, 7).unwrap();
    let sol = solve_scbs(&inst, &ScbsConfig::default(), &Budget::with_timeout(std::time::Duration::from_secs(30))).unwrap();
    assert!(validate_plan(&map, &inst, &sol.plan).is_empty());
}

#[test]
fn shuffled_order_is_deterministic() {
    let map = Arc::new(GridMap::empty(20, 20));
    let inst = gen_corner_rearrangement(map.clone(), 25, 3).unwrap();
    let oracle = DistanceOracle::new(map);
    let p = DensityParams::default();
    let a = sparsify_config(&oracle, &inst.starts, &inst.goals, &p, Some(9));
    let b = sparsify_config(&oracle, &inst.starts, &inst.goals, &p, Some(9));
    assert_eq!(a, b);
}
