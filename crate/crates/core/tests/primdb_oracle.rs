//! Database answers against forward joint search on the bare subgrid.

use mrpp_core::primdb::{PrimitiveDb, SubgridShape, SubgridSpec};
use mrpp_core::{GridMap, Path, Plan, Vertex};
use mrpp_testkit::{check_plan, optimal_makespan};
use proptest::prelude::*;
use proptest::sample::subsequence;

fn db() -> &'static PrimitiveDb {
    static DB: std::sync::OnceLock<PrimitiveDb> = std::sync::OnceLock::new();
    DB.get_or_init(PrimitiveDb::lazy)
}

fn case() -> impl Strategy<Value = (SubgridShape, Vec<u8>, Vec<u8>)> {
    prop_oneof![Just(SubgridShape::Wide), Just(SubgridShape::Tall), Just(SubgridShape::Square)]
        .prop_flat_map(|shape| {
            let cells = (shape.width() * shape.height()) as usize;
            // Large 3x3 subsets are covered by the acceptance run.
            let max_k = if cells == 9 { 6 } else { cells };
            (Just(shape), 1..=max_k)
        })
        .prop_flat_map(|(shape, k)| {
            let all: Vec<u8> = (0..(shape.width() * shape.height()) as u8).collect();
            (
                Just(shape),
                subsequence(all.clone(), k).prop_shuffle(),
                subsequence(all, k).prop_shuffle(),
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn stored_motions_are_optimal_and_legal((shape, s, g) in case()) {
        let spec = SubgridSpec { anchor: Vertex::new(2, 3), shape };
        let host = |c: &u8| spec.host_vertex(*c);
        let starts: Vec<Vertex> = s.iter().map(host).collect();
        let goals: Vec<Vertex> = g.iter().map(host).collect();
        // The oracle sees only the subgrid's cells.
        let blocked: Vec<bool> = (1..=6u16)
            .flat_map(|j| (1..=6u16).map(move |i| Vertex::new(i, j)))
            .map(|v| !spec.contains(v))
            .collect();
        let local = GridMap::from_mask("sub", 6, 6, blocked).unwrap();
        let expected = optimal_makespan(&local, &starts, &goals);
        let motion = db().query(&spec, &starts, &goals);
        prop_assert_eq!(motion.as_ref().map(Vec::len), expected);
        if let Some(steps) = motion {
            let paths = (0..starts.len())
                .map(|r| Path::new(std::iter::once(starts[r]).chain(steps.iter().map(|cfg| cfg[r])).collect()))
                .collect();
            prop_assert!(check_plan(&local, &starts, &goals, &Plan::new(paths)).is_ok());
        }
    }
}
