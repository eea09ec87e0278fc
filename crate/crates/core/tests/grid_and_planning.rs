//! Conflict detection, file formats and single-agent planning checked
//! against brute-force references.

mod common;

use std::sync::Arc;

use common::{brute_conflicts, brute_pairs, path_collisions, random_map, random_walk, space_time_optimum};
use difflns::grid::{
    detect_conflicts, format_scenario, parse_scenario, path_cost, sum_of_costs, Cell, GridMap, Plan,
};
use difflns::single_agent::{bfs_distance_map, sipps, SafeIntervalTable};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn arb_plan() -> impl Strategy<Value = (GridMap, Vec<Vec<Cell>>)> {
    (2usize..5, 2usize..5, 1usize..5, 0usize..8, any::<u64>()).prop_map(|(h, w, n, len, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = random_map(h, w, 0.2, &mut rng);
        let paths = (0..n).map(|_| random_walk(&map, rng.random_range(0..=len), &mut rng)).collect();
        (map, paths)
    })
}

proptest! {
    #[test]
    fn conflicts_match_brute_force((_map, paths) in arb_plan()) {
        let report = detect_conflicts(&Plan::new(paths.clone()));
        let (vertex, edge) = brute_conflicts(&paths);
        let got_v: std::collections::BTreeSet<_> =
            report.vertex_conflicts.iter().map(|v| (v.a, v.b, v.timestep)).collect();
        let got_e: std::collections::BTreeSet<_> =
            report.edge_conflicts.iter().map(|e| (e.a, e.b, e.timestep)).collect();
        prop_assert_eq!(got_v, vertex);
        prop_assert_eq!(got_e, edge);
        prop_assert_eq!(report.colliding_pairs, brute_pairs(&paths));
    }

    #[test]
    fn map_text_round_trips(h in 1usize..8, w in 1usize..8, seed in any::<u64>()) {
        let map = random_map(h, w, 0.3, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(GridMap::parse(&map.to_text()).unwrap(), map);
    }

    #[test]
    fn scenario_and_plan_round_trip((map, paths) in arb_plan()) {
        let starts: Vec<Cell> = paths.iter().map(|p| p[0]).collect();
        let goals: Vec<Cell> = paths.iter().map(|p| *p.last().unwrap()).collect();
        let (s, g) = parse_scenario(&format_scenario(&starts, &goals)).unwrap();
        prop_assert_eq!((s, g), (starts, goals.clone()));
        let plan = Plan::new(paths);
        prop_assert_eq!(Plan::parse(&plan.to_text()).unwrap(), plan.clone());
        // cost is the index after the last cell off the goal
        for (i, p) in plan.paths.iter().enumerate() {
            let want = (0..p.len()).rev().find(|&t| p[t] != goals[i]).map_or(0, |t| t + 1);
            prop_assert_eq!(path_cost(p, goals[i], i).unwrap(), want);
        }
        let _ = map;
        prop_assert!(sum_of_costs(&plan, &goals).is_ok());
    }

    #[test]
    fn bfs_neighbours_differ_by_at_most_one(h in 1usize..7, w in 1usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = random_map(h, w, 0.25, &mut rng);
        let goal = map.free_cells().next().unwrap();
        let field = bfs_distance_map(&map, goal).unwrap();
        for c in map.free_cells() {
            for n in map.neighbors(c) {
                match (field.get(c), field.get(n)) {
                    (Some(a), Some(b)) => prop_assert!(a.abs_diff(b) <= 1),
                    (a, b) => prop_assert_eq!(a.is_some(), b.is_some()),
                }
            }
        }
    }
}

/// Random desk-scale SIPPS case: map at most 5x5, at most two moving agents
/// with paths of at most 10 steps.
pub fn sipps_case(seed: u64) -> (GridMap, Cell, Cell, Vec<Vec<Cell>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let (h, w) = (rng.random_range(2..=5), rng.random_range(2..=5));
        let map = random_map(h, w, 0.2, &mut rng);
        let free: Vec<Cell> = map.free_cells().collect();
        let start = free[rng.random_range(0..free.len())];
        let goal = free[rng.random_range(0..free.len())];
        let labels = map.component_labels();
        if labels[map.index(start)] != labels[map.index(goal)] {
            continue;
        }
        let others = (0..rng.random_range(1..=2))
            .map(|_| random_walk(&map, rng.random_range(0..=9), &mut rng))
            .collect();
        return (map, start, goal, others);
    }
}

#[test]
fn sipps_matches_space_time_optimum() {
    let mut with_collisions = 0;
    let mut with_waits = 0;
    for seed in 0..200 {
        let (map, start, goal, others) = sipps_case(seed);
        let table = SafeIntervalTable::from_paths(&map, others.iter().enumerate().map(|(i, p)| (i, p.as_slice())));
        let found = sipps(&map, start, goal, &table, None).unwrap();
        let max_time = 10 + map.free_count() + 4;
        let (best, earliest) = space_time_optimum(&map, start, goal, &others, max_time).unwrap();
        assert_eq!(found.soft_collisions, best, "seed {seed}");
        assert_eq!(path_collisions(&found.path, &others), best, "seed {seed}");
        assert_eq!(found.path.len() - 1, earliest, "seed {seed}");
        assert_eq!(found.path[0], start);
        assert_eq!(*found.path.last().unwrap(), goal);
        with_collisions += usize::from(best > 0);
        with_waits += usize::from(found.path.windows(2).any(|w| w[0] == w[1]));
    }
    // the sample must exercise unavoidable collisions and waiting
    assert!(with_collisions >= 10 && with_waits >= 10, "{with_collisions} {with_waits}");
}

#[test]
fn sipps_without_others_is_bfs() {
    let map = Arc::new(GridMap::from_rows(&[".....", ".@@@.", ".....", "@@.@@", "....."]).unwrap());
    let table = SafeIntervalTable::new(&map);
    for goal in map.free_cells() {
        let field = bfs_distance_map(&map, goal).unwrap();
        let start = Cell::new(0, 0);
        let found = sipps(&map, start, goal, &table, None).unwrap();
        assert_eq!(Some(found.path.len() - 1), field.get(start));
        assert_eq!(found.soft_collisions, 0);
    }
}
