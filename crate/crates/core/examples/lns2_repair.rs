// Repair a colliding plan with large neighborhood search.

use std::sync::Arc;
use std::time::Duration;

use difflns::grid::{colliding_pairs, default_horizon, is_feasible, Plan};
use difflns::instance_gen::{generate_map, sample_instance, SceneSpec};
use difflns::lns2::{lns2_repair, RepairConfig};

pub fn run_example() -> difflns::Result<()> {
    let map = Arc::new(generate_map(&SceneSpec::small_random().with_seed(3))?);
    let instance = sample_instance(map.clone(), 20, default_horizon(&map), 5)?;

    // each agent follows its own shortest path and ignores everyone else
    let naive = Plan::new(
        instance
            .starts()
            .iter()
            .zip(instance.goals())
            .map(|(&s, &g)| {
                let field = difflns::single_agent::bfs_distance_map(&map, g).expect("goal in map");
                let mut path = vec![s];
                while *path.last().unwrap() != g {
                    let here = *path.last().unwrap();
                    let next = map.neighbors(here).min_by_key(|&c| field.get(c).unwrap_or(usize::MAX)).unwrap();
                    path.push(next);
                }
                path
            })
            .collect(),
    );
    println!("shortest-path plan: {} colliding pairs", colliding_pairs(&naive));

    let cfg = RepairConfig::default().with_seed(9).with_budget(Duration::from_secs(10));
    let (repaired, stats) = lns2_repair(naive, &instance, &cfg)?;
    println!(
        "after {} iterations: pairs {:?}, success {}",
        stats.iterations, stats.colliding_pairs, stats.success
    );
    assert!(stats.colliding_pairs.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(stats.success, is_feasible(&instance, &repaired));
    Ok(())
}

#[allow(dead_code)]
fn main() -> difflns::Result<()> {
    run_example()
}
