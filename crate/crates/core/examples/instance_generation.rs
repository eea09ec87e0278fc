// Generate one map per scene family and sample agents on it.

use std::sync::Arc;

use difflns::grid::default_horizon;
use difflns::instance_gen::{density_feature, generate_map, sample_instance, SceneFamily, SceneSpec};

pub fn run_example() -> difflns::Result<()> {
    for (family, side) in [
        (SceneFamily::Random, 16),
        (SceneFamily::Maze, 15),
        (SceneFamily::Room, 17),
        (SceneFamily::Warehouse, 20),
    ] {
        let spec = SceneSpec::new(family, side, side, 0.3).with_seed(7);
        let map = Arc::new(generate_map(&spec)?);
        assert!(map.is_connected());
        let horizon = default_horizon(&map);
        let instance = sample_instance(map.clone(), 10, horizon, 11)?;
        println!(
            "{:<9} density {:.2} agents {} horizon {} agent density {:.3}",
            family.name(),
            map.obstacle_density(),
            instance.num_agents(),
            horizon,
            density_feature(&instance)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> difflns::Result<()> {
    run_example()
}
