// Solve one instance with the draft-then-repair pipeline and both baselines.

use std::sync::Arc;

use difflns::denoiser::HeuristicPredictor;
use difflns::grid::{default_horizon, is_feasible};
use difflns::instance_gen::{generate_map, sample_instance, SceneSpec};
use difflns::pipeline::{difflns_solve, lns2_solve, pp_multistart_solve, PipelineConfig};

pub fn run_example() -> difflns::Result<()> {
    let map = Arc::new(generate_map(&SceneSpec::small_random().with_seed(1))?);
    let instance = sample_instance(map.clone(), 20, default_horizon(&map), 1)?;
    let cfg = PipelineConfig { time_budget_s: 20.0, ..PipelineConfig::default() }.with_seed(5);

    let results = [
        ("difflns", difflns_solve(&instance, &HeuristicPredictor::default(), &cfg)?),
        ("pp-multistart", pp_multistart_solve(&instance, &cfg)?),
        ("lns2", lns2_solve(&instance, &cfg)?),
    ];
    for (name, result) in &results {
        println!(
            "{name:<14} {:?} soc {:?} rounds {} candidates {} in {:.3} s",
            result.status, result.soc, result.rounds, result.candidates, result.runtime_s
        );
        if let Some(plan) = &result.plan {
            assert!(is_feasible(&instance, plan));
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> difflns::Result<()> {
    run_example()
}
