// Run the denoiser network once and save its weights.

use difflns::d3pm::ActionTensor;
use difflns::denoiser::{denoiser_forward, DenoiserParams, Dims};
use difflns::grid::default_horizon;
use difflns::instance_gen::{generate_map, sample_instance, SceneSpec};

pub fn run_example() -> difflns::Result<()> {
    let map = std::sync::Arc::new(generate_map(&SceneSpec::small_random().with_seed(2))?);
    let instance = sample_instance(map.clone(), 6, default_horizon(&map), 4)?;
    let params = DenoiserParams::init(1, Dims::small())?;
    let noisy = ActionTensor::uniform(instance.num_agents(), instance.horizon());

    let probs = denoiser_forward(&noisy, &instance, 50, 100, &params)?;
    probs.check_distribution()?;
    println!("agent 0, t=0 clean-action probabilities {:.3?}", probs.row(0, 0));

    let path = std::env::temp_dir().join("difflns-example-weights.bin");
    params.save(&path)?;
    let reloaded = DenoiserParams::load(&path)?;
    assert_eq!(denoiser_forward(&noisy, &instance, 50, 100, &reloaded)?, probs);
    println!("weights round-trip through {}", path.display());
    std::fs::remove_file(path)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> difflns::Result<()> {
    run_example()
}
