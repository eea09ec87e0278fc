// Noise schedule, forward corruption and reverse sampling of action drafts.

use std::sync::Arc;

use difflns::d3pm::{forward_marginal, forward_sample, posterior, sample, ActionTensor, DiffusionSchedule};
use difflns::denoiser::HeuristicPredictor;
use difflns::grid::{Cell, GridMap, Instance};

pub fn run_example() -> difflns::Result<()> {
    let schedule = DiffusionSchedule::cosine(100)?;
    for k in [1, 25, 50, 100] {
        println!("k={k:>3} alpha_bar={:.4} q(x_k | stay)={:.3?}", schedule.alpha_bar(k), forward_marginal(0, k, &schedule)?);
    }
    println!("posterior q(x_9 | x_10 = up, x_0 = stay) = {:.3?}", posterior(1, 0, 10, &schedule)?);

    let clean = ActionTensor::one_hot(&[vec![4, 4, 4, 0]])?;
    let noisy = forward_sample(&clean, 60, &schedule, 1)?;
    println!("corrupted draft at k=60: {:?}", noisy.argmax_indices());

    let map = Arc::new(GridMap::empty(4, 4)?);
    let instance = Instance::new(map, vec![Cell::new(0, 0), Cell::new(3, 3)], vec![Cell::new(3, 3), Cell::new(0, 0)], 8)?;
    let draft = sample(&HeuristicPredictor::default(), &instance, &DiffusionSchedule::cosine(20)?, 42)?;
    println!("sampled draft actions: {:?}", draft.argmax_actions());
    assert_eq!(draft, sample(&HeuristicPredictor::default(), &instance, &DiffusionSchedule::cosine(20)?, 42)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> difflns::Result<()> {
    run_example()
}
