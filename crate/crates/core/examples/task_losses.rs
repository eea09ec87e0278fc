// Differentiable goal, conflict and validity losses on soft action rows.

use std::sync::Arc;

use difflns::d3pm::ActionTensor;
use difflns::grid::{Cell, GridMap, Instance};
use difflns::task_losses::{task_loss, task_loss_scale, vertex_conflict_loss, LossWeights};

pub fn run_example() -> difflns::Result<()> {
    let map = Arc::new(GridMap::empty(1, 3)?);
    let instance = Instance::new(map, vec![Cell::new(0, 0), Cell::new(0, 2)], vec![Cell::new(0, 2), Cell::new(0, 0)], 2)?;

    // both agents head straight for each other: right/right and left/left
    let head_on = ActionTensor::one_hot(&[vec![4, 4], vec![3, 3]])?;
    let loss = task_loss(&head_on, &instance, &LossWeights::default())?;
    println!("head-on plan: {loss:?}");
    assert!(loss.vertex > 0.0 && loss.goal == 0.0);

    let vertex = vertex_conflict_loss(&head_on, &instance, 1.0);
    println!("d vertex / d x[agent 0, t 0] = {:.3?}", &vertex.grad[..5]);
    for epoch in [0.0, 75.0, 150.0, 300.0] {
        println!("epoch {epoch:>5}: task-loss scale {:.2}", task_loss_scale(epoch));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> difflns::Result<()> {
    run_example()
}
