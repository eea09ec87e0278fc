//! Training-free clean-state predictor built from BFS distance fields.

use super::ops::softmax_in_place;
use crate::d3pm::{argmax, ActionTensor, DiffusionSchedule, Predictor};
use crate::error::Result;
use crate::grid::{apply_action, Action, Instance, MoveOutcome, NUM_ACTIONS};
use crate::single_agent::bfs_distance_map;

/// Rolls each agent out greedily from its start. At each step the row is a
/// softmax over `-beta * dist(next) + ln(1 + x_k[a])` with invalid moves
/// masked; the agent then follows the row's argmax. Agents standing on their
/// goal emit one-hot `stay`. The noisy-tensor term only breaks ties between
/// equally short moves, which gives drafts some diversity across seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeuristicPredictor {
    pub beta: f64,
}

impl Default for HeuristicPredictor {
    fn default() -> Self {
        Self { beta: 4.0 }
    }
}

impl Predictor for HeuristicPredictor {
    fn predict(
        &self,
        instance: &Instance,
        xk: &ActionTensor,
        _step: usize,
        _schedule: &DiffusionSchedule,
    ) -> Result<ActionTensor> {
        let map = instance.map();
        let horizon = xk.horizon();
        let mut out = ActionTensor::zeros(instance.num_agents(), horizon);
        for agent in 0..instance.num_agents() {
            let goal = instance.goals()[agent];
            let field = bfs_distance_map(map, goal)?;
            let mut pos = instance.starts()[agent];
            if !field.is_reachable(pos) {
                return Err(crate::Error::Unreachable { from: pos, to: goal });
            }
            for t in 0..horizon {
                let row = out.row_mut(agent, t);
                if pos == goal {
                    row[Action::Stay.index()] = 1.0;
                    continue;
                }
                let noisy = xk.row(agent, t);
                let mut logits = [f64::NEG_INFINITY; NUM_ACTIONS];
                for action in Action::ALL {
                    if let MoveOutcome::Moved(next) = apply_action(pos, action, map) {
                        let d = field.get(next).expect("neighbour of a reachable cell") as f64;
                        logits[action.index()] = -self.beta * d + noisy[action.index()].ln_1p();
                    }
                }
                softmax_in_place(&mut logits);
                row.copy_from_slice(&logits);
                let best = Action::from_index(argmax(&logits)).expect("valid index");
                if let MoveOutcome::Moved(next) = apply_action(pos, best, map) {
                    pos = next;
                }
            }
        }
        Ok(out)
    }
}
