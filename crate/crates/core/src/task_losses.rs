//! Task-shaping losses on predicted clean-action distributions: goal
//! progress, soft vertex and edge conflicts, and invalid-action mass. Each
//! loss also returns its gradient with respect to the tensor entries.

use serde::{Deserialize, Serialize};

use crate::d3pm::{argmax, ActionTensor};
use crate::error::{Error, Result};
use crate::grid::{apply_action, Action, Cell, Instance, MoveOutcome, NUM_ACTIONS};
use crate::single_agent::{bfs_distance_map, DistanceField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub goal: f64,
    pub vertex: f64,
    pub edge: f64,
    pub valid: f64,
    pub kl: f64,
    /// Manhattan radius (cells) for soft vertex conflicts.
    pub vertex_radius: f64,
    /// Manhattan radius (cells) for soft edge conflicts.
    pub edge_radius: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            goal: 0.4,
            vertex: 0.2,
            edge: 0.2,
            valid: 0.4,
            kl: 0.02,
            vertex_radius: 1.0,
            edge_radius: 1.0,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            goal: 0.0,
            vertex: 0.0,
            edge: 0.0,
            valid: 0.0,
            kl: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.goal,
            self.vertex,
            self.edge,
            self.valid,
            self.kl,
            self.vertex_radius,
            self.edge_radius,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("loss weights and radii must be non-negative".into()));
        }
        Ok(())
    }
}

/// A loss value with its gradient over the `N x T x C` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl LossGrad {
    fn zero(len: usize) -> Self {
        Self {
            value: 0.0,
            grad: vec![0.0; len],
        }
    }

    /// Derivative along `e_action - row` for one row, i.e. the direction of
    /// bumping one entry and re-normalizing.
    pub fn directional(&self, probs: &ActionTensor, agent: usize, t: usize, action: usize) -> f64 {
        let o = (agent * probs.horizon() + t) * NUM_ACTIONS;
        let row = probs.row(agent, t);
        (0..NUM_ACTIONS)
            .map(|a| self.grad[o + a] * (if a == action { 1.0 } else { 0.0 } - row[a]))
            .sum()
    }
}

fn displacements() -> [(f64, f64); NUM_ACTIONS] {
    let mut out = [(0.0, 0.0); NUM_ACTIONS];
    for a in Action::ALL {
        let (dr, dc) = a.displacement();
        out[a.index()] = (dr as f64, dc as f64);
    }
    out
}

/// Expected positions in grid units after each action: entry
/// `agent * T + t` is the start plus the summed expected displacement of
/// actions `0..=t`.
pub fn expected_positions(probs: &ActionTensor, instance: &Instance) -> Vec<[f64; 2]> {
    let moves = displacements();
    let horizon = probs.horizon();
    let mut out = Vec::with_capacity(probs.agents() * horizon);
    for agent in 0..probs.agents() {
        let s = instance.starts()[agent];
        let mut pos = [s.row as f64, s.col as f64];
        for t in 0..horizon {
            for (p, (dr, dc)) in probs.row(agent, t).iter().zip(moves) {
                pos[0] += p * dr;
                pos[1] += p * dc;
            }
            out.push(pos);
        }
    }
    out
}

/// Chains per-position gradients back to tensor entries: position `t`
/// depends on every action at or before `t`.
fn positions_to_entries(pos_grad: &[[f64; 2]], agents: usize, horizon: usize) -> Vec<f64> {
    let moves = displacements();
    let mut grad = vec![0.0; agents * horizon * NUM_ACTIONS];
    for agent in 0..agents {
        let mut suffix = [0.0, 0.0];
        for t in (0..horizon).rev() {
            let g = pos_grad[agent * horizon + t];
            suffix[0] += g[0];
            suffix[1] += g[1];
            let o = (agent * horizon + t) * NUM_ACTIONS;
            for (a, (dr, dc)) in moves.iter().enumerate() {
                grad[o + a] = suffix[0] * dr + suffix[1] * dc;
            }
        }
    }
    grad
}

/// Nearest cell to a soft position; if that cell is blocked or cannot reach
/// the goal, the closest reachable cell (by Manhattan distance, then row,
/// then column) is used instead.
fn snap(pos: [f64; 2], field: &DistanceField, height: usize, width: usize) -> Cell {
    let clamp = |v: f64, n: usize| v.round().clamp(0.0, (n - 1) as f64) as usize;
    let near = Cell::new(clamp(pos[0], height), clamp(pos[1], width));
    if field.is_reachable(near) {
        return near;
    }
    let mut best: Option<(usize, Cell)> = None;
    for row in 0..height {
        for col in 0..width {
            let c = Cell::new(row, col);
            if field.is_reachable(c) {
                let d = c.manhattan(near);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, c));
                }
            }
        }
    }
    best.map_or(near, |(_, c)| c)
}

pub fn goal_distance_fields(instance: &Instance) -> Result<Vec<DistanceField>> {
    instance
        .goals()
        .iter()
        .map(|&g| bfs_distance_map(instance.map(), g))
        .collect()
}

/// Mean hinge on steps that fail to cut the normalized BFS distance by one
/// cell. Piecewise constant in the probabilities, so the gradient is zero.
pub fn goal_progress_loss(probs: &ActionTensor, instance: &Instance, fields: &[DistanceField]) -> LossGrad {
    let (n, horizon) = (probs.agents(), probs.horizon());
    let mut out = LossGrad::zero(probs.data().len());
    if n == 0 || horizon < 2 {
        return out;
    }
    let map = instance.map();
    let (h, w) = (map.height(), map.width());
    let scale = h.max(w) as f64;
    let positions = expected_positions(probs, instance);
    let mut total = 0.0;
    for agent in 0..n {
        let field = &fields[agent];
        let dist: Vec<f64> = (0..horizon)
            .map(|t| {
                let c = snap(positions[agent * horizon + t], field, h, w);
                field.get(c).unwrap_or(0) as f64 / scale
            })
            .collect();
        for t in 0..horizon - 1 {
            total += (dist[t + 1] - (dist[t] - 1.0 / scale).max(0.0)).max(0.0);
        }
    }
    out.value = total / (n * (horizon - 1)) as f64;
    out
}

fn l1(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Accumulates `scale * d|a - b|_1 / da` into `ga` and the negation into `gb`.
fn l1_grad(pos_grad: &mut [[f64; 2]], a: usize, b: usize, pa: [f64; 2], pb: [f64; 2], scale: f64) {
    for k in 0..2 {
        let s = sign(pa[k] - pb[k]) * scale;
        pos_grad[a][k] += s;
        pos_grad[b][k] -= s;
    }
}

/// Mean of `exp(-|p_i - p_j|_1)` over ordered agent pairs and timesteps
/// whose expected positions lie within `radius`.
pub fn vertex_conflict_loss(probs: &ActionTensor, instance: &Instance, radius: f64) -> LossGrad {
    let (n, horizon) = (probs.agents(), probs.horizon());
    let mut out = LossGrad::zero(probs.data().len());
    if n < 2 || horizon == 0 {
        return out;
    }
    let pos = expected_positions(probs, instance);
    let mut terms = Vec::new();
    for t in 0..horizon {
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (i * horizon + t, j * horizon + t);
                let d = l1(pos[a], pos[b]);
                if i != j && d <= radius {
                    terms.push((a, b, d));
                }
            }
        }
    }
    if terms.is_empty() {
        return out;
    }
    let count = terms.len() as f64;
    let mut pos_grad = vec![[0.0; 2]; pos.len()];
    for &(a, b, d) in &terms {
        let e = (-d).exp();
        out.value += e;
        l1_grad(&mut pos_grad, a, b, pos[a], pos[b], -e / count);
    }
    out.value /= count;
    out.grad = positions_to_entries(&pos_grad, n, horizon);
    out
}

/// Mean of `exp(-(d_fwd + d_back) / 2)` over ordered pairs and consecutive
/// timesteps where both cross distances lie within `radius`.
pub fn edge_conflict_loss(probs: &ActionTensor, instance: &Instance, radius: f64) -> LossGrad {
    let (n, horizon) = (probs.agents(), probs.horizon());
    let mut out = LossGrad::zero(probs.data().len());
    if n < 2 || horizon < 2 {
        return out;
    }
    let pos = expected_positions(probs, instance);
    let mut terms = Vec::new();
    for t in 0..horizon - 1 {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (i0, i1, j0, j1) = (i * horizon + t, i * horizon + t + 1, j * horizon + t, j * horizon + t + 1);
                let (fwd, back) = (l1(pos[i0], pos[j1]), l1(pos[i1], pos[j0]));
                if fwd <= radius && back <= radius {
                    terms.push((i0, i1, j0, j1, fwd + back));
                }
            }
        }
    }
    if terms.is_empty() {
        return out;
    }
    let count = terms.len() as f64;
    let mut pos_grad = vec![[0.0; 2]; pos.len()];
    for &(i0, i1, j0, j1, sum) in &terms {
        let e = (-sum / 2.0).exp();
        out.value += e;
        let scale = -0.5 * e / count;
        l1_grad(&mut pos_grad, i0, j1, pos[i0], pos[j1], scale);
        l1_grad(&mut pos_grad, i1, j0, pos[i1], pos[j0], scale);
    }
    out.value /= count;
    out.grad = positions_to_entries(&pos_grad, n, horizon);
    out
}

/// Cells visited when following each row's argmax (invalid moves stay).
/// Entry `agent * T + t` is the position before action `t`.
pub fn argmax_rollout(probs: &ActionTensor, instance: &Instance) -> Vec<Cell> {
    let horizon = probs.horizon();
    let mut out = Vec::with_capacity(probs.agents() * horizon);
    for agent in 0..probs.agents() {
        let mut pos = instance.starts()[agent];
        for t in 0..horizon {
            out.push(pos);
            let action = Action::from_index(argmax(probs.row(agent, t))).expect("index below C");
            if let MoveOutcome::Moved(next) = apply_action(pos, action, instance.map()) {
                pos = next;
            }
        }
    }
    out
}

/// Mean probability mass on actions that leave the map or enter an obstacle
/// from the argmax-rollout position.
pub fn validity_loss(probs: &ActionTensor, instance: &Instance) -> LossGrad {
    let (n, horizon) = (probs.agents(), probs.horizon());
    let mut out = LossGrad::zero(probs.data().len());
    if n == 0 || horizon == 0 {
        return out;
    }
    let rows = (n * horizon) as f64;
    let positions = argmax_rollout(probs, instance);
    for (row, &pos) in positions.iter().enumerate() {
        for a in Action::ALL {
            if apply_action(pos, a, instance.map()) == MoveOutcome::Invalid {
                out.value += probs.data()[row * NUM_ACTIONS + a.index()];
                out.grad[row * NUM_ACTIONS + a.index()] = 1.0 / rows;
            }
        }
    }
    out.value /= rows;
    out
}

/// The four task terms and their weighted sum.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskLoss {
    pub goal: f64,
    pub vertex: f64,
    pub edge: f64,
    pub valid: f64,
    pub total: f64,
}

pub fn task_loss(probs: &ActionTensor, instance: &Instance, weights: &LossWeights) -> Result<TaskLoss> {
    weights.validate()?;
    if probs.agents() != instance.num_agents() {
        return Err(Error::Shape("tensor and instance differ in agent count".into()));
    }
    let fields = goal_distance_fields(instance)?;
    let goal = goal_progress_loss(probs, instance, &fields).value;
    let vertex = vertex_conflict_loss(probs, instance, weights.vertex_radius).value;
    let edge = edge_conflict_loss(probs, instance, weights.edge_radius).value;
    let valid = validity_loss(probs, instance).value;
    let total = weights.goal * goal + weights.vertex * vertex + weights.edge * edge + weights.valid * valid;
    Ok(TaskLoss {
        goal,
        vertex,
        edge,
        valid,
        total,
    })
}

/// Warm-up factor for the task loss at training epoch `epoch`.
pub fn task_loss_scale(epoch: f64) -> f64 {
    0.2 + 0.8 * (epoch / 150.0).clamp(0.0, 1.0)
}
