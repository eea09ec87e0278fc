//! Instance conditioning: normalized coordinates, rasters, global and
//! per-agent condition vectors, inferred trajectories and action entropy.

use super::ops::{mlp, softmax};
use super::params::DenoiserParams;
use crate::d3pm::ActionTensor;
use crate::error::Result;
use crate::grid::{Action, Cell, GridMap, Instance, NUM_ACTIONS};
use crate::instance_gen::density_feature;

/// Per-axis factor converting a grid step to normalized units:
/// `[2/(H-1), 2/(W-1)]`, with 0 for a dimension of size 1.
pub fn coordinate_scale(height: usize, width: usize) -> [f64; 2] {
    let f = |n: usize| if n > 1 { 2.0 / (n - 1) as f64 } else { 0.0 };
    [f(height), f(width)]
}

/// `[row, col]` mapped into `[-1, 1]^2`.
pub fn normalize_cell(cell: Cell, height: usize, width: usize) -> [f64; 2] {
    let [sr, sc] = coordinate_scale(height, width);
    let centre = |v: usize, s: f64| if s == 0.0 { 0.0 } else { v as f64 * s - 1.0 };
    [centre(cell.row, sr), centre(cell.col, sc)]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub height: usize,
    pub width: usize,
    pub starts: Vec<[f64; 2]>,
    pub goals: Vec<[f64; 2]>,
    /// `(ln W, ln H)`.
    pub log_size: [f64; 2],
    pub density: f64,
    /// Channels obstacle, free, goal; each `H x W` row-major.
    pub raster: Vec<f64>,
}

impl Condition {
    pub fn from_instance(instance: &Instance) -> Self {
        let map: &GridMap = instance.map();
        let (h, w) = (map.height(), map.width());
        let mut raster = vec![0.0; 3 * h * w];
        for i in 0..h * w {
            let obstacle = map.is_obstacle(map.cell_at(i));
            raster[i] = if obstacle { 1.0 } else { 0.0 };
            raster[h * w + i] = if obstacle { 0.0 } else { 1.0 };
        }
        for g in instance.goals() {
            raster[2 * h * w + map.index(*g)] = 1.0;
        }
        Self {
            height: h,
            width: w,
            starts: instance.starts().iter().map(|&c| normalize_cell(c, h, w)).collect(),
            goals: instance.goals().iter().map(|&c| normalize_cell(c, h, w)).collect(),
            log_size: [(w as f64).ln(), (h as f64).ln()],
            density: density_feature(instance),
            raster,
        }
    }

    pub fn num_agents(&self) -> usize {
        self.starts.len()
    }
}

/// Sinusoidal embedding of the diffusion step.
pub fn sinusoidal_embedding(step: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let angle = step as f64 * freq;
        out[i] = angle.sin();
        out[half + i] = angle.cos();
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedCondition {
    pub global: Vec<f64>,
    /// Per-agent condition vectors.
    pub agents: Vec<Vec<f64>>,
    pub scale_gate: Vec<f64>,
    pub start_embed: Vec<Vec<f64>>,
    pub goal_embed: Vec<Vec<f64>>,
    pub relative_embed: Vec<Vec<f64>>,
}

impl EncodedCondition {
    /// Sum of the start, goal and relative-goal embeddings of `agent`.
    pub fn agent_residual(&self, agent: usize) -> Vec<f64> {
        let mut r = self.start_embed[agent].clone();
        for (x, (g, d)) in r
            .iter_mut()
            .zip(self.goal_embed[agent].iter().zip(&self.relative_embed[agent]))
        {
            *x += g + d;
        }
        r
    }
}

pub fn encode_condition(cond: &Condition, step: usize, params: &DenoiserParams) -> Result<EncodedCondition> {
    let dim = params.dims().hidden;
    let step_embed = params.linear("embed.step")?.apply(&sinusoidal_embedding(step, dim));
    let mut scene = params.linear("embed.size")?.apply(&cond.log_size);
    let density = params.linear("embed.density")?.apply(&[cond.density]);
    scene.iter_mut().zip(&density).for_each(|(a, b)| *a += b);
    let global = mlp(
        &params.linear("global.0")?,
        &params.linear("global.1")?,
        &[step_embed, scene].concat(),
    );
    let scale_gate = softmax(&params.linear("scale_gate")?.apply(&global));

    let (fs, fg, fr) = (
        params.linear("embed.start")?,
        params.linear("embed.goal")?,
        params.linear("embed.relative")?,
    );
    let (agent0, agent1) = (params.linear("agent.0")?, params.linear("agent.1")?);
    let n = cond.num_agents();
    let mut out = EncodedCondition {
        global: global.clone(),
        agents: Vec::with_capacity(n),
        scale_gate,
        start_embed: Vec::with_capacity(n),
        goal_embed: Vec::with_capacity(n),
        relative_embed: Vec::with_capacity(n),
    };
    for i in 0..n {
        let (s, g) = (cond.starts[i], cond.goals[i]);
        let es = fs.apply(&s);
        let eg = fg.apply(&g);
        let er = fr.apply(&[g[0] - s[0], g[1] - s[1]]);
        let joined = [global.as_slice(), &es, &eg, &er].concat();
        out.agents.push(mlp(&agent0, &agent1, &joined));
        out.start_embed.push(es);
        out.goal_embed.push(eg);
        out.relative_embed.push(er);
    }
    Ok(out)
}

/// Soft positions after each action: the start plus the prefix sum of
/// expected displacements, in normalized `[row, col]` units. Entry
/// `agent * T + t` is the position after action `t`.
pub fn inferred_trajectory(xk: &ActionTensor, cond: &Condition) -> Vec<[f64; 2]> {
    let scale = coordinate_scale(cond.height, cond.width);
    let moves: Vec<(f64, f64)> = Action::ALL
        .iter()
        .map(|a| {
            let (dr, dc) = a.displacement();
            (dr as f64, dc as f64)
        })
        .collect();
    let horizon = xk.horizon();
    let mut out = Vec::with_capacity(xk.agents() * horizon);
    for agent in 0..xk.agents() {
        let mut pos = cond.starts[agent];
        for t in 0..horizon {
            let row = xk.row(agent, t);
            let (mut dr, mut dc) = (0.0, 0.0);
            for (p, (mr, mc)) in row.iter().zip(&moves) {
                dr += p * mr;
                dc += p * mc;
            }
            pos = [pos[0] + dr * scale[0], pos[1] + dc * scale[1]];
            out.push(pos);
        }
    }
    out
}

/// Normalized entropy per row, in `[0, 1]`.
pub fn action_entropy(xk: &ActionTensor) -> Vec<f64> {
    let norm = (NUM_ACTIONS as f64).ln();
    xk.data()
        .chunks(NUM_ACTIONS)
        .map(|row| {
            -row.iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * p.ln())
                .sum::<f64>()
                / norm
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::params::Dims;
    use std::sync::Arc;

    fn inst() -> Instance {
        let map = Arc::new(GridMap::from_rows(&["....", ".@..", "....", "...."]).unwrap());
        Instance::new(
            map,
            vec![Cell::new(0, 0), Cell::new(3, 3), Cell::new(2, 0)],
            vec![Cell::new(3, 0), Cell::new(0, 3), Cell::new(2, 2)],
            6,
        )
        .unwrap()
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_cell(Cell::new(0, 0), 5, 3), [-1.0, -1.0]);
        assert_eq!(normalize_cell(Cell::new(4, 2), 5, 3), [1.0, 1.0]);
        assert_eq!(normalize_cell(Cell::new(2, 1), 5, 3), [0.0, 0.0]);
        assert_eq!(normalize_cell(Cell::new(0, 7), 1, 9), [0.0, 0.75]);
    }

    #[test]
    fn entropy_examples() {
        let t = ActionTensor::from_data(
            1,
            3,
            vec![
                1.0, 0.0, 0.0, 0.0, 0.0, //
                0.2, 0.2, 0.2, 0.2, 0.2, //
                0.5, 0.5, 0.0, 0.0, 0.0,
            ],
        )
        .unwrap();
        let e = action_entropy(&t);
        assert_eq!(e[0], 0.0);
        assert!((e[1] - 1.0).abs() < 1e-12);
        assert!((e[2] - 2f64.ln() / 5f64.ln()).abs() < 1e-12);
        assert!((e[2] - 0.4307).abs() < 1e-4);
    }

    #[test]
    fn inferred_trajectory_examples() {
        let inst = inst();
        let cond = Condition::from_instance(&inst);
        let stay = ActionTensor::one_hot(&vec![vec![0; 6]; 3]).unwrap();
        for (i, p) in inferred_trajectory(&stay, &cond).chunks(6).enumerate() {
            assert!(p.iter().all(|q| *q == cond.starts[i]));
        }
        let flat = ActionTensor::uniform(3, 6);
        for (i, p) in inferred_trajectory(&flat, &cond).chunks(6).enumerate() {
            for q in p {
                assert!((q[0] - cond.starts[i][0]).abs() < 1e-12 && (q[1] - cond.starts[i][1]).abs() < 1e-12);
            }
        }

        // deterministic sequence versus a discrete rollout
        let seq = vec![
            vec![2, 2, 4, 4, 1, 3],
            vec![1, 1, 3, 0, 3, 2],
            vec![4, 4, 0, 3, 2, 1],
        ];
        let x = ActionTensor::one_hot(&seq).unwrap();
        let soft = inferred_trajectory(&x, &cond);
        for (i, actions) in seq.iter().enumerate() {
            let mut pos = inst.starts()[i];
            for (t, &a) in actions.iter().enumerate() {
                let action = Action::from_index(a).unwrap();
                let (dr, dc) = action.displacement();
                pos = Cell::new((pos.row as isize + dr) as usize, (pos.col as isize + dc) as usize);
                let want = normalize_cell(pos, 4, 4);
                let got = soft[i * 6 + t];
                assert!((got[0] - want[0]).abs() <= 1e-12 && (got[1] - want[1]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn condition_encoding_properties() {
        let params = DenoiserParams::init(4, Dims::small()).unwrap();
        let map = Arc::new(GridMap::empty(4, 4).unwrap());
        let twin = Instance::new(
            map,
            vec![Cell::new(0, 0), Cell::new(3, 3)],
            vec![Cell::new(2, 2), Cell::new(1, 1)],
            4,
        )
        .unwrap();
        let cond = Condition::from_instance(&twin);
        let mut same = cond.clone();
        same.starts[1] = same.starts[0];
        same.goals[1] = same.goals[0];
        let enc = encode_condition(&same, 10, &params).unwrap();
        assert_eq!(enc.agents[0], enc.agents[1]);
        assert!((enc.scale_gate.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let other = encode_condition(&same, 11, &params).unwrap();
        assert_ne!(enc.global, other.global);
        assert_eq!(enc.start_embed, other.start_embed);
        assert_eq!(enc.goal_embed, other.goal_embed);
        assert_eq!(enc.relative_embed, other.relative_embed);
    }
}
