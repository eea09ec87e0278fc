//! Temporal window/anchor attention along each agent's trajectory and
//! sparse social attention across agents at each timestep.

use rayon::prelude::*;

use super::ops::{dot, softmax_in_place, Linear};
use super::params::{DenoiserParams, Dims};
use crate::error::Result;

/// Non-self neighbour count at diffusion step `step` of `steps`: the ratio
/// grows linearly from 0.10 to 0.25 with the noise level.
pub fn neighbor_count(agents: usize, step: usize, steps: usize) -> usize {
    if agents <= 1 {
        return 0;
    }
    let ratio = 0.10 + 0.15 * step as f64 / steps.max(1) as f64;
    ((ratio * agents as f64).round() as usize).clamp(1, agents - 1)
}

/// Minimum L1 distance between two inferred trajectories.
pub fn trajectory_distance(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p[0] - q[0]).abs() + (p[1] - q[1]).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Each agent's neighbourhood: itself first, then its nearest agents by
/// trajectory distance (ties to the lower index).
pub fn build_social_graph(
    trajectory: &[[f64; 2]],
    agents: usize,
    horizon: usize,
    step: usize,
    steps: usize,
) -> Vec<Vec<usize>> {
    let m = neighbor_count(agents, step, steps);
    let path = |i: usize| &trajectory[i * horizon..(i + 1) * horizon];
    (0..agents)
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..agents)
                .filter(|&j| j != i)
                .map(|j| (trajectory_distance(path(i), path(j)), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            std::iter::once(i).chain(others.into_iter().take(m).map(|(_, j)| j)).collect()
        })
        .collect()
}

/// Key positions visible from timestep `t`: its own window block plus every
/// anchor timestep, without duplicates, ascending.
pub fn temporal_keys(t: usize, horizon: usize, window: usize, anchor_stride: usize) -> Vec<usize> {
    let lo = t / window * window;
    let hi = (lo + window).min(horizon);
    let mut keys: Vec<usize> = (0..lo).step_by(anchor_stride).collect();
    keys.extend(lo..hi);
    keys.extend((hi..horizon).filter(|u| u % anchor_stride == 0));
    keys.sort_unstable();
    keys.dedup();
    keys
}

struct Projections<'a> {
    q: Linear<'a>,
    k: Linear<'a>,
    v: Linear<'a>,
    o: Linear<'a>,
}

impl<'a> Projections<'a> {
    fn load(params: &'a DenoiserParams, prefix: &str) -> Result<Self> {
        Ok(Self {
            q: params.linear(&format!("{prefix}.q"))?,
            k: params.linear(&format!("{prefix}.k"))?,
            v: params.linear(&format!("{prefix}.v"))?,
            o: params.linear(&format!("{prefix}.o"))?,
        })
    }
}

/// Multi-head attention of one query over `keys`, with optional additive
/// per-head logits. Writes the concatenated heads into `out`.
fn attend(
    dims: &Dims,
    query: &[f64],
    keys: &[usize],
    k_all: &[f64],
    v_all: &[f64],
    bias: impl Fn(usize, usize) -> f64,
    out: &mut [f64],
) {
    let (d, hd) = (dims.hidden, dims.head_dim());
    let scale = 1.0 / (hd as f64).sqrt();
    let mut logits = vec![0.0; keys.len()];
    out.iter_mut().for_each(|x| *x = 0.0);
    for h in 0..dims.heads {
        let qh = &query[h * hd..(h + 1) * hd];
        for (x, &key) in keys.iter().enumerate() {
            let kh = &k_all[key * d + h * hd..key * d + (h + 1) * hd];
            logits[x] = dot(qh, kh) * scale + bias(h, x);
        }
        softmax_in_place(&mut logits);
        let oh = &mut out[h * hd..(h + 1) * hd];
        for (x, &key) in keys.iter().enumerate() {
            let vh = &v_all[key * d + h * hd..key * d + (h + 1) * hd];
            for (o, v) in oh.iter_mut().zip(vh) {
                *o += logits[x] * v;
            }
        }
    }
}

/// Self-attention along time for each agent independently, over a local
/// window block united with strided anchors under one softmax.
pub fn temporal_attention(
    tokens: &[f64],
    agents: usize,
    horizon: usize,
    params: &DenoiserParams,
    prefix: &str,
) -> Result<Vec<f64>> {
    let dims = *params.dims();
    let d = dims.hidden;
    let p = Projections::load(params, prefix)?;
    let (q, k, v) = (p.q.apply_rows(tokens), p.k.apply_rows(tokens), p.v.apply_rows(tokens));
    let mut mixed = vec![0.0; agents * horizon * d];
    mixed.par_chunks_mut(d).enumerate().for_each(|(row, out)| {
        let (agent, t) = (row / horizon, row % horizon);
        let keys: Vec<usize> = temporal_keys(t, horizon, dims.window, dims.anchor_stride)
            .into_iter()
            .map(|u| agent * horizon + u)
            .collect();
        attend(&dims, &q[row * d..(row + 1) * d], &keys, &k, &v, |_, _| 0.0, out);
    });
    Ok(p.o.apply_rows(&mixed))
}

/// Per-timestep attention from each agent to its neighbourhood, with a
/// learned bias on relative inferred positions.
pub fn sparse_social_attention(
    tokens: &[f64],
    agents: usize,
    horizon: usize,
    trajectory: &[[f64; 2]],
    neighborhoods: &[Vec<usize>],
    params: &DenoiserParams,
    prefix: &str,
) -> Result<Vec<f64>> {
    let dims = *params.dims();
    let d = dims.hidden;
    let p = Projections::load(params, prefix)?;
    let bias0 = params.linear(&format!("{prefix}.bias.0"))?;
    let bias1 = params.linear(&format!("{prefix}.bias.1"))?;
    let (q, k, v) = (p.q.apply_rows(tokens), p.k.apply_rows(tokens), p.v.apply_rows(tokens));
    let mut mixed = vec![0.0; agents * horizon * d];
    mixed.par_chunks_mut(d).enumerate().for_each(|(row, out)| {
        let (agent, t) = (row / horizon, row % horizon);
        let hood = &neighborhoods[agent];
        let keys: Vec<usize> = hood.iter().map(|&j| j * horizon + t).collect();
        let here = trajectory[row];
        let biases: Vec<Vec<f64>> = hood
            .iter()
            .map(|&j| {
                let there = trajectory[j * horizon + t];
                let rel = [here[0] - there[0], here[1] - there[1]];
                let hidden: Vec<f64> = bias0.apply(&rel).into_iter().map(super::ops::silu).collect();
                bias1.apply(&hidden)
            })
            .collect();
        attend(&dims, &q[row * d..(row + 1) * d], &keys, &k, &v, |h, x| biases[x][h], out);
    });
    Ok(p.o.apply_rows(&mixed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbor_counts() {
        assert_eq!(neighbor_count(1, 50, 100), 0);
        for k in [1, 50, 100] {
            assert_eq!(neighbor_count(2, k, 100), 1);
        }
        assert_eq!(neighbor_count(4, 100, 100), 1);
        assert_eq!(neighbor_count(20, 100, 100), 5);
        assert_eq!(neighbor_count(20, 0, 100), 2);
    }

    #[test]
    fn graph_on_a_line() {
        // four agents on a line with pairwise distances 1, 3, 2 apart
        let xs = [0.0, 1.0, 4.0, 6.0];
        let traj: Vec<[f64; 2]> = xs.iter().map(|&x| [0.0, x]).collect();
        let graph = build_social_graph(&traj, 4, 1, 100, 100);
        assert_eq!(graph, vec![vec![0, 1], vec![1, 0], vec![2, 3], vec![3, 2]]);
        assert_eq!(build_social_graph(&traj[..1], 1, 1, 5, 100), vec![vec![0]]);
    }

    #[test]
    fn temporal_key_sets() {
        assert_eq!(temporal_keys(3, 10, 32, 16), (0..10).collect::<Vec<_>>());
        let keys = temporal_keys(40, 80, 32, 16);
        let mut want: Vec<usize> = vec![0, 16];
        want.extend(32..64);
        want.push(64);
        assert_eq!(keys, want);
    }
}
