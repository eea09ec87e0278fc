//! Independent reference implementations used as test oracles. None of
//! these call into the library's algorithms beyond plain data accessors.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use difflns::d3pm::DiffusionSchedule;
use difflns::denoiser::DenoiserParams;
use difflns::grid::{Cell, GridMap, Instance};
use rand::seq::IndexedRandom;
use rand::Rng;

pub const C: usize = 5;
/// Stay, up, down, left, right.
pub const MOVES: [(isize, isize); C] = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)];

pub fn at(path: &[Cell], t: usize) -> Cell {
    path[t.min(path.len() - 1)]
}

/// All vertex conflicts `(a, b, t)` and swaps `(a, b, t)` with `a < b`, by
/// checking every pair at every timestep.
pub fn brute_conflicts(paths: &[Vec<Cell>]) -> (BTreeSet<(usize, usize, usize)>, BTreeSet<(usize, usize, usize)>) {
    let len = paths.iter().map(Vec::len).max().unwrap_or(0);
    let mut vertex = BTreeSet::new();
    let mut edge = BTreeSet::new();
    for a in 0..paths.len() {
        for b in a + 1..paths.len() {
            for t in 0..len {
                if at(&paths[a], t) == at(&paths[b], t) {
                    vertex.insert((a, b, t));
                }
                if t + 1 < len {
                    let (a0, a1) = (at(&paths[a], t), at(&paths[a], t + 1));
                    let (b0, b1) = (at(&paths[b], t), at(&paths[b], t + 1));
                    if a0 != a1 && a0 == b1 && a1 == b0 {
                        edge.insert((a, b, t));
                    }
                }
            }
        }
    }
    (vertex, edge)
}

pub fn brute_pairs(paths: &[Vec<Cell>]) -> usize {
    let (v, e) = brute_conflicts(paths);
    v.iter()
        .chain(e.iter())
        .map(|&(a, b, _)| (a, b))
        .collect::<BTreeSet<_>>()
        .len()
}

/// Collisions of `path` against `others`: one per other agent sharing a cell
/// per timestep up to arrival, one per swap, plus one per distinct other
/// agent on the goal at any later time.
pub fn path_collisions(path: &[Cell], others: &[Vec<Cell>]) -> usize {
    let arrival = path.len() - 1;
    let goal = path[arrival];
    let mut total = 0;
    for o in others {
        for t in 0..=arrival {
            if at(o, t) == path[t] {
                total += 1;
            }
            if t < arrival && path[t] != path[t + 1] && at(o, t) == path[t + 1] && at(o, t + 1) == path[t] {
                total += 1;
            }
        }
        let later = arrival + 1..o.len().max(arrival + 2);
        if later.into_iter().any(|t| at(o, t) == goal) {
            total += 1;
        }
    }
    total
}

/// Minimum collisions over all paths `start -> goal` with arrival at most
/// `max_time`, and the earliest arrival achieving it, by dynamic
/// programming over the full time-expanded grid.
pub fn space_time_optimum(map: &GridMap, start: Cell, goal: Cell, others: &[Vec<Cell>], max_time: usize) -> Option<(usize, usize)> {
    let (h, w) = (map.height(), map.width());
    let idx = |c: Cell| c.row * w + c.col;
    let occ = |c: Cell, t: usize| others.iter().filter(|o| at(o, t) == c).count();
    let swaps = |from: Cell, to: Cell, t: usize| {
        others
            .iter()
            .filter(|o| from != to && at(o, t) == to && at(o, t + 1) == from)
            .count()
    };
    let after = |t: usize| {
        others
            .iter()
            .filter(|o| (t + 1..o.len().max(t + 2)).any(|u| at(o, u) == goal))
            .count()
    };
    let cells: Vec<Cell> = (0..h)
        .flat_map(|r| (0..w).map(move |c| Cell::new(r, c)))
        .filter(|&c| map.is_free(c))
        .collect();
    let mut cost = vec![None; h * w];
    cost[idx(start)] = Some(occ(start, 0));
    let mut best: Option<(usize, usize)> = None;
    for t in 0..=max_time {
        if t > 0 {
            let mut next = vec![None; h * w];
            for &c in &cells {
                for (dr, dc) in MOVES {
                    let (r, col) = (c.row as isize - dr, c.col as isize - dc);
                    if r < 0 || col < 0 || r >= h as isize || col >= w as isize {
                        continue;
                    }
                    let prev = Cell::new(r as usize, col as usize);
                    if !map.is_free(prev) {
                        continue;
                    }
                    if let Some(p) = cost[idx(prev)] {
                        let v = p + swaps(prev, c, t - 1) + occ(c, t);
                        let slot: &mut Option<usize> = &mut next[idx(c)];
                        if slot.is_none_or(|s| v < s) {
                            *slot = Some(v);
                        }
                    }
                }
            }
            cost = next;
        }
        if let Some(v) = cost[idx(goal)] {
            let total = v + after(t);
            if best.is_none_or(|(b, _)| total < b) {
                best = Some((total, t));
            }
        }
    }
    best
}

/// A random walk of `len` moves over free cells from a random free cell.
pub fn random_walk<R: Rng>(map: &GridMap, len: usize, rng: &mut R) -> Vec<Cell> {
    let free: Vec<Cell> = map.free_cells().collect();
    let mut cur = *free.choose(rng).expect("free cell");
    let mut path = vec![cur];
    for _ in 0..len {
        let options: Vec<Cell> = MOVES
            .iter()
            .filter_map(|&(dr, dc)| {
                let (r, c) = (cur.row as isize + dr, cur.col as isize + dc);
                (r >= 0 && c >= 0 && r < map.height() as isize && c < map.width() as isize)
                    .then(|| Cell::new(r as usize, c as usize))
                    .filter(|&n| map.is_free(n))
            })
            .collect();
        cur = *options.choose(rng).expect("stay is always possible");
        path.push(cur);
    }
    path
}

/// A random map with each cell blocked with probability `p`.
pub fn random_map<R: Rng>(h: usize, w: usize, p: f64, rng: &mut R) -> GridMap {
    loop {
        let obstacles: Vec<bool> = (0..h * w).map(|_| rng.random::<f64>() < p).collect();
        if obstacles.iter().any(|&b| !b) {
            return GridMap::new(h, w, obstacles).expect("valid map");
        }
    }
}

/// Random instance on an open map with distinct starts and goals.
pub fn open_instance<R: Rng>(h: usize, w: usize, agents: usize, horizon: usize, rng: &mut R) -> Instance {
    let map = Arc::new(GridMap::empty(h, w).expect("map"));
    let mut cells: Vec<Cell> = map.free_cells().collect();
    use rand::seq::SliceRandom;
    cells.shuffle(rng);
    let starts = cells[..agents].to_vec();
    cells.shuffle(rng);
    let goals = cells[..agents].to_vec();
    Instance::new(map, starts, goals, horizon).expect("instance")
}

/// Per-step kernel `alpha I + (1 - alpha) / C` written out entry by entry.
pub fn step_kernel(alpha: f64) -> [[f64; C]; C] {
    let mut q = [[0.0; C]; C];
    for (i, row) in q.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (1.0 - alpha) / C as f64 + if i == j { alpha } else { 0.0 };
        }
    }
    q
}

/// Distribution of `x_k` given one-hot `x_0`, by pushing the state through
/// each step kernel in turn.
pub fn propagate(x0: usize, k: usize, schedule: &DiffusionSchedule) -> [f64; C] {
    let mut p = [0.0; C];
    p[x0] = 1.0;
    for j in 1..=k {
        let q = step_kernel(schedule.alpha(j));
        let mut next = [0.0; C];
        for (a, pa) in p.iter().enumerate() {
            for (b, nb) in next.iter_mut().enumerate() {
                *nb += pa * q[a][b];
            }
        }
        p = next;
    }
    p
}

/// `q(x_{k-1} | x_k, x_0)` by enumerating every intermediate state with
/// Bayes' rule on the joint `q(x_{k-1}, x_k | x_0)`.
pub fn enumerated_posterior(xk: usize, x0: usize, k: usize, schedule: &DiffusionSchedule) -> [f64; C] {
    let prior = propagate(x0, k - 1, schedule);
    let q = step_kernel(schedule.alpha(k));
    let mut joint = [0.0; C];
    for c in 0..C {
        joint[c] = prior[c] * q[c][xk];
    }
    let z: f64 = joint.iter().sum();
    joint.map(|v| v / z)
}

fn affine(params: &DenoiserParams, name: &str, x: &[f64]) -> Vec<f64> {
    let w = &params.tensor(&format!("{name}.weight")).unwrap().data;
    let b = &params.tensor(&format!("{name}.bias")).unwrap().data;
    let n = x.len();
    b.iter()
        .enumerate()
        .map(|(o, bo)| bo + (0..n).map(|i| w[o * n + i] * x[i]).sum::<f64>())
        .collect()
}

/// Dense multi-head attention across all agents at each timestep with the
/// learned relative-position bias, as a direct transcription.
pub fn dense_social_reference(
    tokens: &[f64],
    agents: usize,
    horizon: usize,
    trajectory: &[[f64; 2]],
    params: &DenoiserParams,
    prefix: &str,
) -> Vec<f64> {
    let d = params.dims().hidden;
    let heads = params.dims().heads;
    let hd = d / heads;
    let token = |row: usize| &tokens[row * d..(row + 1) * d];
    let mut out = Vec::with_capacity(tokens.len());
    for i in 0..agents {
        for t in 0..horizon {
            let row = i * horizon + t;
            let q = affine(params, &format!("{prefix}.q"), token(row));
            let mut mixed = vec![0.0; d];
            for h in 0..heads {
                let mut scores = Vec::with_capacity(agents);
                let mut values = Vec::with_capacity(agents);
                for j in 0..agents {
                    let other = j * horizon + t;
                    let k = affine(params, &format!("{prefix}.k"), token(other));
                    let v = affine(params, &format!("{prefix}.v"), token(other));
                    let rel = [
                        trajectory[row][0] - trajectory[other][0],
                        trajectory[row][1] - trajectory[other][1],
                    ];
                    let hidden: Vec<f64> = affine(params, &format!("{prefix}.bias.0"), &rel)
                        .into_iter()
                        .map(|x| x / (1.0 + (-x).exp()))
                        .collect();
                    let bias = affine(params, &format!("{prefix}.bias.1"), &hidden)[h];
                    let s: f64 = (0..hd).map(|x| q[h * hd + x] * k[h * hd + x]).sum::<f64>() / (hd as f64).sqrt();
                    scores.push(s + bias);
                    values.push(v[h * hd..(h + 1) * hd].to_vec());
                }
                let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for (j, v) in values.iter().enumerate() {
                    for x in 0..hd {
                        mixed[h * hd + x] += e[j] / z * v[x];
                    }
                }
            }
            out.extend(affine(params, &format!("{prefix}.o"), &mixed));
        }
    }
    out
}
