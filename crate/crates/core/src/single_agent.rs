//! Single-agent planners: BFS distance fields, static shortest paths, and a
//! soft-constraint safe-interval planner (SIPPS) used by prioritized
//! planning and LNS2 replanning.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::grid::{Cell, GridMap};

const UNREACHABLE: u32 = u32::MAX;

/// Shortest-path distance (in steps) from every cell to a fixed goal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceField {
    goal: Cell,
    width: usize,
    dist: Vec<u32>,
}

impl DistanceField {
    pub fn goal(&self) -> Cell {
        self.goal
    }

    /// `None` for obstacles, out-of-bounds cells, and cells cut off from the goal.
    pub fn get(&self, cell: Cell) -> Option<usize> {
        if cell.col >= self.width {
            return None;
        }
        match self.dist.get(cell.row * self.width + cell.col) {
            Some(&d) if d != UNREACHABLE => Some(d as usize),
            _ => None,
        }
    }

    pub fn is_reachable(&self, cell: Cell) -> bool {
        self.get(cell).is_some()
    }
}

/// Exact 4-connected BFS distances to `goal`.
pub fn bfs_distance_map(map: &GridMap, goal: Cell) -> Result<DistanceField> {
    if !map.is_free(goal) {
        return Err(Error::BlockedCell(goal));
    }
    let mut dist = vec![UNREACHABLE; map.num_cells()];
    dist[map.index(goal)] = 0;
    let mut queue = VecDeque::from([goal]);
    while let Some(c) = queue.pop_front() {
        let d = dist[map.index(c)];
        for n in map.neighbors(c) {
            let ni = map.index(n);
            if dist[ni] == UNREACHABLE {
                dist[ni] = d + 1;
                queue.push_back(n);
            }
        }
    }
    Ok(DistanceField {
        goal,
        width: map.width(),
        dist,
    })
}

/// BFS shortest path `from -> goal` over static obstacles, excluding `from`
/// itself. Empty when `from == goal`.
pub fn shortest_suffix(map: &GridMap, from: Cell, goal: Cell) -> Result<Vec<Cell>> {
    let field = bfs_distance_map(map, goal)?;
    shortest_suffix_with(map, &field, from)
}

/// [`shortest_suffix`] reusing a precomputed distance field. Ties between
/// equally short moves go to the lowest action index.
pub fn shortest_suffix_with(map: &GridMap, field: &DistanceField, from: Cell) -> Result<Vec<Cell>> {
    if !map.is_free(from) {
        return Err(Error::BlockedCell(from));
    }
    let mut d = field.get(from).ok_or(Error::Unreachable {
        from,
        to: field.goal(),
    })?;
    let mut cur = from;
    let mut out = Vec::with_capacity(d);
    while d > 0 {
        let next = map
            .neighbors(cur)
            .find(|&n| field.get(n) == Some(d - 1))
            .expect("BFS field has a descending neighbor");
        out.push(next);
        cur = next;
        d -= 1;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Occupancy {
    /// Never enterable (static obstacle).
    Hard,
    /// Number of other agents occupying the cell at each timestep; 0 is safe.
    Soft(u32),
}

impl Occupancy {
    pub fn soft_count(self) -> Option<u32> {
        match self {
            Occupancy::Hard => None,
            Occupancy::Soft(n) => Some(n),
        }
    }
}

/// Closed time window `[start, end]`; `end == usize::MAX` means unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
    pub occupancy: Occupancy,
}

impl Interval {
    pub fn contains(&self, t: usize) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn is_safe(&self) -> bool {
        self.occupancy == Occupancy::Soft(0)
    }
}

#[derive(Clone, Debug, Default)]
struct CellRecord {
    transient: Vec<(usize, u32)>,
    resting: Vec<(usize, u32)>,
    intervals: Vec<Interval>,
}

/// Per-cell sorted, disjoint time intervals covering `[0, ∞)`, each tagged
/// with how many other agents occupy the cell during it. Built from other
/// agents' paths, which rest at their final cell forever.
#[derive(Clone, Debug)]
pub struct SafeIntervalTable {
    width: usize,
    cells: Vec<CellRecord>,
    swaps: HashMap<(usize, usize, usize), u32>,
    last_event: usize,
}

impl SafeIntervalTable {
    pub fn new(map: &GridMap) -> Self {
        let cells = (0..map.num_cells())
            .map(|i| {
                let occupancy = if map.is_obstacle(map.cell_at(i)) {
                    Occupancy::Hard
                } else {
                    Occupancy::Soft(0)
                };
                CellRecord {
                    intervals: vec![Interval {
                        start: 0,
                        end: usize::MAX,
                        occupancy,
                    }],
                    ..CellRecord::default()
                }
            })
            .collect();
        Self {
            width: map.width(),
            cells,
            swaps: HashMap::new(),
            last_event: 0,
        }
    }

    pub fn from_paths<'a, I>(map: &GridMap, paths: I) -> Self
    where
        I: IntoIterator<Item = (usize, &'a [Cell])>,
    {
        let mut table = Self::new(map);
        for (agent, path) in paths {
            table.insert_path(agent, path);
        }
        table
    }

    fn idx(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    /// Adds another agent's path as soft occupancy.
    pub fn insert_path(&mut self, agent: usize, path: &[Cell]) {
        let Some(&last) = path.last() else { return };
        let agent = agent as u32;
        let mut touched = HashSet::new();
        for (t, &c) in path[..path.len() - 1].iter().enumerate() {
            let i = self.idx(c);
            self.cells[i].transient.push((t, agent));
            touched.insert(i);
        }
        let li = self.idx(last);
        self.cells[li].resting.push((path.len() - 1, agent));
        touched.insert(li);
        for (t, w) in path.windows(2).enumerate() {
            if w[0] != w[1] {
                let key = (self.idx(w[0]), self.idx(w[1]), t);
                *self.swaps.entry(key).or_insert(0) += 1;
            }
        }
        self.last_event = self.last_event.max(path.len() - 1);
        for i in touched {
            self.rebuild(i);
        }
    }

    fn rebuild(&mut self, i: usize) {
        let rec = &mut self.cells[i];
        if matches!(rec.intervals.first(), Some(iv) if iv.occupancy == Occupancy::Hard) {
            return;
        }
        let mut breaks: Vec<usize> = vec![0];
        for &(t, _) in &rec.transient {
            breaks.push(t);
            breaks.push(t + 1);
        }
        breaks.extend(rec.resting.iter().map(|&(t, _)| t));
        breaks.sort_unstable();
        breaks.dedup();
        let occ_at = |t: usize| -> u32 {
            (rec.transient.iter().filter(|&&(x, _)| x == t).count()
                + rec.resting.iter().filter(|&&(x, _)| x <= t).count()) as u32
        };
        let mut intervals: Vec<Interval> = Vec::with_capacity(breaks.len());
        for (k, &b) in breaks.iter().enumerate() {
            let end = breaks.get(k + 1).map_or(usize::MAX, |&n| n - 1);
            let occupancy = Occupancy::Soft(occ_at(b));
            match intervals.last_mut() {
                Some(prev) if prev.occupancy == occupancy => prev.end = end,
                _ => intervals.push(Interval {
                    start: b,
                    end,
                    occupancy,
                }),
            }
        }
        rec.intervals = intervals;
    }

    pub fn intervals(&self, cell: Cell) -> &[Interval] {
        &self.cells[self.idx(cell)].intervals
    }

    /// Index of the interval of `cell` containing `t`.
    pub fn interval_index(&self, cell: Cell, t: usize) -> usize {
        let ivs = self.intervals(cell);
        ivs.partition_point(|iv| iv.start <= t) - 1
    }

    /// Number of other agents at `cell` at time `t`.
    pub fn occupancy(&self, cell: Cell, t: usize) -> u32 {
        let ivs = self.intervals(cell);
        ivs[self.interval_index(cell, t)].occupancy.soft_count().unwrap_or(0)
    }

    /// Number of other agents moving `to -> from` between `t` and `t + 1`,
    /// i.e. swapping with a move `from -> to` departing at `t`.
    pub fn swaps(&self, from: Cell, to: Cell, t: usize) -> u32 {
        self.swaps
            .get(&(self.idx(to), self.idx(from), t))
            .copied()
            .unwrap_or(0)
    }

    /// Distinct other agents present at `cell` at any time strictly after `t`.
    pub fn agents_after(&self, cell: Cell, t: usize) -> usize {
        let rec = &self.cells[self.idx(cell)];
        let mut agents: Vec<u32> = rec
            .transient
            .iter()
            .filter(|&&(x, _)| x > t)
            .map(|&(_, a)| a)
            .chain(rec.resting.iter().map(|&(_, a)| a))
            .collect();
        agents.sort_unstable();
        agents.dedup();
        agents.len()
    }

    /// Last timestep at which any inserted path still changes the table.
    pub fn last_event(&self) -> usize {
        self.last_event
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathResult {
    /// Locations from `start` (time 0) to `goal` (final time).
    pub path: Vec<Cell>,
    pub soft_collisions: usize,
}

#[derive(Clone, Copy, Debug)]
struct Node {
    cell: Cell,
    interval: usize,
    arrival: usize,
    collisions: usize,
    parent: usize,
}

/// Finds the path `start -> goal` minimizing lexicographically
/// `(soft collisions, arrival time)` against the agents in `table`.
///
/// A collision is one other agent sharing a cell at one timestep, or one
/// swap. After arrival the agent rests on `goal`; every other agent that is
/// on the goal at a later time adds one more collision.
pub fn sipps(
    map: &GridMap,
    start: Cell,
    goal: Cell,
    table: &SafeIntervalTable,
    deadline: Option<Instant>,
) -> Result<PathResult> {
    for c in [start, goal] {
        if !map.is_free(c) {
            return Err(Error::BlockedCell(c));
        }
    }
    let labels = map.component_labels();
    if labels[map.index(start)] != labels[map.index(goal)] {
        return Err(Error::Unreachable { from: start, to: goal });
    }

    let static_from = table.last_event() + 2;
    let time_cap = static_from + map.free_count() + 1;

    let mut nodes: Vec<Node> = Vec::new();
    // labels per (cell, interval): (arrival, collisions)
    let mut frontier: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
    // (collisions, arrival, is_terminal, node)
    let mut open: BinaryHeap<Reverse<(usize, usize, bool, usize)>> = BinaryHeap::new();

    let occ = |cell: Cell, iv: usize| -> usize {
        table.intervals(cell)[iv].occupancy.soft_count().unwrap_or(0) as usize
    };

    let start_iv = table.interval_index(start, 0);
    let start_node = Node {
        cell: start,
        interval: start_iv,
        arrival: 0,
        collisions: occ(start, start_iv),
        parent: usize::MAX,
    };
    nodes.push(start_node);
    frontier.insert((map.index(start), start_iv), vec![(0, start_node.collisions)]);
    open.push(Reverse((start_node.collisions, 0, false, 0)));

    let mut pops = 0usize;
    while let Some(Reverse((collisions, arrival, is_terminal, id))) = open.pop() {
        pops += 1;
        if pops % 1024 == 0 {
            if let Some(d) = deadline {
                if Instant::now() >= d {
                    return Err(Error::Timeout);
                }
            }
        }
        if is_terminal {
            return Ok(PathResult {
                path: reconstruct(&nodes, id),
                soft_collisions: collisions,
            });
        }
        let node = nodes[id];
        let key = (map.index(node.cell), node.interval);
        let cur_occ = occ(node.cell, node.interval);
        if is_dominated(&frontier[&key], (arrival, collisions), cur_occ) {
            continue;
        }
        if node.cell == goal {
            let total = collisions + table.agents_after(goal, arrival);
            open.push(Reverse((total, arrival, true, id)));
        }

        let here = table.intervals(node.cell)[node.interval];
        // leaving this interval: latest departure is its end
        let last_depart = here.end;

        // wait into the next interval of the same cell
        if here.end != usize::MAX {
            let next_iv = node.interval + 1;
            let a = here.end + 1;
            if a <= time_cap {
                let cost = collisions + cur_occ * (here.end - arrival) + occ(node.cell, next_iv);
                push_label(
                    &mut nodes,
                    &mut frontier,
                    &mut open,
                    map.index(node.cell),
                    Node {
                        cell: node.cell,
                        interval: next_iv,
                        arrival: a,
                        collisions: cost,
                        parent: id,
                    },
                    occ(node.cell, next_iv),
                );
            }
        }

        for n in map.neighbors(node.cell) {
            let ivs = table.intervals(n);
            let earliest = arrival + 1;
            let latest = last_depart.saturating_add(1);
            let first = table.interval_index(n, earliest);
            for (j, iv) in ivs.iter().enumerate().skip(first) {
                if iv.start > latest || iv.start > time_cap {
                    break;
                }
                let Some(n_occ) = iv.occupancy.soft_count() else { continue };
                let n_occ = n_occ as usize;
                let t_e = earliest.max(iv.start);
                let hi = latest.min(iv.end).min(time_cap);
                if t_e > hi {
                    continue;
                }
                let cost_at = |a: usize| -> usize {
                    collisions
                        + cur_occ * (a - 1 - arrival)
                        + table.swaps(node.cell, n, a - 1) as usize
                        + n_occ
                };
                let mut candidates = vec![t_e];
                if cur_occ < n_occ {
                    let stop = hi.min(t_e.max(static_from));
                    candidates.extend(t_e + 1..=stop);
                } else if table.swaps(node.cell, n, t_e - 1) > 0 {
                    let mut a = t_e + 1;
                    while a <= hi {
                        candidates.push(a);
                        if table.swaps(node.cell, n, a - 1) == 0 {
                            break;
                        }
                        a += 1;
                    }
                }
                for a in candidates {
                    let cost = cost_at(a);
                    let child = Node {
                        cell: n,
                        interval: j,
                        arrival: a,
                        collisions: cost,
                        parent: id,
                    };
                    if n == goal {
                        // later arrivals can shed residual goal collisions
                        let total = cost + table.agents_after(goal, a);
                        push_terminal(&mut nodes, &mut open, child, total);
                    }
                    push_label(&mut nodes, &mut frontier, &mut open, map.index(n), child, n_occ);
                }
            }
        }
    }
    Err(Error::Unreachable { from: start, to: goal })
}

fn push_terminal(
    nodes: &mut Vec<Node>,
    open: &mut BinaryHeap<Reverse<(usize, usize, bool, usize)>>,
    node: Node,
    total: usize,
) {
    let id = nodes.len();
    nodes.push(node);
    open.push(Reverse((total, node.arrival, true, id)));
}

fn is_dominated(labels: &[(usize, usize)], (a, c): (usize, usize), occ: usize) -> bool {
    labels
        .iter()
        .any(|&(a1, c1)| (a1, c1) != (a, c) && a1 <= a && c1 + occ * (a - a1) <= c)
}

fn push_label(
    nodes: &mut Vec<Node>,
    frontier: &mut HashMap<(usize, usize), Vec<(usize, usize)>>,
    open: &mut BinaryHeap<Reverse<(usize, usize, bool, usize)>>,
    cell_index: usize,
    node: Node,
    occ: usize,
) {
    let labels = frontier.entry((cell_index, node.interval)).or_default();
    let new = (node.arrival, node.collisions);
    if labels.contains(&new) || is_dominated(labels, new, occ) {
        return;
    }
    labels.push(new);
    let id = nodes.len();
    nodes.push(node);
    open.push(Reverse((node.collisions, node.arrival, false, id)));
}

fn reconstruct(nodes: &[Node], last: usize) -> Vec<Cell> {
    let mut chain = Vec::new();
    let mut cur = last;
    while cur != usize::MAX {
        chain.push(nodes[cur]);
        cur = nodes[cur].parent;
    }
    chain.reverse();
    let mut path = vec![chain[0].cell];
    for w in chain.windows(2) {
        let (prev, next) = (w[0], w[1]);
        while path.len() < next.arrival {
            path.push(prev.cell);
        }
        path.push(next.cell);
    }
    path
}
