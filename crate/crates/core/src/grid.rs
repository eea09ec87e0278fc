//! Grid maps, actions, instances and plans, plus the conflict and cost
//! semantics every planner in the crate is checked against.
//!
//! Coordinates are `(row, col)` with `up` decreasing the row. Agents rest at
//! the last cell of their path forever, so a plan never needs explicit
//! padding to be checked for conflicts.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of grid actions.
pub const NUM_ACTIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Stay = 0,
    Up = 1,
    Down = 2,
    Left = 3,
    Right = 4,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::Stay,
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// `(drow, dcol)` displacement in cells.
    pub fn displacement(self) -> (isize, isize) {
        match self {
            Action::Stay => (0, 0),
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }

    /// The action moving `from` onto the adjacent (or same) cell `to`.
    pub fn between(from: Cell, to: Cell) -> Option<Action> {
        let dr = to.row as isize - from.row as isize;
        let dc = to.col as isize - from.col as isize;
        Self::ALL.into_iter().find(|a| a.displacement() == (dr, dc))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoveOutcome {
    Moved(Cell),
    Invalid,
}

impl MoveOutcome {
    pub fn cell(self) -> Option<Cell> {
        match self {
            MoveOutcome::Moved(c) => Some(c),
            MoveOutcome::Invalid => None,
        }
    }
}

/// 2D occupancy grid, `true` marks an obstacle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridMap {
    height: usize,
    width: usize,
    obstacles: Vec<bool>,
    free_count: usize,
}

impl GridMap {
    pub fn new(height: usize, width: usize, obstacles: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidMap(format!(
                "dimensions must be positive, got {height}x{width}"
            )));
        }
        if obstacles.len() != height * width {
            return Err(Error::InvalidMap(format!(
                "expected {} cells, got {}",
                height * width,
                obstacles.len()
            )));
        }
        let free_count = obstacles.iter().filter(|&&o| !o).count();
        Ok(Self {
            height,
            width,
            obstacles,
            free_count,
        })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![false; height * width])
    }

    /// Builds a map from rows of `.` (free) and `@` (obstacle).
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map(|r| r.as_ref().chars().count()).unwrap_or(0);
        let mut obstacles = Vec::with_capacity(height * width);
        for (line, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != width {
                return Err(Error::Parse {
                    line: line + 1,
                    msg: format!("expected {width} columns"),
                });
            }
            for ch in row.chars() {
                obstacles.push(match ch {
                    '.' => false,
                    '@' => true,
                    other => {
                        return Err(Error::Parse {
                            line: line + 1,
                            msg: format!("unexpected map character {other:?}"),
                        })
                    }
                });
            }
        }
        Self::new(height, width, obstacles)
    }

    /// Parses the `H W` header format followed by `H` rows.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: 1,
                msg: format!("bad header: {e}"),
            })?;
        if dims.len() != 2 {
            return Err(Error::Parse {
                line: 1,
                msg: "header must be `H W`".into(),
            });
        }
        let (h, w) = (dims[0], dims[1]);
        let mut rows = Vec::with_capacity(h);
        for (idx, line) in lines.by_ref().take(h) {
            let row = line.trim();
            if row.chars().count() != w {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected {w} columns, got {}", row.chars().count()),
                });
            }
            if let Some(bad) = row.chars().find(|&ch| ch != '.' && ch != '@') {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("unexpected map character {bad:?}"),
                });
            }
            rows.push(row.to_string());
        }
        if rows.len() != h {
            return Err(Error::Parse {
                line: rows.len() + 2,
                msg: format!("expected {h} rows, got {}", rows.len()),
            });
        }
        Self::from_rows(&rows)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.height, self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                out.push(if self.is_obstacle(Cell::new(r, c)) { '@' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_cells(&self) -> usize {
        self.height * self.width
    }

    pub fn free_count(&self) -> usize {
        self.free_count
    }

    pub fn obstacle_count(&self) -> usize {
        self.num_cells() - self.free_count
    }

    pub fn obstacle_density(&self) -> f64 {
        self.obstacle_count() as f64 / self.num_cells() as f64
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn is_obstacle(&self, cell: Cell) -> bool {
        self.obstacles[self.index(cell)]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && !self.is_obstacle(cell)
    }

    pub(crate) fn set_obstacle(&mut self, cell: Cell, obstacle: bool) {
        let idx = self.index(cell);
        if self.obstacles[idx] != obstacle {
            self.obstacles[idx] = obstacle;
            if obstacle {
                self.free_count -= 1;
            } else {
                self.free_count += 1;
            }
        }
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.num_cells())
            .filter(|&i| !self.obstacles[i])
            .map(|i| self.cell_at(i))
    }

    /// Signed offset, `None` if the result leaves the grid.
    pub fn offset(&self, cell: Cell, (dr, dc): (isize, isize)) -> Option<Cell> {
        let r = cell.row as isize + dr;
        let c = cell.col as isize + dc;
        if r < 0 || c < 0 || r >= self.height as isize || c >= self.width as isize {
            None
        } else {
            Some(Cell::new(r as usize, c as usize))
        }
    }

    /// Free 4-connected neighbors (excluding the cell itself).
    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        Action::ALL[1..]
            .iter()
            .filter_map(move |a| self.offset(cell, a.displacement()))
            .filter(move |&n| !self.is_obstacle(n))
    }

    /// Connected component label per cell; obstacles get `usize::MAX`.
    pub fn component_labels(&self) -> Vec<usize> {
        let mut labels = vec![usize::MAX; self.num_cells()];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.num_cells() {
            if self.obstacles[start] || labels[start] != usize::MAX {
                continue;
            }
            labels[start] = next;
            queue.push_back(self.cell_at(start));
            while let Some(c) = queue.pop_front() {
                for n in self.neighbors(c) {
                    let ni = self.index(n);
                    if labels[ni] == usize::MAX {
                        labels[ni] = next;
                        queue.push_back(n);
                    }
                }
            }
            next += 1;
        }
        labels
    }

    pub fn num_components(&self) -> usize {
        self.component_labels()
            .into_iter()
            .filter(|&l| l != usize::MAX)
            .max()
            .map_or(0, |m| m + 1)
    }

    /// True if all free cells are mutually reachable.
    pub fn is_connected(&self) -> bool {
        self.num_components() <= 1
    }
}

/// Moves `pos` by `action`; leaving the map or entering an obstacle is
/// reported as [`MoveOutcome::Invalid`].
pub fn apply_action(pos: Cell, action: Action, map: &GridMap) -> MoveOutcome {
    match map.offset(pos, action.displacement()) {
        Some(next) if !map.is_obstacle(next) => MoveOutcome::Moved(next),
        _ => MoveOutcome::Invalid,
    }
}

/// Default planning horizon `2·(H+W)`.
pub fn default_horizon(map: &GridMap) -> usize {
    2 * (map.height() + map.width())
}

#[derive(Clone, Debug)]
pub struct Instance {
    map: Arc<GridMap>,
    starts: Vec<Cell>,
    goals: Vec<Cell>,
    horizon: usize,
}

impl Instance {
    pub fn new(map: Arc<GridMap>, starts: Vec<Cell>, goals: Vec<Cell>, horizon: usize) -> Result<Self> {
        if starts.len() != goals.len() {
            return Err(Error::InvalidInstance(format!(
                "{} starts but {} goals",
                starts.len(),
                goals.len()
            )));
        }
        if horizon == 0 {
            return Err(Error::InvalidInstance("horizon must be positive".into()));
        }
        check_distinct(&starts, "start")?;
        check_distinct(&goals, "goal")?;
        let labels = map.component_labels();
        for (i, (&s, &g)) in starts.iter().zip(&goals).enumerate() {
            for (what, c) in [("start", s), ("goal", g)] {
                if !map.is_free(c) {
                    return Err(Error::InvalidInstance(format!(
                        "agent {i}: {what} {c} is not a free cell"
                    )));
                }
            }
            if labels[map.index(s)] != labels[map.index(g)] {
                return Err(Error::InvalidInstance(format!(
                    "agent {i}: goal {g} unreachable from start {s}"
                )));
            }
        }
        Ok(Self {
            map,
            starts,
            goals,
            horizon,
        })
    }

    /// Instance with the default horizon.
    pub fn with_default_horizon(map: Arc<GridMap>, starts: Vec<Cell>, goals: Vec<Cell>) -> Result<Self> {
        let horizon = default_horizon(&map);
        Self::new(map, starts, goals, horizon)
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn shared_map(&self) -> Arc<GridMap> {
        Arc::clone(&self.map)
    }

    pub fn starts(&self) -> &[Cell] {
        &self.starts
    }

    pub fn goals(&self) -> &[Cell] {
        &self.goals
    }

    pub fn num_agents(&self) -> usize {
        self.starts.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Reorders agents so that new agent `i` is old agent `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let starts = perm.iter().map(|&p| self.starts[p]).collect();
        let goals = perm.iter().map(|&p| self.goals[p]).collect();
        Self::new(Arc::clone(&self.map), starts, goals, self.horizon)
    }

    /// Scenario text: one `srow scol grow gcol` line per agent.
    pub fn scenario_text(&self) -> String {
        format_scenario(&self.starts, &self.goals)
    }
}

fn check_distinct(cells: &[Cell], what: &str) -> Result<()> {
    let mut seen = HashMap::with_capacity(cells.len());
    for (i, c) in cells.iter().enumerate() {
        if let Some(j) = seen.insert(*c, i) {
            return Err(Error::InvalidInstance(format!(
                "agents {j} and {i} share {what} {c}"
            )));
        }
    }
    Ok(())
}

pub fn format_scenario(starts: &[Cell], goals: &[Cell]) -> String {
    starts
        .iter()
        .zip(goals)
        .map(|(s, g)| format!("{} {} {} {}\n", s.row, s.col, g.row, g.col))
        .collect()
}

/// Parses scenario lines into `(starts, goals)`.
pub fn parse_scenario(text: &str) -> Result<(Vec<Cell>, Vec<Cell>)> {
    let mut starts = Vec::new();
    let mut goals = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums: Vec<usize> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: idx + 1,
                msg: format!("{e}"),
            })?;
        if nums.len() != 4 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: "expected `srow scol grow gcol`".into(),
            });
        }
        starts.push(Cell::new(nums[0], nums[1]));
        goals.push(Cell::new(nums[2], nums[3]));
    }
    Ok((starts, goals))
}

/// Per-agent location sequences. Path `i` starts at agent `i`'s start; after
/// its last entry the agent rests there.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Plan {
    pub paths: Vec<Vec<Cell>>,
}

impl Plan {
    pub fn new(paths: Vec<Vec<Cell>>) -> Self {
        Self { paths }
    }

    pub fn num_agents(&self) -> usize {
        self.paths.len()
    }

    /// Longest path length in locations (timesteps + 1).
    pub fn makespan_len(&self) -> usize {
        self.paths.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Location of `agent` at `t`, resting at the final cell past the end.
    pub fn position(&self, agent: usize, t: usize) -> Cell {
        let p = &self.paths[agent];
        p[t.min(p.len() - 1)]
    }

    /// Plain text: one line per agent, cells as `row,col` separated by spaces.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for path in &self.paths {
            let line: Vec<String> = path.iter().map(|c| format!("{},{}", c.row, c.col)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut paths = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut path = Vec::new();
            for tok in line.split_whitespace() {
                let (r, c) = tok.split_once(',').ok_or(Error::Parse {
                    line: idx + 1,
                    msg: format!("bad cell {tok:?}"),
                })?;
                let parse = |s: &str| {
                    s.trim_matches(|ch| ch == '(' || ch == ')')
                        .parse::<usize>()
                        .map_err(|e| Error::Parse {
                            line: idx + 1,
                            msg: format!("bad cell {tok:?}: {e}"),
                        })
                };
                path.push(Cell::new(parse(r)?, parse(c)?));
            }
            paths.push(path);
        }
        Ok(Self { paths })
    }
}

/// Repeats each path's final cell up to `length` locations.
pub fn pad_plan(plan: &Plan, length: usize) -> Plan {
    let paths = plan
        .paths
        .iter()
        .map(|p| {
            let mut p = p.clone();
            if let Some(&last) = p.last() {
                while p.len() < length {
                    p.push(last);
                }
            }
            p
        })
        .collect();
    Plan { paths }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexConflict {
    pub a: usize,
    pub b: usize,
    pub timestep: usize,
    pub cell: Cell,
}

/// Swap between `timestep` and `timestep + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeConflict {
    pub a: usize,
    pub b: usize,
    pub timestep: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConflictReport {
    pub vertex_conflicts: Vec<VertexConflict>,
    pub edge_conflicts: Vec<EdgeConflict>,
    pub colliding_pairs: usize,
}

impl ConflictReport {
    pub fn is_collision_free(&self) -> bool {
        self.colliding_pairs == 0
    }

    /// Distinct unordered colliding pairs `(a, b)` with `a < b`, sorted.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .vertex_conflicts
            .iter()
            .map(|v| (v.a, v.b))
            .chain(self.edge_conflicts.iter().map(|e| (e.a, e.b)))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }
}

/// Enumerates all vertex and edge conflicts of a plan, with agents resting at
/// their final cell until the longest path ends. Entries are sorted.
pub fn detect_conflicts(plan: &Plan) -> ConflictReport {
    let len = plan.makespan_len();
    let mut vertex_conflicts = Vec::new();
    let mut edge_conflicts = Vec::new();
    let mut occupancy: HashMap<Cell, Vec<usize>> = HashMap::new();
    for t in 0..len {
        occupancy.clear();
        for agent in 0..plan.num_agents() {
            if plan.paths[agent].is_empty() {
                continue;
            }
            occupancy.entry(plan.position(agent, t)).or_default().push(agent);
        }
        for (&cell, agents) in &occupancy {
            for (x, &a) in agents.iter().enumerate() {
                for &b in &agents[x + 1..] {
                    vertex_conflicts.push(VertexConflict {
                        a: a.min(b),
                        b: a.max(b),
                        timestep: t,
                        cell,
                    });
                }
            }
        }
        if t + 1 < len {
            // an edge conflict needs a's move u->v with b's move v->u
            let mut moves: HashMap<(Cell, Cell), Vec<usize>> = HashMap::new();
            for agent in 0..plan.num_agents() {
                if plan.paths[agent].is_empty() {
                    continue;
                }
                let u = plan.position(agent, t);
                let v = plan.position(agent, t + 1);
                if u != v {
                    moves.entry((u, v)).or_default().push(agent);
                }
            }
            for (&(u, v), agents) in &moves {
                if u > v {
                    continue;
                }
                if let Some(others) = moves.get(&(v, u)) {
                    for &a in agents {
                        for &b in others {
                            edge_conflicts.push(EdgeConflict {
                                a: a.min(b),
                                b: a.max(b),
                                timestep: t,
                            });
                        }
                    }
                }
            }
        }
    }
    vertex_conflicts.sort_unstable();
    edge_conflicts.sort_unstable();
    let mut report = ConflictReport {
        vertex_conflicts,
        edge_conflicts,
        colliding_pairs: 0,
    };
    report.colliding_pairs = report.pairs().len();
    report
}

/// Number of unordered agent pairs in conflict.
pub fn colliding_pairs(plan: &Plan) -> usize {
    detect_conflicts(plan).colliding_pairs
}

/// Cost of one path: the timestep after which the agent stays at `goal`.
pub fn path_cost(path: &[Cell], goal: Cell, agent: usize) -> Result<usize> {
    let end = *path.last().ok_or(Error::EmptyPath { agent })?;
    if end != goal {
        return Err(Error::IncompletePath { agent, end, goal });
    }
    Ok(path.iter().rposition(|&c| c != goal).map_or(0, |t| t + 1))
}

/// Sum over agents of the last timestep at which the agent is not yet
/// resting permanently at its goal.
pub fn sum_of_costs(plan: &Plan, goals: &[Cell]) -> Result<usize> {
    if plan.num_agents() != goals.len() {
        return Err(Error::AgentCountMismatch {
            expected: goals.len(),
            got: plan.num_agents(),
        });
    }
    plan.paths
        .iter()
        .zip(goals)
        .enumerate()
        .map(|(i, (p, &g))| path_cost(p, g, i))
        .sum()
}

/// Checks that every path begins at its start, moves only along valid
/// actions, and never enters an obstacle.
pub fn validate_paths(instance: &Instance, plan: &Plan) -> Result<()> {
    if plan.num_agents() != instance.num_agents() {
        return Err(Error::AgentCountMismatch {
            expected: instance.num_agents(),
            got: plan.num_agents(),
        });
    }
    let map = instance.map();
    for (agent, path) in plan.paths.iter().enumerate() {
        let first = *path.first().ok_or(Error::EmptyPath { agent })?;
        let start = instance.starts()[agent];
        if first != start {
            return Err(Error::WrongStart {
                agent,
                expected: start,
                got: first,
            });
        }
        if !map.is_free(first) {
            return Err(Error::BlockedCell(first));
        }
        for (t, w) in path.windows(2).enumerate() {
            let valid = map.is_free(w[1])
                && Action::between(w[0], w[1])
                    .map(|a| apply_action(w[0], a, map) == MoveOutcome::Moved(w[1]))
                    .unwrap_or(false);
            if !valid {
                return Err(Error::InvalidMove {
                    agent,
                    timestep: t,
                    from: w[0],
                    to: w[1],
                });
            }
        }
    }
    Ok(())
}

/// A solution is feasible when its paths are valid, each ends at its goal
/// and no two agents conflict.
pub fn is_feasible(instance: &Instance, plan: &Plan) -> bool {
    validate_paths(instance, plan).is_ok()
        && plan
            .paths
            .iter()
            .zip(instance.goals())
            .all(|(p, g)| p.last() == Some(g))
        && detect_conflicts(plan).is_collision_free()
}
