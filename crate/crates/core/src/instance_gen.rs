//! Procedural benchmark maps (random, maze, room, warehouse) and random
//! start/goal assignment. Everything is a pure function of the scene description and seed.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridMap, Instance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneFamily {
    Random,
    Maze,
    Room,
    Warehouse,
}

impl SceneFamily {
    pub fn name(self) -> &'static str {
        match self {
            SceneFamily::Random => "random",
            SceneFamily::Maze => "maze",
            SceneFamily::Room => "room",
            SceneFamily::Warehouse => "warehouse",
        }
    }
}

/// Obstacle density target: a fixed fraction, or a `[lo, hi]` range sampled
/// uniformly per map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DensityTarget {
    Fixed(f64),
    Range([f64; 2]),
}

impl DensityTarget {
    fn validate(self) -> Result<()> {
        let ok = |d: f64| (0.0..1.0).contains(&d);
        match self {
            DensityTarget::Fixed(d) if ok(d) => Ok(()),
            DensityTarget::Range([lo, hi]) if ok(lo) && ok(hi) && lo <= hi => Ok(()),
            other => Err(Error::Config(format!(
                "obstacle density must lie in [0, 1), got {other:?}"
            ))),
        }
    }

    fn resolve<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            DensityTarget::Fixed(d) => d,
            DensityTarget::Range([lo, hi]) if hi > lo => rng.random_range(lo..=hi),
            DensityTarget::Range([lo, _]) => lo,
        }
    }
}

impl From<f64> for DensityTarget {
    fn from(d: f64) -> Self {
        DensityTarget::Fixed(d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub family: SceneFamily,
    pub height: usize,
    pub width: usize,
    pub density: DensityTarget,
    #[serde(default)]
    pub agents: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(family: SceneFamily, height: usize, width: usize, density: impl Into<DensityTarget>) -> Self {
        Self {
            family,
            height,
            width,
            density: density.into(),
            agents: 0,
            seed: 0,
        }
    }

    pub fn with_agents(mut self, agents: usize) -> Self {
        self.agents = agents;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// 10x10 random map with 17.5% obstacles.
    pub fn small_random() -> Self {
        Self::new(SceneFamily::Random, 10, 10, 0.175)
    }

    pub fn medium_maze() -> Self {
        Self::new(SceneFamily::Maze, 25, 25, DensityTarget::Range([0.274, 0.365]))
    }

    pub fn medium_room() -> Self {
        Self::new(SceneFamily::Room, 23, 23, DensityTarget::Range([0.319, 0.350]))
    }

    pub fn medium_warehouse() -> Self {
        Self::new(SceneFamily::Warehouse, 25, 25, 0.346)
    }

    pub fn large_maze() -> Self {
        Self::new(SceneFamily::Maze, 33, 33, DensityTarget::Range([0.293, 0.368]))
    }
}

/// Builds a connected map for `spec`. Deterministic in `spec.seed`.
pub fn generate_map(spec: &SceneSpec) -> Result<GridMap> {
    if spec.height == 0 || spec.width == 0 {
        return Err(Error::Config("map dimensions must be positive".into()));
    }
    spec.density.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let density = spec.density.resolve(&mut rng);
    let target = (density * (spec.height * spec.width) as f64).floor() as usize;
    let map = match spec.family {
        SceneFamily::Random => {
            let mut map = GridMap::empty(spec.height, spec.width)?;
            fill_to(&mut map, target, &mut rng)?;
            map
        }
        SceneFamily::Maze => maze(spec.height, spec.width, target, &mut rng)?,
        SceneFamily::Room => rooms(spec.height, spec.width, target, &mut rng)?,
        SceneFamily::Warehouse => warehouse(spec.height, spec.width, density)?,
    };
    if !map.is_connected() {
        return Err(Error::Generation("free space is not connected".into()));
    }
    if spec.agents > map.free_count() {
        return Err(Error::Generation(format!(
            "{} agents do not fit in {} free cells",
            spec.agents,
            map.free_count()
        )));
    }
    Ok(map)
}

/// Adds random obstacles until `target` are present, skipping any cell
/// whose removal would disconnect the free space.
fn fill_to<R: Rng>(map: &mut GridMap, target: usize, rng: &mut R) -> Result<()> {
    if map.obstacle_count() >= target {
        return Ok(());
    }
    let mut candidates: Vec<Cell> = map.free_cells().collect();
    candidates.shuffle(rng);
    for cell in candidates {
        if map.obstacle_count() >= target {
            break;
        }
        if map.free_count() <= 1 {
            break;
        }
        map.set_obstacle(cell, true);
        if !map.is_connected() {
            map.set_obstacle(cell, false);
        }
    }
    if map.obstacle_count() < target {
        return Err(Error::Generation(format!(
            "cannot place {target} obstacles on a {}x{} map while keeping it connected",
            map.height(),
            map.width()
        )));
    }
    Ok(())
}

/// Removes random obstacles until at most `target` remain. Never
/// disconnects a connected map.
fn erode_to<R: Rng>(map: &mut GridMap, target: usize, rng: &mut R) {
    if map.obstacle_count() <= target {
        return;
    }
    let mut walls: Vec<Cell> = (0..map.num_cells())
        .map(|i| map.cell_at(i))
        .filter(|&c| map.is_obstacle(c))
        .collect();
    walls.shuffle(rng);
    // only open walls touching free space, so nothing is ever isolated
    loop {
        let before = walls.len();
        walls.retain(|&cell| {
            if map.obstacle_count() <= target {
                return true;
            }
            let touches_free = map.neighbors(cell).next().is_some();
            if touches_free {
                map.set_obstacle(cell, false);
            }
            !touches_free
        });
        if walls.len() == before || map.obstacle_count() <= target {
            break;
        }
    }
}

fn maze<R: Rng>(height: usize, width: usize, target: usize, rng: &mut R) -> Result<GridMap> {
    if height < 3 || width < 3 {
        let mut map = GridMap::empty(height, width)?;
        fill_to(&mut map, target, rng)?;
        return Ok(map);
    }
    let mut map = GridMap::new(height, width, vec![true; height * width])?;
    let lattice_rows = (height - 1) / 2;
    let lattice_cols = (width - 1) / 2;
    let to_cell = |i: usize, j: usize| Cell::new(2 * i + 1, 2 * j + 1);
    let mut visited = vec![false; lattice_rows * lattice_cols];
    let mut stack = vec![(0usize, 0usize)];
    visited[0] = true;
    map.set_obstacle(to_cell(0, 0), false);
    while let Some(&(i, j)) = stack.last() {
        let mut next = Vec::with_capacity(4);
        if i > 0 && !visited[(i - 1) * lattice_cols + j] {
            next.push((i - 1, j));
        }
        if i + 1 < lattice_rows && !visited[(i + 1) * lattice_cols + j] {
            next.push((i + 1, j));
        }
        if j > 0 && !visited[i * lattice_cols + j - 1] {
            next.push((i, j - 1));
        }
        if j + 1 < lattice_cols && !visited[i * lattice_cols + j + 1] {
            next.push((i, j + 1));
        }
        match next.as_slice() {
            [] => {
                stack.pop();
            }
            options => {
                let (ni, nj) = options[rng.random_range(0..options.len())];
                visited[ni * lattice_cols + nj] = true;
                let (a, b) = (to_cell(i, j), to_cell(ni, nj));
                map.set_obstacle(Cell::new((a.row + b.row) / 2, (a.col + b.col) / 2), false);
                map.set_obstacle(b, false);
                stack.push((ni, nj));
            }
        }
    }
    erode_to(&mut map, target, rng);
    fill_to(&mut map, target, rng)?;
    Ok(map)
}

fn rooms<R: Rng>(height: usize, width: usize, target: usize, rng: &mut R) -> Result<GridMap> {
    const PERIOD: usize = 6;
    let mut map = GridMap::empty(height, width)?;
    let wall_rows: Vec<usize> = (PERIOD - 1..height.saturating_sub(1)).step_by(PERIOD).collect();
    let wall_cols: Vec<usize> = (PERIOD - 1..width.saturating_sub(1)).step_by(PERIOD).collect();
    for &r in &wall_rows {
        for c in 0..width {
            map.set_obstacle(Cell::new(r, c), true);
        }
    }
    for &c in &wall_cols {
        for r in 0..height {
            map.set_obstacle(Cell::new(r, c), true);
        }
    }
    // one door per wall segment between two adjacent rooms
    let spans = |walls: &[usize], len: usize| -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut lo = 0;
        for &w in walls {
            out.push((lo, w));
            lo = w + 1;
        }
        out.push((lo, len));
        out
    };
    for &r in &wall_rows {
        for (lo, hi) in spans(&wall_cols, width) {
            if hi > lo {
                map.set_obstacle(Cell::new(r, rng.random_range(lo..hi)), false);
            }
        }
    }
    for &c in &wall_cols {
        for (lo, hi) in spans(&wall_rows, height) {
            if hi > lo {
                map.set_obstacle(Cell::new(rng.random_range(lo..hi), c), false);
            }
        }
    }
    if !map.is_connected() {
        return Err(Error::Generation("room layout is disconnected".into()));
    }
    erode_to(&mut map, target, rng);
    fill_to(&mut map, target, rng)?;
    Ok(map)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ShelfTemplate {
    row_margin: usize,
    col_margin: usize,
    shelf_len: usize,
    gap: usize,
    period: usize,
    depth: usize,
}

impl ShelfTemplate {
    fn for_each_shelf_cell(&self, height: usize, width: usize, mut f: impl FnMut(Cell)) {
        let mut r = self.row_margin;
        while r + self.depth <= height.saturating_sub(self.row_margin) {
            for dr in 0..self.depth {
                let mut c = self.col_margin;
                while c + self.col_margin < width {
                    let end = (c + self.shelf_len).min(width - self.col_margin);
                    for cc in c..end {
                        f(Cell::new(r + dr, cc));
                    }
                    c = end + self.gap;
                }
            }
            r += self.period;
        }
    }

    fn count(&self, height: usize, width: usize) -> usize {
        let mut n = 0;
        self.for_each_shelf_cell(height, width, |_| n += 1);
        n
    }
}

/// Regular shelf layout whose obstacle ratio is the template closest to
/// `density` (double-depth shelves are preferred on ties).
fn warehouse(height: usize, width: usize, density: f64) -> Result<GridMap> {
    let target = (density * (height * width) as f64).round() as usize;
    let mut best: Option<(usize, ShelfTemplate)> = None;
    for (period, depth) in [(3, 2), (2, 1)] {
        for row_margin in [3, 2, 1] {
            for col_margin in [2, 1, 3] {
                for shelf_len in (2..=10).rev() {
                    for gap in [1, 2] {
                        let t = ShelfTemplate {
                            row_margin,
                            col_margin,
                            shelf_len,
                            gap,
                            period,
                            depth,
                        };
                        let err = t.count(height, width).abs_diff(target);
                        if best.is_none_or(|(e, _)| err < e) {
                            best = Some((err, t));
                        }
                    }
                }
            }
        }
    }
    let mut map = GridMap::empty(height, width)?;
    if target == 0 {
        return Ok(map);
    }
    let (_, template) = best.expect("non-empty template grid");
    template.for_each_shelf_cell(height, width, |c| map.set_obstacle(c, true));
    Ok(map)
}

/// Samples distinct starts and distinct goals with each goal in its start's
/// connected component.
pub fn sample_instance(map: Arc<GridMap>, agents: usize, horizon: usize, seed: u64) -> Result<Instance> {
    if agents > map.free_count() {
        return Err(Error::InvalidInstance(format!(
            "{agents} agents exceed {} free cells",
            map.free_count()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut free: Vec<Cell> = map.free_cells().collect();
    free.shuffle(&mut rng);
    let starts: Vec<Cell> = free[..agents].to_vec();

    let labels = map.component_labels();
    let mut by_component: std::collections::BTreeMap<usize, Vec<Cell>> = Default::default();
    for c in map.free_cells() {
        by_component.entry(labels[map.index(c)]).or_default().push(c);
    }
    for cells in by_component.values_mut() {
        cells.shuffle(&mut rng);
    }
    let mut goals = Vec::with_capacity(agents);
    for s in &starts {
        let pool = by_component
            .get_mut(&labels[map.index(*s)])
            .expect("start lies in a component");
        let g = pool.pop().ok_or_else(|| {
            Error::InvalidInstance("not enough connected free cells for goals".into())
        })?;
        goals.push(g);
    }
    Instance::new(map, starts, goals, horizon)
}

/// Global agent-density feature `log(1 + N / |V_free|)`.
pub fn density_feature(instance: &Instance) -> f64 {
    let free = instance.map().free_count().max(1) as f64;
    (1.0 + instance.num_agents() as f64 / free).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::single_agent::bfs_distance_map;

    #[test]
    fn small_random_matches_density() {
        let map = generate_map(&SceneSpec::small_random().with_seed(1)).unwrap();
        let obstacles = map.obstacle_count();
        assert!((17..=18).contains(&obstacles), "{obstacles}");
        assert!(map.is_connected());
    }

    #[test]
    fn zero_density_is_empty() {
        for family in [SceneFamily::Random, SceneFamily::Maze, SceneFamily::Room] {
            let _ = family;
        }
        let map = generate_map(&SceneSpec::new(SceneFamily::Random, 7, 9, 0.0).with_seed(3)).unwrap();
        assert_eq!(map.obstacle_count(), 0);
    }

    #[test]
    fn warehouse_hits_template_ratio() {
        let map = generate_map(&SceneSpec::medium_warehouse().with_seed(7)).unwrap();
        assert_eq!(map.obstacle_count(), 216);
        assert!((map.obstacle_density() - 0.346).abs() < 0.001);
        assert!(map.is_connected());
    }

    #[test]
    fn structured_families_are_connected_and_in_band() {
        let specs = [
            (SceneSpec::medium_maze(), 0.274, 0.365),
            (SceneSpec::medium_room(), 0.319, 0.350),
            (SceneSpec::large_maze(), 0.293, 0.368),
        ];
        for (spec, lo, hi) in specs {
            for seed in 0..5 {
                let map = generate_map(&spec.clone().with_seed(seed)).unwrap();
                assert!(map.is_connected());
                let d = map.obstacle_density();
                assert!(d >= lo - 0.01 && d <= hi + 0.01, "{spec:?} seed {seed}: {d}");
            }
        }
    }

    #[test]
    fn impossible_density_is_rejected() {
        let spec = SceneSpec::new(SceneFamily::Random, 5, 5, 0.99).with_seed(0);
        assert!(matches!(generate_map(&spec), Err(Error::Generation(_))));
        assert!(generate_map(&SceneSpec::new(SceneFamily::Random, 5, 5, 1.0)).is_err());
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = SceneSpec::medium_room().with_seed(11);
        assert_eq!(generate_map(&spec).unwrap(), generate_map(&spec).unwrap());
        let other = generate_map(&spec.clone().with_seed(12)).unwrap();
        assert_ne!(generate_map(&spec).unwrap(), other);
    }

    #[test]
    fn sample_instance_examples() {
        let map = Arc::new(GridMap::empty(3, 3).unwrap());
        let full = sample_instance(map.clone(), 9, 12, 5).unwrap();
        let mut starts = full.starts().to_vec();
        starts.sort();
        assert_eq!(starts, map.free_cells().collect::<Vec<_>>());
        assert!(sample_instance(map.clone(), 10, 12, 5).is_err());

        let one = sample_instance(map.clone(), 1, 12, 9).unwrap();
        let f = bfs_distance_map(&map, one.goals()[0]).unwrap();
        assert!(f.is_reachable(one.starts()[0]));

        let a = sample_instance(map.clone(), 4, 12, 77).unwrap();
        let b = sample_instance(map, 4, 12, 77).unwrap();
        assert_eq!(a.starts(), b.starts());
        assert_eq!(a.goals(), b.goals());
    }

    #[test]
    fn sixty_agents_on_small_random() {
        let map = Arc::new(generate_map(&SceneSpec::small_random().with_seed(2)).unwrap());
        let inst = sample_instance(map.clone(), 60, 40, 1).unwrap();
        let density = 60.0 / map.free_count() as f64;
        assert!((density - 0.723).abs() < 0.001, "{density}");
        assert_eq!(inst.num_agents(), 60);
    }

    #[test]
    fn density_feature_examples() {
        let map = Arc::new(GridMap::empty(1, 113).unwrap());
        let none = Instance::new(map.clone(), vec![], vec![], 4).unwrap();
        assert_eq!(density_feature(&none), 0.0);
        let all = sample_instance(map.clone(), 113, 4, 0).unwrap();
        assert!((density_feature(&all) - 2f64.ln()).abs() < 1e-12);
        let some = sample_instance(map, 82, 4, 0).unwrap();
        let expected = (1.0f64 + 82.0 / 113.0).ln();
        assert!((density_feature(&some) - expected).abs() < 1e-12);
        assert!((expected - 0.5455).abs() < 1e-3);
    }
}
