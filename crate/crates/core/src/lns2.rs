//! Prioritized-planning initialization and the LNS2 repair loop.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{detect_conflicts, validate_paths, ConflictReport, Instance, Plan};
use crate::single_agent::{sipps, SafeIntervalTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepairConfig {
    pub neighborhood_size: usize,
    /// Wall-clock budget, including interval-table construction.
    pub time_budget: Duration,
    /// Initial weights of the collision-walk and uniform-random destroy
    /// strategies.
    pub strategy_weights: [f64; 2],
    pub seed: u64,
    /// Optional hard cap on iterations, useful for reproducible runs.
    pub max_iterations: Option<usize>,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self {
            neighborhood_size: 8,
            time_budget: Duration::from_secs(120),
            strategy_weights: [1.0, 1.0],
            seed: 0,
            max_iterations: None,
        }
    }
}

impl RepairConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_budget(mut self, budget: Duration) -> Self {
        self.time_budget = budget;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.neighborhood_size == 0 {
            return Err(Error::Config("neighborhood size must be at least 1".into()));
        }
        if self.time_budget.is_zero() {
            return Err(Error::Config("repair budget must be positive".into()));
        }
        if self.strategy_weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || self.strategy_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Config("strategy weights must be non-negative with a positive sum".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RepairStats {
    pub iterations: usize,
    /// Colliding pairs of the initial plan followed by one entry per
    /// accepted iteration.
    pub colliding_pairs: Vec<usize>,
    pub elapsed: Duration,
    pub success: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DestroyStrategy {
    CollisionWalk,
    Random,
}

impl DestroyStrategy {
    fn slot(self) -> usize {
        match self {
            DestroyStrategy::CollisionWalk => 0,
            DestroyStrategy::Random => 1,
        }
    }
}

/// Adaptive choice between destroy strategies. Only the weight of the
/// strategy that was used is updated.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborhoodSelector {
    weights: [f64; 2],
}

impl Default for NeighborhoodSelector {
    fn default() -> Self {
        Self { weights: [1.0, 1.0] }
    }
}

impl NeighborhoodSelector {
    pub fn new(weights: [f64; 2]) -> Self {
        Self { weights }
    }

    pub fn weight(&self, strategy: DestroyStrategy) -> f64 {
        self.weights[strategy.slot()]
    }

    pub fn choose<R: Rng>(&self, rng: &mut R) -> DestroyStrategy {
        let total = self.weights[0] + self.weights[1];
        if rng.random::<f64>() * total < self.weights[0] {
            DestroyStrategy::CollisionWalk
        } else {
            DestroyStrategy::Random
        }
    }

    pub fn update(&mut self, strategy: DestroyStrategy, improved: bool) {
        let w = &mut self.weights[strategy.slot()];
        *w = 0.99 * *w + if improved { 1.0 } else { 0.0 };
    }
}

/// Picks `min(size, num_agents)` distinct agents to replan.
pub fn select_neighborhood<R: Rng>(
    report: &ConflictReport,
    num_agents: usize,
    size: usize,
    strategy: DestroyStrategy,
    rng: &mut R,
) -> Vec<usize> {
    let size = size.min(num_agents);
    if size == num_agents {
        return (0..num_agents).collect();
    }
    let pairs = report.pairs();
    let mut chosen = BTreeSet::new();
    if strategy == DestroyStrategy::CollisionWalk && !pairs.is_empty() {
        let mut graph: HashMap<usize, Vec<usize>> = HashMap::new();
        for &(a, b) in &pairs {
            graph.entry(a).or_default().push(b);
            graph.entry(b).or_default().push(a);
        }
        let &(a, b) = pairs.choose(rng).expect("non-empty");
        chosen.insert(a);
        if size > 1 {
            chosen.insert(b);
        }
        let mut current = b;
        let mut stalled = 0;
        while chosen.len() < size && stalled < 4 * size {
            let next = *graph[&current].choose(rng).expect("node has an edge");
            if chosen.insert(next) {
                stalled = 0;
            } else {
                stalled += 1;
            }
            current = next;
        }
    }
    if chosen.len() < size {
        let mut rest: Vec<usize> = (0..num_agents).filter(|a| !chosen.contains(a)).collect();
        rest.shuffle(rng);
        chosen.extend(rest.into_iter().take(size - chosen.len()));
    }
    chosen.into_iter().collect()
}

/// Plans agents one by one in `order`, each against all earlier paths.
pub fn pp_init(instance: &Instance, order: &[usize], deadline: Option<Instant>) -> Result<Plan> {
    let n = instance.num_agents();
    let mut seen = vec![false; n];
    if order.len() != n || order.iter().any(|&a| a >= n || std::mem::replace(&mut seen[a], true)) {
        return Err(Error::Config("priority order must be a permutation of the agents".into()));
    }
    let map = instance.map();
    let mut table = SafeIntervalTable::new(map);
    let mut paths = vec![Vec::new(); n];
    for &agent in order {
        let found = sipps(map, instance.starts()[agent], instance.goals()[agent], &table, deadline)?;
        table.insert_path(agent, &found.path);
        paths[agent] = found.path;
    }
    Ok(Plan::new(paths))
}

/// Runs LNS2 from `plan` until it is collision-free or the budget runs out.
/// Returns the best plan found (the last accepted one).
pub fn lns2_repair(plan: Plan, instance: &Instance, cfg: &RepairConfig) -> Result<(Plan, RepairStats)> {
    cfg.validate()?;
    let started = Instant::now();
    let deadline = started + cfg.time_budget;
    validate_paths(instance, &plan)?;
    for (agent, path) in plan.paths.iter().enumerate() {
        let goal = instance.goals()[agent];
        let end = *path.last().expect("validated non-empty");
        if end != goal {
            return Err(Error::IncompletePath { agent, end, goal });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut selector = NeighborhoodSelector::new(cfg.strategy_weights);
    let mut current = plan;
    let mut report = detect_conflicts(&current);
    let mut stats = RepairStats {
        colliding_pairs: vec![report.colliding_pairs],
        ..RepairStats::default()
    };
    let map = instance.map();
    let n = instance.num_agents();

    while report.colliding_pairs > 0 {
        if Instant::now() >= deadline || cfg.max_iterations.is_some_and(|m| stats.iterations >= m) {
            break;
        }
        let strategy = selector.choose(&mut rng);
        let mut neighborhood = select_neighborhood(&report, n, cfg.neighborhood_size, strategy, &mut rng);
        neighborhood.shuffle(&mut rng);

        let mut in_hood = vec![false; n];
        for &a in &neighborhood {
            in_hood[a] = true;
        }
        let mut table = SafeIntervalTable::from_paths(
            map,
            (0..n)
                .filter(|&a| !in_hood[a])
                .map(|a| (a, current.paths[a].as_slice())),
        );
        let mut candidate = current.clone();
        let mut timed_out = false;
        for &agent in &neighborhood {
            match sipps(map, instance.starts()[agent], instance.goals()[agent], &table, Some(deadline)) {
                Ok(found) => {
                    table.insert_path(agent, &found.path);
                    candidate.paths[agent] = found.path;
                }
                Err(Error::Timeout) => {
                    timed_out = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if timed_out {
            break;
        }
        stats.iterations += 1;

        let new_report = detect_conflicts(&candidate);
        let improved = new_report.colliding_pairs < report.colliding_pairs;
        selector.update(strategy, improved);
        if new_report.colliding_pairs <= report.colliding_pairs {
            current = candidate;
            report = new_report;
            stats.colliding_pairs.push(report.colliding_pairs);
        }
    }
    stats.success = report.colliding_pairs == 0;
    stats.elapsed = started.elapsed();
    Ok((current, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{is_feasible, Cell, GridMap};
    use std::sync::Arc;

    fn c(r: usize, col: usize) -> Cell {
        Cell::new(r, col)
    }

    fn instance(rows: &[&str], starts: Vec<Cell>, goals: Vec<Cell>) -> Instance {
        let map = Arc::new(GridMap::from_rows(rows).unwrap());
        Instance::with_default_horizon(map, starts, goals).unwrap()
    }

    #[test]
    fn pp_single_agent_is_shortest() {
        let inst = instance(&["....", ".@@.", "...."], vec![c(0, 0)], vec![c(2, 3)]);
        let plan = pp_init(&inst, &[0], None).unwrap();
        assert_eq!(plan.paths[0].len(), 6);
    }

    #[test]
    fn pp_disjoint_corridors() {
        let inst = instance(&["....", "@@@@", "...."], vec![c(0, 0), c(2, 3)], vec![c(0, 3), c(2, 0)]);
        let plan = pp_init(&inst, &[0, 1], None).unwrap();
        assert_eq!(plan.paths[0].len(), 4);
        assert_eq!(plan.paths[1].len(), 4);
        assert_eq!(detect_conflicts(&plan).colliding_pairs, 0);
    }

    #[test]
    fn pp_forced_swap_in_corridor() {
        // two agents must cross in a one-wide corridor
        let rows = ["@@@@", "....", "@@@@", "@@@@"];
        let inst = instance(&rows, vec![c(1, 0), c(1, 3)], vec![c(1, 3), c(1, 0)]);
        let plan = pp_init(&inst, &[0, 1], None).unwrap();
        assert_eq!(detect_conflicts(&plan).colliding_pairs, 1);
        assert!(pp_init(&inst, &[0, 0], None).is_err());
    }

    #[test]
    fn small_population_takes_everyone() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report = ConflictReport::default();
        assert_eq!(
            select_neighborhood(&report, 5, 8, DestroyStrategy::Random, &mut rng),
            vec![0, 1, 2, 3, 4]
        );
    }

    #[test]
    fn single_pair_walk_returns_the_pair() {
        let plan = Plan::new(vec![
            vec![c(0, 0), c(0, 1)],
            vec![c(0, 1), c(0, 0)],
            vec![c(3, 3)],
            vec![c(4, 4)],
        ]);
        let report = detect_conflicts(&plan);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hood = select_neighborhood(&report, 4, 2, DestroyStrategy::CollisionWalk, &mut rng);
            assert_eq!(hood, vec![0, 1]);
        }
    }

    #[test]
    fn walk_pads_with_random_agents() {
        let plan = Plan::new(vec![
            vec![c(0, 0), c(0, 1)],
            vec![c(0, 1), c(0, 0)],
            vec![c(3, 3)],
            vec![c(4, 4)],
            vec![c(5, 5)],
        ]);
        let report = detect_conflicts(&plan);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hood = select_neighborhood(&report, 5, 3, DestroyStrategy::CollisionWalk, &mut rng);
        assert_eq!(hood.len(), 3);
        assert!(hood.contains(&0) && hood.contains(&1));
    }

    #[test]
    fn weight_update_rewards_improvement() {
        let mut selector = NeighborhoodSelector::default();
        for _ in 0..10 {
            selector.update(DestroyStrategy::CollisionWalk, true);
            selector.update(DestroyStrategy::Random, false);
        }
        let mut collision = 1.0f64;
        let mut random = 1.0f64;
        for _ in 0..10 {
            collision = 0.99 * collision + 1.0;
            random *= 0.99;
        }
        assert!((selector.weight(DestroyStrategy::CollisionWalk) - collision).abs() < 1e-12);
        assert!((selector.weight(DestroyStrategy::Random) - random).abs() < 1e-12);
        assert!(collision > random);
    }

    #[test]
    fn collision_free_input_is_unchanged() {
        let inst = instance(&["...", "...", "..."], vec![c(0, 0), c(2, 2)], vec![c(0, 2), c(2, 0)]);
        let plan = pp_init(&inst, &[0, 1], None).unwrap();
        let (out, stats) = lns2_repair(plan.clone(), &inst, &RepairConfig::default()).unwrap();
        assert_eq!(out, plan);
        assert_eq!(stats.iterations, 0);
        assert!(stats.success);
    }

    #[test]
    fn swap_with_bypass_is_repaired() {
        // the top row is the bypass
        let rows = ["...", "...", "@@@"];
        let inst = instance(&rows, vec![c(1, 0), c(1, 2)], vec![c(1, 2), c(1, 0)]);
        let plan = Plan::new(vec![
            vec![c(1, 0), c(1, 1), c(1, 2)],
            vec![c(1, 2), c(1, 1), c(1, 0)],
        ]);
        assert!(detect_conflicts(&plan).colliding_pairs > 0);
        for seed in 0..100 {
            let cfg = RepairConfig::default().with_seed(seed);
            let (out, stats) = lns2_repair(plan.clone(), &inst, &cfg).unwrap();
            assert!(stats.success, "seed {seed}");
            assert!(stats.iterations <= 5, "seed {seed}: {}", stats.iterations);
            assert!(is_feasible(&inst, &out));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let inst = instance(&["..."], vec![c(0, 0)], vec![c(0, 2)]);
        let plan = pp_init(&inst, &[0], None).unwrap();
        let cfg = RepairConfig::default().with_budget(Duration::ZERO);
        assert!(matches!(lns2_repair(plan.clone(), &inst, &cfg), Err(Error::Config(_))));
        let cfg = RepairConfig {
            neighborhood_size: 0,
            ..RepairConfig::default()
        };
        assert!(lns2_repair(plan, &inst, &cfg).is_err());
    }
}
