//! Draft generation, preprocessing, repair and selection, with retries over
//! rounds. The same loop drives the prioritized-planning multistart baseline.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::d3pm::{sample, ActionTensor, DiffusionSchedule, Predictor};
use crate::error::{Error, Result};
use crate::grid::{apply_action, is_feasible, sum_of_costs, Instance, MoveOutcome, Plan};
use crate::lns2::{lns2_repair, pp_init, RepairConfig};
use crate::seed::derive_seed;
use crate::single_agent::{bfs_distance_map, shortest_suffix_with};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    Neural,
    #[default]
    Heuristic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Drafts sampled per round.
    pub drafts_per_round: usize,
    pub max_rounds: usize,
    /// Overall wall-clock budget in seconds, generation and repair included.
    pub time_budget_s: f64,
    /// Cap on a single candidate's repair, in seconds.
    pub repair_budget_s: f64,
    pub max_candidates: usize,
    pub predictor: PredictorKind,
    /// Weight file for the neural predictor; random initialization if absent.
    pub weights: Option<PathBuf>,
    pub diffusion_steps: usize,
    pub neighborhood_size: usize,
    /// Run the candidates of a round concurrently.
    pub parallel: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            drafts_per_round: 4,
            max_rounds: 5,
            time_budget_s: 180.0,
            repair_budget_s: 120.0,
            max_candidates: 20,
            predictor: PredictorKind::Heuristic,
            weights: None,
            diffusion_steps: 100,
            neighborhood_size: 8,
            parallel: true,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.drafts_per_round == 0 || self.max_rounds == 0 || self.max_candidates == 0 {
            return bad("drafts_per_round, max_rounds and max_candidates must be at least 1");
        }
        if !(self.time_budget_s.is_finite() && self.time_budget_s > 0.0) {
            return bad("time_budget_s must be positive");
        }
        if !(self.repair_budget_s.is_finite() && self.repair_budget_s > 0.0) {
            return bad("repair_budget_s must be positive");
        }
        if self.diffusion_steps == 0 || self.neighborhood_size == 0 {
            return bad("diffusion_steps and neighborhood_size must be at least 1");
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn time_budget(&self) -> Duration {
        Duration::from_secs_f64(self.time_budget_s)
    }

    pub fn repair_budget(&self) -> Duration {
        Duration::from_secs_f64(self.repair_budget_s)
    }

    /// Seed of candidate `index` in round `round`.
    pub fn candidate_seed(&self, round: usize, index: usize) -> u64 {
        derive_seed(self.seed, &[round as u64, index as u64])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Success,
    Failure,
}

/// Outcome of one draft-and-repair attempt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub round: usize,
    pub index: usize,
    pub seed: u64,
    pub feasible: bool,
    pub soc: Option<usize>,
    /// Colliding pairs of the preprocessed draft, then after every accepted
    /// repair iteration.
    pub accepted_pairs: Vec<usize>,
    pub iterations: usize,
    /// Set when the candidate was skipped or its generation or repair failed.
    pub error: Option<String>,
    #[serde(skip)]
    pub plan: Option<Plan>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: Status,
    #[serde(skip)]
    pub plan: Option<Plan>,
    pub soc: Option<usize>,
    pub rounds: usize,
    pub candidates: usize,
    pub runtime_s: f64,
    pub log: Vec<CandidateRecord>,
}

impl SolveResult {
    pub fn is_success(&self) -> bool {
        self.status == Status::Success
    }
}

/// Turns a one-hot draft into goal-terminated paths. Invalid actions count
/// as staying. An agent that finishes resting on its goal is cut at its last
/// arrival; any other agent has its trailing idle steps dropped and a
/// shortest path to the goal appended.
pub fn preprocess_draft(draft: &ActionTensor, instance: &Instance) -> Result<Plan> {
    if draft.agents() != instance.num_agents() {
        return Err(Error::AgentCountMismatch {
            expected: instance.num_agents(),
            got: draft.agents(),
        });
    }
    let map = instance.map();
    let actions = draft.argmax_actions();
    let mut paths = Vec::with_capacity(instance.num_agents());
    for (agent, row) in actions.iter().enumerate() {
        let goal = instance.goals()[agent];
        let mut pos = instance.starts()[agent];
        let mut path = vec![pos];
        for &action in row {
            if let MoveOutcome::Moved(next) = apply_action(pos, action, map) {
                pos = next;
            }
            path.push(pos);
        }
        if pos == goal {
            let keep = path.iter().rposition(|&c| c != goal).map_or(1, |t| t + 2);
            path.truncate(keep);
        } else {
            while path.len() > 1 && path[path.len() - 2] == pos {
                path.pop();
            }
            let field = bfs_distance_map(map, goal)?;
            path.extend(shortest_suffix_with(map, &field, pos)?);
        }
        paths.push(path);
    }
    Ok(Plan::new(paths))
}

/// Source of initial plans for one candidate.
trait DraftSource: Sync {
    fn draft(&self, instance: &Instance, seed: u64, deadline: Instant) -> Result<Plan>;
}

struct DiffusionDrafts<'a, P: ?Sized> {
    predictor: &'a P,
    schedule: DiffusionSchedule,
}

impl<P: Predictor + Sync + ?Sized> DraftSource for DiffusionDrafts<'_, P> {
    fn draft(&self, instance: &Instance, seed: u64, _deadline: Instant) -> Result<Plan> {
        let draft = sample(self.predictor, instance, &self.schedule, seed)?;
        preprocess_draft(&draft, instance)
    }
}

/// Prioritized planning under a random priority order.
struct PriorityDrafts;

impl DraftSource for PriorityDrafts {
    fn draft(&self, instance: &Instance, seed: u64, deadline: Instant) -> Result<Plan> {
        let mut order: Vec<usize> = (0..instance.num_agents()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        pp_init(instance, &order, Some(deadline))
    }
}

fn run_candidate(
    source: &dyn DraftSource,
    instance: &Instance,
    cfg: &PipelineConfig,
    repair_cap: Duration,
    deadline: Instant,
    round: usize,
    index: usize,
) -> CandidateRecord {
    let seed = cfg.candidate_seed(round, index);
    let mut record = CandidateRecord {
        round,
        index,
        seed,
        feasible: false,
        soc: None,
        accepted_pairs: Vec::new(),
        iterations: 0,
        error: None,
        plan: None,
    };
    let mut attempt = || -> Result<()> {
        if Instant::now() >= deadline {
            return Err(Error::Timeout);
        }
        let draft = source.draft(instance, seed, deadline)?;
        let remaining = deadline.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            return Err(Error::Timeout);
        }
        let repair_cfg = RepairConfig {
            neighborhood_size: cfg.neighborhood_size,
            ..RepairConfig::default()
        }
        .with_seed(seed)
        .with_budget(repair_cap.min(remaining));
        let (plan, stats) = lns2_repair(draft, instance, &repair_cfg)?;
        record.accepted_pairs = stats.colliding_pairs;
        record.iterations = stats.iterations;
        if stats.success && is_feasible(instance, &plan) {
            record.feasible = true;
            record.soc = Some(sum_of_costs(&plan, instance.goals())?);
            record.plan = Some(plan);
        }
        Ok(())
    };
    if let Err(e) = attempt() {
        record.error = Some(e.to_string());
    }
    record
}

/// Shared round loop: stops at the first round with a feasible candidate,
/// after `max_rounds`, at the candidate cap, or when the budget runs out.
fn solve_rounds(
    instance: &Instance,
    cfg: &PipelineConfig,
    source: &dyn DraftSource,
    drafts_per_round: usize,
    repair_cap: Duration,
) -> Result<SolveResult> {
    cfg.validate()?;
    let started = Instant::now();
    let deadline = started + cfg.time_budget();
    let mut log = Vec::new();
    let mut rounds = 0;
    let mut best: Option<(usize, usize)> = None;
    while rounds < cfg.max_rounds && log.len() < cfg.max_candidates && Instant::now() < deadline {
        let round = rounds;
        rounds += 1;
        let count = drafts_per_round.min(cfg.max_candidates - log.len());
        let run = |index| run_candidate(source, instance, cfg, repair_cap, deadline, round, index);
        let records: Vec<CandidateRecord> = if cfg.parallel {
            (0..count).into_par_iter().map(run).collect()
        } else {
            (0..count).map(run).collect()
        };
        let offset = log.len();
        log.extend(records);
        best = log[offset..]
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.soc.map(|soc| (soc, offset + i)))
            .min();
        if best.is_some() {
            break;
        }
    }
    let candidates = log.len();
    let (status, plan, soc) = match best {
        Some((soc, at)) => (Status::Success, log[at].plan.clone(), Some(soc)),
        None => (Status::Failure, None, None),
    };
    Ok(SolveResult {
        status,
        plan,
        soc,
        rounds,
        candidates,
        runtime_s: started.elapsed().as_secs_f64(),
        log,
    })
}

/// Diffusion warm starts repaired by LNS2.
pub fn difflns_solve<P: Predictor + Sync + ?Sized>(
    instance: &Instance,
    predictor: &P,
    cfg: &PipelineConfig,
) -> Result<SolveResult> {
    let source = DiffusionDrafts {
        predictor,
        schedule: DiffusionSchedule::cosine(cfg.diffusion_steps)?,
    };
    solve_rounds(instance, cfg, &source, cfg.drafts_per_round, cfg.repair_budget())
}

/// The same loop with prioritized-planning drafts under fresh random orders.
pub fn pp_multistart_solve(instance: &Instance, cfg: &PipelineConfig) -> Result<SolveResult> {
    solve_rounds(instance, cfg, &PriorityDrafts, cfg.drafts_per_round, cfg.repair_budget())
}

/// Plain LNS2: one prioritized-planning start repaired for the whole budget.
pub fn lns2_solve(instance: &Instance, cfg: &PipelineConfig) -> Result<SolveResult> {
    let single = PipelineConfig {
        max_rounds: 1,
        ..cfg.clone()
    };
    solve_rounds(instance, &single, &PriorityDrafts, 1, cfg.time_budget())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::HeuristicPredictor;
    use crate::grid::{detect_conflicts, Action, Cell, GridMap};
    use crate::instance_gen::{generate_map, sample_instance, SceneSpec};
    use std::sync::Arc;

    fn c(r: usize, col: usize) -> Cell {
        Cell::new(r, col)
    }

    fn corridor() -> Instance {
        let map = Arc::new(GridMap::from_rows(&["......", "..@@..", "......"]).unwrap());
        Instance::new(map, vec![c(0, 0)], vec![c(2, 5)], 10).unwrap()
    }

    fn draft(actions: &[Action], horizon: usize) -> ActionTensor {
        let mut row = actions.to_vec();
        row.resize(horizon, Action::Stay);
        ActionTensor::from_actions(&[row]).unwrap()
    }

    #[test]
    fn shortest_draft_is_cut_at_arrival() {
        use Action::*;
        let inst = corridor();
        let d = draft(&[Right, Right, Right, Right, Right, Down, Down], 10);
        let plan = preprocess_draft(&d, &inst).unwrap();
        assert_eq!(plan.paths[0].len(), 8);
        assert_eq!(*plan.paths[0].last().unwrap(), c(2, 5));
    }

    #[test]
    fn idle_draft_becomes_shortest_path() {
        let inst = corridor();
        let plan = preprocess_draft(&draft(&[], 10), &inst).unwrap();
        assert_eq!(plan.paths[0][0], c(0, 0));
        assert_eq!(plan.paths[0].len(), 8);
    }

    #[test]
    fn detour_adds_suffix_from_last_cell() {
        use Action::*;
        let inst = corridor();
        // up from the corner is invalid and counts as a stay, then two steps
        // down reach (2,0) at timestep 3 before idling
        let d = draft(&[Up, Down, Down], 10);
        let plan = preprocess_draft(&d, &inst).unwrap();
        let bfs_from_detour = 5;
        assert_eq!(plan.paths[0].len() - 1, 3 + bfs_from_detour);
        assert_eq!(plan.paths[0][3], c(2, 0));
    }

    #[test]
    fn single_agent_succeeds_in_first_round() {
        let inst = corridor();
        let cfg = PipelineConfig::default();
        let res = difflns_solve(&inst, &HeuristicPredictor::default(), &cfg).unwrap();
        assert!(res.is_success());
        assert_eq!(res.rounds, 1);
        assert!((1..=4).contains(&res.candidates));
        assert_eq!(res.soc, Some(7));
        let res = pp_multistart_solve(&inst, &cfg).unwrap();
        assert_eq!(res.soc, Some(7));
        assert_eq!(lns2_solve(&inst, &cfg).unwrap().soc, Some(7));
    }

    #[test]
    fn exhausted_budget_fails() {
        let map = Arc::new(GridMap::from_rows(&["...", "...", "@@@"]).unwrap());
        let inst = Instance::new(map, vec![c(1, 0), c(1, 2)], vec![c(1, 2), c(1, 0)], 8).unwrap();
        let cfg = PipelineConfig {
            time_budget_s: 1e-9,
            ..PipelineConfig::default()
        };
        let res = pp_multistart_solve(&inst, &cfg).unwrap();
        assert_eq!(res.status, Status::Failure);
        assert!(res.plan.is_none());
    }

    #[test]
    fn unrepairable_candidates_use_every_round() {
        // a head-on swap in a one-row corridor has no solution
        let map = Arc::new(GridMap::from_rows(&["...."]).unwrap());
        let inst = Instance::new(map, vec![c(0, 0), c(0, 3)], vec![c(0, 3), c(0, 0)], 8).unwrap();
        let cfg = PipelineConfig {
            repair_budget_s: 0.01,
            ..PipelineConfig::default()
        };
        let res = difflns_solve(&inst, &HeuristicPredictor::default(), &cfg).unwrap();
        assert_eq!(res.status, Status::Failure);
        assert_eq!(res.rounds, 5);
        assert_eq!(res.candidates, 20);
        assert!(res.log.iter().all(|r| !r.feasible));
    }

    #[test]
    fn twenty_agents_on_small_random() {
        let spec = SceneSpec::small_random().with_seed(3);
        let map = Arc::new(generate_map(&spec).unwrap());
        let horizon = crate::grid::default_horizon(&map);
        let inst = sample_instance(map, 20, horizon, 11).unwrap();
        let res = difflns_solve(&inst, &HeuristicPredictor::default(), &PipelineConfig::default()).unwrap();
        assert!(res.is_success());
        let plan = res.plan.as_ref().unwrap();
        assert!(is_feasible(&inst, plan));
        assert_eq!(detect_conflicts(plan).colliding_pairs, 0);
        let last_round = res.rounds - 1;
        let min = res
            .log
            .iter()
            .filter(|r| r.round == last_round)
            .filter_map(|r| r.soc)
            .min();
        assert_eq!(res.soc, min);
        assert_eq!(Some(sum_of_costs(plan, inst.goals()).unwrap()), res.soc);
    }

    #[test]
    fn candidate_cap_and_reproducibility() {
        let map = Arc::new(GridMap::from_rows(&["...", "...", "@@@"]).unwrap());
        let inst = Instance::new(map, vec![c(1, 0), c(1, 2)], vec![c(1, 2), c(1, 0)], 8).unwrap();
        let cfg = PipelineConfig {
            drafts_per_round: 7,
            max_rounds: 5,
            max_candidates: 10,
            seed: 5,
            ..PipelineConfig::default()
        };
        let a = pp_multistart_solve(&inst, &cfg).unwrap();
        let b = pp_multistart_solve(&inst, &cfg).unwrap();
        assert!(a.candidates <= 10);
        let seeds = |r: &SolveResult| r.log.iter().map(|c| (c.seed, c.soc)).collect::<Vec<_>>();
        assert_eq!(seeds(&a), seeds(&b));
    }
}
