//! Benchmark harness: run configuration, deterministic instance streams,
//! per-instance logs, aggregated metrics and an external plan checker.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::d3pm::Predictor;
use crate::denoiser::{Denoiser, DenoiserParams, Dims, HeuristicPredictor};
use crate::error::{Error, Result};
use crate::grid::{
    default_horizon, detect_conflicts, is_feasible, parse_scenario, sum_of_costs, validate_paths, EdgeConflict,
    GridMap, Instance, Plan, VertexConflict,
};
use crate::instance_gen::{generate_map, sample_instance, SceneSpec};
use crate::pipeline::{
    difflns_solve, lns2_solve, pp_multistart_solve, CandidateRecord, PipelineConfig, PredictorKind, SolveResult,
    Status,
};
use crate::seed::derive_seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    #[default]
    Difflns,
    Lns2,
    PpMultistart,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Difflns => "difflns",
            SolverKind::Lns2 => "lns2",
            SolverKind::PpMultistart => "pp-multistart",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "difflns" => Ok(SolverKind::Difflns),
            "lns2" => Ok(SolverKind::Lns2),
            "pp-multistart" => Ok(SolverKind::PpMultistart),
            other => Err(Error::Config(format!(
                "unknown solver '{other}', expected difflns, lns2 or pp-multistart"
            ))),
        }
    }
}

/// One map family with the agent counts to run on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setting {
    pub name: String,
    pub scene: SceneSpec,
    pub agents: Vec<usize>,
    /// Overrides the run-wide instance count.
    #[serde(default)]
    pub instances: Option<usize>,
    /// Overrides the run-wide per-instance time limit.
    #[serde(default)]
    pub time_limit_s: Option<f64>,
    /// Reuse one map for every instance instead of regenerating it.
    #[serde(default)]
    pub fixed_map: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub solver: SolverKind,
    pub instances: usize,
    /// Per-instance wall-clock limit in seconds.
    pub time_limit_s: f64,
    pub jobs: usize,
    pub settings: Vec<Setting>,
    pub pipeline: PipelineConfig,
    pub out_dir: PathBuf,
    pub metrics_file: String,
    pub log_file: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            solver: SolverKind::Difflns,
            instances: 10,
            time_limit_s: 180.0,
            jobs: 1,
            settings: Vec::new(),
            pipeline: PipelineConfig::default(),
            out_dir: PathBuf::from("out"),
            metrics_file: "metrics.csv".into(),
            log_file: "runs.jsonl".into(),
        }
    }
}

impl RunConfig {
    /// Parses JSON, reporting the line and column of the first problem.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: format!("column {}: {e}", e.column()),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.settings.is_empty() {
            return bad("settings: at least one setting is required".into());
        }
        if self.jobs == 0 {
            return bad("jobs: must be at least 1".into());
        }
        for s in &self.settings {
            let instances = s.instances.unwrap_or(self.instances);
            if instances == 0 {
                return bad(format!("settings.{}.instances: must be at least 1", s.name));
            }
            let limit = s.time_limit_s.unwrap_or(self.time_limit_s);
            if !(limit.is_finite() && limit > 0.0) {
                return bad(format!("settings.{}.time_limit_s: must be positive", s.name));
            }
            if s.agents.is_empty() || s.agents.contains(&0) {
                return bad(format!("settings.{}.agents: need positive agent counts", s.name));
            }
        }
        self.pipeline.validate()
    }
}

/// Builds the configured clean-state predictor.
pub fn build_predictor(cfg: &PipelineConfig) -> Result<Box<dyn Predictor + Send + Sync>> {
    Ok(match cfg.predictor {
        PredictorKind::Heuristic => Box::new(HeuristicPredictor::default()),
        PredictorKind::Neural => {
            let params = match &cfg.weights {
                Some(path) => DenoiserParams::load(path)?,
                None => DenoiserParams::init(cfg.seed, Dims::default())?,
            };
            Box::new(Denoiser::new(params)?)
        }
    })
}

/// Runs `solver` on one instance.
pub fn solve(
    instance: &Instance,
    solver: SolverKind,
    predictor: &(dyn Predictor + Sync),
    cfg: &PipelineConfig,
) -> Result<SolveResult> {
    match solver {
        SolverKind::Difflns => difflns_solve(instance, predictor, cfg),
        SolverKind::Lns2 => lns2_solve(instance, cfg),
        SolverKind::PpMultistart => pp_multistart_solve(instance, cfg),
    }
}

/// Seed of instance `index` with `agents` agents in setting `setting`.
pub fn instance_seed(master: u64, setting: usize, agents: usize, index: usize) -> u64 {
    derive_seed(master, &[setting as u64, agents as u64, index as u64])
}

/// The instance a benchmark run would use, reproducible from its seed.
pub fn benchmark_instance(setting: &Setting, master: u64, setting_index: usize, agents: usize, index: usize) -> Result<Instance> {
    let seed = instance_seed(master, setting_index, agents, index);
    let map_seed = if setting.fixed_map {
        derive_seed(master, &[setting_index as u64])
    } else {
        derive_seed(seed, &[0])
    };
    let map = Arc::new(generate_map(&setting.scene.clone().with_seed(map_seed))?);
    let horizon = default_horizon(&map);
    sample_instance(map, agents, horizon, derive_seed(seed, &[1]))
}

/// One line of the per-instance log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub setting: String,
    pub family: String,
    pub agents: usize,
    pub index: usize,
    pub seed: u64,
    pub solver: String,
    pub status: Status,
    pub soc: Option<usize>,
    pub runtime_s: f64,
    pub candidates: usize,
    pub rounds: usize,
    /// Success re-checked independently of the solver.
    pub validated: bool,
    pub candidate_log: Vec<CandidateRecord>,
}

/// One row of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub setting: String,
    pub family: String,
    #[serde(rename = "N")]
    pub agents: usize,
    pub instances: usize,
    #[serde(rename = "SR")]
    pub success_rate: f64,
    /// Mean over successful instances only.
    #[serde(rename = "mean_SOC")]
    pub mean_soc: Option<f64>,
    /// Mean over all instances, failures included.
    pub mean_runtime_s: f64,
    pub mean_candidates: f64,
}

/// Groups records by setting and agent count, in order of first appearance.
pub fn aggregate(records: &[InstanceRecord]) -> Vec<MetricsRow> {
    let mut order: Vec<(String, usize)> = Vec::new();
    let mut groups: BTreeMap<(String, usize), Vec<&InstanceRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.setting.clone(), r.agents);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let n = rs.len() as f64;
            let socs: Vec<f64> = rs
                .iter()
                .filter(|r| r.status == Status::Success)
                .filter_map(|r| r.soc.map(|s| s as f64))
                .collect();
            MetricsRow {
                setting: key.0.clone(),
                family: rs[0].family.clone(),
                agents: key.1,
                instances: rs.len(),
                success_rate: socs.len() as f64 / n,
                mean_soc: (!socs.is_empty()).then(|| socs.iter().sum::<f64>() / socs.len() as f64),
                mean_runtime_s: rs.iter().map(|r| r.runtime_s).sum::<f64>() / n,
                mean_candidates: rs.iter().map(|r| r.candidates as f64).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: std::io::Read>(input: R) -> Result<Vec<MetricsRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_log<W: Write>(records: &[InstanceRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_log<R: std::io::Read>(input: R) -> Result<Vec<InstanceRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Everything a benchmark run produced.
#[derive(Clone, Debug)]
pub struct BenchOutput {
    pub records: Vec<InstanceRecord>,
    pub metrics: Vec<MetricsRow>,
}

fn run_instance(
    cfg: &RunConfig,
    predictor: &(dyn Predictor + Sync),
    setting_index: usize,
    agents: usize,
    index: usize,
) -> Result<InstanceRecord> {
    let setting = &cfg.settings[setting_index];
    let instance = benchmark_instance(setting, cfg.seed, setting_index, agents, index)?;
    let seed = instance_seed(cfg.seed, setting_index, agents, index);
    let pipeline = PipelineConfig {
        time_budget_s: setting.time_limit_s.unwrap_or(cfg.time_limit_s),
        ..cfg.pipeline.clone()
    }
    .with_seed(derive_seed(seed, &[2]));
    let result = solve(&instance, cfg.solver, predictor, &pipeline)?;
    let validated = result.plan.as_ref().is_some_and(|p| {
        is_feasible(&instance, p) && sum_of_costs(p, instance.goals()).ok() == result.soc
    });
    Ok(InstanceRecord {
        setting: setting.name.clone(),
        family: setting.scene.family.name().into(),
        agents,
        index,
        seed,
        solver: cfg.solver.name().into(),
        status: result.status,
        soc: result.soc,
        runtime_s: result.runtime_s,
        candidates: result.candidates,
        rounds: result.rounds,
        validated,
        candidate_log: result.log,
    })
}

/// Runs every setting on a pool of `cfg.jobs` workers. Records come back in
/// setting, agent-count and index order regardless of scheduling.
pub fn run_benchmark(cfg: &RunConfig) -> Result<BenchOutput> {
    cfg.validate()?;
    let predictor = build_predictor(&cfg.pipeline)?;
    let predictor: &(dyn Predictor + Sync) = predictor.as_ref();
    let mut jobs = Vec::new();
    for (s, setting) in cfg.settings.iter().enumerate() {
        for &n in &setting.agents {
            for i in 0..setting.instances.unwrap_or(cfg.instances) {
                jobs.push((s, n, i));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let records = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, n, i)| run_instance(cfg, predictor, s, n, i))
            .collect::<Result<Vec<_>>>()
    })?;
    let metrics = aggregate(&records);
    Ok(BenchOutput { records, metrics })
}

/// Writes metrics and log into `cfg.out_dir`, returning both paths.
pub fn write_outputs(cfg: &RunConfig, out: &BenchOutput) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(&cfg.out_dir)?;
    let metrics = cfg.out_dir.join(&cfg.metrics_file);
    let log = cfg.out_dir.join(&cfg.log_file);
    write_metrics_csv(&out.metrics, BufWriter::new(fs::File::create(&metrics)?))?;
    write_log(&out.records, BufWriter::new(fs::File::create(&log)?))?;
    Ok((metrics, log))
}

/// Result of checking an externally supplied plan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    /// First path-validity problem: wrong start, invalid move, missing goal.
    pub path_error: Option<String>,
    pub vertex_conflicts: Vec<VertexConflict>,
    pub edge_conflicts: Vec<EdgeConflict>,
    pub soc: Option<usize>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.path_error.is_none() && self.vertex_conflicts.is_empty() && self.edge_conflicts.is_empty()
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "OK soc={}", self.soc.map_or("-".into(), |s| s.to_string()));
        }
        if let Some(e) = &self.path_error {
            writeln!(f, "invalid: {e}")?;
        }
        for v in &self.vertex_conflicts {
            writeln!(f, "vertex conflict: agents {} and {} at t={} in {}", v.a, v.b, v.timestep, v.cell)?;
        }
        for e in &self.edge_conflicts {
            writeln!(f, "edge conflict: agents {} and {} swap between t={} and t={}", e.a, e.b, e.timestep, e.timestep + 1)?;
        }
        Ok(())
    }
}

/// Checks a plan against a map and scenario given as text.
pub fn verify_solution(map_text: &str, scenario_text: &str, plan_text: &str) -> Result<VerifyReport> {
    let map = Arc::new(GridMap::parse(map_text)?);
    let (starts, goals) = parse_scenario(scenario_text)?;
    let horizon = default_horizon(&map);
    let instance = Instance::new(map, starts, goals, horizon)?;
    let plan = Plan::parse(plan_text)?;
    let path_error = validate_paths(&instance, &plan)
        .and_then(|_| sum_of_costs(&plan, instance.goals()).map(|_| ()))
        .err()
        .map(|e| e.to_string());
    let soc = sum_of_costs(&plan, instance.goals()).ok().filter(|_| path_error.is_none());
    let report = detect_conflicts(&plan);
    Ok(VerifyReport {
        path_error,
        vertex_conflicts: report.vertex_conflicts,
        edge_conflicts: report.edge_conflicts,
        soc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance_gen::SceneFamily;

    fn small_config(instances: usize) -> RunConfig {
        RunConfig {
            instances,
            time_limit_s: 30.0,
            settings: vec![Setting {
                name: "tiny".into(),
                scene: SceneSpec::new(SceneFamily::Random, 8, 8, 0.1),
                agents: vec![4, 6],
                instances: None,
                time_limit_s: None,
                fixed_map: false,
            }],
            ..RunConfig::default()
        }
    }

    fn record(status: Status, soc: Option<usize>, runtime_s: f64, candidates: usize) -> InstanceRecord {
        InstanceRecord {
            setting: "s".into(),
            family: "random".into(),
            agents: 3,
            index: 0,
            seed: 0,
            solver: "difflns".into(),
            status,
            soc,
            runtime_s,
            candidates,
            rounds: 1,
            validated: status == Status::Success,
            candidate_log: Vec::new(),
        }
    }

    #[test]
    fn zero_instances_rejected() {
        let mut cfg = small_config(0);
        assert!(cfg.validate().is_err());
        cfg.instances = 1;
        cfg.validate().unwrap();
    }

    #[test]
    fn config_errors_carry_location() {
        let err = RunConfig::from_json("{\n  \"seed\": 1,\n  \"bogus\": 2\n}").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn aggregate_definitions() {
        let all: Vec<InstanceRecord> = (0..10).map(|i| record(Status::Success, Some(10 + i), 1.0, 4)).collect();
        let m = &aggregate(&all)[0];
        assert_eq!(m.success_rate, 1.0);
        assert_eq!(m.mean_soc, Some(14.5));

        let mut mixed: Vec<InstanceRecord> = (0..7).map(|_| record(Status::Success, Some(20), 2.0, 4)).collect();
        mixed.extend((0..3).map(|_| record(Status::Failure, None, 9.0, 20)));
        let m = &aggregate(&mixed)[0];
        assert!((m.success_rate - 0.7).abs() < 1e-15);
        assert!((m.mean_runtime_s - (7.0 * 2.0 + 3.0 * 9.0) / 10.0).abs() < 1e-12);
        assert!((m.mean_candidates - 8.8).abs() < 1e-12);

        let none = aggregate(&[record(Status::Failure, None, 1.0, 20)]);
        assert_eq!(none[0].mean_soc, None);
    }

    #[test]
    fn csv_and_log_round_trip() {
        let cfg = small_config(2);
        let out = run_benchmark(&cfg).unwrap();
        assert_eq!(out.records.len(), 4);
        let mut csv_bytes = Vec::new();
        write_metrics_csv(&out.metrics, &mut csv_bytes).unwrap();
        let header = String::from_utf8(csv_bytes.clone()).unwrap();
        assert!(header.starts_with("setting,family,N,instances,SR,mean_SOC,mean_runtime_s,mean_candidates\n"));
        assert_eq!(read_metrics_csv(csv_bytes.as_slice()).unwrap(), out.metrics);
        let mut log = Vec::new();
        write_log(&out.records, &mut log).unwrap();
        let back = read_log(log.as_slice()).unwrap();
        assert_eq!(aggregate(&back), out.metrics);
    }

    #[test]
    fn verify_flags_problems() {
        let map = "2 3\n...\n...\n";
        let scen = "0 0 0 2\n1 2 1 0\n";
        let good = "0,0 0,1 0,2\n1,2 1,1 1,0\n";
        let r = verify_solution(map, scen, good).unwrap();
        assert!(r.is_ok(), "{r}");
        assert_eq!(r.soc, Some(4));

        let clash = "0,0 0,1 0,2\n1,2 1,2 0,2 1,2 1,1 1,0\n";
        let r = verify_solution(map, scen, clash).unwrap();
        assert_eq!(r.vertex_conflicts.len(), 1);
        let v = r.vertex_conflicts[0];
        assert_eq!((v.a, v.b, v.timestep), (0, 1, 2));

        let off_grid = "0,0 0,1 0,2\n1,2 2,2 1,2 1,1 1,0\n";
        let r = verify_solution(map, scen, off_grid).unwrap();
        assert!(r.path_error.unwrap().contains("invalid move"));
    }
}
