//! Command-line front end: instance generation, single solves, benchmark
//! runs and plan verification.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use difflns::bench::{
    benchmark_instance, build_predictor, run_benchmark, solve, verify_solution, write_outputs, RunConfig, Setting,
    SolverKind,
};
use difflns::grid::{parse_scenario, GridMap, Instance};
use difflns::instance_gen::SceneSpec;
use difflns::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "difflns", version, about = "Diffusion-seeded LNS2 for multi-agent path finding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// difflns, lns2 or pp-multistart.
    #[arg(long, global = true)]
    solver: Option<SolverKind>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for instance-level parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the configured benchmark instances as map and scenario files.
    Gen,
    /// Solve one instance given as map and scenario files.
    Solve {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        scen: PathBuf,
    },
    /// Run a benchmark and write metrics CSV plus a JSON-lines log.
    Bench,
    /// Check a plan file against a map and scenario.
    Verify {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        scen: PathBuf,
        #[arg(long)]
        plan: PathBuf,
    },
}

fn default_config() -> RunConfig {
    RunConfig {
        settings: vec![Setting {
            name: "small-random".into(),
            scene: SceneSpec::small_random(),
            agents: vec![20],
            instances: None,
            time_limit_s: None,
            fixed_map: false,
        }],
        ..RunConfig::default()
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => default_config(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(solver) = cli.solver {
        cfg.solver = solver;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn generate(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    let mut written = 0;
    for (s, setting) in cfg.settings.iter().enumerate() {
        for &n in &setting.agents {
            for i in 0..setting.instances.unwrap_or(cfg.instances) {
                let inst = benchmark_instance(setting, cfg.seed, s, n, i)?;
                let stem = cfg.out_dir.join(format!("{}-n{n}-{i:03}", setting.name));
                fs::write(stem.with_extension("map"), inst.map().to_text())?;
                fs::write(stem.with_extension("scen"), inst.scenario_text())?;
                written += 1;
            }
        }
    }
    eprintln!("wrote {written} instances to {}", cfg.out_dir.display());
    Ok(())
}

fn solve_files(cfg: &RunConfig, map: &Path, scen: &Path) -> Result<bool> {
    let grid = Arc::new(GridMap::parse(&read(map)?)?);
    let (starts, goals) = parse_scenario(&read(scen)?)?;
    let instance = Instance::with_default_horizon(grid, starts, goals)?;
    let pipeline = difflns::pipeline::PipelineConfig {
        time_budget_s: cfg.time_limit_s,
        ..cfg.pipeline.clone()
    }
    .with_seed(cfg.seed);
    let predictor = build_predictor(&pipeline)?;
    let result = solve(&instance, cfg.solver, predictor.as_ref(), &pipeline)?;
    fs::create_dir_all(&cfg.out_dir)?;
    if let Some(plan) = &result.plan {
        fs::write(cfg.out_dir.join("plan.txt"), plan.to_text())?;
    }
    fs::write(cfg.out_dir.join("result.json"), serde_json::to_string_pretty(&result)?)?;
    println!(
        "{} status={:?} soc={} rounds={} candidates={} runtime_s={:.3}",
        cfg.solver.name(),
        result.status,
        result.soc.map_or("-".into(), |s| s.to_string()),
        result.rounds,
        result.candidates,
        result.runtime_s
    );
    Ok(result.is_success())
}

fn bench(cfg: &RunConfig) -> Result<()> {
    let out = run_benchmark(cfg)?;
    let (metrics, log) = write_outputs(cfg, &out)?;
    println!("setting,N,SR,mean_SOC,mean_runtime_s,mean_candidates");
    for m in &out.metrics {
        println!(
            "{},{},{:.3},{},{:.3},{:.2}",
            m.setting,
            m.agents,
            m.success_rate,
            m.mean_soc.map_or("-".into(), |s| format!("{s:.1}")),
            m.mean_runtime_s,
            m.mean_candidates
        );
    }
    eprintln!("metrics: {}\nlog: {}", metrics.display(), log.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Gen => generate(&load_config(cli)?)?,
        Command::Solve { map, scen } => {
            solve_files(&load_config(cli)?, map, scen)?;
        }
        Command::Bench => bench(&load_config(cli)?)?,
        Command::Verify { map, scen, plan } => {
            let report = verify_solution(&read(map)?, &read(scen)?, &read(plan)?)?;
            println!("{report}");
            if !report.is_ok() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
