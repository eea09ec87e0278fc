// A tiny benchmark run with metrics recomputed from the per-instance log.

use difflns::bench::{aggregate, run_benchmark, write_metrics_csv, RunConfig, Setting, SolverKind};
use difflns::instance_gen::{SceneFamily, SceneSpec};

pub fn run_example() -> difflns::Result<()> {
    let cfg = RunConfig {
        seed: 17,
        instances: 3,
        time_limit_s: 20.0,
        jobs: 2,
        settings: vec![
            Setting {
                name: "small-random".into(),
                scene: SceneSpec::small_random(),
                agents: vec![10, 20],
                instances: None,
                time_limit_s: None,
                fixed_map: false,
            },
            Setting {
                name: "maze".into(),
                scene: SceneSpec::new(SceneFamily::Maze, 15, 15, 0.3),
                agents: vec![8],
                instances: None,
                time_limit_s: Some(10.0),
                fixed_map: true,
            },
        ],
        ..RunConfig::default()
    };
    println!("config: {}", serde_json::to_string(&cfg).expect("serializable"));
    for solver in [SolverKind::PpMultistart, SolverKind::Difflns] {
        let out = run_benchmark(&RunConfig { solver, ..cfg.clone() })?;
        assert_eq!(aggregate(&out.records), out.metrics);
        println!("{}:", solver.name());
        write_metrics_csv(&out.metrics, std::io::stdout())?;
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> difflns::Result<()> {
    run_example()
}
