//! Runs every example so they stay in sync with the library.

mod grid_conflicts {
    include!("../examples/grid_conflicts.rs");

    #[test]
    fn runs() {
        run_example().expect("example grid_conflicts");
    }
}

mod instance_generation {
    include!("../examples/instance_generation.rs");

    #[test]
    fn runs() {
        run_example().expect("example instance_generation");
    }
}

mod sipps_planning {
    include!("../examples/sipps_planning.rs");

    #[test]
    fn runs() {
        run_example().expect("example sipps_planning");
    }
}

mod lns2_repair {
    include!("../examples/lns2_repair.rs");

    #[test]
    fn runs() {
        run_example().expect("example lns2_repair");
    }
}

mod diffusion_sampling {
    include!("../examples/diffusion_sampling.rs");

    #[test]
    fn runs() {
        run_example().expect("example diffusion_sampling");
    }
}

mod denoiser_forward {
    include!("../examples/denoiser_forward.rs");

    #[test]
    fn runs() {
        run_example().expect("example denoiser_forward");
    }
}

mod task_losses {
    include!("../examples/task_losses.rs");

    #[test]
    fn runs() {
        run_example().expect("example task_losses");
    }
}

mod pipeline_solve {
    include!("../examples/pipeline_solve.rs");

    #[test]
    fn runs() {
        run_example().expect("example pipeline_solve");
    }
}

mod benchmark {
    include!("../examples/benchmark.rs");

    #[test]
    fn runs() {
        run_example().expect("example benchmark");
    }
}

mod verify_plan {
    include!("../examples/verify_plan.rs");

    #[test]
    fn runs() {
        run_example().expect("example verify_plan");
    }
}
