//! Prints the benchmark table (4 SCM settings x 7 methods) for a quick look.

use causal_combine::evaluation::{
    run_experiment, ExperimentConfig, HarnessOptions, ScmSource, SCHEMA_VERSION,
};
use causal_combine::pipeline::Method;
use causal_combine::scm::Confounding;

fn main() {
    let reps: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200);
    let methods = vec![
        Method::Rosenman,
        Method::Interventional,
        Method::Pooled,
        Method::Plugin,
        Method::PluginL1,
        Method::PluginL2,
        Method::Oracle,
    ];
    for (conf, gs) in [
        (Confounding::Spread, 1.0),
        (Confounding::Spread, 5.0),
        (Confounding::Sparse, 1.0),
        (Confounding::Sparse, 5.0),
    ] {
        let config = ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            scm: ScmSource::Table1 {
                confounding: conf,
                gamma_scale: gs,
            },
            n: 600,
            m: 300,
            replications: reps,
            methods: methods.clone(),
            master_seed: 20240600,
            ratio_c: None,
            options: HarnessOptions::default(),
        };
        let t0 = std::time::Instant::now();
        let report = run_experiment(&config).unwrap();
        println!("--- {conf:?} gamma_scale={gs} ({reps} reps, {:.1}s)", t0.elapsed().as_secs_f64());
        for m in &methods {
            let s = &report.per_method[m.name()];
            println!("  {:15} {:6.3} +- {:5.3}", m.name(), s.mean_mse, s.std_mse);
        }
    }
}
