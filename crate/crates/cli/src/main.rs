//! Command-line front end: estimate effects from CSV data, simulate
//! datasets, and run seeded Monte Carlo experiments and sweeps.
//!
//! Exit codes: 0 success, 2 argument/config/parse errors, 3 singular moment
//! matrix, 4 excessive trial failures, 1 anything else. Failures emit a
//! machine-readable JSON object on stderr.

mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use causal_combine::error::Error;
use causal_combine::evaluation::{
    format_float, report_to_csv, run_experiment, sweep_ratio, sweep_sample_size, ExperimentConfig,
    HarnessOptions, MseReport, ScmSource, SCHEMA_VERSION,
};
use causal_combine::linmodel::Regime;
use causal_combine::pipeline::{self, EstimateOptions, EstimateReport, Method};
use causal_combine::preprocess::center_and_augment;
use causal_combine::scm::{Confounding, ScmParams};

#[derive(Parser)]
#[command(
    name = "causal-combine",
    version,
    about = "Combine observational and interventional data for linear causal effect estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a causal effect from observational and interventional CSVs.
    Estimate(EstimateArgs),
    /// Draw observational and interventional datasets from a linear SCM.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo experiment from a JSON config (or the benchmark
    /// table shorthand).
    Experiment(ExperimentArgs),
    /// Re-run an experiment across a grid of sample sizes.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Observational data CSV with header x1..xp,y.
    obs_csv: PathBuf,
    /// Interventional data CSV with the same header.
    int_csv: PathBuf,
    /// Weighting scheme (interventional, observational, pooled, ridge,
    /// opt-scalar, opt-diag, opt-matrix, plugin, plugin-l2, plugin-l1,
    /// rosenman).
    #[arg(long)]
    scheme: String,
    /// Write the result JSON here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Skip per-regime centering and intercept augmentation.
    #[arg(long)]
    no_center: bool,
    #[arg(long)]
    cv_folds: Option<usize>,
    #[arg(long)]
    ridge_lambda: Option<f64>,
    /// Plug-in stabilization epsilon (default: relative rule).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Fixed penalty lambda for plugin-l2/plugin-l1 (default: chosen by CV).
    #[arg(long)]
    penalty_lambda: Option<f64>,
    /// Seed for cross-validation fold assignment.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    /// SCM parameters as JSON.
    #[arg(long)]
    params: PathBuf,
    /// Observational sample size.
    #[arg(long)]
    n: usize,
    /// Interventional sample size.
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving obs.csv and int.csv.
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config JSON.
    #[arg(long, conflicts_with = "table1")]
    config: Option<PathBuf>,
    /// Run all four benchmark-table settings (spread/sparse confounding x
    /// confounder strength 1/5) with the seven benchmark methods.
    #[arg(long)]
    table1: bool,
    /// Override the replication count.
    #[arg(long)]
    replications: Option<usize>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SweepPreset {
    /// Grow the interventional sample m with n = 3m.
    MSweep,
    /// Grow the observational sample n with m = 500 fixed.
    NSweep,
}

#[derive(Args)]
struct SweepArgs {
    /// Base experiment config JSON (required unless --preset is given).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<SweepPreset>,
    /// Interventional sizes, comma separated; requires --ratio.
    #[arg(long, value_delimiter = ',', conflicts_with = "n_grid")]
    m_grid: Option<Vec<usize>>,
    /// Observational-to-interventional ratio for --m-grid.
    #[arg(long)]
    ratio: Option<f64>,
    /// Observational sizes, comma separated (m stays fixed).
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: PathBuf,
}

/// Failure wrapper carrying the process exit code.
struct CliError {
    code: u8,
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::SingularMoment(_) => (3, "singular-moment"),
            Error::ExcessiveFailures { .. } => (4, "excessive-failures"),
            Error::InvalidParameter(_) => (2, "invalid-parameter"),
            Error::DimensionMismatch(_) => (2, "dimension-mismatch"),
            Error::InsufficientData(_) => (2, "insufficient-data"),
            Error::UnsupportedScheme(_) => (2, "unsupported-scheme"),
            Error::DegenerateWeight(_) => (1, "degenerate-weight"),
        };
        CliError::new(code, kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(1, "io", e.to_string())
    }
}

fn config_error(e: impl std::fmt::Display) -> CliError {
    CliError::new(2, "parse", e.to_string())
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("CAUSAL_COMBINE_THREADS") {
        match threads.parse::<usize>() {
            Ok(t) if t > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build_global();
            }
            _ => {
                eprintln!(
                    "{}",
                    serde_json::json!({"error": {
                        "kind": "invalid-parameter",
                        "message": format!("CAUSAL_COMBINE_THREADS must be a positive integer, got {threads:?}")
                    }})
                );
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({"error": {"kind": e.kind, "message": e.message}})
            );
            ExitCode::from(e.code)
        }
    }
}

#[derive(Serialize)]
struct EstimateOutput {
    schema_version: u32,
    treatment_dim: usize,
    centered: bool,
    rows_obs: usize,
    rows_int: usize,
    #[serde(flatten)]
    report: EstimateReport,
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    let scheme: Method = args.scheme.parse().map_err(CliError::from)?;
    if scheme == Method::Oracle {
        return Err(Error::UnsupportedScheme(
            "oracle needs a known data-generating model; use the experiment command".into(),
        )
        .into());
    }
    let obs = io::read_dataset_csv(&args.obs_csv, Regime::Observational)?;
    let int = io::read_dataset_csv(&args.int_csv, Regime::Interventional)?;
    let p = obs.dim();
    for (data, path) in [(&obs, &args.obs_csv), (&int, &args.int_csv)] {
        if data.rows() < p + 2 {
            return Err(Error::InsufficientData(format!(
                "{}: {} rows, need at least p + 2 = {}",
                path.display(),
                data.rows(),
                p + 2
            ))
            .into());
        }
    }
    let mut opts = EstimateOptions {
        cv_seed: args.seed,
        epsilon: args.epsilon,
        penalty_lambda: args.penalty_lambda,
        ..Default::default()
    };
    if let Some(folds) = args.cv_folds {
        opts.cv_folds = folds;
    }
    if let Some(lambda) = args.ridge_lambda {
        opts.ridge_lambda = lambda;
    }
    let centered = !args.no_center;
    let report = if centered {
        opts.pin_intercept = true;
        let pair = center_and_augment(&obs, &int)?;
        pipeline::estimate(scheme, &pair.obs, &pair.int, None, &opts)?
    } else {
        pipeline::estimate(scheme, &obs, &int, None, &opts)?
    };
    let output = EstimateOutput {
        schema_version: SCHEMA_VERSION,
        treatment_dim: p,
        centered,
        rows_obs: obs.rows(),
        rows_int: int.rows(),
        report,
    };
    let mut json = serde_json::to_string_pretty(&output).map_err(config_error)?;
    json.push('\n');
    match &args.output {
        Some(path) => io::write_atomic(path, json.as_bytes())?,
        None => print!("{json}"),
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.params)
        .map_err(|e| config_error(format!("{}: {e}", args.params.display())))?;
    let params: ScmParams = serde_json::from_str(&text)
        .map_err(|e| config_error(format!("{}: {e}", args.params.display())))?;
    params.validate()?;
    let obs = causal_combine::scm::sample_observational(&params, args.n, args.seed)?;
    let int =
        causal_combine::scm::sample_interventional(&params, args.m, args.seed.wrapping_add(1))?;
    io::write_atomic(
        &args.output_dir.join("obs.csv"),
        io::dataset_to_csv(&obs).as_bytes(),
    )?;
    io::write_atomic(
        &args.output_dir.join("int.csv"),
        io::dataset_to_csv(&int).as_bytes(),
    )?;
    Ok(())
}

const BENCHMARK_METHODS: [Method; 7] = [
    Method::Rosenman,
    Method::Interventional,
    Method::Pooled,
    Method::Plugin,
    Method::PluginL1,
    Method::PluginL2,
    Method::Oracle,
];

fn write_report(dir: &Path, stem: &str, report: &MseReport) -> Result<(), CliError> {
    let mut json = serde_json::to_string_pretty(report).map_err(config_error)?;
    json.push('\n');
    io::write_atomic(&dir.join(format!("{stem}.json")), json.as_bytes())?;
    io::write_atomic(
        &dir.join(format!("{stem}.csv")),
        report_to_csv(report).as_bytes(),
    )?;
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), CliError> {
    if args.table1 {
        let mut summary = String::from("confounding,gamma_scale,scheme,mean_mse,std_mse\n");
        for (confounding, gamma_scale) in [
            (Confounding::Spread, 1.0),
            (Confounding::Spread, 5.0),
            (Confounding::Sparse, 1.0),
            (Confounding::Sparse, 5.0),
        ] {
            let config = ExperimentConfig {
                schema_version: SCHEMA_VERSION,
                scm: ScmSource::Table1 {
                    confounding,
                    gamma_scale,
                },
                n: 600,
                m: 300,
                replications: args.replications.unwrap_or(1000),
                methods: BENCHMARK_METHODS.to_vec(),
                master_seed: args.seed.unwrap_or(0),
                ratio_c: None,
                options: HarnessOptions::default(),
            };
            let report = run_experiment(&config)?;
            let label = match confounding {
                Confounding::Spread => "spread",
                Confounding::Sparse => "sparse",
            };
            for method in BENCHMARK_METHODS {
                let stats = &report.per_method[method.name()];
                summary.push_str(&format!(
                    "{label},{gamma_scale},{},{},{}\n",
                    method.name(),
                    format_float(stats.mean_mse),
                    format_float(stats.std_mse)
                ));
            }
            write_report(
                &args.output_dir,
                &format!("report-{label}-{gamma_scale}"),
                &report,
            )?;
        }
        io::write_atomic(&args.output_dir.join("summary.csv"), summary.as_bytes())?;
        return Ok(());
    }

    let path = args
        .config
        .ok_or_else(|| config_error("either --config or --table1 is required"))?;
    let mut config = load_config(&path)?;
    if let Some(r) = args.replications {
        config.replications = r;
    }
    if let Some(s) = args.seed {
        config.master_seed = s;
    }
    let report = run_experiment(&config)?;
    write_report(&args.output_dir, "report", &report)
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let (base, plan) = match (args.preset, &args.config) {
        (Some(preset), None) => sweep_preset(preset),
        (None, Some(path)) => {
            let base = load_config(path)?;
            let plan = if let Some(m_grid) = args.m_grid.clone() {
                let ratio = args
                    .ratio
                    .ok_or_else(|| config_error("--m-grid requires --ratio"))?;
                SweepPlan::SampleSize { m_grid, ratio }
            } else if let Some(n_grid) = args.n_grid.clone() {
                SweepPlan::Ratio { n_grid }
            } else {
                return Err(config_error("provide --m-grid with --ratio, or --n-grid"));
            };
            (base, plan)
        }
        _ => return Err(config_error("exactly one of --preset or --config is required")),
    };
    let mut base = base;
    if let Some(r) = args.replications {
        base.replications = r;
    }
    if let Some(s) = args.seed {
        base.master_seed = s;
    }
    let reports = match &plan {
        SweepPlan::SampleSize { m_grid, ratio } => sweep_sample_size(&base, m_grid, *ratio)?,
        SweepPlan::Ratio { n_grid } => sweep_ratio(&base, n_grid)?,
    };
    let mut summary = String::from("m,n,scheme,mean_mse,std_mse,std_error\n");
    for report in &reports {
        for (name, stats) in &report.per_method {
            summary.push_str(&format!(
                "{},{},{name},{},{},{}\n",
                report.config.m,
                report.config.n,
                format_float(stats.mean_mse),
                format_float(stats.std_mse),
                format_float(stats.std_error())
            ));
        }
        write_report(
            &args.output_dir,
            &format!("report-m{}-n{}", report.config.m, report.config.n),
            report,
        )?;
    }
    io::write_atomic(&args.output_dir.join("sweep.csv"), summary.as_bytes())?;
    Ok(())
}

enum SweepPlan {
    SampleSize { m_grid: Vec<usize>, ratio: f64 },
    Ratio { n_grid: Vec<usize> },
}

fn sweep_preset(preset: SweepPreset) -> (ExperimentConfig, SweepPlan) {
    let base = ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        scm: ScmSource::Table1 {
            confounding: Confounding::Spread,
            gamma_scale: 5.0,
        },
        n: 1500,
        m: 500,
        replications: 100,
        methods: BENCHMARK_METHODS.to_vec(),
        master_seed: 0,
        ratio_c: None,
        options: HarnessOptions::default(),
    };
    match preset {
        SweepPreset::MSweep => (
            base,
            SweepPlan::SampleSize {
                m_grid: vec![100, 300, 1000, 3000],
                ratio: 3.0,
            },
        ),
        SweepPreset::NSweep => (
            base,
            SweepPlan::Ratio {
                n_grid: vec![500, 1000, 5000, 50_000],
            },
        ),
    }
}
