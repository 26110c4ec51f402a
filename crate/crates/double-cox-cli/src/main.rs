//! `double-cox`: fit, simulate, calibrate, and study workflows for the
//! shared-frailty double-Cox survival model.
//!
//! Exit codes: 0 success; 2 bad input file; 3 non-convergence; 4 interval
//! failure (estimates still printed); 5 calibration failure; 6 config parse
//! error; 1 other failures.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use double_cox::estimation::{fit, FitOptions, FitResult};
use double_cox::intervals::{profile_interval, se_interval, Interval};
use double_cox::io::{read_dataset_csv, write_dataset_csv};
use double_cox::likelihood::Dataset;
use double_cox::simulation::{calibrate_theta, generate_dataset, SimConfig};
use double_cox::study::{report_csv, report_markdown, run_grid, paper_desk_preset, StudyConfig};
use double_cox::{Error, Family, ModelSpec};

const EXIT_BAD_INPUT: i32 = 2;
const EXIT_NON_CONVERGENCE: i32 = 3;
const EXIT_INTERVAL_FAILURE: i32 = 4;
const EXIT_CALIBRATION_FAILURE: i32 = 5;
const EXIT_CONFIG_PARSE: i32 = 6;

#[derive(Parser)]
#[command(
    name = "double-cox",
    version,
    about = "Shared-frailty double-Cox survival models: fitting, simulation, and study runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to a dataset CSV and print estimates with intervals.
    Fit {
        /// Dataset CSV (header: time,event,cluster,<covariates...>).
        #[arg(long)]
        data: PathBuf,
        /// Baseline family: weibull or gompertz.
        #[arg(long)]
        family: String,
        /// Covariates entering the scale term (comma-separated names).
        #[arg(long, value_delimiter = ',')]
        scale_cov: Vec<String>,
        /// Covariates entering the shape term; omit for a single-Cox fit.
        #[arg(long, value_delimiter = ',')]
        shape_cov: Vec<String>,
        /// Confidence level for intervals.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Also compute profile-likelihood intervals.
        #[arg(long)]
        profile: bool,
        /// Seed for random restarts (enables 4 extra starting points).
        #[arg(long)]
        seed: Option<u64>,
        /// Write the report to this file as well as stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset from a simulation config file.
    Simulate {
        /// Simulation config (`key = value` lines).
        #[arg(long)]
        config: PathBuf,
        /// Output dataset CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate the uniform-censoring bound for a simulation config.
    Calibrate {
        /// Simulation config (`key = value` lines).
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a Monte-Carlo simulation study over a config grid.
    Study {
        /// Study config (`key = value` lines); missing keys use the
        /// paper-desk preset values.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Named preset; currently `paper-desk`.
        #[arg(long)]
        preset: Option<String>,
        /// Directory for per-cell results and the report.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Worker-thread count (default: DOUBLECOX_WORKERS or all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Report format: csv or markdown.
        #[arg(long, default_value = "csv")]
        format: String,
        /// Reuse per-cell results already present in the run directory.
        #[arg(long)]
        resume: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit { data, family, scale_cov, shape_cov, level, profile, seed, out } => {
            cmd_fit(&data, &family, &scale_cov, &shape_cov, level, profile, seed, out.as_deref())
        }
        Command::Simulate { config, out } => cmd_simulate(&config, &out),
        Command::Calibrate { config } => cmd_calibrate(&config),
        Command::Study { config, preset, out_dir, workers, format, resume } => cmd_study(
            config.as_deref(),
            preset.as_deref(),
            out_dir.as_deref(),
            workers,
            &format,
            resume,
        ),
    };
    if let Err((code, message)) = outcome {
        eprintln!("error: {message}");
        std::process::exit(code);
    }
}

type CmdResult = Result<(), (i32, String)>;

fn read_config_text(path: &Path) -> Result<String, (i32, String)> {
    std::fs::read_to_string(path)
        .map_err(|e| (EXIT_BAD_INPUT, format!("cannot read {}: {e}", path.display())))
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    data_path: &Path,
    family: &str,
    scale_cov: &[String],
    shape_cov: &[String],
    level: f64,
    profile: bool,
    seed: Option<u64>,
    out: Option<&Path>,
) -> CmdResult {
    let family = Family::parse(family).map_err(|e| (EXIT_BAD_INPUT, e.to_string()))?;
    let data = read_dataset_csv(data_path)
        .map_err(|e| (EXIT_BAD_INPUT, format!("{}: {e}", data_path.display())))?;
    let resolve = |names: &[String]| -> Result<Vec<usize>, (i32, String)> {
        names
            .iter()
            .map(|name| {
                data.covariate_names().iter().position(|c| c == name).ok_or_else(|| {
                    (
                        EXIT_BAD_INPUT,
                        format!(
                            "covariate '{name}' not in dataset (available: {})",
                            data.covariate_names().join(", ")
                        ),
                    )
                })
            })
            .collect()
    };
    let spec = ModelSpec {
        family,
        scale_terms: resolve(scale_cov)?,
        shape_terms: resolve(shape_cov)?,
    };
    spec.validate(data.covariate_names().len())
        .map_err(|e| (EXIT_BAD_INPUT, e.to_string()))?;

    let mut opts = FitOptions::default();
    if let Some(seed) = seed {
        opts.multistart = 4;
        opts.multistart_seed = seed;
    }
    let result = fit(&data, &spec, &opts, None)
        .map_err(|e| (EXIT_NON_CONVERGENCE, format!("fit failed: {e}")))?;

    let (report, interval_failures) =
        render_fit_report(&data, &spec, &result, level, profile, &opts);
    print!("{report}");
    if let Some(path) = out {
        std::fs::write(path, &report)
            .map_err(|e| (1, format!("cannot write {}: {e}", path.display())))?;
    }
    if !result.converged {
        return Err((EXIT_NON_CONVERGENCE, "fit did not converge".to_string()));
    }
    if interval_failures > 0 {
        return Err((
            EXIT_INTERVAL_FAILURE,
            format!("{interval_failures} interval(s) could not be computed"),
        ));
    }
    Ok(())
}

fn render_fit_report(
    data: &Dataset,
    spec: &ModelSpec,
    result: &FitResult,
    level: f64,
    profile: bool,
    opts: &FitOptions,
) -> (String, usize) {
    let names = spec.param_names(data.covariate_names());
    let estimates = result.estimates.flatten();
    let mut failures = 0usize;

    let mut out = String::new();
    out.push_str(&format!("family: {}\n", spec.family));
    out.push_str(&format!(
        "n: {}  events: {}  clusters: {}\n",
        data.n(),
        data.n_events(),
        data.n_clusters()
    ));
    out.push_str(&format!("log-likelihood: {:.10}\n", result.loglik));
    out.push_str(&format!(
        "converged: {} ({} iterations)\n",
        result.converged, result.iterations
    ));
    if result.at_boundary {
        out.push_str("frailty variance estimate sits at the boundary (sigma2 = 0)\n");
    }
    if result.covariance_pseudo_inverse {
        out.push_str("warning: observed information was singular; SEs use a pseudo-inverse\n");
    }

    let pct = level * 100.0;
    let mut header = format!(
        "{:<22} {:>13} {:>13} {:>29}",
        "parameter",
        "estimate",
        "se",
        format!("{pct}% CI (se)")
    );
    if profile {
        header.push_str(&format!(" {:>29}", format!("{pct}% CI (pl)")));
    }
    out.push('\n');
    out.push_str(&header);
    out.push('\n');

    let fmt_interval = |interval: Result<Interval, Error>, failures: &mut usize| -> String {
        match interval {
            Ok(interval) => {
                let mark = if interval.reliable { "" } else { " ?" };
                format!("[{:.5e}, {:.5e}]{mark}", interval.lower, interval.upper)
            }
            Err(_) => {
                *failures += 1;
                "(unavailable)".to_string()
            }
        }
    };

    for (j, name) in names.iter().enumerate() {
        let se = result
            .covariance
            .as_ref()
            .map(|c| c[(j, j)].max(0.0).sqrt())
            .map(|s| format!("{s:.5e}"))
            .unwrap_or_else(|| "n/a".to_string());
        let se_ci = fmt_interval(se_interval(result, j, level), &mut failures);
        let mut line = format!("{:<22} {:>13.5e} {:>13} {:>29}", name, estimates[j], se, se_ci);
        if profile {
            let pl_ci =
                fmt_interval(profile_interval(data, spec, result, j, level, opts), &mut failures);
            line.push_str(&format!(" {pl_ci:>29}"));
        }
        out.push_str(&line);
        out.push('\n');
    }
    (out, failures)
}

fn cmd_simulate(config_path: &Path, out_path: &Path) -> CmdResult {
    let text = read_config_text(config_path)?;
    let config = SimConfig::parse(&text).map_err(|e| (EXIT_CONFIG_PARSE, e.to_string()))?;
    let plan = calibrate_theta(&config)
        .map_err(|e| (EXIT_CALIBRATION_FAILURE, format!("calibration failed: {e}")))?;
    match plan.theta {
        Some(theta) => println!(
            "calibrated theta = {theta:.10e} (estimated censoring rate {:.6})",
            plan.achieved_rate_estimate
        ),
        None => println!("no censoring (p_cens = 0)"),
    }
    let data = generate_dataset(&config, &plan).map_err(|e| (1, e.to_string()))?;
    write_dataset_csv(&data, out_path)
        .map_err(|e| (1, format!("cannot write {}: {e}", out_path.display())))?;
    let censored = data.subjects().iter().filter(|s| !s.event).count();
    println!(
        "wrote {} records to {} (empirical censoring rate {:.6})",
        data.n(),
        out_path.display(),
        censored as f64 / data.n() as f64
    );
    Ok(())
}

fn cmd_calibrate(config_path: &Path) -> CmdResult {
    let text = read_config_text(config_path)?;
    let config = SimConfig::parse(&text).map_err(|e| (EXIT_CONFIG_PARSE, e.to_string()))?;
    let plan = calibrate_theta(&config)
        .map_err(|e| (EXIT_CALIBRATION_FAILURE, format!("calibration failed: {e}")))?;
    match plan.theta {
        Some(theta) => println!(
            "theta = {theta:.10e}\nestimated censoring rate = {:.6}",
            plan.achieved_rate_estimate
        ),
        None => println!("no censoring (p_cens = 0)"),
    }
    Ok(())
}

fn cmd_study(
    config: Option<&Path>,
    preset: Option<&str>,
    out_dir: Option<&Path>,
    workers: Option<usize>,
    format: &str,
    resume: bool,
) -> CmdResult {
    let study: StudyConfig = match (config, preset) {
        (Some(path), None) => {
            let text = read_config_text(path)?;
            StudyConfig::parse(&text).map_err(|e| (EXIT_CONFIG_PARSE, e.to_string()))?
        }
        (None, Some("paper-desk")) => paper_desk_preset(),
        (None, Some(other)) => {
            return Err((EXIT_CONFIG_PARSE, format!("unknown preset '{other}'")))
        }
        _ => return Err((EXIT_CONFIG_PARSE, "pass exactly one of --config/--preset".to_string())),
    };
    if format != "csv" && format != "markdown" {
        return Err((EXIT_CONFIG_PARSE, format!("unknown format '{format}'")));
    }

    let workers = workers.or_else(|| {
        std::env::var("DOUBLECOX_WORKERS").ok().and_then(|v| v.parse().ok())
    });
    let outcomes = match workers {
        None => run_grid(&study, out_dir, resume),
        Some(count) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(count.max(1))
                .build()
                .map_err(|e| (1, format!("cannot build worker pool: {e}")))?;
            pool.install(|| run_grid(&study, out_dir, resume))
        }
    }
    .map_err(|e| (1, e.to_string()))?;

    let succeeded = outcomes.iter().filter(|o| o.result.is_ok()).count();
    for outcome in &outcomes {
        match &outcome.result {
            Ok(summary) => eprintln!(
                "cell {:>3}: ok ({} used, {} non-converged)",
                outcome.index, summary.used, summary.n_nonconverged
            ),
            Err(message) => eprintln!("cell {:>3}: FAILED: {message}", outcome.index),
        }
    }

    let (report, file_name) = match format {
        "markdown" => (report_markdown(&outcomes), "report.md"),
        _ => (report_csv(&outcomes), "report.csv"),
    };
    match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| (1, e.to_string()))?;
            let path = dir.join(file_name);
            std::fs::write(&path, &report)
                .map_err(|e| (1, format!("cannot write {}: {e}", path.display())))?;
            println!("report written to {}", path.display());
        }
        None => print!("{report}"),
    }
    if succeeded == 0 {
        return Err((1, "every cell failed".to_string()));
    }
    Ok(())
}
