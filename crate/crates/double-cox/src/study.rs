//! Monte-Carlo study driver: a grid of generating configurations, each
//! replicated many times, with bias and interval-coverage summaries.
//!
//! Replications are sub-seeded from (master seed, cell index, replication
//! index) through a 64-bit mixer, so any replication can be computed on any
//! worker with identical results; aggregation walks replications in index
//! order, making whole-study output bit-identical at every worker count.
//! Completed cells are persisted as full-precision CSV files in a run
//! directory named by the config hash, and can be skipped on a rerun.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{fit, maximize_loglik, BranchPolicy, FitOptions};
use crate::intervals::{covers, profile_interval, se_interval, Interval, IntervalMethod};
use crate::likelihood::DataLoglik;
use crate::model::{Family, ModelSpec, ParameterVector};
use crate::seeding::replication_seed;
use crate::simulation::{
    calibrate_theta, generate_dataset, parse_num, parse_num_list, spec_for, CensoringPlan,
    SimConfig, COVARIATE_NAMES,
};

/// Grid axes and study settings.
///
/// Every combination of `families x n x n_clusters x p_cens x p_success x
/// beta_scale x beta_shape x sigma2` becomes one cell; the baseline `(a, b)`
/// pair is chosen per family.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub families: Vec<Family>,
    pub n: Vec<usize>,
    pub n_clusters: Vec<usize>,
    pub p_cens: Vec<f64>,
    pub p_success: Vec<f64>,
    /// Scale-coefficient patterns; one pattern is a vector of up to two
    /// coefficients (success, score).
    pub beta_scale: Vec<Vec<f64>>,
    /// Shape-coefficient patterns.
    pub beta_shape: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
    pub baseline_weibull: (f64, f64),
    pub baseline_gompertz: (f64, f64),
    pub replications: usize,
    pub master_seed: u64,
    /// Interval constructions to evaluate for coverage.
    pub interval_methods: Vec<IntervalMethod>,
    /// Nominal confidence level.
    pub level: f64,
    /// Also fit the scale-only model to every replication and report its
    /// bias rows.
    pub fit_single_cox: bool,
    pub score_sd: f64,
    /// Monte-Carlo sample count for censoring calibration.
    pub mc_n: usize,
}

/// The desk-scale default grid: both families, three frailty variances
/// {0, 0.5, 2}, cluster counts {10, 100}, n = 300, 40% censoring, 200
/// replications, SE and profile intervals at the 95% level.
pub fn paper_desk_preset() -> StudyConfig {
    StudyConfig {
        families: vec![Family::Weibull, Family::Gompertz],
        n: vec![300],
        n_clusters: vec![10, 100],
        p_cens: vec![0.4],
        p_success: vec![0.5],
        beta_scale: vec![vec![-0.5, -1.0]],
        beta_shape: vec![vec![-0.05, -0.1]],
        sigma2: vec![0.0, 0.5, 2.0],
        baseline_weibull: (20.0, 1.5),
        baseline_gompertz: (1e-4, 0.1),
        replications: 200,
        master_seed: 918273645,
        interval_methods: vec![IntervalMethod::Se, IntervalMethod::Profile],
        level: 0.95,
        fit_single_cox: false,
        score_sd: 0.2f64.sqrt(),
        mc_n: 1_000_000,
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let nonempty: [(&str, bool); 8] = [
            ("families", self.families.is_empty()),
            ("n", self.n.is_empty()),
            ("n_clusters", self.n_clusters.is_empty()),
            ("p_cens", self.p_cens.is_empty()),
            ("p_success", self.p_success.is_empty()),
            ("beta_scale", self.beta_scale.is_empty()),
            ("beta_shape", self.beta_shape.is_empty()),
            ("sigma2", self.sigma2.is_empty()),
        ];
        for (name, empty) in nonempty {
            if empty {
                return Err(Error::argument("StudyConfig", format!("axis '{name}' is empty")));
            }
        }
        if self.replications == 0 {
            return Err(Error::argument("StudyConfig", "replications must be >= 1".to_string()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::argument("StudyConfig", format!("level = {}", self.level)));
        }
        for pattern in self.beta_scale.iter().chain(&self.beta_shape) {
            if pattern.len() > COVARIATE_NAMES.len() {
                return Err(Error::argument(
                    "StudyConfig",
                    format!("coefficient pattern {pattern:?} has more entries than covariates"),
                ));
            }
        }
        // Values per cell are checked again through SimConfig, but failing
        // early names the config rather than a cell.
        for cell in enumerate_cells(self) {
            cell.sim_config(self, 0).validate()?;
        }
        Ok(())
    }

    /// Parses `key = value` text. Keys are exactly the field names; any key
    /// not present keeps its [`paper_desk_preset`] value. Scalar lists are
    /// comma-separated; the coefficient-pattern lists separate patterns with
    /// `;` (for example `beta_scale = -0.5,-1 ; 0.5,1`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = paper_desk_preset();
        for (key, value, line) in crate::io::parse_key_values(text)? {
            match key.as_str() {
                "families" => {
                    config.families = split_list(&value)
                        .map(|item| Family::parse(item))
                        .collect::<Result<_>>()?
                }
                "n" => config.n = parse_num_list(&value, &key, line)?,
                "n_clusters" => config.n_clusters = parse_num_list(&value, &key, line)?,
                "p_cens" => config.p_cens = parse_num_list(&value, &key, line)?,
                "p_success" => config.p_success = parse_num_list(&value, &key, line)?,
                "beta_scale" => config.beta_scale = parse_patterns(&value, &key, line)?,
                "beta_shape" => config.beta_shape = parse_patterns(&value, &key, line)?,
                "sigma2" => config.sigma2 = parse_num_list(&value, &key, line)?,
                "baseline_weibull" => config.baseline_weibull = parse_pair(&value, &key, line)?,
                "baseline_gompertz" => config.baseline_gompertz = parse_pair(&value, &key, line)?,
                "replications" => config.replications = parse_num(&value, &key, line)?,
                "master_seed" => config.master_seed = parse_num(&value, &key, line)?,
                "interval_methods" => {
                    config.interval_methods = split_list(&value)
                        .map(IntervalMethod::parse)
                        .collect::<Result<_>>()?
                }
                "level" => config.level = parse_num(&value, &key, line)?,
                "fit_single_cox" => {
                    config.fit_single_cox = match value.as_str() {
                        "true" => true,
                        "false" => false,
                        other => {
                            return Err(Error::Parse(format!(
                                "line {line}: fit_single_cox must be true or false, found '{other}'"
                            )))
                        }
                    }
                }
                "score_sd" => config.score_sd = parse_num(&value, &key, line)?,
                "mc_n" => config.mc_n = parse_num(&value, &key, line)?,
                other => {
                    return Err(Error::Parse(format!("line {line}: unknown key '{other}'")))
                }
            }
        }
        config.validate()?;
        Ok(config)
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_patterns(value: &str, key: &str, line: usize) -> Result<Vec<Vec<f64>>> {
    value
        .split(';')
        .map(|pattern| parse_num_list(pattern, key, line))
        .collect()
}

fn parse_pair(value: &str, key: &str, line: usize) -> Result<(f64, f64)> {
    let items: Vec<f64> = parse_num_list(value, key, line)?;
    if items.len() != 2 {
        return Err(Error::Parse(format!(
            "line {line}: key '{key}' needs exactly two comma-separated values"
        )));
    }
    Ok((items[0], items[1]))
}

/// One grid point, fully expanded.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub family: Family,
    pub n: usize,
    pub n_clusters: usize,
    pub p_cens: f64,
    pub p_success: f64,
    pub beta_scale: Vec<f64>,
    pub beta_shape: Vec<f64>,
    pub sigma2: f64,
    pub a: f64,
    pub b: f64,
}

impl Cell {
    pub fn true_params(&self) -> ParameterVector {
        ParameterVector {
            a: self.a,
            b: self.b,
            beta_scale: self.beta_scale.clone(),
            beta_shape: self.beta_shape.clone(),
            sigma2: self.sigma2,
        }
    }

    pub fn sim_config(&self, study: &StudyConfig, seed: u64) -> SimConfig {
        SimConfig {
            family: self.family,
            n: self.n,
            n_clusters: self.n_clusters,
            p_success: self.p_success,
            score_sd: study.score_sd,
            true_params: self.true_params(),
            p_cens: self.p_cens,
            seed,
            mc_n: study.mc_n,
        }
    }
}

/// Expands the Cartesian product of the grid axes, in a fixed order
/// (family, n, n_clusters, p_cens, p_success, beta_scale, beta_shape,
/// sigma2; innermost varies fastest).
pub fn enumerate_cells(study: &StudyConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &family in &study.families {
        let (a, b) = match family {
            Family::Weibull => study.baseline_weibull,
            Family::Gompertz => study.baseline_gompertz,
        };
        for &n in &study.n {
            for &n_clusters in &study.n_clusters {
                for &p_cens in &study.p_cens {
                    for &p_success in &study.p_success {
                        for beta_scale in &study.beta_scale {
                            for beta_shape in &study.beta_shape {
                                for &sigma2 in &study.sigma2 {
                                    cells.push(Cell {
                                        family,
                                        n,
                                        n_clusters,
                                        p_cens,
                                        p_success,
                                        beta_scale: beta_scale.clone(),
                                        beta_shape: beta_shape.clone(),
                                        sigma2,
                                        a,
                                        b,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    cells
}

/// Per-parameter aggregate over the converged replications of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    /// Mean of the per-replication deviations (estimate minus truth).
    pub bias: f64,
    /// Monte-Carlo standard error of the mean estimate.
    pub mc_se: f64,
    pub coverage_se: Option<f64>,
    pub coverage_pl: Option<f64>,
}

/// Everything reported for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    /// Replications that converged and entered the averages.
    pub used: usize,
    pub n_nonconverged: usize,
    pub params: Vec<ParamSummary>,
    /// Bias rows for the scale-only refit, when requested.
    pub single_cox: Vec<ParamSummary>,
}

/// A cell together with its position and result; calibration failures keep
/// the grid going and surface here as an error string.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub index: usize,
    pub cell: Cell,
    pub result: std::result::Result<CellSummary, String>,
}

/// Test instrumentation for the study loop.
#[derive(Debug, Clone, Copy, Default)]
pub struct StudyHooks {
    /// Replace every interval with a stub to exercise the coverage
    /// bookkeeping: `AllCovering` must report coverage 1, `NeverCovering`
    /// coverage 0.
    pub interval_stub: Option<IntervalStub>,
    /// Fix this flattened parameter at its generating value during every
    /// fit; its bias must come out exactly zero.
    pub freeze_param: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalStub {
    AllCovering,
    NeverCovering,
}

fn stub_interval(kind: IntervalStub, level: f64, method: IntervalMethod) -> Interval {
    match kind {
        IntervalStub::AllCovering => Interval {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            level,
            method,
            reliable: true,
        },
        IntervalStub::NeverCovering => {
            Interval { lower: 1.0, upper: -1.0, level, method, reliable: true }
        }
    }
}

struct RepRecord {
    estimates: Vec<f64>,
    covers_se: Option<Vec<bool>>,
    covers_pl: Option<Vec<bool>>,
    single_cox: Option<Vec<f64>>,
}

/// Runs one cell: generate, fit, and measure every replication, then
/// aggregate. See [`run_cell_with_hooks`] for the instrumented variant.
pub fn run_cell(study: &StudyConfig, index: usize, cell: &Cell) -> CellOutcome {
    run_cell_with_hooks(study, index, cell, &StudyHooks::default())
}

pub fn run_cell_with_hooks(
    study: &StudyConfig,
    index: usize,
    cell: &Cell,
    hooks: &StudyHooks,
) -> CellOutcome {
    let result = run_cell_inner(study, index, cell, hooks);
    CellOutcome { index, cell: cell.clone(), result }
}

fn run_cell_inner(
    study: &StudyConfig,
    index: usize,
    cell: &Cell,
    hooks: &StudyHooks,
) -> std::result::Result<CellSummary, String> {
    let base = cell.sim_config(study, replication_seed(study.master_seed, index as u64, 0));
    base.validate().map_err(|e| e.to_string())?;
    let plan = if cell.p_cens == 0.0 {
        CensoringPlan::none()
    } else {
        calibrate_theta(&base).map_err(|e| format!("calibration failed: {e}"))?
    };
    let spec = spec_for(&base).map_err(|e| e.to_string())?;
    let truth = cell.true_params();
    let truth_flat = truth.flatten();
    let single_spec = ModelSpec {
        family: cell.family,
        scale_terms: spec.scale_terms.clone(),
        shape_terms: Vec::new(),
    };

    let records: Vec<Option<RepRecord>> = (0..study.replications)
        .into_par_iter()
        .map(|rep| {
            let seed = replication_seed(study.master_seed, index as u64, rep as u64);
            let config = SimConfig { seed, ..base.clone() };
            run_replication(study, &config, &plan, &spec, &single_spec, &truth_flat, hooks)
        })
        .collect();

    let used_records: Vec<&RepRecord> = records.iter().flatten().collect();
    let used = used_records.len();
    if used == 0 {
        return Err(format!("no replication converged out of {}", study.replications));
    }

    let names = spec.param_names(&covariate_name_vec());
    let mut params = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let estimates: Vec<f64> = used_records.iter().map(|r| r.estimates[j]).collect();
        let coverage = |per_rep: &dyn Fn(&RepRecord) -> Option<bool>| -> Option<f64> {
            let mut hits = 0usize;
            for record in &used_records {
                match per_rep(record) {
                    Some(true) => hits += 1,
                    Some(false) => {}
                    None => return None,
                }
            }
            Some(hits as f64 / used as f64)
        };
        params.push(ParamSummary {
            name: name.clone(),
            truth: truth_flat[j],
            mean: mean(&estimates),
            bias: mean_deviation(&estimates, truth_flat[j]),
            mc_se: mc_se(&estimates),
            coverage_se: coverage(&|r| r.covers_se.as_ref().map(|c| c[j])),
            coverage_pl: coverage(&|r| r.covers_pl.as_ref().map(|c| c[j])),
        });
    }

    let mut single_cox = Vec::new();
    if study.fit_single_cox {
        let single_estimates: Vec<&Vec<f64>> =
            used_records.iter().filter_map(|r| r.single_cox.as_ref()).collect();
        if !single_estimates.is_empty() {
            let single_names = single_spec.param_names(&covariate_name_vec());
            let single_truth = ParameterVector {
                a: truth.a,
                b: truth.b,
                beta_scale: truth.beta_scale.clone(),
                beta_shape: Vec::new(),
                sigma2: truth.sigma2,
            }
            .flatten();
            for (j, name) in single_names.iter().enumerate() {
                let estimates: Vec<f64> = single_estimates.iter().map(|e| e[j]).collect();
                single_cox.push(ParamSummary {
                    name: format!("single_cox.{name}"),
                    truth: single_truth[j],
                    mean: mean(&estimates),
                    bias: mean_deviation(&estimates, single_truth[j]),
                    mc_se: mc_se(&estimates),
                    coverage_se: None,
                    coverage_pl: None,
                });
            }
        }
    }

    Ok(CellSummary {
        used,
        n_nonconverged: study.replications - used,
        params,
        single_cox,
    })
}

fn covariate_name_vec() -> Vec<String> {
    COVARIATE_NAMES.iter().map(|s| s.to_string()).collect()
}

#[allow(clippy::too_many_arguments)]
fn run_replication(
    study: &StudyConfig,
    config: &SimConfig,
    plan: &CensoringPlan,
    spec: &ModelSpec,
    single_spec: &ModelSpec,
    truth_flat: &[f64],
    hooks: &StudyHooks,
) -> Option<RepRecord> {
    let opts = FitOptions::default();
    let data = generate_dataset(config, plan).ok()?;

    let want_se = study.interval_methods.contains(&IntervalMethod::Se);
    let want_pl = study.interval_methods.contains(&IntervalMethod::Profile);

    let (estimates, fit_result) = match hooks.freeze_param {
        Some(j) => {
            let problem = DataLoglik { data: &data, spec };
            let init = crate::estimation::default_init(&data, spec);
            let outcome = maximize_loglik(
                &problem,
                &init,
                Some((j, truth_flat[j])),
                BranchPolicy::Both,
                &opts,
            )
            .ok()?;
            if !outcome.converged {
                return None;
            }
            (outcome.params.flatten(), None)
        }
        None => {
            let result = fit(&data, spec, &opts, None).ok()?;
            if !result.converged {
                return None;
            }
            (result.estimates.flatten(), Some(result))
        }
    };

    let coverage_for = |method: IntervalMethod| -> Option<Vec<bool>> {
        if let Some(kind) = hooks.interval_stub {
            let interval = stub_interval(kind, study.level, method);
            return Some(truth_flat.iter().map(|&t| covers(&interval, t)).collect());
        }
        let result = fit_result.as_ref()?;
        Some(
            (0..truth_flat.len())
                .map(|j| {
                    let interval = match method {
                        IntervalMethod::Se => se_interval(result, j, study.level),
                        IntervalMethod::Profile => {
                            profile_interval(&data, spec, result, j, study.level, &opts)
                        }
                    };
                    match interval {
                        Ok(interval) => covers(&interval, truth_flat[j]),
                        Err(_) => false,
                    }
                })
                .collect(),
        )
    };
    let covers_se = if want_se { coverage_for(IntervalMethod::Se) } else { None };
    let covers_pl = if want_pl { coverage_for(IntervalMethod::Profile) } else { None };

    let single_cox = if study.fit_single_cox {
        fit(&data, single_spec, &opts, None)
            .ok()
            .filter(|r| r.converged)
            .map(|r| r.estimates.flatten())
    } else {
        None
    };

    Some(RepRecord { estimates, covers_se, covers_pl, single_cox })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn mean_deviation(values: &[f64], truth: f64) -> f64 {
    values.iter().map(|v| v - truth).sum::<f64>() / values.len() as f64
}

fn mc_se(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Grid driver with persistence

/// Runs every cell of the grid. With an output directory, each completed
/// cell is persisted as `cell_NNN.csv` inside `study-<config hash>/`, and
/// `resume` reuses any persisted cell instead of recomputing it. Failed
/// cells are reported but never persisted, so a rerun retries them.
pub fn run_grid(
    study: &StudyConfig,
    out_dir: Option<&Path>,
    resume: bool,
) -> Result<Vec<CellOutcome>> {
    study.validate()?;
    let run_dir: Option<PathBuf> = match out_dir {
        None => None,
        Some(dir) => {
            let run_dir = dir.join(format!("study-{:016x}", config_hash(study)));
            std::fs::create_dir_all(&run_dir)?;
            Some(run_dir)
        }
    };
    let cells = enumerate_cells(study);
    let mut outcomes = Vec::with_capacity(cells.len());
    for (index, cell) in cells.iter().enumerate() {
        let path = run_dir.as_ref().map(|d| d.join(format!("cell_{index:03}.csv")));
        if resume {
            if let Some(path) = &path {
                if let Ok(text) = std::fs::read_to_string(path) {
                    if let Ok(summary) = parse_cell_summary(&text) {
                        outcomes.push(CellOutcome {
                            index,
                            cell: cell.clone(),
                            result: Ok(summary),
                        });
                        continue;
                    }
                }
            }
        }
        let outcome = run_cell(study, index, cell);
        if let (Some(path), Ok(summary)) = (&path, &outcome.result) {
            std::fs::write(path, render_cell_summary(summary))?;
        }
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

/// run directory name component: a stable 64-bit FNV-1a hash of the full
/// config rendered in a canonical form.
pub fn config_hash(study: &StudyConfig) -> u64 {
    let canonical = format!(
        "families={:?};n={:?};n_clusters={:?};p_cens={:?};p_success={:?};beta_scale={:?};\
         beta_shape={:?};sigma2={:?};baseline_weibull={:?};baseline_gompertz={:?};\
         replications={};master_seed={};interval_methods={:?};level={:?};fit_single_cox={};\
         score_sd={:?};mc_n={}",
        study.families.iter().map(|f| f.as_str()).collect::<Vec<_>>(),
        study.n,
        study.n_clusters,
        study.p_cens,
        study.p_success,
        study.beta_scale,
        study.beta_shape,
        study.sigma2,
        study.baseline_weibull,
        study.baseline_gompertz,
        study.replications,
        study.master_seed,
        study.interval_methods.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
        study.level,
        study.fit_single_cox,
        study.score_sd,
        study.mc_n,
    );
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in canonical.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

// ---------------------------------------------------------------------------
// Cell persistence (full precision, parse-exact)

fn render_param_row(out: &mut String, section: &str, p: &ParamSummary) {
    let coverage = |c: Option<f64>| c.map(|v| format!("{v:.16e}")).unwrap_or_default();
    out.push_str(&format!(
        "{section},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{}\n",
        p.name,
        p.truth,
        p.mean,
        p.bias,
        p.mc_se,
        coverage(p.coverage_se),
        coverage(p.coverage_pl),
    ));
}

fn render_cell_summary(summary: &CellSummary) -> String {
    let mut out = String::new();
    out.push_str("used,n_nonconverged\n");
    out.push_str(&format!("{},{}\n", summary.used, summary.n_nonconverged));
    out.push_str("section,name,truth,mean,bias,mc_se,coverage_se,coverage_pl\n");
    for p in &summary.params {
        render_param_row(&mut out, "param", p);
    }
    for p in &summary.single_cox {
        render_param_row(&mut out, "single_cox", p);
    }
    out
}

fn parse_cell_summary(text: &str) -> Result<CellSummary> {
    let mut lines = text.lines();
    let bad = |what: &str| Error::Parse(format!("cell file: {what}"));
    if lines.next() != Some("used,n_nonconverged") {
        return Err(bad("missing count header"));
    }
    let counts = lines.next().ok_or_else(|| bad("missing counts"))?;
    let mut count_fields = counts.split(',');
    let used: usize = count_fields
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("bad used count"))?;
    let n_nonconverged: usize = count_fields
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("bad non-convergence count"))?;
    if lines.next() != Some("section,name,truth,mean,bias,mc_se,coverage_se,coverage_pl") {
        return Err(bad("missing row header"));
    }
    let mut params = Vec::new();
    let mut single_cox = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(bad(&format!("expected 8 fields, found {}", fields.len())));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|_| bad(&format!("bad number '{}'", fields[i])))
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if fields[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let row = ParamSummary {
            name: fields[1].to_string(),
            truth: num(2)?,
            mean: num(3)?,
            bias: num(4)?,
            mc_se: num(5)?,
            coverage_se: opt(6)?,
            coverage_pl: opt(7)?,
        };
        match fields[0] {
            "param" => params.push(row),
            "single_cox" => single_cox.push(row),
            other => return Err(bad(&format!("unknown section '{other}'"))),
        }
    }
    if params.is_empty() {
        return Err(bad("no parameter rows"));
    }
    Ok(CellSummary { used, n_nonconverged, params, single_cox })
}

// ---------------------------------------------------------------------------
// Reports

fn pattern_label(pattern: &[f64]) -> String {
    if pattern.is_empty() {
        "none".to_string()
    } else {
        pattern.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join("/")
    }
}

fn sig6(value: f64) -> String {
    format!("{value:.5e}")
}

fn opt_sig6(value: Option<f64>) -> String {
    value.map(sig6).unwrap_or_default()
}

/// One CSV row per cell and parameter, numbers at six significant digits.
/// A failed cell contributes a single row whose `parameter` field carries
/// the error message.
pub fn report_csv(outcomes: &[CellOutcome]) -> String {
    let mut out = String::new();
    out.push_str(
        "family,n,n_clusters,p_cens,p_success,beta_scale,beta_shape,sigma2,parameter,\
         truth,mean,bias,mc_se,coverage_se,coverage_pl,n_nonconverged\n",
    );
    for outcome in outcomes {
        let cell = &outcome.cell;
        let prefix = format!(
            "{},{},{},{},{},{},{},{}",
            cell.family,
            cell.n,
            cell.n_clusters,
            cell.p_cens,
            cell.p_success,
            pattern_label(&cell.beta_scale),
            pattern_label(&cell.beta_shape),
            cell.sigma2,
        );
        match &outcome.result {
            Err(message) => {
                let clean = message.replace(',', ";");
                out.push_str(&format!("{prefix},error: {clean},,,,,,,\n"));
            }
            Ok(summary) => {
                for p in summary.params.iter().chain(&summary.single_cox) {
                    out.push_str(&format!(
                        "{prefix},{},{},{},{},{},{},{},{}\n",
                        p.name,
                        sig6(p.truth),
                        sig6(p.mean),
                        sig6(p.bias),
                        sig6(p.mc_se),
                        opt_sig6(p.coverage_se),
                        opt_sig6(p.coverage_pl),
                        summary.n_nonconverged,
                    ));
                }
            }
        }
    }
    out
}

/// Markdown report: one table per family, cells grouped in grid order.
pub fn report_markdown(outcomes: &[CellOutcome]) -> String {
    let mut out = String::from("# Simulation study report\n");
    let mut families: Vec<Family> = Vec::new();
    for outcome in outcomes {
        if !families.contains(&outcome.cell.family) {
            families.push(outcome.cell.family);
        }
    }
    for family in families {
        out.push_str(&format!("\n## {family}\n\n"));
        out.push_str(
            "| n | clusters | p_cens | p_success | beta_scale | beta_shape | sigma2 \
             | parameter | truth | mean | bias | mc_se | cov(se) | cov(pl) | non-conv |\n",
        );
        out.push_str(
            "|---|---|---|---|---|---|---|---|---|---|---|---|---|---|---|\n",
        );
        for outcome in outcomes.iter().filter(|o| o.cell.family == family) {
            let cell = &outcome.cell;
            let prefix = format!(
                "| {} | {} | {} | {} | {} | {} | {} ",
                cell.n,
                cell.n_clusters,
                cell.p_cens,
                cell.p_success,
                pattern_label(&cell.beta_scale),
                pattern_label(&cell.beta_shape),
                cell.sigma2,
            );
            match &outcome.result {
                Err(message) => {
                    out.push_str(&format!(
                        "{prefix}| failed: {} | | | | | | | |\n",
                        message.replace('|', "/")
                    ));
                }
                Ok(summary) => {
                    for p in summary.params.iter().chain(&summary.single_cox) {
                        out.push_str(&format!(
                            "{prefix}| {} | {} | {} | {} | {} | {} | {} | {} |\n",
                            p.name,
                            sig6(p.truth),
                            sig6(p.mean),
                            sig6(p.bias),
                            sig6(p.mc_se),
                            opt_sig6(p.coverage_se),
                            opt_sig6(p.coverage_pl),
                            summary.n_nonconverged,
                        ));
                    }
                }
            }
        }
    }
    out
}
