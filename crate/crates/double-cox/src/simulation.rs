//! Synthetic clustered survival data.
//!
//! Subjects carry two covariates: `success` (Bernoulli) and `score`
//! (centered normal). Each cluster shares one gamma frailty with mean 1 and
//! variance `sigma2`. Survival times come from the inverse CDF of the
//! conditional distribution; censoring times are uniform on `(0, theta]`
//! with `theta` calibrated by Monte Carlo so the expected fraction of
//! censored records hits a requested rate.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::likelihood::Dataset;
use crate::model::{linear_predictor, Family, ModelSpec, ParameterVector, SubjectRecord};
use crate::seeding::stream_seed;
use crate::special::{exp_integral_e1_scaled, ln_lower_incomplete_gamma};

/// Names of the generated covariates, in dataset column order.
pub const COVARIATE_NAMES: [&str; 2] = ["success", "score"];

/// Everything needed to generate one synthetic dataset.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub family: Family,
    /// Number of subjects.
    pub n: usize,
    /// Number of clusters; subjects are spread as evenly as possible.
    pub n_clusters: usize,
    /// Bernoulli probability of `success`.
    pub p_success: f64,
    /// Standard deviation of `score`.
    pub score_sd: f64,
    /// Generating parameter values. Coefficient vectors may be shorter than
    /// the covariate list; covariate `i` enters through coefficient `i`.
    pub true_params: ParameterVector,
    /// Target censoring proportion, zero for no censoring.
    pub p_cens: f64,
    pub seed: u64,
    /// Monte-Carlo sample count used by censoring calibration.
    pub mc_n: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.n < self.n_clusters {
            return Err(Error::argument(
                "SimConfig",
                format!("need n >= n_clusters >= 1, got n = {}, n_clusters = {}", self.n, self.n_clusters),
            ));
        }
        if !(0.0..=1.0).contains(&self.p_success) {
            return Err(Error::argument("SimConfig", format!("p_success = {}", self.p_success)));
        }
        if !(self.score_sd.is_finite() && self.score_sd >= 0.0) {
            return Err(Error::argument("SimConfig", format!("score_sd = {}", self.score_sd)));
        }
        if !(0.0..1.0).contains(&self.p_cens) {
            return Err(Error::argument(
                "SimConfig",
                format!("p_cens = {} must lie in [0, 1)", self.p_cens),
            ));
        }
        if self.mc_n == 0 {
            return Err(Error::argument("SimConfig", "mc_n must be positive".to_string()));
        }
        let spec = spec_for(self)?;
        self.true_params.validate(&spec)
    }

    /// Parses `key = value` text. Required keys: `family`, `n`,
    /// `n_clusters`, `a`, `b`. Optional: `beta_scale`, `beta_shape`
    /// (comma-separated), `sigma2`, `p_success`, `score_sd`, `p_cens`,
    /// `seed`, `mc_n`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut family = None;
        let mut n = None;
        let mut n_clusters = None;
        let mut p_success = 0.5;
        let mut score_sd = 0.2f64.sqrt();
        let mut p_cens = 0.0;
        let mut seed = 0u64;
        let mut mc_n = 1_000_000usize;
        let mut a = None;
        let mut b = None;
        let mut beta_scale = Vec::new();
        let mut beta_shape = Vec::new();
        let mut sigma2 = 0.0;

        for (key, value, line) in crate::io::parse_key_values(text)? {
            let fail = |detail: String| Error::Parse(format!("line {line}: {detail}"));
            match key.as_str() {
                "family" => family = Some(Family::parse(&value)?),
                "n" => n = Some(parse_num::<usize>(&value, &key, line)?),
                "n_clusters" => n_clusters = Some(parse_num::<usize>(&value, &key, line)?),
                "p_success" => p_success = parse_num(&value, &key, line)?,
                "score_sd" => score_sd = parse_num(&value, &key, line)?,
                "p_cens" => p_cens = parse_num(&value, &key, line)?,
                "seed" => seed = parse_num(&value, &key, line)?,
                "mc_n" => mc_n = parse_num(&value, &key, line)?,
                "a" => a = Some(parse_num(&value, &key, line)?),
                "b" => b = Some(parse_num(&value, &key, line)?),
                "beta_scale" => beta_scale = parse_num_list(&value, &key, line)?,
                "beta_shape" => beta_shape = parse_num_list(&value, &key, line)?,
                "sigma2" => sigma2 = parse_num(&value, &key, line)?,
                other => return Err(fail(format!("unknown key '{other}'"))),
            }
        }

        let missing = |name: &str| Error::Parse(format!("missing required key '{name}'"));
        let config = SimConfig {
            family: family.ok_or_else(|| missing("family"))?,
            n: n.ok_or_else(|| missing("n"))?,
            n_clusters: n_clusters.ok_or_else(|| missing("n_clusters"))?,
            p_success,
            score_sd,
            true_params: ParameterVector {
                a: a.ok_or_else(|| missing("a"))?,
                b: b.ok_or_else(|| missing("b"))?,
                beta_scale,
                beta_shape,
                sigma2,
            },
            p_cens,
            seed,
            mc_n,
        };
        config.validate()?;
        Ok(config)
    }
}

pub(crate) fn parse_num<T: std::str::FromStr>(value: &str, key: &str, line: usize) -> Result<T> {
    value.trim().parse().map_err(|_| {
        Error::Parse(format!("line {line}: key '{key}': cannot parse '{}'", value.trim()))
    })
}

pub(crate) fn parse_num_list<T: std::str::FromStr>(
    value: &str,
    key: &str,
    line: usize,
) -> Result<Vec<T>> {
    let trimmed = value.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    trimmed.split(',').map(|item| parse_num(item, key, line)).collect()
}

/// Model structure implied by a config: covariate `i` enters the scale
/// (shape) term iff `true_params.beta_scale` (`beta_shape`) has an `i`-th
/// coefficient.
pub fn spec_for(config: &SimConfig) -> Result<ModelSpec> {
    let spec = ModelSpec {
        family: config.family,
        scale_terms: (0..config.true_params.beta_scale.len()).collect(),
        shape_terms: (0..config.true_params.beta_shape.len()).collect(),
    };
    spec.validate(COVARIATE_NAMES.len())?;
    Ok(spec)
}

/// Uniform censoring on `(0, theta]`, or none when the target rate is zero.
#[derive(Debug, Clone)]
pub struct CensoringPlan {
    pub theta: Option<f64>,
    /// Monte-Carlo estimate of the censoring rate the plan achieves.
    pub achieved_rate_estimate: f64,
}

impl CensoringPlan {
    pub fn none() -> Self {
        CensoringPlan { theta: None, achieved_rate_estimate: 0.0 }
    }
}

// ---------------------------------------------------------------------------
// Survival-time draws

/// Inverse-CDF draw: the unique `t` with `z H(t | u) = -log s`, where `s` is
/// a uniform variate on (0, 1). Worked in log space so extreme scales stay
/// representable.
pub fn draw_survival_time(
    params: &ParameterVector,
    spec: &ModelSpec,
    covariates: &[f64],
    z: f64,
    s: f64,
) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::argument(
            "draw_survival_time",
            format!("s = {s} must lie strictly inside (0, 1)"),
        ));
    }
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::argument("draw_survival_time", format!("z = {z} must be > 0")));
    }
    let lp_scale = linear_predictor(&params.beta_scale, &spec.scale_terms, covariates);
    let lp_shape = linear_predictor(&params.beta_shape, &spec.shape_terms, covariates);
    let k = params.b * lp_shape.exp();
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::domain("draw_survival_time", format!("shape k = {k}")));
    }
    // ln(-ln s): s is strictly inside (0,1), so -ln s is positive and finite.
    let ln_target = (-s.ln()).ln();
    let t = match spec.family {
        // z e^{lp} (t/a)^k = -ln s  =>  t = a exp((ln(-ln s) - lp - ln z)/k)
        Family::Weibull => params.a * ((ln_target - lp_scale - z.ln()) / k).exp(),
        // z a e^{lp} (e^{kt}-1)/k = -ln s  =>  kt = ln1p(k(-ln s)/(z a e^{lp}))
        Family::Gompertz => {
            let ln_ratio = ln_target + k.ln() - params.a.ln() - lp_scale - z.ln();
            softplus(ln_ratio) / k
        }
    };
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::domain(
            "draw_survival_time",
            format!("generated time {t} from s = {s}, z = {z}"),
        ));
    }
    Ok(t)
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 36.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

// ---------------------------------------------------------------------------
// Censoring probability

/// Probability that a subject with covariates `u` and frailty `z` is
/// censored under `C ~ Uni(0, theta)`: the average survival
/// `theta^{-1} int_0^theta S(c | u, z) dc`.
///
/// Closed forms: Weibull reduces to a lower incomplete gamma function,
/// Gompertz to a difference of exponential integrals. See
/// [`individual_censor_prob_detailed`] for the quadrature fallback.
pub fn individual_censor_prob(
    params: &ParameterVector,
    spec: &ModelSpec,
    covariates: &[f64],
    z: f64,
    theta: f64,
) -> Result<f64> {
    individual_censor_prob_detailed(params, spec, covariates, z, theta).map(|(p, _)| p)
}

/// As [`individual_censor_prob`], also reporting whether the value came from
/// the quadrature fallback rather than a closed form. The Gompertz form
/// falls back when `k theta` is large enough to overflow `e^{k theta}` or so
/// small that the two exponential-integral terms cancel.
pub fn individual_censor_prob_detailed(
    params: &ParameterVector,
    spec: &ModelSpec,
    covariates: &[f64],
    z: f64,
    theta: f64,
) -> Result<(f64, bool)> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::argument(
            "individual_censor_prob",
            format!("theta = {theta} must be > 0"),
        ));
    }
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::argument("individual_censor_prob", format!("z = {z} must be > 0")));
    }
    let lp_scale = linear_predictor(&params.beta_scale, &spec.scale_terms, covariates);
    let lp_shape = linear_predictor(&params.beta_shape, &spec.shape_terms, covariates);
    let k = params.b * lp_shape.exp();
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::domain("individual_censor_prob", format!("shape k = {k}")));
    }
    match spec.family {
        Family::Weibull => {
            // theta^{-1} int_0^theta exp(-z e^{lp} (c/a)^k) dc
            //   = (a/(theta k)) (z e^{lp})^{-1/k} gamma(1/k, z e^{lp} (theta/a)^k),
            // assembled in log space; the gamma argument may round to
            // infinity, in which case the incomplete gamma saturates.
            let ln_ze = z.ln() + lp_scale;
            let ln_x = ln_ze + k * (theta.ln() - params.a.ln());
            let x = ln_x.exp();
            let ln_p = params.a.ln() - theta.ln() - k.ln() - ln_ze / k
                + ln_lower_incomplete_gamma(1.0 / k, x)?;
            Ok((ln_p.exp().clamp(0.0, 1.0), false))
        }
        Family::Gompertz => {
            // With lambda = z a e^{lp}: the survival integral is
            //   (e^{x1}/(theta k)) (E1(x1) - E1(x2)),
            // x1 = lambda/k, x2 = x1 e^{k theta}. Scaled E1 keeps the
            // leading factor bounded: e^{x1} E1(x2) = e^{x1-x2} E1s(x2).
            let ln_lambda = z.ln() + params.a.ln() + lp_scale;
            let x1 = (ln_lambda - k.ln()).exp();
            let ktheta = k * theta;
            if ktheta > 700.0 || ktheta < 1e-6 || !x1.is_finite() || x1 == 0.0 {
                return Ok((censor_prob_quadrature(params.a, lp_scale, k, z, theta), true));
            }
            let x2 = x1 * ktheta.exp();
            let diff = exp_integral_e1_scaled(x1)?
                - (x1 - x2).exp() * exp_integral_e1_scaled(x2)?;
            Ok(((diff / (theta * k)).clamp(0.0, 1.0), false))
        }
    }
}

/// Adaptive-quadrature evaluation of the average Gompertz survival over
/// `(0, theta)`. Handles hazard overflow by treating survival as zero.
fn censor_prob_quadrature(a: f64, lp_scale: f64, k: f64, z: f64, theta: f64) -> f64 {
    let survival = |c: f64| -> f64 {
        if c <= 0.0 {
            return 1.0;
        }
        let kc = k * c;
        if kc > 700.0 {
            return 0.0;
        }
        let zh = z * a * lp_scale.exp() * kc.exp_m1() / k;
        if zh > 700.0 {
            0.0
        } else {
            (-zh).exp()
        }
    };
    let integral = crate::intervals::adaptive_simpson(&survival, 0.0, theta, 1e-11 * theta, 52);
    (integral / theta).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Calibration

/// Finds `theta` so the expected censoring rate matches `config.p_cens`.
///
/// Draws `mc_n` (frailty, covariate) triples once from a seed-derived
/// stream, estimates the population censoring rate at a candidate `theta`
/// as the mean of [`individual_censor_prob`] over those fixed triples, and
/// solves for the target by bracketing and bisection. Reusing one draw set
/// at every probe makes the estimated rate a deterministic, monotone
/// function of `theta`, so the root is well defined; the mean itself is
/// computed in fixed-size chunks so the result is bit-identical at any
/// worker count.
pub fn calibrate_theta(config: &SimConfig) -> Result<CensoringPlan> {
    config.validate()?;
    if config.p_cens == 0.0 {
        return Ok(CensoringPlan::none());
    }
    let spec = spec_for(config)?;
    let params = &config.true_params;
    let draws = calibration_draws(config);

    // Time scale for bracketing: the median baseline draw.
    let t_scale = draw_survival_time(params, &spec, &[0.0, 0.0], 1.0, 0.5)?;
    let rate_at = |theta: f64| -> Result<f64> {
        chunked_mean(&draws, |&(z, success, score)| {
            individual_censor_prob(params, &spec, &[success, score], z, theta)
        })
    };

    // The rate decreases in theta: tiny theta censors almost surely.
    let target = config.p_cens;
    let mut lo = t_scale;
    let mut lo_rate = rate_at(lo)?;
    let mut attempts = 0usize;
    while lo_rate < target {
        lo /= 4.0;
        attempts += 1;
        if lo < 1e-6 * t_scale {
            return Err(Error::Calibration(format!(
                "no lower bracket above {:.3e} for target rate {target}",
                1e-6 * t_scale
            )));
        }
        lo_rate = rate_at(lo)?;
    }
    let mut hi = t_scale.max(lo);
    while rate_at(hi)? > target {
        hi *= 4.0;
        attempts += 1;
        if hi > 1e6 * t_scale {
            return Err(Error::Calibration(format!(
                "no upper bracket below {:.3e} for target rate {target}",
                1e6 * t_scale
            )));
        }
    }
    let _ = attempts;

    while hi - lo > 1e-6 * 0.5 * (hi + lo) {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    Ok(CensoringPlan { theta: Some(theta), achieved_rate_estimate: rate_at(theta)? })
}

/// The fixed Monte-Carlo triples (frailty, success, score) behind
/// calibration, drawn from a dedicated stream of the config seed.
fn calibration_draws(config: &SimConfig) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha12Rng::seed_from_u64(stream_seed(config.seed, "calibration"));
    let frailty = FrailtySampler::new(config.true_params.sigma2);
    let score = Normal::new(0.0, config.score_sd).expect("validated score_sd");
    (0..config.mc_n)
        .map(|_| {
            let z = frailty.sample(&mut rng);
            let success = if rng.random_bool(config.p_success) { 1.0 } else { 0.0 };
            let score = score.sample(&mut rng);
            (z, success, score)
        })
        .collect()
}

/// Chunked mean: per-chunk sums run sequentially, chunks in parallel, and
/// the final reduction walks chunk results in slice order. The floating
/// point result therefore does not depend on the thread count.
fn chunked_mean<T, F>(items: &[T], f: F) -> Result<f64>
where
    T: Sync,
    F: Fn(&T) -> Result<f64> + Sync,
{
    const CHUNK: usize = 4096;
    let sums: Vec<Result<f64>> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut sum = 0.0;
            for item in chunk {
                sum += f(item)?;
            }
            Ok(sum)
        })
        .collect();
    let mut total = 0.0;
    for sum in sums {
        total += sum?;
    }
    Ok(total / items.len() as f64)
}

/// Mean-1 gamma frailty draws; degenerate at 1 when the variance is zero.
struct FrailtySampler {
    gamma: Option<Gamma<f64>>,
}

impl FrailtySampler {
    fn new(sigma2: f64) -> Self {
        let gamma = if sigma2 == 0.0 {
            None
        } else {
            Some(Gamma::new(1.0 / sigma2, sigma2).expect("validated sigma2"))
        };
        FrailtySampler { gamma }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match &self.gamma {
            None => 1.0,
            Some(gamma) => {
                // A zero draw is possible in floating point when the shape is
                // far below 1; the frailty must stay positive.
                loop {
                    let z = gamma.sample(rng);
                    if z > 0.0 {
                        return z;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Dataset generation

/// Internal draws retained for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct GenerationTrace {
    /// One frailty per cluster, cluster index order.
    pub frailties: Vec<f64>,
    /// Uncensored survival time per subject.
    pub survival_times: Vec<f64>,
    /// Censoring time per subject; infinite when censoring is off.
    pub censor_times: Vec<f64>,
    /// The uniform variate behind each survival time.
    pub uniforms: Vec<f64>,
}

/// Generates one dataset under the config and censoring plan.
pub fn generate_dataset(config: &SimConfig, plan: &CensoringPlan) -> Result<Dataset> {
    generate_dataset_traced(config, plan).map(|(data, _)| data)
}

/// As [`generate_dataset`], also returning the internal draws.
///
/// Subject `j` joins cluster `j mod n_clusters`, so cluster sizes differ by
/// at most one. All randomness flows from one seed-derived stream in a fixed
/// order (frailties first, then per subject: success, score, survival
/// uniform, censoring time), making output bit-identical across runs.
pub fn generate_dataset_traced(
    config: &SimConfig,
    plan: &CensoringPlan,
) -> Result<(Dataset, GenerationTrace)> {
    config.validate()?;
    if config.p_cens > 0.0 && plan.theta.is_none() {
        return Err(Error::argument(
            "generate_dataset",
            format!("p_cens = {} but the plan has no theta", config.p_cens),
        ));
    }
    if let Some(theta) = plan.theta {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::argument("generate_dataset", format!("theta = {theta}")));
        }
    }
    let spec = spec_for(config)?;
    let params = &config.true_params;
    let mut rng = ChaCha12Rng::seed_from_u64(stream_seed(config.seed, "generate"));

    let frailty = FrailtySampler::new(params.sigma2);
    let frailties: Vec<f64> = (0..config.n_clusters).map(|_| frailty.sample(&mut rng)).collect();
    let score_dist = Normal::new(0.0, config.score_sd).expect("validated score_sd");

    let mut subjects = Vec::with_capacity(config.n);
    let mut trace = GenerationTrace {
        frailties: frailties.clone(),
        survival_times: Vec::with_capacity(config.n),
        censor_times: Vec::with_capacity(config.n),
        uniforms: Vec::with_capacity(config.n),
    };
    for j in 0..config.n {
        let cluster = j % config.n_clusters;
        let success = if rng.random_bool(config.p_success) { 1.0 } else { 0.0 };
        let score = score_dist.sample(&mut rng);
        let s: f64 = rng.sample(Open01);
        let t = draw_survival_time(params, &spec, &[success, score], frailties[cluster], s)?;
        let c = match plan.theta {
            None => f64::INFINITY,
            Some(theta) => loop {
                let c = rng.random_range(0.0..theta);
                if c > 0.0 {
                    break c;
                }
            },
        };
        trace.survival_times.push(t);
        trace.censor_times.push(c);
        trace.uniforms.push(s);
        subjects.push(SubjectRecord {
            time: t.min(c),
            event: t <= c,
            cluster: cluster.to_string(),
            covariates: vec![success, score],
        });
    }
    let names = COVARIATE_NAMES.iter().map(|s| s.to_string()).collect();
    Ok((Dataset::new(subjects, names)?, trace))
}
