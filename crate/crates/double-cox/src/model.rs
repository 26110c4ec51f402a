//! Hazard families with Cox-type covariate terms on both scale and shape.
//!
//! Both families share the structure: a baseline hazard with scale-like
//! parameter `a` and shape-like parameter `b`, a multiplicative covariate
//! effect `exp(beta_scale . u)` on the cumulative hazard, and a covariate
//! effect on the shape through `k = b * exp(beta_shape . u)`. A subject with
//! frailty `z` has conditional survival `exp(-z * H(t|u))`; integrating a
//! unit-mean gamma frailty with variance `sigma2` out gives the marginal
//! survival `(1 + sigma2 * H)^(-1/sigma2)`.

use crate::error::{Error, Result};

/// Baseline hazard family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `H(t|u) = exp(bs.u) * (t/a)^k` with `k = b * exp(bsh.u)`.
    Weibull,
    /// `H(t|u) = a * exp(bs.u) * (exp(k t) - 1) / k` with `k = b * exp(bsh.u)`.
    Gompertz,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Weibull => "weibull",
            Family::Gompertz => "gompertz",
        }
    }

    pub fn parse(name: &str) -> Result<Family> {
        match name.trim().to_ascii_lowercase().as_str() {
            "weibull" => Ok(Family::Weibull),
            "gompertz" => Ok(Family::Gompertz),
            other => Err(Error::Parse(format!(
                "unknown family '{other}' (expected 'weibull' or 'gompertz')"
            ))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One observed subject: a follow-up time, an event flag (`true` when the
/// failure was observed, `false` when censored), the cluster it belongs to,
/// and its covariate values.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub time: f64,
    pub event: bool,
    pub cluster: String,
    pub covariates: Vec<f64>,
}

/// Which covariates enter the scale term and which enter the shape term.
/// Entries index into `SubjectRecord::covariates`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub family: Family,
    pub scale_terms: Vec<usize>,
    pub shape_terms: Vec<usize>,
}

impl ModelSpec {
    pub fn new(family: Family, scale_terms: Vec<usize>, shape_terms: Vec<usize>) -> Self {
        ModelSpec { family, scale_terms, shape_terms }
    }

    /// Checks that term indices are in range for `n_covariates` and that no
    /// covariate is repeated within one term list.
    pub fn validate(&self, n_covariates: usize) -> Result<()> {
        for (label, terms) in [("scale", &self.scale_terms), ("shape", &self.shape_terms)] {
            for (pos, &idx) in terms.iter().enumerate() {
                if idx >= n_covariates {
                    return Err(Error::argument(
                        "ModelSpec",
                        format!(
                            "{label} term index {idx} out of range for {n_covariates} covariates"
                        ),
                    ));
                }
                if terms[..pos].contains(&idx) {
                    return Err(Error::argument(
                        "ModelSpec",
                        format!("{label} terms repeat covariate index {idx}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Number of free parameters: `a`, `b`, the regression coefficients, and
    /// the frailty variance.
    pub fn n_params(&self) -> usize {
        3 + self.scale_terms.len() + self.shape_terms.len()
    }

    /// Human-readable parameter names in flattened order.
    pub fn param_names(&self, covariate_names: &[String]) -> Vec<String> {
        let term_name = |idx: usize| {
            covariate_names.get(idx).cloned().unwrap_or_else(|| format!("cov{idx}"))
        };
        let mut names = vec!["a".to_string(), "b".to_string()];
        names.extend(self.scale_terms.iter().map(|&i| format!("beta_scale.{}", term_name(i))));
        names.extend(self.shape_terms.iter().map(|&i| format!("beta_shape.{}", term_name(i))));
        names.push("sigma2".to_string());
        names
    }
}

/// Model parameters in natural units.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub a: f64,
    pub b: f64,
    pub beta_scale: Vec<f64>,
    pub beta_shape: Vec<f64>,
    pub sigma2: f64,
}

impl ParameterVector {
    pub fn new(
        a: f64,
        b: f64,
        beta_scale: Vec<f64>,
        beta_shape: Vec<f64>,
        sigma2: f64,
    ) -> Self {
        ParameterVector { a, b, beta_scale, beta_shape, sigma2 }
    }

    /// Checks positivity of `a` and `b`, nonnegativity of `sigma2`,
    /// finiteness throughout, and coefficient counts against `spec`.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::argument("ParameterVector", format!("a = {} must be > 0", self.a)));
        }
        if !(self.b.is_finite() && self.b > 0.0) {
            return Err(Error::argument("ParameterVector", format!("b = {} must be > 0", self.b)));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(Error::argument(
                "ParameterVector",
                format!("sigma2 = {} must be >= 0", self.sigma2),
            ));
        }
        if self.beta_scale.len() != spec.scale_terms.len() {
            return Err(Error::argument(
                "ParameterVector",
                format!(
                    "beta_scale has {} entries but the model spec lists {} scale terms",
                    self.beta_scale.len(),
                    spec.scale_terms.len()
                ),
            ));
        }
        if self.beta_shape.len() != spec.shape_terms.len() {
            return Err(Error::argument(
                "ParameterVector",
                format!(
                    "beta_shape has {} entries but the model spec lists {} shape terms",
                    self.beta_shape.len(),
                    spec.shape_terms.len()
                ),
            ));
        }
        if self.beta_scale.iter().chain(&self.beta_shape).any(|v| !v.is_finite()) {
            return Err(Error::argument("ParameterVector", "non-finite coefficient".to_string()));
        }
        Ok(())
    }

    /// Flattened natural-parameter order: `a, b, beta_scale.., beta_shape.., sigma2`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 + self.beta_scale.len() + self.beta_shape.len());
        out.push(self.a);
        out.push(self.b);
        out.extend_from_slice(&self.beta_scale);
        out.extend_from_slice(&self.beta_shape);
        out.push(self.sigma2);
        out
    }

    /// Inverse of [`flatten`](Self::flatten) for a model with the given term counts.
    pub fn from_flat(flat: &[f64], n_scale: usize, n_shape: usize) -> Result<Self> {
        if flat.len() != 3 + n_scale + n_shape {
            return Err(Error::argument(
                "ParameterVector::from_flat",
                format!("expected {} values, got {}", 3 + n_scale + n_shape, flat.len()),
            ));
        }
        Ok(ParameterVector {
            a: flat[0],
            b: flat[1],
            beta_scale: flat[2..2 + n_scale].to_vec(),
            beta_shape: flat[2 + n_scale..2 + n_scale + n_shape].to_vec(),
            sigma2: flat[2 + n_scale + n_shape],
        })
    }

    pub fn dim(&self) -> usize {
        3 + self.beta_scale.len() + self.beta_shape.len()
    }

    /// Index of `sigma2` in the flattened order: always the last slot.
    pub fn sigma2_index(&self) -> usize {
        self.dim() - 1
    }
}

pub(crate) fn linear_predictor(beta: &[f64], terms: &[usize], u: &[f64]) -> f64 {
    let mut lp = 0.0;
    for (coef, &idx) in beta.iter().zip(terms) {
        lp += coef * u[idx];
    }
    lp
}

fn check_covariates(spec: &ModelSpec, u: &[f64]) -> Result<()> {
    spec.validate(u.len())?;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::argument("covariates", "non-finite covariate value".to_string()));
    }
    Ok(())
}

/// Cumulative hazard and log hazard computed together from pre-assembled
/// pieces, so likelihood evaluations pay for the linear predictors and logs
/// only once. `ln_t` must equal `t.ln()` (any value is accepted when `t == 0`,
/// where the Weibull branch short-circuits).
pub(crate) fn hazard_terms(
    family: Family,
    a: f64,
    ln_a: f64,
    b: f64,
    ln_b: f64,
    lp_scale: f64,
    lp_shape: f64,
    t: f64,
    ln_t: f64,
) -> Result<(f64, f64)> {
    let k = b * lp_shape.exp();
    if !k.is_finite() || k <= 0.0 {
        return Err(Error::domain(
            "hazard",
            format!("shape k = b*exp(beta_shape.u) = {k:.6e} at b = {b:.6e}, bsh.u = {lp_shape:.6e}"),
        ));
    }
    let ln_k = ln_b + lp_shape;
    match family {
        Family::Weibull => {
            if t == 0.0 {
                if k < 1.0 {
                    return Err(Error::domain(
                        "hazard",
                        format!("Weibull hazard diverges at t = 0 for shape k = {k:.6e} < 1"),
                    ));
                }
                // H(0) = 0; the hazard itself is 0 for k > 1 and exp(bs.u)/a for k = 1.
                let log_h =
                    if k == 1.0 { lp_scale - ln_a } else { f64::NEG_INFINITY };
                return Ok((0.0, log_h));
            }
            let ln_hh = lp_scale + k * (ln_t - ln_a);
            if ln_hh > 709.0 {
                return Err(Error::domain(
                    "hazard",
                    format!(
                        "Weibull cumulative hazard overflows: exp({ln_hh:.3e}) at t = {t:.6e}, \
                         a = {a:.6e}, k = {k:.6e}"
                    ),
                ));
            }
            let big_h = ln_hh.exp();
            // h(t) = (k/t) * H(t), so log h = ln k - ln t + ln H.
            let log_h = ln_k - ln_t + ln_hh;
            Ok((big_h, log_h))
        }
        Family::Gompertz => {
            let kt = k * t;
            if kt > 700.0 {
                return Err(Error::domain(
                    "hazard",
                    format!(
                        "Gompertz exponent k*t = {kt:.3e} exceeds 700 at t = {t:.6e}, k = {k:.6e}"
                    ),
                ));
            }
            let scale = a * lp_scale.exp();
            let big_h = scale * kt.exp_m1() / k;
            if !big_h.is_finite() {
                return Err(Error::domain(
                    "hazard",
                    format!(
                        "Gompertz cumulative hazard overflows at t = {t:.6e}, a = {a:.6e}, \
                         k = {k:.6e}, bs.u = {lp_scale:.6e}"
                    ),
                ));
            }
            let log_h = ln_a + lp_scale + kt;
            Ok((big_h, log_h))
        }
    }
}

/// Cumulative hazard `H(t|u)` for a subject with covariates `u` at time `t`.
pub fn cumulative_hazard(
    params: &ParameterVector,
    spec: &ModelSpec,
    u: &[f64],
    t: f64,
) -> Result<f64> {
    params.validate(spec)?;
    check_covariates(spec, u)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::argument("cumulative_hazard", format!("t = {t} must be >= 0")));
    }
    let lp_s = linear_predictor(&params.beta_scale, &spec.scale_terms, u);
    let lp_sh = linear_predictor(&params.beta_shape, &spec.shape_terms, u);
    let ln_t = if t > 0.0 { t.ln() } else { 0.0 };
    let (big_h, _) = hazard_terms(
        spec.family,
        params.a,
        params.a.ln(),
        params.b,
        params.b.ln(),
        lp_s,
        lp_sh,
        t,
        ln_t,
    )?;
    Ok(big_h)
}

/// Log hazard `ln h(t|u)`. Requires `t > 0` except where the hazard has a
/// finite or zero limit at the origin.
pub fn log_hazard(params: &ParameterVector, spec: &ModelSpec, u: &[f64], t: f64) -> Result<f64> {
    params.validate(spec)?;
    check_covariates(spec, u)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::argument("log_hazard", format!("t = {t} must be >= 0")));
    }
    let lp_s = linear_predictor(&params.beta_scale, &spec.scale_terms, u);
    let lp_sh = linear_predictor(&params.beta_shape, &spec.shape_terms, u);
    let ln_t = if t > 0.0 { t.ln() } else { 0.0 };
    let (_, log_h) = hazard_terms(
        spec.family,
        params.a,
        params.a.ln(),
        params.b,
        params.b.ln(),
        lp_s,
        lp_sh,
        t,
        ln_t,
    )?;
    Ok(log_h)
}

/// Survival probability conditional on the frailty value `z`:
/// `S(t | u, z) = exp(-z H(t|u))`.
pub fn conditional_survival(
    params: &ParameterVector,
    spec: &ModelSpec,
    u: &[f64],
    z: f64,
    t: f64,
) -> Result<f64> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::argument("conditional_survival", format!("z = {z} must be > 0")));
    }
    let big_h = cumulative_hazard(params, spec, u, t)?;
    Ok((-z * big_h).exp())
}

/// Survival probability with the gamma frailty integrated out:
/// `(1 + sigma2 H)^(-1/sigma2)`, continuously extended to `exp(-H)` at
/// `sigma2 = 0`.
pub fn marginal_survival(
    params: &ParameterVector,
    spec: &ModelSpec,
    u: &[f64],
    t: f64,
) -> Result<f64> {
    let big_h = cumulative_hazard(params, spec, u, t)?;
    if params.sigma2 == 0.0 {
        Ok((-big_h).exp())
    } else {
        Ok((-(params.sigma2 * big_h).ln_1p() / params.sigma2).exp())
    }
}
