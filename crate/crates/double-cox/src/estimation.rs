//! Maximum likelihood estimation.
//!
//! The optimizer is a BFGS quasi-Newton method with central finite-difference
//! gradients, run in transformed coordinates `(ln a, ln b, beta.., gamma)`
//! with `sigma2 = gamma^2` so every iterate is feasible. Because `gamma = 0`
//! is a stationary point of the reparameterization, the fit runs two
//! branches, one with the frailty variance pinned at zero and one with it
//! free, and reports whichever attains the higher log-likelihood. Standard
//! errors come from the central finite-difference Hessian of the negative
//! log-likelihood in the natural parameters `(a, b, beta.., sigma2)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::likelihood::{DataLoglik, Dataset};
use crate::model::{ModelSpec, ParameterVector};
use crate::seeding::stream_seed;
use crate::Family;

/// Anything that can be maximized over a [`ParameterVector`].
///
/// `loglik` returns `Err` at infeasible points; the optimizer treats those as
/// rejected trial steps rather than propagating the error.
pub trait LogLikelihood: Sync {
    fn loglik(&self, params: &ParameterVector) -> Result<f64>;
    fn n_scale(&self) -> usize;
    fn n_shape(&self) -> usize;
}

/// Tuning knobs for the optimizer and the finite-difference machinery.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Hard cap on quasi-Newton iterations per branch.
    pub max_iterations: usize,
    /// Relative log-likelihood change below which progress counts as stalled.
    pub loglik_tol: f64,
    /// Infinity-norm gradient threshold (transformed coordinates), applied
    /// relative to `1 + |loglik|` so the test stays attainable in double
    /// precision when the objective is large.
    pub grad_tol: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Fitted frailty variances below this are reported as exactly zero.
    pub boundary_eps: f64,
    /// Extra random restarts beyond the default initial point.
    pub multistart: usize,
    /// Seed for multistart perturbations.
    pub multistart_seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 500,
            loglik_tol: 1e-9,
            grad_tol: 1e-5,
            fd_step: 1e-5,
            boundary_eps: 1e-6,
            multistart: 0,
            multistart_seed: 0,
        }
    }
}

/// Everything `fit` reports.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub estimates: ParameterVector,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Inverse observed information in natural parameters (an estimate of
    /// the asymptotic covariance of the estimates). `None` when the Hessian
    /// could not even be evaluated.
    pub covariance: Option<DMatrix<f64>>,
    /// True when the covariance fell back to a pseudo-inverse because the
    /// observed information was singular or not positive definite.
    pub covariance_pseudo_inverse: bool,
    /// True when the frailty variance estimate sits at the boundary zero.
    pub at_boundary: bool,
    /// Number of observations, kept for interval scaling.
    pub n: usize,
    pub n_events: usize,
}

/// Outcome of one (possibly constrained) maximization, without covariance.
#[derive(Debug, Clone)]
pub struct MaximizeOutcome {
    pub params: ParameterVector,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub at_boundary: bool,
}

/// How the nuisance maximization treats the frailty-variance boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchPolicy {
    /// Always run both the pinned-zero and the free branch (used by `fit`).
    Both,
    /// Run the free branch from the warm start and fall back to the zero
    /// branch only if the free branch lands at the boundary (profile probes).
    Adaptive,
}

// ---------------------------------------------------------------------------
// Transformed coordinate space

/// Maps between the optimizer's unconstrained coordinates and natural
/// parameters. The gamma slot (when present) carries `sigma2 = gamma^2`; one
/// additional coordinate may be pinned for constrained (profile) fits.
struct Space {
    n_scale: usize,
    n_shape: usize,
    /// Whether sigma2 varies through a gamma coordinate.
    gamma: bool,
    /// Fixed sigma2 when `gamma` is false.
    sigma2_value: f64,
    /// Pinned transformed coordinate (full-space index, value); never the
    /// gamma slot.
    pin: Option<(usize, f64)>,
}

impl Space {
    fn full_dim(&self) -> usize {
        2 + self.n_scale + self.n_shape + usize::from(self.gamma)
    }

    fn active_dim(&self) -> usize {
        self.full_dim() - usize::from(self.pin.is_some())
    }

    fn expand(&self, active: &[f64]) -> Vec<f64> {
        match self.pin {
            None => active.to_vec(),
            Some((at, value)) => {
                let mut full = Vec::with_capacity(self.full_dim());
                full.extend_from_slice(&active[..at]);
                full.push(value);
                full.extend_from_slice(&active[at..]);
                full
            }
        }
    }

    fn reduce(&self, full: &[f64]) -> Vec<f64> {
        match self.pin {
            None => full.to_vec(),
            Some((at, _)) => {
                let mut active = Vec::with_capacity(self.active_dim());
                active.extend_from_slice(&full[..at]);
                active.extend_from_slice(&full[at + 1..]);
                active
            }
        }
    }

    fn params_from_full(&self, full: &[f64]) -> ParameterVector {
        let ns = self.n_scale;
        let nsh = self.n_shape;
        let sigma2 = if self.gamma {
            let g = full[2 + ns + nsh];
            g * g
        } else {
            self.sigma2_value
        };
        ParameterVector {
            a: full[0].exp(),
            b: full[1].exp(),
            beta_scale: full[2..2 + ns].to_vec(),
            beta_shape: full[2 + ns..2 + ns + nsh].to_vec(),
            sigma2,
        }
    }

    fn full_from_params(&self, p: &ParameterVector) -> Vec<f64> {
        let mut full = Vec::with_capacity(self.full_dim());
        full.push(p.a.ln());
        full.push(p.b.ln());
        full.extend_from_slice(&p.beta_scale);
        full.extend_from_slice(&p.beta_shape);
        if self.gamma {
            full.push(p.sigma2.max(0.0).sqrt());
        }
        full
    }
}

// ---------------------------------------------------------------------------
// Finite differences

/// Central finite-difference gradient with per-coordinate relative steps
/// `step * max(1, |x_i|)`. Infeasible side points are retried with the step
/// shrunk up to twice; `None` if a coordinate stays unevaluable.
pub fn fd_gradient<F>(f: &F, x: &[f64], step: f64) -> Option<Vec<f64>>
where
    F: Fn(&[f64]) -> Option<f64> + ?Sized,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let mut h = step * x[i].abs().max(1.0);
        let mut ok = false;
        for _ in 0..3 {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            if let (Some(up), Some(down)) = (up, down) {
                grad[i] = (up - down) / (2.0 * h);
                ok = true;
                break;
            }
            h /= 8.0;
        }
        if !ok {
            return None;
        }
    }
    Some(grad)
}

struct Minimized {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

/// BFGS minimization with backtracking line search. Trial points where `f`
/// returns `None` are treated as infeasible (rejected by the line search).
/// Accepted iterates have strictly non-increasing objective values.
fn minimize<F>(f: &F, x0: &[f64], opts: &FitOptions) -> Result<Minimized>
where
    F: Fn(&[f64]) -> Option<f64> + ?Sized,
{
    let dim = x0.len();
    if dim == 0 {
        let f0 = f(x0)
            .ok_or_else(|| Error::NonConvergence("objective infeasible at start".to_string()))?;
        return Ok(Minimized { x: vec![], f: f0, iterations: 0, converged: true });
    }
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice())
        .ok_or_else(|| Error::NonConvergence("objective infeasible at start".to_string()))?;
    let mut grad = match fd_gradient(f, x.as_slice(), opts.fd_step) {
        Some(g) => DVector::from_vec(g),
        None => {
            return Err(Error::NonConvergence(
                "gradient unevaluable at the starting point".to_string(),
            ))
        }
    };

    let mut inv_hessian = DMatrix::<f64>::identity(dim, dim);
    let mut first_update_pending = true;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iterations {
        iterations += 1;

        let mut direction = -(&inv_hessian * &grad);
        if direction.dot(&grad) >= 0.0 {
            // Curvature information went bad; restart from steepest descent.
            inv_hessian = DMatrix::identity(dim, dim);
            first_update_pending = true;
            direction = -grad.clone();
        }
        // Cap the raw step so a single iterate cannot jump to absurd scales.
        let dir_inf = direction.amax();
        if dir_inf > 10.0 {
            direction *= 10.0 / dir_inf;
        }

        let slope = direction.dot(&grad);
        let mut alpha = 1.0;
        let mut accepted: Option<(DVector<f64>, f64)> = None;
        for _ in 0..60 {
            let candidate = &x + alpha * &direction;
            if let Some(fc) = f(candidate.as_slice()) {
                if fc <= fx + 1e-4 * alpha * slope {
                    accepted = Some((candidate, fc));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // No acceptable step along this direction; report where we stand.
            converged = grad.amax() <= opts.grad_tol * (1.0 + fx.abs());
            break;
        };

        let grad_new = match fd_gradient(f, x_new.as_slice(), opts.fd_step) {
            Some(g) => DVector::from_vec(g),
            None => {
                x = x_new;
                fx = f_new;
                converged = false;
                break;
            }
        };

        let s = &x_new - &x;
        let y = &grad_new - &grad;
        let sy = s.dot(&y);
        if sy > 1e-10 * s.norm() * y.norm() {
            if first_update_pending {
                let yy = y.dot(&y);
                if yy > 0.0 {
                    inv_hessian = DMatrix::identity(dim, dim) * (sy / yy);
                }
                first_update_pending = false;
            }
            // BFGS inverse update: B <- (I - r s y') B (I - r y s') + r s s'.
            let rho = 1.0 / sy;
            let by = &inv_hessian * &y;
            let yby = y.dot(&by);
            let ss = &s * s.transpose();
            let bys = &by * s.transpose();
            inv_hessian = inv_hessian - (&bys + bys.transpose()) * rho
                + &ss * (rho * rho * yby + rho);
        }

        let rel_change = (fx - f_new).abs() / (1.0 + f_new.abs());
        x = x_new;
        fx = f_new;
        grad = grad_new;
        if rel_change <= opts.loglik_tol && grad.amax() <= opts.grad_tol * (1.0 + fx.abs()) {
            converged = true;
            break;
        }
    }

    Ok(Minimized { x: x.as_slice().to_vec(), f: fx, iterations, converged })
}

// ---------------------------------------------------------------------------
// Branch orchestration

fn objective<'a>(
    problem: &'a dyn LogLikelihood,
    space: &'a Space,
) -> impl Fn(&[f64]) -> Option<f64> + 'a {
    move |active: &[f64]| {
        let full = space.expand(active);
        let params = space.params_from_full(&full);
        match problem.loglik(&params) {
            Ok(ll) if ll.is_finite() => Some(-ll),
            _ => None,
        }
    }
}

fn run_branch(
    problem: &dyn LogLikelihood,
    space: &Space,
    init: &ParameterVector,
    opts: &FitOptions,
) -> Result<Minimized> {
    let full0 = space.full_from_params(init);
    let x0 = space.reduce(&full0);
    let f = objective(problem, space);
    let mut best = minimize(&f, &x0, opts)?;
    if opts.multistart > 0 {
        for restart in 0..opts.multistart {
            let mut rng = ChaCha12Rng::seed_from_u64(stream_seed(
                opts.multistart_seed,
                &format!("multistart-{restart}"),
            ));
            let mut x0r = x0.clone();
            for v in x0r.iter_mut() {
                *v += rng.random_range(-0.5..0.5);
            }
            if let Ok(m) = minimize(&f, &x0r, opts) {
                if m.f < best.f {
                    best = m;
                }
            }
        }
    }
    Ok(best)
}

fn outcome_from(space: &Space, m: Minimized, at_boundary: bool) -> MaximizeOutcome {
    let full = space.expand(&m.x);
    MaximizeOutcome {
        params: space.params_from_full(&full),
        loglik: -m.f,
        iterations: m.iterations,
        converged: m.converged,
        at_boundary,
    }
}

/// Maximizes the log-likelihood, optionally with one natural parameter held
/// fixed (`fixed = (flat index, value)`), handling the frailty-variance
/// boundary by branching.
///
/// The reported log-likelihood never falls below the pinned-zero branch's
/// optimum; equality holds exactly when the estimate is at the boundary.
pub fn maximize_loglik(
    problem: &dyn LogLikelihood,
    init: &ParameterVector,
    fixed: Option<(usize, f64)>,
    policy: BranchPolicy,
    opts: &FitOptions,
) -> Result<MaximizeOutcome> {
    let ns = problem.n_scale();
    let nsh = problem.n_shape();
    let sigma2_idx = 2 + ns + nsh;

    // A fixed sigma2 removes the branching entirely.
    if let Some((idx, value)) = fixed {
        if idx == sigma2_idx {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::argument(
                    "maximize_loglik",
                    format!("fixed sigma2 = {value} must be >= 0"),
                ));
            }
            let space =
                Space { n_scale: ns, n_shape: nsh, gamma: false, sigma2_value: value, pin: None };
            let m = run_branch(problem, &space, init, opts)?;
            return Ok(outcome_from(&space, m, value == 0.0));
        }
    }

    // Transformed pin for non-sigma2 coordinates: ln for a and b.
    let pin = match fixed {
        None => None,
        Some((idx, value)) => {
            if idx < 2 {
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::argument(
                        "maximize_loglik",
                        format!("fixed parameter {idx} = {value} must be > 0"),
                    ));
                }
                Some((idx, value.ln()))
            } else if idx < sigma2_idx {
                Some((idx, value))
            } else {
                return Err(Error::argument(
                    "maximize_loglik",
                    format!("fixed parameter index {idx} out of range"),
                ));
            }
        }
    };

    let zero_space =
        Space { n_scale: ns, n_shape: nsh, gamma: false, sigma2_value: 0.0, pin };
    let free_space =
        Space { n_scale: ns, n_shape: nsh, gamma: true, sigma2_value: 0.0, pin };

    let mut free_init = init.clone();
    if free_init.sigma2 <= opts.boundary_eps {
        free_init.sigma2 = 0.5;
    }

    let (zero, free) = match policy {
        BranchPolicy::Both => {
            let zero = run_branch(problem, &zero_space, init, opts)?;
            let free = run_branch(problem, &free_space, &free_init, opts)?;
            (Some(zero), free)
        }
        BranchPolicy::Adaptive => {
            let free = run_branch(problem, &free_space, &free_init, opts)?;
            let free_sigma2 = {
                let full = free_space.expand(&free.x);
                free_space.params_from_full(&full).sigma2
            };
            if free_sigma2 < opts.boundary_eps {
                let zero = run_branch(problem, &zero_space, init, opts)?;
                (Some(zero), free)
            } else {
                (None, free)
            }
        }
    };

    let free_params = free_space.params_from_full(&free_space.expand(&free.x));
    let mut out = match zero {
        Some(zero) => {
            let free_wins =
                -free.f > -zero.f && free_params.sigma2 >= opts.boundary_eps;
            if free_wins {
                outcome_from(&free_space, free, false)
            } else {
                outcome_from(&zero_space, zero, true)
            }
        }
        None => {
            let at_boundary = free_params.sigma2 < opts.boundary_eps;
            let mut out = outcome_from(&free_space, free, at_boundary);
            if at_boundary {
                out.params.sigma2 = 0.0;
            }
            out
        }
    };
    if let Some((idx, value)) = fixed {
        // A pin on a or b round-trips through log coordinates, which can
        // move it by an ulp; report the requested value exactly.
        let mut flat = out.params.flatten();
        flat[idx] = value;
        out.params = ParameterVector::from_flat(&flat, ns, nsh)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Initial values

/// Default starting point: moment-style baseline parameters, zero
/// coefficients, frailty variance 0.5.
pub fn default_init(data: &Dataset, spec: &ModelSpec) -> ParameterVector {
    let mut times: Vec<f64> = data.subjects().iter().map(|s| s.time).collect();
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    let d = data.n_events().max(1) as f64;
    let (a0, b0) = match spec.family {
        Family::Weibull => (median / std::f64::consts::LN_2, 1.0),
        Family::Gompertz => {
            // Match the expected event count at beta = 0, z = 1. The shape
            // start is capped so extreme time scales stay evaluable.
            let max_t = times[times.len() - 1];
            let b0 = 0.1f64.min(300.0 / max_t);
            let denom: f64 = times.iter().map(|&t| (b0 * t).exp_m1() / b0).sum();
            let a0 = if denom.is_finite() && denom > 0.0 { d / denom } else { d / times.iter().sum::<f64>() };
            (a0, b0)
        }
    };
    ParameterVector {
        a: a0,
        b: b0,
        beta_scale: vec![0.0; spec.scale_terms.len()],
        beta_shape: vec![0.0; spec.shape_terms.len()],
        sigma2: 0.5,
    }
}

fn check_fittable(data: &Dataset, spec: &ModelSpec) -> Result<()> {
    spec.validate(data.covariate_names().len())?;
    if data.n_events() == 0 {
        return Err(Error::InvalidData("dataset has no observed events".to_string()));
    }
    let mut used: Vec<usize> = spec.scale_terms.iter().chain(&spec.shape_terms).copied().collect();
    used.sort_unstable();
    used.dedup();
    for idx in used {
        let first = data.subjects()[0].covariates[idx];
        if data.subjects().iter().all(|s| s.covariates[idx] == first) {
            let name = data
                .covariate_names()
                .get(idx)
                .cloned()
                .unwrap_or_else(|| format!("cov{idx}"));
            return Err(Error::InvalidData(format!(
                "covariate '{name}' is constant; its effect is not identifiable"
            )));
        }
    }
    Ok(())
}

/// Fits the model by maximum likelihood and attaches the inverse observed
/// information.
pub fn fit(
    data: &Dataset,
    spec: &ModelSpec,
    opts: &FitOptions,
    init: Option<&ParameterVector>,
) -> Result<FitResult> {
    check_fittable(data, spec)?;
    let problem = DataLoglik { data, spec };
    let start = match init {
        Some(p) => {
            p.validate(spec)?;
            p.clone()
        }
        None => default_init(data, spec),
    };
    let outcome = maximize_loglik(&problem, &start, None, BranchPolicy::Both, opts)?;

    let (covariance, pseudo) = match observed_information_covariance(
        data,
        spec,
        &outcome.params,
        opts,
    ) {
        Ok(cov) => (Some(cov), false),
        Err(Error::Conditioning { .. }) => {
            match neg_loglik_hessian_for(&problem, &outcome.params, opts) {
                Ok(h) => {
                    let (pinv, _) = pseudo_inverse(&h);
                    (Some(pinv), true)
                }
                Err(_) => (None, false),
            }
        }
        Err(_) => (None, false),
    };

    Ok(FitResult {
        estimates: outcome.params,
        loglik: outcome.loglik,
        converged: outcome.converged,
        iterations: outcome.iterations,
        covariance,
        covariance_pseudo_inverse: pseudo,
        at_boundary: outcome.at_boundary,
        n: data.n(),
        n_events: data.n_events(),
    })
}

// ---------------------------------------------------------------------------
// Observed information

/// Central finite-difference Hessian of the negative log-likelihood in the
/// natural parameters. At the frailty boundary (`sigma2 = 0`) the sigma2
/// row/column uses one-sided differences into the feasible region; positive
/// parameters get their steps shrunk rather than stepping out of the domain.
fn fd_hessian<F>(f: &F, at: &[f64], fd_step: f64, lower_bounded: &[bool]) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Option<f64> + ?Sized,
{
    let dim = at.len();
    let feval = |x: &[f64]| -> Result<f64> {
        f(x).ok_or_else(|| {
            Error::domain("observed_information", "objective unevaluable near the estimate".to_string())
        })
    };
    let f0 = feval(at)?;

    // Step sizes: relative, kept inside the feasible region for bounded
    // coordinates. Hessian steps use the square root scaling heuristic
    // already folded into fd_step's default.
    let mut steps = vec![0.0; dim];
    let mut one_sided = vec![false; dim];
    for i in 0..dim {
        let mut h = fd_step.max(fd_step * at[i].abs());
        if lower_bounded[i] {
            if at[i] == 0.0 {
                one_sided[i] = true;
            } else if at[i] - h <= 0.0 {
                h = at[i] / 2.0;
            }
        }
        steps[i] = h;
    }

    let mut hess = DMatrix::<f64>::zeros(dim, dim);
    let mut probe = at.to_vec();

    for i in 0..dim {
        let h = steps[i];
        if one_sided[i] {
            probe[i] = at[i] + h;
            let f1 = feval(&probe)?;
            probe[i] = at[i] + 2.0 * h;
            let f2 = feval(&probe)?;
            probe[i] = at[i];
            hess[(i, i)] = (f2 - 2.0 * f1 + f0) / (h * h);
        } else {
            probe[i] = at[i] + h;
            let fp = feval(&probe)?;
            probe[i] = at[i] - h;
            let fm = feval(&probe)?;
            probe[i] = at[i];
            hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        }
    }

    for i in 0..dim {
        for j in (i + 1)..dim {
            let hi = steps[i];
            let hj = steps[j];
            let value = if one_sided[i] || one_sided[j] {
                // One-sided in the boundary coordinate, central in the other.
                let (bi, bj, hb, ho) =
                    if one_sided[i] { (i, j, hi, hj) } else { (j, i, hj, hi) };
                probe[bi] = at[bi] + hb;
                probe[bj] = at[bj] + ho;
                let fpp = feval(&probe)?;
                probe[bj] = at[bj] - ho;
                let fpm = feval(&probe)?;
                probe[bi] = at[bi];
                probe[bj] = at[bj] + ho;
                let f0p = feval(&probe)?;
                probe[bj] = at[bj] - ho;
                let f0m = feval(&probe)?;
                probe[bi] = at[bi];
                probe[bj] = at[bj];
                (fpp - fpm - f0p + f0m) / (2.0 * hb * ho)
            } else {
                probe[i] = at[i] + hi;
                probe[j] = at[j] + hj;
                let fpp = feval(&probe)?;
                probe[j] = at[j] - hj;
                let fpm = feval(&probe)?;
                probe[i] = at[i] - hi;
                probe[j] = at[j] + hj;
                let fmp = feval(&probe)?;
                probe[j] = at[j] - hj;
                let fmm = feval(&probe)?;
                probe[i] = at[i];
                probe[j] = at[j];
                (fpp - fpm - fmp + fmm) / (4.0 * hi * hj)
            };
            hess[(i, j)] = value;
            hess[(j, i)] = value;
        }
    }

    // Symmetrize to wash out one-sided asymmetries.
    let hess_t = hess.transpose();
    Ok((hess + hess_t) * 0.5)
}

fn neg_loglik_hessian_for(
    problem: &dyn LogLikelihood,
    at: &ParameterVector,
    opts: &FitOptions,
) -> Result<DMatrix<f64>> {
    let ns = problem.n_scale();
    let nsh = problem.n_shape();
    let flat = at.flatten();
    let dim = flat.len();
    let mut lower_bounded = vec![false; dim];
    lower_bounded[0] = true;
    lower_bounded[1] = true;
    lower_bounded[dim - 1] = true;
    let f = |x: &[f64]| -> Option<f64> {
        let params = ParameterVector::from_flat(x, ns, nsh).ok()?;
        match problem.loglik(&params) {
            Ok(ll) if ll.is_finite() => Some(-ll),
            _ => None,
        }
    };
    fd_hessian(&f, &flat, opts.fd_step, &lower_bounded)
}

/// Inverts a symmetric Hessian through its eigendecomposition, rejecting
/// singular or non-positive-definite matrices.
pub fn covariance_from_hessian(hessian: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = hessian.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let min_eig = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(min_eig > 0.0) || max_abs == 0.0 || min_eig < 1e-12 * max_abs {
        return Err(Error::Conditioning { min_eigenvalue: min_eig });
    }
    let mut inv_diag = eig.eigenvalues.clone();
    for v in inv_diag.iter_mut() {
        *v = 1.0 / *v;
    }
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&inv_diag) * v.transpose())
}

/// Moore-Penrose style fallback: eigenvalues at or below the conditioning
/// threshold are dropped. Returns the inverse and the smallest eigenvalue of
/// the input.
pub fn pseudo_inverse(hessian: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let eig = hessian.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let min_eig = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let mut inv_diag = eig.eigenvalues.clone();
    for v in inv_diag.iter_mut() {
        *v = if *v > 1e-12 * max_abs { 1.0 / *v } else { 0.0 };
    }
    let v = &eig.eigenvectors;
    (v * DMatrix::from_diagonal(&inv_diag) * v.transpose(), min_eig)
}

/// Inverse observed information at `at` for the given data and model, in
/// natural parameters.
pub fn observed_information_covariance(
    data: &Dataset,
    spec: &ModelSpec,
    at: &ParameterVector,
    opts: &FitOptions,
) -> Result<DMatrix<f64>> {
    at.validate(spec)?;
    spec.validate(data.covariate_names().len())?;
    let problem = DataLoglik { data, spec };
    let hessian = neg_loglik_hessian_for(&problem, at, opts)?;
    covariance_from_hessian(&hessian)
}

/// Generic version of [`observed_information_covariance`] for any
/// log-likelihood implementation; used to validate the finite-difference
/// machinery against analytically known objectives.
pub fn observed_information_covariance_for(
    problem: &dyn LogLikelihood,
    at: &ParameterVector,
    opts: &FitOptions,
) -> Result<DMatrix<f64>> {
    let hessian = neg_loglik_hessian_for(problem, at, opts)?;
    covariance_from_hessian(&hessian)
}
