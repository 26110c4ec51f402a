//! Shared numerical oracles for the integration tests.
//!
//! Everything here is computed independently of the library's own numerics:
//! quadrature nodes come from Newton iteration on Legendre polynomials, the
//! normal CDF from integrating the density, and log-gamma from a Stirling
//! series with upward recurrence. The point is that an agreement between the
//! library and these helpers is evidence, not circularity.

#![allow(dead_code)]

/// 20-point Gauss-Legendre nodes and weights on [-1, 1], computed by Newton
/// iteration from Chebyshev starting points. Exact for polynomials up to
/// degree 39; the test suite verifies that exactness.
pub fn gauss_legendre_20() -> Vec<(f64, f64)> {
    let n = 20usize;
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and its derivative.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 1..n {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out
}

/// Integrates `f` over [a, b] with a composite 20-point Gauss-Legendre rule
/// on `panels` equal subintervals.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre_20();
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        let mut acc = 0.0;
        for &(x, w) in &rule {
            acc += w * f(mid + half * x);
        }
        total += acc * half;
    }
    total
}

/// Standard normal density.
pub fn oracle_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF by quadrature of the density from zero. Accurate to
/// roughly 1e-14 for |x| <= 8; clamps beyond that.
pub fn oracle_normal_cdf(x: f64) -> f64 {
    if x > 8.5 {
        return 1.0;
    }
    if x < -8.5 {
        return 0.0;
    }
    let tail = integrate(oracle_normal_pdf, 0.0, x.abs(), 16);
    if x >= 0.0 {
        0.5 + tail
    } else {
        0.5 - tail
    }
}

/// Error function by Taylor series, good to ~1e-14 for |x| <= 3.
pub fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        let nf = n as f64;
        term *= -x * x / nf;
        let add = term / (2.0 * nf + 1.0);
        sum += add;
        if add.abs() < 1e-18 * sum.abs().max(1e-18) {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

/// Log-gamma via the Stirling series after shifting the argument above 20
/// with the recurrence `Gamma(x+1) = x Gamma(x)`. Independent of the
/// library's Lanczos implementation.
pub fn stirling_ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "stirling_ln_gamma needs x > 0, got {x}");
    let mut shift = 0.0;
    let mut z = x;
    while z < 20.0 {
        shift -= z.ln();
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            + inv2 * (-1.0 / 360.0 + inv2 * (1.0 / 1260.0 + inv2 * (-1.0 / 1680.0 + inv2 / 1188.0))));
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series + shift
}

/// Tiny deterministic RNG for oracle-side sampling, deliberately unrelated to
/// the library's generators (splitmix64 core, Box-Muller normals).
pub struct TestRng {
    state: u64,
    spare_normal: Option<f64>,
}

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng { state: seed, spare_normal: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform on (0, 1).
    pub fn open01(&mut self) -> f64 {
        loop {
            let u = self.uniform();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.open01();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Conditional cumulative hazard and log-hazard at frailty 1, written out
/// from the hazard definitions independently of the library's model code.
pub fn oracle_hazard(
    family: double_cox::Family,
    p: &double_cox::ParameterVector,
    spec: &double_cox::ModelSpec,
    u: &[f64],
    t: f64,
) -> (f64, f64) {
    let lp_s: f64 = spec.scale_terms.iter().zip(&p.beta_scale).map(|(&i, b)| b * u[i]).sum();
    let lp_sh: f64 = spec.shape_terms.iter().zip(&p.beta_shape).map(|(&i, b)| b * u[i]).sum();
    let k = p.b * lp_sh.exp();
    match family {
        double_cox::Family::Weibull => {
            let big_h = lp_s.exp() * (t / p.a).powf(k);
            let log_h = lp_s + k.ln() + (k - 1.0) * t.ln() - k * p.a.ln();
            (big_h, log_h)
        }
        double_cox::Family::Gompertz => {
            let big_h = p.a * lp_s.exp() * ((k * t).exp() - 1.0) / k;
            let log_h = p.a.ln() + lp_s + k * t;
            (big_h, log_h)
        }
    }
}

/// Empirical p-quantile of a sample (linear interpolation between order
/// statistics).
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// gamma(s, x) = int_0^x t^(s-1) e^-t dt by composite quadrature after the
/// substitution t = e^y, which turns the integrand into the entire function
/// exp(s y - e^y) and removes the endpoint singularity for every s.
pub fn oracle_lower_gamma(s: f64, x: f64) -> f64 {
    let y_hi = x.ln();
    // Below y_lo the integrand tail is under 1e-12 of the total.
    let y_lo = y_hi - (x + 45.0) / s - 5.0;
    integrate(|y| (s * y - y.exp()).exp(), y_lo, y_hi, 2000)
}

/// E1(x) = int_0^inf exp(-x e^v) dv (substitute t = x e^v in the defining
/// integral); the integrand is smooth on the whole range.
pub fn oracle_e1(x: f64) -> f64 {
    let upper = (745.0 / x).ln().max(1.0);
    integrate(|v| (-x * v.exp()).exp(), 0.0, upper, 200)
}

/// Cluster log-likelihood by quadrature over the gamma frailty:
/// log E[Z^D e^(-Z H)] + sum of event log-hazards, with the expectation
/// integrated as int z^(alpha+D-1) e^(-z(H+alpha)) dz / (Gamma(alpha)
/// sigma^(2 alpha)) after the substitution z = e^y.
pub fn oracle_cluster_loglik(
    family: double_cox::Family,
    p: &double_cox::ParameterVector,
    spec: &double_cox::ModelSpec,
    subjects: &[(f64, bool, Vec<f64>)],
) -> f64 {
    let mut d = 0.0;
    let mut h_sum = 0.0;
    let mut log_h_sum = 0.0;
    for (t, event, u) in subjects {
        let (big_h, log_h) = oracle_hazard(family, p, spec, u, *t);
        h_sum += big_h;
        if *event {
            d += 1.0;
            log_h_sum += log_h;
        }
    }
    if p.sigma2 == 0.0 {
        return log_h_sum - h_sum;
    }
    let alpha = 1.0 / p.sigma2;
    let c = alpha + d;
    let rate = h_sum + alpha;
    let y_hi = (60.0 / rate).ln();
    let y_lo = -rate.ln() - 45.0 / c - 5.0;
    let integral = integrate(|y| (c * y - rate * y.exp()).exp(), y_lo, y_hi, 2000);
    integral.ln() - stirling_ln_gamma(alpha) - alpha * p.sigma2.ln() + log_h_sum
}

/// A random small cluster (sizes 1 to 3) with parameter values in the ranges
/// where both families put appreciable mass at the drawn times. The caller
/// sets sigma2.
pub fn random_cluster(
    rng: &mut TestRng,
    family: double_cox::Family,
) -> (double_cox::ParameterVector, double_cox::ModelSpec, Vec<(f64, bool, Vec<f64>)>) {
    let spec = double_cox::ModelSpec::new(family, vec![0, 1], vec![0, 1]);
    let (a, b) = match family {
        double_cox::Family::Weibull => (rng.range(0.5, 30.0), rng.range(0.5, 3.0)),
        double_cox::Family::Gompertz => (rng.range(0.01, 0.2), rng.range(0.05, 0.3)),
    };
    let params = double_cox::ParameterVector::new(
        a,
        b,
        vec![rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)],
        vec![rng.range(-0.3, 0.3), rng.range(-0.3, 0.3)],
        0.0, // caller sets sigma2
    );
    let size = 1 + (rng.next_u64() % 3) as usize;
    let subjects: Vec<(f64, bool, Vec<f64>)> = (0..size)
        .map(|_| {
            let t = match family {
                double_cox::Family::Weibull => a * rng.range(0.2, 1.5),
                double_cox::Family::Gompertz => rng.range(0.5, 15.0),
            };
            let u = vec![f64::from(rng.uniform() < 0.5), rng.normal() * 0.45];
            (t, rng.uniform() < 0.7, u)
        })
        .collect();
    (params, spec, subjects)
}

/// Draws one value from the boundary mixture law of sqrt(n)(est_j - truth_j):
/// take (X1, X2) from the bivariate normal with mean (0, nu) and covariance
/// sigma; if X2 >= 0 the draw is X1 (that branch has probability
/// Phi(nu/kappa), exactly the truncated component's weight), otherwise an
/// independent normal with the boundary-conditional mean and variance.
pub fn draw_mixture(rng: &mut TestRng, sigma: &nalgebra::DMatrix<f64>, nu: f64) -> f64 {
    let s11 = sigma[(0, 0)];
    let s12 = sigma[(0, 1)];
    let s22 = sigma[(1, 1)];
    // Cholesky of the 2x2.
    let l11 = s11.sqrt();
    let l21 = s12 / l11;
    let l22 = (s22 - l21 * l21).sqrt();
    let z1 = rng.normal();
    let z2 = rng.normal();
    let x1 = l11 * z1;
    let x2 = nu + l21 * z1 + l22 * z2;
    if x2 >= 0.0 {
        x1
    } else {
        let cond_sd = (s11 - s12 * s12 / s22).sqrt();
        -(s12 / s22) * nu + cond_sd * rng.normal()
    }
}

/// Separable objective whose profile deviance in the first scale coefficient
/// is exactly 10 (xi - 2)^2.
pub struct QuadraticProfile;

impl double_cox::estimation::LogLikelihood for QuadraticProfile {
    fn loglik(&self, params: &double_cox::ParameterVector) -> double_cox::Result<f64> {
        let beta = params.beta_scale[0];
        Ok(-5.0 * (beta - 2.0).powi(2)
            - 0.5 * params.a.ln().powi(2)
            - 0.5 * params.b.ln().powi(2)
            - params.sigma2)
    }

    fn n_scale(&self) -> usize {
        1
    }

    fn n_shape(&self) -> usize {
        0
    }
}

pub fn quadratic_fit_result() -> double_cox::estimation::FitResult {
    double_cox::estimation::FitResult {
        estimates: double_cox::ParameterVector::new(1.0, 1.0, vec![2.0], vec![], 0.0),
        loglik: 0.0,
        converged: true,
        iterations: 1,
        covariance: None, // forces the fallback bracketing step 0.1|xi| + 0.1
        covariance_pseudo_inverse: false,
        at_boundary: true,
        n: 100,
        n_events: 100,
    }
}
