//! The special functions checked against quadrature of their defining
//! integrals and against series oracles that share no code with the library.

mod common;

use common::{
    erf_series, integrate, oracle_e1, oracle_lower_gamma, oracle_normal_cdf, stirling_ln_gamma,
    TestRng,
};
use double_cox::special::{
    exp_integral_e1, exp_integral_e1_scaled, ln_lower_incomplete_gamma, lower_incomplete_gamma,
    normal_cdf, normal_quantile,
};

#[test]
fn quadrature_rule_is_exact_for_high_degree_polynomials() {
    // Gauss-Legendre with 20 points integrates degree-39 polynomials
    // exactly; x^19 and sin validate the computed nodes and weights.
    let p = integrate(|x| x.powi(19), 0.0, 1.0, 1);
    assert!((p - 0.05).abs() < 1e-15, "x^19 integral off: {p}");
    let s = integrate(f64::sin, 0.0, std::f64::consts::PI, 4);
    assert!((s - 2.0).abs() < 1e-13, "sin integral off: {s}");
}

#[test]
fn oracle_helpers_agree_with_each_other() {
    // erf(x) = 2 Phi(x sqrt(2)) - 1 ties the series to the quadrature CDF.
    for &x in &[0.3, 1.0, 1.7, 2.5] {
        let via_cdf = 2.0 * oracle_normal_cdf(x * std::f64::consts::SQRT_2) - 1.0;
        assert!((erf_series(x) - via_cdf).abs() < 1e-13);
    }
    // ln Gamma(1/2) = ln sqrt(pi); ln Gamma(6) = ln 120.
    assert!((stirling_ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    assert!((stirling_ln_gamma(6.0) - 120.0f64.ln()).abs() < 1e-12);
}

#[test]
fn lower_gamma_matches_quadrature_on_random_arguments() {
    let mut rng = TestRng::new(0x5eed_0001);
    for trial in 0..25 {
        let s = rng.range(0.2, 8.0);
        // One draw below s + 1 (series branch) and one above (continued
        // fraction branch).
        let x_small = s * rng.range(0.05, 0.95);
        let x_large = (s + 1.0) * rng.range(1.0, 4.0);
        for &x in &[x_small, x_large] {
            let got = lower_incomplete_gamma(s, x).unwrap();
            let want = oracle_lower_gamma(s, x);
            let rel = (got - want).abs() / want.abs().max(1e-300);
            assert!(rel < 1e-9, "trial {trial}: gamma({s}, {x}) = {got}, oracle {want}");
        }
    }
}

#[test]
fn exponential_integral_matches_quadrature_on_random_arguments() {
    let mut rng = TestRng::new(0x5eed_0002);
    for trial in 0..50 {
        let x = rng.range(0.05, 30.0);
        let got = exp_integral_e1(x).unwrap();
        let want = oracle_e1(x);
        let rel = (got - want).abs() / want.abs().max(1e-300);
        assert!(rel < 1e-9, "trial {trial}: E1({x}) = {got}, oracle {want}");
    }
}

#[test]
fn lower_gamma_saturates_to_complete_gamma() {
    for &s in &[0.5, 1.0, 2.5, 5.0, 10.0] {
        let got = ln_lower_incomplete_gamma(s, 50.0 * s).unwrap();
        let want = stirling_ln_gamma(s);
        assert!(
            (got - want).abs() < 1e-10 * want.abs().max(1.0),
            "s = {s}: ln gamma(s, 50s) = {got}, ln Gamma(s) = {want}"
        );
    }
}

#[test]
fn lower_gamma_known_values() {
    // gamma(1, 1) = 1 - 1/e.
    let g11 = lower_incomplete_gamma(1.0, 1.0).unwrap();
    assert!((g11 - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    // gamma(1/2, 1) = sqrt(pi) erf(1).
    let g = lower_incomplete_gamma(0.5, 1.0).unwrap();
    let want = std::f64::consts::PI.sqrt() * erf_series(1.0);
    assert!((g - want).abs() < 1e-12, "gamma(1/2, 1) = {g}, sqrt(pi) erf(1) = {want}");
}

#[test]
fn exponential_integral_known_values() {
    let e1 = exp_integral_e1(1.0).unwrap();
    assert!((e1 - 0.21938393439552027).abs() < 1e-12, "E1(1) = {e1}");
    // Asymptotically x e^x E1(x) -> 1 from below.
    let scaled = 50.0 * exp_integral_e1_scaled(50.0).unwrap();
    assert!(scaled > 0.97 && scaled < 1.0, "50 e^50 E1(50) = {scaled}");
}

#[test]
fn special_functions_are_monotone() {
    let mut last_e1 = f64::INFINITY;
    let mut last_gamma = 0.0;
    for i in 1..=60 {
        let x = 0.1 * i as f64;
        let e1 = exp_integral_e1(x).unwrap();
        assert!(e1 < last_e1, "E1 not decreasing at {x}");
        last_e1 = e1;
        let g = lower_incomplete_gamma(1.7, x).unwrap();
        assert!(g > last_gamma, "gamma(1.7, x) not increasing at {x}");
        last_gamma = g;
    }
}

#[test]
fn normal_cdf_matches_quadrature_oracle() {
    for i in -40..=40 {
        let x = 0.2 * i as f64;
        let got = normal_cdf(x);
        let want = oracle_normal_cdf(x);
        assert!((got - want).abs() < 1e-12, "Phi({x}) = {got}, oracle {want}");
    }
}

#[test]
fn normal_quantile_inverts_cdf() {
    for i in 1..40 {
        let p = i as f64 / 40.0;
        let x = normal_quantile(p).unwrap();
        assert!((normal_cdf(x) - p).abs() < 1e-12, "round trip failed at p = {p}");
    }
}
