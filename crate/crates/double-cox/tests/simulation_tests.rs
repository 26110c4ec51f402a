//! Data generation: inverse-CDF draws, censoring probabilities against
//! quadrature, calibration accuracy, and distributional checks on large
//! samples.

mod common;

use common::{integrate, oracle_hazard, TestRng};
use double_cox::simulation::{
    calibrate_theta, draw_survival_time, generate_dataset, generate_dataset_traced,
    individual_censor_prob, CensoringPlan, SimConfig,
};
use double_cox::{Family, ModelSpec, ParameterVector};

fn table_params(family: Family) -> ParameterVector {
    match family {
        Family::Weibull => {
            ParameterVector::new(20.0, 1.5, vec![-0.5, -1.0], vec![-0.05, -0.1], 0.5)
        }
        Family::Gompertz => {
            ParameterVector::new(1e-4, 0.1, vec![-0.5, -1.0], vec![-0.05, -0.1], 0.5)
        }
    }
}

fn both_terms(family: Family) -> ModelSpec {
    ModelSpec::new(family, vec![0, 1], vec![0, 1])
}

#[test]
fn survival_draws_invert_the_cumulative_hazard() {
    // z H(t | u) must reproduce -ln s to high relative accuracy.
    let mut rng = TestRng::new(0x51e0_0001);
    for family in [Family::Weibull, Family::Gompertz] {
        let params = table_params(family);
        let spec = both_terms(family);
        for trial in 0..1000 {
            let u = vec![f64::from(rng.uniform() < 0.5), rng.normal() * 0.45];
            let z = rng.range(0.05, 4.0);
            let s = rng.open01();
            let t = draw_survival_time(&params, &spec, &u, z, s).unwrap();
            let (big_h, _) = oracle_hazard(family, &params, &spec, &u, t);
            let want = -s.ln();
            let rel = (z * big_h - want).abs() / want.abs().max(1e-300);
            assert!(
                rel < 1e-10,
                "{family:?} trial {trial}: zH = {}, -ln s = {want}",
                z * big_h
            );
        }
    }
}

#[test]
fn censor_probabilities_match_quadrature() {
    // Closed forms against direct integration of the conditional survival.
    let mut rng = TestRng::new(0x51e0_0002);
    for family in [Family::Weibull, Family::Gompertz] {
        let params = table_params(family);
        let spec = both_terms(family);
        for trial in 0..100 {
            let u = vec![f64::from(rng.uniform() < 0.5), rng.normal() * 0.45];
            let z = rng.range(0.1, 5.0);
            let theta = match family {
                Family::Weibull => rng.range(2.0, 80.0),
                Family::Gompertz => rng.range(5.0, 120.0),
            };
            let got = individual_censor_prob(&params, &spec, &u, z, theta).unwrap();
            let survival = |c: f64| {
                if c == 0.0 {
                    return 1.0;
                }
                let (big_h, _) = oracle_hazard(family, &params, &spec, &u, c);
                (-z * big_h).exp()
            };
            let want = integrate(survival, 0.0, theta, 600) / theta;
            assert!(
                (got - want).abs() < 1e-8,
                "{family:?} trial {trial}: closed {got}, quadrature {want} (z={z}, theta={theta})"
            );
        }
    }
}

#[test]
fn exponential_censoring_has_an_elementary_form() {
    // Weibull with k = 1 and no effects: the mean of S over (0, theta) is
    // (a/theta)(1 - e^{-theta/a}).
    let params = ParameterVector::new(7.0, 1.0, vec![], vec![], 0.0);
    let spec = ModelSpec::new(Family::Weibull, vec![], vec![]);
    let mut rng = TestRng::new(0x51e0_0003);
    for _ in 0..20 {
        let theta = rng.range(0.5, 60.0);
        let got = individual_censor_prob(&params, &spec, &[], 1.0, theta).unwrap();
        let want = (7.0 / theta) * (1.0 - (-theta / 7.0).exp());
        assert!((got - want).abs() < 1e-10, "theta {theta}: {got} vs {want}");
    }
}

#[test]
fn empirical_survival_matches_the_model_on_a_grid() {
    // sigma2 = 0, no covariate effects: empirical S(t) within 3 binomial
    // standard errors of exp(-H(t)) on a 10-point grid, n = 1e5.
    let n = 100_000;
    for family in [Family::Weibull, Family::Gompertz] {
        let mut params = table_params(family);
        params.beta_scale = vec![];
        params.beta_shape = vec![];
        params.sigma2 = 0.0;
        let config = SimConfig {
            family,
            n,
            n_clusters: n,
            p_success: 0.5,
            score_sd: 0.2f64.sqrt(),
            true_params: params.clone(),
            p_cens: 0.0,
            seed: 0x51e0_0004,
            mc_n: 1000,
        };
        let data = generate_dataset(&config, &CensoringPlan::none()).unwrap();
        let spec = ModelSpec::new(family, vec![], vec![]);
        let times: Vec<f64> = data.subjects().iter().map(|s| s.time).collect();
        for q in 1..=10 {
            // Grid points at the model's own deciles.
            let p = q as f64 / 11.0;
            let t = draw_survival_time(&params, &spec, &[], 1.0, 1.0 - p).unwrap();
            let (big_h, _) = oracle_hazard(family, &params, &spec, &[], t);
            let want = (-big_h).exp();
            let got = times.iter().filter(|&&x| x > t).count() as f64 / n as f64;
            let se = (want * (1.0 - want) / n as f64).sqrt();
            assert!(
                (got - want).abs() <= 3.0 * se,
                "{family:?} grid {q}: empirical {got}, model {want}, 3se {}",
                3.0 * se
            );
        }
    }
}

#[test]
fn frailty_draws_have_the_right_moments() {
    let sigma2 = 0.8;
    let n_clusters = 20_000;
    let config = SimConfig {
        family: Family::Weibull,
        n: 2 * n_clusters,
        n_clusters,
        p_success: 0.5,
        score_sd: 0.2f64.sqrt(),
        true_params: ParameterVector::new(20.0, 1.5, vec![], vec![], sigma2),
        p_cens: 0.0,
        seed: 0x51e0_0005,
        mc_n: 1000,
    };
    let (_, trace) = generate_dataset_traced(&config, &CensoringPlan::none()).unwrap();
    assert_eq!(trace.frailties.len(), n_clusters);
    let nf = n_clusters as f64;
    let mean = trace.frailties.iter().sum::<f64>() / nf;
    let var = trace.frailties.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let mean_tol = 4.0 * sigma2.sqrt() / nf.sqrt();
    assert!((mean - 1.0).abs() < mean_tol, "frailty mean {mean} (tolerance {mean_tol})");
    assert!(
        (var - sigma2).abs() < 0.15 * sigma2,
        "frailty variance {var} should be near {sigma2}"
    );
}

#[test]
fn calibrated_censoring_hits_the_target_rate() {
    let target = 0.4;
    let config = SimConfig {
        family: Family::Weibull,
        n: 100_000,
        n_clusters: 10_000,
        p_success: 0.5,
        score_sd: 0.2f64.sqrt(),
        true_params: table_params(Family::Weibull),
        p_cens: target,
        seed: 0x51e0_0006,
        mc_n: 200_000,
    };
    let plan = calibrate_theta(&config).unwrap();
    assert!((plan.achieved_rate_estimate - target).abs() < 0.01);
    let data = generate_dataset(&config, &plan).unwrap();
    let censored =
        data.subjects().iter().filter(|s| !s.event).count() as f64 / data.n() as f64;
    assert!(
        (censored - target).abs() < 0.01,
        "empirical censoring {censored} vs target {target}"
    );

    // Calibration is a pure function of the config.
    let again = calibrate_theta(&config).unwrap();
    assert_eq!(plan.theta, again.theta);
    assert_eq!(plan.achieved_rate_estimate, again.achieved_rate_estimate);
}

#[test]
fn gompertz_calibration_also_hits_the_target() {
    let target = 0.4;
    let config = SimConfig {
        family: Family::Gompertz,
        n: 100_000,
        n_clusters: 10_000,
        p_success: 0.5,
        score_sd: 0.2f64.sqrt(),
        true_params: table_params(Family::Gompertz),
        p_cens: target,
        seed: 0x51e0_0007,
        mc_n: 200_000,
    };
    let plan = calibrate_theta(&config).unwrap();
    let data = generate_dataset(&config, &plan).unwrap();
    let censored =
        data.subjects().iter().filter(|s| !s.event).count() as f64 / data.n() as f64;
    assert!(
        (censored - target).abs() < 0.01,
        "empirical censoring {censored} vs target {target}"
    );
}

#[test]
fn generation_is_reproducible_and_trace_is_consistent() {
    let config = SimConfig {
        family: Family::Gompertz,
        n: 500,
        n_clusters: 50,
        p_success: 0.5,
        score_sd: 0.2f64.sqrt(),
        true_params: table_params(Family::Gompertz),
        p_cens: 0.4,
        seed: 0x51e0_0008,
        mc_n: 50_000,
    };
    let plan = calibrate_theta(&config).unwrap();
    let (data1, trace1) = generate_dataset_traced(&config, &plan).unwrap();
    let (data2, trace2) = generate_dataset_traced(&config, &plan).unwrap();
    assert_eq!(trace1.survival_times, trace2.survival_times);
    assert_eq!(trace1.frailties, trace2.frailties);
    for (a, b) in data1.subjects().iter().zip(data2.subjects()) {
        assert_eq!(a.time.to_bits(), b.time.to_bits());
        assert_eq!(a.event, b.event);
    }
    // Observed time is the minimum of survival and censoring times.
    let spec = both_terms(Family::Gompertz);
    for (j, subject) in data1.subjects().iter().enumerate() {
        let t = trace1.survival_times[j];
        let c = trace1.censor_times[j];
        assert_eq!(subject.event, t <= c);
        assert_eq!(subject.time, t.min(c));
        // The recorded uniform reproduces the survival draw.
        let z = trace1.frailties[j % 50];
        let again =
            draw_survival_time(&config.true_params, &spec, &subject.covariates, z, trace1.uniforms[j])
                .unwrap();
        assert_eq!(again.to_bits(), t.to_bits());
    }
}
