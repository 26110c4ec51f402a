//! The closed-form marginal log-likelihood checked against numeric
//! integration of the frailty mixture, with the hazard pieces re-derived
//! here from their definitions rather than shared with the library.

mod common;

use common::{oracle_cluster_loglik, oracle_hazard, random_cluster, TestRng};
use double_cox::likelihood::{cluster_loglik, marginal_loglik, Dataset};
use double_cox::{Family, ModelSpec, ParameterVector, SubjectRecord};

fn to_records(subjects: &[(f64, bool, Vec<f64>)], cluster: &str) -> Vec<SubjectRecord> {
    subjects
        .iter()
        .map(|(t, event, u)| SubjectRecord {
            time: *t,
            event: *event,
            cluster: cluster.to_string(),
            covariates: u.clone(),
        })
        .collect()
}

#[test]
fn random_clusters_match_the_frailty_quadrature() {
    let mut rng = TestRng::new(0x11ce_0001);
    let mut checked = 0;
    for trial in 0..200 {
        let family = if trial % 2 == 0 { Family::Weibull } else { Family::Gompertz };
        let (mut params, spec, subjects) = random_cluster(&mut rng, family);
        for &sigma2 in &[0.3, 1.0, 2.0] {
            params.sigma2 = sigma2;
            let records = to_records(&subjects, "c");
            let got = cluster_loglik(&params, &spec, &records).unwrap();
            let want = oracle_cluster_loglik(family, &params, &spec, &subjects);
            assert!(
                (got - want).abs() < 1e-6,
                "trial {trial} sigma2 {sigma2}: closed {got}, quadrature {want}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 600);
}

#[test]
fn known_single_subject_values() {
    // Weibull with a = 10, b = 1 at t = 10: H = 1 and h = 0.1.
    let spec = ModelSpec::new(Family::Weibull, vec![], vec![]);
    let subject =
        |event| vec![SubjectRecord { time: 10.0, event, cluster: "x".into(), covariates: vec![] }];

    // Event with sigma2 = 1: log(0.1) - 2 log 2.
    let p = ParameterVector::new(10.0, 1.0, vec![], vec![], 1.0);
    let got = cluster_loglik(&p, &spec, &subject(true)).unwrap();
    let want = 0.1f64.ln() - 2.0 * 2.0f64.ln();
    assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    let oracle = oracle_cluster_loglik(Family::Weibull, &p, &spec, &[(10.0, true, vec![])]);
    assert!((got - oracle).abs() < 1e-9);

    // Censored with sigma2 = 0 and H = 2 (a = 5): plain -2.
    let p = ParameterVector::new(5.0, 1.0, vec![], vec![], 0.0);
    let got = cluster_loglik(&p, &spec, &subject(false)).unwrap();
    assert!((got + 2.0).abs() < 1e-12);
}

#[test]
fn two_censored_subjects_use_the_closed_form() {
    // a = 20, b = 1 at t = 10 gives H = 0.5 each; sigma2 = 2, D = 0:
    // -(1/2) log(1 + 2 * 1) = -log(3)/2.
    let spec = ModelSpec::new(Family::Weibull, vec![], vec![]);
    let p = ParameterVector::new(20.0, 1.0, vec![], vec![], 2.0);
    let records: Vec<SubjectRecord> = (0..2)
        .map(|_| SubjectRecord { time: 10.0, event: false, cluster: "x".into(), covariates: vec![] })
        .collect();
    let got = cluster_loglik(&p, &spec, &records).unwrap();
    assert!((got + 3.0f64.ln() / 2.0).abs() < 1e-12, "got {got}");
}

#[test]
fn toy_dataset_matches_summed_quadrature() {
    // Three clusters of sizes 1, 2, 3 with mixed events, sigma2 = 0.5.
    let spec = ModelSpec::new(Family::Gompertz, vec![0, 1], vec![0]);
    let params = ParameterVector::new(0.05, 0.12, vec![-0.5, 0.3], vec![-0.1], 0.5);
    let clusters: Vec<Vec<(f64, bool, Vec<f64>)>> = vec![
        vec![(3.0, true, vec![1.0, 0.2])],
        vec![(7.5, false, vec![0.0, -0.4]), (2.1, true, vec![1.0, 1.1])],
        vec![
            (11.0, true, vec![0.0, 0.0]),
            (4.4, false, vec![1.0, -0.9]),
            (6.2, true, vec![0.0, 0.5]),
        ],
    ];
    let mut subjects = Vec::new();
    for (i, cl) in clusters.iter().enumerate() {
        subjects.extend(to_records(cl, &format!("c{i}")));
    }
    let data = Dataset::new(subjects, vec!["u0".into(), "u1".into()]).unwrap();
    let got = marginal_loglik(&params, &spec, &data).unwrap();
    let want: f64 = clusters
        .iter()
        .map(|cl| oracle_cluster_loglik(Family::Gompertz, &params, &spec, cl))
        .sum();
    assert!((got - want).abs() < 1e-8, "closed {got}, quadrature {want}");
}

#[test]
fn single_cluster_dataset_reduces_to_cluster_loglik() {
    let spec = ModelSpec::new(Family::Weibull, vec![0], vec![]);
    let params = ParameterVector::new(4.0, 1.3, vec![0.4], vec![], 0.8);
    let subjects = vec![
        SubjectRecord { time: 2.0, event: true, cluster: "only".into(), covariates: vec![1.0] },
        SubjectRecord { time: 5.0, event: false, cluster: "only".into(), covariates: vec![0.0] },
    ];
    let data = Dataset::new(subjects.clone(), vec!["u".into()]).unwrap();
    let whole = marginal_loglik(&params, &spec, &data).unwrap();
    let one = cluster_loglik(&params, &spec, &subjects).unwrap();
    assert_eq!(whole, one);
}

#[test]
fn duplicating_every_cluster_doubles_the_loglik() {
    let mut rng = TestRng::new(0x11ce_0002);
    let (mut params, spec, subjects) = random_cluster(&mut rng, Family::Weibull);
    params.sigma2 = 0.7;
    let mut once = to_records(&subjects, "a");
    let data_once = Dataset::new(once.clone(), vec!["u0".into(), "u1".into()]).unwrap();
    let mut twice = once.clone();
    for s in &mut twice {
        s.cluster = "b".into();
    }
    once.extend(twice);
    let data_twice = Dataset::new(once, vec!["u0".into(), "u1".into()]).unwrap();
    let l1 = marginal_loglik(&params, &spec, &data_once).unwrap();
    let l2 = marginal_loglik(&params, &spec, &data_twice).unwrap();
    assert!((l2 - 2.0 * l1).abs() < 1e-10 * l1.abs().max(1.0));
}

#[test]
fn sigma2_is_continuous_at_zero() {
    let mut rng = TestRng::new(0x11ce_0003);
    for trial in 0..10 {
        let family = if trial % 2 == 0 { Family::Weibull } else { Family::Gompertz };
        let (mut params, spec, subjects) = random_cluster(&mut rng, family);
        let records = to_records(&subjects, "c");
        params.sigma2 = 0.0;
        let at_zero = cluster_loglik(&params, &spec, &records).unwrap();
        params.sigma2 = 1e-8;
        let near_zero = cluster_loglik(&params, &spec, &records).unwrap();
        assert!(
            (at_zero - near_zero).abs() < 1e-4,
            "trial {trial}: {at_zero} vs {near_zero}"
        );
        params.sigma2 = 1e-9;
        let nearer = cluster_loglik(&params, &spec, &records).unwrap();
        assert!((at_zero - nearer).abs() < 1e-5);
    }
}

#[test]
fn zero_frailty_equals_independent_loglik() {
    let mut rng = TestRng::new(0x11ce_0004);
    let (mut params, spec, subjects) = random_cluster(&mut rng, Family::Gompertz);
    params.sigma2 = 0.0;
    let records = to_records(&subjects, "c");
    let data = Dataset::new(records, vec!["u0".into(), "u1".into()]).unwrap();
    let got = marginal_loglik(&params, &spec, &data).unwrap();
    let want: f64 = subjects
        .iter()
        .map(|(t, event, u)| {
            let (big_h, log_h) = oracle_hazard(Family::Gompertz, &params, &spec, u, *t);
            if *event { log_h - big_h } else { -big_h }
        })
        .sum();
    assert!((got - want).abs() < 1e-10 * want.abs().max(1.0), "{got} vs {want}");
}

#[test]
fn permuting_subjects_leaves_the_value_bit_identical() {
    let mut rng = TestRng::new(0x11ce_0005);
    let spec = ModelSpec::new(Family::Weibull, vec![0, 1], vec![0]);
    let params = ParameterVector::new(8.0, 1.4, vec![-0.5, 0.2], vec![-0.1], 0.6);
    let mut subjects = Vec::new();
    for c in 0..6 {
        for i in 0..4 {
            subjects.push(SubjectRecord {
                time: rng.range(0.5, 20.0),
                event: (c + i) % 3 != 0,
                cluster: format!("cl{c}"),
                covariates: vec![f64::from(i % 2), rng.normal()],
            });
        }
    }
    let names = vec!["u0".to_string(), "u1".to_string()];
    let reference =
        marginal_loglik(&params, &spec, &Dataset::new(subjects.clone(), names.clone()).unwrap())
            .unwrap();
    // A few deterministic shuffles, including a full reversal.
    subjects.reverse();
    let reversed =
        marginal_loglik(&params, &spec, &Dataset::new(subjects.clone(), names.clone()).unwrap())
            .unwrap();
    assert_eq!(reference.to_bits(), reversed.to_bits());
    for swap in 0..8 {
        let i = (swap * 5) % subjects.len();
        let j = (swap * 11 + 3) % subjects.len();
        subjects.swap(i, j);
        let shuffled =
            marginal_loglik(&params, &spec, &Dataset::new(subjects.clone(), names.clone()).unwrap())
                .unwrap();
        assert_eq!(reference.to_bits(), shuffled.to_bits(), "swap {swap}");
    }
}
