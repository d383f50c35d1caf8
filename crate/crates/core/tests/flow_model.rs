mod common;

use common::{iw_covariance_from, max_abs, Oracle};
use gms_core::flow::FlowConfig;
use gms_core::linalg::Mat;
use gms_core::{FlowCache, GmsError, ProcessModel};
use proptest::prelude::*;
use std::sync::Arc;

fn noncommuting() -> ProcessModel {
    ProcessModel::generic(
        2,
        2,
        Arc::new(|t| Mat::from_row_slice(2, 2, &[0.1 * t, 1.0, -2.0 + 0.3 * t, -0.5])),
        Arc::new(|t| Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.5 + t, 2.0])),
    )
    .unwrap()
}

fn caches() -> Vec<(String, FlowCache)> {
    let mut out: Vec<(String, FlowCache)> = common::standard_models()
        .into_iter()
        .map(|o| (o.name(), FlowCache::new(o.model()).unwrap()))
        .collect();
    out.push((
        "iw3".into(),
        FlowCache::new(ProcessModel::integrated_wiener(3).unwrap()).unwrap(),
    ));
    out.push((
        "noncommuting".into(),
        FlowCache::new(noncommuting()).unwrap(),
    ));
    out
}

fn sorted3(a: f64, b: f64, c: f64) -> (f64, f64, f64) {
    let mut v = [a, b, c];
    v.sort_by(|x, y| x.partial_cmp(y).unwrap());
    (v[0], v[1], v[2])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn flow_chain_rule(t0 in 0.0..1.0f64, t1 in 0.0..1.0f64, t in 0.0..1.0f64) {
        for (name, c) in caches() {
            let err = max_abs(&(c.flow(t0, t) - c.flow(t1, t) * c.flow(t0, t1)));
            prop_assert!(err <= 1e-8, "{name}: {err}");
            prop_assert_eq!(c.flow(t, t), Mat::identity(c.d(), c.d()));
        }
    }

    #[test]
    fn h_additivity(u in 0.0..1.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64, z in 0.0..1.0f64) {
        let (x, zz, y) = sorted3(a, b, z);
        for (name, c) in caches() {
            let lhs = c.h_kernel(u, x, y).unwrap();
            let rhs = c.h_kernel(u, x, zz).unwrap() + c.h_kernel(u, zz, y).unwrap();
            let err = max_abs(&(lhs - rhs));
            prop_assert!(err <= 1e-10, "{name}: {err}");
        }
    }

    #[test]
    fn h_conjugation(u in 0.0..1.0f64, v in 0.0..1.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (s, t) = (a.min(b), a.max(b));
        for (name, c) in caches() {
            let f = c.flow(u, v);
            let lhs = c.h(v, s, t);
            let rhs = &f * c.h(u, s, t) * f.transpose();
            let err = max_abs(&(lhs - rhs));
            prop_assert!(err <= 1e-8, "{name}: {err}");
        }
    }

    #[test]
    fn covariance_symmetry(t in 0.0..1.0f64, s in 0.0..1.0f64) {
        for (name, c) in caches() {
            let err = max_abs(&(c.covariance(t, s) - c.covariance(s, t).transpose()));
            prop_assert!(err <= 1e-14, "{name}: {err}");
        }
    }

    #[test]
    fn covariance_matches_oracles(t in 0.0..1.0f64, s in 0.0..1.0f64) {
        for o in common::standard_models() {
            let c = o.cache();
            let err = max_abs(&(c.covariance(t, s) - o.covariance(t, s)));
            prop_assert!(err <= 1e-12, "{}: {err}", o.name());
        }
    }

    #[test]
    fn gamma_is_psd(t in 0.0..1.0f64) {
        for (_, c) in caches() {
            let g = c.model().gamma(t);
            prop_assert!(max_abs(&(&g - g.transpose())) == 0.0);
            let eig = g.symmetric_eigen().eigenvalues;
            prop_assert!(eig.iter().all(|e| *e >= -1e-14));
        }
    }
}

fn specialization_gap(model: &ProcessModel, config: FlowConfig) -> f64 {
    let fast = FlowCache::new(model.clone()).unwrap();
    let slow = FlowCache::generic(model.clone(), config).unwrap();
    let probes = [0.0, 0.0625, 0.2, 0.37, 0.5, 0.81, 1.0];
    let mut worst = 0.0f64;
    for &s in &probes {
        for &t in &probes {
            worst = worst.max(max_abs(&(fast.flow(s, t) - slow.flow(s, t))));
            worst = worst.max(max_abs(&(fast.covariance(t, s) - slow.covariance(t, s))));
            if s <= t {
                for &u in &probes {
                    worst = worst.max(max_abs(&(fast.h(u, s, t) - slow.h(u, s, t))));
                }
            }
        }
        worst = worst.max(max_abs(&(fast.g(s) - slow.g(s))));
        worst = worst.max(max_abs(&(fast.g_inv(s) - slow.g_inv(s))));
    }
    worst
}

#[test]
fn specializations_agree_with_generic_evaluators() {
    let models = vec![
        ProcessModel::wiener_1d(),
        ProcessModel::ou(1.0, 1.0).unwrap(),
        Oracle::Rotation {
            theta: 1.0,
            sigma2: 1.0,
        }
        .model(),
        ProcessModel::integrated_wiener(2).unwrap(),
        ProcessModel::integrated_wiener(3).unwrap(),
    ];
    for model in models {
        let gap = specialization_gap(&model, FlowConfig::default());
        assert!(gap <= 1e-10, "{model:?}: {gap}");
    }
}

#[test]
fn stiff_drift_needs_more_flow_steps() {
    let model = ProcessModel::ou(-2.0, 0.5).unwrap();
    let fine = FlowConfig {
        flow_steps: 1024,
        ..FlowConfig::default()
    };
    let coarse_gap = specialization_gap(&model, FlowConfig::default());
    let fine_gap = specialization_gap(&model, fine);
    assert!(fine_gap <= 1e-10, "{fine_gap}");
    assert!(fine_gap < coarse_gap / 100.0);
}

#[test]
fn integrated_wiener_h_matches_display() {
    let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    for d in [2usize, 3, 4] {
        let c = FlowCache::new(ProcessModel::integrated_wiener(d).unwrap()).unwrap();
        let (u, s, t) = (0.3, 0.1, 0.9);
        let h = c.h(u, s, t);
        for i in 0..d {
            for j in 0..d {
                let p = (2 * d - 1 - (i + j)) as i32;
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                let want = sign * ((t - u).powi(p) - (s - u).powi(p))
                    / (p as f64 * fact(d - 1 - i) * fact(d - 1 - j));
                assert!((h[(i, j)] - want).abs() < 1e-14, "d={d} ({i},{j})");
            }
        }
        let cov = c.covariance(0.4, 0.7);
        assert!(max_abs(&(cov - iw_covariance_from(d, 0.0, 0.4, 0.7))) < 1e-14);
    }
}

#[test]
fn ou_covariance_display() {
    let (a, g) = (0.7, 1.3);
    let c = FlowCache::new(ProcessModel::ou(a, g).unwrap()).unwrap();
    for t in [0.1f64, 0.5, 1.0] {
        let want = (a * t).exp().powi(2) * g / (2.0 * a) * (1.0 - (-2.0 * a * t).exp());
        assert!((c.covariance(t, t)[(0, 0)] - want).abs() < 1e-14);
    }
    assert_eq!(c.covariance(0.0, 0.0)[(0, 0)], 0.0);
}

#[test]
fn generic_diag_drift_matches_closed_form() {
    let model = ProcessModel::generic(
        2,
        2,
        Arc::new(|t| Mat::from_diagonal_element(2, 2, t)),
        Arc::new(|_| Mat::identity(2, 2)),
    )
    .unwrap();
    let c = FlowCache::new(model).unwrap();
    for t in [0.05, 0.33, 0.5, 0.9, 1.0] {
        let want = (t * t / 2.0f64).exp();
        assert!((c.g(t)[(0, 0)] - want).abs() < 1e-10);
        assert!((c.flow(0.2, t)[(1, 1)] - (want / (0.02f64).exp())).abs() < 1e-10);
    }
}

#[test]
fn h_kernel_rejects_reversed_interval() {
    let c = FlowCache::new(ProcessModel::wiener_1d()).unwrap();
    assert!(matches!(c.h_kernel(0.0, 0.7, 0.2), Err(GmsError::Range(_))));
}

#[test]
fn invalid_models_are_rejected() {
    assert!(ProcessModel::generic(
        2,
        1,
        Arc::new(|_| Mat::zeros(3, 3)),
        Arc::new(|_| Mat::zeros(2, 1))
    )
    .is_err());
    assert!(ProcessModel::generic(
        1,
        1,
        Arc::new(|t| Mat::from_element(1, 1, 1.0 / (t - 0.5))),
        Arc::new(|_| Mat::identity(1, 1))
    )
    .is_err());
    assert!(ProcessModel::rotation(Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), 1.0).is_err());
    assert!(ProcessModel::integrated_wiener(1).is_err());
}

#[test]
fn json_models_round_trip_to_the_same_evaluators() {
    let cases = [
        (
            r#"{"d":1,"m":1,"specialization":"wiener_1d"}"#,
            Oracle::Wiener,
        ),
        (
            r#"{"d":1,"m":1,"specialization":"ou_constant_1d","alpha":1.0,"gamma":1.0}"#,
            Oracle::Ou {
                alpha: 1.0,
                gamma: 1.0,
            },
        ),
        (
            r#"{"d":2,"m":2,"specialization":"rotation","alpha":[[0,1],[-1,0]],"sigma2":1.0}"#,
            Oracle::Rotation {
                theta: 1.0,
                sigma2: 1.0,
            },
        ),
        (
            r#"{"d":2,"m":1,"specialization":"integrated_wiener"}"#,
            Oracle::IntegratedWiener(2),
        ),
    ];
    for (text, oracle) in cases {
        let c = FlowCache::new(ProcessModel::from_json_str(text).unwrap()).unwrap();
        assert!(
            max_abs(&(c.covariance(0.3, 0.8) - oracle.covariance(0.3, 0.8))) < 1e-13,
            "{text}"
        );
    }
    let generic = r#"{"d":1,"m":1,"specialization":"generic","interpolation":"piecewise_linear",
        "times":[0.0,1.0],"alpha":[[[1.0]],[[1.0]]],"gamma_root":[[[1.0]],[[1.0]]]}"#;
    let c = FlowCache::new(ProcessModel::from_json_str(generic).unwrap()).unwrap();
    let o = Oracle::Ou {
        alpha: 1.0,
        gamma: 1.0,
    };
    assert!(max_abs(&(c.covariance(0.4, 0.9) - o.covariance(0.4, 0.9))) < 1e-10);
    assert!(ProcessModel::from_json_str(r#"{"d":2,"m":2,"specialization":"wiener_1d"}"#).is_err());
    assert!(ProcessModel::from_json_str(r#"{"d":1,"m":1,"specialization":"nope"}"#).is_err());
}
