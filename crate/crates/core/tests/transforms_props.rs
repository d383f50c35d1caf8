mod common;

use common::{max_abs, Oracle};
use gms_core::basis::Vector;
use gms_core::linalg::Mat;
use gms_core::transforms::{
    apply_d, apply_k, assemble_delta_matrix, assemble_psi_matrix, coefficients,
    coefficients_from_grid, construct, grid_covariance_matrix, integration_by_parts_defect,
    is_block_lower_triangular, refine, refine_levels, sample, CoefficientField,
};
use gms_core::{Basis, FlowCache, NodeIndex, ProcessModel};
use proptest::prelude::*;
use std::sync::Arc;

fn basis_for(o: &Oracle, depth: u32) -> Basis {
    Basis::dyadic(o.cache(), depth).unwrap()
}

fn wiener(depth: u32) -> Basis {
    basis_for(&Oracle::Wiener, depth)
}

fn grid_values(b: &Basis, xi: &CoefficientField) -> (Vec<f64>, Vec<Vector>) {
    let times = b.tree().endpoints(xi.depth()).unwrap();
    let values = times
        .iter()
        .map(|t| construct(b, xi, *t).unwrap())
        .collect();
    (times, values)
}

fn round_trip_bound(xi: &CoefficientField, values: &[Vector], e: &gms_core::BasisElement) -> f64 {
    let (l, r) = e.midpoint_weights();
    let weight = max_abs(l).max(max_abs(r))
        + e.sigma
            .clone()
            .try_inverse()
            .map(|m| max_abs(&m))
            .unwrap_or(0.0);
    let xmax = values.iter().map(|v| v.amax()).fold(0.0, f64::max);
    let own = xi.get(e.index).map(|v| v.amax()).unwrap_or(0.0);
    64.0 * f64::EPSILON * (own + 3.0 * weight * xmax)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn synthesis_then_analysis_is_the_identity(
        which in 0usize..4,
        depth in 1u32..7,
        raw in proptest::collection::vec(-3.0..3.0f64, 128),
    ) {
        let o = &common::standard_models()[which];
        let b = basis_for(o, 6);
        let d = b.d();
        let count = 1usize << (depth - 1);
        let vals = (0..count).map(|i| Vector::from_fn(d, |c, _| raw[(i * d + c) % raw.len()])).collect();
        let xi = CoefficientField::from_values(d, depth, vals).unwrap();
        let (times, values) = grid_values(&b, &xi);
        let back = coefficients_from_grid(&b, &times, &values, depth).unwrap();
        for e in &b.elements()[..count] {
            let err = (back.get(e.index).unwrap() - xi.get(e.index).unwrap()).amax();
            let tol = round_trip_bound(&xi, &values, e);
            prop_assert!(err <= tol, "{} {}: {err} > {tol}", o.name(), e.index);
        }
    }

    #[test]
    fn adding_levels_keeps_coarse_grid_values(
        which in 0usize..4,
        raw in proptest::collection::vec(-3.0..3.0f64, 64),
    ) {
        let o = &common::standard_models()[which];
        let b = basis_for(o, 6);
        let d = b.d();
        let fine = CoefficientField::from_values(d, 6, (0..32).map(|i| Vector::from_fn(d, |c, _| raw[(2 * i + c) % 64])).collect()).unwrap();
        for n in 1..6u32 {
            let coarse = fine.truncated(n);
            for t in b.tree().endpoints(n).unwrap() {
                let a = construct(&b, &coarse, t).unwrap();
                let z = construct(&b, &fine, t).unwrap();
                prop_assert!((a - z).amax() <= 1e-13 * (1.0 + fine.to_vector().amax()), "{} N={n} t={t}", o.name());
            }
        }
    }
}

#[test]
fn refinement_keeps_the_coarse_grid_and_matches_direct_sampling() {
    for o in common::standard_models() {
        let b = basis_for(&o, 8);
        let coarse = sample(&b, 5, 3, 5).unwrap();
        let fine = refine_levels(&b, &coarse, 2).unwrap();
        assert_eq!(fine.depth(), 7);
        let (ct, cv) = coarse.grid();
        for (t, v) in ct.iter().zip(&cv) {
            assert_eq!(fine.value_at(*t).unwrap(), v);
        }
        let direct = sample(&b, 5, 3, 7).unwrap();
        let (ft, fv) = fine.grid();
        let (dt, dv) = direct.grid();
        assert_eq!(ft, dt);
        for (a, z) in fv.iter().zip(&dv) {
            assert!((a - z).amax() < 1e-12, "{}", o.name());
        }
        assert_eq!(fine.coefficients(), direct.coefficients());
    }
}

#[test]
fn partial_refinement_is_local() {
    let b = wiener(8);
    let path = sample(&b, 1, 0, 3).unwrap();
    let targets = [NodeIndex::new(3, 1), NodeIndex::new(4, 2)];
    let fine = refine(&b, &path, &targets).unwrap();
    assert_eq!(fine.partially_refined().len(), 2);
    let (t0, _) = path.grid();
    let (t1, _) = fine.grid();
    assert_eq!(t1.len(), t0.len() + 2);
    assert!(fine.value_at(0.375).is_some() && fine.value_at(0.3125).is_some());
    assert!(refine(&b, &path, &[NodeIndex::new(5, 0)]).is_err());
    assert!(refine(&b, &path, &[NodeIndex::new(1, 0)]).is_err());
}

#[test]
fn psi_matrix_is_block_lower_triangular_with_inverse_delta() {
    for o in common::standard_models() {
        let b = basis_for(&o, 5);
        for n in 1..=5u32 {
            let psi = assemble_psi_matrix(&b, n).unwrap();
            let delta = assemble_delta_matrix(&b, n).unwrap();
            assert!(is_block_lower_triangular(&psi, b.d()), "{} N={n}", o.name());
            let k = psi.nrows();
            let err = max_abs(&(&delta * &psi - Mat::identity(k, k)));
            assert!(err < 1e-9, "{} N={n}: {err}", o.name());
            let cov = grid_covariance_matrix(&b, n).unwrap();
            let rel = max_abs(&(&psi * psi.transpose() - &cov)) / max_abs(&cov);
            assert!(rel < 1e-10, "{} N={n}: {rel}", o.name());
        }
    }
}

#[test]
fn wiener_examples() {
    let b = wiener(6);
    let psi = assemble_psi_matrix(&b, 2).unwrap();
    assert_eq!(psi.shape(), (2, 2));
    assert!((psi[(0, 0)] - 1.0).abs() < 1e-15 && (psi[(1, 1)] - 0.5).abs() < 1e-15);
    let xi = coefficients(&b, |t| Vector::from_element(1, t), 6).unwrap();
    assert!((xi.get(NodeIndex::ROOT).unwrap()[0] - 1.0).abs() < 1e-15);
    for i in 1..32 {
        let bound = 64.0 * f64::EPSILON * (1u64 << (NodeIndex::from_flat(i).n / 2 + 1)) as f64;
        assert!(
            xi.values()[i][0].abs() <= bound,
            "{i}: {}",
            xi.values()[i][0]
        );
    }
    let top = b.element(NodeIndex::new(1, 0)).unwrap();
    assert!((top.sigma_cov[(0, 0)] - 0.25).abs() < 1e-15);
    let e = b.element(NodeIndex::new(2, 0)).unwrap();
    assert!((e.sigma_cov[(0, 0)] - 0.125).abs() < 1e-15);
}

#[test]
fn sampling_is_deterministic_and_centred() {
    let b = wiener(5);
    let a = sample(&b, 42, 7, 5).unwrap();
    let z = sample(&b, 42, 7, 5).unwrap();
    assert_eq!(a.grid(), z.grid());
    assert_ne!(sample(&b, 43, 7, 5).unwrap().grid().1, a.grid().1);
    let n = 20_000u64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for p in 0..n {
        let x = sample(&b, 9, p, 3).unwrap().value_at(0.5).unwrap()[0];
        s1 += x;
        s2 += x * x;
    }
    let mean = s1 / n as f64;
    let var = s2 / n as f64 - mean * mean;
    assert!(mean.abs() < 4.0 * (0.5 / n as f64).sqrt(), "{mean}");
    assert!(
        (var - 0.5).abs() < 4.0 * 0.5 * (2.0 / n as f64).sqrt(),
        "{var}"
    );
}

#[test]
fn k_and_d_invert_each_other() {
    for o in [
        Oracle::Wiener,
        Oracle::Ou {
            alpha: 1.0,
            gamma: 1.0,
        },
        Oracle::Rotation {
            theta: 1.0,
            sigma2: 1.0,
        },
    ] {
        let b = basis_for(&o, 4);
        let c = b.cache();
        let idx = NodeIndex::new(2, 1);
        let e = b.element(idx).unwrap();
        let s = e.support;
        let times: Vec<f64> = (0..=40).map(|j| j as f64 / 40.0).collect();
        let col = |t: f64| -> Vector {
            if e.support.contains(t) {
                e.eval_phi(c, t).column(0).into_owned()
            } else {
                Vector::zeros(c.m())
            }
        };
        let k = apply_k(c, col, &times, &[s.l, s.m, s.r]).unwrap();
        for (t, v) in times.iter().zip(&k) {
            let want = if e.support.contains(*t) {
                e.eval_psi(c, *t).column(0).into_owned()
            } else {
                Vector::zeros(c.d())
            };
            assert!((v - want).amax() < 1e-8, "{} K t={t}", o.name());
        }
        let u = |t: f64| Vector::from_fn(c.d(), |i, _| (t * (i as f64 + 1.0)).sin());
        let ku_times: Vec<f64> = (1..40).map(|j| j as f64 / 40.0).collect();
        let du = apply_d(
            c,
            |t| apply_k(c, u, &[t], &[]).unwrap().remove(0),
            None::<fn(f64) -> Vector>,
            &ku_times,
        )
        .unwrap();
        for (t, v) in ku_times.iter().zip(&du) {
            assert!((v - u(*t)).amax() < 1e-6, "{} DK t={t}", o.name());
        }
    }
    let iw = FlowCache::new(ProcessModel::integrated_wiener(2).unwrap()).unwrap();
    assert!(apply_d(&iw, |_| Vector::zeros(2), None::<fn(f64) -> Vector>, &[0.5]).is_err());
}

#[test]
fn integration_by_parts_defect_vanishes() {
    let bx = Basis::dyadic(
        Arc::new(FlowCache::new(ProcessModel::wiener_1d()).unwrap()),
        8,
    )
    .unwrap();
    let by = Basis::dyadic(
        Arc::new(FlowCache::new(ProcessModel::ou(1.0, 1.0).unwrap()).unwrap()),
        8,
    )
    .unwrap();
    let draws = 10_000u64;
    let mut prev_var = f64::INFINITY;
    for n in 4..=8u32 {
        let (mut s1, mut s2) = (0.0, 0.0);
        for p in 0..draws {
            let xi = sample(&bx, 17, p, n).unwrap().coefficients().clone();
            let v = integration_by_parts_defect(&bx, &by, &xi, n).unwrap();
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / draws as f64;
        let var = s2 / draws as f64 - mean * mean;
        assert!(
            mean.abs() < 4.0 * (var / draws as f64).sqrt(),
            "N={n}: mean {mean} var {var}"
        );
        assert!(var < prev_var, "N={n}: {var} >= {prev_var}");
        prev_var = var;
    }
}
