//! Closed-form values of the four builtin sprays and of the flat spray,
//! computed by hand and checked against the library.

mod common;

use std::sync::Arc;

use approx::assert_abs_diff_eq;
use spray_holonomy::ad::jacobian;
use spray_holonomy::geometry::{self, homogeneity_residual};
use spray_holonomy::holonomy::{analyze_point, bracket};
use spray_holonomy::transport::{self, BaseCurve};
use spray_holonomy::variational::{
    el_residual, hessian_report, homogeneity_of_candidate, Definiteness, LagrangianCandidate,
};

use common::{at, example, flat, max_abs, samples};

const P0: ([f64; 2], [f64; 2]) = ([0.0, 1.0], [1.0, 1.0]);

#[test]
fn example_one_connection_and_first_bracket() {
    let model = Arc::new(example(1).model().unwrap());
    let p = at(P0.0, P0.1);
    // N^1_1 = y2/(2 x2) + phi + x2 y1^2 / phi with phi = sqrt(2).
    let n11 = 0.5 + 2f64.sqrt() + 1.0 / 2f64.sqrt();
    assert_abs_diff_eq!(model.connection(&p).unwrap()[(0, 0)], n11, epsilon = 1e-12);

    let h = model.horizontal_frame();
    let v1 = bracket(&h[0], &h[1]).eval(&p.stacked(), 8).unwrap();
    let expected = [0.0, 0.0, -1.25, 1.25];
    assert!(max_abs(v1.iter().zip(expected).map(|(a, b)| a - b)) < 1e-10, "{v1}");
}

#[test]
fn example_one_fills_the_tangent_space() {
    let ex = example(1);
    let model = ex.model().unwrap();
    let pd = analyze_point(&model, &at(P0.0, P0.1), &ex.config.distribution_config()).unwrap();
    assert_eq!(pd.rank, 4);
    assert_eq!(pd.vertical.vertical_rank, 2);
    assert_eq!(pd.vertical.coordinate_vertical, vec![true, true]);
    assert!(pd.contains_liouville);
}

#[test]
fn example_one_coefficients_are_quadratic_and_isotropic() {
    let ex = example(1);
    let model = ex.model().unwrap();
    for p in samples(&ex, 20) {
        let r = homogeneity_residual(&model, &p).unwrap();
        assert!(max_abs(r) < 1e-9, "{p:?}");
        assert!(geometry::isotropy_check(&model, &p, 1e-8).unwrap().decomposes, "{p:?}");
    }
}

#[test]
fn example_one_y_derivative_matches_difference_quotient() {
    let model = example(1).model().unwrap();
    let g1 = &model.coefficients()[0];
    let z = at(P0.0, P0.1).stacked();
    let ad = common::ad_partial(&model, g1, &z, &[0, 0, 0, 1]);
    let fd = common::fd_first(&model, g1, &z, 3, 1e-5);
    assert!(common::scaled_gap(ad, fd) < 1e-6, "{ad} vs {fd}");
}

#[test]
fn example_two_frame_and_curvature() {
    let model = Arc::new(example(2).model().unwrap());
    let p = at(P0.0, P0.1);
    assert_eq!(model.g_values(&p).unwrap(), vec![0.5, 0.0]);
    assert_eq!(homogeneity_residual(&model, &p).unwrap(), vec![0.0, 0.0]);

    let h = model.horizontal_frame();
    let v = bracket(&h[0], &h[1]).eval(&p.stacked(), 8).unwrap();
    assert_eq!(v.as_slice(), &[0.0, 0.0, -1.0, 0.0]);

    // R^1_12 = -y1 / x2^2 is the only independent component.
    let curv = geometry::curvature(&model, &p).unwrap();
    assert_abs_diff_eq!(curv.get(0, 0, 1), -1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(curv.get(0, 1, 0), 1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(curv.get(1, 0, 1), 0.0, epsilon = 1e-14);
    assert_abs_diff_eq!(curv.max_abs(), 1.0, epsilon = 1e-14);
}

#[test]
fn example_two_jacobi_trace_matches_contraction() {
    let model = example(2).model().unwrap();
    // Phi^1_1 = y2 R^1_21 = y1 y2 / x2^2 and Phi^2_2 = 0.
    for (x, y) in [P0, ([0.3, 0.5], [-0.7, 0.4]), ([-1.0, 1.7], [0.2, -0.9])] {
        let jac = geometry::jacobi(&model, &at(x, y)).unwrap();
        let trace = y[0] * y[1] / (x[1] * x[1]);
        assert_abs_diff_eq!(jac.ricci, trace, epsilon = 1e-12);
        assert_abs_diff_eq!(jac.phi[0][0] + jac.phi[1][1], trace, epsilon = 1e-12);
    }
}

#[test]
fn example_two_frame_jacobian_matches_difference_quotient() {
    let model = Arc::new(example(2).model().unwrap());
    let h1 = model.horizontal_field(0);
    let z = at(P0.0, P0.1).stacked();
    let jac = jacobian(&h1, &z, 4).unwrap();
    let h = 1e-6;
    for b in 0..4 {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[b] += h;
        zm[b] -= h;
        let fd = (h1.eval(&zp, 4).unwrap() - h1.eval(&zm, 4).unwrap()) / (2.0 * h);
        for a in 0..4 {
            assert!((jac[(a, b)] - fd[a]).abs() < 1e-6, "entry ({a},{b}): {} vs {}", jac[(a, b)], fd[a]);
        }
    }
}

#[test]
fn example_two_horizontal_derivative_of_euclidean_energy() {
    let model = Arc::new(example(2).model().unwrap());
    let e = LagrangianCandidate::parse(&model, "E", "y1^2 + y2^2", 2.0).unwrap();
    let grad = spray_holonomy::ad::Jet::seed(&at(P0.0, P0.1).stacked(), 1);
    let ej = model.eval_expr(&e.expr, &grad).unwrap().gradient().unwrap();
    let n = model.connection(&at(P0.0, P0.1)).unwrap();
    // dE/dx^1 - N^j_1 dE/dy^j, with N^1_1 = 1 and dE/dy^1 = 2.
    let d1 = ej[0] - (0..2).map(|j| n[(j, 0)] * ej[2 + j]).sum::<f64>();
    assert_abs_diff_eq!(d1, -2.0, epsilon = 1e-14);
}

#[test]
fn example_three_energy_at_the_origin_is_euclidean() {
    let ex = example(3);
    let model = ex.model().unwrap();
    let cands = ex.candidates().unwrap();
    let e_mu = cands.iter().find(|c| c.name == "E_mu").unwrap();
    let rep = hessian_report(&model, &e_mu.expr, &at([0.0, 0.0], [0.4, -0.3]), 1e-8).unwrap();
    assert_eq!(rep.definiteness, Definiteness::PositiveDefinite);
    for i in 0..2 {
        for j in 0..2 {
            assert_abs_diff_eq!(rep.g[i][j], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-14);
        }
    }
    for p in samples(&ex, 50) {
        assert!(homogeneity_of_candidate(&model, &e_mu.expr, 2.0, &p).unwrap().abs() < 1e-9);
        assert!(max_abs(el_residual(&model, &e_mu.expr, &p).unwrap()) < 1e-9);
    }
}

#[test]
fn example_three_is_isotropic_with_positive_scalar() {
    let ex = example(3);
    let model = ex.model().unwrap();
    let jac = geometry::jacobi(&model, &at([0.0, 0.0], [1.0, 0.0])).unwrap();
    assert!(jac.phi.iter().flatten().all(|v| v.is_finite()));
    assert_abs_diff_eq!(jac.ricci, jac.rho, epsilon = 1e-14);
    for p in samples(&ex, 20) {
        let iso = geometry::isotropy_check(&model, &p, 1e-8).unwrap();
        assert!(iso.decomposes && iso.rho > 0.0, "{p:?}: {iso:?}");
        assert!(geometry::curvature(&model, &p).unwrap().max_abs() > 0.0);
    }
}

#[test]
fn example_four_is_flat_and_has_two_candidates() {
    let ex = example(4);
    let model = ex.model().unwrap();
    assert!(ex.config.candidates.len() >= 2);
    for p in samples(&ex, 20) {
        assert!(geometry::curvature(&model, &p).unwrap().max_abs() < 1e-9);
    }
}

#[test]
fn flat_spray_energy_and_point_distribution() {
    let model = flat(2);
    let p = at([0.3, -0.2], [1.0, 1.0]);
    let e = LagrangianCandidate::parse(&model, "E", "0.5*(y1^2 + y2^2)", 2.0).unwrap();
    assert_eq!(el_residual(&model, &e.expr, &p).unwrap(), vec![0.0, 0.0]);
    assert_eq!(homogeneity_of_candidate(&model, &e.expr, 2.0, &p).unwrap(), 0.0);
    let iso = geometry::isotropy_check(&model, &p, 1e-12).unwrap();
    assert!(iso.decomposes);
    assert_eq!(iso.rho, 0.0);
    assert_eq!(iso.alpha, vec![0.0, 0.0]);
}

#[test]
fn geodesics_of_flat_and_second_example() {
    let traj = transport::geodesic(&flat(2), &at([0.0, 0.0], [1.0, 2.0]), 1.0, 10).unwrap();
    let end = traj.last();
    assert!(max_abs(end.x.iter().zip([1.0, 2.0]).map(|(a, b)| a - b)) < 1e-14);
    assert_eq!(end.y, vec![1.0, 2.0]);

    let model = example(2).model().unwrap();
    let v0 = at([0.1, 0.5], [0.4, 0.3]);
    let traj = transport::geodesic(&model, &v0, 1.0, 100).unwrap();
    assert!(!traj.left_domain);
    for (k, s) in traj.states.iter().enumerate() {
        let t = k as f64 / 100.0;
        assert_abs_diff_eq!(s.x[1], 0.5 + 0.3 * t, epsilon = 1e-13);
    }
}

#[test]
fn energy_is_conserved_along_example_three_geodesics() {
    let ex = example(3);
    let model = ex.model().unwrap();
    let e_mu = ex.candidates().unwrap().into_iter().find(|c| c.name == "E_mu").unwrap();
    let traj = transport::geodesic(&model, &at([0.1, -0.2], [0.5, 0.3]), 1.0, 1000).unwrap();
    assert!(!traj.left_domain);
    let e0 = common::eval(&model, &e_mu.expr, &traj.states[0].stacked());
    let drift = max_abs(traj.states.iter().map(|s| common::eval(&model, &e_mu.expr, &s.stacked()) - e0));
    assert!(drift < 1e-8, "drift {drift:e}");
}

#[test]
fn transport_around_example_three_loops() {
    let ex = example(3);
    let model = ex.model().unwrap();
    let cands = ex.candidates().unwrap();
    let square = BaseCurve::square(&[0.3, 0.2], 0.2, 0, 1).unwrap();
    let (mu_drift, res) =
        transport::invariance_by_transport(&model, &cands.iter().find(|c| c.name == "E_mu").unwrap().expr, &square, &[1.0, 0.0], 2000)
            .unwrap();
    assert!(mu_drift < 1e-6);
    assert!(res.deviation() > 1e-3);
    assert!(res.error_estimate < 1e-10);

    let (euclid_drift, _) =
        transport::invariance_by_transport(&model, &cands.iter().find(|c| c.name == "E_euclid").unwrap().expr, &square, &[1.0, 0.0], 2000)
            .unwrap();
    let (euclid_fine, _) =
        transport::invariance_by_transport(&model, &cands.iter().find(|c| c.name == "E_euclid").unwrap().expr, &square, &[1.0, 0.0], 4000)
            .unwrap();
    assert!(euclid_drift > 1e-3);
    assert!((euclid_drift - euclid_fine).abs() < 1e-9);
}

#[test]
fn flat_transport_is_trivial() {
    let model = flat(2);
    let e = LagrangianCandidate::parse(&model, "E", "0.5*(y1^2 + y2^2)", 2.0).unwrap();
    let lp = BaseCurve::polyline(vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![-0.3, 2.0], vec![0.0, 0.0]]).unwrap();
    let (drift, res) = transport::invariance_by_transport(&model, &e.expr, &lp, &[0.6, -1.1], 50).unwrap();
    assert!(drift < 1e-12);
    assert_eq!(res.final_vector, vec![0.6, -1.1]);
}
