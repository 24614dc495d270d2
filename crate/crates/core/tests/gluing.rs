use weinstein_lab::continuation::CheckStatus;
use weinstein_lab::critfinder::SeedPlan;
use weinstein_lab::fibration::{build_thimble, ThimbleOptions};
use weinstein_lab::gluing::*;
use weinstein_lab::jetcalc::ChartPoint;
use weinstein_lab::scenes::{builtin_scene, SceneParams, SceneSpec};

fn local() -> SceneSpec {
    builtin_scene("local_nc", &SceneParams::with_n(2)).unwrap()
}

fn origin() -> ChartPoint {
    ChartPoint::new(0, vec![0.0; 4])
}

#[test]
fn darboux_frame_is_symplectic_and_spans_thimble() {
    let s = local();
    let gs = build_glued(&s, &origin(), 0.25, 0.02).unwrap();
    let om = |a: &nalgebra::DVector<f64>, b: &nalgebra::DVector<f64>| (a.transpose() * &gs.omega * b)[0];
    for i in 0..2 {
        for j in 0..2 {
            let d = if i == j { 1.0 } else { 0.0 };
            assert!((om(&gs.frame_u[i], &gs.frame_v[j]) - d).abs() < 1e-12);
            assert!(om(&gs.frame_u[i], &gs.frame_u[j]).abs() < 1e-12);
            assert!(om(&gs.frame_v[i], &gs.frame_v[j]).abs() < 1e-12);
        }
        // U_i in {z1 = conj z0}: (x0, y0, x1, y1) with x1 = x0, y1 = -y0
        let u = &gs.frame_u[i];
        assert!((u[2] - u[0]).abs() < 1e-12 && (u[3] + u[1]).abs() < 1e-12);
    }
}

#[test]
fn xi_is_a_primitive_of_omega() {
    let s = local();
    let gs = build_glued(&s, &origin(), 0.25, 0.02).unwrap();
    for x in gs.samples(50, 11) {
        let d = gs.exterior_derivative(|y| gs.xi(y), &x).unwrap();
        assert!((d - &gs.omega).amax() < 1e-9);
    }
}

#[test]
fn primitive_is_path_independent_and_quadratic() {
    let s = local();
    let gs = build_glued(&s, &origin(), 0.25, 0.02).unwrap();
    for x in gs.samples(30, 5) {
        let (u, v) = gs.uv(&x);
        let closed = 0.5 * (u[0] * v[0] + u[1] * v[1]);
        let h = gs.h(&x).unwrap();
        assert!((h - closed).abs() < 1e-12);
        assert!((h - gs.h_two_path(&x).unwrap()).abs() < PATH_TOL);
    }
}

#[test]
fn psi_matches_phi_at_p() {
    let s = local();
    let gs = build_glued(&s, &origin(), 0.25, 0.02).unwrap();
    assert_eq!(gs.psi(&[0.0; 4]).unwrap(), gs.phi(&[0.0; 4]).unwrap());
    assert_eq!(gs.phi(&[0.0; 4]).unwrap(), -(0.02f64 * 0.02).ln());
}

fn full_suite(eps: f64, eps0: f64) {
    let s = local();
    let gs = build_glued(&s, &origin(), eps0, eps).unwrap();
    let rep = verify_glued(&gs, 1000, 2024).unwrap();
    assert_eq!(rep.branch_status, CheckStatus::Pass);
    assert_eq!(rep.dlambda_status, CheckStatus::Pass, "{}", rep.dlambda_residual);
    assert_eq!(rep.dxi_status, CheckStatus::Pass, "{}", rep.dxi_residual);
    assert_eq!(rep.h_drho_status, CheckStatus::Pass);
    assert_eq!(rep.positivity_status, CheckStatus::Pass);
    assert!(rep.positivity.samples >= 990);
    assert_eq!(rep.interpolation_status, CheckStatus::Pass);
    let mesh = build_thimble(&s, &origin(), eps, &ThimbleOptions::default()).unwrap();
    let u = glued_unstable_check(&gs, &mesh, &SeedPlan::with_seed(9), None).unwrap();
    assert_eq!(u.unique_status, CheckStatus::Pass, "{:?}", u.critical_points);
    assert_eq!(u.tangency_status, CheckStatus::Pass);
    assert_eq!(u.sign_status, CheckStatus::Pass);
}

#[test]
fn suite_passes_at_base_configuration() {
    full_suite(0.02, 0.25);
}

#[test]
fn suite_passes_with_halved_eps() {
    full_suite(0.01, 0.25);
}

#[test]
fn suite_passes_with_both_halved() {
    full_suite(0.01, 0.125);
}

#[test]
fn inner_search_box_finds_same_point() {
    let s = local();
    let gs = build_glued(&s, &origin(), 0.25, 0.02).unwrap();
    let mesh = build_thimble(&s, &origin(), 0.02, &ThimbleOptions { angular: 4, ..Default::default() }).unwrap();
    let u = glued_unstable_check(&gs, &mesh, &SeedPlan::with_seed(4), Some(gs.rho.lo())).unwrap();
    assert_eq!(u.critical_points.len(), 1);
    assert!(u.located < LOCATE_TOL);
}
