use nalgebra::DVector;
use weinstein_lab::fibration::*;
use weinstein_lab::jetcalc::{ChartPoint, C64};
use weinstein_lab::scenes::{builtin_scene, SceneParams, SceneSpec};

fn local() -> SceneSpec {
    builtin_scene("local_nc", &SceneParams::with_n(2)).unwrap()
}

fn seed_state(s: &SceneSpec, t0: f64, theta: f64) -> TransportState {
    let r = t0.sqrt();
    let p = ChartPoint::new(0, vec![r * theta.cos(), r * theta.sin(), r * theta.cos(), -r * theta.sin()]);
    project_to_fiber(s, &p, C64::new(t0, 0.0), 10).unwrap()
}

#[test]
fn transport_stays_on_conjugate_plane() {
    let s = local();
    let st = seed_state(&s, 1e-3, 0.7);
    let end = transport(&s, &st, 0.04, 0.04).unwrap();
    let z = end.point.complex();
    assert!((z[1] - z[0].conj()).abs() < 1e-6);
    assert!((z[0].abs() - 0.2).abs() < 1e-6);
    assert!(end.fiber_residual < FIBER_TOL);
    // the angle is preserved: the lift is radial in this model
    assert!((z[0].im.atan2(z[0].re) - 0.7).abs() < 1e-8);
}

#[test]
fn transport_round_trip() {
    let s = local();
    let st = seed_state(&s, 1e-3, 1.9);
    let up = transport(&s, &st, 0.04, 0.04).unwrap();
    let back = transport(&s, &up, 1e-3, 0.04).unwrap();
    let d: f64 = back.point.coords.iter().zip(&st.point.coords).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(d < 1e-7, "{d}");
}

#[test]
fn local_thimble_matches_analytic_and_nests() {
    let s = local();
    let p = ChartPoint::new(0, vec![0.0; 4]);
    let opts = ThimbleOptions {
        base_step: Some(0.0025),
        ..Default::default()
    };
    let big = build_thimble(&s, &p, 0.04, &opts).unwrap();
    assert!(big.failed_lines.is_empty());
    assert!(local_thimble_deviation(&big) < 1e-6);
    assert!(big.max_relative_lagrangian() < 1e-6);
    let small = build_thimble(&s, &p, 0.01, &opts).unwrap();
    let nest = mesh_nesting(&small, &big).unwrap();
    assert!(nest < 1e-8, "{nest}");
}

#[test]
fn single_seed_has_no_cells() {
    let s = local();
    let opts = ThimbleOptions {
        angular: 1,
        ..Default::default()
    };
    let m = build_thimble(&s, &ChartPoint::new(0, vec![0.0; 4]), 0.04, &opts).unwrap();
    assert_eq!(m.transverse_grid.len(), 1);
    assert!(m.cells.is_empty());
    assert_eq!(m.max_relative_lagrangian(), 0.0);
}

#[test]
fn halving_seed_fiber_barely_moves_top_rung() {
    let s = local();
    let p = ChartPoint::new(0, vec![0.0; 4]);
    let a = build_thimble(&s, &p, 0.04, &ThimbleOptions::default()).unwrap();
    let b = build_thimble(&s, &p, 0.04, &ThimbleOptions { t0_factor: 5e-4, ..Default::default() }).unwrap();
    let top = a.base_grid.len() - 1;
    for (x, y) in a.points[top].iter().zip(&b.points[top]) {
        let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
        let d: f64 = x.coords.iter().zip(&y.coords).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        assert!(d < 1e-7);
    }
}

#[test]
fn alignment_on_all_builtin_scenes() {
    for (name, n) in [("local_nc", 2), ("local_nc", 3), ("cpn_o2h", 2), ("cpn_o2h", 3), ("cpn_x_cpn", 2)] {
        let s = builtin_scene(name, &SceneParams::with_n(n)).unwrap();
        let eps = 0.04;
        let samples = fiber_samples(&s, eps, 1e-3, 100, 17).unwrap();
        let rep = lefschetz_alignment(&s, eps, &samples).unwrap();
        assert!(rep.max_horizontal < 1e-8, "{name} {n}: {}", rep.max_horizontal);
        assert!(rep.max_radial < 1e-8, "{name} {n}: {}", rep.max_radial);
    }
}

#[test]
fn vertical_vector_fails_alignment() {
    let s = local();
    let p = ChartPoint::new(0, vec![0.2, 0.0, 0.1, 0.0]);
    // (z0, -z1) direction is tangent to the fiber z0 z1 = const
    let v = DVector::from_vec(vec![0.2, 0.0, -0.1, 0.0]);
    let (a, _) = alignment_residuals(&s, &p, 0.04, Some(&v)).unwrap();
    assert!((a - 1.0).abs() < 1e-12);
}

#[test]
fn lefschetz_field_oracle_in_local_model() {
    // flat metric: X is the Hermitian lift of a base vector along conj(dpi),
    // and dpi(X) is a real multiple of pi + eps
    let s = local();
    let p = ChartPoint::new(0, vec![0.15, 0.05, 0.1, -0.02]);
    let eps = 0.04;
    let x = {
        let conn = Connection::at(&s, &p).unwrap();
        let e = eta(&s, &p, eps).unwrap();
        weinstein_lab::jetcalc::omega_dual(&conn.omega, &e).unwrap()
    };
    let z = p.complex();
    let c = [z[1], z[0]];
    let xz = [C64::new(x[0], x[1]), C64::new(x[2], x[3])];
    // X proportional to conj(c)
    let k = xz[0] / c[0].conj();
    assert!((xz[1] - k * c[1].conj()).abs() < 1e-12);
    let pi = z[0] * z[1];
    let d = (c[0] * xz[0] + c[1] * xz[1]) / (pi + C64::new(eps, 0.0));
    assert!(d.im.abs() < 1e-12 * d.abs());
}

#[test]
fn transport_preserves_fiber_area() {
    for (name, eps) in [("local_nc", 0.04), ("cpn_x_cpn", 0.04)] {
        let s = builtin_scene(name, &SceneParams::with_n(2)).unwrap();
        let p = fiber_samples(&s, 0.01, 0.005, 1, 3).unwrap().remove(0);
        let st = project_to_fiber(&s, &p, C64::new(0.008, 0.0), 20).unwrap();
        let drift = area_drift(&s, &st, eps, eps, 1e-4).unwrap();
        assert!(drift < 1e-6, "{name}: {drift}");
    }
}

#[test]
fn rank_drop_is_reported() {
    let s = local();
    let v = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
    assert!(horizontal_project(&s, &ChartPoint::new(0, vec![0.0; 4]), &v).is_err());
}
