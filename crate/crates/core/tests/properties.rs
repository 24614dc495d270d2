use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use weinstein_lab::cli::{Command, RunConfig};
use weinstein_lab::continuation::loglog_fit;
use weinstein_lab::fibration::{horizontal_project, Connection};
use weinstein_lab::gluing::{build_glued, Cutoff};
use weinstein_lab::jetcalc::{eval_jet2, jacobi_spectrum, omega_from_hess, symplectic_sample, ChartPoint};
use weinstein_lab::scenes::{builtin_scene, SceneParams, SceneSpec};

fn scene(name: &str) -> SceneSpec {
    builtin_scene(name, &SceneParams::with_n(2)).unwrap()
}

fn coords(r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, 4)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn jacobi_reconstructs_symmetric_matrices(entries in prop::collection::vec(-10.0f64..10.0, 21)) {
        let n = 6;
        let mut m = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                m[(i, j)] = entries[k];
                m[(j, i)] = entries[k];
                k += 1;
            }
        }
        let s = jacobi_spectrum(&m).unwrap();
        let back = &s.vectors * DMatrix::from_diagonal(&DVector::from_vec(s.values.clone())) * s.vectors.transpose();
        prop_assert!((back - &m).amax() < 1e-10 * m.amax().max(1.0));
        prop_assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn liouville_equation_holds(x in coords(0.6), eps in 0.01f64..0.5, which in 0usize..3) {
        let s = scene(["local_nc", "cpn_o2h", "cpn_x_cpn"][which]);
        let p = ChartPoint::new(0, x);
        prop_assume!(eval_jet2(&s, &p, eps).is_ok_and(|j| j.value.is_finite() && j.grad.norm() < 1e6));
        let smp = symplectic_sample(&s, &p, eps).unwrap();
        prop_assert!(smp.liouville_residual() < 1e-8 * smp.lambda.norm().max(1.0));
    }

    #[test]
    fn omega_does_not_depend_on_eps(x in coords(0.6), e1 in 0.01f64..0.5, e2 in 0.01f64..0.5) {
        let s = scene("cpn_o2h");
        let p = ChartPoint::new(0, x);
        let (Ok(a), Ok(b)) = (eval_jet2(&s, &p, e1), eval_jet2(&s, &p, e2)) else {
            return Ok(());
        };
        // near {s_eps = 0} the Hessian is huge and cancellation dominates
        prop_assume!(a.hess.amax() < 1e4 && b.hess.amax() < 1e4);
        let d = omega_from_hess(&a.hess, s.dc_sign) - omega_from_hess(&b.hess, s.dc_sign);
        prop_assert!(d.amax() < 1e-9, "{}", d.amax());
    }

    #[test]
    fn horizontal_projection_is_idempotent(x in coords(0.4), v in coords(1.0)) {
        let s = scene("local_nc");
        let p = ChartPoint::new(0, x);
        let Ok(conn) = Connection::at(&s, &p) else {
            return Ok(());
        };
        let v = DVector::from_vec(v);
        let h = horizontal_project(&s, &p, &v).unwrap();
        let hh = horizontal_project(&s, &p, &h).unwrap();
        prop_assert!((&hh - &h).amax() < 1e-9 * v.amax().max(1.0));
        // the horizontal part carries all of d pi(v)
        prop_assert!((conn.dpi_of(&h) - conn.dpi_of(&v)).abs() < 1e-9 * v.amax().max(1.0));
    }

    #[test]
    fn glued_hamiltonian_matches_closed_form(x in coords(0.3)) {
        let s = scene("local_nc");
        let gs = build_glued(&s, &ChartPoint::new(0, vec![0.0; 4]), 0.25, 0.02).unwrap();
        let (u, v) = gs.uv(&x);
        let closed = 0.5 * (u[0] * v[0] + u[1] * v[1]);
        prop_assert!((gs.h(&x).unwrap() - closed).abs() < 1e-12);
    }

    #[test]
    fn cutoff_is_a_monotone_step(eps0 in 0.01f64..1.0, t in -0.5f64..1.5) {
        let c = Cutoff { eps0 };
        let r = c.lo() + t * (c.hi() - c.lo());
        let v = c.value(r);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(c.derivative(r) >= 0.0 && c.derivative(r) <= c.max_slope() * (1.0 + 1e-12));
        if t <= 0.0 {
            prop_assert_eq!(v, 0.0);
        }
        if t >= 1.0 {
            prop_assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn loglog_fit_recovers_power_laws(c in 0.1f64..10.0, slope in -3.0f64..3.0) {
        let x = [1e-1f64, 5e-2, 2e-2, 1e-2, 5e-3];
        let y: Vec<f64> = x.iter().map(|t| -c * t.powf(slope)).collect();
        let (s, icpt, rms) = loglog_fit(&x, &y);
        prop_assert!((s - slope).abs() < 1e-10);
        prop_assert!((icpt - c.ln()).abs() < 1e-9);
        prop_assert!(rms < 1e-10);
    }

    #[test]
    fn resolved_config_is_a_fixed_point(eps in 1e-3f64..0.5, seed in 0u64..1000, which in 0usize..3) {
        let cmd = [Command::Crit, Command::Thimble, Command::Glue][which];
        let text = format!(r#"{{"scene": "local_nc", "eps": {eps}, "seed": {seed}}}"#);
        let once = RunConfig::from_json(&text).unwrap().resolve(cmd, None).unwrap();
        let twice = RunConfig::from_json(&serde_json::to_string(&once).unwrap())
            .unwrap()
            .resolve(cmd, None)
            .unwrap();
        prop_assert_eq!(once, twice);
    }
}
