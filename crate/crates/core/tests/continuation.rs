use weinstein_lab::continuation::*;
use weinstein_lab::critfinder::{find_stratum_critical_points, RestrictedField, SeedPlan};
use weinstein_lab::scenes::{builtin_scene, sample_stratum, SceneParams};

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = x.iter().zip(y).map(|(a, b)| (a.ln(), b.abs().ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

#[test]
fn local_model_track_matches_closed_form_spectrum() {
    let s = builtin_scene("local_nc", &SceneParams::with_n(2)).unwrap();
    let run = run_ladder(&s, &DEFAULT_LADDER, &SeedPlan::with_seed(3)).unwrap();
    assert_eq!(run.tracks.len(), 1);
    let t = &run.tracks[0];
    assert_eq!(t.limit_class, LimitClass::ToStratum);
    // Hessian at the origin: eigenvalues 2 - 2/eps (twice) and 2 + 2/eps (twice)
    for r in &t.records {
        let want = [2.0 - 2.0 / r.eps, 2.0 - 2.0 / r.eps, 2.0 + 2.0 / r.eps, 2.0 + 2.0 / r.eps];
        for (a, b) in r.spectrum.iter().zip(want) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
    let eps = t.eps();
    let minus: Vec<f64> = eps.iter().map(|e| 2.0 - 2.0 / e).collect();
    let plus: Vec<f64> = eps.iter().map(|e| 2.0 + 2.0 / e).collect();
    assert!((t.slope_fit[0].slope - ls_slope(&eps, &minus)).abs() < 1e-9);
    assert!((t.slope_fit[3].slope - ls_slope(&eps, &plus)).abs() < 1e-9);
    assert_eq!(verify_index_shift(t).unwrap().status, CheckStatus::Pass);
    assert_eq!(verify_divergence(t).status, CheckStatus::Pass);
    let v = value_asymptotics(&s, t).unwrap();
    assert!(v.deviation < 1e-12);
}

#[test]
fn product_scene_tracks_shift_index_by_two() {
    let s = builtin_scene("cpn_x_cpn", &SceneParams::with_n(2)).unwrap();
    let run = run_ladder(&s, &DEFAULT_LADDER, &SeedPlan::with_seed(11)).unwrap();
    let st: Vec<_> = run.tracks.iter().filter(|t| t.limit_class == LimitClass::ToStratum).collect();
    assert_eq!(st.len(), 2);
    let mut shifts: Vec<(usize, usize)> = st
        .iter()
        .map(|t| {
            let r = verify_index_shift(t).unwrap();
            assert_eq!(r.status, CheckStatus::Pass);
            (r.stratum_index.unwrap(), r.expected.unwrap())
        })
        .collect();
    shifts.sort();
    assert_eq!(shifts, vec![(0, 2), (2, 4)]);
    for t in &st {
        let v = value_asymptotics(&s, t).unwrap();
        // independent oracle: -ln a_i^2 at (e_i, e_i)
        let i = s.chart_indices(t.limit_point.chart)[0];
        let a = 1.0 + i as f64 / 10.0;
        assert!((v.limit + (a * a).ln()).abs() < 1e-3);
    }
    assert_eq!(bijection_check(&run).status, CheckStatus::Pass);
    assert_eq!(escape_evidence(&s, &run.tracks).status, CheckStatus::Pass);
}

#[test]
fn quadric_slope_fit_sees_offset() {
    // the minus branch is 4 - 2/(a eps)-like, which bends the log-log fit
    let s = builtin_scene("cpn_o2h", &SceneParams::with_n(2)).unwrap();
    let run = run_ladder(&s, &DEFAULT_LADDER, &SeedPlan::with_seed(5)).unwrap();
    let t = run.tracks.iter().find(|t| t.limit_class == LimitClass::ToStratum).unwrap();
    let d = verify_divergence(t);
    assert_eq!(d.diverging_slopes.len(), 4);
    assert!(d.worst_slope_error > SLOPE_TOL);
    assert_eq!(verify_index_shift(t).unwrap().status, CheckStatus::Pass);
}

#[test]
fn tangency_holds_without_perturbation_and_is_gated_with_it() {
    let plan = SeedPlan::with_seed(2);
    for (kappa, expect_hyp) in [(0.0, true), (0.3, false)] {
        let mut p = SceneParams::with_n(2);
        p.kappa = Some(kappa);
        let s = builtin_scene("cpn_x_cpn", &p).unwrap();
        let samples = sample_stratum(&s, 20, 9).unwrap();
        let eps = 0.01;
        let (crits, _) = find_stratum_critical_points(&s, eps, &plan).unwrap();
        let rf = RestrictedField { scene: &s, eps };
        let full: Vec<_> = crits.iter().map(|c| rf.to_full(&c.point)).collect();
        let rep = prop36_checks(&s, eps, &samples, &full).unwrap();
        if expect_hyp {
            assert_eq!(rep.hypothesis, CheckStatus::Pass);
            assert_eq!(rep.tangency, CheckStatus::Pass, "{}", rep.tangency_residual);
            assert_eq!(rep.crit, CheckStatus::Pass, "{}", rep.crit_residual);
        } else {
            assert_eq!(rep.hypothesis, CheckStatus::Fail);
            assert_eq!(rep.tangency, CheckStatus::NotImplied);
            assert_eq!(rep.crit, CheckStatus::NotImplied);
            assert!(rep.tangency_residual > TANGENCY_TOL);
        }
    }
}

#[test]
fn empty_and_bad_ladders() {
    let s = builtin_scene("local_nc", &SceneParams::with_n(2)).unwrap();
    let run = run_ladder(&s, &[], &SeedPlan::with_seed(1)).unwrap();
    assert!(run.tracks.is_empty());
    assert!(run_ladder(&s, &[0.01, 0.1], &SeedPlan::with_seed(1)).is_err());
}
