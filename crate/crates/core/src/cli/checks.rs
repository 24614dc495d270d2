//! Check producers, one per command family. Each appends report rows and
//! writes its bulk data through an [`Output`].

use super::config::RunConfig;
use super::report::{CheckRow, Output};
use crate::continuation::{
    bijection_check, escape_evidence, prop36_checks, run_ladder, value_asymptotics, verify_divergence,
    verify_index_shift, LimitClass,
};
use crate::critfinder::{
    classify, find_critical_points, unstable_plane_check, CritRecord, LinearPlane, OriginTag, PlaneFlowOptions,
    RestrictedField,
};
use crate::error::{LabError, Result};
use crate::fibration::{
    build_thimble, fiber_samples, lefschetz_alignment, local_thimble_deviation, mesh_nesting, pi_jet, ThimbleMesh,
};
use crate::gluing::{build_glued, glued_unstable_check, verify_glued};
use crate::jetcalc::invariants::{kernel_report, kernel_samples};
use crate::jetcalc::{eval_jet2, fd, jacobi_spectrum, phi_value, ChartPoint, C64};
use crate::scenes::{sample_stratum, CritPhi0, Model, SceneSpec};

pub const KERNEL_EPS: [f64; 3] = [0.5, 0.1, 0.02];
pub const LOCAL_SPECTRUM_EPS: [f64; 3] = [0.5, 0.1, 0.02];
/// Lower bound of `|pi|` for alignment samples.
pub const ALIGNMENT_T_MIN: f64 = 1e-3;
pub const PLANE_EPS: f64 = 0.1;

pub type Rows = Vec<CheckRow>;

/// `name_n<dim>` tag used in row names.
pub fn scene_tag(scene: &SceneSpec) -> String {
    format!("{}_n{}", scene.name, scene.n)
}

fn origin(scene: &SceneSpec) -> ChartPoint {
    ChartPoint::new(0, vec![0.0; scene.real_dim()])
}

fn is_local2(scene: &SceneSpec) -> bool {
    matches!(&scene.model, Model::LocalNc { .. }) && scene.n == 2
}

fn record_row(r: &CritRecord) -> Vec<f64> {
    let mut v = vec![r.eps, r.point.chart as f64];
    v.extend(&r.point.coords);
    v.extend([r.value, r.grad_norm, r.index as f64, r.nullity as f64]);
    v.extend(&r.spectrum);
    v
}

fn record_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["eps", "chart"].iter().map(|s| s.to_string()).collect();
    h.extend((0..dim).map(|i| format!("x{i}")));
    h.extend(["value", "grad_norm", "index", "nullity"].iter().map(|s| s.to_string()));
    h.extend((0..dim).map(|i| format!("eig{i}")));
    h
}

/// Critical points of `phi_eps`, with the product-example index check where
/// the answer is known.
pub fn crit(cfg: &RunConfig, scene: &SceneSpec, out: &Output, rows: &mut Rows) -> Result<Vec<CritRecord>> {
    let eps = cfg.eps.ok_or_else(|| LabError::Config("`eps` is required".into()))?;
    let tol = &cfg.tolerances;
    let tag = scene_tag(scene);
    let (recs, stats) = find_critical_points(scene, eps, &cfg.plan())?;
    let anchor = "critical-points";
    rows.push(CheckRow::new(format!("crit.{tag}.found"), anchor, recs.is_empty() as u8 as f64, 0.0));
    let g = recs.iter().map(|r| r.grad_norm).fold(0.0, f64::max);
    rows.push(CheckRow::new(format!("crit.{tag}.grad_norm"), anchor, g, tol.grad_norm));
    if let Model::CpnXCpn { kappa, .. } = &scene.model {
        if *kappa == 0.0 {
            let mut idx: Vec<usize> = recs.iter().map(|r| r.index).collect();
            idx.sort();
            let expected: Vec<usize> = (0..=scene.n).map(|k| 2 * k).collect();
            let mismatch = if idx == expected { 0.0 } else { 1.0 + idx.len().abs_diff(expected.len()) as f64 };
            rows.push(CheckRow::new(
                format!("crit.{tag}.indices"),
                "product-example-indices",
                mismatch,
                0.0,
            ));
        }
    }
    if is_local2(scene) {
        local_spectrum(cfg, scene, &[eps], rows)?;
    }
    #[derive(serde::Serialize)]
    struct Dump<'a> {
        eps: f64,
        stats: &'a crate::critfinder::FindStats,
        records: &'a [CritRecord],
    }
    out.json("crit_points.json", &Dump { eps, stats: &stats, records: &recs })?;
    let table: Vec<Vec<f64>> = recs.iter().map(record_row).collect();
    out.csv("crit_points.csv", &record_header(scene.real_dim()), &table)?;
    Ok(recs)
}

/// Hessian spectrum of the local model at the origin against `2(1 -+ 1/eps)`,
/// from AD and from finite differences.
pub fn local_spectrum(cfg: &RunConfig, scene: &SceneSpec, eps_list: &[f64], rows: &mut Rows) -> Result<()> {
    if !is_local2(scene) {
        return Err(LabError::NotLocalModel(scene.name.clone()));
    }
    let p = origin(scene);
    for &eps in eps_list {
        let analytic = [2.0 * (1.0 - 1.0 / eps), 2.0 * (1.0 - 1.0 / eps), 2.0 * (1.0 + 1.0 / eps), 2.0 * (1.0 + 1.0 / eps)];
        let rel = |vals: &[f64]| {
            vals.iter()
                .zip(&analytic)
                .map(|(a, b)| ((a - b) / b).abs())
                .fold(0.0, f64::max)
        };
        let ad = jacobi_spectrum(&eval_jet2(scene, &p, eps)?.hess)?;
        let h = fd::hessian(|x| phi_value(scene, &ChartPoint::new(0, x.to_vec()), eps), &p.coords, 1e-4)?;
        let fdv = jacobi_spectrum(&h)?;
        let anchor = "local-model-hessian";
        rows.push(CheckRow::new(format!("local_spectrum.eps{eps}.ad"), anchor, rel(&ad.values), cfg.tolerances.local_spectrum));
        rows.push(CheckRow::new(format!("local_spectrum.eps{eps}.fd"), anchor, rel(&fdv.values), cfg.tolerances.ad_fd_hess));
    }
    Ok(())
}

/// Ladder continuation with the index-shift, divergence, value, escape,
/// bijection and Liouville-tangency checks.
pub fn ladder(cfg: &RunConfig, scene: &SceneSpec, out: &Output, rows: &mut Rows) -> Result<()> {
    let tol = &cfg.tolerances;
    let tag = scene_tag(scene);
    let ladder = cfg.ladder();
    let run = run_ladder(scene, &ladder, &cfg.plan())?;
    let dim = scene.real_dim();
    for (k, t) in run.tracks.iter().enumerate() {
        let table: Vec<Vec<f64>> = t.records.iter().map(record_row).collect();
        out.csv(&format!("tracks/track_{k:03}.csv"), &record_header(dim), &table)?;
    }
    out.json("ladder.json", &run)?;
    let mut seen = std::collections::BTreeSet::new();
    for (k, t) in run.tracks.iter().enumerate() {
        if t.limit_class != LimitClass::ToStratum {
            continue;
        }
        // named after the matched stratum point, which does not depend on the
        // seed, unlike the track number
        let mut name = match &t.matched_stratum_crit {
            Some(m) => format!("{tag}.chart{}_index{}", m.point.chart, m.index),
            None => format!("{tag}.track{k:03}"),
        };
        if !seen.insert(name.clone()) {
            name = format!("{name}.track{k:03}");
        }
        let shift = verify_index_shift(t)?;
        rows.push(CheckRow::new(
            format!("index_shift.{name}"),
            "index-shift-theorem",
            if shift.status.ok() { 0.0 } else { 1.0 },
            0.0,
        ));
        let d = verify_divergence(t);
        let within = t.slope_fit.iter().filter(|f| (f.slope + 1.0).abs() <= tol.slope).count();
        let anchor = "eigenvalue-divergence";
        rows.push(CheckRow::new(
            format!("divergence.{name}.count"),
            anchor,
            within.abs_diff(4) as f64 + d.diverging_slopes.len().abs_diff(4) as f64,
            0.0,
        ));
        rows.push(CheckRow::new(format!("divergence.{name}.slope"), anchor, d.worst_slope_error, tol.slope));
        rows.push(CheckRow::new(format!("divergence.{name}.cauchy"), anchor, d.cauchy_change, tol.cauchy));
        rows.push(CheckRow::new(
            format!("divergence.{name}.stratum_spectrum"),
            anchor,
            d.stratum_spectrum_error,
            tol.stratum_spectrum,
        ));
        let v = value_asymptotics(scene, t)?;
        rows.push(CheckRow::new(format!("value.{name}"), "value-asymptotics", v.deviation, tol.value));
    }
    let esc = escape_evidence(scene, &run.tracks);
    let closest = esc.min_b_distance.min(esc.min_d0_distance);
    rows.push(CheckRow::new(
        format!("escape.{tag}"),
        "no-escape",
        if closest.is_finite() { esc.threshold / closest } else { 0.0 },
        1.0,
    ));
    let bij = bijection_check(&run);
    rows.push(CheckRow::new(
        format!("bijection.{tag}"),
        "stratum-bijection",
        bij.stratum_tracks.abs_diff(bij.stratum_crits) as f64 + (!bij.matched_one_to_one) as u8 as f64,
        0.0,
    ));
    out.json("escape.json", &esc)?;
    if matches!(scene.model, Model::CpnXCpn { .. }) {
        tangency(cfg, scene, *ladder.last().unwrap(), out, rows)?;
    }
    Ok(())
}

/// Tangency of `Z_eps` to the stratum and criticality at `Crit(S-bar)`,
/// gated on the hypothesis `dg|_E = 0`.
pub fn tangency(cfg: &RunConfig, scene: &SceneSpec, eps: f64, out: &Output, rows: &mut Rows) -> Result<()> {
    let tol = &cfg.tolerances;
    let tag = scene_tag(scene);
    let samples = sample_stratum(scene, cfg.samples.prop36, cfg.seed)?;
    let (crits, _) = crate::critfinder::find_stratum_critical_points(scene, eps, &cfg.plan())?;
    let rf = RestrictedField { scene, eps };
    let full: Vec<ChartPoint> = crits.iter().map(|c| rf.to_full(&c.point)).collect();
    let rep = prop36_checks(scene, eps, &samples, &full)?;
    let hyp = rep.hypothesis_residual <= tol.hypothesis;
    let anchor = "stratum-tangency-proposition";
    rows.push(CheckRow::new(format!("tangency.{tag}.hypothesis"), anchor, rep.hypothesis_residual, tol.hypothesis));
    rows.push(CheckRow::new(format!("tangency.{tag}.liouville"), anchor, rep.tangency_residual, tol.tangency).gated(hyp));
    rows.push(CheckRow::new(format!("tangency.{tag}.crit"), anchor, rep.crit_residual, tol.stratum_crit).gated(hyp));
    out.json("tangency.json", &rep)?;
    Ok(())
}

/// Lefschetz alignment of `Z_eps` with the horizontal lift of the radial field.
pub fn alignment(cfg: &RunConfig, scene: &SceneSpec, eps: f64, out: &Output, rows: &mut Rows) -> Result<()> {
    let tag = scene_tag(scene);
    let samples = fiber_samples(scene, eps, ALIGNMENT_T_MIN, cfg.samples.alignment, cfg.seed)?;
    let rep = lefschetz_alignment(scene, eps, &samples)?;
    let anchor = "lefschetz-alignment-lemma";
    rows.push(CheckRow::new(format!("alignment.{tag}.count"), anchor, cfg.samples.alignment.abs_diff(rep.rows.len()) as f64, 0.0));
    rows.push(CheckRow::new(format!("alignment.{tag}.horizontal"), anchor, rep.max_horizontal, cfg.tolerances.alignment));
    rows.push(CheckRow::new(format!("alignment.{tag}.radial"), anchor, rep.max_radial, cfg.tolerances.alignment));
    out.json(&format!("alignment_{tag}.json"), &rep)?;
    Ok(())
}

/// Critical point of `pi` on `S-bar` the thimble grows from.
fn thimble_center(scene: &SceneSpec) -> Result<ChartPoint> {
    if matches!(scene.model, Model::LocalNc { .. }) {
        return Ok(origin(scene));
    }
    scene
        .known_truth
        .crit_sbar
        .first()
        .map(|c| c.point.clone())
        .ok_or_else(|| LabError::Unsupported(format!("no known thimble center for {}", scene.name)))
}

fn mesh_table(scene: &SceneSpec, mesh: &ThimbleMesh) -> Result<Vec<Vec<f64>>> {
    let mut table = vec![];
    for (b, (t, row)) in mesh.base_grid.iter().zip(&mesh.points).enumerate() {
        for (j, p) in row.iter().enumerate() {
            let Some(p) = p else { continue };
            let (c, a) = mesh.transverse_grid[j];
            let (pr, pi) = pi_jet(scene, p)?;
            let fiber = (C64::new(pr.value, pi.value) - C64::new(*t, 0.0)).abs();
            let mut v = vec![b as f64, *t, j as f64, c as f64, a, p.chart as f64];
            v.extend(&p.coords);
            v.push(fiber);
            table.push(v);
        }
    }
    Ok(table)
}

/// Thimble mesh with Lagrangian and (on the local model) analytic and
/// nesting checks, plus the alignment check of the scene.
pub fn thimble(cfg: &RunConfig, scene: &SceneSpec, out: &Output, rows: &mut Rows) -> Result<ThimbleMesh> {
    let eps = cfg.eps.ok_or_else(|| LabError::Config("`eps` is required".into()))?;
    let tol = &cfg.tolerances;
    let tag = scene_tag(scene);
    let p = thimble_center(scene)?;
    let mesh = build_thimble(scene, &p, eps, &cfg.thimble)?;
    let anchor = "thimble-geometry";
    rows.push(CheckRow::new(format!("thimble.{tag}.failed_lines"), anchor, mesh.failed_lines.len() as f64, 0.0));
    rows.push(CheckRow::new(format!("thimble.{tag}.lagrangian"), anchor, mesh.max_relative_lagrangian(), tol.lagrangian));
    if is_local2(scene) {
        rows.push(CheckRow::new(format!("thimble.{tag}.analytic"), anchor, local_thimble_deviation(&mesh), tol.thimble_analytic));
        if let Some(small_eps) = cfg.nesting_eps {
            let small = build_thimble(scene, &p, small_eps, &cfg.thimble)?;
            let nest = mesh_nesting(&small, &mesh).unwrap_or(f64::INFINITY);
            rows.push(CheckRow::new(format!("thimble.{tag}.nesting"), anchor, nest, tol.nesting));
            rows.push(CheckRow::new(
                format!("thimble.{tag}.nested_lagrangian"),
                anchor,
                small.max_relative_lagrangian(),
                tol.lagrangian,
            ));
        }
    }
    let mut header: Vec<String> = ["base", "t", "line", "center", "angle", "chart"].iter().map(|s| s.to_string()).collect();
    header.extend((0..scene.real_dim()).map(|i| format!("x{i}")));
    header.push("fiber_residual".into());
    out.csv("thimble_mesh.csv", &header, &mesh_table(scene, &mesh)?)?;
    out.json("thimble.json", &mesh)?;
    alignment(cfg, scene, eps, out, rows)?;
    Ok(mesh)
}

/// The gluing suite at `(eps, eps0)`, `(eps/2, eps0)` and `(eps/2, eps0/2)`.
pub fn glue(cfg: &RunConfig, scene: &SceneSpec, out: &Output, rows: &mut Rows) -> Result<()> {
    let eps = cfg.eps.ok_or_else(|| LabError::Config("`eps` is required".into()))?;
    let eps0 = cfg.eps0.unwrap_or(0.25);
    let tol = &cfg.tolerances;
    let p = origin(scene);
    for (label, e, e0) in [("base", eps, eps0), ("half_eps", eps / 2.0, eps0), ("half_both", eps / 2.0, eps0 / 2.0)] {
        let gs = build_glued(scene, &p, e0, e)?;
        let rep = verify_glued(&gs, cfg.samples.gluing, cfg.seed)?;
        let mut opts = cfg.thimble.clone();
        opts.base_step = Some(e / 16.0);
        let mesh = build_thimble(scene, &p, e, &opts)?;
        let un = glued_unstable_check(&gs, &mesh, &cfg.plan(), None)?;
        let n = format!("glue.{label}");
        let a = "gluing-construction";
        let branch = rep.branch_inner.max(rep.branch_outer).max(rep.branch_phi);
        rows.push(CheckRow::new(format!("{n}.branch"), a, branch, tol.branch));
        rows.push(CheckRow::new(format!("{n}.dlambda"), a, rep.dlambda_residual, tol.dlambda));
        rows.push(CheckRow::new(format!("{n}.dxi"), a, rep.dxi_residual, tol.dxi));
        rows.push(CheckRow::new(format!("{n}.h_path"), a, rep.path_discrepancy, tol.path));
        rows.push(CheckRow::new(format!("{n}.h_drho"), a, rep.h_drho_max, rep.c_constant / 2.0));
        rows.push(CheckRow::new(format!("{n}.positivity"), a, rep.positivity.failures as f64, 0.0));
        let interp: usize = rep.interpolation.iter().map(|(_, p)| p.failures).sum();
        rows.push(CheckRow::new(format!("{n}.interpolation"), a, interp as f64, 0.0));
        rows.push(CheckRow::new(format!("{n}.unique"), a, un.critical_points.len().abs_diff(1) as f64, 0.0));
        rows.push(CheckRow::new(format!("{n}.locate"), a, un.located, tol.locate));
        rows.push(CheckRow::new(format!("{n}.mesh_tangency"), a, un.tangency_residual, tol.mesh_tangency));
        rows.push(CheckRow::new(format!("{n}.sign"), a, (!un.sign_consistent) as u8 as f64, 0.0));
        #[derive(serde::Serialize)]
        struct Dump<'a> {
            eps: f64,
            eps0: f64,
            calibration: &'a crate::gluing::Calibration,
            delta: f64,
            gl_panels: usize,
            report: &'a crate::gluing::GluedReport,
            unstable: &'a crate::gluing::UnstableReport,
        }
        out.json(
            &format!("glue_{label}.json"),
            &Dump {
                eps: e,
                eps0: e0,
                calibration: &gs.calibration,
                delta: gs.delta,
                gl_panels: gs.gl_panels,
                report: &rep,
                unstable: &un,
            },
        )?;
    }
    Ok(())
}

/// AD/FD agreement, `omega` independence of `eps`, the Liouville equation and
/// metric positivity at random samples.
pub fn kernel(cfg: &RunConfig, scene: &SceneSpec, out: &Output, rows: &mut Rows) -> Result<()> {
    let tol = &cfg.tolerances;
    let tag = scene_tag(scene);
    let pts = kernel_samples(scene, cfg.samples.kernel, cfg.seed, &KERNEL_EPS);
    let rep = kernel_report(scene, &pts, &KERNEL_EPS)?;
    let a = "kernel-invariants";
    rows.push(CheckRow::new(format!("kernel.{tag}.count"), a, cfg.samples.kernel.abs_diff(rep.samples) as f64, 0.0));
    rows.push(CheckRow::new(format!("kernel.{tag}.ad_fd_grad"), a, rep.grad_rel, tol.ad_fd_grad));
    rows.push(CheckRow::new(format!("kernel.{tag}.ad_fd_hess"), a, rep.hess_rel, tol.ad_fd_hess));
    rows.push(CheckRow::new(format!("kernel.{tag}.omega_eps"), a, rep.omega_eps, tol.omega_eps));
    rows.push(CheckRow::new(format!("kernel.{tag}.liouville"), a, rep.liouville, tol.liouville));
    rows.push(CheckRow::new(
        format!("kernel.{tag}.kahler"),
        a,
        if rep.min_metric_eig > 0.0 { 0.0 } else { 1.0 },
        0.0,
    ));
    out.json(&format!("kernel_{tag}.json"), &rep)?;
    Ok(())
}

/// At `eps = 0` the quadric scene has a Morse-Bott circle of nullity 1.
pub fn morse_bott(cfg: &RunConfig, scene: &SceneSpec, out: &Output, rows: &mut Rows) -> Result<()> {
    if !matches!(scene.known_truth.crit_phi0, CritPhi0::Circle) {
        return Err(LabError::Unsupported(format!("{} has no Morse-Bott circle", scene.name)));
    }
    let (recs, _) = find_critical_points(scene, 0.0, &cfg.plan())?;
    let tag = scene_tag(scene);
    let bad = recs
        .iter()
        .filter(|r| r.nullity != 1 || scene.crit_phi0_distance(&r.point) > cfg.tolerances.morse_bott)
        .count();
    let a = "kernel-invariants";
    rows.push(CheckRow::new(format!("kernel.{tag}.morse_bott_found"), a, recs.is_empty() as u8 as f64, 0.0));
    rows.push(CheckRow::new(format!("kernel.{tag}.morse_bott_nullity"), a, bad as f64, 0.0));
    out.json(&format!("morse_bott_{tag}.json"), &recs)?;
    Ok(())
}

/// The plane `{z0 = -conj z1}` through the origin of the local model is
/// invariant under the Liouville flow, with `phi` increasing along it.
pub fn unstable_plane(cfg: &RunConfig, scene: &SceneSpec, out: &Output, rows: &mut Rows) -> Result<()> {
    if !is_local2(scene) {
        return Err(LabError::NotLocalModel(scene.name.clone()));
    }
    let p = origin(scene);
    let jet = eval_jet2(scene, &p, PLANE_EPS)?;
    let rec = classify(&p, PLANE_EPS, &jet, OriginTag::NearStratum)?;
    let opts = PlaneFlowOptions {
        seed: cfg.seed,
        ..Default::default()
    };
    let plane = LinearPlane::conjugate_diagonal(-1.0);
    let rep = unstable_plane_check(scene, &rec, &plane, cfg.samples.plane_trajectories, &opts)?;
    let a = "unstable-plane-example";
    rows.push(CheckRow::new("plane.drift", a, rep.max_drift, cfg.tolerances.plane_drift));
    rows.push(CheckRow::new("plane.monotone", a, (!rep.phi_strictly_increasing) as u8 as f64, 0.0));
    // the flow leaves through the divisor |z0|^2 = eps
    let edge = (2.0 * PLANE_EPS).sqrt();
    let reach = (rep.max_reach - edge).abs() / edge;
    rows.push(CheckRow::new("plane.reach", a, reach, 1e-3));
    out.json("unstable_plane.json", &rep)?;
    Ok(())
}
