//! Multistart Newton for critical points, deduplication across charts,
//! Morse classification, and flow-invariance checks of unstable planes.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::jetcalc::{
    eval_jet2, jacobi_spectrum, phi_value, symplectic_from_jet, ChartPoint, Jet2,
};
use crate::ode::{integrate, Control, OdeOptions};
use crate::scenes::{
    euclid, restricted_potential, SceneSpec, StratumPoint,
};

/// Relative degeneracy threshold for index and nullity.
pub const TAU_DEG: f64 = 1e-5;
/// Newton target and acceptance thresholds on `|dphi|`.
pub const GRAD_TARGET: f64 = 1e-11;
pub const GRAD_ACCEPT: f64 = 1e-8;
/// Merge radius for nondegenerate critical points.
pub const DEDUP_RADIUS: f64 = 1e-6;
/// Representatives of a Morse-Bott family are thinned to this spacing.
pub const MORSE_BOTT_SPACING: f64 = 0.05;
/// Newton steps may not approach the divisor closer than `|s|^2 = 1e-12`.
pub const DIVISOR_GUARD: f64 = 1e-12;

/// A scalar field whose critical points can be searched for.
pub trait CritField {
    /// Real dimension.
    fn dim(&self) -> usize;
    fn n_charts(&self) -> usize;
    fn jet(&self, p: &ChartPoint) -> Result<Jet2>;
    /// Step admissibility (e.g. distance from the divisor).
    fn guard(&self, _p: &ChartPoint) -> bool {
        true
    }
    fn canonical(&self, p: &ChartPoint) -> ChartPoint {
        p.clone()
    }
    fn distance(&self, p: &ChartPoint, q: &ChartPoint) -> f64 {
        if p.chart == q.chart {
            euclid(&p.coords, &q.coords)
        } else {
            f64::INFINITY
        }
    }
    fn in_domain(&self, p: &ChartPoint) -> bool;
    fn box_radius(&self) -> f64;
    /// Re-chart when coordinates grow beyond this modulus.
    fn rechart_above(&self) -> f64 {
        f64::INFINITY
    }
    fn tag(&self, _p: &ChartPoint) -> OriginTag {
        OriginTag::Unresolved
    }
}

/// `phi_eps` of a scene.
pub struct PhiField<'a> {
    pub scene: &'a SceneSpec,
    pub eps: f64,
}

impl CritField for PhiField<'_> {
    fn dim(&self) -> usize {
        self.scene.real_dim()
    }
    fn n_charts(&self) -> usize {
        self.scene.n_charts()
    }
    fn jet(&self, p: &ChartPoint) -> Result<Jet2> {
        eval_jet2(self.scene, p, self.eps)
    }
    fn guard(&self, p: &ChartPoint) -> bool {
        match self.scene.sections_at(p) {
            Ok((s0, h)) => (s0 + h.scale(self.eps)).norm_sqr() >= DIVISOR_GUARD,
            Err(_) => false,
        }
    }
    fn canonical(&self, p: &ChartPoint) -> ChartPoint {
        self.scene.canonical(p)
    }
    fn distance(&self, p: &ChartPoint, q: &ChartPoint) -> f64 {
        self.scene.distance(p, q)
    }
    fn in_domain(&self, p: &ChartPoint) -> bool {
        self.scene.in_domain(p)
    }
    fn box_radius(&self) -> f64 {
        self.scene.box_radius
    }
    fn rechart_above(&self) -> f64 {
        if self.scene.is_projective() {
            1.5
        } else {
            f64::INFINITY
        }
    }
    fn tag(&self, p: &ChartPoint) -> OriginTag {
        let d0 = self.scene.crit_phi0_distance(p);
        let ds = self.scene.stratum_distance(p);
        if d0.min(ds) > 0.5 {
            OriginTag::Unresolved
        } else if d0 < ds {
            OriginTag::NearCritPhi0
        } else {
            OriginTag::NearStratum
        }
    }
}

/// `phi_eps` restricted to `S`; the chart id of a point is the index of the
/// stratum chart and its coordinates are the intrinsic ones.
pub struct RestrictedField<'a> {
    pub scene: &'a SceneSpec,
    pub eps: f64,
}

impl RestrictedField<'_> {
    pub fn stratum_point(&self, p: &ChartPoint) -> Result<StratumPoint> {
        let full = self.scene.stratum_embed(p.chart, &p.coords);
        self.scene.stratum_point(p.chart, full)
    }

    /// The intrinsic point of a full-space point lying on `S`.
    pub fn from_full(&self, p: &ChartPoint) -> Option<ChartPoint> {
        let (sc, q) = self.scene.to_stratum_chart(p)?;
        let c = &self.scene.stratum_charts()[sc];
        let coords = c
            .free
            .iter()
            .flat_map(|&f| [q.coords[2 * f], q.coords[2 * f + 1]])
            .collect();
        Some(ChartPoint::new(sc, coords))
    }

    pub fn to_full(&self, p: &ChartPoint) -> ChartPoint {
        self.scene.stratum_embed(p.chart, &p.coords)
    }
}

impl CritField for RestrictedField<'_> {
    fn dim(&self) -> usize {
        2 * self.scene.stratum_charts()[0].free.len()
    }
    fn n_charts(&self) -> usize {
        self.scene.stratum_charts().len()
    }
    fn jet(&self, p: &ChartPoint) -> Result<Jet2> {
        if p.chart >= self.n_charts() || p.coords.len() != self.dim() {
            return Err(LabError::BadChart("bad stratum point".into()));
        }
        let full = self.to_full(p);
        let sp = StratumPoint {
            point: full,
            stratum_chart: p.chart,
            tangent_basis: vec![],
            normal_basis: vec![],
        };
        restricted_potential(self.scene, &sp, self.eps)
    }
    fn guard(&self, p: &ChartPoint) -> bool {
        PhiField {
            scene: self.scene,
            eps: self.eps,
        }
        .guard(&self.to_full(p))
    }
    fn canonical(&self, p: &ChartPoint) -> ChartPoint {
        self.from_full(&self.to_full(p)).unwrap_or_else(|| p.clone())
    }
    fn distance(&self, p: &ChartPoint, q: &ChartPoint) -> f64 {
        self.scene.distance(&self.to_full(p), &self.to_full(q))
    }
    fn in_domain(&self, p: &ChartPoint) -> bool {
        self.scene.in_domain(&self.to_full(p))
    }
    fn box_radius(&self) -> f64 {
        self.scene.box_radius
    }
    fn rechart_above(&self) -> f64 {
        if self.scene.is_projective() {
            1.5
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OriginTag {
    NearCritPhi0,
    NearStratum,
    Unresolved,
}

#[derive(Clone, Debug, Serialize)]
pub struct CritRecord {
    pub point: ChartPoint,
    pub eps: f64,
    pub value: f64,
    pub grad_norm: f64,
    pub spectrum: Vec<f64>,
    pub index: usize,
    pub nullity: usize,
    pub positive: usize,
    pub morse_bott: bool,
    /// Orthonormal basis of the numerically degenerate eigenspace.
    pub kernel_basis: Vec<Vec<f64>>,
    /// Index unchanged when the degeneracy threshold is scaled by 10 and 1/10.
    pub index_stable: bool,
    pub origin_tag: OriginTag,
}

fn counts(values: &[f64], tau: f64) -> (usize, usize) {
    let (neg, null, _) = crate::jetcalc::morse_counts(values, tau);
    (neg, null)
}

/// Classifies a converged point from its jet.
pub fn classify(point: &ChartPoint, eps: f64, jet: &Jet2, tag: OriginTag) -> Result<CritRecord> {
    let (values, vectors) = if jet.dim() == 0 {
        (vec![], DMatrix::zeros(0, 0))
    } else {
        let spec = jacobi_spectrum(&jet.hess)?;
        (spec.values, spec.vectors)
    };
    let (index, nullity) = counts(&values, TAU_DEG);
    let stable = counts(&values, TAU_DEG * 10.0).0 == index && counts(&values, TAU_DEG / 10.0).0 == index;
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let kernel_basis = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= TAU_DEG * scale)
        .map(|(k, _)| vectors.column(k).iter().copied().collect())
        .collect();
    Ok(CritRecord {
        point: point.clone(),
        eps,
        value: jet.value,
        grad_norm: jet.grad.norm(),
        positive: values.len() - index - nullity,
        spectrum: values,
        index,
        nullity,
        morse_bott: nullity > 0,
        kernel_basis,
        index_stable: stable || nullity > 0,
        origin_tag: tag,
    })
}

/// Damped Newton on `dphi`.
///
/// The step is the spectral pseudo-inverse `-H^+ g`, halved until `|g|`
/// decreases and the field's guard accepts the trial point; if that fails
/// the search falls back to gradient descent on `|g|^2 / 2`.
pub fn newton<F: CritField + ?Sized>(field: &F, start: &ChartPoint, max_iter: usize) -> Result<(ChartPoint, Jet2)> {
    let mut p = start.clone();
    let mut jet = field.jet(&p)?;
    let mut gn = jet.grad.norm();
    for _ in 0..max_iter {
        if gn < GRAD_TARGET {
            break;
        }
        let spec = jacobi_spectrum(&jet.hess)?;
        let scale = spec.max_abs();
        let mut step = DVector::zeros(jet.dim());
        for (k, lam) in spec.values.iter().enumerate() {
            if lam.abs() > 1e-12 * scale {
                let v = spec.vectors.column(k);
                step -= v * (v.dot(&jet.grad) / lam);
            }
        }
        let descent = -(&jet.hess * &jet.grad);
        let hd = &jet.hess * &descent;
        let cauchy = descent.norm_squared() / hd.norm_squared().max(1e-300);
        let max_len = field.box_radius().max(0.5);
        let mut moved = false;
        'dirs: for (kind, dir) in [step, descent].into_iter().enumerate() {
            let dn = dir.norm();
            if !(dn > 0.0) || !dn.is_finite() {
                continue;
            }
            let mut alpha = if kind == 0 { 1.0 } else { cauchy };
            alpha = alpha.min(max_len / dn);
            for _ in 0..40 {
                let trial = p.offset(dir.as_slice(), alpha);
                if field.guard(&trial) {
                    if let Ok(tj) = field.jet(&trial) {
                        let tn = tj.grad.norm();
                        if tn < gn {
                            p = trial;
                            jet = tj;
                            gn = tn;
                            moved = true;
                            break 'dirs;
                        }
                    }
                }
                alpha *= 0.5;
            }
        }
        if !moved {
            break;
        }
        if p.coords.iter().any(|c| c.abs() > field.rechart_above()) {
            let q = field.canonical(&p);
            if q.chart != p.chart {
                p = q;
                jet = field.jet(&p)?;
                gn = jet.grad.norm();
            }
        }
        if p.coords.iter().any(|c| c.abs() > 1e6) {
            return Err(LabError::TrackLost(gn));
        }
    }
    Ok((p, jet))
}

/// Deterministic seed plan.
#[derive(Clone, Debug, Serialize)]
pub struct SeedPlan {
    /// Points per axis of the grid.
    pub grid_points: usize,
    /// Number of leading real coordinates spanned by the grid.
    pub grid_dims: usize,
    /// Uniform random seeds, spread round-robin over the charts.
    pub random: usize,
    pub seed: u64,
    /// Overrides the field's box radius.
    pub box_radius: Option<f64>,
}

impl Default for SeedPlan {
    fn default() -> Self {
        SeedPlan {
            grid_points: 5,
            grid_dims: 6,
            random: 200,
            seed: 0,
            box_radius: None,
        }
    }
}

impl SeedPlan {
    pub fn with_seed(seed: u64) -> Self {
        SeedPlan {
            seed,
            ..Default::default()
        }
    }

    pub fn seeds<F: CritField + ?Sized>(&self, field: &F) -> Vec<ChartPoint> {
        let dim = field.dim();
        let r = self.box_radius.unwrap_or_else(|| field.box_radius());
        let d = self.grid_dims.min(dim);
        let m = self.grid_points.max(1);
        let axis: Vec<f64> = if m == 1 {
            vec![0.0]
        } else {
            (0..m).map(|k| -r + 2.0 * r * k as f64 / (m - 1) as f64).collect()
        };
        let mut out = Vec::new();
        for chart in 0..field.n_charts() {
            let total = m.pow(d as u32);
            for idx in 0..total {
                let mut coords = vec![0.0; dim];
                let mut k = idx;
                for c in coords.iter_mut().take(d) {
                    *c = axis[k % m];
                    k /= m;
                }
                let p = ChartPoint::new(chart, coords);
                if field.in_domain(&p) && field.canonical(&p).chart == chart {
                    out.push(p);
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for k in 0..self.random {
            let chart = k % field.n_charts();
            let coords = (0..dim).map(|_| rng.gen_range(-r..r)).collect();
            out.push(ChartPoint::new(chart, coords));
        }
        out
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FindStats {
    pub seeds: usize,
    pub converged: usize,
    pub dropped: usize,
    pub outside: usize,
}

/// Finds, deduplicates and classifies the critical points of a field.
pub fn find_critical_points_in<F: CritField + ?Sized>(
    field: &F,
    eps: f64,
    plan: &SeedPlan,
) -> Result<(Vec<CritRecord>, FindStats)> {
    let mut stats = FindStats::default();
    if field.dim() == 0 {
        let p = ChartPoint::new(0, vec![]);
        let jet = field.jet(&p)?;
        stats.seeds = 1;
        stats.converged = 1;
        return Ok((vec![classify(&p, eps, &jet, field.tag(&p))?], stats));
    }
    let seeds = plan.seeds(field);
    stats.seeds = seeds.len();
    let mut hits: Vec<CritRecord> = Vec::new();
    for s in &seeds {
        if !field.guard(s) {
            stats.dropped += 1;
            continue;
        }
        match newton(field, s, 80) {
            Ok((p, jet)) if jet.grad.norm() < GRAD_ACCEPT => {
                let c = field.canonical(&p);
                if !field.in_domain(&c) {
                    stats.outside += 1;
                    continue;
                }
                let jet = if c.chart != p.chart { field.jet(&c)? } else { jet };
                stats.converged += 1;
                hits.push(classify(&c, eps, &jet, field.tag(&c))?);
            }
            _ => stats.dropped += 1,
        }
    }
    hits.sort_by(|a, b| {
        a.point
            .chart
            .cmp(&b.point.chart)
            .then_with(|| cmp_coords(&a.point.coords, &b.point.coords))
    });
    let mut kept: Vec<CritRecord> = Vec::new();
    for h in hits {
        let dup = kept.iter().any(|k| {
            let r = if k.morse_bott && h.morse_bott {
                MORSE_BOTT_SPACING
            } else {
                DEDUP_RADIUS
            };
            field.distance(&k.point, &h.point) < r
        });
        if !dup {
            kept.push(h);
        }
    }
    // polish and re-verify each representative independently
    let mut out = Vec::with_capacity(kept.len());
    for k in kept {
        let (p, _) = newton(field, &k.point, 20)?;
        let p = field.canonical(&p);
        let jet = field.jet(&p)?;
        if jet.grad.norm() < GRAD_ACCEPT {
            out.push(classify(&p, eps, &jet, field.tag(&p))?);
        }
    }
    Ok((out, stats))
}

fn cmp_coords(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.total_cmp(y);
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

/// Critical points of `phi_eps` in the scene's domain.
pub fn find_critical_points(scene: &SceneSpec, eps: f64, plan: &SeedPlan) -> Result<(Vec<CritRecord>, FindStats)> {
    find_critical_points_in(&PhiField { scene, eps }, eps, plan)
}

/// Critical points of `phi_eps` restricted to `S`, in intrinsic coordinates.
pub fn find_stratum_critical_points(
    scene: &SceneSpec,
    eps: f64,
    plan: &SeedPlan,
) -> Result<(Vec<CritRecord>, FindStats)> {
    find_critical_points_in(&RestrictedField { scene, eps }, eps, plan)
}

/// An affine subspace of a chart through a base point, given by linear
/// equations `A (x - base) = 0`.
#[derive(Clone, Debug)]
pub struct LinearPlane {
    pub equations: DMatrix<f64>,
}

impl LinearPlane {
    pub fn new(equations: DMatrix<f64>) -> Self {
        LinearPlane { equations }
    }

    /// `{z0 = sign * conj(z1)}` in a 2-dimensional chart.
    pub fn conjugate_diagonal(sign: f64) -> Self {
        // x0 - sign x1 = 0, y0 + sign y1 = 0
        LinearPlane::new(DMatrix::from_row_slice(
            2,
            4,
            &[1.0, 0.0, -sign, 0.0, 0.0, 1.0, 0.0, sign],
        ))
    }

    /// Orthonormal basis of the plane's direction space.
    pub fn basis(&self) -> Vec<DVector<f64>> {
        let a = &self.equations;
        let n = a.ncols();
        let svd = a.transpose().svd(true, false);
        let u = svd.u.unwrap();
        let rank = svd.singular_values.iter().filter(|s| **s > 1e-12).count();
        // complete the column space of A^T to an orthonormal basis
        let mut basis: Vec<DVector<f64>> = (0..rank).map(|k| u.column(k).into_owned()).collect();
        let mut dirs = Vec::new();
        for e in 0..n {
            let mut v = DVector::zeros(n);
            v[e] = 1.0;
            for b in &basis {
                v -= b * b.dot(&v);
            }
            let nv = v.norm();
            if nv > 1e-8 {
                v /= nv;
                basis.push(v.clone());
                dirs.push(v);
            }
        }
        dirs
    }

    /// Distance of `x - base` from the plane.
    pub fn drift(&self, base: &[f64], x: &[f64]) -> f64 {
        let d = DVector::from_iterator(x.len(), x.iter().zip(base).map(|(a, b)| a - b));
        let mut r: f64 = 0.0;
        for row in self.equations.row_iter() {
            r = r.max((row * &d)[0].abs() / row.norm());
        }
        r
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PlaneReport {
    pub trajectories: usize,
    pub max_drift: f64,
    /// Most negative one-step change of `phi` along any trajectory.
    pub min_phi_increment: f64,
    pub phi_strictly_increasing: bool,
    pub escaped: usize,
    /// Largest chart distance from the critical point reached.
    pub max_reach: f64,
    pub steps: usize,
}

/// Options for [`unstable_plane_check`].
#[derive(Clone, Debug)]
pub struct PlaneFlowOptions {
    pub seed_offset: f64,
    /// Stop a trajectory when its distance from the critical point reaches this.
    pub stop_radius: f64,
    pub t_max: f64,
    pub rtol: f64,
    pub seed: u64,
}

impl Default for PlaneFlowOptions {
    fn default() -> Self {
        PlaneFlowOptions {
            seed_offset: 1e-3,
            stop_radius: 0.9 * std::f64::consts::SQRT_2,
            t_max: 1e5,
            rtol: 1e-9,
            seed: 0,
        }
    }
}

/// Liouville vector field `Z_eps` at `x`.
pub fn liouville_at(scene: &SceneSpec, chart: usize, x: &[f64], eps: f64) -> Result<Vec<f64>> {
    let p = ChartPoint::new(chart, x.to_vec());
    let jet = eval_jet2(scene, &p, eps)?;
    if jet.grad.iter().all(|g| *g == 0.0) {
        return Ok(vec![0.0; x.len()]);
    }
    Ok(symplectic_from_jet(scene, &p, &jet)?.liouville.as_slice().to_vec())
}

/// Flows `n_flow` points seeded on `plane` near `rec` along `Z_eps`, and
/// records their drift off the plane and the monotonicity of `phi_eps`.
pub fn unstable_plane_check(
    scene: &SceneSpec,
    rec: &CritRecord,
    plane: &LinearPlane,
    n_flow: usize,
    opts: &PlaneFlowOptions,
) -> Result<PlaneReport> {
    let base = rec.point.coords.clone();
    let chart = rec.point.chart;
    let eps = rec.eps;
    let dirs = plane.basis();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = PlaneReport {
        trajectories: 0,
        max_drift: 0.0,
        min_phi_increment: f64::INFINITY,
        phi_strictly_increasing: true,
        escaped: 0,
        max_reach: 0.0,
        steps: 0,
    };
    let ode = OdeOptions {
        rtol: opts.rtol,
        atol: 1e-14,
        h_init: 1e-2,
        max_steps: 2_000_000,
        ..Default::default()
    };
    for k in 0..n_flow {
        let mut v = DVector::zeros(base.len());
        if dirs.len() == 2 {
            let th = std::f64::consts::TAU * k as f64 / n_flow as f64;
            v += &dirs[0] * th.cos() + &dirs[1] * th.sin();
        } else {
            for d in &dirs {
                v += d * rng.gen_range(-1.0..1.0);
            }
        }
        let nv = v.norm();
        if nv == 0.0 {
            continue;
        }
        let y0: Vec<f64> = base.iter().zip(v.iter()).map(|(b, d)| b + opts.seed_offset * d / nv).collect();
        let mut last_phi = phi_value(scene, &ChartPoint::new(chart, y0.clone()), eps)?;
        let mut escaped = false;
        let mut drift: f64 = plane.drift(&base, &y0);
        let mut reach: f64 = 0.0;
        let mut min_inc = f64::INFINITY;
        let res = integrate(
            |_, y| liouville_at(scene, chart, y, eps),
            0.0,
            &y0,
            opts.t_max,
            &ode,
            |_, y| {
                let p = ChartPoint::new(chart, y.clone());
                let (s0, h) = scene.sections_at(&p)?;
                if (s0 + h.scale(eps)).norm_sqr() < DIVISOR_GUARD {
                    escaped = true;
                    return Ok(Control::Stop);
                }
                let phi = phi_value(scene, &p, eps)?;
                min_inc = min_inc.min(phi - last_phi);
                last_phi = phi;
                drift = drift.max(plane.drift(&base, y));
                let r = euclid(&base, y);
                reach = reach.max(r);
                Ok(if r >= opts.stop_radius { Control::Stop } else { Control::Continue })
            },
        );
        match res {
            Ok(o) => report.steps += o.steps,
            Err(LabError::OnDivisor(_)) => escaped = true,
            Err(e) => return Err(e),
        }
        report.trajectories += 1;
        report.max_drift = report.max_drift.max(drift);
        report.min_phi_increment = report.min_phi_increment.min(min_inc);
        if !(min_inc > 0.0) {
            report.phi_strictly_increasing = false;
        }
        report.max_reach = report.max_reach.max(reach);
        if escaped {
            report.escaped += 1;
        }
    }
    Ok(report)
}
