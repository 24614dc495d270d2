//! The fibration `pi = s0 / h`, its symplectic connection, parallel
//! transport over a real base segment, thimble meshes and the alignment of
//! the Lefschetz Liouville field with the connection.

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::jetcalc::{
    complexify, j_apply, jacobi_spectrum, omega_dual, omega_from_hess, ChartPoint, Dual2, Jet2, C64,
};
use crate::ode::{integrate, Control, OdeOptions};
use crate::scenes::SceneSpec;

/// `|dpi|` below this counts as a rank drop.
pub const RANK_FLOOR: f64 = 1e-10;
/// Fiber residual allowed after each re-projection.
pub const FIBER_TOL: f64 = 1e-9;
/// `|h|` below this is treated as the polar locus of `pi`.
pub const POLE_FLOOR: f64 = 1e-8;

/// Real and imaginary 2-jets of `pi` in the chart of `p`.
pub fn pi_jet(scene: &SceneSpec, p: &ChartPoint) -> Result<(Jet2, Jet2)> {
    scene.check_point(p)?;
    let z = complexify(&Dual2::vars(&p.coords));
    let (s0, h) = scene.sections(p.chart, &z);
    if h.value().abs() <= POLE_FLOOR {
        return Err(LabError::SingularFiber(h.value().abs()));
    }
    let pi = s0 / h;
    Ok((Jet2::from_dual(&pi.re, p.dim()), Jet2::from_dual(&pi.im, p.dim())))
}

/// Value of `pi` and its holomorphic gradient `dpi/dz_j`.
pub fn pi_grad(scene: &SceneSpec, p: &ChartPoint) -> Result<(C64, Vec<C64>)> {
    let (s0, ds) = scene.holo_grad(p, 0)?;
    let (h, dh) = scene.holo_grad(p, 1)?;
    if h.abs() <= POLE_FLOOR {
        return Err(LabError::SingularFiber(h.abs()));
    }
    let h2 = h * h;
    let c = ds.iter().zip(&dh).map(|(a, b)| (h * *a - s0 * *b) / h2).collect();
    Ok((s0 / h, c))
}

/// Real gradients of `Re pi` and `Im pi` from the holomorphic gradient.
fn real_differentials(c: &[C64]) -> (DVector<f64>, DVector<f64>) {
    let n = c.len();
    let a1 = DVector::from_fn(2 * n, |k, _| if k % 2 == 0 { c[k / 2].re } else { -c[k / 2].im });
    let a2 = DVector::from_fn(2 * n, |k, _| if k % 2 == 0 { c[k / 2].im } else { c[k / 2].re });
    (a1, a2)
}

/// `omega` at `p`. Since `log|s|^2` is pluriharmonic off the divisor the
/// form only depends on the weight, which is what is differentiated here.
pub fn omega_at(scene: &SceneSpec, p: &ChartPoint) -> Result<DMatrix<f64>> {
    scene.check_point(p)?;
    let z = complexify(&Dual2::vars(&p.coords));
    let w = scene.weight(p.chart, &z);
    let jet = Jet2::from_dual(&w, p.dim());
    Ok(omega_from_hess(&jet.hess, scene.dc_sign))
}

/// The connection at one point: a basis `w1, w2` of the horizontal space
/// with `dpi(w1) = 1`, `dpi(w2) = i`.
#[derive(Clone, Debug)]
pub struct Connection {
    pub pi: C64,
    pub dpi: Vec<C64>,
    pub omega: DMatrix<f64>,
    pub w: [DVector<f64>; 2],
    a: [DVector<f64>; 2],
}

impl Connection {
    pub fn at(scene: &SceneSpec, p: &ChartPoint) -> Result<Self> {
        let (pi, c) = pi_grad(scene, p)?;
        let cn = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if !(cn > RANK_FLOOR) {
            return Err(LabError::SingularFiber(cn));
        }
        let omega = omega_at(scene, p)?;
        let (a1, a2) = real_differentials(&c);
        // omega(w, b) = 0 for all b in ker dpi  <=>  i_w omega in span(a1, a2)
        let u1 = omega_dual(&omega, &a1)?;
        let u2 = omega_dual(&omega, &a2)?;
        let m = Matrix2::new(a1.dot(&u1), a1.dot(&u2), a2.dot(&u1), a2.dot(&u2));
        let inv = m.try_inverse().ok_or(LabError::SingularFiber(m.determinant().abs()))?;
        let w1 = &u1 * inv[(0, 0)] + &u2 * inv[(1, 0)];
        let w2 = &u1 * inv[(0, 1)] + &u2 * inv[(1, 1)];
        Ok(Connection {
            pi,
            dpi: c,
            omega,
            w: [w1, w2],
            a: [a1, a2],
        })
    }

    /// `dpi(v)` as a complex number.
    pub fn dpi_of(&self, v: &DVector<f64>) -> C64 {
        C64::new(self.a[0].dot(v), self.a[1].dot(v))
    }

    /// Horizontal component of `v` (the splitting is along `ker dpi`).
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let d = self.dpi_of(v);
        &self.w[0] * d.re + &self.w[1] * d.im
    }

    /// The horizontal lift of the complex base vector `b`.
    pub fn lift(&self, b: C64) -> DVector<f64> {
        &self.w[0] * b.re + &self.w[1] * b.im
    }

    /// Largest `|omega(w, k)|` over horizontal `w` and a basis `k` of `ker dpi`.
    pub fn orthogonality_residual(&self, w: &DVector<f64>) -> f64 {
        fiber_basis(&self.a)
            .iter()
            .map(|k| (w.transpose() * &self.omega * k)[0].abs())
            .fold(0.0, f64::max)
    }
}

/// Euclidean orthonormal basis of `ker dpi`.
fn fiber_basis(a: &[DVector<f64>; 2]) -> Vec<DVector<f64>> {
    let n = a[0].len();
    let mut basis: Vec<DVector<f64>> = vec![];
    let mut constraints: Vec<DVector<f64>> = vec![];
    for v in a {
        let mut v = v.clone();
        for c in &constraints {
            v -= c * c.dot(&v);
        }
        let nv = v.norm();
        if nv > 1e-300 {
            constraints.push(v / nv);
        }
    }
    for k in 0..n {
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        for c in constraints.iter().chain(&basis) {
            e -= c * c.dot(&e);
        }
        let ne = e.norm();
        if ne > 1e-8 {
            basis.push(e / ne);
        }
    }
    basis
}

/// Horizontal component of `v` at `p`.
pub fn horizontal_project(scene: &SceneSpec, p: &ChartPoint, v: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(Connection::at(scene, p)?.project(v))
}

#[derive(Clone, Debug, Serialize)]
pub struct TransportState {
    pub point: ChartPoint,
    pub t: f64,
    pub fiber_residual: f64,
}

/// One complex Newton correction of `y` towards the fiber `pi = t`, along
/// the conjugate gradient direction.
fn fiber_newton(scene: &SceneSpec, chart: usize, y: &mut [f64], t: C64) -> Result<f64> {
    let p = ChartPoint::new(chart, y.to_vec());
    let (pi, c) = pi_grad(scene, &p)?;
    let cn: f64 = c.iter().map(|v| v.norm_sqr()).sum();
    if !(cn > RANK_FLOOR * RANK_FLOOR) {
        return Err(LabError::SingularFiber(cn.sqrt()));
    }
    let r = pi - t;
    for (j, cj) in c.iter().enumerate() {
        let d = (r * cj.conj()).scale(-1.0 / cn);
        y[2 * j] += d.re;
        y[2 * j + 1] += d.im;
    }
    let (pi2, _) = pi_grad(scene, &ChartPoint::new(chart, y.to_vec()))?;
    Ok((pi2 - t).abs())
}

/// Projects `p` onto the fiber `pi = t` by repeated Newton corrections.
pub fn project_to_fiber(scene: &SceneSpec, p: &ChartPoint, t: C64, max_iter: usize) -> Result<TransportState> {
    let mut y = p.coords.clone();
    let mut res = (pi_grad(scene, p)?.0 - t).abs();
    for _ in 0..max_iter {
        if res < 1e-14 * (1.0 + t.abs()) {
            break;
        }
        res = fiber_newton(scene, p.chart, &mut y, t)?;
    }
    if !(res < FIBER_TOL) {
        return Err(LabError::FiberLost(res));
    }
    Ok(TransportState {
        point: ChartPoint::new(p.chart, y),
        t: t.re,
        fiber_residual: res,
    })
}

/// The parallel-transport vector field over the real base path `gamma(t) = t`.
fn lift_field(scene: &SceneSpec, chart: usize, y: &[f64]) -> Result<Vec<f64>> {
    let p = ChartPoint::new(chart, y.to_vec());
    let conn = Connection::at(scene, &p)?;
    Ok(conn.lift(C64::new(1.0, 0.0)).iter().copied().collect())
}

/// Transports `start` along the horizontal lift of `d/dt` to `t_target`.
///
/// Both endpoints must lie on the same side of 0 with `|t| <= eps`; after
/// every accepted step one Newton correction moves the state back onto its
/// fiber.
pub fn transport(scene: &SceneSpec, start: &TransportState, t_target: f64, eps: f64) -> Result<TransportState> {
    let (t0, t1) = (start.t, t_target);
    if t0 == 0.0 || t1 == 0.0 || t0.signum() != t1.signum() {
        return Err(LabError::BadParams("transport segment must avoid pi = 0".into()));
    }
    if t0.abs() > eps * (1.0 + 1e-12) || t1.abs() > eps * (1.0 + 1e-12) {
        return Err(LabError::BadParams(format!("transport segment leaves |t| <= {eps}")));
    }
    if t0 == t1 {
        return Ok(start.clone());
    }
    let chart = start.point.chart;
    let opts = OdeOptions {
        h_init: (t1 - t0).abs() * 1e-2,
        ..Default::default()
    };
    let mut resid = start.fiber_residual;
    let out = integrate(
        |_, y| lift_field(scene, chart, y),
        t0,
        &start.point.coords,
        t1,
        &opts,
        |t, y| {
            let r = fiber_newton(scene, chart, y, C64::new(t, 0.0))?;
            if !(r < FIBER_TOL) {
                return Err(LabError::FiberLost(r));
            }
            let h = scene.sections_at(&ChartPoint::new(chart, y.clone()))?.1;
            if h.abs() <= POLE_FLOOR {
                return Err(LabError::SingularFiber(h.abs()));
            }
            resid = r;
            Ok(Control::Continue)
        },
    )?;
    Ok(TransportState {
        point: ChartPoint::new(chart, out.y),
        t: out.t,
        fiber_residual: resid,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ThimbleOptions {
    /// Seeds per circle of the transverse grid.
    pub angular: usize,
    /// Radial steps of the ball grid along each free real direction of `S`
    /// (0: seed only above the critical point).
    pub ball: usize,
    pub ball_radius: f64,
    /// Spacing of the base grid; defaults to `eps / 8`.
    pub base_step: Option<f64>,
    /// Seed fiber `t0 = t0_factor * eps`.
    pub t0_factor: f64,
    /// `+1`: base segment `(0, eps]`, `-1`: `[-eps, 0)`.
    pub segment_sign: f64,
}

impl Default for ThimbleOptions {
    fn default() -> Self {
        ThimbleOptions {
            angular: 16,
            ball: 0,
            ball_radius: 0.05,
            base_step: None,
            t0_factor: 1e-3,
            segment_sign: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshCell {
    pub base: usize,
    pub transverse: usize,
    pub residual: f64,
    pub omega_scale: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThimbleMesh {
    /// Signed base values, starting with the seed fiber.
    pub base_grid: Vec<f64>,
    /// `(center index, angle)` per transverse line.
    pub transverse_grid: Vec<(usize, f64)>,
    /// `points[b][j]`, `None` where the line failed.
    pub points: Vec<Vec<Option<ChartPoint>>>,
    pub cells: Vec<MeshCell>,
    pub failed_lines: Vec<(usize, String)>,
}

impl ThimbleMesh {
    pub fn max_relative_lagrangian(&self) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.omega_scale > 0.0)
            .map(|c| c.residual / c.omega_scale)
            .fold(0.0, f64::max)
    }

    pub fn all_points(&self) -> impl Iterator<Item = (f64, &ChartPoint)> {
        self.base_grid
            .iter()
            .zip(&self.points)
            .flat_map(|(t, row)| row.iter().flatten().map(move |p| (*t, p)))
    }
}

/// Base values `t0, s, 2s, ..., eps` (times the segment sign).
pub fn base_grid(eps: f64, opts: &ThimbleOptions) -> Vec<f64> {
    let t0 = opts.t0_factor * eps;
    let step = opts.base_step.unwrap_or(eps / 8.0);
    let mut g = vec![t0];
    let mut k = 1;
    while (k as f64) * step < eps * (1.0 - 1e-12) {
        let t = k as f64 * step;
        if t > t0 {
            g.push(t);
        }
        k += 1;
    }
    g.push(eps);
    g.into_iter().map(|t| t * opts.segment_sign).collect()
}

/// `sign * Re pi` Hessian eigenpairs with positive eigenvalue at `q`.
pub fn rising_plane(scene: &SceneSpec, q: &ChartPoint, sign: f64) -> Result<Vec<(f64, DVector<f64>)>> {
    let (re, _) = pi_jet(scene, q)?;
    let spec = jacobi_spectrum(&(re.hess * sign))?;
    let top = spec.max_abs();
    Ok((0..spec.values.len())
        .filter(|&k| spec.values[k] > 1e-8 * top)
        .map(|k| (spec.values[k], DVector::from_vec(spec.vector(k))))
        .collect())
}

/// Seeds on the fiber `pi = t0` above the stratum point `p` (and, with a
/// ball grid, above nearby points of `S`), displaced along the rising plane
/// of `Re pi` so that the quadratic approximation hits `t0`.
pub fn thimble_seeds(
    scene: &SceneSpec,
    p: &ChartPoint,
    eps: f64,
    opts: &ThimbleOptions,
) -> Result<(Vec<(usize, f64)>, Vec<Result<TransportState>>)> {
    let t0 = opts.t0_factor * eps;
    let mut centers = vec![p.clone()];
    if opts.ball > 0 {
        if let Some((sc, q)) = scene.to_stratum_chart(p) {
            let free = scene.stratum_charts()[sc].free.clone();
            for &c in &free {
                for part in 0..2 {
                    for k in 1..=opts.ball {
                        for s in [-1.0, 1.0] {
                            let mut x = q.coords.clone();
                            x[2 * c + part] += s * opts.ball_radius * k as f64 / opts.ball as f64;
                            centers.push(ChartPoint::new(q.chart, x));
                        }
                    }
                }
            }
        }
    }
    let m = opts.angular.max(1);
    let mut grid = vec![];
    let mut seeds = vec![];
    for (ci, c) in centers.iter().enumerate() {
        let plane = rising_plane(scene, c, opts.segment_sign)?;
        if plane.len() != 2 {
            return Err(LabError::SingularFiber(plane.len() as f64));
        }
        for j in 0..m {
            let th = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            let (l1, e1) = &plane[0];
            let (l2, e2) = &plane[1];
            let d = (e1 * (th.cos() / l1.sqrt()) + e2 * (th.sin() / l2.sqrt())) * (2.0 * t0).sqrt();
            let x = c.offset(d.as_slice(), 1.0);
            grid.push((ci, th));
            seeds.push(project_to_fiber(scene, &x, C64::new(opts.segment_sign * t0, 0.0), 30));
        }
    }
    Ok((grid, seeds))
}

/// Transports the seeds above `p` through the base grid and assembles the
/// mesh with per-cell Lagrangian residuals.
pub fn build_thimble(scene: &SceneSpec, p: &ChartPoint, eps: f64, opts: &ThimbleOptions) -> Result<ThimbleMesh> {
    let base = base_grid(eps, opts);
    let (grid, seeds) = thimble_seeds(scene, p, eps, opts)?;
    let nt = grid.len();
    let mut points = vec![vec![None; nt]; base.len()];
    let mut failed = vec![];
    for (j, seed) in seeds.into_iter().enumerate() {
        let mut state = match seed {
            Ok(s) => s,
            Err(e) => {
                failed.push((j, e.to_string()));
                continue;
            }
        };
        points[0][j] = Some(state.point.clone());
        for (b, &t) in base.iter().enumerate().skip(1) {
            match transport(scene, &state, t, eps) {
                Ok(s) => {
                    state = s;
                    points[b][j] = Some(state.point.clone());
                }
                Err(e) => {
                    failed.push((j, e.to_string()));
                    break;
                }
            }
        }
    }
    let m = opts.angular.max(1);
    let mut cells = vec![];
    for b in 0..base.len().saturating_sub(1) {
        for j in 0..nt {
            let jn = if (j + 1) % m == 0 {
                if m < 3 {
                    continue;
                }
                j + 1 - m
            } else {
                j + 1
            };
            let (Some(p00), Some(p10), Some(p01)) = (&points[b][j], &points[b + 1][j], &points[b][jn]) else {
                continue;
            };
            let tu = DVector::from_iterator(p00.dim(), p10.coords.iter().zip(&p00.coords).map(|(a, b)| a - b));
            let tv = DVector::from_iterator(p00.dim(), p01.coords.iter().zip(&p00.coords).map(|(a, b)| a - b));
            let mid = ChartPoint::new(p00.chart, p00.coords.iter().zip(&p10.coords).zip(&p01.coords).map(|((a, b), c)| (a + b + c) / 3.0).collect());
            let om = omega_at(scene, &mid)?;
            cells.push(MeshCell {
                base: b,
                transverse: j,
                residual: (tu.transpose() * &om * &tv)[0].abs(),
                omega_scale: om.norm() * tu.norm() * tv.norm(),
            });
        }
    }
    Ok(ThimbleMesh {
        base_grid: base,
        transverse_grid: grid,
        points,
        cells,
        failed_lines: failed,
    })
}

/// Largest distance between the two meshes on shared base values (the seed
/// fibers excluded) and matching transverse lines.
pub fn mesh_nesting(small: &ThimbleMesh, large: &ThimbleMesh) -> Option<f64> {
    if small.transverse_grid != large.transverse_grid {
        return None;
    }
    let mut worst: Option<f64> = None;
    for (bs, ts) in small.base_grid.iter().enumerate().skip(1) {
        let Some(bl) = large.base_grid.iter().skip(1).position(|t| (t - ts).abs() <= 1e-12 * ts.abs()).map(|k| k + 1) else {
            continue;
        };
        for (a, b) in small.points[bs].iter().zip(&large.points[bl]) {
            if let (Some(a), Some(b)) = (a, b) {
                let d = crate::scenes::euclid(&a.coords, &b.coords);
                worst = Some(worst.map_or(d, |w: f64| w.max(d)));
            }
        }
    }
    worst
}

/// Largest deviation of a local-model mesh from `{z1 = conj z0, |z0|^2 = t, z_j = 0}`.
pub fn local_thimble_deviation(mesh: &ThimbleMesh) -> f64 {
    let mut worst: f64 = 0.0;
    for (t, p) in mesh.all_points() {
        let z = p.complex();
        worst = worst
            .max((z[1] - z[0].conj()).abs())
            .max((z[0].norm_sqr() - t.abs()).abs());
        for w in &z[2..] {
            worst = worst.max(w.abs());
        }
    }
    worst
}

/// Relative change of the omega-area of a small fiber 2-cell at `start`
/// under transport to `t_target`, by central differences of size `delta`.
pub fn area_drift(scene: &SceneSpec, start: &TransportState, t_target: f64, eps: f64, delta: f64) -> Result<f64> {
    let conn = Connection::at(scene, &start.point)?;
    let k = fiber_basis(&conn.a);
    let e = &k[0];
    let f = j_apply(e.as_slice());
    let t = C64::new(start.t, 0.0);
    let mut moved = vec![];
    for v in [e, &f] {
        let mut pair = vec![];
        for s in [1.0, -1.0] {
            let q = start.point.offset(v.as_slice(), s * delta);
            let st = project_to_fiber(scene, &q, t, 30)?;
            let end = transport(scene, &st, t_target, eps)?;
            pair.push((st.point, end.point));
        }
        moved.push(pair);
    }
    let diff = |a: &ChartPoint, b: &ChartPoint| {
        DVector::from_iterator(a.dim(), a.coords.iter().zip(&b.coords).map(|(x, y)| (x - y) / (2.0 * delta)))
    };
    let end_center = transport(scene, start, t_target, eps)?.point;
    let area = |pt: &ChartPoint, d1: DVector<f64>, d2: DVector<f64>| -> Result<f64> {
        Ok((d1.transpose() * omega_at(scene, pt)? * d2)[0])
    };
    let a0 = area(&start.point, diff(&moved[0][0].0, &moved[0][1].0), diff(&moved[1][0].0, &moved[1][1].0))?;
    let a1 = area(&end_center, diff(&moved[0][0].1, &moved[0][1].1), diff(&moved[1][0].1, &moved[1][1].1))?;
    Ok(((a1 - a0) / a0).abs())
}

#[derive(Clone, Debug, Serialize)]
pub struct AlignmentRow {
    pub point: ChartPoint,
    pub horizontal: f64,
    pub radial: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlignmentReport {
    pub rows: Vec<AlignmentRow>,
    pub max_horizontal: f64,
    pub max_radial: f64,
}

/// `eta = -d^c log|pi + eps|^2` (in the calibrated convention of `lambda`).
pub fn eta(scene: &SceneSpec, p: &ChartPoint, eps: f64) -> Result<DVector<f64>> {
    let (pi, c) = pi_grad(scene, p)?;
    let f = pi + C64::new(eps, 0.0);
    let n2 = f.norm_sqr();
    if !(n2 > 0.0) {
        return Err(LabError::OnDivisor(n2));
    }
    let mut g = vec![0.0; 2 * c.len()];
    for (j, cj) in c.iter().enumerate() {
        let w = f.conj() * *cj;
        g[2 * j] = 2.0 * w.re / n2;
        g[2 * j + 1] = -2.0 * w.im / n2;
    }
    Ok(j_apply(&g) * scene.dc_sign)
}

/// Residuals of the Lefschetz Liouville field `X = omega^{-1} eta` at one
/// point, with `X` optionally replaced by a test vector.
pub fn alignment_residuals(
    scene: &SceneSpec,
    p: &ChartPoint,
    eps: f64,
    replace: Option<&DVector<f64>>,
) -> Result<(f64, f64)> {
    let conn = Connection::at(scene, p)?;
    let x = match replace {
        Some(v) => v.clone(),
        None => omega_dual(&conn.omega, &eta(scene, p, eps)?)?,
    };
    let xn = x.norm();
    let horizontal = if xn > 0.0 { (&x - conn.project(&x)).norm() / xn } else { 0.0 };
    let d = conn.dpi_of(&x) / (conn.pi + C64::new(eps, 0.0));
    let radial = if d.abs() > 0.0 { d.im.abs() / d.abs() } else { 0.0 };
    Ok((horizontal, radial))
}

pub fn lefschetz_alignment(scene: &SceneSpec, eps: f64, samples: &[ChartPoint]) -> Result<AlignmentReport> {
    let mut rows = vec![];
    for p in samples {
        let (horizontal, radial) = alignment_residuals(scene, p, eps, None)?;
        rows.push(AlignmentRow {
            point: p.clone(),
            horizontal,
            radial,
        });
    }
    Ok(AlignmentReport {
        max_horizontal: rows.iter().map(|r| r.horizontal).fold(0.0, f64::max),
        max_radial: rows.iter().map(|r| r.radial).fold(0.0, f64::max),
        rows,
    })
}

/// Random points with real `pi` in `(t_min, eps)`, off `S`, the pole of
/// `pi` and the critical locus of `pi`.
pub fn fiber_samples(scene: &SceneSpec, eps: f64, t_min: f64, count: usize, seed: u64) -> Result<Vec<ChartPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = if scene.is_projective() { 0.9 } else { scene.box_radius };
    let mut out = vec![];
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > 200 * count.max(1) {
            return Err(LabError::BadParams(format!("could not sample fibers in ({t_min}, {eps})")));
        }
        let chart = rng.gen_range(0..scene.n_charts());
        let x = scene.random_point(&mut rng, chart, r);
        let t = rng.gen_range(t_min..eps);
        let Ok(st) = project_to_fiber(scene, &x, C64::new(t, 0.0), 40) else {
            continue;
        };
        if st.fiber_residual > 1e-12 * (1.0 + t)
            || !scene.in_domain(&st.point)
            || scene.stratum_distance(&st.point) < 1e-3
            || Connection::at(scene, &st.point).is_err()
        {
            continue;
        }
        out.push(st.point);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes::{builtin_scene, SceneParams};

    fn local() -> SceneSpec {
        builtin_scene("local_nc", &SceneParams::with_n(2)).unwrap()
    }

    #[test]
    fn local_horizontal_space_is_conjugate_gradient_span() {
        let s = local();
        let p = ChartPoint::new(0, vec![0.3, 0.0, 0.3, 0.0]);
        let conn = Connection::at(&s, &p).unwrap();
        // span_C (conj z1, conj z0) = span_R {(1,0,1,0), (0,1,0,1)}
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let w = conn.project(&v);
        assert!((w[0] - w[2]).abs() < 1e-12 && (w[1] - w[3]).abs() < 1e-12);
        assert!(conn.orthogonality_residual(&w) < 1e-12);
        assert!((conn.project(&w) - &w).norm() < 1e-12);
        let k = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.0]);
        assert!(conn.project(&k).norm() < 1e-12);
    }

    #[test]
    fn dpi_on_stratum_is_singular() {
        let s = local();
        let p = ChartPoint::new(0, vec![0.0; 4]);
        assert!(matches!(Connection::at(&s, &p), Err(LabError::SingularFiber(_))));
    }

    #[test]
    fn zero_length_transport_is_identity() {
        let s = local();
        let st = project_to_fiber(&s, &ChartPoint::new(0, vec![0.1, 0.0, 0.1, 0.0]), C64::new(0.01, 0.0), 10).unwrap();
        let out = transport(&s, &st, st.t, 0.04).unwrap();
        assert_eq!(out.point, st.point);
    }

    #[test]
    fn base_grid_shares_rungs() {
        let o = ThimbleOptions {
            base_step: Some(0.0025),
            ..Default::default()
        };
        let a = base_grid(0.01, &o);
        let b = base_grid(0.04, &o);
        assert_eq!(a.len(), 5);
        for t in &a[1..] {
            assert!(b.iter().any(|u| (u - t).abs() <= 1e-12 * t));
        }
    }
}
