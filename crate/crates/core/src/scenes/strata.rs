//! The singular stratum `S`, its regular part `S-bar = S \ B`, and distances
//! to `B` and to `D_0` away from `S`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{euclid, Model, SceneSpec};
use crate::error::{LabError, Result};
use crate::jetcalc::complex::realify;
use crate::jetcalc::{complexify, eval_jet2, omega_from_hess, ChartPoint, Cx, Dual2, Jet2, C64};

/// Minimal chart distance from `B` for stratum samples.
pub const B_FLOOR: f64 = 1e-3;

/// A chart in which `S` is the coordinate subspace `{z_c = 0 : c in normal}`.
#[derive(Clone, Debug, Serialize)]
pub struct StratumChart {
    pub x_chart: usize,
    /// Complex chart positions of the two normal coordinates.
    pub normal: [usize; 2],
    /// Complex chart positions of the intrinsic coordinates of `S`.
    pub free: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct StratumPoint {
    pub point: ChartPoint,
    pub stratum_chart: usize,
    pub tangent_basis: Vec<DVector<f64>>,
    pub normal_basis: Vec<DVector<f64>>,
}

impl StratumPoint {
    /// Real intrinsic coordinates on `S`.
    pub fn free_coords(&self, scene: &SceneSpec) -> Vec<f64> {
        let sc = &scene.stratum_charts()[self.stratum_chart];
        sc.free
            .iter()
            .flat_map(|&c| [self.point.coords[2 * c], self.point.coords[2 * c + 1]])
            .collect()
    }
}

impl SceneSpec {
    pub fn stratum_charts(&self) -> Vec<StratumChart> {
        let n = self.n;
        let pos = |j: usize, k: usize| if j < k { j } else { j - 1 };
        match &self.model {
            Model::LocalNc { .. } => vec![StratumChart {
                x_chart: 0,
                normal: [0, 1],
                free: (2..n).collect(),
            }],
            Model::Custom(c) => vec![StratumChart {
                x_chart: 0,
                normal: c.stratum,
                free: (0..n).filter(|j| !c.stratum.contains(j)).collect(),
            }],
            Model::CpnO2h { .. } => (2..=n)
                .map(|k| StratumChart {
                    x_chart: k,
                    normal: [0, 1],
                    free: (2..=n).filter(|&j| j != k).map(|j| pos(j, k)).collect(),
                })
                .collect(),
            Model::CpnXCpn { .. } => {
                let mut out = Vec::new();
                for k in 1..=n {
                    for k2 in 1..=n {
                        let mut free: Vec<usize> =
                            (1..=n).filter(|&j| j != k).map(|j| pos(j, k)).collect();
                        free.extend((1..=n).filter(|&j| j != k2).map(|j| n + pos(j, k2)));
                        out.push(StratumChart {
                            x_chart: self.chart_from_indices(&[k, k2]),
                            normal: [0, n],
                            free,
                        });
                    }
                }
                out
            }
        }
    }

    /// Re-expresses `p` in the stratum chart that owns it (largest modulus
    /// among the homogeneous coordinates that survive on `S`).
    pub fn to_stratum_chart(&self, p: &ChartPoint) -> Option<(usize, ChartPoint)> {
        let n = self.n;
        match self.model {
            Model::LocalNc { .. } | Model::Custom(_) => Some((0, p.clone())),
            Model::CpnO2h { .. } => {
                let f = &self.hom_factors(p.chart, &p.complex())[0];
                let k = argmax(f, 2..=n)?;
                let q = self.to_chart(p, k).ok()?;
                Some((k - 2, q))
            }
            Model::CpnXCpn { .. } => {
                let f = self.hom_factors(p.chart, &p.complex());
                let k = argmax(&f[0], 1..=n)?;
                let k2 = argmax(&f[1], 1..=n)?;
                let q = self.to_chart(p, self.chart_from_indices(&[k, k2])).ok()?;
                Some(((k - 1) * n + (k2 - 1), q))
            }
        }
    }

    /// Point of `S` in stratum chart `sc` with intrinsic real coordinates `free`.
    pub fn stratum_embed(&self, sc: usize, free: &[f64]) -> ChartPoint {
        let charts = self.stratum_charts();
        let c = &charts[sc];
        let mut coords = vec![0.0; self.real_dim()];
        for (k, &pos) in c.free.iter().enumerate() {
            coords[2 * pos] = free[2 * k];
            coords[2 * pos + 1] = free[2 * k + 1];
        }
        ChartPoint::new(c.x_chart, coords)
    }

    /// Chart distance to `S` (norm of the normal coordinates in the owning
    /// stratum chart).
    pub fn stratum_distance(&self, p: &ChartPoint) -> f64 {
        match self.to_stratum_chart(p) {
            Some((sc, q)) => {
                let c = &self.stratum_charts()[sc];
                let z = q.complex();
                (z[c.normal[0]].norm_sqr() + z[c.normal[1]].norm_sqr()).sqrt()
            }
            None => f64::INFINITY,
        }
    }

    /// Builds the stratum point at `p` (which must lie on `S`), with tangent
    /// basis along `S` and normal basis the omega-orthogonal complement `E`.
    pub fn stratum_point(&self, sc: usize, p: ChartPoint) -> Result<StratumPoint> {
        let charts = self.stratum_charts();
        let c = &charts[sc];
        let dim = self.real_dim();
        let unit = |k: usize| {
            let mut v = DVector::zeros(dim);
            v[k] = 1.0;
            v
        };
        let tangent: Vec<DVector<f64>> =
            c.free.iter().flat_map(|&f| [unit(2 * f), unit(2 * f + 1)]).collect();
        let jet = eval_jet2(self, &p, 1.0)?;
        let omega = omega_from_hess(&jet.hess, self.dc_sign);
        let w = |u: &DVector<f64>, v: &DVector<f64>| (u.transpose() * &omega * v)[0];
        let m = tangent.len();
        let gram = DMatrix::from_fn(m, m, |i, k| w(&tangent[i], &tangent[k]));
        let lu = gram.clone().lu();
        let mut normal = Vec::new();
        for &nc in &c.normal {
            for e in [unit(2 * nc), unit(2 * nc + 1)] {
                let mut e2 = e.clone();
                if m > 0 {
                    let b = DVector::from_fn(m, |i, _| w(&tangent[i], &e));
                    let coef = lu
                        .solve(&b)
                        .ok_or_else(|| LabError::Degenerate(gram.determinant().abs()))?;
                    for (k, t) in tangent.iter().enumerate() {
                        e2 -= t * coef[k];
                    }
                }
                normal.push(e2);
            }
        }
        Ok(StratumPoint {
            point: p,
            stratum_chart: sc,
            tangent_basis: tangent,
            normal_basis: normal,
        })
    }
}

fn argmax(f: &[C64], range: std::ops::RangeInclusive<usize>) -> Option<usize> {
    let mut best = None;
    let mut bv = 0.0;
    for j in range {
        let v = f[j].norm_sqr();
        if v > bv {
            bv = v;
            best = Some(j);
        }
    }
    best
}

/// Deterministic pseudo-random samples on `S-bar`, each at least
/// [`B_FLOOR`] from `B`.
pub fn sample_stratum(scene: &SceneSpec, count: usize, seed: u64) -> Result<Vec<StratumPoint>> {
    let charts = scene.stratum_charts();
    if charts.is_empty() {
        return Err(LabError::EmptyStratum);
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    if charts[0].free.is_empty() {
        let p = scene.stratum_embed(0, &[]);
        if b_distance(scene, &p) <= B_FLOOR {
            return Err(LabError::AllNearB(1));
        }
        return Ok(vec![scene.stratum_point(0, p)?]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let limit = 10 * count;
    let mut attempts = 0;
    while out.len() < count {
        if attempts >= limit {
            return Err(LabError::AllNearB(attempts));
        }
        attempts += 1;
        let sc = rng.gen_range(0..charts.len());
        let mut free = Vec::new();
        for _ in &charts[sc].free {
            if scene.is_projective() {
                let r = rng.gen::<f64>().sqrt();
                let t = rng.gen_range(0.0..std::f64::consts::TAU);
                free.extend([r * t.cos(), r * t.sin()]);
            } else {
                let r = scene.box_radius;
                free.extend([rng.gen_range(-r..r), rng.gen_range(-r..r)]);
            }
        }
        let p = scene.stratum_embed(sc, &free);
        if b_distance(scene, &p) <= B_FLOOR {
            continue;
        }
        out.push(scene.stratum_point(sc, p)?);
    }
    Ok(out)
}

/// 2-jet of `phi_eps` restricted to `S`, in the intrinsic coordinates of the
/// stratum chart of `sp`.
pub fn restricted_potential(scene: &SceneSpec, sp: &StratumPoint, eps: f64) -> Result<Jet2> {
    let charts = scene.stratum_charts();
    let c = &charts[sp.stratum_chart];
    let free = sp.free_coords(scene);
    let vars = Dual2::vars(&free);
    let mut z: Vec<Cx<Dual2>> = complexify(&sp.point.coords)
        .iter()
        .map(|w| Cx::lift(*w))
        .collect();
    for (k, &pos) in c.free.iter().enumerate() {
        z[pos] = Cx::new(vars[2 * k], vars[2 * k + 1]);
    }
    let d = scene.phi(sp.point.chart, &z, eps)?;
    Ok(Jet2::from_dual(&d, free.len()))
}

fn h_is_constant(scene: &SceneSpec) -> bool {
    match &scene.model {
        Model::LocalNc { .. } => true,
        Model::Custom(c) => c.h.0.iter().all(|m| m.pow.iter().all(|k| *k == 0)),
        _ => false,
    }
}

/// Estimated chart distance from `p` to `B = {s0 = h = 0}`; `+inf` when `B`
/// is empty.
///
/// `B` is split into the components `{z_c = 0, h = 0}` along the normal
/// coordinates of the owning stratum chart, and each is approached by
/// closest-point Gauss-Newton iteration on the linearized constraint.
/// Only the owning stratum chart is searched, so parts of `B` at infinity
/// of that chart count as infinitely far.
pub fn b_distance(scene: &SceneSpec, p: &ChartPoint) -> f64 {
    if h_is_constant(scene) {
        return f64::INFINITY;
    }
    let Some((sc, q)) = scene.to_stratum_chart(p) else {
        return f64::INFINITY;
    };
    let normal = scene.stratum_charts()[sc].normal;
    let x = q.complex();
    let mut best = f64::INFINITY;
    for &c in &normal {
        let mut xp = x.clone();
        xp[c] = C64::zero();
        // the plain projection may sit at a critical point of h, so also
        // start from small displacements along every coordinate axis
        let kick = 1e-2 * (1.0 + xp.iter().map(|v| v.abs()).fold(0.0, f64::max));
        let mut starts = vec![xp.clone()];
        for j in (0..x.len()).filter(|&j| j != c) {
            for d in [C64::new(kick, 0.0), C64::new(0.0, kick)] {
                let mut y0 = xp.clone();
                y0[j] = y0[j] + d;
                starts.push(y0);
            }
        }
        for y0 in starts {
            if let Some(y) = closest_on_component(scene, q.chart, &xp, y0, c) {
                best = best.min(euclid(&realify(&x), &realify(&y)));
            }
        }
    }
    best
}

/// Closest-point iteration onto `{z_c = 0, h = 0}` from the start `y`
/// (already having `y_c = 0`), targeting the projection `xp` of the query.
fn closest_on_component(
    scene: &SceneSpec,
    chart: usize,
    xp: &[C64],
    mut y: Vec<C64>,
    c: usize,
) -> Option<Vec<C64>> {
    for _ in 0..100 {
        let yp = ChartPoint::from_complex(chart, &y);
        let (hv, mut g) = scene.holo_grad(&yp, 1).ok()?;
        g[c] = C64::zero();
        let gn: f64 = g.iter().map(|v| v.norm_sqr()).sum();
        if !(gn > 1e-300) {
            return None;
        }
        let mut r = hv;
        for j in 0..y.len() {
            r = r + g[j] * (xp[j] - y[j]);
        }
        let ynew: Vec<C64> = (0..y.len())
            .map(|j| xp[j] - g[j].conj() * r.scale(1.0 / gn))
            .collect();
        let step = euclid(&realify(&ynew), &realify(&y));
        y = ynew;
        if !y.iter().all(|v| v.re.is_finite() && v.im.is_finite() && v.abs() < 1e8) {
            return None;
        }
        if step < 1e-14 * (1.0 + y.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            return Some(y);
        }
    }
    let yp = ChartPoint::from_complex(chart, &y);
    let (hv, _) = scene.holo_grad(&yp, 1).ok()?;
    (hv.abs() < 1e-10).then_some(y)
}

/// Chart distance to `D_0` outside the tube of radius `r` around `S`:
/// the part of `{z_c = 0}` with `|z_c'| >= r`, minimized over the two
/// normal coordinates.
pub fn d0_minus_tube_distance(scene: &SceneSpec, p: &ChartPoint, r: f64) -> f64 {
    let Some((sc, q)) = scene.to_stratum_chart(p) else {
        return f64::INFINITY;
    };
    let [a, b] = scene.stratum_charts()[sc].normal;
    let z = q.complex();
    let d = |c: usize, o: usize| (z[c].norm_sqr() + (r - z[o].abs()).max(0.0).powi(2)).sqrt();
    d(a, b).min(d(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes::{builtin_scene, SceneParams};

    fn omega_at(scene: &SceneSpec, p: &ChartPoint) -> DMatrix<f64> {
        omega_from_hess(&eval_jet2(scene, p, 1.0).unwrap().hess, scene.dc_sign)
    }

    #[test]
    fn local_n3_flat_stratum() {
        let s = builtin_scene("local_nc", &SceneParams::with_n(3)).unwrap();
        let pts = sample_stratum(&s, 5, 1).unwrap();
        assert_eq!(pts.len(), 5);
        for sp in &pts {
            assert!(sp.point.coords[..4].iter().all(|c| *c == 0.0));
            for e in &sp.normal_basis {
                assert!(e.rows(4, 2).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn x_cpn_samples_are_omega_orthogonal() {
        let s = builtin_scene("cpn_x_cpn", &SceneParams::with_n(2)).unwrap();
        let pts = sample_stratum(&s, 10, 7).unwrap();
        assert_eq!(pts.len(), 10);
        for sp in &pts {
            let om = omega_at(&s, &sp.point);
            for t in &sp.tangent_basis {
                for e in &sp.normal_basis {
                    assert!((t.transpose() * &om * e)[0].abs() < 1e-10);
                }
            }
            let (s0, h) = s.sections_at(&sp.point).unwrap();
            assert_eq!(s0.abs(), 0.0);
            assert!(h.abs() > 1e-8);
            assert_eq!(s.normal_crossing_rank(sp).unwrap(), 4);
        }
    }

    #[test]
    fn o2h_n2_stratum_is_a_point() {
        let s = builtin_scene("cpn_o2h", &SceneParams::with_n(2)).unwrap();
        let pts = sample_stratum(&s, 4, 0).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].tangent_basis.is_empty());
        assert_eq!(pts[0].point.chart, 2);
        assert!(pts[0].point.coords.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn restricted_potential_eps_shift() {
        let s = builtin_scene("cpn_x_cpn", &SceneParams::with_n(2)).unwrap();
        for sp in sample_stratum(&s, 5, 3).unwrap() {
            let a = restricted_potential(&s, &sp, 0.1).unwrap();
            let b = restricted_potential(&s, &sp, 0.01).unwrap();
            assert!((&a.grad - &b.grad).amax() < 1e-12);
            assert!(((a.value - b.value) - (-2.0 * (0.1f64 / 0.01).ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn b_distance_of_points_on_b_is_zero() {
        let s = builtin_scene("cpn_o2h", &SceneParams::with_n(3)).unwrap();
        // chart 3: (Z0, Z1, Z2) with Z3 = 1; h = 1.2 Z2^2 + 1.3 = 0 at Z2 = i sqrt(1.3/1.2)
        let y = (1.3f64 / 1.2).sqrt();
        let p = ChartPoint::new(3, vec![0.0, 0.0, 0.4, 0.1, 0.0, y]);
        assert!(b_distance(&s, &p) < 1e-12);
        let far = ChartPoint::new(3, vec![0.0; 6]);
        let d = b_distance(&s, &far);
        assert!((d - y).abs() < 1e-9, "{d}");
        let l = builtin_scene("local_nc", &SceneParams::with_n(2)).unwrap();
        assert_eq!(b_distance(&l, &ChartPoint::new(0, vec![0.0; 4])), f64::INFINITY);
    }
}
