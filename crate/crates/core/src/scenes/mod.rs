//! Degeneration scenarios: atlases, pencils `s_eps = s0 + eps*h`, line-bundle
//! weights and the strata `S`, `S-bar`, `B`.
//!
//! Every scene evaluates its potential as
//! `phi_eps = -ln|s0 + eps*h|^2 + w`, where `w` is the local weight of the
//! hermitian metric (`||sigma||^2 = |sigma|^2 e^{-w}`). All formulas are
//! generic over [`Scalar`] so the same code yields values and 2-jets.

pub mod custom;
pub mod strata;
pub mod truth;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::jetcalc::{
    complexify, jacobi_spectrum, kahler_positivity, omega_from_hess, ChartPoint, Cx, Dual2,
    Jet2, Scalar, C64, MAX_DIM,
};
pub use custom::CustomScene;
pub use strata::{
    b_distance, d0_minus_tube_distance, restricted_potential, sample_stratum, StratumChart,
    StratumPoint,
};
pub use truth::{CritPhi0, KnownTruth, StratumCrit};

/// `|s_eps|^2` at or below this is treated as lying on the divisor.
pub const DIVISOR_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum Model {
    /// `C^n` near a normal crossing: `s0 = z0 z1`, `h = 1`,
    /// `w = |z0|^2 + |z1|^2 + sum_{j>=2} (|z_j|^2 + b_j Re z_j^2)`.
    LocalNc { psi_b: Vec<f64> },
    /// `CP^n` with `s0 = Z0 Z1`, `h = sum_{j>=2} a_j Z_j^2`, `w = 2 ln|Z|^2`.
    /// `a[k]` is the coefficient of `Z_{k+2}`.
    CpnO2h { a: Vec<f64> },
    /// `CP^n x CP^n` with `s0 = Z0 Z0'`, `h = sum_{j>=1} a_j Z_j Z_j'`,
    /// `w = ln|Z|^2 + ln|Z'|^2 + kappa Re(Z0 conj Z2)/|Z|^2`.
    /// `a[k]` is the coefficient of `Z_{k+1} Z'_{k+1}`.
    CpnXCpn { a: Vec<f64>, kappa: f64 },
    Custom(CustomScene),
}

/// Scene construction parameters; every field is optional.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneParams {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub a: Option<Vec<f64>>,
    #[serde(default)]
    pub psi_b: Option<Vec<f64>>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub box_radius: Option<f64>,
    #[serde(default)]
    pub custom: Option<CustomScene>,
}

impl SceneParams {
    pub fn with_n(n: usize) -> Self {
        SceneParams {
            n: Some(n),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct SceneSpec {
    pub name: String,
    /// Dimension parameter: `dim_C X` for affine and `CP^n` scenes, the
    /// factor dimension for `CP^n x CP^n`.
    pub n: usize,
    pub model: Model,
    /// Calibrated sign in `lambda = -sign * dphi o J`.
    pub dc_sign: f64,
    /// Half-width of the seeding box in each real chart coordinate.
    pub box_radius: f64,
    pub calibration: String,
    pub known_truth: KnownTruth,
}

/// Default generic coefficient `a_j = 1 + j/10`.
pub fn default_coeff(j: usize) -> f64 {
    1.0 + j as f64 / 10.0
}

fn check_coeffs(a: &[f64]) -> Result<()> {
    for (i, x) in a.iter().enumerate() {
        if !x.is_finite() || *x == 0.0 {
            return Err(LabError::BadParams(format!("coefficient {i} is zero or non-finite")));
        }
        for y in &a[..i] {
            if (x.abs() - y.abs()).abs() <= 1e-12 * x.abs().max(y.abs()) {
                return Err(LabError::BadParams(format!(
                    "repeated coefficient modulus {}",
                    x.abs()
                )));
            }
        }
    }
    Ok(())
}

/// Builds one of the registered scenes: `local_nc`, `cpn_o2h`, `cpn_x_cpn`,
/// or `custom` (which requires `params.custom`).
pub fn builtin_scene(name: &str, params: &SceneParams) -> Result<SceneSpec> {
    let (n, model, box_radius) = match name {
        "local_nc" => {
            let n = params.n.unwrap_or(2);
            if !(2..=MAX_DIM / 2).contains(&n) {
                return Err(LabError::BadParams(format!("local_nc needs 2 <= n <= 6, got {n}")));
            }
            let psi_b = params.psi_b.clone().unwrap_or_else(|| vec![0.0; n - 2]);
            if psi_b.len() != n - 2 {
                return Err(LabError::BadParams(format!("psi_b needs {} entries", n - 2)));
            }
            if psi_b.iter().any(|b| !b.is_finite() || (b.abs() - 1.0).abs() < 1e-9) {
                return Err(LabError::BadParams("psi_b entries must be finite with |b| != 1".into()));
            }
            (n, Model::LocalNc { psi_b }, params.box_radius.unwrap_or(0.5))
        }
        "cpn_o2h" => {
            let n = params.n.unwrap_or(2);
            if !(2..=MAX_DIM / 2).contains(&n) {
                return Err(LabError::BadParams(format!("cpn_o2h needs 2 <= n <= 6, got {n}")));
            }
            let a = params
                .a
                .clone()
                .unwrap_or_else(|| (2..=n).map(default_coeff).collect());
            if a.len() != n - 1 {
                return Err(LabError::BadParams(format!("cpn_o2h needs {} coefficients", n - 1)));
            }
            check_coeffs(&a)?;
            (n, Model::CpnO2h { a }, params.box_radius.unwrap_or(1.0))
        }
        "cpn_x_cpn" => {
            let n = params.n.unwrap_or(2);
            if !(2..=MAX_DIM / 4).contains(&n) {
                return Err(LabError::BadParams(format!("cpn_x_cpn needs 2 <= n <= 3, got {n}")));
            }
            let a = params
                .a
                .clone()
                .unwrap_or_else(|| (1..=n).map(default_coeff).collect());
            if a.len() != n {
                return Err(LabError::BadParams(format!("cpn_x_cpn needs {n} coefficients")));
            }
            check_coeffs(&a)?;
            let kappa = params.kappa.unwrap_or(0.0);
            if !kappa.is_finite() {
                return Err(LabError::BadParams("kappa must be finite".into()));
            }
            (n, Model::CpnXCpn { a, kappa }, params.box_radius.unwrap_or(1.0))
        }
        "custom" => {
            let c = params
                .custom
                .clone()
                .ok_or_else(|| LabError::BadParams("custom scene needs a `custom` block".into()))?;
            c.validate()?;
            let r = params.box_radius.unwrap_or(c.box_radius);
            (c.n, Model::Custom(c), r)
        }
        other => return Err(LabError::UnknownScene(other.to_string())),
    };
    if !(box_radius > 0.0 && box_radius.is_finite()) {
        return Err(LabError::BadParams("box_radius must be positive".into()));
    }
    let mut scene = SceneSpec {
        name: name.to_string(),
        n,
        model,
        dc_sign: 1.0,
        box_radius,
        calibration: String::new(),
        known_truth: KnownTruth::default(),
    };
    scene.calibrate()?;
    scene.known_truth = truth::known_truth(&scene);
    Ok(scene)
}

impl SceneSpec {
    /// Complex dimension of `X`.
    pub fn dim_c(&self) -> usize {
        match self.model {
            Model::CpnXCpn { .. } => 2 * self.n,
            _ => self.n,
        }
    }

    pub fn real_dim(&self) -> usize {
        2 * self.dim_c()
    }

    pub fn is_projective(&self) -> bool {
        matches!(self.model, Model::CpnO2h { .. } | Model::CpnXCpn { .. })
    }

    pub fn n_charts(&self) -> usize {
        match self.model {
            Model::CpnO2h { .. } => self.n + 1,
            Model::CpnXCpn { .. } => (self.n + 1) * (self.n + 1),
            _ => 1,
        }
    }

    /// The normalized homogeneous index per projective factor for a chart.
    pub fn chart_indices(&self, chart: usize) -> Vec<usize> {
        match self.model {
            Model::CpnO2h { .. } => vec![chart],
            Model::CpnXCpn { .. } => vec![chart / (self.n + 1), chart % (self.n + 1)],
            _ => vec![],
        }
    }

    pub fn chart_from_indices(&self, idx: &[usize]) -> usize {
        match self.model {
            Model::CpnO2h { .. } => idx[0],
            Model::CpnXCpn { .. } => idx[0] * (self.n + 1) + idx[1],
            _ => 0,
        }
    }

    pub fn check_point(&self, p: &ChartPoint) -> Result<()> {
        if p.chart >= self.n_charts() {
            return Err(LabError::BadChart(format!(
                "chart {} out of range (scene has {})",
                p.chart,
                self.n_charts()
            )));
        }
        if p.coords.len() != self.real_dim() {
            return Err(LabError::BadChart(format!(
                "expected {} coordinates, got {}",
                self.real_dim(),
                p.coords.len()
            )));
        }
        if !p.coords.iter().all(|c| c.is_finite()) {
            return Err(LabError::BadChart("non-finite coordinate".into()));
        }
        Ok(())
    }

    /// Homogeneous coordinates, one vector per projective factor.
    pub fn hom_factors<T: Scalar>(&self, chart: usize, z: &[Cx<T>]) -> Vec<Vec<Cx<T>>> {
        let n = self.n;
        let insert = |w: &[Cx<T>], pos: usize| {
            let mut out = Vec::with_capacity(w.len() + 1);
            out.extend_from_slice(&w[..pos]);
            out.push(Cx::one());
            out.extend_from_slice(&w[pos..]);
            out
        };
        match self.model {
            Model::CpnO2h { .. } => vec![insert(z, chart)],
            Model::CpnXCpn { .. } => {
                let idx = self.chart_indices(chart);
                vec![insert(&z[..n], idx[0]), insert(&z[n..], idx[1])]
            }
            _ => vec![z.to_vec()],
        }
    }

    /// Affine coordinates in the chart normalizing `idx` (per factor);
    /// `None` if a normalizing coordinate vanishes.
    pub fn from_hom<T: Scalar>(&self, factors: &[Vec<Cx<T>>], idx: &[usize]) -> Option<Vec<Cx<T>>> {
        if !self.is_projective() {
            return Some(factors[0].clone());
        }
        let mut out = Vec::with_capacity(self.dim_c());
        for (f, &i) in factors.iter().zip(idx) {
            let d = f[i];
            if d.value().norm_sqr() == 0.0 {
                return None;
            }
            for (j, c) in f.iter().enumerate() {
                if j != i {
                    out.push(*c / d);
                }
            }
        }
        Some(out)
    }

    /// The pencil sections `(s0, h)` in a chart.
    pub fn sections<T: Scalar>(&self, chart: usize, z: &[Cx<T>]) -> (Cx<T>, Cx<T>) {
        match &self.model {
            Model::LocalNc { .. } => (z[0] * z[1], Cx::one()),
            Model::CpnO2h { a } => {
                let zz = &self.hom_factors(chart, z)[0];
                let mut h = Cx::zero();
                for (k, ak) in a.iter().enumerate() {
                    let w = zz[k + 2];
                    h = h + (w * w).scale(*ak);
                }
                (zz[0] * zz[1], h)
            }
            Model::CpnXCpn { a, .. } => {
                let f = self.hom_factors(chart, z);
                let mut h = Cx::zero();
                for (k, ak) in a.iter().enumerate() {
                    h = h + (f[0][k + 1] * f[1][k + 1]).scale(*ak);
                }
                (f[0][0] * f[1][0], h)
            }
            Model::Custom(c) => (c.s0.eval(z), c.h.eval(z)),
        }
    }

    /// Local weight `w` of the hermitian metric.
    pub fn weight<T: Scalar>(&self, chart: usize, z: &[Cx<T>]) -> T {
        match &self.model {
            Model::LocalNc { psi_b } => {
                let mut w = z[0].norm_sqr() + z[1].norm_sqr();
                for (k, b) in psi_b.iter().enumerate() {
                    let zj = z[k + 2];
                    w = w + zj.norm_sqr() + (zj * zj).re * *b;
                }
                w
            }
            Model::CpnO2h { .. } => {
                let zz = &self.hom_factors(chart, z)[0];
                norm2(zz).ln() * 2.0
            }
            Model::CpnXCpn { kappa, .. } => {
                let f = self.hom_factors(chart, z);
                let n0 = norm2(&f[0]);
                let mut w = n0.ln() + norm2(&f[1]).ln();
                if *kappa != 0.0 {
                    let re = f[0][0].re * f[0][2].re + f[0][0].im * f[0][2].im;
                    w = w + re / n0 * *kappa;
                }
                w
            }
            Model::Custom(c) => c.weight(z),
        }
    }

    /// `phi_eps = -ln|s0 + eps h|^2 + w`.
    pub fn phi<T: Scalar>(&self, chart: usize, z: &[Cx<T>], eps: f64) -> Result<T> {
        let (s0, h) = self.sections(chart, z);
        let s = s0 + h.scale(eps);
        let ns = s.norm_sqr();
        let v = ns.value();
        if !(v > DIVISOR_FLOOR) {
            return Err(LabError::OnDivisor(v));
        }
        Ok(-ns.ln() + self.weight(chart, z))
    }

    /// `g = -log||h||^2 = -ln|h|^2 + w`.
    pub fn g_potential<T: Scalar>(&self, chart: usize, z: &[Cx<T>]) -> Result<T> {
        let (_, h) = self.sections(chart, z);
        let nh = h.norm_sqr();
        if !(nh.value() > DIVISOR_FLOOR) {
            return Err(LabError::OnDivisor(nh.value()));
        }
        Ok(-nh.ln() + self.weight(chart, z))
    }

    pub fn sections_at(&self, p: &ChartPoint) -> Result<(C64, C64)> {
        self.check_point(p)?;
        Ok(self.sections(p.chart, &p.complex()))
    }

    /// Jet of `g = -log||h||^2`.
    pub fn g_jet(&self, p: &ChartPoint) -> Result<Jet2> {
        self.check_point(p)?;
        let z = complexify(&Dual2::vars(&p.coords));
        let d = self.g_potential(p.chart, &z)?;
        Ok(Jet2::from_dual(&d, p.dim()))
    }

    /// Holomorphic gradient `(dF/dz_j)_j` of `s0` (`which = 0`) or `h` (`which = 1`).
    pub fn holo_grad(&self, p: &ChartPoint, which: usize) -> Result<(C64, Vec<C64>)> {
        self.check_point(p)?;
        let z = complexify(&Dual2::vars(&p.coords));
        let (s0, h) = self.sections(p.chart, &z);
        let f = if which == 0 { s0 } else { h };
        let grad = (0..self.dim_c())
            .map(|j| Cx::new(f.re.grad(2 * j), f.im.grad(2 * j)))
            .collect();
        Ok((f.value(), grad))
    }

    /// Re-expresses `p` in `target` chart.
    pub fn to_chart(&self, p: &ChartPoint, target: usize) -> Result<ChartPoint> {
        self.check_point(p)?;
        if target >= self.n_charts() {
            return Err(LabError::BadChart(format!("chart {target} out of range")));
        }
        if target == p.chart {
            return Ok(p.clone());
        }
        let f = self.hom_factors(p.chart, &p.complex());
        let z = self
            .from_hom(&f, &self.chart_indices(target))
            .ok_or_else(|| LabError::BadChart(format!("point not in chart {target}")))?;
        Ok(ChartPoint::from_complex(target, &z))
    }

    /// Owning chart: the largest-modulus homogeneous coordinate is normalized
    /// to 1 in each factor.
    pub fn canonical(&self, p: &ChartPoint) -> ChartPoint {
        if !self.is_projective() {
            return p.clone();
        }
        let f = self.hom_factors(p.chart, &p.complex());
        let idx: Vec<usize> = f
            .iter()
            .map(|fac| {
                let mut best = 0;
                for (j, c) in fac.iter().enumerate() {
                    if c.norm_sqr() > fac[best].norm_sqr() {
                        best = j;
                    }
                }
                best
            })
            .collect();
        let chart = self.chart_from_indices(&idx);
        self.to_chart(p, chart).unwrap_or_else(|_| p.clone())
    }

    /// Chart-Euclidean distance measured in the canonical chart of `p`;
    /// `+inf` if `q` is not representable there.
    pub fn distance(&self, p: &ChartPoint, q: &ChartPoint) -> f64 {
        let c = self.canonical(p);
        match self.to_chart(q, c.chart) {
            Ok(q2) => euclid(&c.coords, &q2.coords),
            Err(_) => f64::INFINITY,
        }
    }

    /// Whether `p` lies in the seeding domain: the coordinate box for affine
    /// scenes, the owning chart's closed polydisc for projective ones.
    pub fn in_domain(&self, p: &ChartPoint) -> bool {
        if self.is_projective() {
            let c = self.canonical(p);
            c.complex().iter().all(|z| z.abs() <= 1.0 + 1e-9)
        } else {
            p.coords.iter().all(|x| x.abs() <= self.box_radius * (1.0 + 1e-9))
        }
    }

    /// Picks the sign of `d^c` so that `omega(v, J v) > 0` at reference points.
    fn calibrate(&mut self) -> Result<()> {
        let dim = self.real_dim();
        let mut votes = Vec::new();
        for k in 0..4 {
            let coords: Vec<f64> = (0..dim)
                .map(|i| 0.11 + 0.07 * k as f64 + 0.013 * i as f64 * if i % 2 == 0 { 1.0 } else { -1.0 })
                .collect();
            let p = ChartPoint::new(0, coords);
            let Ok(jet) = crate::jetcalc::eval_jet2(self, &p, 1.0) else {
                continue;
            };
            votes.push(kahler_positivity(&omega_from_hess(&jet.hess, 1.0)));
        }
        if votes.is_empty() {
            return Err(LabError::BadParams("no reference point off the divisor".into()));
        }
        if votes.iter().all(|v| *v > 0.0) {
            self.dc_sign = 1.0;
            self.calibration = "lambda = -dphi o J (omega positive on (v, Jv))".into();
        } else if votes.iter().all(|v| *v < 0.0) {
            self.dc_sign = -1.0;
            self.calibration = "lambda = +dphi o J (sign flipped to make omega positive)".into();
        } else {
            return Err(LabError::BadParams("metric weight is not plurisubharmonic".into()));
        }
        log::debug!("scene {}: {}", self.name, self.calibration);
        Ok(())
    }

    /// Random point in chart `chart` with each real coordinate uniform in `[-r, r]`.
    pub fn random_point(&self, rng: &mut ChaCha8Rng, chart: usize, r: f64) -> ChartPoint {
        let coords = (0..self.real_dim()).map(|_| rng.gen_range(-r..r)).collect();
        ChartPoint::new(chart, coords)
    }

    /// Maximal transition inconsistency of `phi_eps` and `dphi_eps` over
    /// random samples on every pair of overlapping charts.
    pub fn overlap_residual(&self, samples_per_pair: usize, seed: u64, eps: f64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for a in 0..self.n_charts() {
            for b in 0..self.n_charts() {
                if a == b {
                    continue;
                }
                let tidx = self.chart_indices(b);
                let mut done = 0;
                let mut tries = 0;
                while done < samples_per_pair && tries < 20 * samples_per_pair {
                    tries += 1;
                    let p = self.random_point(&mut rng, a, 1.5);
                    let Ok(direct) = crate::jetcalc::eval_jet2(self, &p, eps) else {
                        continue;
                    };
                    let z = complexify(&Dual2::vars(&p.coords));
                    let f = self.hom_factors(a, &z);
                    let Some(zb) = self.from_hom(&f, &tidx) else {
                        continue;
                    };
                    if zb.iter().any(|c| c.value().abs() > 1e4) {
                        continue;
                    }
                    let Ok(via) = self.phi(b, &zb, eps) else {
                        continue;
                    };
                    let scale = 1.0 + direct.value.abs();
                    worst = worst.max((via.v - direct.value).abs() / scale);
                    let gscale = 1.0 + direct.grad.norm();
                    for i in 0..p.dim() {
                        worst = worst.max((via.grad(i) - direct.grad[i]).abs() / gscale);
                    }
                    done += 1;
                }
            }
        }
        Ok(worst)
    }

    /// Rank of the real Hessian of `Re s0` restricted to the two complex
    /// normal coordinates at a stratum point (4 for a normal crossing).
    pub fn normal_crossing_rank(&self, sp: &StratumPoint) -> Result<usize> {
        let sc = &self.stratum_charts()[sp.stratum_chart];
        let p = &sp.point;
        let z = complexify(&Dual2::vars(&p.coords));
        let (s0, _) = self.sections(p.chart, &z);
        let idx: Vec<usize> = sc.normal.iter().flat_map(|&c| [2 * c, 2 * c + 1]).collect();
        let m = nalgebra::DMatrix::from_fn(4, 4, |i, j| s0.re.hess(idx[i], idx[j]));
        let spec = jacobi_spectrum(&m)?;
        let tol = 1e-8 * spec.max_abs().max(1e-300);
        Ok(spec.values.iter().filter(|v| v.abs() > tol).count())
    }
}

pub(crate) fn norm2<T: Scalar>(z: &[Cx<T>]) -> T {
    let mut acc = T::cst(0.0);
    for c in z {
        acc = acc + c.norm_sqr();
    }
    acc
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jetcalc::{eval_jet2, phi_value};

    #[test]
    fn local_origin_value() {
        let s = builtin_scene("local_nc", &SceneParams::with_n(2)).unwrap();
        let v = phi_value(&s, &ChartPoint::new(0, vec![0.0; 4]), 0.1).unwrap();
        assert!((v + (0.01f64).ln()).abs() < 1e-15);
        assert_eq!(s.dc_sign, 1.0);
    }

    #[test]
    fn o2h_chart_one_at_eps_zero() {
        let s = builtin_scene("cpn_o2h", &SceneParams::with_n(2)).unwrap();
        let (z0, z2) = (C64::new(0.3, -0.2), C64::new(0.5, 0.1));
        let p = ChartPoint::from_complex(1, &[z0, z2]);
        let v = phi_value(&s, &p, 0.0).unwrap();
        let expect = -z0.norm_sqr().ln() + 2.0 * (1.0 + z0.norm_sqr() + z2.norm_sqr()).ln();
        assert!((v - expect).abs() < 1e-14);
    }

    #[test]
    fn genericity_guards() {
        let mut p = SceneParams::with_n(3);
        p.a = Some(vec![1.2, -1.2]);
        assert!(matches!(builtin_scene("cpn_o2h", &p), Err(LabError::BadParams(_))));
        p.a = Some(vec![0.0, 1.5]);
        assert!(matches!(builtin_scene("cpn_o2h", &p), Err(LabError::BadParams(_))));
        assert!(matches!(
            builtin_scene("blowup", &SceneParams::default()),
            Err(LabError::UnknownScene(_))
        ));
    }

    #[test]
    fn transitions_round_trip() {
        let s = builtin_scene("cpn_x_cpn", &SceneParams::with_n(2)).unwrap();
        let p = ChartPoint::new(0, vec![0.3, 0.1, -0.4, 0.2, 0.5, -0.5, 0.2, 0.7]);
        let q = s.to_chart(&p, 5).unwrap();
        let r = s.to_chart(&q, 0).unwrap();
        assert!(euclid(&p.coords, &r.coords) < 1e-14);
        let c = s.canonical(&p);
        assert!(s.in_domain(&c));
        assert!(s.distance(&p, &q) < 1e-13);
    }

    #[test]
    fn overlaps_consistent() {
        for (name, n) in [("cpn_o2h", 2), ("cpn_o2h", 3), ("cpn_x_cpn", 2)] {
            let s = builtin_scene(name, &SceneParams::with_n(n)).unwrap();
            let r = s.overlap_residual(5, 3, 0.05).unwrap();
            assert!(r < 1e-9, "{name}: {r}");
        }
    }

    #[test]
    fn pencil_identity() {
        let s = builtin_scene("cpn_x_cpn", &SceneParams::with_n(2)).unwrap();
        let p = ChartPoint::new(4, vec![0.3, 0.1, -0.4, 0.2, 0.5, -0.5, 0.2, 0.7]);
        let (s0, h) = s.sections_at(&p).unwrap();
        let eps = 0.05;
        let s_eps = s0 + h.scale(eps);
        let jet = eval_jet2(&s, &p, eps).unwrap();
        let w = s.weight(p.chart, &p.complex());
        assert!((jet.value - (-s_eps.norm_sqr().ln() + w)).abs() < 1e-14);
    }
}
