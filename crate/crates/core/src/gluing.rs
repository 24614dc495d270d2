//! Gluing the Lefschetz-type structure near a stratum critical point into
//! the ambient one, for the two-dimensional local model.
//!
//! In the flat model the thimble through the origin is a linear Lagrangian
//! plane, so a linear Darboux frame `(U_i, V_i = J U_i)` adapted to it is
//! exact. Coordinates are `u_i = omega(x, V_i)`, `v_i = -omega(x, U_i)`, the
//! thimble is `{v = 0}` and `r = |u|^2 + |v|^2`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::continuation::CheckStatus;
use crate::critfinder::{find_critical_points_in, CritField, SeedPlan};
use crate::error::{LabError, Result};
use crate::fibration::{omega_at, rising_plane, ThimbleMesh};
use crate::jetcalc::{
    complexify, j_apply, lambda_from_grad, margin_from, omega_dual, ChartPoint, Cx, Dual2, Jet2, Scalar,
};
use crate::scenes::{Model, SceneSpec};

/// Path-independence tolerance for the primitive `H`.
pub const PATH_TOL: f64 = 1e-9;
/// Central-difference step for exterior derivatives of the glued form,
/// whose higher derivatives jump at the cutoff boundaries.
pub const FD_STEP: f64 = 2e-6;
/// Five-point stencil step for exterior derivatives of smooth forms.
pub const FD_STEP_SMOOTH: f64 = 1e-4;
/// Tolerance on `d xi = omega`.
pub const DXI_TOL: f64 = 1e-9;
/// Tolerance on `d lambda~ = omega`.
pub const DLAMBDA_TOL: f64 = 1e-6;
/// Radius of the ball around `p` excluded from the positivity check.
pub const CORE_RADIUS: f64 = 1e-3;
/// Critical-point location tolerance.
pub const LOCATE_TOL: f64 = 1e-8;
/// Mesh tangency tolerance.
pub const TANGENCY_TOL: f64 = 1e-6;

/// 16-point Gauss-Legendre nodes and weights on `[-1, 1]` (positive half).
const GL16: [(f64, f64); 8] = [
    (0.0950125098376374, 0.1894506104550685),
    (0.2816035507792589, 0.1826034150449236),
    (0.4580167776572274, 0.1691565193950025),
    (0.6178762444026438, 0.1495959888165767),
    (0.7554044083550030, 0.1246289712555339),
    (0.8656312023878318, 0.0951585116824928),
    (0.9445750230732326, 0.0622535239386479),
    (0.9894009349916499, 0.0271524594117541),
];

/// Composite 16-point Gauss-Legendre rule on `[0, 1]` with `panels` panels.
fn gauss_legendre<F: FnMut(f64) -> Result<f64>>(mut f: F, panels: usize) -> Result<f64> {
    let w = 1.0 / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * w;
        for &(x, a) in &GL16 {
            acc += a * (f(mid + 0.5 * w * x)? + f(mid - 0.5 * w * x)?);
        }
    }
    Ok(0.5 * w * acc)
}

/// Quintic smoothstep cutoff: 0 on `r <= eps0/4`, 1 on `r >= eps0/2`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Cutoff {
    pub eps0: f64,
}

impl Cutoff {
    pub fn lo(&self) -> f64 {
        self.eps0 / 4.0
    }

    pub fn hi(&self) -> f64 {
        self.eps0 / 2.0
    }

    fn x(&self, r: f64) -> f64 {
        ((r - self.lo()) / (self.hi() - self.lo())).clamp(0.0, 1.0)
    }

    pub fn value(&self, r: f64) -> f64 {
        let x = self.x(r);
        x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let x = self.x(r);
        30.0 * x * x * (1.0 - x) * (1.0 - x) / (self.hi() - self.lo())
    }

    /// `max rho' = 15/8 / (eps0/4)`.
    pub fn max_slope(&self) -> f64 {
        7.5 / self.eps0
    }

    fn generic<T: Scalar>(&self, r: T) -> T {
        let x = (r - T::cst(self.lo())) * (1.0 / (self.hi() - self.lo()));
        x * x * x * (x * (x * 6.0 - T::cst(15.0)) + T::cst(10.0))
    }
}

/// Which formula an evaluator used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Inner,
    Blend,
    Outer,
}

#[derive(Clone, Debug, Serialize)]
pub struct Calibration {
    /// `+1` when `-d^c(|v|^2 / 2) = -sum v_i du_i` in the kernel's convention.
    pub quadratic_sign: f64,
    /// `eta = eta_sign * (-d^c ell)` with `ell = -log|pi + eps|^2`; the
    /// literal `-d^c log|pi + eps|^2` corresponds to `eta_sign = -1`.
    pub eta_sign: f64,
    pub psi_offset: f64,
}

#[derive(Clone, Debug)]
pub struct GluedStructure<'a> {
    pub scene: &'a SceneSpec,
    pub eps0: f64,
    pub eps: f64,
    /// `U_1, U_2` spanning the thimble, `V_i = J U_i`.
    pub frame_u: [DVector<f64>; 2],
    pub frame_v: [DVector<f64>; 2],
    pub omega: DMatrix<f64>,
    pub rho: Cutoff,
    pub calibration: Calibration,
    /// Half-width of `V_delta = {r < eps0, |v| < delta}`.
    pub delta: f64,
    pub gl_panels: usize,
    /// `d u_i`, `d v_i` as covectors.
    du: [DVector<f64>; 2],
    dv: [DVector<f64>; 2],
}

fn dvec(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Builds the glued structure around the origin of the n = 2 local model.
pub fn build_glued<'a>(scene: &'a SceneSpec, p: &ChartPoint, eps0: f64, eps: f64) -> Result<GluedStructure<'a>> {
    if !matches!(scene.model, Model::LocalNc { .. }) || scene.n != 2 {
        return Err(LabError::NotLocalModel(scene.name.clone()));
    }
    if p.coords.iter().any(|c| *c != 0.0) {
        return Err(LabError::NotLocalModel("the glued point must be the origin".into()));
    }
    if !(eps > 0.0 && eps0 > 0.0 && eps / eps0 <= 0.1) {
        return Err(LabError::BadParams(format!("need 0 < eps/eps0 <= 0.1, got {eps}/{eps0}")));
    }
    let omega = omega_at(scene, p)?;
    let plane = rising_plane(scene, p, 1.0)?;
    if plane.len() != 2 {
        return Err(LabError::FrameFailure(format!("thimble plane has dimension {}", plane.len())));
    }
    let g = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * &omega * j_apply(b.as_slice()))[0];
    let mut us: Vec<DVector<f64>> = vec![];
    for (_, e) in &plane {
        let mut w = e.clone();
        for u in &us {
            w -= u * g(u, &w);
        }
        let n2 = g(&w, &w);
        if !(n2 > 1e-12) {
            return Err(LabError::FrameFailure("metric degenerates on the thimble plane".into()));
        }
        us.push(w / n2.sqrt());
    }
    let vs: Vec<DVector<f64>> = us.iter().map(|u| j_apply(u.as_slice())).collect();
    let om = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * &omega * b)[0];
    for i in 0..2 {
        for j in 0..2 {
            let d = if i == j { 1.0 } else { 0.0 };
            if (om(&us[i], &vs[j]) - d).abs() > 1e-12
                || om(&us[i], &us[j]).abs() > 1e-12
                || om(&vs[i], &vs[j]).abs() > 1e-12
            {
                return Err(LabError::FrameFailure("frame is not symplectic".into()));
            }
        }
    }
    let du = [&omega * &vs[0], &omega * &vs[1]];
    let dv = [-(&omega * &us[0]), -(&omega * &us[1])];
    let mut gs = GluedStructure {
        scene,
        eps0,
        eps,
        frame_u: [us[0].clone(), us[1].clone()],
        frame_v: [vs[0].clone(), vs[1].clone()],
        omega,
        rho: Cutoff { eps0 },
        calibration: Calibration {
            quadratic_sign: 1.0,
            eta_sign: 1.0,
            psi_offset: 0.0,
        },
        delta: 0.2 * eps0.sqrt(),
        gl_panels: 1,
        du,
        dv,
    };
    gs.calibrate(p)?;
    gs.refine_primitive()?;
    Ok(gs)
}

impl GluedStructure<'_> {
    pub fn uv(&self, x: &[f64]) -> ([f64; 2], [f64; 2]) {
        let x = dvec(x);
        (
            [self.du[0].dot(&x), self.du[1].dot(&x)],
            [self.dv[0].dot(&x), self.dv[1].dot(&x)],
        )
    }

    pub fn r(&self, x: &[f64]) -> f64 {
        let (u, v) = self.uv(x);
        u[0] * u[0] + u[1] * u[1] + v[0] * v[0] + v[1] * v[1]
    }

    pub fn from_uv(&self, u: [f64; 2], v: [f64; 2]) -> Vec<f64> {
        let x = &self.frame_u[0] * u[0] + &self.frame_u[1] * u[1] + &self.frame_v[0] * v[0] + &self.frame_v[1] * v[1];
        x.iter().copied().collect()
    }

    pub fn branch(&self, x: &[f64]) -> Branch {
        let r = self.r(x);
        if r < self.rho.lo() {
            Branch::Inner
        } else if r > self.rho.hi() {
            Branch::Outer
        } else {
            Branch::Blend
        }
    }

    fn point(&self, x: &[f64]) -> ChartPoint {
        ChartPoint::new(0, x.to_vec())
    }

    /// `ell = -log|pi + eps|^2`, generic for AD.
    fn ell<T: Scalar>(&self, z: &[Cx<T>]) -> Result<T> {
        let (s0, h) = self.scene.sections(0, z);
        let f = s0 / h + Cx::real(self.eps);
        let n = f.norm_sqr();
        if !(n.value() > 0.0) {
            return Err(LabError::OnDivisor(n.value()));
        }
        Ok(-n.ln())
    }

    fn half_v2<T: Scalar>(&self, x: &[T]) -> T {
        let mut acc = T::cst(0.0);
        for dv in &self.dv {
            let mut vi = T::cst(0.0);
            for (xk, c) in x.iter().zip(dv.iter()) {
                vi = vi + *xk * *c;
            }
            acc = acc + vi * vi * 0.5;
        }
        acc
    }

    fn psi_generic<T: Scalar>(&self, x: &[T]) -> Result<T> {
        Ok(self.ell(&complexify(x))? + self.half_v2(x) + T::cst(self.calibration.psi_offset))
    }

    fn phi_generic<T: Scalar>(&self, x: &[T]) -> Result<T> {
        self.scene.phi(0, &complexify(x), self.eps)
    }

    fn r_generic<T: Scalar>(&self, x: &[T]) -> T {
        let mut acc = T::cst(0.0);
        for d in self.du.iter().chain(&self.dv) {
            let mut c = T::cst(0.0);
            for (xk, dk) in x.iter().zip(d.iter()) {
                c = c + *xk * *dk;
            }
            acc = acc + c * c;
        }
        acc
    }

    fn phi_tilde_generic<T: Scalar>(&self, x: &[T], branch: Branch) -> Result<T> {
        match branch {
            Branch::Inner => self.psi_generic(x),
            Branch::Outer => self.phi_generic(x),
            Branch::Blend => {
                let rho = self.rho.generic(self.r_generic(x));
                Ok((T::cst(1.0) - rho) * self.psi_generic(x)? + rho * self.phi_generic(x)?)
            }
        }
    }

    pub fn psi(&self, x: &[f64]) -> Result<f64> {
        self.psi_generic(x)
    }

    pub fn phi(&self, x: &[f64]) -> Result<f64> {
        self.phi_generic(x)
    }

    pub fn phi_tilde(&self, x: &[f64]) -> Result<f64> {
        self.phi_tilde_generic(x, self.branch(x))
    }

    fn jet_of(&self, x: &[f64], which: u8) -> Result<Jet2> {
        let d = Dual2::vars(x);
        let v = match which {
            0 => self.psi_generic(&d)?,
            1 => self.phi_generic(&d)?,
            _ => self.phi_tilde_generic(&d, self.branch(x))?,
        };
        Ok(Jet2::from_dual(&v, x.len()))
    }

    pub fn psi_jet(&self, x: &[f64]) -> Result<Jet2> {
        self.jet_of(x, 0)
    }

    pub fn phi_jet(&self, x: &[f64]) -> Result<Jet2> {
        self.jet_of(x, 1)
    }

    pub fn phi_tilde_jet(&self, x: &[f64]) -> Result<Jet2> {
        self.jet_of(x, 2)
    }

    /// `eta = -d^c ell`, with `ell = -log|pi + eps|^2`.
    fn eta(&self, x: &[f64]) -> Result<DVector<f64>> {
        let d = Dual2::vars(x);
        let l = self.ell(&complexify(&d))?;
        let g = DVector::from_fn(x.len(), |i, _| l.grad(i));
        Ok(lambda_from_grad(&g, self.scene.dc_sign) * self.calibration.eta_sign)
    }

    /// `sum v_i du_i` as a covector.
    fn v_du(&self, x: &[f64]) -> DVector<f64> {
        let (_, v) = self.uv(x);
        &self.du[0] * v[0] + &self.du[1] * v[1]
    }

    /// `xi = eta - sum v_i du_i`.
    pub fn xi(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.eta(x)? - self.v_du(x))
    }

    /// `lambda_eps = -d^c phi_eps`.
    pub fn lambda(&self, x: &[f64]) -> Result<DVector<f64>> {
        let j = self.phi_jet(x)?;
        Ok(lambda_from_grad(&j.grad, self.scene.dc_sign))
    }

    /// `(lambda - xi)(x)`, the closed form whose primitive is `H`.
    pub fn difference(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.lambda(x)? - self.xi(x)?)
    }

    fn line_integral(&self, a: &[f64], b: &[f64], panels: usize) -> Result<f64> {
        let dir = dvec(b) - dvec(a);
        gauss_legendre(
            |s| {
                let y: Vec<f64> = a.iter().zip(b).map(|(p, q)| p + s * (q - p)).collect();
                Ok(self.difference(&y)?.dot(&dir))
            },
            panels,
        )
    }

    /// `H(x) = int_0^1 (lambda - xi)(s x) . x ds`, so `H(p) = 0`.
    pub fn h(&self, x: &[f64]) -> Result<f64> {
        if x.iter().all(|c| *c == 0.0) {
            return Ok(0.0);
        }
        self.line_integral(&vec![0.0; x.len()], x, self.gl_panels)
    }

    /// `H` along the broken path `0 -> m -> x` with `m` displaced off the segment.
    pub fn h_two_path(&self, x: &[f64]) -> Result<f64> {
        let xv = dvec(x);
        let side = j_apply(x) * 0.25;
        let m: Vec<f64> = (xv * 0.5 + side).iter().copied().collect();
        let zero = vec![0.0; x.len()];
        Ok(self.line_integral(&zero, &m, self.gl_panels)? + self.line_integral(&m, x, self.gl_panels)?)
    }

    fn d_rho(&self, x: &[f64]) -> DVector<f64> {
        let (u, v) = self.uv(x);
        let dr = &self.du[0] * (2.0 * u[0]) + &self.du[1] * (2.0 * u[1]) + &self.dv[0] * (2.0 * v[0]) + &self.dv[1] * (2.0 * v[1]);
        dr * self.rho.derivative(self.r(x))
    }

    /// `H d rho`.
    pub fn h_drho(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.d_rho(x) * self.h(x)?)
    }

    /// `lambda~ = (1 - rho) xi + rho lambda + H d rho`; the pure regions share
    /// the code path of `xi` and `lambda`.
    pub fn lambda_tilde(&self, x: &[f64]) -> Result<DVector<f64>> {
        match self.branch(x) {
            Branch::Inner => self.xi(x),
            Branch::Outer => self.lambda(x),
            Branch::Blend => {
                let rho = self.rho.value(self.r(x));
                Ok(self.xi(x)? * (1.0 - rho) + self.lambda(x)? * rho + self.h_drho(x)?)
            }
        }
    }

    /// Vector dual to a 1-form: `i_Z omega = alpha`.
    pub fn dual(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        omega_dual(&self.omega, alpha)
    }

    /// Runtime sign calibration and the normalization `psi(p) = phi(p)`.
    fn calibrate(&mut self, p: &ChartPoint) -> Result<()> {
        let x = self.from_uv([0.3 * self.eps0.sqrt(), 0.1 * self.eps0.sqrt()], [0.05 * self.eps0.sqrt(), -0.02 * self.eps0.sqrt()]);
        let d = Dual2::vars(&x);
        let q = self.half_v2(&d);
        let g = DVector::from_fn(x.len(), |i, _| q.grad(i));
        let a = lambda_from_grad(&g, self.scene.dc_sign);
        let b = -self.v_du(&x);
        let dot = a.dot(&b) / (a.norm() * b.norm());
        if (dot.abs() - 1.0).abs() > 1e-10 {
            return Err(LabError::FrameFailure("d^c of the quadratic term is not aligned with v du".into()));
        }
        self.calibration.quadratic_sign = dot.signum();
        // xi must be -d^c psi: eta is -d^c of +ell when the quadratic signs agree
        self.calibration.eta_sign = dot.signum();
        let x0 = &p.coords;
        self.calibration.psi_offset = 0.0;
        self.calibration.psi_offset = self.phi(x0)? - self.psi(x0)?;
        Ok(())
    }

    fn refine_primitive(&mut self) -> Result<()> {
        let probes = [
            self.from_uv([0.5 * self.eps0.sqrt(), 0.2 * self.eps0.sqrt()], [0.5 * self.delta, 0.1 * self.delta]),
            self.from_uv([-0.3 * self.eps0.sqrt(), 0.55 * self.eps0.sqrt()], [-0.3 * self.delta, 0.6 * self.delta]),
        ];
        let mut worst = 0.0;
        for panels in [1, 2, 4, 8] {
            self.gl_panels = panels;
            worst = 0.0f64;
            for x in &probes {
                worst = worst.max((self.h(x)? - self.h_two_path(x)?).abs());
            }
            if worst < PATH_TOL {
                return Ok(());
            }
        }
        Err(LabError::PathDependence(worst))
    }

    /// Liouville field of the glued structure.
    pub fn z_tilde(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.dual(&self.lambda_tilde(x)?)
    }

    /// Numeric exterior derivative of a smooth 1-form field (five-point stencil).
    pub fn exterior_derivative<F: Fn(&[f64]) -> Result<DVector<f64>>>(&self, alpha: F, x: &[f64]) -> Result<DMatrix<f64>> {
        exterior_derivative(alpha, x, FD_STEP_SMOOTH, true)
    }
}

/// Numeric exterior derivative of a 1-form field, by second-order central
/// differences or (with `fourth`) the five-point stencil.
pub fn exterior_derivative<F: Fn(&[f64]) -> Result<DVector<f64>>>(
    alpha: F,
    x: &[f64],
    step: f64,
    fourth: bool,
) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    let at = |k: usize, s: f64| {
        let mut y = x.to_vec();
        y[k] += s;
        alpha(&y)
    };
    for k in 0..n {
        let col = if fourth {
            (at(k, -2.0 * step)? - at(k, -step)? * 8.0 + at(k, step)? * 8.0 - at(k, 2.0 * step)?) / (12.0 * step)
        } else {
            (at(k, step)? - at(k, -step)?) / (2.0 * step)
        };
        jac.set_column(k, &col);
    }
    // (d alpha)_{ij} = d_i alpha_j - d_j alpha_i, with jac[(j, i)] = d_i alpha_j
    Ok(jac.transpose() - jac)
}

impl GluedStructure<'_> {

    /// Deterministic samples of `V_delta = {r < eps0, |v| < delta}`.
    pub fn samples(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rmax = self.eps0;
        let mut out = vec![];
        while out.len() < count {
            let u = [rng.gen_range(-1.0..1.0) * rmax.sqrt(), rng.gen_range(-1.0..1.0) * rmax.sqrt()];
            let v = [rng.gen_range(-1.0..1.0) * self.delta, rng.gen_range(-1.0..1.0) * self.delta];
            if v[0] * v[0] + v[1] * v[1] >= self.delta * self.delta {
                continue;
            }
            if u[0] * u[0] + u[1] * u[1] + v[0] * v[0] + v[1] * v[1] >= rmax {
                continue;
            }
            let x = self.from_uv(u, v);
            // reject anything within reach of the divisor pi = -eps
            match self.scene.sections_at(&self.point(&x)) {
                Ok((s0, h)) if (s0 / h + crate::jetcalc::C64::new(self.eps, 0.0)).abs() > 0.1 * self.eps => out.push(x),
                _ => {}
            }
        }
        out
    }

    /// Samples restricted to the cutoff annulus.
    pub fn annulus_samples(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![];
        while out.len() < count {
            let r = rng.gen_range(self.rho.lo()..self.rho.hi());
            let v2: f64 = rng.gen_range(0.0..(self.delta * self.delta).min(r));
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let b: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let (ru, rv) = ((r - v2).sqrt(), v2.sqrt());
            out.push(self.from_uv([ru * a.cos(), ru * a.sin()], [rv * b.cos(), rv * b.sin()]));
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Positivity {
    pub samples: usize,
    pub min_margin: f64,
    pub failures: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GluedReport {
    /// Largest deviation in the pure regions (exactly 0 when the identities hold).
    pub branch_inner: f64,
    pub branch_outer: f64,
    pub branch_phi: f64,
    pub branch_status: CheckStatus,
    pub dlambda_residual: f64,
    pub dlambda_status: CheckStatus,
    pub dxi_residual: f64,
    pub dxi_status: CheckStatus,
    /// Measured constant `C` and `max |H d rho|` on the annulus.
    pub c_constant: f64,
    pub h_drho_max: f64,
    pub h_drho_status: CheckStatus,
    pub path_discrepancy: f64,
    pub positivity: Positivity,
    pub positivity_status: CheckStatus,
    /// `(t, positivity)` for the interpolation family on the annulus.
    pub interpolation: Vec<(f64, Positivity)>,
    pub interpolation_status: CheckStatus,
    pub rho_max_slope: f64,
}

fn positivity(samples: &[(DVector<f64>, DVector<f64>)]) -> Positivity {
    let mut min: f64 = f64::INFINITY;
    let mut failures = 0;
    for (dphi, z) in samples {
        let m = margin_from(dphi, z);
        if !(m > 0.0) {
            failures += 1;
        }
        min = min.min(m);
    }
    Positivity {
        samples: samples.len(),
        min_margin: min,
        failures,
    }
}

/// The verification suite of the glued structure at deterministic samples.
pub fn verify_glued(gs: &GluedStructure, n_samples: usize, seed: u64) -> Result<GluedReport> {
    let pts = gs.samples(n_samples, seed);
    let (mut bi, mut bo, mut bp) = (0.0f64, 0.0f64, 0.0f64);
    let mut dl: f64 = 0.0;
    let mut dx: f64 = 0.0;
    let mut path: f64 = 0.0;
    let mut pos = vec![];
    let dl_count = pts.len().min(200);
    for (k, x) in pts.iter().enumerate() {
        let lt = gs.lambda_tilde(x)?;
        match gs.branch(x) {
            Branch::Inner => {
                bi = bi.max((&lt - gs.xi(x)?).amax());
                bp = bp.max((gs.phi_tilde(x)? - gs.psi(x)?).abs());
            }
            Branch::Outer => {
                bo = bo.max((&lt - gs.lambda(x)?).amax());
                bp = bp.max((gs.phi_tilde(x)? - gs.phi(x)?).abs());
            }
            Branch::Blend => {}
        }
        if k < dl_count {
            let d = exterior_derivative(|y| gs.lambda_tilde(y), x, FD_STEP, false)?;
            dl = dl.max((d - &gs.omega).amax());
            let d = gs.exterior_derivative(|y| gs.xi(y), x)?;
            dx = dx.max((d - &gs.omega).amax());
            path = path.max((gs.h(x)? - gs.h_two_path(x)?).abs());
        }
        if crate::scenes::euclid(x, &[0.0; 4]) > CORE_RADIUS {
            pos.push((gs.phi_tilde_jet(x)?.grad, gs.dual(&lt)?));
        }
    }
    // the constant C and the bound on H d rho, on the annulus
    let ann = gs.annulus_samples(n_samples.min(400), seed ^ 0x5a5a);
    let mut c: f64 = 0.0;
    let mut hd: f64 = 0.0;
    for x in &ann {
        let r = gs.r(x);
        let h = gs.h(x)?;
        let drho = gs.d_rho(x);
        c = c.max(h.abs() / r.sqrt()).max(gs.eps0 * drho.norm() / r.sqrt());
        hd = hd.max((drho * h).norm());
    }
    let posit = positivity(&pos);
    let mut interp = vec![];
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let mut rows = vec![];
        for x in &ann {
            let lam = gs.lambda(x)? * (1.0 - t) + gs.lambda_tilde(x)? * t;
            let dphi = gs.phi_jet(x)?.grad * (1.0 - t) + gs.phi_tilde_jet(x)?.grad * t;
            rows.push((dphi, gs.dual(&lam)?));
        }
        interp.push((t, positivity(&rows)));
    }
    let interpolation_ok = interp.iter().all(|(_, p)| p.failures == 0);
    Ok(GluedReport {
        branch_inner: bi,
        branch_outer: bo,
        branch_phi: bp,
        branch_status: CheckStatus::from_bool(bi == 0.0 && bo == 0.0 && bp == 0.0),
        dlambda_residual: dl,
        dlambda_status: CheckStatus::from_bool(dl < DLAMBDA_TOL),
        dxi_residual: dx,
        dxi_status: CheckStatus::from_bool(dx < DXI_TOL),
        c_constant: c,
        h_drho_max: hd,
        h_drho_status: CheckStatus::from_bool(hd <= c / 2.0),
        path_discrepancy: path,
        positivity_status: CheckStatus::from_bool(posit.failures == 0),
        positivity: posit,
        interpolation: interp,
        interpolation_status: CheckStatus::from_bool(interpolation_ok),
        rho_max_slope: gs.rho.max_slope(),
    })
}

/// `phi~` as a searchable field on `V_delta`.
pub struct GluedField<'a, 'b> {
    pub gs: &'a GluedStructure<'b>,
    /// Restricts the domain to `r < r_max`.
    pub r_max: f64,
}

impl CritField for GluedField<'_, '_> {
    fn dim(&self) -> usize {
        4
    }
    fn n_charts(&self) -> usize {
        1
    }
    fn jet(&self, p: &ChartPoint) -> Result<Jet2> {
        if p.chart != 0 || p.coords.len() != 4 {
            return Err(LabError::BadChart("glued field lives in chart 0".into()));
        }
        self.gs.phi_tilde_jet(&p.coords)
    }
    fn guard(&self, p: &ChartPoint) -> bool {
        self.gs.phi_tilde(&p.coords).map(|v| v.is_finite()).unwrap_or(false)
    }
    fn in_domain(&self, p: &ChartPoint) -> bool {
        let (_, v) = self.gs.uv(&p.coords);
        self.gs.r(&p.coords) < self.r_max && v[0] * v[0] + v[1] * v[1] < self.gs.delta * self.gs.delta
    }
    fn box_radius(&self) -> f64 {
        // |x|^2 = r / |omega scale|, bounded through the frame norms
        let s = self.gs.frame_u[0].norm().max(self.gs.frame_v[0].norm());
        s * (2.0 * self.r_max).sqrt()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct UnstableReport {
    pub critical_points: Vec<ChartPoint>,
    pub located: f64,
    pub unique_status: CheckStatus,
    pub tangency_residual: f64,
    pub tangency_status: CheckStatus,
    /// `min |d psi(Y)| / (|Y|^2 + |d psi|^2)` along the punctured thimble.
    pub delta: f64,
    pub sign: f64,
    pub sign_consistent: bool,
    pub sign_status: CheckStatus,
}

/// Uniqueness of the critical point, tangency of `Z~` to the thimble mesh,
/// and the sign-consistent margin of `(xi, psi)` along the thimble.
pub fn glued_unstable_check(gs: &GluedStructure, mesh: &ThimbleMesh, plan: &SeedPlan, r_max: Option<f64>) -> Result<UnstableReport> {
    let field = GluedField {
        gs,
        r_max: r_max.unwrap_or(gs.eps0),
    };
    let (crits, _) = find_critical_points_in(&field, gs.eps, plan)?;
    let pts: Vec<ChartPoint> = crits.iter().map(|c| c.point.clone()).collect();
    let located = pts
        .iter()
        .map(|p| p.coords.iter().map(|c| c * c).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let unique = pts.len() == 1 && located < LOCATE_TOL;

    let mut tang: f64 = 0.0;
    let nb = mesh.base_grid.len();
    let nt = mesh.transverse_grid.len();
    for b in 0..nb {
        for j in 0..nt {
            let Some(p) = &mesh.points[b][j] else { continue };
            let bn = if b + 1 < nb { b + 1 } else { b - 1 };
            let jn = (j + 1) % nt;
            let (Some(q1), Some(q2)) = (&mesh.points[bn][j], &mesh.points[b][jn]) else { continue };
            let t1 = dvec(&q1.coords) - dvec(&p.coords);
            let t2 = dvec(&q2.coords) - dvec(&p.coords);
            let tm = DMatrix::from_columns(&[t1, t2]);
            let z = gs.z_tilde(&p.coords)?;
            let Some(coef) = (tm.transpose() * &tm).lu().solve(&(tm.transpose() * &z)) else { continue };
            let zn = z.norm();
            if zn > 0.0 {
                tang = tang.max((&z - &tm * coef).norm() / zn);
            }
        }
    }

    let mut min_abs = f64::INFINITY;
    let mut pos = 0usize;
    let mut neg = 0usize;
    for (_, p) in mesh.all_points() {
        if p.coords.iter().all(|c| *c == 0.0) {
            continue;
        }
        let dpsi = gs.psi_jet(&p.coords)?.grad;
        let y = gs.dual(&gs.xi(&p.coords)?)?;
        let m = margin_from(&dpsi, &y);
        min_abs = min_abs.min(m.abs());
        if m > 0.0 {
            pos += 1;
        } else if m < 0.0 {
            neg += 1;
        }
    }
    let consistent = (pos == 0) != (neg == 0);
    Ok(UnstableReport {
        critical_points: pts,
        located,
        unique_status: CheckStatus::from_bool(unique),
        tangency_residual: tang,
        tangency_status: CheckStatus::from_bool(tang < TANGENCY_TOL),
        delta: min_abs,
        sign: if pos >= neg { 1.0 } else { -1.0 },
        sign_consistent: consistent,
        sign_status: CheckStatus::from_bool(consistent && min_abs > 0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes::{builtin_scene, SceneParams};

    #[test]
    fn cutoff_shape() {
        let c = Cutoff { eps0: 0.25 };
        assert_eq!(c.value(0.25 / 8.0), 0.0);
        assert_eq!(c.value(0.25), 1.0);
        let mut max: f64 = 0.0;
        for k in 0..=10000 {
            let r = c.lo() + (c.hi() - c.lo()) * k as f64 / 10000.0;
            max = max.max(c.derivative(r));
        }
        assert!((max - 7.5 / 0.25).abs() < 1e-6);
        assert!(max < 10.0 / 0.25);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let v = gauss_legendre(|s| Ok(s.powi(7) * 8.0), 1).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_local_scenes() {
        let s = builtin_scene("cpn_o2h", &SceneParams::with_n(2)).unwrap();
        assert!(matches!(
            build_glued(&s, &ChartPoint::new(2, vec![0.0; 4]), 0.25, 0.02),
            Err(LabError::NotLocalModel(_))
        ));
        let s = builtin_scene("local_nc", &SceneParams::with_n(2)).unwrap();
        assert!(build_glued(&s, &ChartPoint::new(0, vec![0.0; 4]), 0.25, 0.05).is_err());
    }

    #[test]
    fn primitive_vanishes_at_p_and_matches_closed_form() {
        let s = builtin_scene("local_nc", &SceneParams::with_n(2)).unwrap();
        let gs = build_glued(&s, &ChartPoint::new(0, vec![0.0; 4]), 0.25, 0.02).unwrap();
        assert_eq!(gs.h(&[0.0; 4]).unwrap(), 0.0);
        let x = gs.from_uv([0.2, -0.1], [0.03, 0.05]);
        let (u, v) = gs.uv(&x);
        let want = 0.5 * (u[0] * v[0] + u[1] * v[1]);
        assert!((gs.h(&x).unwrap() - want).abs() < 1e-12);
    }
}
