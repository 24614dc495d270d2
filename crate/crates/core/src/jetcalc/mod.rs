//! Differential-geometry kernel: 2-jets of the potential by forward-mode AD,
//! and the symplectic data `lambda = -d^c phi`, `omega = d lambda` and the
//! Liouville field `Z` (defined by `i_Z omega = lambda`) built from them.
//!
//! Real chart coordinates are ordered `(x_1, y_1, ..., x_n, y_n)` and the
//! complex structure is the standard one, `J d/dx_j = d/dy_j`.
//!
//! With `lambda(v) = -sign * dphi(J v)` the 2-form is
//! `omega = -sign * (H J + J H)` in terms of the Hessian `H`; `sign` is
//! calibrated per scene so that `omega(v, J v) > 0`.

pub mod complex;
pub mod dual;
pub mod fd;
pub mod invariants;
pub mod jacobi;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::scenes::SceneSpec;
pub use complex::{complexify, Cx, C64};
pub use dual::{Dual2, Scalar, MAX_DIM};
pub use jacobi::{jacobi_spectrum, Spectrum};

/// Nondegeneracy floor for `|det omega|`.
pub const DEGENERACY_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: usize,
    pub coords: Vec<f64>,
}

impl ChartPoint {
    pub fn new(chart: usize, coords: Vec<f64>) -> Self {
        ChartPoint { chart, coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn complex(&self) -> Vec<C64> {
        complexify(&self.coords)
    }

    pub fn from_complex(chart: usize, z: &[C64]) -> Self {
        ChartPoint::new(chart, complex::realify(z))
    }

    pub fn offset(&self, v: &[f64], t: f64) -> ChartPoint {
        let coords = self.coords.iter().zip(v).map(|(a, b)| a + t * b).collect();
        ChartPoint::new(self.chart, coords)
    }
}

/// Value, gradient and symmetric Hessian of a scalar field at a point.
#[derive(Clone, Debug)]
pub struct Jet2 {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl Jet2 {
    pub fn from_dual(d: &Dual2, n: usize) -> Jet2 {
        Jet2 {
            value: d.v,
            grad: DVector::from_fn(n, |i, _| d.grad(i)),
            hess: DMatrix::from_fn(n, n, |i, j| d.hess(i, j)),
        }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }
}

/// Symplectic data of the Weinstein structure at one point.
#[derive(Clone, Debug)]
pub struct SymplecticSample {
    pub point: ChartPoint,
    pub lambda: DVector<f64>,
    pub omega: DMatrix<f64>,
    pub liouville: DVector<f64>,
    pub dphi: DVector<f64>,
    pub dc_sign: f64,
}

impl SymplecticSample {
    /// `|i_Z omega - lambda|`.
    pub fn liouville_residual(&self) -> f64 {
        (contract(&self.omega, &self.liouville) - &self.lambda).norm()
    }
}

/// Evaluates the 2-jet of `phi_eps` at `p` by forward-mode AD.
pub fn eval_jet2(scene: &SceneSpec, p: &ChartPoint, eps: f64) -> Result<Jet2> {
    scene.check_point(p)?;
    let vars = Dual2::vars(&p.coords);
    let z = complexify(&vars);
    let d = scene.phi(p.chart, &z, eps)?;
    Ok(Jet2::from_dual(&d, p.dim()))
}

/// Derivative-free evaluation of `phi_eps`.
pub fn phi_value(scene: &SceneSpec, p: &ChartPoint, eps: f64) -> Result<f64> {
    scene.check_point(p)?;
    let z = complexify(&p.coords);
    scene.phi(p.chart, &z, eps)
}

/// `J v` for the standard complex structure.
pub fn j_apply(v: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for k in 0..v.len() / 2 {
        out[2 * k] = -v[2 * k + 1];
        out[2 * k + 1] = v[2 * k];
    }
    out
}

pub fn j_matrix(dim: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(dim, dim);
    for k in 0..dim / 2 {
        j[(2 * k + 1, 2 * k)] = 1.0;
        j[(2 * k, 2 * k + 1)] = -1.0;
    }
    j
}

/// Covector `sign * J grad`, i.e. `v -> -sign * dphi(J v)`.
pub fn lambda_from_grad(grad: &DVector<f64>, sign: f64) -> DVector<f64> {
    j_apply(grad.as_slice()) * sign
}

/// `omega = d lambda = -sign * (H J + J H)`.
pub fn omega_from_hess(hess: &DMatrix<f64>, sign: f64) -> DMatrix<f64> {
    let j = j_matrix(hess.nrows());
    -(hess * &j + &j * hess) * sign
}

/// `i_Z omega` as a covector.
pub fn contract(omega: &DMatrix<f64>, z: &DVector<f64>) -> DVector<f64> {
    omega.transpose() * z
}

/// Solves `i_Z omega = alpha` for the vector `Z`.
pub fn omega_dual(omega: &DMatrix<f64>, alpha: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = omega.transpose().lu();
    let det = lu.determinant();
    if !(det.abs() > DEGENERACY_FLOOR) {
        return Err(LabError::Degenerate(det.abs()));
    }
    lu.solve(alpha).ok_or(LabError::Degenerate(det.abs()))
}

/// Smallest `omega(e_k, J e_k)` over the coordinate basis.
pub fn kahler_positivity(omega: &DMatrix<f64>) -> f64 {
    let n = omega.nrows();
    let mut min = f64::INFINITY;
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        let je = j_apply(&e);
        let val = (omega.row(k) * je)[0];
        min = min.min(val);
    }
    min
}

pub fn symplectic_from_jet(scene: &SceneSpec, p: &ChartPoint, jet: &Jet2) -> Result<SymplecticSample> {
    let sign = scene.dc_sign;
    let lambda = lambda_from_grad(&jet.grad, sign);
    let omega = omega_from_hess(&jet.hess, sign);
    let liouville = omega_dual(&omega, &lambda)?;
    Ok(SymplecticSample {
        point: p.clone(),
        lambda,
        omega,
        liouville,
        dphi: jet.grad.clone(),
        dc_sign: sign,
    })
}

/// Assembles `lambda`, `omega` and `Z` at `p`.
pub fn symplectic_sample(scene: &SceneSpec, p: &ChartPoint, eps: f64) -> Result<SymplecticSample> {
    let jet = eval_jet2(scene, p, eps)?;
    symplectic_from_jet(scene, p, &jet)
}

/// `dphi(Z) / (|Z|^2 + |dphi|^2)`, and exactly 0 when both vanish.
pub fn margin_from(dphi: &DVector<f64>, z: &DVector<f64>) -> f64 {
    let denom = z.norm_squared() + dphi.norm_squared();
    if denom == 0.0 {
        0.0
    } else {
        dphi.dot(z) / denom
    }
}

/// Gradient-like margin of the Liouville field for `phi_eps` at `p`.
pub fn gradient_like_margin(scene: &SceneSpec, p: &ChartPoint, eps: f64) -> Result<f64> {
    let jet = eval_jet2(scene, p, eps)?;
    if jet.grad.iter().all(|g| *g == 0.0) {
        return Ok(0.0);
    }
    let s = symplectic_from_jet(scene, p, &jet)?;
    Ok(margin_from(&s.dphi, &s.liouville))
}

/// Spectrum and Morse index of a Hessian, with the relative degeneracy threshold `tau`.
pub fn morse_counts(values: &[f64], tau: f64) -> (usize, usize, usize) {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let thr = tau * scale;
    let neg = values.iter().filter(|v| **v < -thr).count();
    let null = values.iter().filter(|v| v.abs() <= thr).count();
    (neg, null, values.len() - neg - null)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes::{builtin_scene, SceneParams};

    fn local2() -> SceneSpec {
        builtin_scene("local_nc", &SceneParams::with_n(2)).unwrap()
    }

    #[test]
    fn local_origin_spectrum_eps_one() {
        let s = local2();
        let jet = eval_jet2(&s, &ChartPoint::new(0, vec![0.0; 4]), 1.0).unwrap();
        assert!(jet.grad.norm() == 0.0);
        let spec = jacobi_spectrum(&jet.hess).unwrap();
        for (v, e) in spec.values.iter().zip([0.0, 0.0, 4.0, 4.0]) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn local_origin_spectrum_eps_tenth() {
        let s = local2();
        let jet = eval_jet2(&s, &ChartPoint::new(0, vec![0.0; 4]), 0.1).unwrap();
        let spec = jacobi_spectrum(&jet.hess).unwrap();
        for (v, e) in spec.values.iter().zip([-18.0, -18.0, 22.0, 22.0]) {
            assert!((v - e).abs() < 1e-10, "{v} vs {e}");
        }
        assert_eq!(morse_counts(&spec.values, 1e-5), (2, 0, 2));
    }

    #[test]
    fn value_matches_derivative_free_path() {
        let s = local2();
        let p = ChartPoint::new(0, vec![0.1, -0.2, 0.3, 0.05]);
        let a = eval_jet2(&s, &p, 0.1).unwrap().value;
        let b = phi_value(&s, &p, 0.1).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn flat_model_lambda_omega_liouville() {
        // phi = |z|^2 in one complex variable
        let grad = DVector::from_vec(vec![2.0, 0.0]);
        let hess = DMatrix::identity(2, 2) * 2.0;
        let lambda = lambda_from_grad(&grad, 1.0);
        assert_eq!(lambda.as_slice(), &[0.0, 2.0]);
        let omega = omega_from_hess(&hess, 1.0);
        assert_eq!(omega[(0, 1)], 4.0);
        assert_eq!(omega[(1, 0)], -4.0);
        let z = omega_dual(&omega, &lambda).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-15 && z[1].abs() < 1e-15);
        let m = margin_from(&grad, &z);
        assert!((m - 1.0 / 4.25).abs() < 1e-15);
        assert!(kahler_positivity(&omega) > 0.0);
    }

    #[test]
    fn margin_is_zero_at_critical_point() {
        let s = local2();
        let m = gradient_like_margin(&s, &ChartPoint::new(0, vec![0.0; 4]), 0.1).unwrap();
        assert_eq!(m, 0.0);
    }

    #[test]
    fn on_divisor_is_an_error() {
        let s = local2();
        // z0 z1 = -eps with z0 = 1, z1 = -0.1
        let p = ChartPoint::new(0, vec![1.0, 0.0, -0.1, 0.0]);
        assert!(matches!(eval_jet2(&s, &p, 0.1), Err(LabError::OnDivisor(_))));
    }

    #[test]
    fn bad_chart_is_an_error() {
        let s = local2();
        assert!(matches!(
            eval_jet2(&s, &ChartPoint::new(3, vec![0.0; 4]), 0.1),
            Err(LabError::BadChart(_))
        ));
        assert!(matches!(
            eval_jet2(&s, &ChartPoint::new(0, vec![0.0; 3]), 0.1),
            Err(LabError::BadChart(_))
        ));
    }
}
