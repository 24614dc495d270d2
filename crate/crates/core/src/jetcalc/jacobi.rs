//! Cyclic Jacobi diagonalization for small dense symmetric matrices.

use nalgebra::DMatrix;

use crate::error::{LabError, Result};

const MAX_SWEEPS: usize = 64;
const OFF_TOL: f64 = 1e-12;
const SYM_TOL: f64 = 1e-9;

/// Ascending eigenvalues and the matching orthonormal eigenvectors (columns).
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub sweeps: usize,
}

impl Spectrum {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k).iter().copied().collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn off_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Diagonalizes a symmetric matrix by cyclic Jacobi rotations.
///
/// Iterates until the off-diagonal Frobenius norm drops below
/// `1e-12 * ||m||_F` or 64 sweeps have run. Rejects inputs whose asymmetry
/// exceeds `1e-9` relative to the largest entry.
pub fn jacobi_spectrum(m: &DMatrix<f64>) -> Result<Spectrum> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(LabError::NotSymmetric(f64::INFINITY));
    }
    let scale = m.amax();
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if scale > 0.0 && asym > SYM_TOL * scale {
        return Err(LabError::NotSymmetric(asym / scale));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(LabError::NotSymmetric(f64::NAN));
    }

    let mut a = (m + m.transpose()) * 0.5;
    let mut q = DMatrix::<f64>::identity(n, n);
    let target = OFF_TOL * a.norm();
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS && off_norm(&a) > target {
        sweeps += 1;
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = a[(p, r)];
                if apr == 0.0 {
                    continue;
                }
                let theta = (a[(r, r)] - a[(p, p)]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akr = a[(k, r)];
                    a[(k, p)] = c * akp - s * akr;
                    a[(k, r)] = s * akp + c * akr;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let ark = a[(r, k)];
                    a[(p, k)] = c * apk - s * ark;
                    a[(r, k)] = s * apk + c * ark;
                }
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkr = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkr;
                    q[(k, r)] = s * qkp + c * qkr;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| q[(r, order[c])]);
    Ok(Spectrum {
        values,
        vectors,
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_has_unit_spectrum() {
        let s = jacobi_spectrum(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(s.values, vec![1.0; 4]);
    }

    #[test]
    fn local_model_block_form() {
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 1.0;
        m[(0, 1)] = -10.0;
        m[(1, 0)] = -10.0;
        m[(2, 2)] = 1.0;
        m[(3, 3)] = 1.0;
        m[(2, 3)] = 10.0;
        m[(3, 2)] = 10.0;
        let s = jacobi_spectrum(&m).unwrap();
        let expect = [-9.0, -9.0, 11.0, 11.0];
        for (v, e) in s.values.iter().zip(expect) {
            assert!((v - e).abs() < 1e-12, "{v} vs {e}");
        }
    }

    #[test]
    fn random_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = DMatrix::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
        let m = &b + b.transpose();
        let s = jacobi_spectrum(&m).unwrap();
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.values.clone()));
        let rec = &s.vectors * lam * s.vectors.transpose();
        assert!((rec - &m).norm() < 1e-10 * m.norm());
        let qtq = s.vectors.transpose() * &s.vectors;
        assert!((qtq - DMatrix::identity(8, 8)).norm() < 1e-12);
        assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_asymmetric_input() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 2)] = 1e-3;
        assert!(matches!(jacobi_spectrum(&m), Err(LabError::NotSymmetric(_))));
    }

    #[test]
    fn agrees_with_nalgebra_symmetric_eigen() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let b = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-3.0..3.0));
            let m = &b * b.transpose() - DMatrix::identity(6, 6) * 4.0;
            let ours = jacobi_spectrum(&m).unwrap().values;
            let mut theirs: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            theirs.sort_by(f64::total_cmp);
            for (a, b) in ours.iter().zip(&theirs) {
                assert!((a - b).abs() < 1e-10 * m.norm());
            }
        }
    }
}
