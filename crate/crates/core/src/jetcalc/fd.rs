//! Central finite differences, kept as an independent oracle for the AD path.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn gradient<F>(f: F, x: &[f64], h: f64) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut g = DVector::zeros(x.len());
    let mut y = x.to_vec();
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let fp = f(&y)?;
        y[i] = x[i] - h;
        let fm = f(&y)?;
        y[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Central-difference Hessian of `f` at `x` with step `h`.
pub fn hessian<F>(f: F, x: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = x.len();
    let mut m = DMatrix::zeros(n, n);
    let f0 = f(x)?;
    let mut y = x.to_vec();
    for i in 0..n {
        y[i] = x[i] + h;
        let fp = f(&y)?;
        y[i] = x[i] - h;
        let fm = f(&y)?;
        y[i] = x[i];
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let mut s = 0.0;
            for (di, dj, sg) in [(h, h, 1.0), (h, -h, -1.0), (-h, h, -1.0), (-h, -h, 1.0)] {
                y[i] = x[i] + di;
                y[j] = x[j] + dj;
                s += sg * f(&y)?;
            }
            y[i] = x[i];
            y[j] = x[j];
            m[(i, j)] = s / (4.0 * h * h);
            m[(j, i)] = m[(i, j)];
        }
    }
    Ok(m)
}

/// Central-difference Jacobian of a vector map.
pub fn jacobian<F>(f: F, x: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let mut y = x.to_vec();
    let mut cols = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let fp = f(&y)?;
        y[i] = x[i] - h;
        let fm = f(&y)?;
        y[i] = x[i];
        cols.push((fp - fm) / (2.0 * h));
    }
    Ok(DMatrix::from_columns(&cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let f = |x: &[f64]| Ok(x[0] * x[0] + 3.0 * x[0] * x[1] - x[1] * x[1]);
        let h = hessian(f, &[0.3, -0.2], 1e-3).unwrap();
        assert!((h[(0, 0)] - 2.0).abs() < 1e-8);
        assert!((h[(0, 1)] - 3.0).abs() < 1e-8);
        assert!((h[(1, 1)] + 2.0).abs() < 1e-8);
        let g = gradient(f, &[0.3, -0.2], 1e-4).unwrap();
        assert!((g[0] - (0.6 - 0.6)).abs() < 1e-8);
    }
}
