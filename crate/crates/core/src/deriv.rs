//! Central finite differences.

use nalgebra::{DMatrix, DVector};

fn steps(x: &[f64], rel: f64) -> Vec<f64> {
    x.iter().map(|v| rel * v.abs().max(1.0)).collect()
}

/// Central-difference gradient with step `rel · max(1, |x_k|)`.
pub fn gradient(g: &dyn Fn(&[f64]) -> f64, x: &[f64], rel: f64) -> DVector<f64> {
    let h = steps(x, rel);
    let mut xp = x.to_vec();
    DVector::from_fn(x.len(), |i, _| {
        xp[i] = x[i] + h[i];
        let fp = g(&xp);
        xp[i] = x[i] - h[i];
        let fm = g(&xp);
        xp[i] = x[i];
        (fp - fm) / (2.0 * h[i])
    })
}

/// Central-difference Hessian, symmetrised.
pub fn hessian(g: &dyn Fn(&[f64]) -> f64, x: &[f64], rel: f64) -> DMatrix<f64> {
    hessian_with(g, x, &steps(x, rel))
}

fn hessian_with(g: &dyn Fn(&[f64]) -> f64, x: &[f64], h: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let f0 = g(x);
    let mut hess = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    for i in 0..d {
        xp[i] = x[i] + h[i];
        let fp = g(&xp);
        xp[i] = x[i] - h[i];
        let fm = g(&xp);
        xp[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut e = |si: f64, sj: f64| {
                xp[i] = x[i] + si * h[i];
                xp[j] = x[j] + sj * h[j];
                let v = g(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Hessian with one level of Richardson extrapolation: `(4 H(h/2) − H(h)) / 3`.
pub fn hessian_richardson(g: &dyn Fn(&[f64]) -> f64, x: &[f64], rel: f64) -> DMatrix<f64> {
    let h = steps(x, rel);
    let half: Vec<f64> = h.iter().map(|v| v / 2.0).collect();
    (hessian_with(g, x, &half) * 4.0 - hessian_with(g, x, &h)) / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_derivatives() {
        let g = |x: &[f64]| -(x[0] - 1.0).powi(2) - 3.0 * x[0] * x[1] - 2.0 * x[1] * x[1] + x[1].powi(3);
        let x = [0.5, -0.25];
        let gr = gradient(&g, &x, 1e-6);
        assert!((gr[0] - (1.0 + 0.75)).abs() < 1e-8);
        assert!((gr[1] - (-1.5 + 1.0 + 3.0 * 0.0625)).abs() < 1e-8);
        let h = hessian_richardson(&g, &x, 1e-4);
        assert!((h[(0, 0)] + 2.0).abs() < 1e-6);
        assert!((h[(0, 1)] + 3.0).abs() < 1e-6);
        assert!((h[(1, 1)] - (-4.0 + 6.0 * -0.25)).abs() < 1e-6);
    }
}
