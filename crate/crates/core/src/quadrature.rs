//! Adaptive Gauss–Hermite quadrature for `log ∫ exp(g(x)) dx` over `R^d`.
//!
//! The rule is re-centred at the mode of `g` and scaled by the Cholesky factor
//! of the inverse negative Hessian there, so a Gaussian-shaped integrand is
//! integrated exactly at any node count. The node count per coordinate is
//! doubled until two successive estimates agree to `rel_tol`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dens::log_sum_exp;
use crate::deriv;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Starting node count for one-dimensional integrals.
    pub nodes: usize,
    pub rel_tol: f64,
    /// Largest one-dimensional node count tried before giving up.
    pub max_nodes: usize,
    /// Largest latent dimension handled by tensor-product rules.
    pub max_dim: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { nodes: 64, rel_tol: 1e-9, max_nodes: 256, max_dim: 4 }
    }
}

impl QuadratureSpec {
    /// (start, max) nodes per coordinate for a `dim`-dimensional tensor rule.
    fn schedule(&self, dim: usize) -> (usize, usize) {
        match dim {
            0 | 1 => (self.nodes, self.max_nodes),
            2 => ((self.nodes / 2).max(4), (self.max_nodes / 2).max(8)),
            3 => ((self.nodes / 4).max(4), (self.max_nodes / 8).max(8)),
            _ => ((self.nodes / 8).max(4), (self.max_nodes / 16).max(8)),
        }
    }
}

/// Nodes and log-weights for `∫ e^{-t²} f(t) dt`.
#[derive(Debug)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub log_weights: Vec<f64>,
}

pub fn hermite_rule(n: usize) -> Arc<HermiteRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<HermiteRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("hermite cache poisoned");
    guard.entry(n).or_insert_with(|| Arc::new(compute_rule(n))).clone()
}

// Golub–Welsch eigenvalues seed a Newton polish on the orthonormal Hermite
// recurrence; the weights come from the polished derivative, in log space,
// so tiny tail weights keep full relative accuracy.
fn compute_rule(n: usize) -> HermiteRule {
    assert!(n >= 1);
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let jacobi = DMatrix::from_fn(n, n, |i, j| if i + 1 == j || j + 1 == i { (i.max(j) as f64 / 2.0).sqrt() } else { 0.0 });
    let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    guesses.sort_by(|a, b| a.total_cmp(b));
    let nf = n as f64;
    let mut nodes = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for &z0 in &guesses {
        let mut z = z0;
        let mut pp = 1.0;
        for _ in 0..50 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes.push(z);
        log_weights.push(std::f64::consts::LN_2 - 2.0 * pp.abs().ln());
    }
    // exact symmetry
    for i in 0..n / 2 {
        let a = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -a;
        nodes[n - 1 - i] = a;
        let w = 0.5 * (log_weights[i] + log_weights[n - 1 - i]);
        log_weights[i] = w;
        log_weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    HermiteRule { nodes, log_weights }
}

/// Location and Cholesky scale used to map standard Hermite nodes onto an integrand.
#[derive(Clone, Debug)]
pub struct LaplaceFrame {
    pub center: Vec<f64>,
    pub scale: DMatrix<f64>,
}

fn fd_grad_hess(g: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    (deriv::gradient(g, x, 1e-4), deriv::hessian(g, x, 1e-4))
}

fn scale_from_hessian(hess: &DMatrix<f64>) -> DMatrix<f64> {
    let d = hess.nrows();
    let neg = -hess.clone();
    if neg.iter().all(|v| v.is_finite()) {
        if let Some(chol) = neg.clone().cholesky() {
            let cov = chol.inverse();
            if let Some(c) = cov.cholesky() {
                return c.l();
            }
        }
    }
    DMatrix::from_fn(d, d, |i, j| {
        if i != j {
            0.0
        } else {
            let c = -hess[(i, i)];
            if c.is_finite() && c > 0.0 {
                1.0 / c.sqrt()
            } else {
                1.0
            }
        }
    })
}

/// Locate the mode of `g` from the best of `starts` by damped Newton ascent.
pub fn laplace_frame(g: &dyn Fn(&[f64]) -> f64, starts: &[Vec<f64>]) -> Option<LaplaceFrame> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in starts {
        let v = g(s);
        if v.is_finite() && best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((s.clone(), v));
        }
    }
    let (mut x, mut fx) = best?;
    let d = x.len();
    for _ in 0..200 {
        let (grad, hess) = fd_grad_hess(g, &x);
        if grad.iter().any(|v| !v.is_finite()) {
            break;
        }
        let neg = -hess.clone();
        let step = match neg.cholesky() {
            Some(ch) if hess.iter().all(|v| v.is_finite()) => ch.solve(&grad),
            _ => &grad / grad.norm().max(1.0),
        };
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = (0..d).map(|k| x[k] + alpha * step[k]).collect();
            let fc = g(&cand);
            if fc.is_finite() && fc >= fx {
                let delta = alpha * step.norm();
                x = cand;
                fx = fc;
                moved = delta > 1e-12 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt());
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let hess = deriv::hessian(g, &x, 1e-4);
    Some(LaplaceFrame { scale: scale_from_hessian(&hess), center: x })
}

/// Result of one tensor-rule evaluation.
#[derive(Clone, Debug)]
pub struct LogIntegral {
    pub log_value: f64,
    /// Normalised first moment `∫ x e^g / ∫ e^g`.
    pub mean: Vec<f64>,
    pub nodes_per_dim: usize,
}

fn evaluate(g: &dyn Fn(&[f64]) -> f64, frame: &LaplaceFrame, n: usize) -> LogIntegral {
    let d = frame.center.len();
    let rule = hermite_rule(n);
    let total = n.pow(d as u32);
    let mut logs = Vec::with_capacity(total);
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    let sqrt2 = std::f64::consts::SQRT_2;
    for _ in 0..total {
        let t: Vec<f64> = idx.iter().map(|&k| rule.nodes[k]).collect();
        let mut x = frame.center.clone();
        for (r, xr) in x.iter_mut().enumerate() {
            for (c, tc) in t.iter().enumerate().take(r + 1) {
                *xr += sqrt2 * frame.scale[(r, c)] * tc;
            }
        }
        let lw: f64 = idx.iter().map(|&k| rule.log_weights[k]).sum::<f64>() + t.iter().map(|v| v * v).sum::<f64>();
        let v = g(&x);
        logs.push(if v.is_nan() { f64::NEG_INFINITY } else { lw + v });
        points.push(x);
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    let lse = log_sum_exp(&logs);
    let log_det: f64 = (0..d).map(|k| frame.scale[(k, k)].abs().ln()).sum();
    let mut mean = vec![0.0; d];
    if lse.is_finite() {
        for (x, l) in points.iter().zip(&logs) {
            let w = (l - lse).exp();
            for k in 0..d {
                mean[k] += w * x[k];
            }
        }
    }
    LogIntegral { log_value: lse + log_det + 0.5 * d as f64 * std::f64::consts::LN_2, mean, nodes_per_dim: n }
}

/// `log ∫ exp(g)`, refined until successive node counts agree.
pub fn log_integrate(g: &dyn Fn(&[f64]) -> f64, starts: &[Vec<f64>], spec: &QuadratureSpec) -> Result<f64> {
    integrate(g, starts, spec, false).map(|r| r.log_value)
}

/// Like [`log_integrate`], additionally converging the normalised first moment.
pub fn integrate(g: &dyn Fn(&[f64]) -> f64, starts: &[Vec<f64>], spec: &QuadratureSpec, with_mean: bool) -> Result<LogIntegral> {
    let dim = starts.first().map_or(0, |s| s.len());
    if dim == 0 {
        let v = g(&[]);
        return Ok(LogIntegral { log_value: v, mean: vec![], nodes_per_dim: 0 });
    }
    if dim > spec.max_dim {
        return Err(Error::config(format!("latent dimension {dim} exceeds quadrature limit {}", spec.max_dim)));
    }
    let Some(frame) = laplace_frame(g, starts) else {
        return Ok(LogIntegral { log_value: f64::NEG_INFINITY, mean: vec![f64::NAN; dim], nodes_per_dim: 0 });
    };
    let (mut n, n_max) = spec.schedule(dim);
    let mut prev = evaluate(g, &frame, n);
    while n < n_max {
        n *= 2;
        let next = evaluate(g, &frame, n);
        if agree(&prev, &next, &frame, spec.rel_tol, with_mean) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature { coarse: prev.log_value, fine: evaluate(g, &frame, n / 2).log_value, nodes: n })
}

fn agree(a: &LogIntegral, b: &LogIntegral, frame: &LaplaceFrame, tol: f64, with_mean: bool) -> bool {
    if a.log_value == f64::NEG_INFINITY && b.log_value == f64::NEG_INFINITY {
        return true;
    }
    if !(a.log_value.is_finite() && b.log_value.is_finite()) {
        return false;
    }
    if ((b.log_value - a.log_value).exp() - 1.0).abs() > tol {
        return false;
    }
    if with_mean {
        for k in 0..a.mean.len() {
            let scale = b.mean[k].abs().max(frame.scale[(k, k)].abs()).max(1e-300);
            if (a.mean[k] - b.mean[k]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dens::normal_ln;

    #[test]
    fn rule_moments() {
        for n in [1, 2, 7, 64, 128, 256] {
            let r = hermite_rule(n);
            let w: Vec<f64> = r.log_weights.iter().map(|l| l.exp()).collect();
            let m0: f64 = w.iter().sum();
            let m2: f64 = w.iter().zip(&r.nodes).map(|(w, x)| w * x * x).sum();
            assert!((m0 - std::f64::consts::PI.sqrt()).abs() < 1e-12, "n={n} m0={m0}");
            if n > 1 {
                assert!((m2 - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-11, "n={n}");
            }
        }
    }

    #[test]
    fn gaussian_convolution_matches_closed_form() {
        // ∫ N(1; x, 1) N(x; 0, 1) dx = N(1; 0, 2)
        let g = |x: &[f64]| normal_ln(1.0, x[0], 1.0) + normal_ln(x[0], 0.0, 1.0);
        let v = log_integrate(&g, &[vec![0.0]], &QuadratureSpec::default()).unwrap();
        assert!((v - (-1.515_512_124)).abs() < 1e-8, "{v}");
    }

    #[test]
    fn two_dim_correlated_gaussian_normalises() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0]);
        let g = |x: &[f64]| crate::dens::mvn_ln(x, &[0.5, -1.0], &cov);
        let r = integrate(&g, &[vec![0.0, 0.0]], &QuadratureSpec::default(), true).unwrap();
        assert!(r.log_value.abs() < 1e-10);
        assert!((r.mean[0] - 0.5).abs() < 1e-9 && (r.mean[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_integrand_gives_neg_infinity() {
        let g = |_: &[f64]| f64::NEG_INFINITY;
        assert_eq!(log_integrate(&g, &[vec![0.0]], &QuadratureSpec::default()).unwrap(), f64::NEG_INFINITY);
    }
}
