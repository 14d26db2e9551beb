//! Scalar log densities and small numeric helpers shared by the model families.

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_ln(x: f64, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 || !sd.is_finite() {
        return f64::NEG_INFINITY;
    }
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

pub fn normal_var_ln(x: f64, mean: f64, var: f64) -> f64 {
    if var <= 0.0 || !var.is_finite() {
        return f64::NEG_INFINITY;
    }
    normal_ln(x, mean, var.sqrt())
}

/// Standard normal CDF, accurate in the far tails.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn ln_std_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        std_normal_cdf(x).ln()
    } else {
        // Mills-ratio asymptote
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - LN_SQRT_2PI + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

pub fn cauchy_ln(x: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    -(std::f64::consts::PI * scale).ln() - (z * z).ln_1p()
}

pub fn student_t_ln(x: f64, loc: f64, scale: f64, nu: f64) -> f64 {
    let z = (x - loc) / scale;
    ln_gamma((nu + 1.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - scale.ln()
        - (nu + 1.0) / 2.0 * (z * z / nu).ln_1p()
}

pub fn laplace_ln(x: f64, loc: f64, scale: f64) -> f64 {
    -(x - loc).abs() / scale - (2.0 * scale).ln()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Multivariate normal log density; `-inf` if the covariance is not positive definite.
pub fn mvn_ln(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> f64 {
    let n = x.len();
    let Some(chol) = cov.clone().cholesky() else {
        return f64::NEG_INFINITY;
    };
    let d = DVector::from_iterator(n, x.iter().zip(mean).map(|(a, b)| a - b));
    let z = chol.l().solve_lower_triangular(&d).expect("triangular solve");
    let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    -0.5 * z.norm_squared() - 0.5 * log_det - n as f64 * LN_SQRT_2PI
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
