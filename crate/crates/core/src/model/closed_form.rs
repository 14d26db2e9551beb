//! Marginal likelihoods of Y available in closed form (or via a dedicated
//! one-dimensional rule) for models whose latent space is too large or too
//! degenerate for the generic tensor quadrature.

use nalgebra::DMatrix;

use super::{DataY, KroneckerPair, MarginalOverride, ParamXi};
use crate::dens;
use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;

/// Two shards of length n observed as `Y_i = X_i + N(0, I)` under the
/// sign-sharing law. Per coordinate
/// `p(y1, y2) = 2 N(y1; 0, 1+θ²) N(y2; 0, 1+θ²) [Φ(a y1)Φ(a y2) + Φ(−a y1)Φ(−a y2)]`
/// with `a = θ / sqrt(1 + θ²)`.
#[derive(Clone, Debug)]
pub struct SignSharingMarginal;

impl SignSharingMarginal {
    pub fn coord_ln(theta: f64, y1: f64, y2: f64) -> f64 {
        let v = 1.0 + theta * theta;
        let a = theta / v.sqrt();
        let same = dens::log_add_exp(
            dens::ln_std_normal_cdf(a * y1) + dens::ln_std_normal_cdf(a * y2),
            dens::ln_std_normal_cdf(-a * y1) + dens::ln_std_normal_cdf(-a * y2),
        );
        std::f64::consts::LN_2 + dens::normal_var_ln(y1, 0.0, v) + dens::normal_var_ln(y2, 0.0, v) + same
    }
}

impl MarginalOverride for SignSharingMarginal {
    fn log_marginal(&self, theta: &[f64], _: &ParamXi, y: &DataY, _: &QuadratureSpec) -> Result<f64> {
        if theta[0] <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(y.shards[0].iter().zip(&y.shards[1]).map(|(&a, &b)| Self::coord_ln(theta[0], a, b)).sum())
    }
}

/// `Y_ij ~ N(0, 1 + θ²)` independently: the centred-scale law observed
/// with unit Gaussian noise.
#[derive(Clone, Debug)]
pub struct CenteredScaleMarginal;

impl MarginalOverride for CenteredScaleMarginal {
    fn log_marginal(&self, theta: &[f64], _: &ParamXi, y: &DataY, _: &QuadratureSpec) -> Result<f64> {
        if theta[0] <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let v = 1.0 + theta[0] * theta[0];
        Ok(y.shards.iter().flatten().map(|&a| dens::normal_var_ln(a, 0.0, v)).sum())
    }
}

/// Latent Gaussian families whose marginal of `Y = A X + N(0, σ² I)` is
/// multivariate normal; A replicates each latent coordinate `reps` times.
#[derive(Clone, Debug)]
pub enum GaussianMarginal {
    Kronecker { d: usize },
    SharedComponent { reps: usize, sd: f64 },
}

impl GaussianMarginal {
    pub fn moments(&self, theta: &[f64], sizes: &[usize]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        match *self {
            GaussianMarginal::Kronecker { d } => {
                if sizes != [2 * d, 2 * d] {
                    return Err(Error::config("kronecker marginal needs two shards of size 2D"));
                }
                let (mean, cov) = KroneckerPair { d }.moments(theta);
                let n = mean.len();
                Ok((mean, cov + DMatrix::identity(n, n)))
            }
            GaussianMarginal::SharedComponent { reps, sd } => {
                // shard i: reps copies of X_i then reps copies of Z
                let n: usize = sizes.iter().sum();
                let mut owner = Vec::with_capacity(n);
                for (i, &m) in sizes.iter().enumerate() {
                    if m != 2 * reps {
                        return Err(Error::config("shared-component marginal needs 2·reps observations per shard"));
                    }
                    owner.extend(std::iter::repeat_n(Some(i), reps));
                    owner.extend(std::iter::repeat_n(None, reps));
                }
                let cov = DMatrix::from_fn(n, n, |a, b| {
                    let shared = if owner[a] == owner[b] { 1.0 } else { 0.0 };
                    shared + if a == b { sd * sd } else { 0.0 }
                });
                Ok((vec![theta[0]; n], cov))
            }
        }
    }
}

impl MarginalOverride for GaussianMarginal {
    fn log_marginal(&self, theta: &[f64], _: &ParamXi, y: &DataY, _: &QuadratureSpec) -> Result<f64> {
        let (mean, cov) = self.moments(theta, &y.shard_sizes())?;
        Ok(dens::mvn_ln(&y.flatten(), &mean, &cov))
    }
}

/// Shard-wise `log ∫ N(μ; θ, 1) Π_j Cauchy(y_ij; μ, 1) dμ`, which is the
/// marginal once the inverse-χ²₁ variances are integrated out.
///
/// The integrand is analytic within distance 1 of the real axis, so the
/// trapezoidal rule over `θ ± 20` converges geometrically as the step halves.
#[derive(Clone, Debug)]
pub struct CauchyShardMarginal;

const HALF_WIDTH: f64 = 20.0;
const FIRST_STEP: f64 = 0.4;
const HALVINGS: usize = 5;

impl CauchyShardMarginal {
    fn shard(theta: f64, y: &[f64], h: f64) -> f64 {
        let k = (HALF_WIDTH / h).ceil() as i64;
        let logs: Vec<f64> = (-k..=k)
            .map(|i| {
                let mu = theta + i as f64 * h;
                dens::normal_ln(mu, theta, 1.0) + y.iter().map(|&v| dens::cauchy_ln(v, mu, 1.0)).sum::<f64>()
            })
            .collect();
        dens::log_sum_exp(&logs) + h.ln()
    }
}

impl MarginalOverride for CauchyShardMarginal {
    fn log_marginal(&self, theta: &[f64], _: &ParamXi, y: &DataY, quad: &QuadratureSpec) -> Result<f64> {
        let mut total = 0.0;
        for s in &y.shards {
            let mut h = FIRST_STEP;
            let mut prev = Self::shard(theta[0], s, h);
            let mut done = false;
            for _ in 0..HALVINGS {
                h *= 0.5;
                let next = Self::shard(theta[0], s, h);
                let agree = ((next - prev).exp() - 1.0).abs() <= quad.rel_tol;
                prev = next;
                if agree {
                    done = true;
                    break;
                }
            }
            if !done {
                let coarse = Self::shard(theta[0], s, 2.0 * h);
                return Err(Error::Quadrature { coarse, fine: prev, nodes: (2.0 * HALF_WIDTH / h) as usize + 1 });
            }
            total += prev;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_sharing_coordinate_density_normalises() {
        // 2-D Riemann sum over [-12, 12]²
        let h = 0.02;
        let mut s = 0.0;
        for i in -600..=600 {
            for j in -600..=600 {
                s += SignSharingMarginal::coord_ln(1.3, i as f64 * h, j as f64 * h).exp() * h * h;
            }
        }
        assert!((s - 1.0).abs() < 1e-6, "{s}");
    }

    #[test]
    fn cauchy_marginal_matches_riemann_sum() {
        let y = [0.3, -1.0, 2.0];
        let got =
            CauchyShardMarginal.log_marginal(&[0.5], &ParamXi::none(1), &DataY::single(y.to_vec()), &QuadratureSpec::default()).unwrap();
        let h = 1e-3;
        let s: f64 = (-12_000..12_000)
            .map(|k| {
                let mu = 0.5 + k as f64 * h;
                (dens::normal_ln(mu, 0.5, 1.0) + y.iter().map(|&v| dens::cauchy_ln(v, mu, 1.0)).sum::<f64>()).exp() * h
            })
            .sum();
        assert!((got - s.ln()).abs() < 1e-8, "{got} vs {}", s.ln());
    }
}
