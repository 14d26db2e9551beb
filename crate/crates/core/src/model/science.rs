//! Built-in scientific laws `p(X | θ)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT as TDist};

use super::{LatentX, ScientificModel};
use crate::dens;
use crate::error::{Error, Result};
use crate::rng::SimRng;

fn std_normal(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

fn constant(theta: f64, dims: &[usize]) -> LatentX {
    LatentX { shards: dims.iter().map(|&d| vec![theta; d]).collect() }
}

fn map_latent(dims: &[usize], mut f: impl FnMut(usize, usize) -> f64) -> LatentX {
    LatentX { shards: dims.iter().enumerate().map(|(i, &d)| (0..d).map(|k| f(i, k)).collect()).collect() }
}

/// Every latent coordinate iid `N(θ, τ²)`; `τ = 0` pins X to θ.
#[derive(Clone, Debug)]
pub struct NormalIid {
    pub tau: f64,
}

impl ScientificModel for NormalIid {
    fn id(&self) -> &str {
        "normal_iid"
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &LatentX, theta: &[f64]) -> f64 {
        x.shards.iter().enumerate().map(|(i, s)| self.shard_log_density(i, s, theta)).sum()
    }
    fn sample(&self, theta: &[f64], dims: &[usize], rng: &mut SimRng) -> LatentX {
        map_latent(dims, |_, _| theta[0] + self.tau * std_normal(rng))
    }
    fn factored(&self) -> bool {
        true
    }
    fn shard_log_density(&self, _: usize, x: &[f64], theta: &[f64]) -> f64 {
        if self.tau == 0.0 {
            return if x.iter().all(|&v| v == theta[0]) { 0.0 } else { f64::NEG_INFINITY };
        }
        x.iter().map(|&v| dens::normal_ln(v, theta[0], self.tau)).sum()
    }
    fn point_mass(&self, theta: &[f64], dims: &[usize]) -> Option<LatentX> {
        (self.tau == 0.0).then(|| constant(theta[0], dims))
    }
    fn center(&self, theta: &[f64], dims: &[usize]) -> LatentX {
        constant(theta[0], dims)
    }
}

/// Two-component mixture `½N(θ−δ, s²) + ½N(θ+δ, s²)` per coordinate.
#[derive(Clone, Debug)]
pub struct NormalMixture {
    pub delta: f64,
    pub sd: f64,
}

impl NormalMixture {
    pub fn coord_ln(&self, v: f64, theta: f64) -> f64 {
        dens::log_add_exp(dens::normal_ln(v, theta - self.delta, self.sd), dens::normal_ln(v, theta + self.delta, self.sd))
            - std::f64::consts::LN_2
    }
}

impl ScientificModel for NormalMixture {
    fn id(&self) -> &str {
        "normal_mixture"
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &LatentX, theta: &[f64]) -> f64 {
        x.shards.iter().enumerate().map(|(i, s)| self.shard_log_density(i, s, theta)).sum()
    }
    fn sample(&self, theta: &[f64], dims: &[usize], rng: &mut SimRng) -> LatentX {
        map_latent(dims, |_, _| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            theta[0] + sign * self.delta + self.sd * std_normal(rng)
        })
    }
    fn factored(&self) -> bool {
        true
    }
    fn shard_log_density(&self, _: usize, x: &[f64], theta: &[f64]) -> f64 {
        x.iter().map(|&v| self.coord_ln(v, theta[0])).sum()
    }
    fn center(&self, theta: &[f64], dims: &[usize]) -> LatentX {
        constant(theta[0], dims)
    }
}

/// `θ + s·t_ν` per coordinate.
#[derive(Clone, Debug)]
pub struct StudentT {
    pub nu: f64,
    pub scale: f64,
}

impl ScientificModel for StudentT {
    fn id(&self) -> &str {
        "student_t"
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &LatentX, theta: &[f64]) -> f64 {
        x.shards.iter().enumerate().map(|(i, s)| self.shard_log_density(i, s, theta)).sum()
    }
    fn sample(&self, theta: &[f64], dims: &[usize], rng: &mut SimRng) -> LatentX {
        let t = TDist::new(self.nu).expect("ν > 0");
        map_latent(dims, |_, _| theta[0] + self.scale * t.sample(rng))
    }
    fn factored(&self) -> bool {
        true
    }
    fn shard_log_density(&self, _: usize, x: &[f64], theta: &[f64]) -> f64 {
        x.iter().map(|&v| dens::student_t_ln(v, theta[0], self.scale, self.nu)).sum()
    }
    fn center(&self, theta: &[f64], dims: &[usize]) -> LatentX {
        constant(theta[0], dims)
    }
}

/// Laplace location family with fixed scale.
#[derive(Clone, Debug)]
pub struct LaplaceIid {
    pub scale: f64,
}

impl ScientificModel for LaplaceIid {
    fn id(&self) -> &str {
        "laplace_iid"
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &LatentX, theta: &[f64]) -> f64 {
        x.shards.iter().enumerate().map(|(i, s)| self.shard_log_density(i, s, theta)).sum()
    }
    fn sample(&self, theta: &[f64], dims: &[usize], rng: &mut SimRng) -> LatentX {
        map_latent(dims, |_, _| {
            let u: f64 = rng.gen_range(-0.5..0.5);
            theta[0] - self.scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
        })
    }
    fn factored(&self) -> bool {
        true
    }
    fn shard_log_density(&self, _: usize, x: &[f64], theta: &[f64]) -> f64 {
        x.iter().map(|&v| dens::laplace_ln(v, theta[0], self.scale)).sum()
    }
    fn center(&self, theta: &[f64], dims: &[usize]) -> LatentX {
        constant(theta[0], dims)
    }
}

/// All latent coordinates jointly `N(θ·1, I + ωJ)`; couples the shards.
#[derive(Clone, Debug)]
pub struct ExchangeableNormal {
    pub omega: f64,
}

impl ScientificModel for ExchangeableNormal {
    fn id(&self) -> &str {
        "exchangeable_normal"
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &LatentX, theta: &[f64]) -> f64 {
        let n = x.shards.iter().map(Vec::len).sum::<usize>() as f64;
        let (mut ss, mut s) = (0.0, 0.0);
        for v in x.shards.iter().flatten() {
            let d = v - theta[0];
            ss += d * d;
            s += d;
        }
        let q = ss - self.omega * s * s / (1.0 + n * self.omega);
        -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + (1.0 + n * self.omega).ln() + q)
    }
    fn sample(&self, theta: &[f64], dims: &[usize], rng: &mut SimRng) -> LatentX {
        let common = self.omega.sqrt() * std_normal(rng);
        map_latent(dims, |_, _| theta[0] + common + std_normal(rng))
    }
    fn center(&self, theta: &[f64], dims: &[usize]) -> LatentX {
        constant(theta[0], dims)
    }
}

/// Two shards of equal length n: `X_1 = θZ_1` and `X_2 = θ|Z_2|∘sign(X_1)`.
/// Requires θ > 0.
#[derive(Clone, Debug)]
pub struct SignSharing;

impl ScientificModel for SignSharing {
    fn id(&self) -> &str {
        "sign_sharing"
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn check_latent_dims(&self, dims: &[usize]) -> Result<()> {
        if dims.len() != 2 || dims[0] != dims[1] {
            return Err(Error::config("sign-sharing model needs exactly two shards of equal size"));
        }
        Ok(())
    }
    fn log_density(&self, x: &LatentX, theta: &[f64]) -> f64 {
        let t = theta[0];
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let mut total = 0.0;
        for (&a, &b) in x.shards[0].iter().zip(&x.shards[1]) {
            if a.signum() != b.signum() || (a == 0.0) != (b == 0.0) {
                return f64::NEG_INFINITY;
            }
            total += dens::normal_ln(a, 0.0, t) + dens::normal_ln(b, 0.0, t) + std::f64::consts::LN_2;
        }
        total
    }
    fn sample(&self, theta: &[f64], dims: &[usize], rng: &mut SimRng) -> LatentX {
        let t = theta[0];
        let x1: Vec<f64> = (0..dims[0]).map(|_| t * std_normal(rng)).collect();
        let x2 = x1.iter().map(|&a| t * std_normal(rng).abs() * sign(a)).collect();
        LatentX { shards: vec![x1, x2] }
    }
    fn center(&self, _theta: &[f64], dims: &[usize]) -> LatentX {
        constant(0.0, dims)
    }
}

/// Every latent coordinate iid `N(0, θ²)`, θ > 0.
#[derive(Clone, Debug)]
pub struct CenteredScale;

impl ScientificModel for CenteredScale {
    fn id(&self) -> &str {
        "centered_scale"
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &LatentX, theta: &[f64]) -> f64 {
        x.shards.iter().enumerate().map(|(i, s)| self.shard_log_density(i, s, theta)).sum()
    }
    fn sample(&self, theta: &[f64], dims: &[usize], rng: &mut SimRng) -> LatentX {
        map_latent(dims, |_, _| theta[0] * std_normal(rng))
    }
    fn factored(&self) -> bool {
        true
    }
    fn shard_log_density(&self, _: usize, x: &[f64], theta: &[f64]) -> f64 {
        if theta[0] <= 0.0 {
            return f64::NEG_INFINITY;
        }
        x.iter().map(|&v| dens::normal_ln(v, 0.0, theta[0])).sum()
    }
    fn center(&self, _theta: &[f64], dims: &[usize]) -> LatentX {
        constant(0.0, dims)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(X_1, X_2) ~ N_{4D}(θ_1·1, M(θ_2) ⊗ I_D)` where `M` is the 4×4 identity
/// with `M[0][3] = M[3][0] = θ_2`. Shard i holds `(X_i1, X_i2)`, each of length D.
#[derive(Clone, Debug)]
pub struct KroneckerPair {
    pub d: usize,
}

impl KroneckerPair {
    /// Mean and covariance of the flattened latent vector.
    pub fn moments(&self, theta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let n = 4 * self.d;
        let mut cov = DMatrix::identity(n, n);
        for j in 0..self.d {
            cov[(j, 3 * self.d + j)] = theta[1];
            cov[(3 * self.d + j, j)] = theta[1];
        }
        (vec![theta[0]; n], cov)
    }
}

impl ScientificModel for KroneckerPair {
    fn id(&self) -> &str {
        "kronecker_pair"
    }
    fn theta_dim(&self) -> usize {
        2
    }
    fn check_latent_dims(&self, dims: &[usize]) -> Result<()> {
        if dims != [2 * self.d, 2 * self.d] {
            return Err(Error::config(format!("kronecker model needs two shards of latent size {}", 2 * self.d)));
        }
        Ok(())
    }
    fn log_density(&self, x: &LatentX, theta: &[f64]) -> f64 {
        if theta[1].abs() >= 1.0 {
            return f64::NEG_INFINITY;
        }
        let (mean, cov) = self.moments(theta);
        dens::mvn_ln(&x.flatten(), &mean, &cov)
    }
    fn sample(&self, theta: &[f64], dims: &[usize], rng: &mut SimRng) -> LatentX {
        let d = self.d;
        let rho = theta[1];
        let mut flat = vec![0.0; 4 * d];
        for j in 0..d {
            let (z1, z2) = (std_normal(rng), std_normal(rng));
            flat[j] = z1;
            flat[3 * d + j] = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
        }
        for v in &mut flat[d..3 * d] {
            *v = std_normal(rng);
        }
        for v in &mut flat {
            *v += theta[0];
        }
        LatentX::from_flat(dims, &flat)
    }
    fn center(&self, theta: &[f64], dims: &[usize]) -> LatentX {
        constant(theta[0], dims)
    }
}

/// Shard i holds `(X_i, Z_i)` with `X_i ~ N(θ, 1)` independent and a single
/// common `Z ~ N(θ, 1)` copied into every shard.
#[derive(Clone, Debug)]
pub struct SharedComponent;

impl ScientificModel for SharedComponent {
    fn id(&self) -> &str {
        "shared_component"
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn check_latent_dims(&self, dims: &[usize]) -> Result<()> {
        if dims.iter().any(|&d| d != 2) {
            return Err(Error::config("shared-component model needs latent (X_i, Z_i) per shard"));
        }
        Ok(())
    }
    fn log_density(&self, x: &LatentX, theta: &[f64]) -> f64 {
        let z = x.shards[0][1];
        if x.shards.iter().any(|s| s[1] != z) {
            return f64::NEG_INFINITY;
        }
        x.shards.iter().map(|s| dens::normal_ln(s[0], theta[0], 1.0)).sum::<f64>() + dens::normal_ln(z, theta[0], 1.0)
    }
    fn sample(&self, theta: &[f64], dims: &[usize], rng: &mut SimRng) -> LatentX {
        let z = theta[0] + std_normal(rng);
        LatentX { shards: dims.iter().map(|_| vec![theta[0] + std_normal(rng), z]).collect() }
    }
    fn center(&self, theta: &[f64], dims: &[usize]) -> LatentX {
        constant(theta[0], dims)
    }
}

/// Shard latent `(μ_i, v_i1, …, v_im)` with `μ_i ~ N(θ, 1)` and each
/// `v_ij ~ 1/χ²_1`.
#[derive(Clone, Debug)]
pub struct RandomVariance;

/// Log density of the inverse chi-square with one degree of freedom.
pub fn inv_chi2_1_ln(v: f64) -> f64 {
    if v <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -0.5 * (2.0 * std::f64::consts::PI).ln() - 1.5 * v.ln() - 0.5 / v
}

impl ScientificModel for RandomVariance {
    fn id(&self) -> &str {
        "random_variance"
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn check_latent_dims(&self, dims: &[usize]) -> Result<()> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::config("random-variance model needs latent (μ_i, v_i1..v_im) per shard"));
        }
        Ok(())
    }
    fn log_density(&self, x: &LatentX, theta: &[f64]) -> f64 {
        x.shards.iter().enumerate().map(|(i, s)| self.shard_log_density(i, s, theta)).sum()
    }
    fn sample(&self, theta: &[f64], dims: &[usize], rng: &mut SimRng) -> LatentX {
        map_latent(dims, |_, k| {
            if k == 0 {
                theta[0] + std_normal(rng)
            } else {
                let z = std_normal(rng);
                1.0 / (z * z)
            }
        })
    }
    fn factored(&self) -> bool {
        true
    }
    fn shard_log_density(&self, _: usize, x: &[f64], theta: &[f64]) -> f64 {
        dens::normal_ln(x[0], theta[0], 1.0) + x[1..].iter().map(|&v| inv_chi2_1_ln(v)).sum::<f64>()
    }
    fn center(&self, theta: &[f64], dims: &[usize]) -> LatentX {
        map_latent(dims, |_, k| if k == 0 { theta[0] } else { 1.0 / 3.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn moments(v: &[f64]) -> (f64, f64) {
        (dens::mean(v), dens::sample_var(v))
    }

    // mean/variance of 1e5 draws against analytic values, 4 MC standard errors
    fn check(sci: &dyn ScientificModel, theta: &[f64], mean: f64, var: f64, kurt_var: f64) {
        let mut rng = rng_from_seed(11);
        let n = 100_000;
        let x = sci.sample(theta, &[n], &mut rng);
        let (m, v) = moments(&x.shards[0]);
        let n = n as f64;
        assert!((m - mean).abs() < 4.0 * (var / n).sqrt(), "{}: mean {m}", sci.id());
        assert!((v - var).abs() < 4.0 * (kurt_var / n).sqrt(), "{}: var {v}", sci.id());
    }

    #[test]
    fn sampler_moments() {
        // var of the sample variance ≈ (μ4 − σ⁴)/n
        check(&NormalIid { tau: 1.5 }, &[0.3], 0.3, 2.25, 2.0 * 2.25f64.powi(2));
        let mix = NormalMixture { delta: 1.0, sd: 0.5 };
        // var = δ² + s² = 1.25; μ4 = δ⁴ + 6δ²s² + 3s⁴
        check(&mix, &[0.0], 0.0, 1.25, 1.0 + 1.5 + 3.0 * 0.0625 - 1.5625);
        check(&StudentT { nu: 10.0, scale: 1.0 }, &[1.0], 1.0, 1.25, 1.25f64.powi(2) * (3.0 * 8.0 / 6.0 - 1.0));
        check(&LaplaceIid { scale: 1.0 }, &[-0.5], -0.5, 2.0, 24.0 - 4.0);
    }

    #[test]
    fn exchangeable_density_matches_dense_mvn() {
        let sci = ExchangeableNormal { omega: 0.7 };
        let x = LatentX { shards: vec![vec![0.1, -0.4], vec![1.2]] };
        let n = 3;
        let cov = DMatrix::from_fn(n, n, |i, j| if i == j { 1.7 } else { 0.7 });
        let dense = dens::mvn_ln(&x.flatten(), &[0.2; 3], &cov);
        assert!((sci.log_density(&x, &[0.2]) - dense).abs() < 1e-12);
    }

    #[test]
    fn sign_sharing_samples_share_signs() {
        let mut rng = rng_from_seed(3);
        let x = SignSharing.sample(&[1.5], &[50, 50], &mut rng);
        assert!(x.shards[0].iter().zip(&x.shards[1]).all(|(a, b)| a.signum() == b.signum()));
        assert!(SignSharing.log_density(&x, &[1.5]).is_finite());
        let flipped = LatentX { shards: vec![x.shards[0].clone(), x.shards[1].iter().map(|v| -v).collect()] };
        assert_eq!(SignSharing.log_density(&flipped, &[1.5]), f64::NEG_INFINITY);
    }

    #[test]
    fn kronecker_sampler_correlation() {
        let sci = KroneckerPair { d: 2 };
        let mut rng = rng_from_seed(5);
        let n = 50_000;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for _ in 0..n {
            let x = sci.sample(&[0.0, 0.6], &[4, 4], &mut rng);
            sxy += x.shards[0][0] * x.shards[1][2];
            sxx += x.shards[0][2] * x.shards[1][3];
        }
        assert!((sxy / n as f64 - 0.6).abs() < 4.0 * (1.36 / n as f64).sqrt());
        assert!((sxx / n as f64).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn inverse_chi_square_normalises() {
        // substitute v = e^u
        let s: f64 = (-20_000..80_000)
            .map(|k| {
                let u = k as f64 * 1e-3;
                (inv_chi2_1_ln(u.exp()) + u).exp() * 1e-3
            })
            .sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}
