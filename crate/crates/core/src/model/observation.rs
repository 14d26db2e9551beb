//! Built-in per-shard observation laws `p(Y_i | X_i, ξ_i)`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::ObservationModel;
use crate::dens;
use crate::error::{Error, Result};
use crate::rng::SimRng;

fn z(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

/// `Y_i = X_i` exactly; density 1 against counting measure on the diagonal.
#[derive(Clone, Debug)]
pub struct Identity;

impl ObservationModel for Identity {
    fn id(&self) -> &str {
        "identity"
    }
    fn xi_dim(&self) -> usize {
        0
    }
    fn latent_dim(&self, m: usize) -> Result<usize> {
        Ok(m)
    }
    fn log_density(&self, y: &[f64], x: &[f64], _: &[f64]) -> f64 {
        if y == x {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }
    fn sample(&self, x: &[f64], _: &[f64], _: usize, _: &mut SimRng) -> Vec<f64> {
        x.to_vec()
    }
    fn minimal_statistic(&self, y: &[f64]) -> Option<Vec<f64>> {
        Some(y.to_vec())
    }
    fn is_point_mass(&self) -> bool {
        true
    }
    fn latent_guess(&self, y: &[f64], _: &[f64]) -> Option<Vec<f64>> {
        Some(y.to_vec())
    }
}

/// `Y_ij ~ N(X_i, ξ_i)` for j = 1..m, with ξ_i the noise variance.
#[derive(Clone, Debug)]
pub struct GaussianMean;

impl ObservationModel for GaussianMean {
    fn id(&self) -> &str {
        "gaussian_mean"
    }
    fn xi_dim(&self) -> usize {
        1
    }
    fn latent_dim(&self, m: usize) -> Result<usize> {
        if m == 0 {
            return Err(Error::config("gaussian_mean shards need at least one observation"));
        }
        Ok(1)
    }
    fn log_density(&self, y: &[f64], x: &[f64], xi: &[f64]) -> f64 {
        if xi[0] <= 0.0 {
            return f64::NEG_INFINITY;
        }
        y.iter().map(|&v| dens::normal_var_ln(v, x[0], xi[0])).sum()
    }
    fn sample(&self, x: &[f64], xi: &[f64], m: usize, rng: &mut SimRng) -> Vec<f64> {
        let sd = xi[0].sqrt();
        (0..m).map(|_| x[0] + sd * z(rng)).collect()
    }
    fn minimal_statistic(&self, y: &[f64]) -> Option<Vec<f64>> {
        if y.len() == 1 {
            return Some(y.to_vec());
        }
        let m = dens::mean(y);
        Some(vec![m, y.iter().map(|v| (v - m) * (v - m)).sum()])
    }
    fn latent_guess(&self, y: &[f64], _: &[f64]) -> Option<Vec<f64>> {
        Some(vec![dens::mean(y)])
    }
}

/// `Y_ij ~ N(X_i + ξ_i, σ²)` with known σ: a per-shard additive offset.
#[derive(Clone, Debug)]
pub struct GaussianOffset {
    pub sd: f64,
}

impl ObservationModel for GaussianOffset {
    fn id(&self) -> &str {
        "gaussian_offset"
    }
    fn xi_dim(&self) -> usize {
        1
    }
    fn latent_dim(&self, m: usize) -> Result<usize> {
        if m == 0 {
            return Err(Error::config("gaussian_offset shards need at least one observation"));
        }
        Ok(1)
    }
    fn log_density(&self, y: &[f64], x: &[f64], xi: &[f64]) -> f64 {
        y.iter().map(|&v| dens::normal_ln(v, x[0] + xi[0], self.sd)).sum()
    }
    fn sample(&self, x: &[f64], xi: &[f64], m: usize, rng: &mut SimRng) -> Vec<f64> {
        (0..m).map(|_| x[0] + xi[0] + self.sd * z(rng)).collect()
    }
    fn minimal_statistic(&self, y: &[f64]) -> Option<Vec<f64>> {
        Some(vec![dens::mean(y)])
    }
    fn latent_guess(&self, y: &[f64], xi: &[f64]) -> Option<Vec<f64>> {
        Some(vec![dens::mean(y) - xi[0]])
    }
}

/// Each latent coordinate observed `reps` times with known N(0, sd²) noise;
/// observations are laid out in consecutive blocks per coordinate.
#[derive(Clone, Debug)]
pub struct GaussianNoise {
    pub reps: usize,
    pub sd: f64,
}

impl ObservationModel for GaussianNoise {
    fn id(&self) -> &str {
        "gaussian_noise"
    }
    fn xi_dim(&self) -> usize {
        0
    }
    fn latent_dim(&self, m: usize) -> Result<usize> {
        if self.reps == 0 || !m.is_multiple_of(self.reps) {
            return Err(Error::config(format!("shard size {m} is not a multiple of {} replicates", self.reps)));
        }
        Ok(m / self.reps)
    }
    fn log_density(&self, y: &[f64], x: &[f64], _: &[f64]) -> f64 {
        y.iter().enumerate().map(|(j, &v)| dens::normal_ln(v, x[j / self.reps], self.sd)).sum()
    }
    fn sample(&self, x: &[f64], _: &[f64], m: usize, rng: &mut SimRng) -> Vec<f64> {
        (0..m).map(|j| x[j / self.reps] + self.sd * z(rng)).collect()
    }
    fn minimal_statistic(&self, y: &[f64]) -> Option<Vec<f64>> {
        Some(y.chunks(self.reps).map(dens::mean).collect())
    }
    fn latent_guess(&self, y: &[f64], _: &[f64]) -> Option<Vec<f64>> {
        self.minimal_statistic(y)
    }
}

/// `Y_ij ~ N(μ_i, v_ij)` given latent `(μ_i, v_i1, …, v_im)`.
#[derive(Clone, Debug)]
pub struct RandomVarianceObs;

impl ObservationModel for RandomVarianceObs {
    fn id(&self) -> &str {
        "random_variance_obs"
    }
    fn xi_dim(&self) -> usize {
        0
    }
    fn latent_dim(&self, m: usize) -> Result<usize> {
        Ok(m + 1)
    }
    fn log_density(&self, y: &[f64], x: &[f64], _: &[f64]) -> f64 {
        y.iter().zip(&x[1..]).map(|(&v, &var)| if var > 0.0 { dens::normal_var_ln(v, x[0], var) } else { f64::NEG_INFINITY }).sum()
    }
    fn sample(&self, x: &[f64], _: &[f64], m: usize, rng: &mut SimRng) -> Vec<f64> {
        (0..m).map(|j| x[0] + x[j + 1].sqrt() * z(rng)).collect()
    }
    fn minimal_statistic(&self, y: &[f64]) -> Option<Vec<f64>> {
        Some(y.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn gaussian_mean_minimal_statistic() {
        let t = GaussianMean.minimal_statistic(&[1.0, 2.0, 6.0]).unwrap();
        assert_eq!(t, vec![3.0, 14.0]);
        assert_eq!(GaussianMean.minimal_statistic(&[2.5]).unwrap(), vec![2.5]);
    }

    #[test]
    fn noise_blocks() {
        let obs = GaussianNoise { reps: 2, sd: 1.0 };
        assert_eq!(obs.latent_dim(6).unwrap(), 3);
        assert!(obs.latent_dim(5).is_err());
        let y = obs.sample(&[0.0, 100.0], &[], 4, &mut rng_from_seed(1));
        assert!(y[0].abs() < 10.0 && (y[3] - 100.0).abs() < 10.0);
        assert_eq!(obs.minimal_statistic(&[1.0, 3.0, 5.0, 5.0]).unwrap(), vec![2.0, 5.0]);
    }

    #[test]
    fn observation_moments() {
        let mut rng = rng_from_seed(2);
        let n = 100_000;
        let y = GaussianMean.sample(&[1.5], &[4.0], n, &mut rng);
        let nf = n as f64;
        assert!((dens::mean(&y) - 1.5).abs() < 4.0 * (4.0 / nf).sqrt());
        assert!((dens::sample_var(&y) - 4.0).abs() < 4.0 * (32.0 / nf).sqrt());
        let y = GaussianOffset { sd: 0.5 }.sample(&[1.0], &[-2.0], n, &mut rng);
        assert!((dens::mean(&y) + 1.0).abs() < 4.0 * (0.25 / nf).sqrt());
    }

    #[test]
    fn non_positive_variance_is_outside_support() {
        assert_eq!(GaussianMean.log_density(&[0.0], &[0.0], &[0.0]), f64::NEG_INFINITY);
    }
}
