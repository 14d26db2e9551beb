use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::dens;
use crate::error::{Error, Result};
use crate::model::ParamXi;

/// Sampling density of a statistic, `p(T | θ, ξ)`.
pub trait InducedDensity: Send + Sync + fmt::Debug {
    fn log_density(&self, t: &[f64], theta: &[f64], xi: &ParamXi) -> f64;
}

/// `T = A Y` with `Y ~ N(c + Dθ, Σ)`, so `T ~ N(A(c + Dθ), AΣAᵀ)`.
#[derive(Clone, Debug)]
pub struct LinearGaussianInduced {
    a: DMatrix<f64>,
    offset: DVector<f64>,
    design: DMatrix<f64>,
    cov_t: DMatrix<f64>,
}

impl LinearGaussianInduced {
    pub fn new(a: DMatrix<f64>, offset: DVector<f64>, design: DMatrix<f64>, cov_y: &DMatrix<f64>) -> Result<Self> {
        let n = a.ncols();
        if offset.len() != n || design.nrows() != n || cov_y.shape() != (n, n) {
            return Err(Error::config("induced density shapes do not agree"));
        }
        let cov_t = &a * cov_y * a.transpose();
        Ok(LinearGaussianInduced { a, offset, design, cov_t })
    }

    pub fn mean(&self, theta: &[f64]) -> DVector<f64> {
        &self.a * (&self.offset + &self.design * DVector::from_column_slice(theta))
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov_t
    }
}

impl InducedDensity for LinearGaussianInduced {
    fn log_density(&self, t: &[f64], theta: &[f64], _: &ParamXi) -> f64 {
        dens::mvn_ln(t, self.mean(theta).as_slice(), &self.cov_t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_iid_normals() {
        let n = 4;
        let a = DMatrix::from_element(1, n, 1.0);
        let d = LinearGaussianInduced::new(a, DVector::zeros(n), DMatrix::from_element(n, 1, 1.0), &DMatrix::identity(n, n)).unwrap();
        let got = d.log_density(&[2.0], &[0.3], &ParamXi::none(1));
        assert!((got - dens::normal_var_ln(2.0, 1.2, 4.0)).abs() < 1e-13);
    }

    #[test]
    fn induced_density_normalises() {
        let a = DMatrix::from_row_slice(1, 2, &[0.5, 0.5]);
        let d = LinearGaussianInduced::new(a, DVector::zeros(2), DMatrix::from_element(2, 1, 1.0), &DMatrix::identity(2, 2)).unwrap();
        let h = 1e-3;
        let s: f64 = (-10_000..10_000).map(|k| d.log_density(&[k as f64 * h], &[0.2], &ParamXi::none(1)).exp() * h).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
}
