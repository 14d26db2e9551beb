//! Observed profile information, the fraction of missing information and
//! the variance identities relating estimators on T and on Y.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::deriv;
use crate::error::{Error, Result};
use crate::num;

/// Row-major matrix with its dimensions, as written to reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    #[serde(with = "num::vec")]
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixRecord {
    fn from(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)])).collect();
        MatrixRecord { rows: m.nrows(), cols: m.ncols(), data }
    }
}

impl MatrixRecord {
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservedInfo {
    pub matrix: DMatrix<f64>,
    pub positive_definite: bool,
}

/// Negative Hessian of `profile` at `theta_hat`, step `step · max(1, |θ̂_k|)`
/// with one Richardson level.
pub fn observed_info(profile: &dyn Fn(&[f64]) -> f64, theta_hat: &[f64], step: f64) -> ObservedInfo {
    let h = -deriv::hessian_richardson(profile, theta_hat, step);
    let matrix = (&h + h.transpose()) * 0.5;
    let positive_definite = matrix.iter().all(|v| v.is_finite()) && matrix.clone().cholesky().is_some();
    ObservedInfo { matrix, positive_definite }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FractionMissing {
    pub f: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `F = I_Y⁻¹ (I_Y − I_T)`.
pub fn fraction_missing(info_y: &DMatrix<f64>, info_t: &DMatrix<f64>) -> Result<FractionMissing> {
    if info_y.shape() != info_t.shape() || !info_y.is_square() {
        return Err(Error::config(format!("information shapes {:?} and {:?} do not match", info_y.shape(), info_t.shape())));
    }
    let cond = condition_number(info_y);
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::Numeric(format!("I_Y is singular (condition number {cond:e})")));
    }
    let diff = info_y - info_t;
    let f = info_y.clone().lu().solve(&diff).ok_or_else(|| Error::Numeric(format!("I_Y is singular (condition number {cond:e})")))?;
    let mut eigenvalues: Vec<f64> = match info_y.clone().cholesky() {
        // similar to the symmetric L⁻¹ (I_Y − I_T) L⁻ᵀ, so the spectrum is real
        Some(ch) => {
            let l = ch.l();
            let li = l.clone().try_inverse().expect("triangular factor of a PD matrix");
            let s = &li * &diff * li.transpose();
            let s = (&s + s.transpose()) * 0.5;
            s.symmetric_eigenvalues().iter().copied().collect()
        }
        None => f.complex_eigenvalues().iter().map(|c| c.re).collect(),
    };
    eigenvalues.sort_by(f64::total_cmp);
    Ok(FractionMissing { f, eigenvalues })
}

/// Information under `θ = A φ`: `Aᵀ I A`.
pub fn reparameterize_info(info: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * info * a
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoReport {
    pub info_y: MatrixRecord,
    pub info_t: MatrixRecord,
    pub f: MatrixRecord,
    #[serde(with = "num::vec")]
    pub eigvals_f: Vec<f64>,
    #[serde(with = "num::vec")]
    pub theta_hat_y: Vec<f64>,
    #[serde(with = "num::vec")]
    pub theta_hat_t: Vec<f64>,
    pub positive_definite_y: bool,
    pub positive_definite_t: bool,
    pub sample_size: usize,
}

/// Information report from two profile log-likelihoods and their maximisers.
pub fn info_report(
    profile_y: &dyn Fn(&[f64]) -> f64,
    theta_hat_y: &[f64],
    profile_t: &dyn Fn(&[f64]) -> f64,
    theta_hat_t: &[f64],
    sample_size: usize,
) -> Result<InfoReport> {
    let iy = observed_info(profile_y, theta_hat_y, 1e-4);
    let it = observed_info(profile_t, theta_hat_t, 1e-4);
    let fm = fraction_missing(&iy.matrix, &it.matrix)?;
    Ok(InfoReport {
        info_y: (&iy.matrix).into(),
        info_t: (&it.matrix).into(),
        f: (&fm.f).into(),
        eigvals_f: fm.eigenvalues,
        theta_hat_y: theta_hat_y.to_vec(),
        theta_hat_t: theta_hat_t.to_vec(),
        positive_definite_y: iy.positive_definite,
        positive_definite_t: it.positive_definite,
        sample_size,
    })
}

/// An estimate with its Monte Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McValue {
    #[serde(with = "num")]
    pub value: f64,
    #[serde(with = "num")]
    pub std_error: f64,
}

impl McValue {
    /// Number of standard errors separating the estimate from `target`.
    pub fn z(&self, target: f64) -> f64 {
        if self.std_error > 0.0 {
            (self.value - target) / self.std_error
        } else if self.value == target {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub replications: usize,
    pub batches: usize,
    pub var_y: McValue,
    pub var_t: McValue,
    pub var_diff: McValue,
    /// `Var(δ(T) − δ(Y)) / Var(δ(T))`.
    pub missing_ratio: McValue,
    /// `Var(δ(Y)) / Var(δ(T))`.
    pub efficiency_ratio: McValue,
    /// `Var(δ(T)) − Var(δ(Y)) − Var(δ(T) − δ(Y))`; zero for self-efficient pairs.
    pub additive_gap: McValue,
    #[serde(with = "num::opt")]
    pub f_closed_form: Option<f64>,
}

fn var(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

fn stats(dy: &[f64], dt: &[f64]) -> [f64; 6] {
    let diff: Vec<f64> = dt.iter().zip(dy).map(|(t, y)| t - y).collect();
    let (vy, vt, vd) = (var(dy), var(dt), var(&diff));
    [vy, vt, vd, vd / vt, vy / vt, vt - vy - vd]
}

/// Variance identities from paired replications, with standard errors from
/// `batches` contiguous replication batches.
pub fn regret_decomposition(delta_y: &[f64], delta_t: &[f64], batches: usize, f_closed_form: Option<f64>) -> Result<RegretReport> {
    if delta_y.len() != delta_t.len() {
        return Err(Error::config(format!("unpaired replications: {} vs {}", delta_y.len(), delta_t.len())));
    }
    let n = delta_y.len();
    if batches < 2 || n < 2 * batches {
        return Err(Error::config(format!("{n} replications cannot fill {batches} batches of at least 2")));
    }
    let full = stats(delta_y, delta_t);
    let size = n / batches;
    let per: Vec<[f64; 6]> = (0..batches).map(|b| stats(&delta_y[b * size..(b + 1) * size], &delta_t[b * size..(b + 1) * size])).collect();
    // a batch statistic has `batches` times the variance of the full-sample one
    let se = |k: usize| {
        let col: Vec<f64> = per.iter().map(|s| s[k]).collect();
        (var(&col) / batches as f64).sqrt()
    };
    let mv = |k: usize| McValue { value: full[k], std_error: se(k) };
    Ok(RegretReport {
        replications: n,
        batches,
        var_y: mv(0),
        var_t: mv(1),
        var_diff: mv(2),
        missing_ratio: mv(3),
        efficiency_ratio: mv(4),
        additive_gap: mv(5),
        f_closed_form,
    })
}
