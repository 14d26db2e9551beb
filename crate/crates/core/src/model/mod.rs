//! Two-phase generative model: a scientific law `p(X | θ)` and a factored
//! observation law `Π_i p(Y_i | X_i, ξ_i)`, plus optional priors.
//!
//! Observation densities never see `θ`; the trait signatures make that
//! structural.

mod closed_form;
mod observation;
pub mod registry;
mod science;
pub mod working;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num;
use crate::quadrature::{self, QuadratureSpec};
use crate::rng::{rng_from_seed, split_seed, SimRng};

pub use closed_form::{CauchyShardMarginal, CenteredScaleMarginal, GaussianMarginal, SignSharingMarginal};
pub use observation::{GaussianMean, GaussianNoise, GaussianOffset, Identity, RandomVarianceObs};
pub use science::{
    CenteredScale, ExchangeableNormal, KroneckerPair, LaplaceIid, NormalIid, NormalMixture, RandomVariance, SharedComponent, SignSharing,
    StudentT,
};

/// Scientific parameter θ; fixed dimension ≥ 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTheta(#[serde(with = "num::vec")] Vec<f64>);

impl ParamTheta {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("θ must have dimension ≥ 1"));
        }
        Ok(ParamTheta(values))
    }

    pub fn scalar(v: f64) -> Self {
        ParamTheta(vec![v])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Per-shard nuisance parameters ξ_1..ξ_r.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamXi {
    #[serde(with = "num::vecvec")]
    pub shards: Vec<Vec<f64>>,
}

impl ParamXi {
    pub fn new(shards: Vec<Vec<f64>>) -> Self {
        ParamXi { shards }
    }

    /// `r` shards all set to `value`.
    pub fn repeat(r: usize, value: &[f64]) -> Self {
        ParamXi { shards: vec![value.to_vec(); r] }
    }

    pub fn none(r: usize) -> Self {
        ParamXi { shards: vec![Vec::new(); r] }
    }

    pub fn len(&self) -> usize {
        self.shards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shards.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentX {
    #[serde(with = "num::vecvec")]
    pub shards: Vec<Vec<f64>>,
}

impl LatentX {
    pub fn flatten(&self) -> Vec<f64> {
        self.shards.concat()
    }

    pub fn from_flat(dims: &[usize], flat: &[f64]) -> Self {
        LatentX { shards: split_flat(dims, flat) }
    }
}

/// Observations, partitioned into shards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataY {
    #[serde(with = "num::vecvec")]
    pub shards: Vec<Vec<f64>>,
}

impl DataY {
    pub fn new(shards: Vec<Vec<f64>>) -> Self {
        DataY { shards }
    }

    pub fn single(values: Vec<f64>) -> Self {
        DataY { shards: vec![values] }
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        self.shards.iter().map(Vec::len).collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.shards.concat()
    }

    pub fn from_flat(sizes: &[usize], flat: &[f64]) -> Self {
        DataY { shards: split_flat(sizes, flat) }
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn split_flat(sizes: &[usize], flat: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for &s in sizes {
        out.push(flat[at..at + s].to_vec());
        at += s;
    }
    out
}

/// Named layout of the flat optimisation vector `(θ, ξ_1, …, ξ_r)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub theta_dim: usize,
    pub xi_dim: usize,
    pub shards: usize,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.theta_dim + self.xi_dim * self.shards
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.theta_dim).map(|k| format!("theta[{k}]")).collect();
        for i in 0..self.shards {
            for k in 0..self.xi_dim {
                names.push(format!("xi[{i}][{k}]"));
            }
        }
        names
    }

    pub fn flatten(&self, theta: &[f64], xi: &ParamXi) -> Vec<f64> {
        let mut v = theta.to_vec();
        for s in &xi.shards {
            v.extend_from_slice(s);
        }
        v
    }

    pub fn split(&self, flat: &[f64]) -> (Vec<f64>, ParamXi) {
        let theta = flat[..self.theta_dim].to_vec();
        let xi = flat[self.theta_dim..]
            .chunks(self.xi_dim.max(1))
            .take(if self.xi_dim == 0 { 0 } else { self.shards })
            .map(<[f64]>::to_vec)
            .collect::<Vec<_>>();
        let xi = if self.xi_dim == 0 { ParamXi::none(self.shards) } else { ParamXi::new(xi) };
        (theta, xi)
    }
}

/// Scientific law `p(X | θ)` with density relative to Lebesgue measure
/// (or counting measure on tied coordinates).
pub trait ScientificModel: Send + Sync + fmt::Debug {
    fn id(&self) -> &str;
    fn theta_dim(&self) -> usize;

    fn check_latent_dims(&self, _dims: &[usize]) -> Result<()> {
        Ok(())
    }

    fn log_density(&self, x: &LatentX, theta: &[f64]) -> f64;

    fn sample(&self, theta: &[f64], dims: &[usize], rng: &mut SimRng) -> LatentX;

    /// True when the shards of X are independent given θ.
    fn factored(&self) -> bool {
        false
    }

    /// Per-shard log density; only meaningful when [`factored`](Self::factored).
    fn shard_log_density(&self, _shard: usize, _x: &[f64], _theta: &[f64]) -> f64 {
        f64::NAN
    }

    /// Deterministic X, if the law is a point mass at this θ.
    fn point_mass(&self, _theta: &[f64], _dims: &[usize]) -> Option<LatentX> {
        None
    }

    /// A central latent value, used to start mode searches.
    fn center(&self, theta: &[f64], dims: &[usize]) -> LatentX;
}

/// Observation law for one shard, `p(Y_i | X_i, ξ_i)`.
pub trait ObservationModel: Send + Sync + fmt::Debug {
    fn id(&self) -> &str;
    fn xi_dim(&self) -> usize;
    fn latent_dim(&self, shard_size: usize) -> Result<usize>;
    fn log_density(&self, y: &[f64], x: &[f64], xi: &[f64]) -> f64;
    fn sample(&self, x: &[f64], xi: &[f64], shard_size: usize, rng: &mut SimRng) -> Vec<f64>;

    /// Minimal sufficient statistic for `(X_i, ξ_i)`, when registered.
    fn minimal_statistic(&self, _y: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// `p(Y_i | X_i) = δ{Y_i = X_i}`.
    fn is_point_mass(&self) -> bool {
        false
    }

    fn latent_guess(&self, _y: &[f64], _xi: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Closed-form (or specialised) marginal likelihood of Y, bypassing the
/// generic latent quadrature.
pub trait MarginalOverride: Send + Sync + fmt::Debug {
    fn log_marginal(&self, theta: &[f64], xi: &ParamXi, y: &DataY, quad: &QuadratureSpec) -> Result<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarPrior {
    Flat,
    Normal {
        #[serde(with = "num")]
        mean: f64,
        #[serde(with = "num")]
        sd: f64,
    },
    PointMass {
        #[serde(with = "num")]
        value: f64,
    },
}

impl ScalarPrior {
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            ScalarPrior::Flat => 0.0,
            ScalarPrior::Normal { mean, sd } => crate::dens::normal_ln(x, mean, sd),
            ScalarPrior::PointMass { value } => {
                if x == value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn center(&self) -> f64 {
        match *self {
            ScalarPrior::Flat => 0.0,
            ScalarPrior::Normal { mean, .. } => mean,
            ScalarPrior::PointMass { value } => value,
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        match *self {
            ScalarPrior::Flat => 0.0,
            ScalarPrior::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal),
            ScalarPrior::PointMass { value } => value,
        }
    }
}

/// Independent per-coordinate prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prior(pub Vec<ScalarPrior>);

impl Prior {
    pub fn normal(mean: f64, sd: f64) -> Self {
        Prior(vec![ScalarPrior::Normal { mean, sd }])
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(p, v)| p.log_density(*v)).sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Free coordinates are integrated; point masses are held fixed.
    pub(crate) fn split_free(&self) -> (Vec<usize>, Vec<f64>) {
        let free = (0..self.0.len()).filter(|&k| !matches!(self.0[k], ScalarPrior::PointMass { .. })).collect();
        let base = self.0.iter().map(ScalarPrior::center).collect();
        (free, base)
    }

    pub fn is_proper(&self) -> bool {
        !self.0.iter().any(|p| matches!(p, ScalarPrior::Flat))
    }
}

/// Compact box from which parameter probe pairs are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub theta: Vec<(f64, f64)>,
    pub xi: Vec<(f64, f64)>,
}

pub type ParamPoint = (ParamTheta, ParamXi);

impl ParamBox {
    pub fn sample(&self, shards: usize, rng: &mut SimRng) -> ParamPoint {
        let mut draw = |(lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let theta = self.theta.iter().map(|&b| draw(b)).collect();
        let xi = (0..shards).map(|_| self.xi.iter().map(|&b| draw(b)).collect()).collect();
        (ParamTheta(theta), ParamXi::new(xi))
    }

    pub fn sample_pairs(&self, n: usize, shards: usize, seed: u64) -> Vec<(ParamPoint, ParamPoint)> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| (self.sample(shards, &mut rng), self.sample(shards, &mut rng))).collect()
    }

    pub fn center(&self, shards: usize) -> ParamPoint {
        let mid = |&(lo, hi): &(f64, f64)| 0.5 * (lo + hi);
        (ParamTheta(self.theta.iter().map(mid).collect()), ParamXi::repeat(shards, &self.xi.iter().map(mid).collect::<Vec<_>>()))
    }
}

/// A complete two-phase model.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub id: String,
    pub sci: Arc<dyn ScientificModel>,
    pub obs: Arc<dyn ObservationModel>,
    pub prior_theta: Option<Prior>,
    pub prior_xi: Option<Prior>,
    pub marginal: Option<Arc<dyn MarginalOverride>>,
    pub param_box: ParamBox,
}

impl ModelSpec {
    pub fn new(id: impl Into<String>, sci: Arc<dyn ScientificModel>, obs: Arc<dyn ObservationModel>) -> Self {
        let param_box = ParamBox { theta: vec![(-1.0, 1.0); sci.theta_dim()], xi: vec![(0.5, 2.0); obs.xi_dim()] };
        ModelSpec { id: id.into(), sci, obs, prior_theta: None, prior_xi: None, marginal: None, param_box }
    }

    pub fn with_prior_theta(mut self, p: Prior) -> Self {
        self.prior_theta = Some(p);
        self
    }

    pub fn with_prior_xi(mut self, p: Prior) -> Self {
        self.prior_xi = Some(p);
        self
    }

    pub fn with_marginal(mut self, m: Arc<dyn MarginalOverride>) -> Self {
        self.marginal = Some(m);
        self
    }

    pub fn with_box(mut self, b: ParamBox) -> Self {
        self.param_box = b;
        self
    }

    pub fn theta_dim(&self) -> usize {
        self.sci.theta_dim()
    }

    pub fn xi_dim(&self) -> usize {
        self.obs.xi_dim()
    }

    pub fn layout(&self, shards: usize) -> ParamLayout {
        ParamLayout { theta_dim: self.theta_dim(), xi_dim: self.xi_dim(), shards }
    }

    pub fn latent_dims(&self, shard_sizes: &[usize]) -> Result<Vec<usize>> {
        let dims = shard_sizes.iter().map(|&m| self.obs.latent_dim(m)).collect::<Result<Vec<_>>>()?;
        if !dims.is_empty() {
            self.sci.check_latent_dims(&dims)?;
        }
        Ok(dims)
    }

    fn check_params(&self, theta: &[f64], xi: &ParamXi, shards: usize) -> Result<()> {
        if theta.len() != self.theta_dim() {
            return Err(Error::config(format!("model `{}` expects θ of dimension {}, got {}", self.id, self.theta_dim(), theta.len())));
        }
        if xi.len() != shards {
            return Err(Error::config(format!("ξ has {} shards but data has {shards}", xi.len())));
        }
        if let Some(bad) = xi.shards.iter().find(|s| s.len() != self.xi_dim()) {
            return Err(Error::config(format!(
                "model `{}` expects per-shard ξ of dimension {}, got {}",
                self.id,
                self.xi_dim(),
                bad.len()
            )));
        }
        Ok(())
    }

    fn check_latent(&self, x: &LatentX, y: &DataY) -> Result<Vec<usize>> {
        let dims = self.latent_dims(&y.shard_sizes())?;
        if x.shards.len() != dims.len() || x.shards.iter().zip(&dims).any(|(s, d)| s.len() != *d) {
            return Err(Error::config("latent X does not match the declared per-shard latent dimensions"));
        }
        Ok(dims)
    }

    /// Draw X from the scientific law and then each Y_i independently.
    pub fn sample_joint(&self, theta: &ParamTheta, xi: &ParamXi, shard_sizes: &[usize], rng_seed: u64) -> Result<(LatentX, DataY)> {
        let mut rng = rng_from_seed(split_seed(rng_seed, 0));
        self.sample_with(theta.values(), xi, shard_sizes, &mut rng)
    }

    pub fn sample_with(&self, theta: &[f64], xi: &ParamXi, shard_sizes: &[usize], rng: &mut SimRng) -> Result<(LatentX, DataY)> {
        self.check_params(theta, xi, shard_sizes.len())?;
        if shard_sizes.is_empty() {
            return Ok((LatentX { shards: vec![] }, DataY { shards: vec![] }));
        }
        let dims = self.latent_dims(shard_sizes)?;
        let x = self.sci.sample(theta, &dims, rng);
        let shards =
            x.shards.iter().zip(&xi.shards).zip(shard_sizes).map(|((xi_x, xi_p), &m)| self.obs.sample(xi_x, xi_p, m, rng)).collect();
        Ok((x, DataY { shards }))
    }

    /// `Σ_i log p_obs(Y_i | X_i, ξ_i)`.
    pub fn loglik_obs(&self, xi: &ParamXi, x: &LatentX, y: &DataY) -> f64 {
        y.shards.iter().zip(&x.shards).zip(&xi.shards).map(|((yi, xi_x), xi_p)| self.obs.log_density(yi, xi_x, xi_p)).sum()
    }

    pub fn loglik_sci(&self, theta: &[f64], x: &LatentX) -> f64 {
        self.sci.log_density(x, theta)
    }

    /// Complete-data log density; `-inf` on support violations.
    pub fn loglik_joint(&self, theta: &ParamTheta, xi: &ParamXi, x: &LatentX, y: &DataY) -> Result<f64> {
        self.check_params(theta.values(), xi, y.shards.len())?;
        if y.shards.is_empty() {
            return Ok(0.0);
        }
        self.check_latent(x, y)?;
        let v = self.loglik_obs(xi, x, y) + self.loglik_sci(theta.values(), x);
        Ok(if v.is_nan() { f64::NEG_INFINITY } else { v })
    }

    /// `log ∫ p_obs(Y | X, ξ) p_sci(X | θ) dX`.
    pub fn loglik_marginal_y(&self, theta: &ParamTheta, xi: &ParamXi, y: &DataY, quad: &QuadratureSpec) -> Result<f64> {
        self.log_marginal(theta.values(), xi, y, quad)
    }

    pub(crate) fn log_marginal(&self, theta: &[f64], xi: &ParamXi, y: &DataY, quad: &QuadratureSpec) -> Result<f64> {
        self.check_params(theta, xi, y.shards.len())?;
        if y.shards.is_empty() {
            return Ok(0.0);
        }
        let dims = self.latent_dims(&y.shard_sizes())?;
        if let Some(m) = &self.marginal {
            return m.log_marginal(theta, xi, y, quad);
        }
        if self.obs.is_point_mass() {
            let x = LatentX { shards: y.shards.clone() };
            return Ok(nan_to_neg_inf(self.sci.log_density(&x, theta)));
        }
        if let Some(x) = self.sci.point_mass(theta, &dims) {
            return Ok(nan_to_neg_inf(self.loglik_obs(xi, &x, y)));
        }
        if self.sci.factored() {
            let mut total = 0.0;
            for (i, (ys, &d)) in y.shards.iter().zip(&dims).enumerate() {
                total += self.shard_log_marginal(i, theta, &xi.shards[i], ys, d, quad)?;
                if total == f64::NEG_INFINITY {
                    break;
                }
            }
            return Ok(total);
        }
        let total_dim: usize = dims.iter().sum();
        if total_dim > quad.max_dim {
            return Err(Error::config(format!("model `{}`: joint latent dimension {total_dim} needs a closed-form marginal", self.id)));
        }
        let g = |flat: &[f64]| {
            let x = LatentX::from_flat(&dims, flat);
            self.loglik_obs(xi, &x, y) + self.sci.log_density(&x, theta)
        };
        let mut starts = vec![self.sci.center(theta, &dims).flatten()];
        let guesses: Option<Vec<Vec<f64>>> = y.shards.iter().zip(&xi.shards).map(|(yi, p)| self.obs.latent_guess(yi, p)).collect();
        if let Some(gs) = guesses {
            starts.push(gs.concat());
        }
        quadrature::log_integrate(&g, &starts, quad)
    }

    fn shard_log_marginal(&self, i: usize, theta: &[f64], xi_i: &[f64], y_i: &[f64], dim: usize, quad: &QuadratureSpec) -> Result<f64> {
        let g = |x: &[f64]| self.obs.log_density(y_i, x, xi_i) + self.sci.shard_log_density(i, x, theta);
        let dims = vec![dim; i + 1];
        let mut starts = vec![self.sci.center(theta, &dims).shards[i].clone()];
        if let Some(guess) = self.obs.latent_guess(y_i, xi_i) {
            starts.push(guess);
        }
        quadrature::log_integrate(&g, &starts, quad)
    }

    /// `log ∫ p(Y | θ, ξ) π(ξ) dξ`, with X marginalised as in
    /// [`loglik_marginal_y`](Self::loglik_marginal_y).
    pub fn bayes_marginal(&self, theta: &ParamTheta, y: &DataY, quad: &QuadratureSpec) -> Result<f64> {
        let prior = self.prior_xi.as_ref().ok_or_else(|| Error::config(format!("model `{}` has no prior on ξ", self.id)))?;
        if prior.dim() != self.xi_dim() {
            return Err(Error::config("prior on ξ has the wrong dimension"));
        }
        if !prior.is_proper() {
            return Err(Error::config("bayes_marginal requires a proper prior on ξ"));
        }
        let r = y.shards.len();
        let theta = theta.values();
        let (free, base) = prior.split_free();
        if free.is_empty() {
            return self.log_marginal(theta, &ParamXi::repeat(r, &base), y, quad);
        }
        let fill = |vals: &[f64]| {
            let mut xi = base.clone();
            for (k, &f) in free.iter().enumerate() {
                xi[f] = vals[k];
            }
            xi
        };
        let factorable = self.marginal.is_none() && (self.sci.factored() || self.obs.is_point_mass());
        if factorable {
            let mut total = 0.0;
            for i in 0..r {
                let sub = DataY { shards: vec![y.shards[i].clone()] };
                let g = |vals: &[f64]| {
                    let xi = fill(vals);
                    let shard_xi = ParamXi::new(vec![xi.clone()]);
                    let inner = if self.obs.is_point_mass() || self.sci.point_mass(theta, &[0]).is_some() {
                        self.log_marginal(theta, &shard_xi, &sub, quad)
                    } else {
                        let dim = match self.obs.latent_dim(sub.shards[0].len()) {
                            Ok(d) => d,
                            Err(_) => return f64::NAN,
                        };
                        self.shard_log_marginal(i, theta, &xi, &sub.shards[0], dim, quad)
                    };
                    inner.unwrap_or(f64::NAN) + prior.log_density(&xi)
                };
                let start: Vec<f64> = free.iter().map(|&f| base[f]).collect();
                total += quadrature::log_integrate(&g, &[start], quad)?;
            }
            Ok(total)
        } else {
            let nfree = free.len();
            let g = |vals: &[f64]| {
                let xi = ParamXi::new((0..r).map(|i| fill(&vals[i * nfree..(i + 1) * nfree])).collect());
                let lp: f64 = xi.shards.iter().map(|s| prior.log_density(s)).sum();
                self.log_marginal(theta, &xi, y, quad).unwrap_or(f64::NAN) + lp
            };
            let start: Vec<f64> = (0..r).flat_map(|_| free.iter().map(|&f| base[f])).collect();
            quadrature::log_integrate(&g, &[start], quad)
        }
    }
}

fn nan_to_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}
