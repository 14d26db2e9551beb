//! Downstream estimators: maximum likelihood with profiling, posterior means
//! by quadrature, and multiphase procedures keyed by input form.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dens;
use crate::deriv;
use crate::error::{Error, Result};
use crate::model::{DataY, ModelSpec, ParamLayout, ParamTheta, ParamXi, ScalarPrior};
use crate::num;
use crate::preprocess::{induced_log_density, LinearGaussianInduced, Preprocessor, Statistic};
use crate::quadrature::{self, hermite_rule, QuadratureSpec};
use crate::rng::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    /// Jittered simplex restarts after the first run.
    pub restarts: usize,
    pub max_iter: u64,
    #[serde(with = "num")]
    pub x_tol: f64,
    /// Gradient-norm tolerance, scaled by `max(1, |f|)`.
    #[serde(with = "num")]
    pub grad_tol: f64,
    #[serde(with = "num")]
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions { restarts: 3, max_iter: 4000, x_tol: 1e-9, grad_tol: 1e-8, initial_step: 0.5, seed: 0x5eed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    #[serde(with = "num::vec")]
    pub theta_hat: Vec<f64>,
    #[serde(with = "num::optvec")]
    pub xi_hat: Option<Vec<f64>>,
    pub converged: bool,
    #[serde(with = "num")]
    pub loglik_at_max: f64,
    pub iterations: u64,
    #[serde(with = "num")]
    pub grad_norm: f64,
}

struct Negated<'a>(&'a dyn Fn(&[f64]) -> f64);

impl CostFunction for Negated<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let v = (self.0)(p);
        Ok(if v.is_nan() { f64::INFINITY } else { -v })
    }
}

fn simplex(f: &dyn Fn(&[f64]) -> f64, start: &[f64], step: f64, opts: &OptimOptions) -> (Vec<f64>, f64, u64) {
    let mut vertices = vec![start.to_vec()];
    for k in 0..start.len() {
        let mut v = start.to_vec();
        v[k] += step * start[k].abs().max(1.0);
        vertices.push(v);
    }
    let solver = match NelderMead::new(vertices).with_sd_tolerance(opts.x_tol * 1e-3) {
        Ok(s) => s,
        Err(_) => return (start.to_vec(), f(start), 0),
    };
    match Executor::new(Negated(f), solver).configure(|s| s.max_iters(opts.max_iter)).run() {
        Ok(res) => {
            let st = res.state();
            let x = st.get_best_param().cloned().unwrap_or_else(|| start.to_vec());
            let fx = f(&x);
            (x, fx, st.get_iter())
        }
        Err(_) => (start.to_vec(), f(start), 0),
    }
}

/// Newton steps with finite-difference derivatives, accepted only when they
/// do not decrease `f`.
fn polish(f: &dyn Fn(&[f64]) -> f64, mut x: Vec<f64>, mut fx: f64) -> (Vec<f64>, f64, u64) {
    let mut iters = 0;
    for _ in 0..50 {
        iters += 1;
        let g = deriv::gradient(f, &x, 1e-6);
        if !g.iter().all(|v| v.is_finite()) {
            break;
        }
        let neg = -deriv::hessian(f, &x, 1e-4);
        let step = match neg.cholesky() {
            Some(ch) => ch.solve(&g),
            None => break,
        };
        let mut moved = false;
        let mut alpha = 1.0;
        for _ in 0..30 {
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + alpha * s).collect();
            let fc = f(&cand);
            if fc.is_finite() && fc >= fx {
                moved = cand != x;
                x = cand;
                fx = fc;
                break;
            }
            alpha *= 0.5;
        }
        if !moved || alpha * step.norm() <= 1e-12 * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            break;
        }
    }
    (x, fx, iters)
}

fn grad_norm(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    deriv::gradient(f, x, 1e-6).norm()
}

/// Maximise `f` from `init`; the first `theta_dim` coordinates are reported as
/// θ and the rest as ξ.
pub fn mle(f: &dyn Fn(&[f64]) -> f64, init: &[f64], theta_dim: usize, opts: &OptimOptions) -> EstimateRecord {
    let split = |x: &[f64]| {
        let xi = (x.len() > theta_dim).then(|| x[theta_dim..].to_vec());
        (x[..theta_dim.min(x.len())].to_vec(), xi)
    };
    let f0 = f(init);
    if !f0.is_finite() || init.is_empty() {
        let (theta_hat, xi_hat) = split(init);
        return EstimateRecord {
            theta_hat,
            xi_hat,
            converged: init.is_empty() && f0.is_finite(),
            loglik_at_max: f0,
            iterations: 0,
            grad_norm: 0.0,
        };
    }
    let mut rng = rng_from_seed(opts.seed);
    let (mut best, mut fbest, mut iterations) = simplex(f, init, opts.initial_step, opts);
    for _ in 0..opts.restarts {
        let start: Vec<f64> = best.iter().map(|v| v + 0.1 * v.abs().max(1.0) * rng.sample::<f64, _>(StandardNormal)).collect();
        let (x, fx, it) = simplex(f, &start, 0.1 * opts.initial_step, opts);
        iterations += it;
        if fx > fbest {
            best = x;
            fbest = fx;
        }
    }
    if f0 > fbest {
        best = init.to_vec();
        fbest = f0;
    }
    let (x, fx, it) = polish(f, best, fbest);
    iterations += it;
    let gn = grad_norm(f, &x);
    let (theta_hat, xi_hat) = split(&x);
    EstimateRecord {
        theta_hat,
        xi_hat,
        converged: fx.is_finite() && gn <= opts.grad_tol * fx.abs().max(1.0),
        loglik_at_max: fx,
        iterations,
        grad_norm: gn,
    }
}

/// Marginal log-likelihood of Y over the flat `(θ, ξ)` vector; errors map to `-inf`.
pub fn model_loglik<'a>(model: &'a ModelSpec, y: &'a DataY, quad: QuadratureSpec) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    let layout = model.layout(y.shards.len());
    move |flat: &[f64]| {
        let (theta, xi) = layout.split(flat);
        model.log_marginal(&theta, &xi, y, &quad).unwrap_or(f64::NEG_INFINITY)
    }
}

/// MLE of `(θ, ξ)` for a model given data.
pub fn mle_model(model: &ModelSpec, y: &DataY, theta0: &[f64], xi0: &ParamXi, opts: &OptimOptions) -> EstimateRecord {
    let layout: ParamLayout = model.layout(y.shards.len());
    let f = model_loglik(model, y, QuadratureSpec::default());
    mle(&f, &layout.flatten(theta0, xi0), layout.theta_dim, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileValue {
    #[serde(with = "num")]
    pub value: f64,
    #[serde(with = "num::vec")]
    pub xi_hat: Vec<f64>,
    pub converged: bool,
}

type InnerSolver<'a> = &'a (dyn Fn(&[f64]) -> Vec<f64> + Sync);

/// `θ ↦ max_ξ ℓ(θ, ξ)` with the inner maximiser warm-started from the last
/// evaluation.
pub struct ProfileLikelihood<'a> {
    f: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    theta_dim: usize,
    warm: Mutex<Vec<f64>>,
    inner: Option<InnerSolver<'a>>,
    opts: OptimOptions,
}

impl<'a> ProfileLikelihood<'a> {
    pub fn new(f: &'a (dyn Fn(&[f64]) -> f64 + Sync), theta_dim: usize, xi_init: Vec<f64>) -> Self {
        let opts = OptimOptions { restarts: 1, ..OptimOptions::default() };
        ProfileLikelihood { f, theta_dim, warm: Mutex::new(xi_init), inner: None, opts }
    }

    /// Use a closed-form `ξ̂(θ)` instead of numerical inner maximisation.
    pub fn with_inner(mut self, inner: InnerSolver<'a>) -> Self {
        self.inner = Some(inner);
        self
    }

    pub fn value(&self, theta: &[f64]) -> ProfileValue {
        let join = |xi: &[f64]| [theta, xi].concat();
        if let Some(inner) = self.inner {
            let xi = inner(theta);
            return ProfileValue { value: (self.f)(&join(&xi)), xi_hat: xi, converged: true };
        }
        let start = self.warm.lock().expect("profile cache").clone();
        if start.is_empty() {
            return ProfileValue { value: (self.f)(theta), xi_hat: vec![], converged: true };
        }
        let g = |xi: &[f64]| (self.f)(&join(xi));
        let rec = mle(&g, &start, 0, &self.opts);
        let xi = rec.xi_hat.unwrap_or_default();
        if rec.converged {
            *self.warm.lock().expect("profile cache") = xi.clone();
        }
        ProfileValue { value: rec.loglik_at_max, xi_hat: xi, converged: rec.converged }
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_dim
    }
}

/// Input to a posterior computation: raw data, or a statistic with a
/// registered induced density.
pub enum PosteriorInput<'a> {
    Data(&'a DataY),
    Statistic { p: &'a Preprocessor, t: &'a Statistic, xi: &'a ParamXi },
}

/// Posterior mean of θ by adaptive quadrature.
pub fn posterior_mean(model: &ModelSpec, input: PosteriorInput<'_>, quad: &QuadratureSpec) -> Result<ParamTheta> {
    let prior = model.prior_theta.as_ref().ok_or_else(|| Error::config(format!("model `{}` has no prior on θ", model.id)))?;
    let d = model.theta_dim();
    if prior.dim() != d {
        return Err(Error::config("prior on θ has the wrong dimension"));
    }
    if d > 3 {
        return Err(Error::config("posterior quadrature supports θ of dimension ≤ 3"));
    }
    let fixed: Vec<Option<f64>> =
        prior.0.iter().map(|p| if let ScalarPrior::PointMass { value } = p { Some(*value) } else { None }).collect();
    let free: Vec<usize> = (0..d).filter(|&k| fixed[k].is_none()).collect();
    let fill = |v: &[f64]| {
        let mut th: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        for (k, &i) in free.iter().enumerate() {
            th[i] = v[k];
        }
        th
    };
    let loglik = |theta: &[f64]| -> f64 {
        let r = match &input {
            PosteriorInput::Data(y) => {
                if model.prior_xi.is_some() && model.xi_dim() > 0 {
                    model.bayes_marginal(&ParamTheta::new(theta.to_vec()).expect("θ non-empty"), y, quad)
                } else {
                    model.log_marginal(theta, &ParamXi::none(y.shards.len()), y, quad)
                }
            }
            PosteriorInput::Statistic { p, t, xi } => induced_log_density(p, t, theta, xi),
        };
        r.unwrap_or(f64::NAN)
    };
    let g = |v: &[f64]| {
        let th = fill(v);
        prior.log_density(&th) + loglik(&th)
    };
    if free.is_empty() {
        return ParamTheta::new(fill(&[]));
    }
    let start: Vec<f64> = free.iter().map(|&k| prior.0[k].center()).collect();
    let res = quadrature::integrate(&g, &[start], quad, true)?;
    if !res.log_value.is_finite() {
        return Err(Error::Numeric("posterior is not normalisable on the quadrature range".into()));
    }
    ParamTheta::new(fill(&res.mean))
}

pub type Estimator = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// A family of estimators keyed by the form of their input.
#[derive(Clone, Default)]
pub struct MultiphaseProcedure {
    estimators: BTreeMap<String, Estimator>,
}

impl std::fmt::Debug for MultiphaseProcedure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiphaseProcedure").field("forms", &self.forms()).finish()
    }
}

fn pairs(v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if v.is_empty() || !v.len().is_multiple_of(2) {
        return Err(Error::config("expected (estimate, standard error) pairs"));
    }
    Ok(v.chunks(2).map(|c| (c[0], c[1])).unzip())
}

impl MultiphaseProcedure {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register an estimator; forms are unique keys.
    pub fn register(&mut self, form: impl Into<String>, est: Estimator) -> Result<()> {
        let form = form.into();
        if self.estimators.contains_key(&form) {
            return Err(Error::config(format!("input form `{form}` is already registered")));
        }
        self.estimators.insert(form, est);
        Ok(())
    }

    pub fn forms(&self) -> Vec<String> {
        self.estimators.keys().cloned().collect()
    }

    pub fn lookup(&self, form: &str) -> Result<&Estimator> {
        self.estimators.get(form).ok_or_else(|| Error::Lookup { id: form.to_string(), known: self.forms() })
    }

    /// Means of per-shard estimates: `X̂` gives the unweighted mean,
    /// `(X̂,S)` the inverse-variance weighted mean of `(x̂_i, s_i)` pairs,
    /// `median` the median.
    pub fn demo() -> Self {
        let mut p = MultiphaseProcedure::new();
        p.register(
            "X̂",
            Arc::new(|v: &[f64]| {
                if v.is_empty() {
                    return Err(Error::config("no estimates supplied"));
                }
                Ok(vec![dens::mean(v)])
            }),
        )
        .expect("fresh registry");
        p.register(
            "(X̂,S)",
            Arc::new(|v: &[f64]| {
                let (x, s) = pairs(v)?;
                if s.iter().any(|&e| e <= 0.0) {
                    return Err(Error::config("standard errors must be positive"));
                }
                let w: Vec<f64> = s.iter().map(|e| 1.0 / (e * e)).collect();
                Ok(vec![x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>()])
            }),
        )
        .expect("fresh registry");
        p.register(
            "median",
            Arc::new(|v: &[f64]| {
                if v.is_empty() {
                    return Err(Error::config("no estimates supplied"));
                }
                Ok(vec![dens::median(v)])
            }),
        )
        .expect("fresh registry");
        p
    }
}

/// Prior-averaged squared-error risk `E[(δ(T) − θ)²]` for scalar
/// `θ ~ N(m, τ²)` and a linear-Gaussian statistic, by tensor Gauss–Hermite
/// over the joint law of `(θ, T)`.
pub fn integrated_risk(
    prior_mean: f64,
    prior_sd: f64,
    induced: &LinearGaussianInduced,
    estimator: &dyn Fn(&[f64]) -> Result<f64>,
    nodes: usize,
) -> Result<f64> {
    let k = induced.cov().nrows();
    let chol = induced.cov().clone().cholesky().ok_or_else(|| Error::Numeric("statistic covariance is singular".into()))?;
    let l = chol.l();
    let rule = hermite_rule(nodes);
    let dim = k + 1;
    let total = nodes.pow(dim as u32);
    let mut idx = vec![0usize; dim];
    let norm = std::f64::consts::PI.powf(dim as f64 / 2.0);
    let mut risk = 0.0;
    for _ in 0..total {
        let z: Vec<f64> = idx.iter().map(|&i| std::f64::consts::SQRT_2 * rule.nodes[i]).collect();
        let w: f64 = idx.iter().map(|&i| rule.log_weights[i]).sum::<f64>().exp() / norm;
        let theta = prior_mean + prior_sd * z[0];
        let t = induced.mean(&[theta]) + &l * DVector::from_column_slice(&z[1..]);
        let est = estimator(t.as_slice())?;
        risk += w * (est - theta).powi(2);
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < nodes {
                break;
            }
            *slot = 0;
        }
    }
    Ok(risk)
}

/// Induced law of `T = A Y` for `Y ~ N(θ 1, diag(var))`.
pub fn linear_gaussian_statistic(rows: &[Vec<f64>], var: &[f64]) -> Result<LinearGaussianInduced> {
    let n = var.len();
    let a = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
    LinearGaussianInduced::new(
        a,
        DVector::zeros(n),
        DMatrix::from_element(n, 1, 1.0),
        &DMatrix::from_diagonal(&DVector::from_column_slice(var)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::registry::model;
    use crate::preprocess::catalog;

    #[test]
    fn sample_mean_is_the_mle() {
        let y = [1.2, 2.5, 1.4];
        let f = |t: &[f64]| y.iter().map(|v| dens::normal_ln(*v, t[0], 1.0)).sum::<f64>();
        let r = mle(&f, &[0.0], 1, &OptimOptions::default());
        assert!(r.converged);
        assert!((r.theta_hat[0] - 1.7).abs() < 1e-7, "{:?}", r);
        assert!(r.xi_hat.is_none());
    }

    #[test]
    fn logistic_mle_matches_grid_search() {
        let x = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0];
        let y = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let f = |b: &[f64]| {
            x.iter()
                .zip(&y)
                .map(|(xi, yi)| {
                    let eta = b[0] + b[1] * xi;
                    yi * eta - (1.0 + eta.exp()).ln()
                })
                .sum::<f64>()
        };
        let r = mle(&f, &[0.0, 0.0], 2, &OptimOptions::default());
        let (mut best, mut arg) = (f64::NEG_INFINITY, (0.0, 0.0));
        // coarse pass then 1e-4 refinement around the coarse optimum
        for i in -300..=300 {
            for j in -300..=300 {
                let b = [i as f64 * 1e-2, j as f64 * 1e-2];
                let v = f(&b);
                if v > best {
                    best = v;
                    arg = (b[0], b[1]);
                }
            }
        }
        let (c0, c1) = arg;
        for i in -100..=100 {
            for j in -100..=100 {
                let b = [c0 + i as f64 * 1e-4, c1 + j as f64 * 1e-4];
                let v = f(&b);
                if v > best {
                    best = v;
                    arg = (b[0], b[1]);
                }
            }
        }
        assert!((r.theta_hat[0] - arg.0).abs() < 2e-4 && (r.theta_hat[1] - arg.1).abs() < 2e-4, "{:?} vs {:?}", r.theta_hat, arg);
    }

    #[test]
    fn non_finite_start_is_reported_not_raised() {
        let f = |_: &[f64]| f64::NEG_INFINITY;
        let r = mle(&f, &[1.0], 1, &OptimOptions::default());
        assert!(!r.converged);
    }

    #[test]
    fn location_equivariance() {
        let y = [0.3, -1.1, 2.0, 0.8];
        let fit = |a: f64, b: f64| {
            let ys: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            let f = move |t: &[f64]| {
                ys.iter().map(|v| dens::laplace_ln(*v, t[0], a)).sum::<f64>() + ys.iter().map(|v| dens::normal_ln(*v, t[0], a)).sum::<f64>()
            };
            mle(&f, &[0.0], 1, &OptimOptions::default()).theta_hat[0]
        };
        let base = fit(1.0, 0.0);
        let moved = fit(2.5, -3.0);
        assert!((moved - (2.5 * base - 3.0)).abs() < 1e-7, "{moved} vs {}", 2.5 * base - 3.0);
    }

    #[test]
    fn profile_without_nuisance_is_exact() {
        let f = |t: &[f64]| -(t[0] - 2.0).powi(2);
        let p = ProfileLikelihood::new(&f, 1, vec![]);
        assert_eq!(p.value(&[0.5]).value, f(&[0.5]));
    }

    #[test]
    fn gaussian_profile_matches_closed_form() {
        let y = [1.0, 2.5, -0.3, 0.9, 1.7];
        let f = |p: &[f64]| y.iter().map(|v| dens::normal_var_ln(*v, p[0], p[1])).sum::<f64>();
        let prof = ProfileLikelihood::new(&f, 1, vec![1.0]);
        for theta in [0.0, 0.5, 1.2] {
            let s2 = y.iter().map(|v| (v - theta).powi(2)).sum::<f64>() / y.len() as f64;
            let pv = prof.value(&[theta]);
            assert!((pv.value - f(&[theta, s2])).abs() < 1e-8, "{} vs {}", pv.value, f(&[theta, s2]));
            assert!(pv.converged);
        }
        let inner = |t: &[f64]| vec![y.iter().map(|v| (v - t[0]).powi(2)).sum::<f64>() / y.len() as f64];
        let exact = ProfileLikelihood::new(&f, 1, vec![1.0]).with_inner(&inner);
        assert!((exact.value(&[0.5]).value - prof.value(&[0.5]).value).abs() < 1e-8);
    }

    #[test]
    fn profile_ignores_shard_order() {
        let shards = [vec![1.0, 2.0], vec![0.5], vec![3.0, -1.0, 0.2]];
        let loglik = |order: Vec<usize>| {
            let data: Vec<Vec<f64>> = order.iter().map(|&k| shards[k].clone()).collect();
            move |p: &[f64]| data.iter().flatten().map(|v| dens::normal_var_ln(*v, p[0], p[1])).sum::<f64>()
        };
        let f1 = loglik(vec![0, 1, 2]);
        let f2 = loglik(vec![2, 0, 1]);
        let a = ProfileLikelihood::new(&f1, 1, vec![1.0]).value(&[0.7]).value;
        let b = ProfileLikelihood::new(&f2, 1, vec![1.0]).value(&[0.7]).value;
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn conjugate_posterior_mean() {
        let m = model("iid_normal").unwrap();
        let pm = posterior_mean(&m, PosteriorInput::Data(&DataY::single(vec![2.0])), &QuadratureSpec::default()).unwrap();
        assert!((pm.values()[0] - 1.0).abs() < 1e-8, "{:?}", pm);
    }

    #[test]
    fn flat_prior_posterior_mean_is_sample_mean() {
        let m = model("iid_normal").unwrap().with_prior_theta(crate::model::Prior(vec![ScalarPrior::Flat]));
        let y = DataY::single(vec![0.4, 2.2, 1.3, -0.1]);
        let pm = posterior_mean(&m, PosteriorInput::Data(&y), &QuadratureSpec::default()).unwrap();
        assert!((pm.values()[0] - 0.95).abs() < 1e-8);
    }

    #[test]
    fn sum_statistic_gives_same_posterior_mean() {
        let m = model("iid_normal").unwrap();
        let y = DataY::single(vec![0.4, 2.2, 1.3, -0.1]);
        let full = posterior_mean(&m, PosteriorInput::Data(&y), &QuadratureSpec::default()).unwrap();
        let p = catalog::shard_sum().with_induced(Arc::new(linear_gaussian_statistic(&[vec![1.0; 4]], &[1.0; 4]).unwrap()));
        let t = p.apply(&y).unwrap();
        let xi = ParamXi::none(1);
        let red = posterior_mean(&m, PosteriorInput::Statistic { p: &p, t: &t, xi: &xi }, &QuadratureSpec::default()).unwrap();
        assert!((full.values()[0] - red.values()[0]).abs() < 1e-8);
        assert!((full.values()[0] - 3.8 / 5.0).abs() < 1e-8);
    }

    #[test]
    fn posterior_requires_prior() {
        let mut m = model("iid_normal").unwrap();
        m.prior_theta = None;
        assert!(matches!(
            posterior_mean(&m, PosteriorInput::Data(&DataY::single(vec![0.0])), &QuadratureSpec::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn demo_procedure_lookup() {
        let p = MultiphaseProcedure::demo();
        assert_eq!(p.lookup("X̂").unwrap()(&[1.0, 3.0]).unwrap(), vec![2.0]);
        let w = p.lookup("(X̂,S)").unwrap()(&[1.0, 1.0, 3.0, 2.0]).unwrap()[0];
        assert!((w - 1.4).abs() < 1e-15);
        let eq = p.lookup("(X̂,S)").unwrap()(&[1.0, 0.7, 3.0, 0.7]).unwrap()[0];
        assert!((eq - 2.0).abs() < 1e-15);
        match p.lookup("X̃") {
            Err(Error::Lookup { known, .. }) => assert_eq!(known.len(), 3),
            Err(e) => panic!("{e:?}"),
            Ok(_) => panic!("unknown form resolved"),
        }
        let mut q = MultiphaseProcedure::demo();
        assert!(q.register("X̂", Arc::new(|_: &[f64]| Ok(vec![0.0]))).is_err());
    }

    #[test]
    fn integrated_risk_matches_posterior_variance() {
        // θ ~ N(0, 2²), T = Y_1 + Y_2 with Y_i ~ N(θ, 1): risk = (1/4 + 2)⁻¹
        let ind = linear_gaussian_statistic(&[vec![1.0, 1.0]], &[1.0, 1.0]).unwrap();
        let est = |t: &[f64]| Ok(t[0] / (2.0 + 0.25));
        let r = integrated_risk(0.0, 2.0, &ind, &est, 8).unwrap();
        assert!((r - 1.0 / 2.25).abs() < 1e-12);
    }
}
