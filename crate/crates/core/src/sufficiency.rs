//! Numerical checks of sufficiency, the distributed separability condition
//! and conditional independence between shards.
//!
//! A passing factorization check only fails to refute sufficiency at the
//! given tolerance; a failing one carries a witness that reproduces the
//! deviation.

use serde::{Deserialize, Serialize};

use crate::dens;
use crate::error::{Error, Result};
use crate::model::working::WorkingModel;
use crate::model::{DataY, LatentX, ModelSpec, ParamPoint, ParamTheta, ParamXi};
use crate::num;
use crate::par::{try_map_indexed, Workers};
use crate::preprocess::{Preprocessor, Statistic, StatisticKind};
use crate::quadrature::QuadratureSpec;
use crate::rng::{rng_from_seed, split_seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "consistent-with-sufficiency")]
    Consistent,
    #[serde(rename = "fail")]
    Fail,
    #[serde(rename = "untestable")]
    Untestable,
}

impl Verdict {
    pub fn passed(self) -> bool {
        self == Verdict::Consistent
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckConfig {
    pub shard_sizes: Vec<usize>,
    pub n_probe: usize,
    /// Orbit draws compared against each probe.
    pub orbit_draws: usize,
    #[serde(with = "num")]
    pub tol: f64,
    pub seed: u64,
    #[serde(skip)]
    pub workers: Workers,
    pub quad: QuadratureSpec,
}

impl CheckConfig {
    pub fn new(shard_sizes: Vec<usize>, seed: u64) -> Self {
        CheckConfig {
            shard_sizes,
            n_probe: 8,
            orbit_draws: 2,
            tol: 1e-6,
            seed,
            workers: Workers::default(),
            quad: QuadratureSpec::default(),
        }
    }
}

/// Parameter probe pairs drawn from the model's declared box.
pub fn default_pairs(model: &ModelSpec, shards: usize, seed: u64) -> Vec<(ParamPoint, ParamPoint)> {
    model.param_box.sample_pairs(8, shards, seed)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub probe: usize,
    pub y: DataY,
    pub y_orbit: DataY,
    pub pair: (ParamPoint, ParamPoint),
    #[serde(with = "num")]
    pub delta_y: f64,
    #[serde(with = "num")]
    pub delta_orbit: f64,
}

impl Witness {
    /// Recompute the log-likelihood-ratio deviation from scratch.
    pub fn reproduce(&self, model: &ModelSpec, quad: &QuadratureSpec) -> Result<f64> {
        let d0 = log_ratio(model, &self.pair, &self.y, quad)?;
        let d1 = log_ratio(model, &self.pair, &self.y_orbit, quad)?;
        Ok(deviation(d0, d1))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SufficiencyReport {
    pub statistic_id: String,
    pub model_id: String,
    pub probe_count: usize,
    pub pair_count: usize,
    #[serde(with = "num")]
    pub max_deviation: f64,
    #[serde(with = "num")]
    pub tolerance: f64,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
}

fn log_ratio(model: &ModelSpec, pair: &(ParamPoint, ParamPoint), y: &DataY, quad: &QuadratureSpec) -> Result<f64> {
    let ((ta, xa), (tb, xb)) = pair;
    Ok(model.log_marginal(ta.values(), xa, y, quad)? - model.log_marginal(tb.values(), xb, y, quad)?)
}

fn deviation(d0: f64, d1: f64) -> f64 {
    if d0 == d1 {
        return 0.0;
    }
    if !(d0.is_finite() && d1.is_finite()) {
        return f64::INFINITY;
    }
    (d0 - d1).abs() / d0.abs().max(1.0)
}

/// Compare `ℓ(θ,ξ;y) − ℓ(θ′,ξ′;y)` at probe data and at orbit draws with the
/// same statistic value.
pub fn factorization_check(
    model: &ModelSpec,
    p: &Preprocessor,
    pairs: &[(ParamPoint, ParamPoint)],
    cfg: &CheckConfig,
) -> Result<SufficiencyReport> {
    let mut report = SufficiencyReport {
        statistic_id: p.id.clone(),
        model_id: model.id.clone(),
        probe_count: cfg.n_probe,
        pair_count: pairs.len(),
        max_deviation: 0.0,
        tolerance: cfg.tol,
        verdict: Verdict::Untestable,
        witness: None,
    };
    if !p.has_orbit() {
        return Ok(report);
    }
    let r = cfg.shard_sizes.len();
    let probes = try_map_indexed(cfg.n_probe, cfg.workers, |k| -> Result<Option<(f64, Witness)>> {
        let seed = split_seed(cfg.seed, k as u64);
        let mut rng = rng_from_seed(split_seed(seed, 0));
        let (theta, xi) = model.param_box.sample(r, &mut rng);
        let (_, y) = model.sample_with(theta.values(), &xi, &cfg.shard_sizes, &mut rng)?;
        let mut best: Option<(f64, Witness)> = None;
        for draw in 0..cfg.orbit_draws {
            let y_orbit = p.orbit_sample(&y, split_seed(seed, 1 + draw as u64))?;
            for pair in pairs {
                let d0 = log_ratio(model, pair, &y, &cfg.quad)?;
                let d1 = log_ratio(model, pair, &y_orbit, &cfg.quad)?;
                let dev = deviation(d0, d1);
                if best.as_ref().is_none_or(|(b, _)| dev > *b) {
                    let w = Witness { probe: k, y: y.clone(), y_orbit: y_orbit.clone(), pair: pair.clone(), delta_y: d0, delta_orbit: d1 };
                    best = Some((dev, w));
                }
            }
        }
        Ok(best)
    })?;
    let mut worst: Option<(f64, Witness)> = None;
    for (dev, w) in probes.into_iter().flatten() {
        if worst.as_ref().is_none_or(|(b, _)| dev > *b) {
            worst = Some((dev, w));
        }
    }
    report.max_deviation = worst.as_ref().map_or(0.0, |(d, _)| *d);
    report.verdict = if report.max_deviation <= cfg.tol { Verdict::Consistent } else { Verdict::Fail };
    if report.verdict == Verdict::Fail {
        report.witness = worst.map(|(_, w)| w);
    }
    Ok(report)
}

/// Uniform evaluation grid, one axis per latent coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    #[serde(with = "num::vecvec")]
    pub axes: Vec<Vec<f64>>,
}

impl GridSpec {
    /// `points` values over `center ± half_width · sd` for each coordinate.
    pub fn around(center: &[f64], sd: &[f64], points: usize, half_width: f64) -> Self {
        let axes = center
            .iter()
            .zip(sd)
            .map(|(&c, &s)| (0..points).map(|k| c - half_width * s + 2.0 * half_width * s * k as f64 / (points - 1) as f64).collect())
            .collect();
        GridSpec { points, axes }
    }

    /// The default 41-point, ±5 sd grid.
    pub fn standard(center: &[f64], sd: &[f64]) -> Self {
        Self::around(center, sd, 41, 5.0)
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn point(&self, mut k: usize) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| {
                let v = a[k % a.len()];
                k /= a.len();
                v
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DscReport {
    pub working_model: String,
    pub grid_points: usize,
    #[serde(with = "num")]
    pub max_abs_error: f64,
    #[serde(with = "num")]
    pub tolerance: f64,
    pub passed: bool,
    /// Grid points whose error exceeds the tolerance.
    pub mismatched_points: usize,
    #[serde(with = "num::vec")]
    pub worst_point: Vec<f64>,
}

/// Largest latent dimension the DSC grid is evaluated on.
pub const DSC_MAX_DIM: usize = 4;

/// Compare `p_sci(X | θ)` with `∫ Π_i p̃(X_i | g_i(η)) dp(η | θ)` on a grid.
pub fn dsc_check(
    w: &WorkingModel,
    sci: &ModelSpec,
    grid: &GridSpec,
    theta: &ParamTheta,
    tol: f64,
    quad: &QuadratureSpec,
    workers: Workers,
) -> Result<DscReport> {
    if w.mixing.is_none() {
        return Err(Error::config(format!("working model `{}` has no mixing measure", w.id)));
    }
    let dims = w.latent_dims();
    let total: usize = dims.iter().sum();
    if total > DSC_MAX_DIM || grid.axes.len() != total {
        return Err(Error::config(format!("grid has {} axes for latent dimension {total} (limit {DSC_MAX_DIM})", grid.axes.len())));
    }
    sci.sci.check_latent_dims(&dims)?;
    let first = grid.axes[0].len();
    let inner = grid.len() / first.max(1);
    let rows = try_map_indexed(first, workers, |a| -> Result<(f64, usize, usize)> {
        let (mut worst, mut at, mut bad) = (0.0f64, a, 0usize);
        for b in 0..inner {
            let k = a + first * b;
            let x = LatentX::from_flat(&dims, &grid.point(k));
            let truth = sci.sci.log_density(&x, theta.values()).exp();
            let mix = w.log_mixture(&x, theta.values(), quad)?.exp();
            let err = (truth - mix).abs();
            if err > tol {
                bad += 1;
            }
            if err > worst {
                worst = err;
                at = k;
            }
        }
        Ok((worst, at, bad))
    })?;
    let mut report = DscReport {
        working_model: w.id.clone(),
        grid_points: grid.len(),
        max_abs_error: 0.0,
        tolerance: tol,
        passed: true,
        mismatched_points: 0,
        worst_point: grid.point(0),
    };
    for (worst, at, bad) in rows {
        report.mismatched_points += bad;
        if worst > report.max_abs_error {
            report.max_abs_error = worst;
            report.worst_point = grid.point(at);
        }
    }
    report.passed = report.max_abs_error <= tol;
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CiReport {
    pub test_function: String,
    pub probe_count: usize,
    #[serde(with = "num")]
    pub estimate: f64,
    #[serde(with = "num")]
    pub std_error: f64,
    #[serde(with = "num")]
    pub z: f64,
    pub warnings: Vec<String>,
}

/// Mean over coordinates of `sign(y1_k) sign(y2_k)`.
fn sign_agreement(a: &[f64], b: &[f64]) -> f64 {
    dens::mean(&a.iter().zip(b).map(|(x, y)| x.signum() * y.signum()).collect::<Vec<_>>())
}

/// Association between shards 1 and 2 beyond what `(T_1, T_2)` carries: the
/// sign-agreement of the observed pair minus that of a pair redrawn on the
/// two orbits.
#[allow(clippy::too_many_arguments)]
pub fn conditional_independence_check(
    model: &ModelSpec,
    p1: &Preprocessor,
    p2: &Preprocessor,
    theta: &ParamTheta,
    xi: &ParamXi,
    shard_sizes: &[usize],
    n_probe: usize,
    seed: u64,
    workers: Workers,
) -> Result<CiReport> {
    if shard_sizes.len() != 2 {
        return Err(Error::config("conditional independence is checked between exactly two shards"));
    }
    for p in [p1, p2] {
        if !p.kind.per_shard() && p.kind != StatisticKind::Identity {
            return Err(Error::config(format!("`{}` is not a per-shard statistic", p.id)));
        }
    }
    let diffs = try_map_indexed(n_probe, workers, |k| -> Result<f64> {
        let s = split_seed(seed, k as u64);
        let mut rng = rng_from_seed(split_seed(s, 0));
        let (_, y) = model.sample_with(theta.values(), xi, shard_sizes, &mut rng)?;
        let y1 = DataY::single(y.shards[0].clone());
        let y2 = DataY::single(y.shards[1].clone());
        let o1 = p1.orbit_sample(&y1, split_seed(s, 1))?;
        let o2 = p2.orbit_sample(&y2, split_seed(s, 2))?;
        Ok(sign_agreement(&y.shards[0], &y.shards[1]) - sign_agreement(&o1.shards[0], &o2.shards[0]))
    })?;
    let n = diffs.len();
    let mut warnings = Vec::new();
    if n < 100 {
        warnings.push(format!("only {n} probes; standard error is imprecise"));
    }
    let estimate = if n == 0 { 0.0 } else { dens::mean(&diffs) };
    let std_error = if n < 2 { f64::NAN } else { (dens::sample_var(&diffs) / n as f64).sqrt() };
    let z = if std_error > 0.0 {
        estimate / std_error
    } else if estimate == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(estimate)
    };
    Ok(CiReport { test_function: "sign_agreement".into(), probe_count: n, estimate, std_error, z, warnings })
}

/// Per-shard minimal sufficient statistics for `(X_i, ξ_i)`.
pub fn safe_strategy_statistic(model: &ModelSpec, y: &DataY) -> Result<Statistic> {
    let mut values = Vec::new();
    for s in &y.shards {
        let t = model
            .obs
            .minimal_statistic(s)
            .ok_or_else(|| Error::Capability(format!("observation model `{}` has no registered minimal statistic", model.obs.id())))?;
        values.extend(t);
    }
    Ok(Statistic { id: format!("safe:{}", model.obs.id()), shard: None, values, derivation_parent: None })
}

/// The preprocessor computing [`safe_strategy_statistic`], with its orbit sampler.
pub fn safe_strategy_preprocessor(model: &ModelSpec, shard_sizes: &[usize]) -> Result<Preprocessor> {
    let obs = model.obs.id();
    let kind = match obs {
        "gaussian_mean" => StatisticKind::MeanSumSquares,
        "gaussian_offset" => StatisticKind::ShardMean,
        "identity" | "random_variance_obs" => StatisticKind::Identity,
        "gaussian_noise" => {
            let latent = model.latent_dims(shard_sizes)?;
            let reps = shard_sizes.first().zip(latent.first()).map_or(1, |(m, d)| m / d.max(&1));
            StatisticKind::BlockMeans { reps }
        }
        other => return Err(Error::Capability(format!("no safe-strategy preprocessor for `{other}`"))),
    };
    Ok(Preprocessor::new(format!("safe:{obs}"), kind))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::registry::model;
    use crate::model::working;
    use crate::preprocess::catalog;

    fn cfg(sizes: Vec<usize>) -> CheckConfig {
        CheckConfig::new(sizes, 2024)
    }

    #[test]
    fn sum_is_sufficient_first_coordinate_is_not() {
        let m = model("iid_normal").unwrap();
        let pairs = default_pairs(&m, 1, 1);
        let pass = factorization_check(&m, &catalog::shard_sum(), &pairs, &cfg(vec![4])).unwrap();
        assert_eq!(pass.verdict, Verdict::Consistent);
        assert!(pass.max_deviation < 1e-8, "{}", pass.max_deviation);
        let fail = factorization_check(&m, &catalog::select(vec![0]), &pairs, &cfg(vec![4])).unwrap();
        assert_eq!(fail.verdict, Verdict::Fail);
        let w = fail.witness.unwrap();
        let again = w.reproduce(&m, &QuadratureSpec::default()).unwrap();
        assert!((again - fail.max_deviation).abs() <= 1e-12 * fail.max_deviation.max(1.0));
    }

    #[test]
    fn untestable_without_orbit() {
        let m = model("iid_normal").unwrap();
        let p = catalog::cross_term(
            crate::preprocess::Block { shard: 0, start: 0, len: 1 },
            crate::preprocess::Block { shard: 0, start: 1, len: 1 },
        );
        let r = factorization_check(&m, &p, &default_pairs(&m, 1, 1), &cfg(vec![4])).unwrap();
        assert_eq!(r.verdict, Verdict::Untestable);
    }

    #[test]
    fn verdict_is_independent_of_worker_count() {
        let m = model("gaussian_location").unwrap();
        let pairs = default_pairs(&m, 2, 3);
        let mut c = cfg(vec![3, 2]);
        c.workers = Workers(Some(1));
        let a = factorization_check(&m, &catalog::shard_mean(), &pairs, &c).unwrap();
        c.workers = Workers(Some(3));
        let b = factorization_check(&m, &catalog::shard_mean(), &pairs, &c).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn saturated_dsc_passes() {
        let m = model("iid_normal").unwrap();
        let w = working::saturated(m.sci.clone(), &[1, 1]).unwrap();
        let grid = GridSpec::standard(&[0.2, 0.2], &[1.0, 1.0]);
        let r = dsc_check(&w, &m, &grid, &ParamTheta::scalar(0.2), 1e-6, &QuadratureSpec::default(), Workers::default()).unwrap();
        assert!(r.passed);
        assert_eq!(r.max_abs_error, 0.0);
        assert_eq!(r.grid_points, 41 * 41);
    }

    #[test]
    fn dsc_needs_mixing_measure() {
        let m = model("iid_normal").unwrap();
        let w = working::WorkingModel::new("bare", vec![Arc::new(working::CenteredNormal { dim: 1 })], vec![vec![0]]).unwrap();
        let r = dsc_check(
            &w,
            &m,
            &GridSpec::standard(&[0.0], &[1.0]),
            &ParamTheta::scalar(0.0),
            1e-6,
            &QuadratureSpec::default(),
            Workers::default(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn independent_shards_show_no_association() {
        let m = model("gaussian_location").unwrap();
        let r = conditional_independence_check(
            &m,
            &catalog::mean_ss(),
            &catalog::mean_ss(),
            &ParamTheta::scalar(0.5),
            &ParamXi::repeat(2, &[1.0]),
            &[8, 8],
            2000,
            5,
            Workers::default(),
        )
        .unwrap();
        assert!(r.z.abs() < 3.0, "z = {}", r.z);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn few_probes_warn() {
        let m = model("gaussian_location").unwrap();
        let r = conditional_independence_check(
            &m,
            &catalog::identity(),
            &catalog::identity(),
            &ParamTheta::scalar(0.5),
            &ParamXi::repeat(2, &[1.0]),
            &[2, 2],
            10,
            5,
            Workers::default(),
        )
        .unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.z, 0.0);
    }

    #[test]
    fn safe_strategy_values() {
        let m = model("gaussian_location").unwrap();
        let t = safe_strategy_statistic(&m, &DataY::new(vec![vec![1.0, 2.0, 6.0], vec![4.0]])).unwrap();
        assert_eq!(t.values, vec![3.0, 14.0, 4.0]);
        let p = safe_strategy_preprocessor(&m, &[3, 1]).unwrap();
        assert_eq!(p.apply(&DataY::new(vec![vec![1.0, 2.0, 6.0], vec![4.0]])).unwrap().values, t.values);
    }
}
