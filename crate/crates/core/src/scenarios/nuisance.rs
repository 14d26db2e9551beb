use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Claim, Ctx, Relation, ScenarioReport};
use crate::dens;
use crate::error::Result;
use crate::inference::{mle, OptimOptions};
use crate::information::{fraction_missing, observed_info, regret_decomposition, reparameterize_info};
use crate::mc_engine::{distributed_preprocess, simulate, EstimatorKind, EstimatorSpec, ExperimentConfig, ShardPreprocessor, XiRule};
use crate::model::DataY;
use crate::par::{try_map_indexed, Workers};
use crate::preprocess::{catalog, Preprocessor, StatisticKind};
use crate::rng::{split_seed, stream};

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample critical value at level 0.01.
fn ks_critical(na: usize, nb: usize) -> f64 {
    1.6276 * ((na + nb) as f64 / (na * nb) as f64).sqrt()
}

pub(super) fn partial_pivot(ctx: &Ctx<'_>, report: &mut ScenarioReport) -> Result<()> {
    let x = vec![1.0, 2.0, 3.0, 4.0];
    let n = ctx.size(500);
    let beta0 = 1.0;
    let slopes = [-3.0, 0.0, 3.0];
    let draw = |p: &Preprocessor, b1: f64| -> Result<Vec<f64>> {
        try_map_indexed(n, ctx.cfg.workers, |s| -> Result<f64> {
            // the same noise for every slope, so only β₁ differs between samples
            let mut rng = stream(split_seed(ctx.seed, s as u64), 0);
            let y: Vec<f64> = x.iter().map(|xj| beta0 + b1 * xj + rng.sample::<f64, _>(StandardNormal)).collect();
            Ok(p.apply(&DataY::single(y))?.values[0])
        })
    };
    let pivot = catalog::residual_mean(x.clone());
    let control = catalog::ols_slope(x.clone());
    let crit = ks_critical(n, n);
    let samples: Vec<Vec<f64>> = slopes.iter().map(|&b| draw(&pivot, b)).collect::<Result<_>>()?;
    for (a, b) in [(0, 2), (0, 1), (1, 2)] {
        let d = ks_statistic(&samples[a], &samples[b]);
        report.claim(Claim::new(format!("KS of residual mean, β₁ = {} vs {}", slopes[a], slopes[b]), d, crit, 0.0, Relation::Below));
    }
    let lo = draw(&control, slopes[0])?;
    let hi = draw(&control, slopes[2])?;
    report.claim(Claim::new("KS of least-squares slope, β₁ = -3 vs 3", ks_statistic(&lo, &hi), crit, 0.0, Relation::Above));
    Ok(())
}

/// MLE of a variance on the log scale for a one-parameter log-likelihood.
fn variance_mle(loglik: &(dyn Fn(f64) -> f64 + Sync)) -> f64 {
    let f = |p: &[f64]| loglik(p[0].exp());
    mle(&f, &[0.0], 1, &OptimOptions { restarts: 1, ..OptimOptions::default() }).theta_hat[0].exp()
}

pub(super) fn neyman_scott(ctx: &Ctx<'_>, report: &mut ScenarioReport) -> Result<()> {
    let n = ctx.size(2000);
    let m = 2;
    let reps = ctx.reps(20);
    let contrast = catalog::difference_contrast();
    let pairs = try_map_indexed(reps, ctx.cfg.workers, |k| -> Result<(f64, f64)> {
        let mut rng = stream(ctx.seed, k as u64);
        let shards: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mu: f64 = 5.0 * rng.sample::<f64, _>(StandardNormal);
                (0..m).map(|_| mu + rng.sample::<f64, _>(StandardNormal)).collect()
            })
            .collect();
        let y = DataY::new(shards);
        let means: Vec<f64> = y.shards.iter().map(|s| dens::mean(s)).collect();
        let full = |v: f64| -> f64 {
            y.shards.iter().zip(&means).map(|(s, mu)| s.iter().map(|yj| dens::normal_var_ln(*yj, *mu, v)).sum::<f64>()).sum()
        };
        let ps: Vec<&dyn ShardPreprocessor> = vec![&contrast; n];
        let t: Vec<f64> = distributed_preprocess(&y, &ps, Workers::SEQUENTIAL)?.into_iter().flat_map(|s| s.values).collect();
        let reduced = |v: f64| -> f64 { t.iter().map(|ti| dens::normal_var_ln(*ti, 0.0, v)).sum() };
        Ok((variance_mle(&full), variance_mle(&reduced)))
    })?;
    let (sy, st): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let sigma2 = 1.0;
    report.claim(Claim::within("σ̂² from all data with shard means profiled", dens::mean(&sy), sigma2 * (m - 1) as f64 / m as f64, 0.03));
    report.claim(Claim::within("σ̂² from within-shard contrasts", dens::mean(&st), sigma2, 0.03));
    report.artifact(
        "sigma2_full",
        &crate::information::McValue { value: dens::mean(&sy), std_error: (dens::sample_var(&sy) / reps as f64).sqrt() },
    )?;
    report.artifact(
        "sigma2_contrast",
        &crate::information::McValue { value: dens::mean(&st), std_error: (dens::sample_var(&st) / reps as f64).sqrt() },
    )
}

pub(super) fn missing_info(ctx: &Ctx<'_>, report: &mut ScenarioReport) -> Result<()> {
    let n = 100;
    let half: Vec<usize> = (0..n / 2).collect();
    let cfg = ExperimentConfig {
        model: "iid_normal".into(),
        shard_sizes: vec![n],
        theta: vec![0.4],
        xi: XiRule::None,
        estimators: vec![
            EstimatorSpec { id: "full_mean".into(), statistic: StatisticKind::Identity, estimator: EstimatorKind::Mean },
            EstimatorSpec {
                id: "half_mean".into(),
                statistic: StatisticKind::Select { indices: half.clone() },
                estimator: EstimatorKind::Mean,
            },
            EstimatorSpec { id: "full_median".into(), statistic: StatisticKind::Identity, estimator: EstimatorKind::Median },
        ],
        replications: ctx.reps(10_000),
        seed: ctx.seed,
        loss: Default::default(),
        workers: ctx.cfg.workers.0,
    };
    let sim = simulate(&cfg)?;
    let (full, halfm, median) = (sim.first_coordinate(0), sim.first_coordinate(1), sim.first_coordinate(2));
    let f_half = 1.0 - (n / 2) as f64 / n as f64;
    let regret = regret_decomposition(&full, &halfm, 20, Some(f_half))?;
    let r = &regret.missing_ratio;
    report.claim(Claim::within("Var(δ(T) − δ(Y)) / Var(δ(T)) for the half-data mean", r.value, f_half, 3.0 * r.std_error));
    let e = &regret.efficiency_ratio;
    report.claim(Claim::within("Var(δ(Y)) / Var(δ(T)) for the half-data mean", e.value, 1.0 - f_half, 3.0 * e.std_error));
    let g = &regret.additive_gap;
    report.claim(Claim::within("additive regret gap for the half-data mean", g.value, 0.0, 3.0 * g.std_error));
    let broken = regret_decomposition(&median, &halfm, 20, None)?;
    report.claim(Claim::new(
        "|additive gap| in standard errors, half-data mean vs full median",
        broken.additive_gap.z(0.0).abs(),
        5.0,
        0.0,
        Relation::Above,
    ));

    let mut rng = stream(ctx.seed, 1 << 20);
    let y: Vec<f64> = (0..n).map(|_| 0.4 + rng.sample::<f64, _>(StandardNormal)).collect();
    let ll = |d: &[f64], t: f64| d.iter().map(|v| dens::normal_ln(*v, t, 1.0)).sum::<f64>();
    let ll_y = |t: &[f64]| ll(&y, t[0]);
    let ll_t = |t: &[f64]| ll(&y[..n / 2], t[0]);
    let iy = observed_info(&ll_y, &[dens::mean(&y)], 1e-4);
    let it = observed_info(&ll_t, &[dens::mean(&y[..n / 2])], 1e-4);
    let f = fraction_missing(&iy.matrix, &it.matrix)?;
    report.claim(Claim::within("F from observed information, half-data mean", f.f[(0, 0)], f_half, 1e-4));

    let iy2 = DMatrix::from_row_slice(2, 2, &[100.0, 0.0, 0.0, 100.0]);
    let it2 = DMatrix::from_row_slice(2, 2, &[60.0, 10.0, 10.0, 40.0]);
    let base = fraction_missing(&iy2, &it2)?;
    let a = loop {
        let a = DMatrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        if a.determinant().abs() > 0.1 {
            break a;
        }
    };
    let moved = fraction_missing(&reparameterize_info(&iy2, &a), &reparameterize_info(&it2, &a))?;
    let shift = base.eigenvalues.iter().zip(&moved.eigenvalues).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    report.claim(Claim::new("F eigenvalue shift under a random linear map", shift, 0.0, 1e-6, Relation::AtMost));

    let it3 = DMatrix::from_row_slice(2, 2, &[100.0, 0.0, 0.0, 25.0]);
    let before = fraction_missing(&iy2, &it3)?;
    report.claim(Claim::within("F[1][1] with diagonal information", before.f[(1, 1)], 0.75, 1e-12));
    // θ = Aφ for φ = (θ₁ − θ₂, θ₁ + θ₂)
    let sum_diff = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, -0.5, 0.5]);
    let after = fraction_missing(&reparameterize_info(&iy2, &sum_diff), &reparameterize_info(&it3, &sum_diff))?;
    report.claim(Claim::new(
        "change in F[0][0] under (θ₁ − θ₂, θ₁ + θ₂)",
        (after.f[(0, 0)] - before.f[(0, 0)]).abs(),
        0.0,
        1e-3,
        Relation::Above,
    ));
    report.artifact("regret", &regret)?;
    report.artifact("regret_median", &broken)
}
