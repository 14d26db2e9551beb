use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{Claim, Ctx, Relation, ScenarioReport};
use crate::error::Result;
use crate::inference::{integrated_risk, linear_gaussian_statistic, posterior_mean, PosteriorInput};
use crate::mc_engine::{run_experiment, EstimatorKind, EstimatorSpec, ExperimentConfig, Loss, XiRule};
use crate::model::registry::model;
use crate::model::ParamXi;
use crate::preprocess::{DerivationDag, Preprocessor, Statistic, StatisticKind};
use crate::quadrature::QuadratureSpec;

pub(super) fn weighted_mean(ctx: &Ctx<'_>, report: &mut ScenarioReport) -> Result<()> {
    let (v1, v2) = (1.0, 4.0);
    let cfg = ExperimentConfig {
        model: "common_mean".into(),
        shard_sizes: vec![1, 1],
        theta: vec![0.5],
        xi: XiRule::Fixed { values: vec![vec![v1], vec![v2]] },
        estimators: vec![
            EstimatorSpec {
                id: "weighted".into(),
                statistic: StatisticKind::MeanKnownSe { sd: vec![v1.sqrt(), v2.sqrt()] },
                estimator: EstimatorKind::Procedure { form: "(X̂,S)".into() },
            },
            EstimatorSpec {
                id: "unweighted".into(),
                statistic: StatisticKind::ShardMean,
                estimator: EstimatorKind::Procedure { form: "X̂".into() },
            },
        ],
        replications: ctx.reps(10_000),
        seed: ctx.seed,
        loss: Loss::Squared,
        workers: ctx.cfg.workers.0,
    };
    let rep = run_experiment(&cfg)?;
    let w = rep.estimators[0].risk;
    let u = rep.estimators[1].risk;
    report.claim(Claim::within("risk of inverse-variance weighted mean", w.value, 1.0 / (1.0 / v1 + 1.0 / v2), 3.0 * w.std_error));
    report.claim(Claim::within("risk of unweighted mean", u.value, (v1 + v2) / 4.0, 3.0 * u.std_error));
    let d = &rep.paired[0].mean_loss_diff;
    report.claim(Claim::new("weighted minus unweighted loss (risk monotone)", d.value, 0.0, 0.0, Relation::Below));
    report.artifact("risk_report", &rep)
}

/// Rows selecting/combining coordinates of an 8-vector.
fn rows(spec: &[&[(usize, f64)]]) -> Vec<Vec<f64>> {
    spec.iter()
        .map(|r| {
            let mut v = vec![0.0; 8];
            for &(k, c) in *r {
                v[k] = c;
            }
            v
        })
        .collect()
}

/// `(1/τ² + dᵀ(AAᵀ)⁻¹d)⁻¹` with `d = A·1`: posterior variance of θ from
/// `T = AY`, `Y ~ N(θ1, I)`, `θ ~ N(0, τ²)`.
fn bayes_risk_oracle(a: &[Vec<f64>], tau: f64) -> f64 {
    let m = DMatrix::from_fn(a.len(), 8, |r, c| a[r][c]);
    let d = &m * DVector::from_element(8, 1.0);
    let gram = (&m * m.transpose()).try_inverse().expect("full-rank rows");
    let info = (d.transpose() * gram * &d)[(0, 0)];
    1.0 / (1.0 / (tau * tau) + info)
}

pub(super) fn basis_construction(_ctx: &Ctx<'_>, report: &mut ScenarioReport) -> Result<()> {
    let stats: Vec<(&str, Vec<Vec<f64>>)> = vec![
        ("T1", rows(&[&[(0, 1.0)], &[(1, 1.0)], &[(2, 1.0)], &[(3, 1.0)]])),
        ("T2", rows(&[&[(4, 1.0)], &[(5, 1.0)], &[(6, 1.0)], &[(7, 1.0)]])),
        ("T3", rows(&[&[(0, 1.0), (1, 1.0)], &[(2, 1.0)]])),
        ("T4", rows(&[&[(4, 1.0)], &[(5, 1.0)]])),
        ("T5", rows(&[&[(0, 1.0), (1, 1.0)]])),
        ("T6", rows(&[&[(4, 1.0), (5, 2.0)]])),
        ("T7", rows(&[&[(3, 1.0)]])),
        ("T8", rows(&[&[(4, 1.0), (5, 1.0), (6, 1.0), (7, 1.0)]])),
    ];
    let mut dag = DerivationDag::new();
    for (id, _) in &stats {
        dag.add_node(*id);
    }
    for (c, p) in [("T3", "T1"), ("T5", "T3"), ("T7", "T1"), ("T4", "T2"), ("T6", "T4"), ("T8", "T2")] {
        dag.add_edge(c, p)?;
    }
    report.claim(Claim::holds("T3 ⪯ T1", dag.check_dominates("T3", "T1")?, true));
    report.claim(Claim::holds("T3 ⪯ T2", dag.check_dominates("T3", "T2")?, false));
    let ancestors = dag.basis_ancestors(&["T1", "T2"])?;
    report.claim(Claim::within("non-basis nodes with a unique basis ancestor", ancestors.len() as f64, 6.0, 0.0));

    let m = model("iid_normal")?;
    let tau = 1.0;
    let quad = QuadratureSpec::default();
    let xi = ParamXi::none(1);
    let mut risks = std::collections::BTreeMap::new();
    for (id, a) in &stats {
        let induced = Arc::new(linear_gaussian_statistic(a, &[1.0; 8])?);
        let p = Preprocessor::new(*id, StatisticKind::Linear { rows: a.clone() }).with_induced(induced.clone());
        let est = |t: &[f64]| -> Result<f64> {
            let stat = Statistic { id: id.to_string(), shard: None, values: t.to_vec(), derivation_parent: None };
            Ok(posterior_mean(&m, PosteriorInput::Statistic { p: &p, t: &stat, xi: &xi }, &quad)?.values()[0])
        };
        // the loss is quadratic in the nodes, so 4 Gauss–Hermite points are exact
        let r = integrated_risk(0.0, tau, &induced, &est, 4)?;
        report.claim(Claim::within(format!("integrated risk of posterior mean on {id}"), r, bayes_risk_oracle(a, tau), 1e-6));
        risks.insert(id.to_string(), r);
    }
    for root in ["T1", "T2"] {
        for chain in dag.descendant_chains(root)? {
            for pair in chain.windows(2) {
                let (parent, child) = (&pair[0], &pair[1]);
                report.claim(Claim::new(
                    format!("r({parent}) ≤ r({child}) along {}", chain.join("→")),
                    risks[parent],
                    risks[child],
                    1e-6,
                    Relation::AtMost,
                ));
            }
        }
    }
    report.artifact("dag", &dag)
}

fn binomial(n: u64, k: u64) -> u128 {
    (0..k).fold(1u128, |acc, j| acc * u128::from(n - j) / u128::from(j + 1))
}

pub(super) fn intermediate_loss(_ctx: &Ctx<'_>, report: &mut ScenarioReport) -> Result<()> {
    // θ ∈ {1, 2, 3} with prior ∝ (1, 2, 1); Y | θ ~ Binomial(7, θ/4).
    // The downstream estimator is fixed at δ(0) = 1, δ(1) = 3.
    let thetas = [1i128, 2, 3];
    let prior = [1u128, 2, 1];
    let delta = [1i128, 3];
    let n = 7u64;
    // joint weights scaled by 4^7 so everything is an integer
    let w = |y: u64, k: usize| -> u128 {
        let t = thetas[k] as u128;
        prior[k] * binomial(n, y) * t.pow(y as u32) * (4 - t).pow((n - y) as u32)
    };
    let loss = |t: usize, k: usize| -> u128 { ((delta[t] - thetas[k]).pow(2)) as u128 };
    let expected = |y: u64, t: usize| -> u128 { (0..3).map(|k| w(y, k) * loss(t, k)).sum() };
    let bayes: Vec<usize> = (0..=n).map(|y| if expected(y, 1) < expected(y, 0) { 1 } else { 0 }).collect();
    let ties = (0..=n).filter(|&y| expected(y, 0) == expected(y, 1)).count();
    let risk_of = |map: &dyn Fn(u64) -> usize| -> u128 { (0..=n).map(|y| expected(y, map(y))).sum() };
    let bayes_risk = risk_of(&|y| bayes[y as usize]);

    let mut best = u128::MAX;
    let mut argmins = Vec::new();
    for mask in 0u32..(1 << (n + 1)) {
        let r = risk_of(&|y| ((mask >> y) & 1) as usize);
        if r < best {
            best = r;
            argmins.clear();
        }
        if r == best {
            argmins.push(mask);
        }
    }
    let bayes_mask: u32 = bayes.iter().enumerate().map(|(y, &t)| (t as u32) << y).sum();
    let scale = 4f64.powi(n as i32) * 4.0;
    report.claim(Claim::within(
        "prior-averaged intermediate loss of the Bayes-rule mapping",
        bayes_risk as f64 / scale,
        best as f64 / scale,
        0.0,
    ));
    report.claim(Claim::holds("Bayes-rule mapping is an exhaustive minimiser", argmins.contains(&bayes_mask), true));
    report.claim(Claim::within("exhaustive minimisers", argmins.len() as f64, 1.0, 0.0));
    report.claim(Claim::within("posterior-loss ties in the Bayes rule", ties as f64, 0.0, 0.0));
    report.claim(Claim::within("mappings enumerated", f64::from(1u32 << (n + 1)), 256.0, 0.0));
    report.artifact("bayes_mapping", &bayes)
}
