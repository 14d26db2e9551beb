//! Seeded Monte Carlo experiments and the shard-scoped preprocessing
//! contract.
//!
//! Replication `k` draws from `split_seed(master, k)`, and per-replication
//! results are reduced in index order, so a report depends on the master
//! seed only.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dens;
use crate::error::{Error, Result};
use crate::inference::MultiphaseProcedure;
use crate::information::McValue;
use crate::model::registry::model;
use crate::model::{DataY, ModelSpec, ParamTheta, ParamXi};
use crate::num;
use crate::par::{map_indexed, try_map_indexed, Workers};
use crate::preprocess::{Preprocessor, Statistic, StatisticKind};
use crate::rng::{rng_from_seed, split_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum XiRule {
    /// Model without nuisance parameters.
    #[default]
    None,
    Fixed {
        #[serde(with = "num::vecvec")]
        values: Vec<Vec<f64>>,
    },
    /// The same ξ on every shard.
    Repeat {
        #[serde(with = "num::vec")]
        value: Vec<f64>,
    },
    /// Fresh uniform draws per shard and replication.
    Uniform {
        #[serde(with = "num::vec")]
        low: Vec<f64>,
        #[serde(with = "num::vec")]
        high: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Mean of the statistic's values.
    Mean,
    Median,
    /// An input form of the built-in multiphase procedure.
    Procedure {
        form: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub id: String,
    pub statistic: StatisticKind,
    pub estimator: EstimatorKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Squared,
    Absolute,
}

impl Loss {
    pub fn eval(self, est: &[f64], truth: &[f64]) -> f64 {
        let d = est.iter().zip(truth).map(|(a, b)| a - b);
        match self {
            Loss::Squared => d.map(|v| v * v).sum(),
            Loss::Absolute => d.map(f64::abs).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: String,
    pub shard_sizes: Vec<usize>,
    #[serde(with = "num::vec")]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub xi: XiRule,
    pub estimators: Vec<EstimatorSpec>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub loss: Loss,
    /// Worker-count hint; never echoed so reports do not depend on it.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::config(format!("experiment config: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRisk {
    pub id: String,
    pub risk: McValue,
    #[serde(with = "num::vec")]
    pub mean_estimate: Vec<f64>,
    pub failures: usize,
}

/// Loss of `a` minus loss of `b` on shared replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub a: String,
    pub b: String,
    pub mean_loss_diff: McValue,
    pub paired_replications: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub config: ExperimentConfig,
    pub replications: usize,
    pub estimators: Vec<EstimatorRisk>,
    pub paired: Vec<PairedDifference>,
    pub warnings: Vec<String>,
}

impl RiskReport {
    pub fn risk(&self, id: &str) -> Option<&McValue> {
        self.estimators.iter().find(|e| e.id == id).map(|e| &e.risk)
    }

    /// One row per estimator.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,risk,std_error,failures\n");
        for e in &self.estimators {
            let _ = writeln!(out, "{},{},{},{}", e.id, num::format(e.risk.value), num::format(e.risk.std_error), e.failures);
        }
        out
    }
}

/// Per-replication estimates, `estimates[k][e]` for replication k and
/// estimator e; `None` marks a failed estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub theta: Vec<f64>,
    pub estimates: Vec<Vec<Option<Vec<f64>>>>,
}

impl Simulation {
    /// First coordinate of estimator `e` over successful replications.
    pub fn first_coordinate(&self, e: usize) -> Vec<f64> {
        self.estimates.iter().filter_map(|r| r[e].as_ref().map(|v| v[0])).collect()
    }
}

struct Plan {
    model: ModelSpec,
    theta: ParamTheta,
    preprocessors: Vec<Preprocessor>,
    procedure: MultiphaseProcedure,
}

fn plan(cfg: &ExperimentConfig) -> Result<Plan> {
    if cfg.replications == 0 {
        return Err(Error::config("replications must be at least 1"));
    }
    if cfg.estimators.is_empty() {
        return Err(Error::config("no estimators configured"));
    }
    let m = model(&cfg.model)?;
    let theta = ParamTheta::new(cfg.theta.clone())?;
    if theta.dim() != m.theta_dim() {
        return Err(Error::config(format!("model `{}` has θ of dimension {}, config gives {}", m.id, m.theta_dim(), theta.dim())));
    }
    let r = cfg.shard_sizes.len();
    let xi_len = |v: &[f64]| {
        if v.len() != m.xi_dim() {
            Err(Error::config(format!("model `{}` has ξ_i of dimension {}, config gives {}", m.id, m.xi_dim(), v.len())))
        } else {
            Ok(())
        }
    };
    match &cfg.xi {
        XiRule::None if m.xi_dim() != 0 => return Err(Error::config(format!("model `{}` needs a ξ rule", m.id))),
        XiRule::None => {}
        XiRule::Fixed { values } => {
            if values.len() != r {
                return Err(Error::config(format!("{} ξ shards for {r} data shards", values.len())));
            }
            values.iter().try_for_each(|v| xi_len(v))?;
        }
        XiRule::Repeat { value } => xi_len(value)?,
        XiRule::Uniform { low, high } => {
            xi_len(low)?;
            xi_len(high)?;
            if low.iter().zip(high).any(|(a, b)| a > b) {
                return Err(Error::config("uniform ξ rule has low > high"));
            }
        }
    }
    let procedure = MultiphaseProcedure::demo();
    for e in &cfg.estimators {
        if let EstimatorKind::Procedure { form } = &e.estimator {
            procedure.lookup(form)?;
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for e in &cfg.estimators {
        if !seen.insert(e.id.as_str()) {
            return Err(Error::config(format!("estimator id `{}` is repeated", e.id)));
        }
    }
    let preprocessors = cfg.estimators.iter().map(|e| Preprocessor::new(e.id.clone(), e.statistic.clone())).collect();
    Ok(Plan { model: m, theta, preprocessors, procedure })
}

fn draw_xi(rule: &XiRule, r: usize, seed: u64) -> ParamXi {
    match rule {
        XiRule::None => ParamXi::none(r),
        XiRule::Fixed { values } => ParamXi::new(values.clone()),
        XiRule::Repeat { value } => ParamXi::repeat(r, value),
        XiRule::Uniform { low, high } => {
            let mut rng = rng_from_seed(seed);
            ParamXi::new(
                (0..r).map(|_| low.iter().zip(high).map(|(&a, &b)| if b > a { rng.gen_range(a..=b) } else { a }).collect()).collect(),
            )
        }
    }
}

fn estimate(plan: &Plan, kind: &EstimatorKind, t: &[f64]) -> Result<Vec<f64>> {
    if t.is_empty() {
        return Err(Error::config("empty statistic"));
    }
    match kind {
        EstimatorKind::Mean => Ok(vec![dens::mean(t)]),
        EstimatorKind::Median => Ok(vec![dens::median(t)]),
        EstimatorKind::Procedure { form } => plan.procedure.lookup(form)?(t),
    }
}

fn run_statistic(p: &Preprocessor, y: &DataY) -> Result<Vec<f64>> {
    if p.kind.per_shard() {
        let stats = distributed_preprocess(y, &vec![p as &dyn ShardPreprocessor; y.shards.len()], Workers::SEQUENTIAL)?;
        Ok(stats.into_iter().flat_map(|s| s.values).collect())
    } else {
        Ok(p.apply(y)?.values)
    }
}

/// Draw every replication and run each estimator on it.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    let plan = plan(cfg)?;
    let r = cfg.shard_sizes.len();
    let reps = try_map_indexed(cfg.replications, Workers(cfg.workers), |k| -> Result<Vec<Option<Vec<f64>>>> {
        let seed = split_seed(cfg.seed, k as u64);
        let xi = draw_xi(&cfg.xi, r, split_seed(seed, 1));
        let (_, y) = plan.model.sample_joint(&plan.theta, &xi, &cfg.shard_sizes, seed)?;
        Ok(plan
            .preprocessors
            .iter()
            .zip(&cfg.estimators)
            .map(|(p, e)| run_statistic(p, &y).and_then(|t| estimate(&plan, &e.estimator, &t)).ok())
            .collect())
    })?;
    Ok(Simulation { theta: cfg.theta.clone(), estimates: reps })
}

fn mean_se(xs: &[f64]) -> McValue {
    let n = xs.len();
    if n == 0 {
        return McValue { value: f64::NAN, std_error: f64::NAN };
    }
    let value = dens::mean(xs);
    let std_error = if n < 2 { 0.0 } else { (dens::sample_var(xs) / n as f64).sqrt() };
    McValue { value, std_error }
}

/// Risk of every configured estimator with Monte Carlo standard errors.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RiskReport> {
    let sim = simulate(cfg)?;
    let n_est = cfg.estimators.len();
    let losses: Vec<Vec<Option<f64>>> = map_indexed(sim.estimates.len(), Workers(cfg.workers), |k| {
        sim.estimates[k].iter().map(|e| e.as_ref().map(|v| cfg.loss.eval(v, &cfg.theta))).collect()
    });
    let mut estimators = Vec::with_capacity(n_est);
    let mut warnings = Vec::new();
    for (e, spec) in cfg.estimators.iter().enumerate() {
        let ok: Vec<f64> = losses.iter().filter_map(|l| l[e]).collect();
        let failures = cfg.replications - ok.len();
        if failures * 100 > cfg.replications {
            warnings.push(format!("estimator `{}` failed in {failures} of {} replications", spec.id, cfg.replications));
        }
        let ests: Vec<&Vec<f64>> = sim.estimates.iter().filter_map(|r| r[e].as_ref()).collect();
        let dim = ests.first().map_or(0, |v| v.len());
        let mean_estimate = (0..dim).map(|j| ests.iter().map(|v| v[j]).sum::<f64>() / ests.len() as f64).collect();
        estimators.push(EstimatorRisk { id: spec.id.clone(), risk: mean_se(&ok), mean_estimate, failures });
    }
    let mut paired = Vec::new();
    for a in 0..n_est {
        for b in a + 1..n_est {
            let d: Vec<f64> = losses.iter().filter_map(|l| Some(l[a]? - l[b]?)).collect();
            if d.is_empty() {
                continue;
            }
            paired.push(PairedDifference {
                a: cfg.estimators[a].id.clone(),
                b: cfg.estimators[b].id.clone(),
                paired_replications: d.len(),
                mean_loss_diff: mean_se(&d),
            });
        }
    }
    Ok(RiskReport { config: cfg.clone(), replications: cfg.replications, estimators, paired, warnings })
}

/// Read access handed to a shard's preprocessor: its own shard only.
pub struct ShardView<'a> {
    owner: usize,
    data: &'a DataY,
}

impl<'a> ShardView<'a> {
    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn own(&self) -> &'a [f64] {
        &self.data.shards[self.owner]
    }

    /// Any shard other than the owner's is a contract violation.
    pub fn shard(&self, i: usize) -> Result<&'a [f64]> {
        if i != self.owner {
            return Err(Error::ContractViolation { owner: self.owner, requested: i });
        }
        Ok(self.own())
    }
}

/// A preprocessor that runs against a single shard.
pub trait ShardPreprocessor: Send + Sync {
    fn id(&self) -> &str;
    fn run(&self, view: &ShardView<'_>) -> Result<Vec<f64>>;
}

impl ShardPreprocessor for Preprocessor {
    fn id(&self) -> &str {
        &self.id
    }

    fn run(&self, view: &ShardView<'_>) -> Result<Vec<f64>> {
        if self.kind.per_shard() {
            self.apply_shard(view.owner(), view.own())
        } else {
            Ok(self.apply(&DataY::single(view.own().to_vec()))?.values)
        }
    }
}

/// Run preprocessor `i` on shard `i` only; results in shard order.
pub fn distributed_preprocess(y: &DataY, preprocessors: &[&dyn ShardPreprocessor], workers: Workers) -> Result<Vec<Statistic>> {
    if preprocessors.len() != y.shards.len() {
        return Err(Error::config(format!("{} preprocessors for {} shards", preprocessors.len(), y.shards.len())));
    }
    try_map_indexed(y.shards.len(), workers, |i| {
        let p = preprocessors[i];
        let values = p.run(&ShardView { owner: i, data: y })?;
        Ok(Statistic { id: p.id().to_string(), shard: Some(i), values, derivation_parent: None })
    })
}
