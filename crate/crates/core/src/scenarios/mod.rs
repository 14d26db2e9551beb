//! Named reproductions of the worked examples, counterexamples and
//! identities, each checked against an oracle computed outside the
//! pipeline it tests.

mod nuisance;
mod risk;
mod structure;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num;
use crate::par::Workers;
use crate::rng::label_seed;

pub use nuisance::ks_statistic;
pub use structure::{safe_strategy_checks, theorem_one_check};

pub const SCENARIO_IDS: &[&str] = &[
    "weighted_mean_monotonicity",
    "basis_construction",
    "shared_z_dsc",
    "working_model_failure",
    "kronecker_dependence",
    "partial_pivot_regression",
    "neyman_scott_pivot",
    "missing_info_identities",
    "sign_sharing_counterexample",
    "intermediate_loss_design",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `|observed − oracle| ≤ tolerance`
    Within,
    /// `observed ≤ oracle + tolerance`
    AtMost,
    /// `observed > oracle + tolerance`
    Above,
    /// `observed < oracle − tolerance`
    Below,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub description: String,
    #[serde(with = "num")]
    pub observed: f64,
    #[serde(with = "num")]
    pub oracle: f64,
    #[serde(with = "num")]
    pub tolerance: f64,
    pub relation: Relation,
    pub passed: bool,
}

impl Claim {
    pub fn new(description: impl Into<String>, observed: f64, oracle: f64, tolerance: f64, relation: Relation) -> Self {
        let passed = match relation {
            Relation::Within => (observed - oracle).abs() <= tolerance,
            Relation::AtMost => observed <= oracle + tolerance,
            Relation::Above => observed > oracle + tolerance,
            Relation::Below => observed < oracle - tolerance,
        };
        Claim { description: description.into(), observed, oracle, tolerance, relation, passed }
    }

    pub fn within(description: impl Into<String>, observed: f64, oracle: f64, tolerance: f64) -> Self {
        Self::new(description, observed, oracle, tolerance, Relation::Within)
    }

    /// A yes/no outcome recorded as 1 or 0 against the expected outcome.
    pub fn holds(description: impl Into<String>, observed: bool, expected: bool) -> Self {
        Self::within(description, f64::from(u8::from(observed)), f64::from(u8::from(expected)), 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub id: String,
    pub passed: bool,
    pub claims: Vec<Claim>,
    pub seeds: Vec<u64>,
    pub runtime_ms: Option<u64>,
    /// Sub-reports (sufficiency witnesses, risk reports, ...) kept verbatim.
    pub artifacts: BTreeMap<String, serde_json::Value>,
}

impl ScenarioReport {
    fn new(id: &str, seed: u64) -> Self {
        ScenarioReport { id: id.into(), passed: false, claims: Vec::new(), seeds: vec![seed], runtime_ms: None, artifacts: BTreeMap::new() }
    }

    fn claim(&mut self, c: Claim) {
        self.claims.push(c);
    }

    fn artifact<T: Serialize>(&mut self, key: &str, value: &T) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| Error::Internal(format!("serialising `{key}`: {e}")))?;
        self.artifacts.insert(key.into(), v);
        Ok(())
    }

    pub fn claim_named(&self, prefix: &str) -> Option<&Claim> {
        self.claims.iter().find(|c| c.description.starts_with(prefix))
    }
}

/// Overrides applied to a scenario run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Monte Carlo replications, where the scenario has them.
    pub reps: Option<usize>,
    /// Sample size (observations or shards), where the scenario has one.
    pub size: Option<usize>,
    #[serde(skip)]
    pub workers: Workers,
    #[serde(skip)]
    pub timings: bool,
}

impl ScenarioConfig {
    pub fn with_seed(seed: u64) -> Self {
        ScenarioConfig { seed, ..Self::default() }
    }
}

pub(crate) struct Ctx<'a> {
    pub seed: u64,
    pub cfg: &'a ScenarioConfig,
}

impl Ctx<'_> {
    pub fn reps(&self, default: usize) -> usize {
        self.cfg.reps.unwrap_or(default).max(1)
    }
    pub fn size(&self, default: usize) -> usize {
        self.cfg.size.unwrap_or(default).max(1)
    }
}

/// Run one scenario by id.
pub fn run_scenario(name: &str, cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let start = Instant::now();
    let seed = label_seed(cfg.seed, name);
    let ctx = Ctx { seed, cfg };
    let mut report = ScenarioReport::new(name, seed);
    match name {
        "weighted_mean_monotonicity" => risk::weighted_mean(&ctx, &mut report)?,
        "basis_construction" => risk::basis_construction(&ctx, &mut report)?,
        "intermediate_loss_design" => risk::intermediate_loss(&ctx, &mut report)?,
        "shared_z_dsc" => structure::shared_z(&ctx, &mut report)?,
        "working_model_failure" => structure::working_model_failure(&ctx, &mut report)?,
        "kronecker_dependence" => structure::kronecker(&ctx, &mut report)?,
        "sign_sharing_counterexample" => structure::sign_sharing(&ctx, &mut report)?,
        "partial_pivot_regression" => nuisance::partial_pivot(&ctx, &mut report)?,
        "neyman_scott_pivot" => nuisance::neyman_scott(&ctx, &mut report)?,
        "missing_info_identities" => nuisance::missing_info(&ctx, &mut report)?,
        _ => return Err(Error::Lookup { id: name.into(), known: SCENARIO_IDS.iter().map(|s| s.to_string()).collect() }),
    }
    report.passed = !report.claims.is_empty() && report.claims.iter().all(|c| c.passed);
    if cfg.timings {
        report.runtime_ms = Some(start.elapsed().as_millis() as u64);
    }
    Ok(report)
}

/// Every registered scenario, in registry order.
pub fn verify(cfg: &ScenarioConfig) -> Result<Vec<ScenarioReport>> {
    SCENARIO_IDS.iter().map(|id| run_scenario(id, cfg)).collect()
}

/// `scenario,claim,observed,oracle,tol,verdict` rows.
pub fn to_csv(reports: &[ScenarioReport]) -> String {
    let mut out = String::from("scenario,claim,observed,oracle,tol,verdict\n");
    for r in reports {
        for c in &r.claims {
            let desc = c.description.replace('"', "\"\"");
            out.push_str(&format!(
                "{},\"{}\",{},{},{},{}\n",
                r.id,
                desc,
                num::format(c.observed),
                num::format(c.oracle),
                num::format(c.tolerance),
                if c.passed { "pass" } else { "fail" }
            ));
        }
    }
    out
}
