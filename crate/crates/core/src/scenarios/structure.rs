use super::{Claim, Ctx, Relation, ScenarioReport};
use crate::error::Result;
use crate::mc_engine::{distributed_preprocess, ShardPreprocessor};
use crate::model::registry::model;
use crate::model::{working, ModelSpec, ParamBox, ParamTheta, ParamXi};
use crate::par::Workers;
use crate::preprocess::{catalog, Preprocessor, StatisticKind};
use crate::quadrature::QuadratureSpec;
use crate::sufficiency::{
    conditional_independence_check, default_pairs, dsc_check, factorization_check, safe_strategy_preprocessor, CheckConfig, DscReport,
    GridSpec, SufficiencyReport,
};

fn check(m: &ModelSpec, p: &Preprocessor, sizes: &[usize], seed: u64, workers: Workers) -> Result<SufficiencyReport> {
    let mut cfg = CheckConfig::new(sizes.to_vec(), seed);
    cfg.workers = workers;
    factorization_check(m, p, &default_pairs(m, sizes.len(), seed ^ 0x5eed), &cfg)
}

/// DSC for the Gaussian location working model against its scientific law,
/// and the per-shard (mean, sum of squares) check for (θ, ξ).
pub fn theorem_one_check(seed: u64, workers: Workers) -> Result<(DscReport, SufficiencyReport)> {
    let m = model("gaussian_location")?;
    let w = working::gaussian_location(2, 1)?;
    let theta = ParamTheta::scalar(0.3);
    let grid = GridSpec::standard(&[0.3, 0.3], &[1.0, 1.0]);
    let dsc = dsc_check(&w, &m, &grid, &theta, 1e-9, &QuadratureSpec::default(), workers)?;
    let fact = check(&m, &catalog::mean_ss(), &[3, 4], seed, workers)?;
    Ok((dsc, fact))
}

/// Safe-strategy statistics for every built-in scientific model attached to
/// the factored Gaussian observation model.
pub fn safe_strategy_checks(seed: u64, workers: Workers) -> Result<Vec<SufficiencyReport>> {
    let sizes = [3, 3];
    ["gaussian_location", "common_mean", "normal_mixture", "student_t", "exchangeable_normal"]
        .iter()
        .map(|id| {
            let m = model(id)?;
            let p = safe_strategy_preprocessor(&m, &sizes)?;
            check(&m, &p, &sizes, seed, workers)
        })
        .collect()
}

pub(super) fn shared_z(ctx: &Ctx<'_>, report: &mut ScenarioReport) -> Result<()> {
    let workers = ctx.cfg.workers;
    let m = model("shared_component")?;
    let w = working::shared_component(2)?;
    let theta = ParamTheta::scalar(0.4);
    // tied Z coordinates only meet on the grid diagonal, so the grid is coarse
    let grid = GridSpec::around(&[0.4; 4], &[1.0; 4], 11, 4.0);
    let dsc = dsc_check(&w, &m, &grid, &theta, 1e-10, &QuadratureSpec::default(), workers)?;
    report.claim(Claim::new("shared-Z DSC max abs error", dsc.max_abs_error, 0.0, 1e-10, Relation::AtMost));
    let p = Preprocessor::new("block_means", StatisticKind::BlockMeans { reps: 2 });
    let fact = check(&m, &p, &[4, 4], ctx.seed, workers)?;
    report.claim(Claim::new(
        "per-shard block means, max factorization deviation",
        fact.max_deviation,
        0.0,
        fact.tolerance,
        Relation::AtMost,
    ));
    let (dsc1, fact1) = theorem_one_check(ctx.seed, workers)?;
    report.claim(Claim::new(
        "Gaussian location working model DSC max abs error",
        dsc1.max_abs_error,
        0.0,
        dsc1.tolerance,
        Relation::AtMost,
    ));
    report.claim(Claim::new(
        "per-shard (mean, sum of squares) deviation for (θ, ξ)",
        fact1.max_deviation,
        0.0,
        fact1.tolerance,
        Relation::AtMost,
    ));
    report.artifact("dsc", &dsc)?;
    report.artifact("factorization", &fact)
}

pub(super) fn working_model_failure(ctx: &Ctx<'_>, report: &mut ScenarioReport) -> Result<()> {
    let workers = ctx.cfg.workers;
    let sizes = [3, 3];
    let working = model("gaussian_location")?.with_box(ParamBox { theta: vec![(-1.0, 1.0)], xi: vec![(1.0, 1.0)] });
    let under_working = check(&working, &catalog::shard_mean(), &sizes, ctx.seed, workers)?;
    report.claim(Claim::new(
        "shard means under the working model",
        under_working.max_deviation,
        0.0,
        under_working.tolerance,
        Relation::AtMost,
    ));
    let truth = model("random_variance")?;
    let under_truth = check(&truth, &catalog::shard_mean(), &sizes, ctx.seed, workers)?;
    report.claim(Claim::new(
        "shard means under random per-observation variances",
        under_truth.max_deviation,
        0.0,
        under_truth.tolerance,
        Relation::Above,
    ));
    let witness = under_truth.witness.as_ref().map(|w| w.reproduce(&truth, &QuadratureSpec::default())).transpose()?;
    report.claim(Claim::within(
        "witness reproduces",
        witness.unwrap_or(f64::NAN),
        under_truth.max_deviation,
        1e-9 * under_truth.max_deviation.max(1.0),
    ));
    let laplace = model("laplace_identity")?;
    let non_dsc = check(&laplace, &catalog::shard_mean(), &sizes, ctx.seed, workers)?;
    report.claim(Claim::new(
        "shard means under a Laplace law with no Gaussian DSC",
        non_dsc.max_deviation,
        0.0,
        non_dsc.tolerance,
        Relation::Above,
    ));
    report.artifact("working", &under_working)?;
    report.artifact("truth", &under_truth)
}

pub(super) fn kronecker(ctx: &Ctx<'_>, report: &mut ScenarioReport) -> Result<()> {
    let workers = ctx.cfg.workers;
    let sizes = [4, 4];
    let base = model("kronecker")?;
    let known = |rho: f64| base.clone().with_box(ParamBox { theta: vec![(-1.0, 1.0), (rho, rho)], xi: vec![] });
    let sums = catalog::shard_sum();
    let rho = 0.5;

    let zero = check(&known(0.0), &sums, &sizes, ctx.seed, workers)?;
    report.claim(Claim::new("sums with θ₂ = 0 known", zero.max_deviation, 0.0, zero.tolerance, Relation::AtMost));
    let half = check(&known(rho), &sums, &sizes, ctx.seed, workers)?;
    report.claim(Claim::new("sums with θ₂ = 0.5 known", half.max_deviation, 0.0, half.tolerance, Relation::AtMost));
    // 1ᵀΣ⁻¹Y split by shard: the correlated blocks carry weight 1/(2+θ₂)
    let (a, b) = (1.0 / (2.0 + rho), 0.5);
    let weighted =
        Preprocessor::new("weighted_sum", StatisticKind::ShardLinear { rows: vec![vec![vec![a, a, b, b]], vec![vec![b, b, a, a]]] });
    let w = check(&known(rho), &weighted, &sizes, ctx.seed, workers)?;
    report.claim(Claim::new("precision-weighted sums with θ₂ = 0.5 known", w.max_deviation, 0.0, w.tolerance, Relation::AtMost));
    let unknown = check(&base, &sums, &sizes, ctx.seed, workers)?;
    report.claim(Claim::new("sums with θ₂ unknown", unknown.max_deviation, 0.0, unknown.tolerance, Relation::Above));
    let augmented = Preprocessor::new("sum_and_block", StatisticKind::SumAndBlock { blocks: vec![(0, 2), (2, 2)] });
    let aug = check(&base, &augmented, &sizes, ctx.seed, workers)?;
    report.claim(Claim::new("sums plus correlated blocks with θ₂ unknown", aug.max_deviation, 0.0, aug.tolerance, Relation::AtMost));

    let (_, y) = base.sample_joint(&ParamTheta::new(vec![0.2, rho])?, &ParamXi::none(2), &sizes, ctx.seed)?;
    let shard_ps: Vec<&dyn ShardPreprocessor> = vec![&augmented, &augmented];
    let out = distributed_preprocess(&y, &shard_ps, workers)?;
    let kept: usize = out.iter().map(|s| s.values.len()).sum();
    report.claim(Claim::within("values retained across shards", kept as f64, 6.0, 0.0));
    report.artifact("sums_known", &half)?;
    report.artifact("sums_unknown", &unknown)?;
    report.artifact("augmented", &aug)
}

pub(super) fn sign_sharing(ctx: &Ctx<'_>, report: &mut ScenarioReport) -> Result<()> {
    let workers = ctx.cfg.workers;
    let n = ctx.size(4);
    let sizes = [n, n];
    let norms = catalog::squared_norm();
    let m = model("sign_sharing")?;
    let fact = check(&m, &norms, &sizes, ctx.seed, workers)?;
    report.claim(Claim::new(
        "(Y₁ᵀY₁, Y₂ᵀY₂) factorization deviation under the sign-sharing law",
        fact.max_deviation,
        0.0,
        fact.tolerance,
        Relation::AtMost,
    ));
    let induced = model("centered_scale")?;
    let fact_ws = check(&induced, &norms, &sizes, ctx.seed, workers)?;
    report.claim(Claim::new(
        "(Y₁ᵀY₁, Y₂ᵀY₂) deviation under the induced independent-shard law",
        fact_ws.max_deviation,
        0.0,
        fact_ws.tolerance,
        Relation::AtMost,
    ));

    let theta = ParamTheta::scalar(1.0);
    let w = working::independent_centered_normal(2, 1)?;
    let grid = GridSpec::standard(&[0.0, 0.0], &[1.0, 1.0]);
    let dsc = dsc_check(&w, &m, &grid, &theta, 1e-6, &QuadratureSpec::default(), workers)?;
    report.claim(Claim::new("independent centred normal DSC max abs error", dsc.max_abs_error, 0.0, dsc.tolerance, Relation::Above));
    let ci = conditional_independence_check(&m, &norms, &norms, &theta, &ParamXi::none(2), &[16, 16], ctx.reps(10_000), ctx.seed, workers)?;
    report.claim(Claim::new("sign-agreement z beyond the shard statistics", ci.z, 5.0, 0.0, Relation::Above));
    report.artifact("factorization", &fact)?;
    report.artifact("dsc", &dsc)?;
    report.artifact("independence", &ci)
}
