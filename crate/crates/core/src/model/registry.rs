//! Built-in models, addressable by id from experiment configs.

use std::sync::Arc;

use super::*;
use crate::error::{Error, Result};

pub const MODEL_IDS: &[&str] = &[
    "iid_normal",
    "gaussian_location",
    "common_mean",
    "normal_mixture",
    "student_t",
    "exchangeable_normal",
    "laplace_identity",
    "gaussian_offset",
    "random_variance",
    "sign_sharing",
    "centered_scale",
    "kronecker",
    "shared_component",
];

fn unit_xi() -> Prior {
    Prior(vec![ScalarPrior::PointMass { value: 1.0 }])
}

/// Look up a built-in model by id.
pub fn model(id: &str) -> Result<ModelSpec> {
    let std_theta = Prior::normal(0.0, 1.0);
    let spec = match id {
        "iid_normal" => ModelSpec::new(id, Arc::new(NormalIid { tau: 1.0 }), Arc::new(Identity)).with_prior_theta(std_theta),
        "gaussian_location" => ModelSpec::new(id, Arc::new(NormalIid { tau: 1.0 }), Arc::new(GaussianMean))
            .with_prior_theta(std_theta)
            .with_prior_xi(unit_xi()),
        "common_mean" => ModelSpec::new(id, Arc::new(NormalIid { tau: 0.0 }), Arc::new(GaussianMean))
            .with_prior_theta(std_theta)
            .with_prior_xi(unit_xi()),
        "normal_mixture" => ModelSpec::new(id, Arc::new(NormalMixture { delta: 1.0, sd: 0.5 }), Arc::new(GaussianMean))
            .with_prior_theta(std_theta)
            .with_prior_xi(unit_xi()),
        "student_t" => ModelSpec::new(id, Arc::new(StudentT { nu: 5.0, scale: 1.0 }), Arc::new(GaussianMean))
            .with_prior_theta(std_theta)
            .with_prior_xi(unit_xi()),
        "exchangeable_normal" => ModelSpec::new(id, Arc::new(ExchangeableNormal { omega: 0.5 }), Arc::new(GaussianMean))
            .with_prior_theta(std_theta)
            .with_prior_xi(unit_xi()),
        "laplace_identity" => ModelSpec::new(id, Arc::new(LaplaceIid { scale: 1.0 }), Arc::new(Identity)).with_prior_theta(std_theta),
        "gaussian_offset" => ModelSpec::new(id, Arc::new(NormalIid { tau: 1.0 }), Arc::new(GaussianOffset { sd: 1.0 }))
            .with_prior_theta(std_theta)
            .with_prior_xi(Prior::normal(0.0, 1.0)),
        "random_variance" => ModelSpec::new(id, Arc::new(RandomVariance), Arc::new(RandomVarianceObs))
            .with_prior_theta(std_theta)
            .with_marginal(Arc::new(CauchyShardMarginal)),
        "sign_sharing" => ModelSpec::new(id, Arc::new(SignSharing), Arc::new(GaussianNoise { reps: 1, sd: 1.0 }))
            .with_marginal(Arc::new(SignSharingMarginal))
            .with_box(ParamBox { theta: vec![(0.5, 2.0)], xi: vec![] }),
        "centered_scale" => ModelSpec::new(id, Arc::new(CenteredScale), Arc::new(GaussianNoise { reps: 1, sd: 1.0 }))
            .with_marginal(Arc::new(CenteredScaleMarginal))
            .with_box(ParamBox { theta: vec![(0.5, 2.0)], xi: vec![] }),
        "kronecker" => ModelSpec::new(id, Arc::new(KroneckerPair { d: 2 }), Arc::new(GaussianNoise { reps: 1, sd: 1.0 }))
            .with_marginal(Arc::new(GaussianMarginal::Kronecker { d: 2 }))
            .with_box(ParamBox { theta: vec![(-1.0, 1.0), (-0.6, 0.6)], xi: vec![] }),
        "shared_component" => ModelSpec::new(id, Arc::new(SharedComponent), Arc::new(GaussianNoise { reps: 2, sd: 1.0 }))
            .with_prior_theta(std_theta)
            .with_marginal(Arc::new(GaussianMarginal::SharedComponent { reps: 2, sd: 1.0 })),
        _ => {
            return Err(Error::Lookup { id: id.to_string(), known: MODEL_IDS.iter().map(|s| s.to_string()).collect() });
        }
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_id_resolves() {
        for id in MODEL_IDS {
            assert_eq!(model(id).unwrap().id, *id);
        }
        assert!(matches!(model("nope"), Err(Error::Lookup { .. })));
    }
}
