use multiphase::mc_engine::{run_experiment, EstimatorKind, EstimatorSpec, ExperimentConfig, Loss, XiRule};
use multiphase::preprocess::StatisticKind;

fn gaussian_mean(reps: usize, workers: Option<usize>) -> ExperimentConfig {
    ExperimentConfig {
        model: "iid_normal".into(),
        shard_sizes: vec![20],
        theta: vec![0.3],
        xi: XiRule::None,
        estimators: vec![EstimatorSpec { id: "mean".into(), statistic: StatisticKind::Identity, estimator: EstimatorKind::Mean }],
        replications: reps,
        seed: 31,
        loss: Loss::Squared,
        workers,
    }
}

#[test]
fn standard_errors_shrink_as_root_r() {
    let se: Vec<f64> =
        [1_000, 4_000, 16_000].iter().map(|&r| run_experiment(&gaussian_mean(r, None)).unwrap().estimators[0].risk.std_error).collect();
    for w in se.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 2.0).abs() <= 0.4, "{se:?}");
    }
}

#[test]
fn report_bytes_match_for_1_2_and_8_workers() {
    let render = |w| serde_json::to_string(&run_experiment(&gaussian_mean(3_000, Some(w))).unwrap()).unwrap();
    let one = render(1);
    assert_eq!(one, render(2));
    assert_eq!(one, render(8));
}
