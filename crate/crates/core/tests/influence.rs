mod common;

use common::{random_dataset, random_model, rel_err, rng};
use fairij::data::{biased_mixture, standardize, BiasedMixture, TabularDataset};
use fairij::fairness::surrogate_grad;
use fairij::ihvp::{IhvpConfig, IhvpMethod, MlpObjective};
use fairij::influence::{fairness_influence, influence_report, loss_influence, slow_scores, top_positive, write_influence_csv};
use fairij::oracle::{loo_retrain_influence, OracleTrainConfig};
use fairij::{FairnessMetricKind, MlpArchitecture, MlpModel};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn exact(damping: f64) -> IhvpConfig {
    let mut c = IhvpConfig::with_method(IhvpMethod::Exact);
    c.damping = damping;
    c
}

fn mixture(n_train: usize, n_val: usize, seed: u64) -> (TabularDataset, TabularDataset) {
    let train = biased_mixture(n_train, &BiasedMixture::default(), seed).unwrap();
    let val = biased_mixture(n_val, &BiasedMixture::default(), seed + 1000).unwrap();
    let (train, rest) = standardize(&train, &[&val]).unwrap();
    (train, rest.into_iter().next().unwrap())
}

#[test]
fn constant_model_has_zero_scores() {
    let mut r = rng(3);
    let data = random_dataset(&mut r, 30, 3);
    let model = MlpModel::zeros(MlpArchitecture::new(3, vec![4], fairij::Activation::Selu).unwrap()).unwrap();
    for method in [IhvpMethod::Woodfisher, IhvpMethod::Exact, IhvpMethod::Neumann] {
        let rep = influence_report(&model, &data, Some(&data), FairnessMetricKind::Eo, &IhvpConfig::with_method(method), true).unwrap();
        assert!(rep.scores.iter().all(|&s| s == 0.0));
        assert_eq!(rep.positive_count(), 0);
    }
}

#[test]
fn duplicated_instances_get_identical_scores() {
    let mut r = rng(5);
    let model = random_model(&mut r, 40);
    let base = random_dataset(&mut r, 20, model.arch.input_dim);
    let mut idx: Vec<usize> = (0..20).collect();
    idx.push(7);
    let train = base.subset(&idx).unwrap();
    let val = random_dataset(&mut r, 30, model.arch.input_dim);
    let rep = influence_report(&model, &train, Some(&val), FairnessMetricKind::Dp, &IhvpConfig::default(), true).unwrap();
    assert_eq!(rep.scores[7], rep.scores[20]);
    let ls = rep.loss_scores.unwrap();
    assert_eq!(ls[7], ls[20]);
}

#[test]
fn one_pass_scores_equal_per_instance_solves() {
    let mut r = rng(8);
    let model = random_model(&mut r, 40);
    let train = random_dataset(&mut r, 60, model.arch.input_dim);
    let val = random_dataset(&mut r, 40, model.arch.input_dim);
    let cfg = exact(0.5);
    let fast = fairness_influence(&model, &train, Some(&val), FairnessMetricKind::Dp, &cfg).unwrap();
    let obj = MlpObjective::new(&model, &train).unwrap();
    let grad_m = surrogate_grad(&model, &val, FairnessMetricKind::Dp).unwrap().grad;
    let slow = slow_scores(&obj, &grad_m, &cfg).unwrap();
    assert!(rel_err(&fast.scores, &slow) <= 1e-8);
}

#[test]
fn zero_validation_gradient_gives_zero_loss_influence() {
    let mut r = rng(9);
    let train = random_dataset(&mut r, 20, 2);
    let model = MlpModel::zeros(MlpArchitecture::logistic(2).unwrap()).unwrap();
    // y balanced and x symmetric about zero: the mean loss gradient vanishes
    let val = TabularDataset::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0], vec![-1.0, 0.0]], vec![0, 1, 0, 1], vec![0, 1, 1, 0]).unwrap();
    let scores = loss_influence(&model, &train, &val, &IhvpConfig::default()).unwrap();
    assert!(scores.iter().all(|&s| s == 0.0));
}

#[test]
fn positive_influence_predicts_that_dropping_lowers_the_surrogate() {
    let (train, val) = mixture(60, 400, 21);
    let arch = MlpArchitecture::logistic(train.n_features()).unwrap();
    let oc = OracleTrainConfig::default();
    let all: Vec<usize> = (0..train.len()).collect();
    let loo = loo_retrain_influence(&train, &val, &arch, &oc, FairnessMetricKind::Dp, &all).unwrap();
    let rep = influence_report(&loo.base, &train, Some(&val), FairnessMetricKind::Dp, &exact(oc.l2), true).unwrap();
    let agree = loo
        .entries
        .iter()
        .filter(|e| {
            let delta = e.surrogate_delta.unwrap();
            (rep.scores[e.index] > 0.0) == (-delta > 0.0)
        })
        .count();
    assert!(agree as f64 >= 0.9 * train.len() as f64, "{agree}/{}", train.len());

    let ls = rep.loss_scores.unwrap();
    let loss_agree = loo.entries.iter().filter(|e| (ls[e.index] > 0.0) == (-e.loss_delta.unwrap() > 0.0)).count();
    assert!(loss_agree as f64 >= 0.9 * train.len() as f64, "{loss_agree}/{}", train.len());
}

#[test]
fn influence_csv_has_one_row_per_instance_and_sorted_scores() {
    let mut r = rng(12);
    let model = random_model(&mut r, 30);
    let train = random_dataset(&mut r, 25, model.arch.input_dim);
    let rep = fairness_influence(&model, &train, None, FairnessMetricKind::Dp, &IhvpConfig::default()).unwrap();
    assert_eq!(rep.evaluated_on, "train");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sorted.csv");
    write_influence_csv(&path, &rep, &train, true).unwrap();
    let mut reader = csv::Reader::from_path(&path).unwrap();
    let scores: Vec<f64> = reader.records().map(|rec| rec.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(scores.len(), train.len());
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn top_positive_at_full_count_is_the_positive_set() {
    let scores = [0.5, -0.2, 0.0, 1.5, 0.5, -3.0];
    let k = scores.iter().filter(|&&s| s > 0.0).count();
    let mut got = top_positive(&scores, k).indices;
    assert_eq!(got, vec![3, 0, 4]);
    got.sort_unstable();
    assert_eq!(got, vec![0, 3, 4]);
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        rng_seed: RngSeed::Fixed(17),
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn scores_scale_with_wf_scale_and_keep_their_ranking(seed in any::<u64>(), c in 0.05f64..20.0) {
        let mut r = rng(seed);
        let model = random_model(&mut r, 40);
        let train = random_dataset(&mut r, 50, model.arch.input_dim);
        let val = random_dataset(&mut r, 30, model.arch.input_dim);
        let base = IhvpConfig::default();
        let scaled = IhvpConfig { wf_scale: c, ..base.clone() };
        let a = fairness_influence(&model, &train, Some(&val), FairnessMetricKind::Dp, &base).unwrap();
        let b = fairness_influence(&model, &train, Some(&val), FairnessMetricKind::Dp, &scaled).unwrap();
        let expected: Vec<f64> = a.scores.iter().map(|s| s * c).collect();
        prop_assert!(rel_err(&b.scores, &expected) <= 1e-12);
        prop_assert_eq!(top_positive(&a.scores, 10).indices, top_positive(&b.scores, 10).indices);
    }
}
