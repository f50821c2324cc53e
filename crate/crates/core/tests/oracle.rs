use fairij::data::{biased_mixture, standardize, BiasedMixture, TabularDataset};
use fairij::fairness::surrogate;
use fairij::ihvp::{IhvpConfig, IhvpMethod};
use fairij::influence::fairness_influence;
use fairij::oracle::{compare_ihvp, fit_full_batch, loo_retrain_influence, mad, rescale_to_mean, spearman, OracleTrainConfig};
use fairij::{FairnessMetricKind, MlpArchitecture};

fn mixture(n_train: usize, n_val: usize, seed: u64) -> (TabularDataset, TabularDataset) {
    let train = biased_mixture(n_train, &BiasedMixture::default(), seed).unwrap();
    let val = biased_mixture(n_val, &BiasedMixture::default(), seed + 1000).unwrap();
    let (train, rest) = standardize(&train, &[&val]).unwrap();
    (train, rest.into_iter().next().unwrap())
}

#[test]
fn dropping_one_of_two_duplicates_is_half_of_dropping_both() {
    let (base, val) = mixture(80, 300, 2);
    let mut idx: Vec<usize> = (0..80).collect();
    idx.push(5);
    let train = base.subset(&idx).unwrap();
    let arch = MlpArchitecture::logistic(train.n_features()).unwrap();
    let oc = OracleTrainConfig::default();
    let kind = FairnessMetricKind::Dp;
    let one = loo_retrain_influence(&train, &val, &arch, &oc, kind, &[5]).unwrap();
    let single = one.entries[0].surrogate_delta.unwrap();

    let mut w = vec![1.0; train.len()];
    w[5] = 0.0;
    w[80] = 0.0;
    let (both, _) = fit_full_batch(&one.base, &train, &w, &oc).unwrap();
    let double = surrogate(&both, &val, kind).unwrap() - one.base_surrogate;
    assert!(double.abs() > 1e-6);
    assert!((single - double / 2.0).abs() <= 0.05 * double.abs(), "{single:e} vs {double:e}");
}

#[test]
fn empty_index_list_gives_empty_result() {
    let (train, val) = mixture(30, 60, 1);
    let arch = MlpArchitecture::logistic(train.n_features()).unwrap();
    let res = loo_retrain_influence(&train, &val, &arch, &OracleTrainConfig::default(), FairnessMetricKind::Dp, &[]).unwrap();
    assert!(res.entries.is_empty());
}

#[test]
fn oracle_is_reproducible_and_agrees_with_exact_influence() {
    let (train, val) = mixture(50, 400, 6);
    let arch = MlpArchitecture::logistic(train.n_features()).unwrap();
    let oc = OracleTrainConfig::default();
    let all: Vec<usize> = (0..train.len()).collect();
    let kind = FairnessMetricKind::Dp;
    let a = loo_retrain_influence(&train, &val, &arch, &oc, kind, &all).unwrap();
    let b = loo_retrain_influence(&train, &val, &arch, &oc, kind, &all).unwrap();
    for (x, y) in a.entries.iter().zip(&b.entries) {
        assert!((x.surrogate_delta.unwrap() - y.surrogate_delta.unwrap()).abs() <= 1e-10);
    }

    let mut cfg = IhvpConfig::with_method(IhvpMethod::Exact);
    cfg.damping = oc.l2;
    let rep = fairness_influence(&a.base, &train, Some(&val), kind, &cfg).unwrap();
    let neg: Vec<f64> = a.entries.iter().map(|e| -e.surrogate_delta.unwrap()).collect();
    assert!(spearman(&rep.scores, &neg) >= 0.9);
}

#[test]
fn oracle_size_caps_are_enforced() {
    let (train, val) = mixture(1001, 10, 1);
    let arch = MlpArchitecture::logistic(train.n_features()).unwrap();
    assert!(loo_retrain_influence(&train, &val, &arch, &OracleTrainConfig::default(), FairnessMetricKind::Dp, &[0]).is_err());
}

#[test]
fn method_compared_with_itself_is_perfect_and_mad_is_symmetric() {
    let (train, val) = mixture(100, 100, 3);
    let arch = MlpArchitecture::new(train.n_features(), vec![3], fairij::Activation::Selu).unwrap();
    let model = fairij::MlpModel::init(arch, 1).unwrap();
    let cfg = IhvpConfig::default();
    let cmp = compare_ihvp(&model, &train, &val, FairnessMetricKind::Dp, &cfg, &cfg).unwrap();
    assert_eq!(cmp.mad, 0.0);
    assert_eq!(cmp.r_squared, 1.0);

    let reference = [0.2, -0.9, 1.9, 0.8, -0.1, 0.4];
    let (a, _) = rescale_to_mean(&[0.3, -1.0, 2.0, 0.7, -0.2, 0.5], &reference);
    let (b, _) = rescale_to_mean(&[0.1, -0.8, 1.7, 0.9, 0.0, 0.2], &reference);
    let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let ba: Vec<f64> = b.iter().zip(&a).map(|(x, y)| x - y).collect();
    assert!(mad(&ab) > 0.0);
    assert!((mad(&ab) - mad(&ba)).abs() < 1e-12);
}
