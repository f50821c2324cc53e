use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fairij::data::{biased_mixture, BiasedMixture, TabularDataset};
use fairij::ihvp::{self, ExactSolver, IhvpConfig, IhvpMethod, MlpObjective};
use fairij::model::mean_grad;
use fairij::{par, Activation, MlpArchitecture, MlpModel};

fn setup(n: usize, hidden: usize) -> (MlpModel, TabularDataset) {
    let data = biased_mixture(n, &BiasedMixture::default(), 7).unwrap();
    let arch = MlpArchitecture::new(data.n_features(), vec![hidden], Activation::Selu).unwrap();
    (MlpModel::init(arch, 3).unwrap(), data)
}

/// Runs `f` once through the parallel path and once forced sequential.
fn both<F: Fn() + Sync>(c: &mut Criterion, group: &str, size: usize, f: F) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    g.bench_with_input(BenchmarkId::new("parallel", size), &size, |b, _| b.iter(&f));
    g.bench_with_input(BenchmarkId::new("sequential", size), &size, |b, _| {
        b.iter(|| par::sequential(&f))
    });
    g.finish();
}

fn kernels(c: &mut Criterion) {
    let (model, data) = setup(20_000, 32);
    both(c, "mean_grad", data.len(), || {
        std::hint::black_box(mean_grad(&model, &data).unwrap());
    });
    both(c, "predict_proba", data.len(), || {
        std::hint::black_box(model.predict_proba(&data).unwrap());
    });

    let obj = MlpObjective::new(&model, &data).unwrap();
    let v = mean_grad(&model, &data).unwrap();
    let cfg = IhvpConfig::default();
    both(c, "woodfisher_b1000", data.len(), || {
        std::hint::black_box(ihvp::solve(&obj, &v, &cfg).unwrap());
    });

    let (small, small_data) = setup(2_000, 8);
    let small_obj = MlpObjective::new(&small, &small_data).unwrap();
    let exact_cfg = IhvpConfig::with_method(IhvpMethod::Exact);
    both(c, "exact_factor", small.dim(), || {
        std::hint::black_box(ExactSolver::factor(&small_obj, &exact_cfg).unwrap());
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);
