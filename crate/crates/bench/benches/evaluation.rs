use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pdte_bench::{bin_setup, fixture, int_setup};
use pdte_core::cost::{run_bench, BenchConfig, BenchShape, DATASETS};
use pdte_core::pdte_bin::{pdte_bin_run, BinConfig, PackingMode, PathAlgorithm};
use pdte_core::pdte_int::{pdte_int_run, IntConfig};
use pdte_core::protocol::Scheme;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn path_algorithms(c: &mut Criterion) {
    let mut group = c.benchmark_group("bin_path");
    for depth in [4, 6, 8] {
        let (model, x) = fixture(depth, 16, 1);
        let (keys, input) = bin_setup(&model, &x, PackingMode::LabelPacking);
        for (name, path) in [
            ("naive", PathAlgorithm::Naive),
            ("logdepth", PathAlgorithm::LogDepth),
            ("dag", PathAlgorithm::Dag),
        ] {
            let config = BinConfig {
                path,
                label_bits: None,
            };
            group.bench_with_input(BenchmarkId::new(name, depth), &depth, |b, _| {
                b.iter(|| pdte_bin_run(&keys.ek, &keys.pk, &model, &input, config).unwrap())
            });
        }
    }
    group.finish();
}

fn integer_scheme(c: &mut Criterion) {
    let mut group = c.benchmark_group("int");
    for depth in [4, 6, 8] {
        let (model, x) = fixture(depth, 16, 2);
        for packed in [false, true] {
            let (keys, input) = int_setup(&model, &x, packed);
            let config = IntConfig {
                packed_results: packed,
            };
            let name = if packed { "packed" } else { "plain" };
            group.bench_with_input(BenchmarkId::new(name, depth), &depth, |b, _| {
                let mut rng = ChaCha20Rng::seed_from_u64(3);
                b.iter(|| {
                    pdte_int_run(&keys.ek, &keys.pk, &model, &input, config, &mut rng).unwrap()
                })
            });
        }
    }
    group.finish();
}

fn datasets(c: &mut Criterion) {
    let mut group = c.benchmark_group("dataset_round_trip");
    group.sample_size(10);
    for spec in DATASETS {
        for scheme in [Scheme::Bin, Scheme::Int] {
            let mut config = BenchConfig::new(scheme, BenchShape::Dataset(spec));
            config.packing = PackingMode::LabelPacking;
            group.bench_function(BenchmarkId::new(scheme.to_string(), spec.name), |b| {
                b.iter(|| run_bench(&config).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, path_algorithms, integer_scheme, datasets);
criterion_main!(benches);
