use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use joint_struct::experiment::oracle_case;
use joint_struct::inference::{brute_force_joint, infer_batch, Objective, DEFAULT_BRUTE_FORCE_CAP, DEFAULT_MAX_ITER};
use joint_struct::model::ModelSpec;
use joint_struct::par::Execution;
use joint_struct::ssvm::{train_with, TrainConfig};
use joint_struct::synth::{generate_with, SynthConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn batch_inference(c: &mut Criterion) {
    let spec = ModelSpec::default_model(16, 8, [8; 5]);
    let cfg = SynthConfig {
        n_train: 0,
        n_test: 200,
        ..SynthConfig::default()
    };
    let data = generate_with(&cfg, &spec, Execution::Parallel);
    let obj = Objective::new(&spec, &data.planted.0, 0.1, 1.0).unwrap();
    let mut g = c.benchmark_group("infer_batch_200");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| infer_batch(&obj, &data.test, DEFAULT_MAX_ITER, exec))
        });
    }
    g.finish();
}

fn brute_force(c: &mut Criterion) {
    let (spec, inst, _) = oracle_case(3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w: Vec<f64> = (0..spec.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let obj = Objective::new(&spec, &w, 0.1, 1.0).unwrap();
    let mut g = c.benchmark_group("brute_force_joint");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| brute_force_joint(&obj, &inst, DEFAULT_BRUTE_FORCE_CAP, exec))
        });
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let spec = ModelSpec::default_model(16, 8, [8; 5]);
    let cfg = SynthConfig {
        n_train: 60,
        n_test: 0,
        ..SynthConfig::default()
    };
    let data = generate_with(&cfg, &spec, Execution::Parallel);
    let tc = TrainConfig {
        c: 1.0,
        epochs: 20,
        ..TrainConfig::default()
    };
    let mut g = c.benchmark_group("train_60");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| train_with(&data.train, &spec, &tc, 0.1, 1.0, exec))
        });
    }
    g.finish();
}

criterion_group!(benches, batch_inference, brute_force, training);
criterion_main!(benches);
