use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use gazedwell::engine::{Engine, EngineConfig};
use gazedwell::sim::{evaluate_policy, grid_search, prepare_trials, GridSpec};
use gazedwell::{forward_posterior, viterbi_labels, PolicyParams, Quantization};
use gazedwell_bench::corpus;
use std::sync::Arc;

fn segmentation(c: &mut Criterion) {
    let corpus = corpus(50, 3);
    let trace = &corpus.longest().pre_select;
    c.bench_function(&format!("viterbi/{}", trace.len()), |b| {
        b.iter(|| viterbi_labels(black_box(trace), &corpus.models.seg).unwrap())
    });
}

fn intent(c: &mut Criterion) {
    let corpus = corpus(50, 3);
    let (scanpath, layout) = corpus.scanpath(corpus.longest());
    c.bench_function(&format!("forward_posterior/{}x{}", scanpath.len(), layout.len()), |b| {
        b.iter(|| forward_posterior(black_box(&scanpath), layout, &corpus.models.intent).unwrap())
    });
}

fn engine(c: &mut Criterion) {
    let corpus = corpus(20, 5);
    let models = Arc::new(corpus.models.clone());
    let trial = corpus.longest();
    c.bench_function("engine/full_trial", |b| {
        b.iter_batched(
            || {
                Engine::new(EngineConfig::default(), models.clone(), trial.layout.clone()).unwrap()
            },
            |mut e| {
                for s in trial.pre_select.iter().chain(&trial.post_select) {
                    black_box(e.feed_gaze(*s).unwrap());
                }
            },
            BatchSize::SmallInput,
        )
    });
}

fn simulation(c: &mut Criterion) {
    let corpus = corpus(200, 7);
    let cfg = EngineConfig::default();
    let prepared = prepare_trials(&corpus.trials, &corpus.models, &cfg).unwrap();
    let policy = PolicyParams::new(500.0, 16.67, 16.67, 1.0).unwrap();
    c.bench_function("evaluate_policy/200", |b| {
        b.iter(|| evaluate_policy(&prepared, black_box(&policy), Quantization::PerSample).unwrap())
    });
    let policies = GridSpec::stepped(30, 3, 5).policies().unwrap();
    let mut group = c.benchmark_group("grid");
    group.sample_size(10);
    group.bench_function(format!("{}x200", policies.len()), |b| {
        b.iter(|| grid_search(&prepared, &policies, Quantization::PerSample, true).unwrap())
    });
    group.finish();
}

criterion_group!(benches, segmentation, intent, engine, simulation);
criterion_main!(benches);
