use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use plangen_bench::{blocksworld_task, compiled_walks, random_walk};
use plangen_core::harvest::StateGraph;
use plangen_core::metrics::{wilcoxon_signed_rank, WilcoxonMode};
use plangen_core::policy::{Model, ModelConfig};
use plangen_core::world::validate_actions;

fn validate(c: &mut Criterion) {
    let task = blocksworld_task(10, 1);
    let mut g = c.benchmark_group("validate");
    for t in [100, 1_000, 10_000] {
        let plan = random_walk(&task, t, 2);
        g.throughput(Throughput::Elements(t as u64));
        g.bench_with_input(BenchmarkId::from_parameter(t), &plan, |b, p| b.iter(|| validate_actions(&task, p)));
    }
    g.finish();
}

fn graph(c: &mut Criterion) {
    let task = blocksworld_task(8, 1);
    let mut g = c.benchmark_group("state-graph");
    for count in [8, 32, 128] {
        let plans = compiled_walks(&task, count, 40, 3);
        g.throughput(Throughput::Elements((count * 40) as u64));
        g.bench_with_input(BenchmarkId::new("build", count), &plans, |b, p| b.iter(|| StateGraph::build(&task, p)));
        let sg = StateGraph::build(&task, &plans);
        g.bench_with_input(BenchmarkId::new("shortest", count), &sg, |b, s| b.iter(|| s.shortest_plan()));
    }
    g.finish();
}

fn forward(c: &mut Criterion) {
    let model = Model::<f32>::new(ModelConfig::with_vocab(64), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let batch: Vec<Vec<u32>> = (0..4).map(|i| (0..128).map(|t| (t * 7 + i) % 64).collect()).collect();
    c.bench_function("forward 4x128", |b| b.iter(|| model.forward(&batch, 0).unwrap()));
}

fn wilcoxon(c: &mut Criterion) {
    let a: Vec<f64> = (0..25).map(|i| f64::from(i * 3 % 11)).collect();
    let z = vec![5.0; 25];
    c.bench_function("wilcoxon exact n=25", |b| {
        b.iter(|| wilcoxon_signed_rank(&a, &z, WilcoxonMode::Exact, "").unwrap())
    });
}

criterion_group!(benches, validate, graph, forward, wilcoxon);
criterion_main!(benches);
