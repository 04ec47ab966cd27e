use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use vnsg_bench::{filled, model_fixture};
use vnsg_core::graph::{build_adaptive_adjacency, NodeEmbeddings};
use vnsg_core::{AdjacencyKind, Tape};

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [32, 128, 256] {
        let (a, b) = (filled(&[n, n], 1), filled(&[n, n], 2));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| {
                let mut tape = Tape::new();
                let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
                black_box(tape.matmul(va, vb).unwrap());
            })
        });
    }
    group.finish();
}

fn conv1d(c: &mut Criterion) {
    let x = filled(&[16 * 28, 16, 12], 3);
    let w = filled(&[32, 16, 3], 4);
    c.bench_function("conv1d forward+backward", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let (vx, vw) = (tape.param(x.clone()), tape.param(w.clone()));
            let y = tape.conv1d(vx, vw, None).unwrap();
            let s = tape.sum(y).unwrap();
            black_box(tape.backward(s).unwrap());
        })
    });
}

fn adjacency(c: &mut Criterion) {
    let emb = NodeEmbeddings::new(filled(&[720, 10], 5), filled(&[720, 10], 6), 0.1).unwrap();
    c.bench_function("adaptive adjacency 720 nodes", |bench| {
        bench.iter(|| black_box(build_adaptive_adjacency(&emb).unwrap()))
    });
}

fn training_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("train step");
    group.sample_size(20);
    for (kind, nv) in [(AdjacencyKind::Distance, 0), (AdjacencyKind::SemiAdaptive, 4)] {
        let (mut model, windows) = model_fixture(24, kind, nv);
        let idx: Vec<usize> = (0..16).collect();
        let x = windows.input_batch(&idx).unwrap();
        let y = windows.target_batch(&idx).unwrap();
        group.bench_function(format!("{kind} n_v={nv}"), |bench| {
            bench.iter(|| {
                let loss = model.accumulate_mae_grads(&x, &y).unwrap();
                model.params_mut().zero_grad();
                black_box(loss)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, matmul, conv1d, adjacency, training_step);
criterion_main!(benches);
