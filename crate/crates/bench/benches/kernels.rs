use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ekg_core::diffkit::{ParamStore, Tape, Tensor};
use ekg_core::graph2seq::{GatLayer, GraphStructure, Mode};
use ekg_core::metrics::{bleu_corpus, rouge_l, EvalPair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f32> {
    Tensor::from_fn(vec![rows, cols], |_| rng.gen_range(-1.0..1.0))
}

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul_forward_backward");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [32, 64, 128] {
        let mut store = ParamStore::<f32>::new();
        let w = store.add("w", random(&mut rng, n, n));
        let x = random(&mut rng, n, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                let tape = Tape::new(&store);
                let y = tape.constant(x.clone()).matmul(tape.param(w)).unwrap().sum();
                black_box(tape.backward(y).unwrap());
            })
        });
    }
    group.finish();
}

fn gat(c: &mut Criterion) {
    let mut group = c.benchmark_group("gat_forward");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dim = 64;
    let mut store = ParamStore::<f32>::new();
    let layer = GatLayer::new(&mut store, "gat", dim, false, &mut rng);
    for vertices in [5, 8] {
        let edges: Vec<(usize, usize)> = (0..vertices)
            .flat_map(|i| (i + 1..vertices).map(move |j| (i, j)))
            .filter(|&(i, j)| (i + j) % 2 == 1)
            .collect();
        let v = random(&mut rng, vertices, dim);
        let e = random(&mut rng, edges.len(), dim);
        let graph = GraphStructure::new(vertices, edges);
        for mode in [Mode::GatV, Mode::GatVE] {
            group.bench_function(format!("{mode:?}/{vertices}"), |b| {
                b.iter(|| {
                    let tape = Tape::inference(&store);
                    let out = layer
                        .forward(
                            &tape,
                            tape.constant(v.clone()),
                            Some(tape.constant(e.clone())),
                            &graph,
                            mode,
                        )
                        .unwrap();
                    black_box(out.0.value().data()[0]);
                })
            });
        }
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sentence = |len: usize| -> Vec<String> { (0..len).map(|_| format!("w{}", rng.gen_range(0..50))).collect() };
    let pairs: Vec<EvalPair> = (0..500)
        .map(|_| EvalPair::new(sentence(30), (0..3).map(|_| sentence(30)).collect()))
        .collect();
    c.bench_function("bleu_corpus/500x3", |b| {
        b.iter(|| black_box(bleu_corpus(&pairs).unwrap()))
    });
    c.bench_function("rouge_l/500x3", |b| b.iter(|| black_box(rouge_l(&pairs).unwrap())));
}

criterion_group!(benches, matmul, gat, metrics);
criterion_main!(benches);
