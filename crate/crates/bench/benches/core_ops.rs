//! Benchmarks for the hot paths: convolution forward/backward, world
//! stepping, and sentence generation + tokenization.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use semrl_core::harness::arena_for;
use semrl_core::langgen::{tokenize, PatchGrid, TemplateBank, Vocabulary};
use semrl_core::neural::{ops, Tensor};
use semrl_core::rng::{stream_rng, Stream};
use semrl_core::world::{self, Action};

fn conv2d_forward(c: &mut Criterion) {
    let x = Tensor::constant(&[4, 6, 15, 21], vec![0.3; 4 * 6 * 15 * 21]);
    let f = Tensor::constant(&[16, 6, 3, 3], vec![0.05; 16 * 6 * 9]);
    let b = Tensor::constant(&[16], vec![0.0; 16]);
    c.bench_function("conv2d_forward_4x6x15x21", |bench| {
        bench.iter(|| ops::conv2d(black_box(&x), &f, &b, 2).unwrap())
    });
}

fn conv2d_backward(c: &mut Criterion) {
    c.bench_function("conv2d_backward_4x6x15x21", |bench| {
        bench.iter(|| {
            let x = Tensor::param("x", &[4, 6, 15, 21], vec![0.3; 4 * 6 * 15 * 21]);
            let f = Tensor::param("f", &[16, 6, 3, 3], vec![0.05; 16 * 6 * 9]);
            let b = Tensor::param("b", &[16], vec![0.0; 16]);
            let y = ops::conv2d(&x, &f, &b, 2).unwrap();
            let loss = ops::mean(&y).unwrap();
            loss.backward().unwrap();
            let v = loss.data()[0];
            black_box(v)
        })
    });
}

fn world_step(c: &mut Criterion) {
    let config = arena_for("defend_line").unwrap();
    let state = world::reset(&config, 7).unwrap();
    c.bench_function("world_step_defend_line", |bench| {
        bench.iter(|| world::step(black_box(&state), &config, Action::MoveRight).unwrap())
    });
}

fn sentence_and_tokenize(c: &mut Criterion) {
    let config = arena_for("defend_line").unwrap();
    let grid = PatchGrid::new(3, 3).unwrap();
    let bank = TemplateBank::default_bank();
    let vocab = Vocabulary::from_bank(&bank);
    let state = world::reset(&config, 7).unwrap();
    c.bench_function("sentence_plus_tokenize", |bench| {
        bench.iter(|| {
            let mut rng = stream_rng(7, Stream::Ambiguity);
            let words =
                semrl_core::langgen::sentence_for_state(black_box(&state), &config, grid, &bank, &mut rng);
            tokenize(&words, &vocab, grid.l_max())
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = conv2d_forward, conv2d_backward, world_step, sentence_and_tokenize
}
criterion_main!(benches);
