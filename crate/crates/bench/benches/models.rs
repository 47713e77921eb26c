use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use dsalm::autodiff::Tape;
use dsalm_bench::{fixture, sentence_of_length};

fn lstm(c: &mut Criterion) {
    let mut group = c.benchmark_group("lstm");
    for hidden in [32, 128] {
        let f = fixture(200, hidden);
        let i = sentence_of_length(&f, 8);
        let ids = &f.ids[i];
        group.bench_with_input(BenchmarkId::new("sentence_nll", hidden), ids, |b, ids| {
            b.iter(|| f.lstm.sentence_nll(black_box(ids)).unwrap())
        });
        let mut grads = f.lstm.store.zero_gradients();
        group.bench_with_input(BenchmarkId::new("forward_backward", hidden), ids, |b, ids| {
            b.iter(|| {
                let mut tape = Tape::new(&f.lstm.store);
                let loss = f.lstm.sentence_loss(&mut tape, ids, None, None).unwrap();
                tape.backward_into(loss, &mut grads).unwrap();
            })
        });
    }
    group.finish();
}

fn rnng(c: &mut Criterion) {
    let mut group = c.benchmark_group("rnng");
    for hidden in [32, 128] {
        let f = fixture(200, hidden);
        let i = sentence_of_length(&f, 8);
        let tree = &f.trees[i];
        let words = tree.sentence();
        group.bench_with_input(BenchmarkId::new("joint_logprob", hidden), tree, |b, tree| {
            b.iter(|| f.rnng.joint_logprob(black_box(&words), tree).unwrap())
        });
        let actions = f.rnng.actions_of(tree).unwrap();
        let mut grads = f.rnng.store.zero_gradients();
        group.bench_with_input(BenchmarkId::new("forward_backward", hidden), &actions, |b, actions| {
            b.iter(|| {
                let mut tape = Tape::new(&f.rnng.store);
                let loss = f.rnng.derivation_loss(&mut tape, actions, None).unwrap();
                tape.backward_into(loss, &mut grads).unwrap();
            })
        });
    }
    group.finish();
}

criterion_group!(benches, lstm, rnng);
criterion_main!(benches);
