//! Microbenchmarks for the numeric hot paths: matrix-vector products, one
//! LSTM gate update, and a full triple score with its backward pass.

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssn_core::corpus::{apply_padding_corpus, compute_padding_spec, Dialogue};
use ssn_core::evaluation::{gen_synthetic_corpus, SyntheticSpec};
use ssn_core::numerics::{lstm_cell, LstmWeights, Tape, Tensor};
use ssn_core::rng::stream;
use ssn_core::sampling::{sample_references, sample_target_triple, OrderLabel, ReferenceStrategy};
use ssn_core::ssn::{score_var, SSNConfig, SsnModel, SsnWeights};

fn rand_tensor<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn bench_matvec(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_tensor(&[256, 256], &mut rng);
    let x = rand_tensor(&[256], &mut rng);
    c.bench_function("matvec_256_forward_backward", |bencher| {
        bencher.iter(|| {
            let mut tape = Tape::new();
            let av = tape.leaf(a.clone(), true);
            let xv = tape.leaf(x.clone(), true);
            let y = tape.matmul(av, xv).unwrap();
            let loss = tape.sum(y).unwrap();
            tape.backward(loss).unwrap()
        })
    });
}

fn bench_lstm_cell(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let hidden = 128;
    let input = 64;
    let w_ih = rand_tensor(&[4 * hidden, input], &mut rng);
    let w_hh = rand_tensor(&[4 * hidden, hidden], &mut rng);
    let b = rand_tensor(&[4 * hidden], &mut rng);
    let x = rand_tensor(&[input], &mut rng);
    let h0 = rand_tensor(&[hidden], &mut rng);
    let c0 = rand_tensor(&[hidden], &mut rng);
    c.bench_function("lstm_cell_128_forward_backward", |bencher| {
        bencher.iter(|| {
            let mut tape = Tape::new();
            let w = LstmWeights {
                w_ih: tape.leaf(w_ih.clone(), true),
                w_hh: tape.leaf(w_hh.clone(), true),
                b: tape.leaf(b.clone(), true),
                hidden,
            };
            let xv = tape.leaf(x.clone(), false);
            let hv = tape.leaf(h0.clone(), false);
            let cv = tape.leaf(c0.clone(), false);
            let (h, _c) = lstm_cell(&mut tape, &w, xv, hv, cv).unwrap();
            let loss = tape.sum(h).unwrap();
            tape.backward(loss).unwrap()
        })
    });
}

fn toy_dialogue() -> Dialogue {
    let spec = SyntheticSpec::toy(1.0, 3);
    let corpus = gen_synthetic_corpus(&spec).unwrap();
    let pad = compute_padding_spec(&corpus).unwrap();
    apply_padding_corpus(&corpus, pad)
        .unwrap()
        .dialogues
        .into_iter()
        .next()
        .unwrap()
}

fn bench_triple_score(c: &mut Criterion) {
    let dialogue = toy_dialogue();
    let mut init = stream(3, "init");
    let model = SsnModel::new(SSNConfig::toy(64), &mut init).unwrap();
    let mut rng = stream(4, "sampler");
    let t = dialogue.turns().min(4).max(1);
    let target = sample_target_triple(t, OrderLabel::Misordered, &mut rng).unwrap();
    let refs = sample_references(t, ReferenceStrategy::OneEach, &mut rng).unwrap();
    c.bench_function("triple_score_forward_backward", |bencher| {
        bencher.iter(|| {
            let mut tape = Tape::new();
            let w = SsnWeights::bind(&mut tape, &model).unwrap();
            let p = score_var(&mut tape, &w, &dialogue, target, Some(refs), None).unwrap();
            tape.backward(p).unwrap()
        })
    });
}

criterion_group!(benches, bench_matvec, bench_lstm_cell, bench_triple_score);
criterion_main!(benches);
