use std::time::Instant;

use ssn_core::corpus::{apply_padding_corpus, compute_padding_spec};
use ssn_core::evaluation::*;
use ssn_core::numerics::{Optimizer, Tape};
use ssn_core::rng::stream;
use ssn_core::sampling::{sample_target_triple, ReferenceStrategy};
use ssn_core::ssn::*;

fn main() {
    let mut spec = SyntheticSpec::toy(1.0, 7);
    spec.n_dialogues = 400;
    let corpus = gen_synthetic_corpus(&spec).unwrap();
    let pad = compute_padding_spec(&corpus).unwrap();
    let dialogues = apply_padding_corpus(&corpus, pad).unwrap().dialogues;

    let cfg = SSNConfig::toy(spec.vocab_size);
    let mut rng = stream(1, "init");
    let mut model = SsnModel::new(cfg, &mut rng).unwrap();
    let mut opt = Optimizer::adam(3e-3);
    let mut train_rng = stream(2, "train");
    let strategy = ReferenceStrategy::OneEach;

    let (mut t_fwd, mut t_bwd, mut t_opt) = (0.0, 0.0, 0.0);
    let mut n_nodes = 0usize;
    for _ in 0..10 {
        let targets = sample_targets(&dialogues, 32, &mut train_rng).unwrap();
        let t0 = Instant::now();
        let mut tape = Tape::new();
        let w = SsnWeights::bind(&mut tape, &model).unwrap();
        let mut losses = Vec::new();
        for spec in &targets {
            let dialogue = &dialogues[spec.dialogue];
            let target = sample_target_triple(spec.t, spec.label, &mut train_rng).unwrap();
            losses.push(
                mc_loss_var(
                    &mut tape,
                    &w,
                    dialogue,
                    target,
                    spec.label,
                    strategy,
                    1,
                    &mut train_rng,
                )
                .unwrap(),
            );
        }
        let loss = tape.mean_stack(&losses).unwrap();
        n_nodes = tape.len();
        t_fwd += t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let grads = tape.backward(loss).unwrap();
        let by_name = w.bound.grads_by_name(&tape, &grads);
        t_bwd += t1.elapsed().as_secs_f64();

        let t2 = Instant::now();
        opt.step(&mut model.params, &by_name).unwrap();
        t_opt += t2.elapsed().as_secs_f64();
    }
    println!("nodes per tape: {n_nodes}");
    println!("fwd {:.3}s bwd {:.3}s opt {:.3}s (10 steps)", t_fwd, t_bwd, t_opt);
}
