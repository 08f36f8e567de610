use std::time::Instant;

use ssn_core::corpus::{apply_padding_corpus, compute_padding_spec};
use ssn_core::evaluation::*;
use ssn_core::numerics::Optimizer;
use ssn_core::rng::stream;
use ssn_core::sampling::ReferenceStrategy;
use ssn_core::ssn::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let strength: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let steps: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(500);
    let use_refs: bool = args.get(3).map(|s| s == "refs").unwrap_or(true);
    let lr: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(3e-3);
    let m: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1);
    let n_dialogues: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(400);

    let mut spec = SyntheticSpec::toy(strength, 7);
    spec.n_dialogues = n_dialogues;
    let corpus = gen_synthetic_corpus(&spec).unwrap();
    let pad = compute_padding_spec(&corpus).unwrap();
    let dialogues = apply_padding_corpus(&corpus, pad).unwrap().dialogues;
    let split = n_dialogues * 4 / 5;
    let (train, test) = dialogues.split_at(split);

    let mut cfg = SSNConfig::toy(spec.vocab_size);
    cfg.use_references = use_refs;
    let mut rng = stream(1, "init");
    let mut model = SsnModel::new(cfg, &mut rng).unwrap();
    let mut opt = Optimizer::adam(lr);
    let mut train_rng = stream(2, "train");
    let strategy = ReferenceStrategy::OneEach;

    let t0 = Instant::now();
    let chunk = 100;
    let mut done = 0;
    while done < steps {
        let frac = done as f64 / steps as f64;
        opt.lr = if frac < 0.5 {
            lr
        } else {
            lr * (1.0 - (frac - 0.5) / 0.5 * 0.9)
        };
        let report = pretrain_ssn(
            &mut model, train, strategy, chunk, 32, m, &mut opt, None, &mut train_rng,
        )
        .unwrap();
        done += chunk;
        let recent: f64 = report.loss_curve.iter().rev().take(50).sum::<f64>() / 50.0;
        let mut eval_rng = stream(3, "eval");
        let items = sample_eval_items(
            test,
            if use_refs { Some(strategy) } else { None },
            1000,
            &mut eval_rng,
        )
        .unwrap();
        let acc = evaluate_accuracy(&mut model, test, &items, 0.5).unwrap();
        println!(
            "step {done}: loss {recent:.4} acc {acc:.4} elapsed {:.1}s",
            t0.elapsed().as_secs_f64()
        );
    }
}
