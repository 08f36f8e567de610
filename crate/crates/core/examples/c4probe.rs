use std::time::Instant;

use ssn_core::corpus::{apply_padding_corpus, compute_padding_spec};
use ssn_core::evaluation::*;
use ssn_core::numerics::Optimizer;
use ssn_core::rng::stream;
use ssn_core::sampling::{sample_references, OrderLabel, ReferenceStrategy};
use ssn_core::ssn::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let runs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(2);
    let pair_h: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(64);
    let reason_h: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(128);
    let norefs_steps: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(steps);
    let batch: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(32);
    let lr: f64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(3e-3);
    let train_m: usize = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(1);

    let mut spec = SyntheticSpec::toy(0.8, 7);
    spec.n_dialogues = 2000;
    let corpus = gen_synthetic_corpus(&spec).unwrap();
    let pad = compute_padding_spec(&corpus).unwrap();
    let dialogues = apply_padding_corpus(&corpus, pad).unwrap().dialogues;
    let split = (dialogues.len() * 4) / 5;
    let (train, test) = dialogues.split_at(split);

    let t0 = Instant::now();
    let mut prev = 0.0f64;
    for use_refs in [true, false] {
        let cfg_steps = if use_refs { steps } else { norefs_steps };
        for run in 0..runs {
            let seed = 400 + run as u64;
            let mut cfg = SSNConfig::toy(spec.vocab_size);
            cfg.pair_hidden = pair_h;
            cfg.reason_hidden = reason_h;
            cfg.use_references = use_refs;
            let mut init_rng = stream(seed, "init");
            let mut model = SsnModel::new(cfg, &mut init_rng).unwrap();
            let mut rng = stream(seed, "train");
            let set = sample_training_set_pad_free(train, 4000, &mut rng).unwrap();
            let mut opt = Optimizer::adam(lr);
            pretrain_ssn_fixed(
                &mut model,
                train,
                &set,
                ReferenceStrategy::OneEach,
                cfg_steps,
                batch,
                train_m,
                &mut opt,
                &mut rng,
            )
            .unwrap();
            let train_done = t0.elapsed().as_secs_f64();

            let strategy = if use_refs {
                Some(ReferenceStrategy::OneEach)
            } else {
                None
            };
            let mut eval_rng = stream(seed, "eval-triples");
            let items = sample_pad_free_items(test, strategy, 1000, &mut eval_rng).unwrap();
            for eval_m in [1usize, 2, 4, 8] {
                if !use_refs && eval_m > 1 {
                    break;
                }
                let mut correct = 0.0;
                let mut vote_correct = 0.0;
                for item in &items {
                    let t = *item.target.indices.iter().max().unwrap() as usize;
                    let mut p = 0.0;
                    let mut votes = 0.0;
                    for j in 0..eval_m {
                        let refs = if !use_refs {
                            None
                        } else if j == 0 {
                            item.refs
                        } else {
                            Some(
                                sample_references(t, ReferenceStrategy::OneEach, &mut eval_rng)
                                    .unwrap(),
                            )
                        };
                        let s = model
                            .score_triple(&test[item.dialogue], item.target, refs)
                            .unwrap();
                        p += s;
                        if s > 0.5 {
                            votes += 1.0;
                        } else if s == 0.5 {
                            votes += 0.5;
                        }
                    }
                    p /= eval_m as f64;
                    votes /= eval_m as f64;
                    if p == 0.5 {
                        correct += 0.5;
                    } else if (p > 0.5) == (item.label == OrderLabel::Misordered) {
                        correct += 1.0;
                    }
                    if votes == 0.5 {
                        vote_correct += 0.5;
                    } else if (votes > 0.5) == (item.label == OrderLabel::Misordered) {
                        vote_correct += 1.0;
                    }
                }
                let acc = correct / items.len() as f64;
                let vacc = vote_correct / items.len() as f64;
                let now = t0.elapsed().as_secs_f64();
                println!(
                    "refs={use_refs} run={run} eval_m={eval_m}: acc {acc:.4} vote {vacc:.4} train {:.0}s eval {:.0}s",
                    train_done - prev,
                    now - train_done
                );
            }
            prev = t0.elapsed().as_secs_f64();
        }
    }
}
