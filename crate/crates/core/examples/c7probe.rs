use std::time::Instant;

use rand::Rng;

use ssn_core::adversarial::{train_open_domain, turn_history, AdvConfig};
use ssn_core::corpus::{apply_padding_corpus, compute_padding_spec, Dialogue, Utterance};
use ssn_core::evaluation::{adver_suc, gen_synthetic_corpus, SyntheticSpec};
use ssn_core::generator::{mle_step, DecodeMode, GenConfig, Generator};
use ssn_core::numerics::Optimizer;
use ssn_core::rng::stream;
use ssn_core::sampling::{ReferenceStrategy, SamplerConfig};
use ssn_core::ssn::{pretrain_ssn, EncodingMode, SSNConfig, SsnModel};

fn adv_suc(gen: &Generator, judge: &SsnModel, dialogues: &[Dialogue], seed: u64) -> f64 {
    let mut ctx_rng = stream(seed, "eval-triples");
    let contexts: Vec<(usize, usize)> = (0..100)
        .map(|_| {
            let d = ctx_rng.gen_range(0..dialogues.len());
            let t = ctx_rng.gen_range(1..=dialogues[d].turns());
            (d, t)
        })
        .collect();
    let histories: Vec<(Utterance, Utterance)> = contexts
        .iter()
        .map(|&(d, t)| {
            (
                dialogues[d].pair(t as i64 - 1).unwrap().a.clone(),
                dialogues[d].pair(t as i64).unwrap().q.clone(),
            )
        })
        .collect();
    let mut respond_rng = stream(seed, "rollouts");
    let mut judge_rng = stream(seed, "sampler");
    let mut idx = 0usize;
    adver_suc(
        |prev, cur| gen.respond(prev, cur, DecodeMode::Sample, &mut respond_rng),
        |_, _, response| {
            let (d, t) = contexts[idx % contexts.len()];
            idx += 1;
            let p = judge.estimate_p_star(
                &dialogues[d],
                t,
                Some(response),
                2,
                1,
                ReferenceStrategy::OneEach,
                &mut judge_rng,
            )?;
            Ok(p >= 0.5)
        },
        &histories,
        100,
    )
    .unwrap()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ssn_steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(300);
    let gen_steps: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(30);
    let rounds: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(20);
    let g_per_round: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(2);
    let g_lr: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(3e-3);
    let mix: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0.5);

    let mut spec = SyntheticSpec::toy(1.0, 77);
    spec.n_dialogues = 300;
    let corpus = gen_synthetic_corpus(&spec).unwrap();
    let pad = compute_padding_spec(&corpus).unwrap();
    let dialogues = apply_padding_corpus(&corpus, pad).unwrap().dialogues;

    let t0 = Instant::now();
    let cfg = SSNConfig {
        embed_dim: 8,
        pair_hidden: 16,
        reason_hidden: 16,
        mlp_hidden: 16,
        mode: EncodingMode::Pair,
        use_references: true,
        vocab_size: spec.vocab_size,
    };
    let mut init = stream(77, "init");
    let mut ssn = SsnModel::new(cfg, &mut init).unwrap();
    let mut opt = Optimizer::adam(3e-3);
    let mut rng = stream(77, "sampler");
    pretrain_ssn(
        &mut ssn,
        &dialogues,
        ReferenceStrategy::OneEach,
        ssn_steps,
        16,
        1,
        &mut opt,
        None,
        &mut rng,
    )
    .unwrap();
    let judge = ssn.clone();
    println!("ssn pretrained in {:.0}s", t0.elapsed().as_secs_f64());

    let gen_cfg = GenConfig {
        vocab_size: spec.vocab_size,
        embed_dim: 16,
        hidden: 16,
        attention: true,
        max_decode_len: 6,
    };
    let mut gen = Generator::new(gen_cfg, &mut init).unwrap();
    let mut g_opt = Optimizer::adam(1e-2);
    for _ in 0..gen_steps {
        let batch: Vec<(Vec<u32>, Vec<u32>)> = (0..8)
            .map(|_| {
                let d = rng.gen_range(0..dialogues.len());
                let t = rng.gen_range(1..=dialogues[d].turns());
                (
                    turn_history(&dialogues[d], t).unwrap(),
                    dialogues[d].pair(t as i64).unwrap().a.tokens.clone(),
                )
            })
            .collect();
        mle_step(&mut gen, &batch, &mut g_opt).unwrap();
    }
    let mle_gen = gen.clone();
    println!("gen pretrained at {:.0}s", t0.elapsed().as_secs_f64());

    let adv = AdvConfig {
        ssn_steps: 1,
        g_steps: g_per_round,
        rounds,
        batch: 8,
        mix_ratio: mix,
        strategy: ReferenceStrategy::OneEach,
        sampler: SamplerConfig {
            m: 1,
            n_target: 2,
            seed: 0,
        },
    };
    let mut ssn_opt = Optimizer::adam(1e-3);
    let mut adv_g_opt = Optimizer::adam(g_lr);
    let mut adv_rng = stream(78, "sampler");
    let log = train_open_domain(
        &mut gen,
        &mut ssn,
        &dialogues,
        &adv,
        &mut ssn_opt,
        &mut adv_g_opt,
        &mut adv_rng,
    )
    .unwrap();
    for l in log.iter().step_by(4).chain(log.last()) {
        println!(
            "round {}: obj {:.3} reward {:.3} p_real {:.3} p_gen {:.3}",
            l.round, l.ssn_obj, l.g_reward, l.p_star_real, l.p_star_gen
        );
    }
    let last = log.last().unwrap();
    println!(
        "p_gap {:.3} after rounds at {:.0}s",
        last.p_star_real - last.p_star_gen,
        t0.elapsed().as_secs_f64()
    );

    let suc_mle = adv_suc(&mle_gen, &judge, &dialogues, 790);
    let suc_adv = adv_suc(&gen, &judge, &dialogues, 790);
    println!(
        "adver_suc mle {suc_mle:.3} adv {suc_adv:.3} gain {:.3} total {:.0}s",
        suc_adv - suc_mle,
        t0.elapsed().as_secs_f64()
    );
}
