use ssn_core::corpus::{apply_padding_corpus, compute_padding_spec};
use ssn_core::evaluation::*;
use ssn_core::rng::stream;
use ssn_core::sampling::ReferenceStrategy;

fn main() {
    for strength in [1.0, 0.8] {
        let mut spec = SyntheticSpec::toy(strength, 7);
        spec.n_dialogues = 400;
        let corpus = gen_synthetic_corpus(&spec).unwrap();
        let pad = compute_padding_spec(&corpus).unwrap();
        let dialogues = apply_padding_corpus(&corpus, pad).unwrap().dialogues;
        for (name, strat) in [
            ("one-each", Some(ReferenceStrategy::OneEach)),
            ("no-refs", None),
        ] {
            let mut eval_rng = stream(3, "eval");
            let items = sample_pad_free_items(&dialogues, strat, 2000, &mut eval_rng).unwrap();
            let mut scorer = OracleScorer { spec, strategy: ReferenceStrategy::OneEach };
            let acc = evaluate_accuracy(&mut scorer, &dialogues, &items, 0.5).unwrap();
            println!("strength {strength} {name}: oracle ceiling {acc:.4}");
        }
    }
}
