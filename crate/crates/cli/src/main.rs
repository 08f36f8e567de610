//! `ssn` — training and evaluation runs for the dialogue order-detection
//! stack. One subcommand per pipeline stage; every run writes its artifacts
//! plus a checksummed manifest under the output directory.

mod ckpt;
mod config;
mod manifest;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ssn_core::adversarial::{
    filter_experiences, train_open_domain, turn_history, Experience, ExperienceBatch, Provenance,
    ThresholdRule,
};
use ssn_core::corpus::{
    apply_padding_corpus, build_vocab, compute_padding_spec, encode_corpus, filter_by_length,
    infer_vocab_size, load_corpus, load_token_corpus, save_token_corpus, Corpus, Dialogue,
    Utterance,
};
use ssn_core::evaluation::{
    adver_suc, distinct_n, gen_synthetic_corpus, intrinsic_eval, mean_stdev, MetricEntry,
    MetricsReport,
};
use ssn_core::generator::{mle_step, DecodeMode, GenConfig, Generator};
use ssn_core::numerics::Optimizer;
use ssn_core::rng::stream;
use ssn_core::sampling::{
    sample_references, sample_target_triple, OrderLabel, ReferenceStrategy,
};
use ssn_core::ssn::{
    pretrain_ssn, pretrain_ssn_fixed, sample_training_set_pad_free, SSNConfig, SsnModel,
};

#[derive(Parser)]
#[command(name = "ssn", version, about = "Dialogue order-detection runs")]
struct Cli {
    /// JSON run-configuration file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; all randomness derives from it through named streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    OneEach,
    BothOrdered,
    BothMisordered,
    /// Score the target triple alone.
    None,
}

impl StrategyArg {
    fn to_option(self) -> Option<ReferenceStrategy> {
        match self {
            StrategyArg::OneEach => Some(ReferenceStrategy::OneEach),
            StrategyArg::BothOrdered => Some(ReferenceStrategy::BothOrdered),
            StrategyArg::BothMisordered => Some(ReferenceStrategy::BothMisordered),
            StrategyArg::None => None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Greedy,
    Sample,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    SampledTau,
    FixedMidpoint,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a text corpus (JSON Lines of q/a pairs) into a token corpus.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus with a known difficulty knob.
    Synth(SynthArgs),
    /// Sample presentation triples and references for inspection.
    SampleTriples(SampleTriplesArgs),
    /// Pretrain the order detector on corpus triples.
    PretrainSsn(PretrainSsnArgs),
    /// Intrinsic accuracy protocol over independent training runs.
    EvalIntrinsic(EvalIntrinsicArgs),
    /// Teacher-forcing pretraining of the response generator.
    PretrainGen(PretrainGenArgs),
    /// Alternating adversarial training of generator and detector.
    TrainAdversarial(TrainAdversarialArgs),
    /// Decode responses from a generator checkpoint.
    Generate(GenerateArgs),
    /// Generation metrics (adversarial success, distinct-n) as CSV + JSON.
    Eval(EvalArgs),
    /// Score simulated experiences and keep those above the threshold band.
    FilterExperience(FilterExperienceArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Text corpus, one dialogue per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1)]
    min_words: usize,
    #[arg(long, default_value_t = usize::MAX)]
    max_words: usize,
    /// Minimum token frequency for a vocabulary entry.
    #[arg(long, default_value_t = 1)]
    min_count: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    strength: Option<f64>,
    #[arg(long)]
    dialogues: Option<usize>,
    #[arg(long)]
    min_turns: Option<usize>,
    #[arg(long)]
    max_turns: Option<usize>,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    utterance_len: Option<usize>,
}

#[derive(Args)]
struct SampleTriplesArgs {
    /// Target turn.
    #[arg(long)]
    t: usize,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, value_enum, default_value_t = StrategyArg::OneEach)]
    strategy: StrategyArg,
}

#[derive(Args)]
struct PretrainSsnArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Reference redraws per target and step.
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 3e-3)]
    lr: f64,
    #[arg(long, value_enum, default_value_t = StrategyArg::OneEach)]
    strategy: StrategyArg,
}

#[derive(Args)]
struct EvalIntrinsicArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = StrategyArg::OneEach)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, default_value_t = 4000)]
    train_n: usize,
    #[arg(long, default_value_t = 1000)]
    test_n: usize,
    /// Optimizer steps over the fixed training triples.
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 3e-3)]
    lr: f64,
}

#[derive(Args)]
struct PretrainGenArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
}

#[derive(Args)]
struct TrainAdversarialArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Pretrained detector checkpoint.
    #[arg(long)]
    ssn: PathBuf,
    /// Pretrained generator checkpoint.
    #[arg(long)]
    gen: PathBuf,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    ssn_lr: f64,
    #[arg(long, default_value_t = 1e-3)]
    g_lr: f64,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    gen: PathBuf,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Greedy)]
    mode: ModeArg,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    ssn: PathBuf,
    #[arg(long)]
    gen: PathBuf,
    /// Judged responses per run.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    runs: usize,
}

#[derive(Args)]
struct FilterExperienceArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    ssn: PathBuf,
    #[arg(long)]
    gen: PathBuf,
    #[arg(long, default_value_t = 32)]
    count: usize,
    #[arg(long)]
    low: Option<f64>,
    #[arg(long)]
    high: Option<f64>,
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; everything else is a
            // usage error.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => config::RunConfig::load(path)?,
        None => config::RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.synth.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating output directory {}", cfg.out.display()))?;
    let started = manifest::unix_now();
    let (command, artifacts) = match cli.command {
        Command::Ingest(args) => ("ingest", cmd_ingest(&cfg, &args)?),
        Command::Synth(args) => ("synth", cmd_synth(&mut cfg, &args)?),
        Command::SampleTriples(args) => ("sample-triples", cmd_sample_triples(&cfg, &args)?),
        Command::PretrainSsn(args) => ("pretrain-ssn", cmd_pretrain_ssn(&cfg, &args)?),
        Command::EvalIntrinsic(args) => ("eval-intrinsic", cmd_eval_intrinsic(&cfg, &args)?),
        Command::PretrainGen(args) => ("pretrain-gen", cmd_pretrain_gen(&cfg, &args)?),
        Command::TrainAdversarial(args) => {
            ("train-adversarial", cmd_train_adversarial(&mut cfg, &args)?)
        }
        Command::Generate(args) => ("generate", cmd_generate(&cfg, &args)?),
        Command::Eval(args) => ("eval", cmd_eval(&cfg, &args)?),
        Command::FilterExperience(args) => {
            ("filter-experience", cmd_filter_experience(&mut cfg, &args)?)
        }
    };
    let snapshot = serde_json::to_value(&cfg)?;
    manifest::write_manifest(&cfg.out, command, &snapshot, started, &artifacts)?;
    Ok(())
}

fn corpus_path(cfg: &config::RunConfig, flag: &Option<PathBuf>) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.corpus.clone())
        .context("no corpus given: pass --corpus or set `corpus` in the config")
}

/// Loads a token corpus and applies the three shared padding pairs.
fn load_padded(path: &Path) -> Result<(Vec<Dialogue>, usize)> {
    let corpus = load_token_corpus(path)?;
    if corpus.dialogues.is_empty() {
        bail!("corpus {} has no dialogues", path.display());
    }
    let vocab = infer_vocab_size(&corpus);
    let spec = compute_padding_spec(&corpus)?;
    let padded = apply_padding_corpus(&corpus, spec)?;
    Ok((padded.dialogues, vocab))
}

fn ssn_config(cfg: &config::RunConfig, vocab: usize) -> SSNConfig {
    cfg.ssn.unwrap_or_else(|| SSNConfig::toy(vocab))
}

fn gen_config(cfg: &config::RunConfig, vocab: usize) -> GenConfig {
    cfg.gen.unwrap_or_else(|| GenConfig::toy(vocab))
}

fn strategy_name(strategy: ReferenceStrategy) -> &'static str {
    match strategy {
        ReferenceStrategy::OneEach => "one-each",
        ReferenceStrategy::BothOrdered => "both-ordered",
        ReferenceStrategy::BothMisordered => "both-misordered",
    }
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.push(b'\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Draws `count` generation contexts `(dialogue index, turn)`.
fn draw_contexts<R: rand::Rng>(
    dialogues: &[Dialogue],
    count: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let usable: Vec<usize> = (0..dialogues.len())
        .filter(|&i| dialogues[i].turns() >= 1)
        .collect();
    if usable.is_empty() {
        bail!("no dialogues with real turns");
    }
    Ok((0..count)
        .map(|_| {
            let d = usable[rng.gen_range(0..usable.len())];
            let t = rng.gen_range(1..=dialogues[d].turns());
            (d, t)
        })
        .collect())
}

fn cmd_ingest(cfg: &config::RunConfig, args: &IngestArgs) -> Result<Vec<PathBuf>> {
    let raw = load_corpus(&args.input)?;
    let filtered = filter_by_length(&raw, args.min_words, args.max_words)?;
    if filtered.dialogues.is_empty() {
        bail!("no dialogues survive the length filter");
    }
    let vocab = build_vocab(&filtered, args.min_count)?;
    let encoded: Corpus = encode_corpus(&filtered, &vocab);
    let corpus_out = cfg.out.join("corpus.jsonl");
    let vocab_out = cfg.out.join("vocab.json");
    save_token_corpus(&encoded, &corpus_out)?;
    vocab.save(&vocab_out)?;
    eprintln!(
        "ingested {} dialogues ({} empty skipped), vocabulary {}",
        encoded.dialogues.len(),
        raw.skipped_empty,
        vocab.size()
    );
    Ok(vec![corpus_out, vocab_out])
}

fn cmd_synth(cfg: &mut config::RunConfig, args: &SynthArgs) -> Result<Vec<PathBuf>> {
    let spec = &mut cfg.synth;
    spec.seed = cfg.seed;
    if let Some(v) = args.strength {
        spec.strength = v;
    }
    if let Some(v) = args.dialogues {
        spec.n_dialogues = v;
    }
    if let Some(v) = args.min_turns {
        spec.min_turns = v;
    }
    if let Some(v) = args.max_turns {
        spec.max_turns = v;
    }
    if let Some(v) = args.vocab {
        spec.vocab_size = v;
    }
    if let Some(v) = args.utterance_len {
        spec.utterance_len = v;
    }
    let corpus = gen_synthetic_corpus(spec)?;
    let corpus_out = cfg.out.join("corpus.jsonl");
    save_token_corpus(&corpus, &corpus_out)?;
    eprintln!(
        "wrote {} synthetic dialogues (strength {})",
        corpus.dialogues.len(),
        spec.strength
    );
    Ok(vec![corpus_out])
}

fn cmd_sample_triples(cfg: &config::RunConfig, args: &SampleTriplesArgs) -> Result<Vec<PathBuf>> {
    let strategy = args
        .strategy
        .to_option()
        .context("sample-triples needs a reference strategy other than `none`")?;
    let mut rng = stream(cfg.seed, "sampler");
    let mut rows = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let label = if i % 2 == 0 {
            OrderLabel::Ordered
        } else {
            OrderLabel::Misordered
        };
        let target = sample_target_triple(args.t, label, &mut rng)?;
        let (r1, r2) = sample_references(args.t, strategy, &mut rng)?;
        rows.push(json!({
            "target": target.indices,
            "label": label.as_u8(),
            "references": [r1.indices, r2.indices],
        }));
    }
    let out = cfg.out.join("triples.jsonl");
    write_jsonl(&out, &rows)?;
    Ok(vec![out])
}

fn cmd_pretrain_ssn(cfg: &config::RunConfig, args: &PretrainSsnArgs) -> Result<Vec<PathBuf>> {
    let strategy = args
        .strategy
        .to_option()
        .unwrap_or(ReferenceStrategy::OneEach);
    let use_references = args.strategy.to_option().is_some();
    let path = corpus_path(cfg, &args.corpus)?;
    let (dialogues, vocab) = load_padded(&path)?;
    let mut model_cfg = ssn_config(cfg, vocab);
    model_cfg.use_references = use_references;
    let mut init_rng = stream(cfg.seed, "init");
    let mut model = SsnModel::new(model_cfg, &mut init_rng)?;
    let mut opt = Optimizer::adam(args.lr);
    let mut train_rng = stream(cfg.seed, "sampler");
    let report = pretrain_ssn(
        &mut model,
        &dialogues,
        strategy,
        args.steps,
        args.batch,
        args.m,
        &mut opt,
        None,
        &mut train_rng,
    )?;
    let loss_out = cfg.out.join("loss.jsonl");
    let rows: Vec<serde_json::Value> = report
        .loss_curve
        .iter()
        .enumerate()
        .map(|(step, loss)| json!({"step": step, "loss": loss}))
        .collect();
    write_jsonl(&loss_out, &rows)?;
    let ckpt_out = cfg.out.join("ssn.json");
    ckpt::save_ssn(&ckpt_out, &model)?;
    eprintln!(
        "pretrained detector for {} steps, final loss {:.4}",
        report.loss_curve.len(),
        report.loss_curve.last().copied().unwrap_or(f64::NAN)
    );
    Ok(vec![loss_out, ckpt_out])
}

fn cmd_eval_intrinsic(cfg: &config::RunConfig, args: &EvalIntrinsicArgs) -> Result<Vec<PathBuf>> {
    let path = corpus_path(cfg, &args.corpus)?;
    let (dialogues, vocab) = load_padded(&path)?;
    let strategy = args.strategy.to_option();
    let base_cfg = ssn_config(cfg, vocab);
    let factory = |train: &[Dialogue], train_n: usize, run_seed: u64| {
        let mut model_cfg = base_cfg;
        model_cfg.use_references = strategy.is_some();
        let mut init_rng = stream(run_seed, "init");
        let mut model = SsnModel::new(model_cfg, &mut init_rng)?;
        let mut rng = stream(run_seed, "sampler");
        let set = sample_training_set_pad_free(train, train_n, &mut rng)?;
        let mut opt = Optimizer::adam(args.lr);
        pretrain_ssn_fixed(
            &mut model,
            train,
            &set,
            strategy.unwrap_or(ReferenceStrategy::OneEach),
            args.steps,
            args.batch,
            args.m,
            &mut opt,
            &mut rng,
        )?;
        Ok(model)
    };
    let report = intrinsic_eval(
        factory,
        &dialogues,
        strategy,
        args.runs,
        args.train_n,
        args.test_n,
        cfg.seed,
    )?;
    let metrics = MetricsReport {
        entries: vec![MetricEntry {
            metric: "accuracy".to_string(),
            strategy: report.strategy.clone(),
            mean: report.mean,
            stdev: report.stdev,
            runs: args.runs,
            n: args.test_n,
        }],
    };
    let csv_out = cfg.out.join("eval.csv");
    let json_out = cfg.out.join("eval.json");
    std::fs::write(&csv_out, metrics.to_csv())?;
    std::fs::write(&json_out, serde_json::to_string_pretty(&report)?)?;
    eprintln!(
        "intrinsic accuracy {:.4} +- {:.4} over {} runs",
        report.mean, report.stdev, args.runs
    );
    Ok(vec![csv_out, json_out])
}

fn cmd_pretrain_gen(cfg: &config::RunConfig, args: &PretrainGenArgs) -> Result<Vec<PathBuf>> {
    let path = corpus_path(cfg, &args.corpus)?;
    let (dialogues, vocab) = load_padded(&path)?;
    let mut init_rng = stream(cfg.seed, "init");
    let mut gen = Generator::new(gen_config(cfg, vocab), &mut init_rng)?;
    let mut opt = Optimizer::adam(args.lr);
    let mut rng = stream(cfg.seed, "sampler");
    let mut rows = Vec::with_capacity(args.steps);
    for step in 0..args.steps {
        let contexts = draw_contexts(&dialogues, args.batch, &mut rng)?;
        let batch: Vec<(Vec<u32>, Vec<u32>)> = contexts
            .iter()
            .map(|&(d, t)| {
                let history = turn_history(&dialogues[d], t)?;
                let target = dialogues[d].pair(t as i64)?.a.tokens.clone();
                Ok((history, target))
            })
            .collect::<Result<_>>()?;
        let loss = mle_step(&mut gen, &batch, &mut opt)?;
        rows.push(json!({"step": step, "loss": loss}));
    }
    let loss_out = cfg.out.join("loss.jsonl");
    write_jsonl(&loss_out, &rows)?;
    let ckpt_out = cfg.out.join("gen.json");
    ckpt::save_gen(&ckpt_out, &gen)?;
    Ok(vec![loss_out, ckpt_out])
}

fn cmd_train_adversarial(
    cfg: &mut config::RunConfig,
    args: &TrainAdversarialArgs,
) -> Result<Vec<PathBuf>> {
    let path = corpus_path(cfg, &args.corpus)?;
    let (dialogues, _vocab) = load_padded(&path)?;
    let mut ssn = ckpt::load_ssn(&args.ssn, cfg.ssn.as_ref())?;
    let mut gen = ckpt::load_gen(&args.gen, cfg.gen.as_ref())?;
    if let Some(v) = args.rounds {
        cfg.adv.rounds = v;
    }
    if let Some(v) = args.batch {
        cfg.adv.batch = v;
    }
    let mut ssn_opt = Optimizer::adam(args.ssn_lr);
    let mut g_opt = Optimizer::adam(args.g_lr);
    let mut rng = stream(cfg.seed, "sampler");
    let log = train_open_domain(
        &mut gen,
        &mut ssn,
        &dialogues,
        &cfg.adv,
        &mut ssn_opt,
        &mut g_opt,
        &mut rng,
    )?;
    let log_out = cfg.out.join("rounds.jsonl");
    write_jsonl(&log_out, &log)?;
    let ssn_out = cfg.out.join("ssn.json");
    let gen_out = cfg.out.join("gen.json");
    ckpt::save_ssn(&ssn_out, &ssn)?;
    ckpt::save_gen(&gen_out, &gen)?;
    if let Some(last) = log.last() {
        eprintln!(
            "round {}: p*(real) {:.3} vs p*(gen) {:.3}",
            last.round, last.p_star_real, last.p_star_gen
        );
    }
    Ok(vec![log_out, ssn_out, gen_out])
}

fn cmd_generate(cfg: &config::RunConfig, args: &GenerateArgs) -> Result<Vec<PathBuf>> {
    let path = corpus_path(cfg, &args.corpus)?;
    let (dialogues, _vocab) = load_padded(&path)?;
    let gen = ckpt::load_gen(&args.gen, cfg.gen.as_ref())?;
    let mode = match args.mode {
        ModeArg::Greedy => DecodeMode::Greedy,
        ModeArg::Sample => DecodeMode::Sample,
    };
    let mut rng = stream(cfg.seed, "rollouts");
    let contexts = draw_contexts(&dialogues, args.count, &mut rng)?;
    let mut rows = Vec::with_capacity(contexts.len());
    for (d, t) in contexts {
        let prev = dialogues[d].pair(t as i64 - 1)?.a.clone();
        let current = dialogues[d].pair(t as i64)?.q.clone();
        let response = gen.respond(&prev, &current, mode, &mut rng)?;
        rows.push(json!({
            "dialogue": d,
            "t": t,
            "tokens": response.tokens,
        }));
    }
    let out = cfg.out.join("responses.jsonl");
    write_jsonl(&out, &rows)?;
    Ok(vec![out])
}

fn cmd_eval(cfg: &config::RunConfig, args: &EvalArgs) -> Result<Vec<PathBuf>> {
    let path = corpus_path(cfg, &args.corpus)?;
    let (dialogues, _vocab) = load_padded(&path)?;
    let ssn = ckpt::load_ssn(&args.ssn, cfg.ssn.as_ref())?;
    let gen = ckpt::load_gen(&args.gen, cfg.gen.as_ref())?;

    let mut advs = Vec::with_capacity(args.runs);
    let mut d1s = Vec::with_capacity(args.runs);
    let mut d2s = Vec::with_capacity(args.runs);
    for run in 0..args.runs {
        let run_seed = cfg.seed.wrapping_add(run as u64);
        let mut rng = stream(run_seed, "rollouts");
        let contexts = draw_contexts(&dialogues, args.n, &mut rng)?;
        let histories: Vec<(Utterance, Utterance)> = contexts
            .iter()
            .map(|&(d, t)| {
                Ok((
                    dialogues[d].pair(t as i64 - 1)?.a.clone(),
                    dialogues[d].pair(t as i64)?.q.clone(),
                ))
            })
            .collect::<Result<_>>()?;
        // adver_suc cycles histories in order; track the same index to
        // recover the dialogue context for the judge.
        let mut judged = Vec::new();
        let mut judge_idx = 0usize;
        let mut respond_rng = stream(run_seed, "rollouts");
        let mut judge_rng = stream(run_seed, "sampler");
        let rate = adver_suc(
            |prev, cur| gen.respond(prev, cur, DecodeMode::Sample, &mut respond_rng),
            |_, _, response| {
                let (d, t) = contexts[judge_idx % contexts.len()];
                judge_idx += 1;
                judged.push(response.clone());
                let p = ssn.estimate_p_star(
                    &dialogues[d],
                    t,
                    Some(response),
                    cfg.sampler.n_target,
                    cfg.sampler.m,
                    cfg.strategy,
                    &mut judge_rng,
                )?;
                Ok(p >= 0.5)
            },
            &histories,
            args.n,
        )?;
        advs.push(rate);
        d1s.push(distinct_n(&judged, 1)?);
        d2s.push(distinct_n(&judged, 2)?);
    }
    let strategy = strategy_name(cfg.strategy);
    let entry = |metric: &str, xs: &[f64], strat: &str| {
        let (mean, stdev) = mean_stdev(xs);
        MetricEntry {
            metric: metric.to_string(),
            strategy: strat.to_string(),
            mean,
            stdev,
            runs: args.runs,
            n: args.n,
        }
    };
    let metrics = MetricsReport {
        entries: vec![
            entry("adver_suc", &advs, &strategy),
            entry("distinct-1", &d1s, "none"),
            entry("distinct-2", &d2s, "none"),
        ],
    };
    let csv_out = cfg.out.join("eval.csv");
    let json_out = cfg.out.join("eval.json");
    std::fs::write(&csv_out, metrics.to_csv())?;
    std::fs::write(&json_out, serde_json::to_string_pretty(&metrics)?)?;
    Ok(vec![csv_out, json_out])
}

fn cmd_filter_experience(
    cfg: &mut config::RunConfig,
    args: &FilterExperienceArgs,
) -> Result<Vec<PathBuf>> {
    let path = corpus_path(cfg, &args.corpus)?;
    let (dialogues, _vocab) = load_padded(&path)?;
    let ssn = ckpt::load_ssn(&args.ssn, cfg.ssn.as_ref())?;
    let gen = ckpt::load_gen(&args.gen, cfg.gen.as_ref())?;
    if let Some(v) = args.low {
        cfg.filter.threshold_low = v;
    }
    if let Some(v) = args.high {
        cfg.filter.threshold_high = v;
    }
    if let Some(rule) = args.rule {
        cfg.filter.rule = match rule {
            RuleArg::SampledTau => ThresholdRule::SampledTau,
            RuleArg::FixedMidpoint => ThresholdRule::FixedMidpoint,
        };
    }
    let mut rng = stream(cfg.seed, "rollouts");
    let contexts = draw_contexts(&dialogues, args.count, &mut rng)?;
    let mut items = Vec::with_capacity(contexts.len());
    for (d, t) in contexts {
        let prev = dialogues[d].pair(t as i64 - 1)?.a.clone();
        let current = dialogues[d].pair(t as i64)?.q.clone();
        let response = gen.respond(&prev, &current, DecodeMode::Sample, &mut rng)?;
        items.push(Experience {
            dialogue: dialogues[d].clone(),
            t,
            utterance: response,
            provenance: Provenance::Simulated,
            p_star: None,
        });
    }
    let batch = ExperienceBatch { items };
    let mut filter_rng = stream(cfg.seed, "sampler");
    let accepted = filter_experiences(&ssn, &batch, &cfg.filter, &mut filter_rng)?;
    let rows: Vec<serde_json::Value> = accepted
        .items
        .iter()
        .map(|e| {
            json!({
                "t": e.t,
                "tokens": e.utterance.tokens,
                "p_star": e.p_star,
            })
        })
        .collect();
    let out = cfg.out.join("accepted.jsonl");
    write_jsonl(&out, &rows)?;
    eprintln!("accepted {} of {} experiences", accepted.items.len(), batch.items.len());
    Ok(vec![out])
}
