//! The sampling-based order-detection network.
//!
//! An utterance pair is encoded by an embedding + bi-LSTM (the pair
//! embedding is the concatenation of the backward state at the first
//! position and the forward state at the last). A 3-step reasoning bi-LSTM
//! with elementwise max-pooling turns the three pair embeddings of a triple
//! into a triple embedding, and an MLP over the target and reference triple
//! embeddings outputs the misorder probability (0 = ordered, 1 = misordered).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, Utterance};
use crate::error::{Error, Result};
use crate::numerics::{
    bilstm, LstmWeights, Optimizer, ParameterSet, Tape, Var,
};
use crate::sampling::{
    sample_references, sample_references_pad_free, sample_target_triple, OrderLabel,
    ReferenceStrategy, Triple,
};

pub const PROB_CLAMP: f64 = 1e-7;
const INIT_BOUND: f64 = 0.08;

/// Pair mode encodes Q and A concatenated; utterance-only mode (the
/// task-oriented variant) encodes the user utterance Q alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingMode {
    Pair,
    UtteranceOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SSNConfig {
    pub embed_dim: usize,
    pub pair_hidden: usize,
    pub reason_hidden: usize,
    pub mlp_hidden: usize,
    pub mode: EncodingMode,
    /// When false, the MLP scores the target triple embedding alone (the
    /// no-references ablation).
    pub use_references: bool,
    pub vocab_size: usize,
}

impl SSNConfig {
    /// Open-domain defaults: embeddings 128, pair bi-LSTM 256, reasoning
    /// bi-LSTM 1024, MLP hidden 512.
    pub fn open_domain(vocab_size: usize) -> Self {
        SSNConfig {
            embed_dim: 128,
            pair_hidden: 256,
            reason_hidden: 1024,
            mlp_hidden: 512,
            mode: EncodingMode::Pair,
            use_references: true,
            vocab_size,
        }
    }

    /// Task-oriented defaults: embeddings 80, pair bi-LSTM 128, reasoning
    /// bi-LSTM 512, MLP hidden 128, utterance-only encoding.
    pub fn task_oriented(vocab_size: usize) -> Self {
        SSNConfig {
            embed_dim: 80,
            pair_hidden: 128,
            reason_hidden: 512,
            mlp_hidden: 128,
            mode: EncodingMode::UtteranceOnly,
            use_references: true,
            vocab_size,
        }
    }

    /// Desk-scale dims for synthetic-corpus experiments.
    pub fn toy(vocab_size: usize) -> Self {
        SSNConfig {
            embed_dim: 32,
            pair_hidden: 64,
            reason_hidden: 128,
            mlp_hidden: 64,
            mode: EncodingMode::Pair,
            use_references: true,
            vocab_size,
        }
    }

    fn mlp_input(&self) -> usize {
        let per_triple = 2 * self.reason_hidden;
        if self.use_references {
            3 * per_triple
        } else {
            per_triple
        }
    }
}

#[derive(Debug, Clone)]
pub struct SsnModel {
    pub config: SSNConfig,
    pub params: ParameterSet,
}

impl SsnModel {
    pub fn new<R: Rng>(config: SSNConfig, rng: &mut R) -> Result<Self> {
        let mut params = ParameterSet::new();
        params.add_uniform(
            "embed",
            &[config.vocab_size, config.embed_dim],
            INIT_BOUND,
            rng,
        )?;
        LstmWeights::register(
            &mut params,
            "pair.fw",
            config.embed_dim,
            config.pair_hidden,
            INIT_BOUND,
            rng,
        )?;
        LstmWeights::register(
            &mut params,
            "pair.bw",
            config.embed_dim,
            config.pair_hidden,
            INIT_BOUND,
            rng,
        )?;
        LstmWeights::register(
            &mut params,
            "reason.fw",
            2 * config.pair_hidden,
            config.reason_hidden,
            INIT_BOUND,
            rng,
        )?;
        LstmWeights::register(
            &mut params,
            "reason.bw",
            2 * config.pair_hidden,
            config.reason_hidden,
            INIT_BOUND,
            rng,
        )?;
        params.add_uniform(
            "mlp.w1",
            &[config.mlp_hidden, config.mlp_input()],
            INIT_BOUND,
            rng,
        )?;
        params.add_zeros("mlp.b1", &[config.mlp_hidden])?;
        params.add_uniform("mlp.w2", &[1, config.mlp_hidden], INIT_BOUND, rng)?;
        params.add_zeros("mlp.b2", &[1])?;
        Ok(SsnModel { config, params })
    }

    /// No-grad convenience scorer.
    pub fn score(
        &self,
        dialogue: &Dialogue,
        target: Triple,
        refs: Option<(Triple, Triple)>,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let w = SsnWeights::bind(&mut tape, self)?;
        let p = score_var(&mut tape, &w, dialogue, target, refs, None)?;
        Ok(tape.value(p).item())
    }

    /// Monte Carlo estimate of the probability that `a_t` is a good
    /// response at turn `t`: mean misorder score over `n_target` sampled
    /// misordered targets containing `(Q_t, a_t)` and `m` reference draws.
    pub fn estimate_p_star<R: Rng>(
        &self,
        dialogue: &Dialogue,
        t: usize,
        a_t: Option<&Utterance>,
        n_target: usize,
        m: usize,
        strategy: ReferenceStrategy,
        rng: &mut R,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let w = SsnWeights::bind(&mut tape, self)?;
        let p = p_star_var(&mut tape, &w, dialogue, t, a_t, n_target, m, strategy, rng)?;
        Ok(tape.value(p).item())
    }
}

/// Bound tape vars for one SSN forward pass.
pub struct SsnWeights {
    pub embed: Var,
    pub pair_fw: LstmWeights,
    pub pair_bw: LstmWeights,
    pub reason_fw: LstmWeights,
    pub reason_bw: LstmWeights,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub mode: EncodingMode,
    pub use_references: bool,
    pub bound: crate::numerics::BoundParams,
}

impl SsnWeights {
    pub fn bind(tape: &mut Tape, model: &SsnModel) -> Result<Self> {
        let bound = tape.bind(&model.params);
        Ok(SsnWeights {
            embed: bound.var("embed")?,
            pair_fw: LstmWeights::bind(&bound, "pair.fw", model.config.pair_hidden)?,
            pair_bw: LstmWeights::bind(&bound, "pair.bw", model.config.pair_hidden)?,
            reason_fw: LstmWeights::bind(&bound, "reason.fw", model.config.reason_hidden)?,
            reason_bw: LstmWeights::bind(&bound, "reason.bw", model.config.reason_hidden)?,
            w1: bound.var("mlp.w1")?,
            b1: bound.var("mlp.b1")?,
            w2: bound.var("mlp.w2")?,
            b2: bound.var("mlp.b2")?,
            mode: model.config.mode,
            use_references: model.config.use_references,
            bound,
        })
    }
}

/// Pair embedding: bi-LSTM over the concatenated Q+A token sequence
/// (Q alone in utterance-only mode), `concat(backward state at position 1,
/// forward state at the last position)`.
pub fn encode_pair(
    tape: &mut Tape,
    w: &SsnWeights,
    q: &Utterance,
    a: &Utterance,
) -> Result<Var> {
    encode_pair_cached(tape, w, q, a, &mut PairCache::new())
}

/// Per-tape memo of pair encodings keyed by the exact token sequence fed to
/// the pair bi-LSTM. Identical padding pairs dominate sampled references, so
/// reusing their node (gradients accumulate over all uses) cuts most of the
/// pair-encoding cost. Entries are only valid for the tape they were
/// recorded on; create a fresh cache per tape.
pub struct PairCache(std::collections::HashMap<Vec<u32>, Var>);

impl PairCache {
    pub fn new() -> Self {
        PairCache(std::collections::HashMap::new())
    }
}

impl Default for PairCache {
    fn default() -> Self {
        Self::new()
    }
}

pub fn encode_pair_cached(
    tape: &mut Tape,
    w: &SsnWeights,
    q: &Utterance,
    a: &Utterance,
    cache: &mut PairCache,
) -> Result<Var> {
    let mut tokens: Vec<u32> = q.tokens.clone();
    if w.mode == EncodingMode::Pair {
        tokens.extend_from_slice(&a.tokens);
        if a.tokens.is_empty() {
            return Err(Error::InvalidArgument("empty A utterance".to_string()));
        }
    }
    if q.tokens.is_empty() {
        return Err(Error::InvalidArgument("empty Q utterance".to_string()));
    }
    if let Some(&v) = cache.0.get(&tokens) {
        return Ok(v);
    }
    let xs = tape.embed(w.embed, &tokens)?;
    let (fwd, bwd) = bilstm(tape, &w.pair_fw, &w.pair_bw, &xs)?;
    let emb = tape.concat(&[bwd[0], *fwd.last().expect("non-empty sequence")])?;
    cache.0.insert(tokens, emb);
    Ok(emb)
}

/// Triple embedding: 3-step reasoning bi-LSTM in presentation order,
/// elementwise max over backward states concatenated with elementwise max
/// over forward states.
pub fn encode_triple(tape: &mut Tape, w: &SsnWeights, pairs: [Var; 3]) -> Result<Var> {
    let (fwd, bwd) = bilstm(tape, &w.reason_fw, &w.reason_bw, &pairs)?;
    let bmax = tape.max_pool(&bwd)?;
    let fmax = tape.max_pool(&fwd)?;
    tape.concat(&[bmax, fmax])
}

fn pair_utterances<'d>(
    dialogue: &'d Dialogue,
    index: i64,
    a_override: Option<(i64, &'d Utterance)>,
) -> Result<(&'d Utterance, &'d Utterance)> {
    let pair = dialogue.pair(index)?;
    match a_override {
        Some((t, a)) if t == index => Ok((&pair.q, a)),
        _ => Ok((&pair.q, &pair.a)),
    }
}

fn triple_embedding(
    tape: &mut Tape,
    w: &SsnWeights,
    dialogue: &Dialogue,
    triple: Triple,
    a_override: Option<(i64, &Utterance)>,
    cache: &mut PairCache,
) -> Result<Var> {
    let mut us = Vec::with_capacity(3);
    for &idx in &triple.indices {
        let (q, a) = pair_utterances(dialogue, idx, a_override)?;
        us.push(encode_pair_cached(tape, w, q, a, cache)?);
    }
    encode_triple(tape, w, [us[0], us[1], us[2]])
}

/// Misorder probability of the target triple given the two references
/// (ignored by a no-references model). `a_override` swaps in a candidate
/// response for the A side of one turn.
pub fn score_var(
    tape: &mut Tape,
    w: &SsnWeights,
    dialogue: &Dialogue,
    target: Triple,
    refs: Option<(Triple, Triple)>,
    a_override: Option<(i64, &Utterance)>,
) -> Result<Var> {
    score_var_cached(tape, w, dialogue, target, refs, a_override, &mut PairCache::new())
}

/// [`score_var`] with a caller-owned pair-encoding cache, for scoring many
/// triples of the same padded corpus on one tape.
pub fn score_var_cached(
    tape: &mut Tape,
    w: &SsnWeights,
    dialogue: &Dialogue,
    target: Triple,
    refs: Option<(Triple, Triple)>,
    a_override: Option<(i64, &Utterance)>,
    cache: &mut PairCache,
) -> Result<Var> {
    let t_emb = triple_embedding(tape, w, dialogue, target, a_override, cache)?;
    let mlp_in = if w.use_references {
        let (r1, r2) = refs.ok_or_else(|| {
            Error::InvalidArgument("reference triples required by this model".to_string())
        })?;
        let r1_emb = triple_embedding(tape, w, dialogue, r1, a_override, cache)?;
        let r2_emb = triple_embedding(tape, w, dialogue, r2, a_override, cache)?;
        tape.concat(&[t_emb, r1_emb, r2_emb])?
    } else {
        t_emb
    };
    let h_pre = tape.matmul(w.w1, mlp_in)?;
    let h_pre = tape.add(h_pre, w.b1)?;
    let h = tape.tanh(h_pre)?;
    let out = tape.matmul(w.w2, h)?;
    let out = tape.add(out, w.b2)?;
    let p = tape.sigmoid(out)?;
    tape.pick(p, 0)
}

/// Two-sided binary cross entropy, with the probability clamped away from
/// 0 and 1 before the logs.
pub fn bce_var(tape: &mut Tape, p: Var, y: OrderLabel) -> Result<Var> {
    let pv = tape.value(p).item();
    if !(0.0..=1.0).contains(&pv) {
        return Err(Error::InvalidArgument(format!(
            "probability {pv} outside [0, 1]"
        )));
    }
    let p = tape.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)?;
    let y = y.as_f64();
    let log_p = tape.log(p)?;
    let neg_p = tape.neg(p)?;
    let one_minus_p = tape.add_scalar(neg_p, 1.0)?;
    let log_1mp = tape.log(one_minus_p)?;
    let a = tape.scale(log_p, y)?;
    let b = tape.scale(log_1mp, 1.0 - y)?;
    let s = tape.add(a, b)?;
    tape.neg(s)
}

/// Eq-style Monte Carlo loss: mean over `m` reference draws of the BCE of
/// the target's score. The references are resampled for every draw.
#[allow(clippy::too_many_arguments)]
pub fn mc_loss_var<R: Rng>(
    tape: &mut Tape,
    w: &SsnWeights,
    dialogue: &Dialogue,
    target: Triple,
    y: OrderLabel,
    strategy: ReferenceStrategy,
    m: usize,
    rng: &mut R,
) -> Result<Var> {
    mc_loss_var_cached(
        tape,
        w,
        dialogue,
        target,
        y,
        strategy,
        m,
        rng,
        &mut PairCache::new(),
    )
}

/// [`mc_loss_var`] with a caller-owned pair-encoding cache.
#[allow(clippy::too_many_arguments)]
pub fn mc_loss_var_cached<R: Rng>(
    tape: &mut Tape,
    w: &SsnWeights,
    dialogue: &Dialogue,
    target: Triple,
    y: OrderLabel,
    strategy: ReferenceStrategy,
    m: usize,
    rng: &mut R,
    cache: &mut PairCache,
) -> Result<Var> {
    if m < 1 {
        return Err(Error::InvalidArgument("m must be >= 1".to_string()));
    }
    let t = target_turn(target)?;
    // References match the target's pad regime: a target presenting only
    // real utterances (possible once t >= 4 leaves three real indices
    // below it) keeps its references pad-free on every redraw.
    let pad_free_refs = t >= 4 && target.indices.iter().all(|&i| i >= 1);
    // Without references every draw is identical; one suffices.
    let draws = if w.use_references { m } else { 1 };
    let mut losses = Vec::with_capacity(draws);
    for _ in 0..draws {
        let refs = if w.use_references {
            Some(if pad_free_refs {
                sample_references_pad_free(t, strategy, rng)?
            } else {
                sample_references(t, strategy, rng)?
            })
        } else {
            None
        };
        let p = score_var_cached(tape, w, dialogue, target, refs, None, cache)?;
        losses.push(bce_var(tape, p, y)?);
    }
    tape.mean_stack(&losses)
}

fn target_turn(target: Triple) -> Result<usize> {
    let t = *target.indices.iter().max().expect("triple has 3 indices");
    if t < 1 {
        return Err(Error::InvalidArgument(
            "target triple contains no real turn".to_string(),
        ));
    }
    Ok(t as usize)
}

/// Differentiable p*: mean score over `n_target` misordered targets
/// containing `(Q_t, a_t)` times `m` reference draws each.
#[allow(clippy::too_many_arguments)]
pub fn p_star_var<R: Rng>(
    tape: &mut Tape,
    w: &SsnWeights,
    dialogue: &Dialogue,
    t: usize,
    a_t: Option<&Utterance>,
    n_target: usize,
    m: usize,
    strategy: ReferenceStrategy,
    rng: &mut R,
) -> Result<Var> {
    if n_target < 1 || m < 1 {
        return Err(Error::InvalidArgument(
            "n_target and m must be >= 1".to_string(),
        ));
    }
    if let Some(a) = a_t {
        if a.tokens.is_empty() {
            return Err(Error::InvalidArgument("empty candidate response".to_string()));
        }
    }
    let a_override = a_t.map(|a| (t as i64, a));
    let mut cache = PairCache::new();
    let mut scores = Vec::with_capacity(n_target * m);
    for _ in 0..n_target {
        let target = sample_target_triple(t, OrderLabel::Misordered, rng)?;
        let draws = if w.use_references { m } else { 1 };
        for _ in 0..draws {
            let refs = if w.use_references {
                Some(sample_references(t, strategy, rng)?)
            } else {
                None
            };
            scores.push(score_var_cached(
                tape, w, dialogue, target, refs, a_override, &mut cache,
            )?);
        }
    }
    tape.mean_stack(&scores)
}

/// A training item: dialogue index, target turn, and label.
#[derive(Debug, Clone, Copy)]
pub struct TargetSpec {
    pub dialogue: usize,
    pub t: usize,
    pub label: OrderLabel,
}

/// Draws a balanced batch of (dialogue, turn, label) targets from padded
/// dialogues with at least one real turn.
pub fn sample_targets<R: Rng>(
    dialogues: &[Dialogue],
    batch: usize,
    rng: &mut R,
) -> Result<Vec<TargetSpec>> {
    let usable: Vec<usize> = (0..dialogues.len())
        .filter(|&i| dialogues[i].turns() >= 1)
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyCorpus("no dialogues with real turns".to_string()));
    }
    Ok((0..batch)
        .map(|b| {
            let d = usable[rng.gen_range(0..usable.len())];
            let t = rng.gen_range(1..=dialogues[d].turns());
            let label = if b % 2 == 0 {
                OrderLabel::Ordered
            } else {
                OrderLabel::Misordered
            };
            TargetSpec {
                dialogue: d,
                t,
                label,
            }
        })
        .collect())
}

/// A fixed training example: the triple itself is frozen; references are
/// still redrawn on every visit.
#[derive(Debug, Clone, Copy)]
pub struct TrainingTriple {
    pub dialogue: usize,
    pub triple: Triple,
    pub label: OrderLabel,
}

/// Draws a balanced, label-alternating set of `n` training triples.
pub fn sample_training_set<R: Rng>(
    dialogues: &[Dialogue],
    n: usize,
    rng: &mut R,
) -> Result<Vec<TrainingTriple>> {
    let specs = sample_targets(dialogues, n, rng)?;
    specs
        .into_iter()
        .map(|spec| {
            Ok(TrainingTriple {
                dialogue: spec.dialogue,
                triple: sample_target_triple(spec.t, spec.label, rng)?,
                label: spec.label,
            })
        })
        .collect()
}

/// Draws a balanced, label-alternating set of `n` pad-free training
/// triples: each target sits at turn `t >= 4` and presents only real
/// utterances, so references redrawn during training can stay pad-free too.
pub fn sample_training_set_pad_free<R: Rng>(
    dialogues: &[Dialogue],
    n: usize,
    rng: &mut R,
) -> Result<Vec<TrainingTriple>> {
    let usable: Vec<usize> = (0..dialogues.len())
        .filter(|&i| dialogues[i].turns() >= 4)
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyCorpus(
            "pad-free training needs dialogues with >= 4 turns".to_string(),
        ));
    }
    let pad_free = |tr: &Triple| tr.indices.iter().all(|&i| i >= 1);
    (0..n)
        .map(|b| {
            let label = if b % 2 == 0 {
                OrderLabel::Ordered
            } else {
                OrderLabel::Misordered
            };
            loop {
                let d = usable[rng.gen_range(0..usable.len())];
                let t = rng.gen_range(4..=dialogues[d].turns());
                let triple = sample_target_triple(t, label, rng)?;
                if pad_free(&triple) {
                    return Ok(TrainingTriple {
                        dialogue: d,
                        triple,
                        label,
                    });
                }
            }
        })
        .collect()
}

/// Pretraining over a fixed triple set, visited in reshuffled order each
/// epoch for `steps` batches. The learning rate decays linearly to a tenth
/// of its starting value over the second half of the schedule.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_ssn_fixed<R: Rng>(
    model: &mut SsnModel,
    dialogues: &[Dialogue],
    set: &[TrainingTriple],
    strategy: ReferenceStrategy,
    steps: usize,
    batch: usize,
    m: usize,
    optimizer: &mut Optimizer,
    rng: &mut R,
) -> Result<PretrainReport> {
    if set.is_empty() || batch < 1 {
        return Err(Error::InvalidArgument(
            "training set and batch must be non-empty".to_string(),
        ));
    }
    let base_lr = optimizer.lr;
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut cursor = set.len(); // trigger a shuffle on first use
    let mut loss_curve = Vec::with_capacity(steps);
    for step in 0..steps {
        let frac = step as f64 / steps.max(1) as f64;
        optimizer.lr = if frac < 0.5 {
            base_lr
        } else {
            base_lr * (1.0 - 1.8 * (frac - 0.5))
        };
        let mut tape = Tape::new();
        let w = SsnWeights::bind(&mut tape, model)?;
        let mut losses = Vec::with_capacity(batch);
        let mut cache = PairCache::new();
        for _ in 0..batch {
            if cursor >= set.len() {
                order.shuffle(rng);
                cursor = 0;
            }
            let item = set[order[cursor]];
            cursor += 1;
            losses.push(mc_loss_var_cached(
                &mut tape,
                &w,
                &dialogues[item.dialogue],
                item.triple,
                item.label,
                strategy,
                m,
                rng,
                &mut cache,
            )?);
        }
        let loss = tape.mean_stack(&losses)?;
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::NonFinite {
                op: "pretrain_ssn_fixed loss".to_string(),
            });
        }
        let grads = tape.backward(loss)?;
        let by_name = w.bound.grads_by_name(&tape, &grads);
        optimizer.step(&mut model.params, &by_name)?;
        loss_curve.push(loss_value);
    }
    optimizer.lr = base_lr;
    Ok(PretrainReport { loss_curve })
}

pub struct PretrainReport {
    /// Per-step mean batch loss.
    pub loss_curve: Vec<f64>,
}

/// Pretraining on sampled corpus triples with balanced labels per step.
/// Stops early when the rolling mean (window 50) of the loss drops below
/// `stop_below`, if given.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_ssn<R: Rng>(
    model: &mut SsnModel,
    dialogues: &[Dialogue],
    strategy: ReferenceStrategy,
    steps: usize,
    batch: usize,
    m: usize,
    optimizer: &mut Optimizer,
    stop_below: Option<f64>,
    rng: &mut R,
) -> Result<PretrainReport> {
    let mut loss_curve = Vec::with_capacity(steps);
    for _ in 0..steps {
        let targets = sample_targets(dialogues, batch, rng)?;
        let mut tape = Tape::new();
        let w = SsnWeights::bind(&mut tape, model)?;
        let mut losses = Vec::with_capacity(batch);
        let mut cache = PairCache::new();
        for spec in &targets {
            let dialogue = &dialogues[spec.dialogue];
            let target = sample_target_triple(spec.t, spec.label, rng)?;
            losses.push(mc_loss_var_cached(
                &mut tape, &w, dialogue, target, spec.label, strategy, m, rng, &mut cache,
            )?);
        }
        let loss = tape.mean_stack(&losses)?;
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::NonFinite {
                op: "pretrain_ssn loss".to_string(),
            });
        }
        let grads = tape.backward(loss)?;
        let by_name = w.bound.grads_by_name(&tape, &grads);
        optimizer.step(&mut model.params, &by_name)?;
        loss_curve.push(loss_value);
        if let Some(threshold) = stop_below {
            let window = 50.min(loss_curve.len());
            let recent: f64 =
                loss_curve[loss_curve.len() - window..].iter().sum::<f64>() / window as f64;
            if loss_curve.len() >= window && recent < threshold {
                break;
            }
        }
    }
    Ok(PretrainReport { loss_curve })
}
