//! Seq2seq response generator.
//!
//! The encoder LSTM reads the two preceding utterances as one token
//! sequence; the decoder LSTM, seeded with the encoder's final state,
//! emits the response with optional bilinear attention over the encoder
//! states. Trained either by teacher forcing or by REINFORCE with an
//! exponential-moving-average baseline and Monte Carlo rollout rewards.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Utterance, BOS_ID, EOS_ID};
use crate::error::{Error, Result};
use crate::numerics::{lstm_cell, BoundParams, LstmWeights, Optimizer, ParameterSet, Tape, Tensor, Var};

const INIT_BOUND: f64 = 0.08;
pub const BASELINE_DECAY: f64 = 0.99;
pub const DEFAULT_ROLLOUTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub attention: bool,
    pub max_decode_len: usize,
}

impl GenConfig {
    pub fn toy(vocab_size: usize) -> Self {
        GenConfig {
            vocab_size,
            embed_dim: 32,
            hidden: 64,
            attention: true,
            max_decode_len: 20,
        }
    }

    fn feature_dim(&self) -> usize {
        if self.attention {
            2 * self.hidden
        } else {
            self.hidden
        }
    }
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub config: GenConfig,
    pub params: ParameterSet,
}

impl Generator {
    pub fn new<R: Rng>(config: GenConfig, rng: &mut R) -> Result<Self> {
        let mut params = ParameterSet::new();
        params.add_uniform(
            "embed",
            &[config.vocab_size, config.embed_dim],
            INIT_BOUND,
            rng,
        )?;
        LstmWeights::register(
            &mut params,
            "enc",
            config.embed_dim,
            config.hidden,
            INIT_BOUND,
            rng,
        )?;
        LstmWeights::register(
            &mut params,
            "dec",
            config.embed_dim,
            config.hidden,
            INIT_BOUND,
            rng,
        )?;
        if config.attention {
            params.add_uniform(
                "attn.w",
                &[config.hidden, config.hidden],
                INIT_BOUND,
                rng,
            )?;
        }
        params.add_uniform(
            "out.w",
            &[config.vocab_size, config.feature_dim()],
            INIT_BOUND,
            rng,
        )?;
        params.add_zeros("out.b", &[config.vocab_size])?;
        Ok(Generator { config, params })
    }

    /// Greedy or sampled response to `history` (two preceding utterances).
    pub fn respond<R: Rng>(
        &self,
        prev: &Utterance,
        current: &Utterance,
        mode: DecodeMode,
        rng: &mut R,
    ) -> Result<Utterance> {
        let history = history_tokens(prev, current)?;
        let mut tape = Tape::new();
        let w = GenWeights::bind(&mut tape, self)?;
        let out = decode(&mut tape, &w, &self.config, &history, mode, rng)?;
        Ok(Utterance::from_tokens(out.tokens))
    }
}

/// Two preceding utterances as one encoder input sequence.
pub fn history_tokens(prev: &Utterance, current: &Utterance) -> Result<Vec<u32>> {
    let mut tokens = prev.tokens.clone();
    tokens.extend_from_slice(&current.tokens);
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("empty history".to_string()));
    }
    Ok(tokens)
}

pub struct GenWeights {
    pub embed: Var,
    pub enc: LstmWeights,
    pub dec: LstmWeights,
    pub attn: Option<Var>,
    pub out_w: Var,
    pub out_b: Var,
    pub bound: BoundParams,
}

impl GenWeights {
    pub fn bind(tape: &mut Tape, gen: &Generator) -> Result<Self> {
        let bound = tape.bind(&gen.params);
        Ok(GenWeights {
            embed: bound.var("embed")?,
            enc: LstmWeights::bind(&bound, "enc", gen.config.hidden)?,
            dec: LstmWeights::bind(&bound, "dec", gen.config.hidden)?,
            attn: if gen.config.attention {
                Some(bound.var("attn.w")?)
            } else {
                None
            },
            out_w: bound.var("out.w")?,
            out_b: bound.var("out.b")?,
            bound,
        })
    }
}

/// Encoder pass: per-position states plus the final (h, c).
pub fn encode_history(
    tape: &mut Tape,
    w: &GenWeights,
    config: &GenConfig,
    history: &[u32],
) -> Result<(Vec<Var>, (Var, Var))> {
    if history.is_empty() {
        return Err(Error::InvalidArgument("empty history".to_string()));
    }
    let xs = tape.embed(w.embed, history)?;
    let zero = tape.constant(Tensor::zeros(&[config.hidden]));
    let (mut h, mut c) = (zero, zero);
    let mut states = Vec::with_capacity(xs.len());
    for x in xs {
        let (h2, c2) = lstm_cell(tape, &w.enc, x, h, c)?;
        h = h2;
        c = c2;
        states.push(h);
    }
    Ok((states, (h, c)))
}

/// One decoder step: next-token distribution and updated state.
/// With attention, the output features are `concat(h, context)` where the
/// context is the softmax-weighted sum of encoder states under the
/// bilinear score `h · W · enc_i`.
pub fn decoder_step(
    tape: &mut Tape,
    w: &GenWeights,
    enc_states: &[Var],
    token: u32,
    h: Var,
    c: Var,
) -> Result<(Var, Var, Var)> {
    let x = tape.row(w.embed, token as usize)?;
    let (h, c) = lstm_cell(tape, &w.dec, x, h, c)?;
    let feat = if let Some(attn) = w.attn {
        let wh = tape.matmul(attn, h)?;
        let scores: Vec<Var> = enc_states
            .iter()
            .map(|&s| tape.dot(s, wh))
            .collect::<Result<_>>()?;
        let score_vec = tape.concat(&scores)?;
        let alpha = tape.softmax(score_vec)?;
        let mut ctx = None;
        for (i, &s) in enc_states.iter().enumerate() {
            let ai = tape.pick(alpha, i)?;
            let term = tape.scale_by(s, ai)?;
            ctx = Some(match ctx {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
        let ctx = ctx.expect("encoder states are non-empty");
        tape.concat(&[h, ctx])?
    } else {
        h
    };
    let logits = tape.matmul(w.out_w, feat)?;
    let logits = tape.add(logits, w.out_b)?;
    let probs = tape.softmax(logits)?;
    Ok((probs, h, c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample,
}

#[derive(Debug)]
pub struct DecodeOut {
    /// Emitted content tokens, without BOS/EOS.
    pub tokens: Vec<u32>,
    /// Whether decoding stopped by emitting EOS (vs the length cap).
    pub ended: bool,
    /// Log-probability of every emitted symbol, including the EOS step.
    pub log_probs: Vec<Var>,
}

/// Decodes from BOS until EOS or `max_decode_len` content tokens.
pub fn decode<R: Rng>(
    tape: &mut Tape,
    w: &GenWeights,
    config: &GenConfig,
    history: &[u32],
    mode: DecodeMode,
    rng: &mut R,
) -> Result<DecodeOut> {
    let (enc_states, (h, c)) = encode_history(tape, w, config, history)?;
    decode_from(tape, w, config, &enc_states, h, c, BOS_ID, &[], mode, rng)
}

/// Decoding continuation: teacher-forces `prefix` after `first_token`,
/// then free-runs. `decode` is the `prefix = []` special case.
#[allow(clippy::too_many_arguments)]
pub fn decode_from<R: Rng>(
    tape: &mut Tape,
    w: &GenWeights,
    config: &GenConfig,
    enc_states: &[Var],
    h: Var,
    c: Var,
    first_token: u32,
    prefix: &[u32],
    mode: DecodeMode,
    rng: &mut R,
) -> Result<DecodeOut> {
    let (mut h, mut c) = (h, c);
    let mut last = first_token;
    let mut tokens: Vec<u32> = prefix.to_vec();
    let mut log_probs = Vec::new();
    for &tok in prefix {
        let (_, h2, c2) = decoder_step(tape, w, enc_states, last, h, c)?;
        h = h2;
        c = c2;
        last = tok;
    }
    let mut ended = false;
    while tokens.len() < config.max_decode_len {
        let (probs, h2, c2) = decoder_step(tape, w, enc_states, last, h, c)?;
        h = h2;
        c = c2;
        let next = match mode {
            DecodeMode::Greedy => argmax(&tape.value(probs).data),
            DecodeMode::Sample => sample_categorical(&tape.value(probs).data, rng)?,
        };
        let lp_p = tape.pick(probs, next as usize)?;
        let lp_p = tape.clamp(lp_p, 1e-12, 1.0)?;
        log_probs.push(tape.log(lp_p)?);
        last = next;
        if next == EOS_ID {
            ended = true;
            break;
        }
        tokens.push(next);
    }
    Ok(DecodeOut {
        tokens,
        ended,
        log_probs,
    })
}

fn argmax(p: &[f64]) -> u32 {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best as u32
}

fn sample_categorical<R: Rng>(p: &[f64], rng: &mut R) -> Result<u32> {
    let total: f64 = p.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::NonFinite {
            op: "sample_categorical".to_string(),
        });
    }
    let mut u = rng.gen_range(0.0..total);
    for (i, &v) in p.iter().enumerate() {
        u -= v;
        if u <= 0.0 {
            return Ok(i as u32);
        }
    }
    Ok((p.len() - 1) as u32)
}

/// Teacher-forced mean per-token negative log-likelihood of `target`
/// (including its EOS) given `history`.
pub fn mle_loss_var(
    tape: &mut Tape,
    w: &GenWeights,
    config: &GenConfig,
    history: &[u32],
    target: &[u32],
) -> Result<Var> {
    if target.is_empty() {
        return Err(Error::InvalidArgument("empty target".to_string()));
    }
    let (enc_states, (mut h, mut c)) = encode_history(tape, w, config, history)?;
    let mut last = BOS_ID;
    let mut nll = Vec::with_capacity(target.len() + 1);
    let mut step = |tape: &mut Tape, last: u32, tok: u32, h: Var, c: Var| -> Result<(Var, Var)> {
        let (probs, h, c) = decoder_step(tape, w, &enc_states, last, h, c)?;
        let p = tape.pick(probs, tok as usize)?;
        let p = tape.clamp(p, 1e-12, 1.0)?;
        let lp = tape.log(p)?;
        nll.push(tape.neg(lp)?);
        Ok((h, c))
    };
    for &tok in target {
        let (h2, c2) = step(tape, last, tok, h, c)?;
        h = h2;
        c = c2;
        last = tok;
    }
    step(tape, last, EOS_ID, h, c)?;
    tape.mean_stack(&nll)
}

/// One teacher-forcing update over a batch of (history, target) examples.
/// Returns the batch loss.
pub fn mle_step(
    gen: &mut Generator,
    batch: &[(Vec<u32>, Vec<u32>)],
    optimizer: &mut Optimizer,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".to_string()));
    }
    let config = gen.config;
    let mut tape = Tape::new();
    let w = GenWeights::bind(&mut tape, gen)?;
    let losses: Vec<Var> = batch
        .iter()
        .map(|(h, t)| mle_loss_var(&mut tape, &w, &config, h, t))
        .collect::<Result<_>>()?;
    let loss = tape.mean_stack(&losses)?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite {
            op: "mle_step loss".to_string(),
        });
    }
    let grads = tape.backward(loss)?;
    let by_name = w.bound.grads_by_name(&tape, &grads);
    optimizer.step(&mut gen.params, &by_name)?;
    Ok(value)
}

/// Exponential-moving-average reward baseline.
#[derive(Debug, Clone)]
pub struct EmaBaseline {
    value: f64,
    initialized: bool,
    decay: f64,
}

impl Default for EmaBaseline {
    fn default() -> Self {
        EmaBaseline {
            value: 0.0,
            initialized: false,
            decay: BASELINE_DECAY,
        }
    }
}

impl EmaBaseline {
    pub fn get(&self) -> f64 {
        self.value
    }

    pub fn update(&mut self, reward: f64) {
        if self.initialized {
            self.value = self.decay * self.value + (1.0 - self.decay) * reward;
        } else {
            self.value = reward;
            self.initialized = true;
        }
    }
}

/// Per-step rewards by Monte Carlo rollout: step t of a sampled response
/// is credited with the mean reward of `n_rollouts` sampled completions of
/// its prefix; the final step is scored directly on the full response.
#[allow(clippy::too_many_arguments)]
pub fn mc_step_rewards<R: Rng, F>(
    gen: &Generator,
    history: &[u32],
    tokens: &[u32],
    n_rollouts: usize,
    mut reward_fn: F,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    F: FnMut(&Utterance) -> Result<f64>,
{
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("empty sampled response".to_string()));
    }
    if n_rollouts < 1 {
        return Err(Error::InvalidArgument("n_rollouts must be >= 1".to_string()));
    }
    let config = gen.config;
    let mut rewards = Vec::with_capacity(tokens.len());
    for t in 0..tokens.len() {
        if t + 1 == tokens.len() {
            rewards.push(reward_fn(&Utterance::from_tokens(tokens.to_vec()))?);
            continue;
        }
        let mut sum = 0.0;
        for _ in 0..n_rollouts {
            let mut tape = Tape::new();
            let w = GenWeights::bind(&mut tape, gen)?;
            let (enc_states, (h, c)) = encode_history(&mut tape, &w, &config, history)?;
            let out = decode_from(
                &mut tape,
                &w,
                &config,
                &enc_states,
                h,
                c,
                BOS_ID,
                &tokens[..=t],
                DecodeMode::Sample,
                rng,
            )?;
            sum += reward_fn(&Utterance::from_tokens(out.tokens))?;
        }
        rewards.push(sum / n_rollouts as f64);
    }
    Ok(rewards)
}

/// One REINFORCE update on a sampled response: minimizes
/// `-sum_t (r_t - b) log p_t`. The EOS step, when present, reuses the final
/// reward. The baseline is updated with the mean step reward after the
/// gradient is taken. Returns the mean reward.
#[allow(clippy::too_many_arguments)]
pub fn reinforce_step(
    gen: &mut Generator,
    history: &[u32],
    tokens: &[u32],
    ended: bool,
    rewards: &[f64],
    baseline: &mut EmaBaseline,
    optimizer: &mut Optimizer,
) -> Result<f64> {
    if tokens.is_empty() || rewards.len() != tokens.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rewards for {} tokens",
            rewards.len(),
            tokens.len()
        )));
    }
    let config = gen.config;
    let mut tape = Tape::new();
    let w = GenWeights::bind(&mut tape, gen)?;
    let (enc_states, (mut h, mut c)) = encode_history(&mut tape, &w, &config, history)?;

    let mut symbols: Vec<u32> = tokens.to_vec();
    let mut step_rewards: Vec<f64> = rewards.to_vec();
    if ended {
        symbols.push(EOS_ID);
        step_rewards.push(rewards[rewards.len() - 1]);
    }
    let b = baseline.get();
    let mut last = BOS_ID;
    let mut terms = Vec::with_capacity(symbols.len());
    for (&tok, &r) in symbols.iter().zip(&step_rewards) {
        let (probs, h2, c2) = decoder_step(&mut tape, &w, &enc_states, last, h, c)?;
        h = h2;
        c = c2;
        let p = tape.pick(probs, tok as usize)?;
        let p = tape.clamp(p, 1e-12, 1.0)?;
        let lp = tape.log(p)?;
        terms.push(tape.scale(lp, b - r)?);
        last = tok;
    }
    let loss = tape.mean_stack(&terms)?;
    let n = terms.len() as f64;
    let loss = tape.scale(loss, n)?;
    if !tape.value(loss).item().is_finite() {
        return Err(Error::NonFinite {
            op: "reinforce_step loss".to_string(),
        });
    }
    let grads = tape.backward(loss)?;
    let by_name = w.bound.grads_by_name(&tape, &grads);
    optimizer.step(&mut gen.params, &by_name)?;
    let mean_reward = rewards.iter().sum::<f64>() / rewards.len() as f64;
    baseline.update(mean_reward);
    Ok(mean_reward)
}
