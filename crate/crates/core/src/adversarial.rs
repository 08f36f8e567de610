//! Alternating min-max training of the generator against the order
//! detector, the task-oriented batch objective, and the simulated-experience
//! filter.
//!
//! The detector side ascends `E_real[log p*(x)] + E_gen[log(1 - p*(G(.)))]`;
//! the generator side is updated by REINFORCE with reward `R = p*`. The
//! experience filter accepts a simulated utterance when its `p*` clears a
//! threshold drawn from a configured band.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, Utterance};
use crate::error::{Error, Result};
use crate::generator::{
    history_tokens, mc_step_rewards, mle_step, reinforce_step, DecodeMode, EmaBaseline, Generator,
    DEFAULT_ROLLOUTS,
};
use crate::numerics::{Optimizer, Tape, Var};
use crate::rng::stream;
use crate::sampling::{ReferenceStrategy, SamplerConfig};
use crate::ssn::{p_star_var, EncodingMode, SsnModel, SsnWeights, PROB_CLAMP};

/// Alternating-training schedule and batch shape.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdvConfig {
    /// Detector updates per round.
    pub ssn_steps: usize,
    /// Generator updates per round.
    pub g_steps: usize,
    pub rounds: usize,
    /// Batch size `b` shared by both sides.
    pub batch: usize,
    /// Probability of following each REINFORCE update with a
    /// teacher-forcing step on the real response.
    pub mix_ratio: f64,
    pub strategy: ReferenceStrategy,
    pub sampler: SamplerConfig,
}

impl Default for AdvConfig {
    fn default() -> Self {
        AdvConfig {
            ssn_steps: 1,
            g_steps: 1,
            rounds: 20,
            batch: 8,
            mix_ratio: 0.5,
            strategy: ReferenceStrategy::OneEach,
            sampler: SamplerConfig::default(),
        }
    }
}

impl AdvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ssn_steps < 1 || self.g_steps < 1 || self.batch < 1 {
            return Err(Error::InvalidArgument(
                "ssn_steps, g_steps, and batch must all be >= 1".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mix_ratio) {
            return Err(Error::InvalidArgument(format!(
                "mix ratio {} outside [0, 1]",
                self.mix_ratio
            )));
        }
        Ok(())
    }
}

/// Acceptance rule for the experience filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdRule {
    /// Draw tau uniformly from the band once per batch; accept p* >= tau.
    SampledTau,
    /// Accept p* >= the band midpoint (a fixed cutoff, no sampling).
    FixedMidpoint,
}

/// Experience-filter band and scoring parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FilterConfig {
    pub threshold_low: f64,
    pub threshold_high: f64,
    pub rule: ThresholdRule,
    /// Used to evaluate p* for items that arrive unscored.
    pub strategy: ReferenceStrategy,
    pub sampler: SamplerConfig,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            threshold_low: 0.45,
            threshold_high: 0.55,
            rule: ThresholdRule::SampledTau,
            strategy: ReferenceStrategy::OneEach,
            sampler: SamplerConfig::default(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.threshold_low
            && self.threshold_low <= self.threshold_high
            && self.threshold_high <= 1.0)
        {
            return Err(Error::InvalidArgument(format!(
                "threshold band ({}, {}) must satisfy 0 <= low <= high <= 1",
                self.threshold_low, self.threshold_high
            )));
        }
        Ok(())
    }
}

/// Where an utterance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Real,
    Simulated,
}

/// One utterance with the context needed to score it: the padded dialogue
/// it belongs to and the turn it answers.
#[derive(Debug, Clone)]
pub struct Experience {
    pub dialogue: Dialogue,
    pub t: usize,
    pub utterance: Utterance,
    pub provenance: Provenance,
    /// Recorded p* once evaluated; reused instead of re-scoring.
    pub p_star: Option<f64>,
}

impl Experience {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.p_star {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "recorded p* {p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// A batch of experiences awaiting scoring or filtering.
#[derive(Debug, Clone, Default)]
pub struct ExperienceBatch {
    pub items: Vec<Experience>,
}

impl ExperienceBatch {
    pub fn validate(&self) -> Result<()> {
        self.items.iter().try_for_each(Experience::validate)
    }
}

/// A scoring context for one side of the min-max objective: the response
/// `utterance` proposed at turn `t` of `dialogue`.
#[derive(Debug, Clone)]
pub struct ScoredUtterance<'a> {
    pub dialogue: &'a Dialogue,
    pub t: usize,
    pub utterance: Utterance,
}

/// Batch-mean objective value `mean[log p_real] + mean[log(1 - p_gen)]`
/// over already-evaluated p* values, clamped away from 0 and 1.
pub fn minmax_objective(p_real: &[f64], p_gen: &[f64]) -> Result<f64> {
    if p_real.is_empty() || p_gen.is_empty() {
        return Err(Error::InvalidArgument("empty objective batch".to_string()));
    }
    let clamp = |p: f64| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let real: f64 = p_real.iter().map(|&p| clamp(p).ln()).sum::<f64>() / p_real.len() as f64;
    let gen: f64 = p_gen.iter().map(|&p| (1.0 - clamp(p)).ln()).sum::<f64>() / p_gen.len() as f64;
    Ok(real + gen)
}

/// Shared tape construction for Eq.-6/Eq.-7-style detector ascent: returns
/// the objective node `mean[log p*(real_i)] + mean[log(1 - p*(gen_i))]`.
fn objective_var<R: Rng>(
    tape: &mut Tape,
    w: &SsnWeights,
    real: &[ScoredUtterance<'_>],
    generated: &[ScoredUtterance<'_>],
    sampler: SamplerConfig,
    strategy: ReferenceStrategy,
    rng: &mut R,
) -> Result<Var> {
    let mut log_terms = |items: &[ScoredUtterance<'_>], flip: bool| -> Result<Var> {
        let mut terms = Vec::with_capacity(items.len());
        for item in items {
            let p = p_star_var(
                tape,
                w,
                item.dialogue,
                item.t,
                Some(&item.utterance),
                sampler.n_target,
                sampler.m,
                strategy,
                rng,
            )?;
            let p = if flip {
                let neg = tape.neg(p)?;
                tape.add_scalar(neg, 1.0)?
            } else {
                p
            };
            let p = tape.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)?;
            terms.push(tape.log(p)?);
        }
        tape.mean_stack(&terms)
    };
    let real_term = log_terms(real, false)?;
    let gen_term = log_terms(generated, true)?;
    tape.add(real_term, gen_term)
}

fn ssn_ascend<R: Rng>(
    ssn: &mut SsnModel,
    real: &[ScoredUtterance<'_>],
    generated: &[ScoredUtterance<'_>],
    sampler: SamplerConfig,
    strategy: ReferenceStrategy,
    optimizer: &mut Optimizer,
    rng: &mut R,
) -> Result<f64> {
    if real.is_empty() || generated.is_empty() {
        return Err(Error::InvalidArgument(
            "both objective batches must be non-empty".to_string(),
        ));
    }
    let mut tape = Tape::new();
    let w = SsnWeights::bind(&mut tape, ssn)?;
    let obj = objective_var(&mut tape, &w, real, generated, sampler, strategy, rng)?;
    let value = tape.value(obj).item();
    if !value.is_finite() {
        return Err(Error::NonFinite {
            op: "detector objective".to_string(),
        });
    }
    // Ascend the objective: minimize its negation.
    let loss = tape.neg(obj)?;
    let grads = tape.backward(loss)?;
    let by_name = w.bound.grads_by_name(&tape, &grads);
    optimizer.step(&mut ssn.params, &by_name)?;
    Ok(value)
}

/// One detector ascent step on the open-domain objective, with fresh
/// triple/reference sampling per item. Returns the objective value (<= 0).
pub fn ssn_update_open<R: Rng>(
    ssn: &mut SsnModel,
    real: &[ScoredUtterance<'_>],
    generated: &[ScoredUtterance<'_>],
    sampler: SamplerConfig,
    strategy: ReferenceStrategy,
    optimizer: &mut Optimizer,
    rng: &mut R,
) -> Result<f64> {
    ssn_ascend(ssn, real, generated, sampler, strategy, optimizer, rng)
}

/// One detector ascent step on the task-oriented batch objective. The two
/// batches must have equal size `b` and the detector must encode user
/// utterances only. Returns the objective value (<= 0).
pub fn ssn_update_task<R: Rng>(
    ssn: &mut SsnModel,
    real_q: &[ScoredUtterance<'_>],
    sim_q: &[ScoredUtterance<'_>],
    sampler: SamplerConfig,
    optimizer: &mut Optimizer,
    rng: &mut R,
) -> Result<f64> {
    if ssn.config.mode != EncodingMode::UtteranceOnly {
        return Err(Error::InvalidArgument(
            "task objective requires an utterance-only detector".to_string(),
        ));
    }
    if real_q.len() != sim_q.len() {
        return Err(Error::InvalidArgument(format!(
            "batch sizes differ: {} real vs {} simulated",
            real_q.len(),
            sim_q.len()
        )));
    }
    ssn_ascend(
        ssn,
        real_q,
        sim_q,
        sampler,
        ReferenceStrategy::OneEach,
        optimizer,
        rng,
    )
}

/// The generator's conversational history at turn `t`: the previous turn's
/// response followed by the current question.
pub fn turn_history(dialogue: &Dialogue, t: usize) -> Result<Vec<u32>> {
    let prev = dialogue.pair(t as i64 - 1)?;
    let current = dialogue.pair(t as i64)?;
    history_tokens(&prev.a, &current.q)
}

/// One REINFORCE pass over a batch of `(dialogue, t)` contexts with reward
/// `R = p*`, optionally mixed with teacher forcing on the real responses.
/// Returns the mean sampled-response reward over the batch.
#[allow(clippy::too_many_arguments)]
pub fn g_update<R: Rng>(
    gen: &mut Generator,
    ssn: &SsnModel,
    contexts: &[(&Dialogue, usize)],
    sampler: SamplerConfig,
    strategy: ReferenceStrategy,
    mix_ratio: f64,
    baseline: &mut EmaBaseline,
    optimizer: &mut Optimizer,
    rng: &mut R,
) -> Result<f64> {
    if contexts.is_empty() {
        return Err(Error::InvalidArgument("empty context batch".to_string()));
    }
    let mut reward_rng: ChaCha8Rng = stream(rng.gen::<u64>(), "rollouts");
    let mut total = 0.0;
    let mut forced: Vec<(Vec<u32>, Vec<u32>)> = Vec::new();
    for &(dialogue, t) in contexts {
        let history = turn_history(dialogue, t)?;
        let sampled = {
            let mut tape = Tape::new();
            let w = crate::generator::GenWeights::bind(&mut tape, gen)?;
            crate::generator::decode(
                &mut tape,
                &w,
                &gen.config,
                &history,
                DecodeMode::Sample,
                rng,
            )?
        };
        if sampled.tokens.is_empty() {
            // An immediate EOS leaves nothing to reward; skip the item.
            continue;
        }
        let rewards = mc_step_rewards(
            gen,
            &history,
            &sampled.tokens,
            DEFAULT_ROLLOUTS,
            |utt| {
                ssn.estimate_p_star(
                    dialogue,
                    t,
                    Some(utt),
                    sampler.n_target,
                    sampler.m,
                    strategy,
                    &mut reward_rng,
                )
            },
            rng,
        )?;
        total += reinforce_step(
            gen,
            &history,
            &sampled.tokens,
            sampled.ended,
            &rewards,
            baseline,
            optimizer,
        )?;
        if rng.gen::<f64>() < mix_ratio {
            forced.push((history, dialogue.pair(t as i64)?.a.tokens.clone()));
        }
    }
    if !forced.is_empty() {
        mle_step(gen, &forced, optimizer)?;
    }
    Ok(total / contexts.len() as f64)
}

/// Per-round metrics of the alternating loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub ssn_obj: f64,
    pub g_reward: f64,
    pub p_star_real: f64,
    pub p_star_gen: f64,
}

/// Draws `batch` contexts `(dialogue index, turn)` uniformly over dialogues
/// with at least two real turns (the history needs a preceding turn).
fn sample_contexts<R: Rng>(
    dialogues: &[Dialogue],
    batch: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let usable: Vec<usize> = (0..dialogues.len())
        .filter(|&i| dialogues[i].turns() >= 1)
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyCorpus(
            "no dialogues with real turns".to_string(),
        ));
    }
    Ok((0..batch)
        .map(|_| {
            let d = usable[rng.gen_range(0..usable.len())];
            let t = rng.gen_range(1..=dialogues[d].turns());
            (d, t)
        })
        .collect())
}

fn real_batch<'a>(
    dialogues: &'a [Dialogue],
    contexts: &[(usize, usize)],
) -> Result<Vec<ScoredUtterance<'a>>> {
    contexts
        .iter()
        .map(|&(d, t)| {
            Ok(ScoredUtterance {
                dialogue: &dialogues[d],
                t,
                utterance: dialogues[d].pair(t as i64)?.a.clone(),
            })
        })
        .collect()
}

fn generated_batch<'a, R: Rng>(
    gen: &Generator,
    dialogues: &'a [Dialogue],
    contexts: &[(usize, usize)],
    rng: &mut R,
) -> Result<Vec<ScoredUtterance<'a>>> {
    contexts
        .iter()
        .map(|&(d, t)| {
            let history = turn_history(&dialogues[d], t)?;
            let mut tape = Tape::new();
            let w = crate::generator::GenWeights::bind(&mut tape, gen)?;
            let out = crate::generator::decode(
                &mut tape,
                &w,
                &gen.config,
                &history,
                DecodeMode::Sample,
                rng,
            )?;
            let tokens = if out.tokens.is_empty() {
                // Degenerate empty responses cannot be scored; stand in the
                // EOS symbol so the detector still sees a "machine" item.
                vec![crate::corpus::EOS_ID]
            } else {
                out.tokens
            };
            Ok(ScoredUtterance {
                dialogue: &dialogues[d],
                t,
                utterance: Utterance::from_tokens(tokens),
            })
        })
        .collect()
}

/// Mean p* of a batch under the current detector (no gradients).
fn mean_p_star<R: Rng>(
    ssn: &SsnModel,
    items: &[ScoredUtterance<'_>],
    sampler: SamplerConfig,
    strategy: ReferenceStrategy,
    rng: &mut R,
) -> Result<f64> {
    let mut sum = 0.0;
    for item in items {
        sum += ssn.estimate_p_star(
            item.dialogue,
            item.t,
            Some(&item.utterance),
            sampler.n_target,
            sampler.m,
            strategy,
            rng,
        )?;
    }
    Ok(sum / items.len().max(1) as f64)
}

/// Alternating rounds of detector ascent and generator REINFORCE. Both
/// models should be pretrained. Returns one log entry per round.
pub fn train_open_domain<R: Rng>(
    gen: &mut Generator,
    ssn: &mut SsnModel,
    dialogues: &[Dialogue],
    config: &AdvConfig,
    ssn_optimizer: &mut Optimizer,
    g_optimizer: &mut Optimizer,
    rng: &mut R,
) -> Result<Vec<RoundLog>> {
    config.validate()?;
    let mut baseline = EmaBaseline::default();
    let mut log = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let mut ssn_obj = 0.0;
        for _ in 0..config.ssn_steps {
            let contexts = sample_contexts(dialogues, config.batch, rng)?;
            let real = real_batch(dialogues, &contexts)?;
            let generated = generated_batch(gen, dialogues, &contexts, rng)?;
            ssn_obj = ssn_update_open(
                ssn,
                &real,
                &generated,
                config.sampler,
                config.strategy,
                ssn_optimizer,
                rng,
            )?;
        }
        let mut g_reward = 0.0;
        for _ in 0..config.g_steps {
            let contexts = sample_contexts(dialogues, config.batch, rng)?;
            let refs: Vec<(&Dialogue, usize)> = contexts
                .iter()
                .map(|&(d, t)| (&dialogues[d], t))
                .collect();
            g_reward += g_update(
                gen,
                ssn,
                &refs,
                config.sampler,
                config.strategy,
                config.mix_ratio,
                &mut baseline,
                g_optimizer,
                rng,
            )?;
        }
        g_reward /= config.g_steps as f64;

        let probe = sample_contexts(dialogues, config.batch, rng)?;
        let real = real_batch(dialogues, &probe)?;
        let generated = generated_batch(gen, dialogues, &probe, rng)?;
        let p_star_real = mean_p_star(ssn, &real, config.sampler, config.strategy, rng)?;
        let p_star_gen = mean_p_star(ssn, &generated, config.sampler, config.strategy, rng)?;
        if !(ssn_obj.is_finite() && g_reward.is_finite()) {
            return Err(Error::NonFinite {
                op: format!("adversarial round {round}"),
            });
        }
        log.push(RoundLog {
            round,
            ssn_obj,
            g_reward,
            p_star_real,
            p_star_gen,
        });
    }
    Ok(log)
}

/// Scores any unscored items, then accepts those whose p* clears the
/// configured threshold. The batch must be simulated-only.
pub fn filter_experiences<R: Rng>(
    ssn: &SsnModel,
    batch: &ExperienceBatch,
    cfg: &FilterConfig,
    rng: &mut R,
) -> Result<ExperienceBatch> {
    cfg.validate()?;
    batch.validate()?;
    if batch
        .items
        .iter()
        .any(|e| e.provenance != Provenance::Simulated)
    {
        return Err(Error::InvalidArgument(
            "experience filter expects simulated items only".to_string(),
        ));
    }
    let tau = match cfg.rule {
        ThresholdRule::SampledTau => {
            if cfg.threshold_low == cfg.threshold_high {
                cfg.threshold_low
            } else {
                rng.gen_range(cfg.threshold_low..cfg.threshold_high)
            }
        }
        ThresholdRule::FixedMidpoint => 0.5 * (cfg.threshold_low + cfg.threshold_high),
    };
    let mut accepted = Vec::new();
    for item in &batch.items {
        let p = match item.p_star {
            Some(p) => p,
            None => ssn.estimate_p_star(
                &item.dialogue,
                item.t,
                Some(&item.utterance),
                cfg.sampler.n_target,
                cfg.sampler.m,
                cfg.strategy,
                rng,
            )?,
        };
        if p >= tau {
            let mut kept = item.clone();
            kept.p_star = Some(p);
            accepted.push(kept);
        }
    }
    Ok(ExperienceBatch { items: accepted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{apply_padding, PaddingSpec, UtterancePair};
    use crate::generator::GenConfig;
    use crate::rng::stream;
    use crate::ssn::SSNConfig;

    const VOCAB: usize = 24;

    fn tiny_config(mode: EncodingMode) -> SSNConfig {
        SSNConfig {
            embed_dim: 4,
            pair_hidden: 4,
            reason_hidden: 8,
            mlp_hidden: 8,
            mode,
            use_references: true,
            vocab_size: VOCAB,
        }
    }

    fn toy_dialogue(turns: usize, seed: u64) -> Dialogue {
        let mut rng = stream(seed, "dialogue");
        let pairs = (1..=turns)
            .map(|i| UtterancePair {
                q: Utterance::from_tokens(
                    (0..3).map(|_| rng.gen_range(4..VOCAB as u32)).collect(),
                ),
                a: Utterance::from_tokens(
                    (0..3).map(|_| rng.gen_range(4..VOCAB as u32)).collect(),
                ),
                index: i as i64,
            })
            .collect();
        apply_padding(
            &Dialogue { pairs },
            PaddingSpec {
                pad_word_id: 0,
                n: 3,
            },
        )
        .unwrap()
    }

    fn tiny_sampler() -> SamplerConfig {
        SamplerConfig {
            m: 1,
            n_target: 2,
            seed: 0,
        }
    }

    fn scored<'a>(dialogue: &'a Dialogue, t: usize, tokens: Vec<u32>) -> ScoredUtterance<'a> {
        ScoredUtterance {
            dialogue,
            t,
            utterance: Utterance::from_tokens(tokens),
        }
    }

    #[test]
    fn objective_extremes_and_midpoint() {
        let top = minmax_objective(&[1.0], &[0.0]).unwrap();
        assert!(top.abs() < 1e-5, "objective at (1, 0) was {top}");
        let mid = minmax_objective(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!((mid - 2.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn objective_is_nonpositive() {
        let mut rng = stream(5, "obj");
        for _ in 0..200 {
            let pr: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let pg: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..=1.0)).collect();
            assert!(minmax_objective(&pr, &pg).unwrap() <= 0.0);
        }
    }

    #[test]
    fn objective_linearity_over_concatenation() {
        // Halves of size 2 make the size-weighted mean exact in f64.
        let (r1, g1) = ([0.9, 0.7], [0.2, 0.4]);
        let (r2, g2) = ([0.6, 0.8], [0.1, 0.3]);
        let o1 = minmax_objective(&r1, &g1).unwrap();
        let o2 = minmax_objective(&r2, &g2).unwrap();
        let cat = minmax_objective(&[0.9, 0.7, 0.6, 0.8], &[0.2, 0.4, 0.1, 0.3]).unwrap();
        assert_eq!(cat, (o1 * 2.0 + o2 * 2.0) / 4.0);
    }

    #[test]
    fn task_objective_matches_hand_computation() {
        let mut rng = stream(11, "init");
        let mut ssn = SsnModel::new(tiny_config(EncodingMode::UtteranceOnly), &mut rng).unwrap();
        let d1 = toy_dialogue(4, 1);
        let d2 = toy_dialogue(4, 2);
        let real = [scored(&d1, 2, vec![5, 6, 7]), scored(&d2, 3, vec![8, 9])];
        let sim = [scored(&d1, 3, vec![10, 11]), scored(&d2, 2, vec![12, 13, 14])];
        let sampler = tiny_sampler();

        // Replicate the exact sampling sequence on a frozen copy, then
        // compute the batch objective by hand in scalar arithmetic.
        let mut hand_rng = stream(42, "task");
        let mut hand = Vec::new();
        for item in real.iter().chain(&sim) {
            hand.push(
                ssn.estimate_p_star(
                    item.dialogue,
                    item.t,
                    Some(&item.utterance),
                    sampler.n_target,
                    sampler.m,
                    ReferenceStrategy::OneEach,
                    &mut hand_rng,
                )
                .unwrap(),
            );
        }
        let clamp = |p: f64| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let expected = (clamp(hand[0]).ln() + clamp(hand[1]).ln()) / 2.0
            + ((1.0 - clamp(hand[2])).ln() + (1.0 - clamp(hand[3])).ln()) / 2.0;

        let mut opt = Optimizer::adam(1e-3);
        let mut run_rng = stream(42, "task");
        let got = ssn_update_task(&mut ssn, &real, &sim, sampler, &mut opt, &mut run_rng).unwrap();
        assert!(
            (got - expected).abs() < 1e-6,
            "objective {got} vs hand-computed {expected}"
        );
    }

    #[test]
    fn task_objective_rejects_pair_mode_and_size_mismatch() {
        let mut rng = stream(12, "init");
        let mut pair_ssn = SsnModel::new(tiny_config(EncodingMode::Pair), &mut rng).unwrap();
        let d = toy_dialogue(4, 3);
        let real = [scored(&d, 2, vec![5])];
        let sim = [scored(&d, 2, vec![6])];
        let mut opt = Optimizer::adam(1e-3);
        let mut r = stream(0, "run");
        assert!(ssn_update_task(&mut pair_ssn, &real, &sim, tiny_sampler(), &mut opt, &mut r)
            .is_err());

        let mut ssn = SsnModel::new(tiny_config(EncodingMode::UtteranceOnly), &mut rng).unwrap();
        let sim2 = [scored(&d, 2, vec![6]), scored(&d, 3, vec![7])];
        assert!(
            ssn_update_task(&mut ssn, &real, &sim2, tiny_sampler(), &mut opt, &mut r).is_err()
        );
    }

    #[test]
    fn detector_updates_separate_real_from_generated() {
        let mut rng = stream(21, "init");
        let mut ssn = SsnModel::new(tiny_config(EncodingMode::Pair), &mut rng).unwrap();
        let dialogues: Vec<Dialogue> = (0..4).map(|i| toy_dialogue(4, 100 + i)).collect();
        let mut opt = Optimizer::adam(3e-3);
        let mut run_rng = stream(7, "adv");
        let sampler = tiny_sampler();

        let mut first = None;
        let mut last = 0.0;
        for _ in 0..15 {
            let contexts: Vec<(usize, usize)> = vec![(0, 2), (1, 3), (2, 2), (3, 3)];
            let real = real_batch(&dialogues, &contexts).unwrap();
            let generated: Vec<ScoredUtterance<'_>> = contexts
                .iter()
                .map(|&(d, t)| scored(&dialogues[d], t, vec![4, 4, 4]))
                .collect();
            let obj = ssn_update_open(
                &mut ssn,
                &real,
                &generated,
                sampler,
                ReferenceStrategy::OneEach,
                &mut opt,
                &mut run_rng,
            )
            .unwrap();
            assert!(obj <= 0.0);
            first.get_or_insert(obj);
            last = obj;
        }
        assert!(
            last > first.unwrap(),
            "objective did not improve: {} -> {last}",
            first.unwrap()
        );
    }

    #[test]
    fn zero_rounds_change_nothing() {
        let mut rng = stream(31, "init");
        let mut ssn = SsnModel::new(tiny_config(EncodingMode::Pair), &mut rng).unwrap();
        let mut gen = Generator::new(GenConfig::toy(VOCAB), &mut rng).unwrap();
        let dialogues = vec![toy_dialogue(4, 9)];
        let config = AdvConfig {
            rounds: 0,
            ..AdvConfig::default()
        };
        let ssn_before = format!("{:?}", ssn.params.iter().collect::<Vec<_>>());
        let gen_before = format!("{:?}", gen.params.iter().collect::<Vec<_>>());
        let mut so = Optimizer::adam(1e-3);
        let mut go = Optimizer::adam(1e-3);
        let log = train_open_domain(
            &mut gen,
            &mut ssn,
            &dialogues,
            &config,
            &mut so,
            &mut go,
            &mut rng,
        )
        .unwrap();
        assert!(log.is_empty());
        assert_eq!(ssn_before, format!("{:?}", ssn.params.iter().collect::<Vec<_>>()));
        assert_eq!(gen_before, format!("{:?}", gen.params.iter().collect::<Vec<_>>()));
    }

    #[test]
    fn round_log_has_one_entry_per_round() {
        let mut rng = stream(32, "init");
        let mut ssn = SsnModel::new(tiny_config(EncodingMode::Pair), &mut rng).unwrap();
        let mut gen = Generator::new(GenConfig::toy(VOCAB), &mut rng).unwrap();
        let dialogues: Vec<Dialogue> = (0..3).map(|i| toy_dialogue(4, 200 + i)).collect();
        let config = AdvConfig {
            rounds: 2,
            ssn_steps: 1,
            g_steps: 1,
            batch: 2,
            mix_ratio: 0.5,
            strategy: ReferenceStrategy::OneEach,
            sampler: tiny_sampler(),
        };
        let mut so = Optimizer::adam(1e-3);
        let mut go = Optimizer::adam(1e-3);
        let log = train_open_domain(
            &mut gen,
            &mut ssn,
            &dialogues,
            &config,
            &mut so,
            &mut go,
            &mut rng,
        )
        .unwrap();
        assert_eq!(log.len(), 2);
        for (i, entry) in log.iter().enumerate() {
            assert_eq!(entry.round, i);
            assert!((0.0..=1.0).contains(&entry.p_star_real));
            assert!((0.0..=1.0).contains(&entry.p_star_gen));
            assert!((0.0..=1.0).contains(&entry.g_reward));
        }
    }

    #[test]
    fn rewards_at_baseline_leave_generator_unchanged() {
        let mut rng = stream(33, "init");
        let mut gen = Generator::new(GenConfig::toy(VOCAB), &mut rng).unwrap();
        let mut baseline = EmaBaseline::default();
        baseline.update(0.5);
        let before = format!("{:?}", gen.params.iter().collect::<Vec<_>>());
        let mut opt = Optimizer::adam(1e-2);
        reinforce_step(
            &mut gen,
            &[5, 6, 7],
            &[8, 9],
            true,
            &[0.5, 0.5],
            &mut baseline,
            &mut opt,
        )
        .unwrap();
        assert_eq!(before, format!("{:?}", gen.params.iter().collect::<Vec<_>>()));
    }

    fn experience(dialogue: &Dialogue, p: Option<f64>, provenance: Provenance) -> Experience {
        Experience {
            dialogue: dialogue.clone(),
            t: 2,
            utterance: Utterance::from_tokens(vec![5, 6]),
            provenance,
            p_star: p,
        }
    }

    #[test]
    fn filter_band_extremes_are_deterministic() {
        let mut rng = stream(41, "init");
        let ssn = SsnModel::new(tiny_config(EncodingMode::Pair), &mut rng).unwrap();
        let d = toy_dialogue(4, 50);
        let batch = ExperienceBatch {
            items: vec![
                experience(&d, Some(0.7), Provenance::Simulated),
                experience(&d, Some(0.3), Provenance::Simulated),
            ],
        };
        let cfg = FilterConfig::default();
        for seed in 0..20 {
            let mut r = stream(seed, "filter");
            let kept = filter_experiences(&ssn, &batch, &cfg, &mut r).unwrap();
            assert_eq!(kept.items.len(), 1);
            assert_eq!(kept.items[0].p_star, Some(0.7));
        }
    }

    #[test]
    fn filter_midpoint_acceptance_near_half() {
        let mut rng = stream(42, "init");
        let ssn = SsnModel::new(tiny_config(EncodingMode::Pair), &mut rng).unwrap();
        let d = toy_dialogue(4, 51);
        let batch = ExperienceBatch {
            items: vec![experience(&d, Some(0.5), Provenance::Simulated)],
        };
        let cfg = FilterConfig::default();
        let mut r = stream(4242, "filter");
        let mut accepted = 0;
        let n = 4000;
        for _ in 0..n {
            accepted += filter_experiences(&ssn, &batch, &cfg, &mut r).unwrap().items.len();
        }
        let freq = accepted as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.05, "acceptance frequency {freq}");
    }

    #[test]
    fn filter_is_monotone_and_rejects_real_items() {
        let mut rng = stream(43, "init");
        let ssn = SsnModel::new(tiny_config(EncodingMode::Pair), &mut rng).unwrap();
        let d = toy_dialogue(4, 52);
        let mut r = stream(7, "filter");
        for _ in 0..100 {
            let p1 = r.gen_range(0.0..=1.0);
            let p2 = r.gen_range(0.0..=1.0);
            let (hi, lo) = if p1 >= p2 { (p1, p2) } else { (p2, p1) };
            let batch = ExperienceBatch {
                items: vec![
                    experience(&d, Some(hi), Provenance::Simulated),
                    experience(&d, Some(lo), Provenance::Simulated),
                ],
            };
            let kept = filter_experiences(&ssn, &batch, &FilterConfig::default(), &mut r).unwrap();
            let kept_ps: Vec<f64> = kept.items.iter().filter_map(|e| e.p_star).collect();
            if kept_ps.contains(&lo) {
                assert!(kept_ps.contains(&hi), "lower score kept while higher dropped");
            }
        }

        let real = ExperienceBatch {
            items: vec![experience(&d, Some(0.9), Provenance::Real)],
        };
        let mut r2 = stream(8, "filter");
        assert!(filter_experiences(&ssn, &real, &FilterConfig::default(), &mut r2).is_err());
    }

    #[test]
    fn fixed_midpoint_rule_uses_the_band_center() {
        let mut rng = stream(44, "init");
        let ssn = SsnModel::new(tiny_config(EncodingMode::Pair), &mut rng).unwrap();
        let d = toy_dialogue(4, 53);
        let cfg = FilterConfig {
            rule: ThresholdRule::FixedMidpoint,
            ..FilterConfig::default()
        };
        let batch = ExperienceBatch {
            items: vec![
                experience(&d, Some(0.501), Provenance::Simulated),
                experience(&d, Some(0.499), Provenance::Simulated),
            ],
        };
        let mut r = stream(9, "filter");
        let kept = filter_experiences(&ssn, &batch, &cfg, &mut r).unwrap();
        assert_eq!(kept.items.len(), 1);
        assert_eq!(kept.items[0].p_star, Some(0.501));
    }

    #[test]
    fn unscored_items_get_scores_recorded() {
        let mut rng = stream(45, "init");
        let ssn = SsnModel::new(tiny_config(EncodingMode::Pair), &mut rng).unwrap();
        let d = toy_dialogue(4, 54);
        let cfg = FilterConfig {
            threshold_low: 0.0,
            threshold_high: 0.0,
            sampler: tiny_sampler(),
            ..FilterConfig::default()
        };
        let batch = ExperienceBatch {
            items: vec![experience(&d, None, Provenance::Simulated)],
        };
        let mut r = stream(10, "filter");
        let kept = filter_experiences(&ssn, &batch, &cfg, &mut r).unwrap();
        assert_eq!(kept.items.len(), 1);
        let p = kept.items[0].p_star.expect("score recorded");
        assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(FilterConfig {
            threshold_low: 0.6,
            threshold_high: 0.5,
            ..FilterConfig::default()
        }
        .validate()
        .is_err());
        assert!(AdvConfig {
            mix_ratio: 1.5,
            ..AdvConfig::default()
        }
        .validate()
        .is_err());
        assert!(AdvConfig {
            batch: 0,
            ..AdvConfig::default()
        }
        .validate()
        .is_err());
    }
}
