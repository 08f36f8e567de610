//! Ordered/misordered triple sampling over padded dialogue histories.
//!
//! A padded history of length `t` exposes the indices `{-2, -1, 0, 1, ..., t}`
//! (the first three being shared padding pairs). An ordered triple presents a
//! 3-subset `i < j < k` in increasing order; a misordered triple presents it
//! as `(i, k, j)`. These are the only two presentation families.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output convention: ordered = 0, misordered = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrderLabel {
    Ordered,
    Misordered,
}

impl OrderLabel {
    pub fn as_f64(self) -> f64 {
        match self {
            OrderLabel::Ordered => 0.0,
            OrderLabel::Misordered => 1.0,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            OrderLabel::Ordered => 0,
            OrderLabel::Misordered => 1,
        }
    }
}

/// Three pair indices in presentation order, plus the order label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub indices: [i64; 3],
    pub label: OrderLabel,
}

/// Which labels the two reference triples carry. One strategy is fixed for
/// all targets within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceStrategy {
    BothOrdered,
    BothMisordered,
    /// T' ordered, T'' misordered, in that fixed slot order.
    OneEach,
}

impl ReferenceStrategy {
    /// Labels of (T', T'') under this strategy.
    pub fn labels(&self) -> (OrderLabel, OrderLabel) {
        match self {
            ReferenceStrategy::BothOrdered => (OrderLabel::Ordered, OrderLabel::Ordered),
            ReferenceStrategy::BothMisordered => {
                (OrderLabel::Misordered, OrderLabel::Misordered)
            }
            ReferenceStrategy::OneEach => (OrderLabel::Ordered, OrderLabel::Misordered),
        }
    }
}

impl std::fmt::Display for ReferenceStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ReferenceStrategy::BothOrdered => "both-ordered",
            ReferenceStrategy::BothMisordered => "both-misordered",
            ReferenceStrategy::OneEach => "one-each",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Reference-sampling count per target.
    pub m: usize,
    /// Misordered-target count used by the p* estimator.
    pub n_target: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            m: 4,
            n_target: 4,
            seed: 0,
        }
    }
}

/// All indices available in a padded history through turn `t`.
pub fn padded_indices(t: usize) -> Vec<i64> {
    (-2..=t as i64).collect()
}

/// Ordered iff strictly increasing; misordered iff the presentation is
/// `(i, k, j)` for the sorted subset `i < j < k`. Anything else is outside
/// the two sampling families.
pub fn classify_triple(presentation: (i64, i64, i64)) -> Result<OrderLabel> {
    let (a, b, c) = presentation;
    if a == b || b == c || a == c {
        return Err(Error::UnsupportedPattern(a, b, c));
    }
    if a < b && b < c {
        return Ok(OrderLabel::Ordered);
    }
    // (i, k, j): first smallest, second largest, third in between.
    if a < c && c < b {
        return Ok(OrderLabel::Misordered);
    }
    Err(Error::UnsupportedPattern(a, b, c))
}

/// Presents a 3-index subset under a label: sorted ascending for Ordered,
/// (i, k, j) for Misordered.
pub fn present(mut subset: [i64; 3], label: OrderLabel) -> Triple {
    subset.sort_unstable();
    let indices = match label {
        OrderLabel::Ordered => subset,
        OrderLabel::Misordered => [subset[0], subset[2], subset[1]],
    };
    Triple { indices, label }
}

fn sample_subset<R: Rng>(pool: &[i64], k: usize, rng: &mut R) -> Result<Vec<i64>> {
    if pool.len() < k {
        return Err(Error::InsufficientHistory {
            needed: k,
            available: pool.len(),
        });
    }
    // Partial Fisher-Yates on a copy: uniform without replacement.
    let mut pool = pool.to_vec();
    let (chosen, _) = pool.partial_shuffle(rng, k);
    Ok(chosen.to_vec())
}

pub fn sample_ordered_triple<R: Rng>(t: usize, rng: &mut R) -> Result<Triple> {
    let subset = sample_subset(&padded_indices(t), 3, rng)?;
    Ok(present([subset[0], subset[1], subset[2]], OrderLabel::Ordered))
}

pub fn sample_misordered_triple<R: Rng>(t: usize, rng: &mut R) -> Result<Triple> {
    let subset = sample_subset(&padded_indices(t), 3, rng)?;
    Ok(present(
        [subset[0], subset[1], subset[2]],
        OrderLabel::Misordered,
    ))
}

pub fn sample_triple<R: Rng>(t: usize, label: OrderLabel, rng: &mut R) -> Result<Triple> {
    match label {
        OrderLabel::Ordered => sample_ordered_triple(t, rng),
        OrderLabel::Misordered => sample_misordered_triple(t, rng),
    }
}

/// A target triple always contains turn `t`; the other two indices come from
/// the padded history before `t`.
pub fn sample_target_triple<R: Rng>(t: usize, label: OrderLabel, rng: &mut R) -> Result<Triple> {
    if t < 1 {
        return Err(Error::InvalidArgument(
            "target triples require t >= 1".to_string(),
        ));
    }
    let earlier = padded_indices(t - 1);
    let two = sample_subset(&earlier, 2, rng)?;
    Ok(present([two[0], two[1], t as i64], label))
}

/// Two reference triples drawn from indices <= t-1 (never containing `t`),
/// labeled per the strategy.
pub fn sample_references<R: Rng>(
    t: usize,
    strategy: ReferenceStrategy,
    rng: &mut R,
) -> Result<(Triple, Triple)> {
    let tt = t.saturating_sub(1);
    let (l1, l2) = strategy.labels();
    Ok((sample_triple(tt, l1, rng)?, sample_triple(tt, l2, rng)?))
}

/// Pad-free reference pair: both triples are redrawn until neither touches
/// a padding index, so every presented utterance is a real turn. Requires
/// `t >= 4` (three distinct real indices below `t`).
pub fn sample_references_pad_free<R: Rng>(
    t: usize,
    strategy: ReferenceStrategy,
    rng: &mut R,
) -> Result<(Triple, Triple)> {
    if t < 4 {
        return Err(Error::InvalidArgument(format!(
            "pad-free references require t >= 4, got {t}"
        )));
    }
    let tt = t - 1;
    let (l1, l2) = strategy.labels();
    let pad_free = |tr: &Triple| tr.indices.iter().all(|&i| i >= 1);
    let mut draw = |label| -> Result<Triple> {
        loop {
            let tr = sample_triple(tt, label, rng)?;
            if pad_free(&tr) {
                return Ok(tr);
            }
        }
    };
    Ok((draw(l1)?, draw(l2)?))
}

/// Exhaustive list of all `C(t+3, 3)` triples of one label; the brute-force
/// oracle the samplers are checked against.
pub fn enumerate_triples(t: usize, label: OrderLabel) -> Result<Vec<Triple>> {
    if t > 20 {
        return Err(Error::EnumerationGuard(t));
    }
    let pool = padded_indices(t);
    let mut out = Vec::new();
    for x in 0..pool.len() {
        for y in (x + 1)..pool.len() {
            for z in (y + 1)..pool.len() {
                out.push(present([pool[x], pool[y], pool[z]], label));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use std::collections::HashSet;

    #[test]
    fn classify_families() {
        assert_eq!(classify_triple((1, 4, 2)).unwrap(), OrderLabel::Misordered);
        assert_eq!(classify_triple((1, 2, 3)).unwrap(), OrderLabel::Ordered);
        assert!(matches!(
            classify_triple((3, 2, 1)),
            Err(Error::UnsupportedPattern(3, 2, 1))
        ));
        assert!(classify_triple((1, 1, 2)).is_err());
    }

    #[test]
    fn misordered_presentation_pattern() {
        // Subset {1,2,4} presents as (1,4,2); pads {-2,-1,0} as (-2,0,-1).
        let t = present([1, 2, 4], OrderLabel::Misordered);
        assert_eq!(t.indices, [1, 4, 2]);
        let t = present([-2, -1, 0], OrderLabel::Misordered);
        assert_eq!(t.indices, [-2, 0, -1]);
    }

    #[test]
    fn pad_free_references_touch_only_real_turns() {
        let mut rng = stream(23, "sampler-test");
        for t in 4..=8 {
            for strategy in [
                ReferenceStrategy::OneEach,
                ReferenceStrategy::BothOrdered,
                ReferenceStrategy::BothMisordered,
            ] {
                let (r1, r2) = sample_references_pad_free(t, strategy, &mut rng).unwrap();
                for tr in [r1, r2] {
                    assert!(tr.indices.iter().all(|&i| i >= 1 && i < t as i64), "{tr:?}");
                }
            }
        }
        assert!(sample_references_pad_free(3, ReferenceStrategy::OneEach, &mut rng).is_err());
    }

    #[test]
    fn pad_free_references_cover_all_real_subsets() {
        // t = 5: refs draw 3 of the real indices {1,2,3,4}; C(4,3) = 4
        // subsets must all appear for each label.
        let mut rng = stream(24, "sampler-test");
        let mut ordered = HashSet::new();
        let mut misordered = HashSet::new();
        for _ in 0..2_000 {
            let (r1, r2) = sample_references_pad_free(5, ReferenceStrategy::OneEach, &mut rng)
                .unwrap();
            ordered.insert(r1.indices);
            misordered.insert(r2.indices);
        }
        assert_eq!(ordered.len(), 4);
        assert_eq!(misordered.len(), 4);
    }

    #[test]
    fn ordered_draws_cover_all_subsets_at_t2() {
        // C(5,3) = 10 subsets over {-2,-1,0,1,2}.
        let all: HashSet<[i64; 3]> = enumerate_triples(2, OrderLabel::Ordered)
            .unwrap()
            .iter()
            .map(|t| t.indices)
            .collect();
        assert_eq!(all.len(), 10);
        let mut rng = stream(11, "sampler-test");
        let mut seen = HashSet::new();
        for _ in 0..10_000 {
            let t = sample_ordered_triple(2, &mut rng).unwrap();
            assert!(all.contains(&t.indices));
            seen.insert(t.indices);
        }
        assert_eq!(seen, all);
    }

    #[test]
    fn sampler_outputs_classify_to_their_label() {
        let mut rng = stream(3, "closure");
        for t in [1usize, 2, 3, 6] {
            for _ in 0..2_000 {
                let o = sample_ordered_triple(t, &mut rng).unwrap();
                assert_eq!(classify_triple((o.indices[0], o.indices[1], o.indices[2])).unwrap(), OrderLabel::Ordered);
                let m = sample_misordered_triple(t, &mut rng).unwrap();
                assert_eq!(classify_triple((m.indices[0], m.indices[1], m.indices[2])).unwrap(), OrderLabel::Misordered);
            }
        }
    }

    #[test]
    fn target_triples_contain_t() {
        let mut rng = stream(5, "target");
        for _ in 0..200 {
            let t = sample_target_triple(3, OrderLabel::Ordered, &mut rng).unwrap();
            assert_eq!(t.indices[2], 3);
            assert!(t.indices[0] < t.indices[1] && t.indices[1] < 3);

            let m = sample_target_triple(3, OrderLabel::Misordered, &mut rng).unwrap();
            assert_eq!(m.indices[1], 3);
        }
        // Misordered subset {1,2,3} presents as (1,3,2).
        let mut seen = HashSet::new();
        for _ in 0..500 {
            let m = sample_target_triple(3, OrderLabel::Misordered, &mut rng).unwrap();
            seen.insert(m.indices);
        }
        assert!(seen.contains(&[1, 3, 2]));
    }

    #[test]
    fn target_pairs_cover_all_earlier_pairs() {
        // t=4: earlier indices {-2..3}, C(6,2)=15 pairs.
        let mut rng = stream(9, "target-coverage");
        let mut seen = HashSet::new();
        for _ in 0..10_000 {
            let t = sample_target_triple(4, OrderLabel::Ordered, &mut rng).unwrap();
            seen.insert((t.indices[0], t.indices[1]));
        }
        assert_eq!(seen.len(), 15);
    }

    #[test]
    fn references_exclude_t_and_follow_strategy() {
        let mut rng = stream(1, "refs");
        for t in [1usize, 2, 5] {
            for _ in 0..500 {
                let (r1, r2) = sample_references(t, ReferenceStrategy::OneEach, &mut rng).unwrap();
                assert_eq!(r1.label, OrderLabel::Ordered);
                assert_eq!(r2.label, OrderLabel::Misordered);
                for idx in r1.indices.iter().chain(r2.indices.iter()) {
                    assert!(*idx < t as i64);
                }
            }
        }
        // t=1: the only subset is the pads.
        let (r1, r2) = sample_references(1, ReferenceStrategy::BothMisordered, &mut rng).unwrap();
        assert_eq!(r1.indices, [-2, 0, -1]);
        assert_eq!(r2.indices, [-2, 0, -1]);
    }

    #[test]
    fn enumerate_counts() {
        assert_eq!(enumerate_triples(2, OrderLabel::Ordered).unwrap().len(), 10);
        assert_eq!(enumerate_triples(2, OrderLabel::Misordered).unwrap().len(), 10);
        assert_eq!(enumerate_triples(0, OrderLabel::Ordered).unwrap().len(), 1);
        assert!(enumerate_triples(21, OrderLabel::Ordered).is_err());
    }

    #[test]
    fn identical_seed_identical_draws() {
        let mut a = stream(42, "sampler");
        let mut b = stream(42, "sampler");
        for _ in 0..100 {
            assert_eq!(
                sample_ordered_triple(5, &mut a).unwrap(),
                sample_ordered_triple(5, &mut b).unwrap()
            );
        }
    }
}
