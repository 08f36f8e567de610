//! Dialogue corpora: loading, filtering, tokenization, vocabulary, padding.
//!
//! On-disk corpus format is UTF-8 JSON Lines, one dialogue per line:
//! `{"pairs": [{"q": "<text>", "a": "<text>"}, ...]}`. The vocabulary file is
//! a JSON object `{"tokens": ["<tok>", ...]}` where position = id - 4 (ids
//! 0..3 are reserved for PAD, BOS, EOS, UNK).

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
pub const RESERVED: usize = 4;

/// One utterance: a token-id sequence plus the text it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub tokens: Vec<u32>,
    pub raw_text: Option<String>,
}

impl Utterance {
    pub fn from_text(text: &str) -> Self {
        Utterance {
            tokens: Vec::new(),
            raw_text: Some(text.to_string()),
        }
    }

    pub fn from_tokens(tokens: Vec<u32>) -> Self {
        Utterance {
            tokens,
            raw_text: None,
        }
    }

    /// Whitespace word count of the raw text, falling back to token count.
    pub fn word_count(&self) -> usize {
        match &self.raw_text {
            Some(t) => t.split_whitespace().count(),
            None => self.tokens.len(),
        }
    }
}

/// One dialogue turn. Padding pairs use indices -2, -1, 0; real turns 1..t.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtterancePair {
    pub q: Utterance,
    pub a: Utterance,
    pub index: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dialogue {
    pub pairs: Vec<UtterancePair>,
}

impl Dialogue {
    /// Highest real turn index (0 for a pads-only or empty dialogue).
    pub fn turns(&self) -> usize {
        self.pairs
            .iter()
            .map(|p| p.index)
            .filter(|&i| i > 0)
            .max()
            .unwrap_or(0) as usize
    }

    pub fn is_padded(&self) -> bool {
        self.pairs.first().map(|p| p.index == -2).unwrap_or(false)
    }

    /// Resolve a (possibly padding) turn index to its pair.
    pub fn pair(&self, index: i64) -> Result<&UtterancePair> {
        self.pairs
            .iter()
            .find(|p| p.index == index)
            .ok_or(Error::UnresolvableIndex {
                index,
                len: self.pairs.len(),
            })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
    /// Dialogues dropped during loading because they had no pairs.
    pub skipped_empty: usize,
}

/// Length of the shared padding utterances: `n` repetitions of the pad word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddingSpec {
    pub pad_word_id: u32,
    pub n: usize,
}

#[derive(Debug, Deserialize, Serialize)]
struct PairRecord {
    q: String,
    a: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct DialogueRecord {
    pairs: Vec<PairRecord>,
}

/// Loads a JSON Lines corpus. Empty lines and empty dialogues are skipped
/// (counted in `skipped_empty`); malformed lines are an error naming the line.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut corpus = Corpus::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DialogueRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        if record.pairs.is_empty() {
            corpus.skipped_empty += 1;
            continue;
        }
        let pairs = record
            .pairs
            .into_iter()
            .enumerate()
            .map(|(i, p)| UtterancePair {
                q: Utterance::from_text(&p.q),
                a: Utterance::from_text(&p.a),
                index: (i + 1) as i64,
            })
            .collect();
        corpus.dialogues.push(Dialogue { pairs });
    }
    Ok(corpus)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for d in &corpus.dialogues {
        let record = DialogueRecord {
            pairs: d
                .pairs
                .iter()
                .filter(|p| p.index > 0)
                .map(|p| PairRecord {
                    q: p.q.raw_text.clone().unwrap_or_default(),
                    a: p.a.raw_text.clone().unwrap_or_default(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &record).map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
}

#[derive(Debug, Deserialize, Serialize)]
struct TokenPairRecord {
    q: Vec<u32>,
    a: Vec<u32>,
}

#[derive(Debug, Deserialize, Serialize)]
struct TokenDialogueRecord {
    pairs: Vec<TokenPairRecord>,
}

/// Saves an already-encoded corpus as JSON Lines of token ids, one dialogue
/// per line. Padding pairs are dropped; real pairs keep their order.
pub fn save_token_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for d in &corpus.dialogues {
        let record = TokenDialogueRecord {
            pairs: d
                .pairs
                .iter()
                .filter(|p| p.index > 0)
                .map(|p| TokenPairRecord {
                    q: p.q.tokens.clone(),
                    a: p.a.tokens.clone(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &record).map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
}

/// Loads a token-id corpus written by [`save_token_corpus`].
pub fn load_token_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut corpus = Corpus::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TokenDialogueRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        if record.pairs.is_empty() {
            corpus.skipped_empty += 1;
            continue;
        }
        let pairs = record
            .pairs
            .into_iter()
            .enumerate()
            .map(|(i, p)| UtterancePair {
                q: Utterance::from_tokens(p.q),
                a: Utterance::from_tokens(p.a),
                index: (i + 1) as i64,
            })
            .collect();
        corpus.dialogues.push(Dialogue { pairs });
    }
    Ok(corpus)
}

/// Smallest vocabulary size consistent with the corpus (max id + 1, at
/// least the reserved range).
pub fn infer_vocab_size(corpus: &Corpus) -> usize {
    let mut max_id = 0;
    for d in &corpus.dialogues {
        for p in &d.pairs {
            for &tok in p.q.tokens.iter().chain(&p.a.tokens) {
                max_id = max_id.max(tok);
            }
        }
    }
    (max_id as usize + 1).max(RESERVED)
}

/// Keeps only utterance pairs where both Q and A fall in
/// `[min_words, max_words]`; surviving pairs are re-indexed from 1 and
/// dialogues left empty are dropped.
pub fn filter_by_length(corpus: &Corpus, min_words: usize, max_words: usize) -> Result<Corpus> {
    if min_words > max_words {
        return Err(Error::InvalidArgument(format!(
            "min_words {min_words} > max_words {max_words}"
        )));
    }
    let mut out = Corpus {
        skipped_empty: corpus.skipped_empty,
        ..Default::default()
    };
    for d in &corpus.dialogues {
        let mut pairs: Vec<UtterancePair> = d
            .pairs
            .iter()
            .filter(|p| p.index > 0)
            .filter(|p| {
                let qs = p.q.word_count();
                let as_ = p.a.word_count();
                qs >= min_words && qs <= max_words && as_ >= min_words && as_ <= max_words
            })
            .cloned()
            .collect();
        for (i, p) in pairs.iter_mut().enumerate() {
            p.index = (i + 1) as i64;
        }
        if !pairs.is_empty() {
            out.dialogues.push(Dialogue { pairs });
        }
    }
    Ok(out)
}

/// Padding length is the rounded-up mean word count over all utterances,
/// Q and A alike.
pub fn compute_padding_spec(corpus: &Corpus) -> Result<PaddingSpec> {
    let mut total = 0usize;
    let mut count = 0usize;
    for d in &corpus.dialogues {
        for p in &d.pairs {
            total += p.q.word_count() + p.a.word_count();
            count += 2;
        }
    }
    if count == 0 {
        return Err(Error::EmptyCorpus(
            "cannot compute padding length".to_string(),
        ));
    }
    let n = (total + count - 1) / count; // ceil(total / count)
    Ok(PaddingSpec {
        pad_word_id: PAD_ID,
        n: n.max(1),
    })
}

/// Prepends the three shared padding pairs (indices -2, -1, 0), each
/// utterance being `spec.n` repetitions of the pad word.
pub fn apply_padding(dialogue: &Dialogue, spec: PaddingSpec) -> Result<Dialogue> {
    if dialogue.is_padded() {
        return Err(Error::AlreadyPadded);
    }
    let pad_utt = Utterance::from_tokens(vec![spec.pad_word_id; spec.n]);
    let mut pairs: Vec<UtterancePair> = (-2..=0)
        .map(|index| UtterancePair {
            q: pad_utt.clone(),
            a: pad_utt.clone(),
            index,
        })
        .collect();
    pairs.extend(dialogue.pairs.iter().cloned());
    Ok(Dialogue { pairs })
}

pub fn apply_padding_corpus(corpus: &Corpus, spec: PaddingSpec) -> Result<Corpus> {
    let dialogues = corpus
        .dialogues
        .iter()
        .map(|d| apply_padding(d, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        dialogues,
        skipped_empty: corpus.skipped_empty,
    })
}

/// Token/id bijection with reserved ids PAD=0, BOS=1, EOS=2, UNK=3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    ids: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), (i + RESERVED) as u32))
            .collect();
        Vocabulary { ids, tokens }
    }

    pub fn size(&self) -> usize {
        self.tokens.len() + RESERVED
    }

    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        match id {
            PAD_ID => "<pad>",
            BOS_ID => "<bos>",
            EOS_ID => "<eos>",
            UNK_ID => "<unk>",
            _ => self
                .tokens
                .get(id as usize - RESERVED)
                .map(String::as_str)
                .unwrap_or("<unk>"),
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct VocabFile<'a> {
            tokens: &'a [String],
        }
        let json = serde_json::to_string(&VocabFile {
            tokens: &self.tokens,
        })
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path.as_ref(), json).map_err(|source| Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct VocabFile {
            tokens: Vec<String>,
        }
        let raw = std::fs::read_to_string(path.as_ref()).map_err(|source| Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        })?;
        let file: VocabFile = serde_json::from_str(&raw).map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?;
        Ok(Vocabulary::from_tokens(file.tokens))
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect()
}

/// Id assignment is deterministic: frequency descending, then lexicographic.
pub fn build_vocab(corpus: &Corpus, min_count: usize) -> Result<Vocabulary> {
    if corpus.dialogues.is_empty() {
        return Err(Error::EmptyCorpus("cannot build vocabulary".to_string()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for d in &corpus.dialogues {
        for p in &d.pairs {
            for utt in [&p.q, &p.a] {
                if let Some(text) = &utt.raw_text {
                    for tok in tokenize(text) {
                        *counts.entry(tok).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    let mut entries: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count.max(1))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_tokens(
        entries.into_iter().map(|(t, _)| t).collect(),
    ))
}

/// Lowercase whitespace tokenization through the vocabulary with UNK
/// fallback. Empty text encodes to a single UNK.
pub fn encode(vocab: &Vocabulary, text: &str) -> Utterance {
    let tokens: Vec<u32> = tokenize(text).iter().map(|t| vocab.id(t)).collect();
    Utterance {
        tokens: if tokens.is_empty() {
            vec![UNK_ID]
        } else {
            tokens
        },
        raw_text: Some(text.to_string()),
    }
}

/// Fills in token ids for every utterance of the corpus.
pub fn encode_corpus(corpus: &Corpus, vocab: &Vocabulary) -> Corpus {
    let dialogues = corpus
        .dialogues
        .iter()
        .map(|d| Dialogue {
            pairs: d
                .pairs
                .iter()
                .map(|p| UtterancePair {
                    q: encode_utt(vocab, &p.q),
                    a: encode_utt(vocab, &p.a),
                    index: p.index,
                })
                .collect(),
        })
        .collect();
    Corpus {
        dialogues,
        skipped_empty: corpus.skipped_empty,
    }
}

fn encode_utt(vocab: &Vocabulary, utt: &Utterance) -> Utterance {
    match &utt.raw_text {
        Some(text) => encode(vocab, text),
        None => utt.clone(),
    }
}
