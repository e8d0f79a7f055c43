//! Corpus ingestion, vocabulary, sentence encoding, and bucketed batching.
//!
//! Input corpora are UTF-8 text, one pre-tokenized sentence per line with
//! tokens separated by spaces. Encoding wraps every sentence in begin/end
//! markers; out-of-vocabulary tokens map to the unknown token. Batches
//! group sentences of identical encoded length, so nothing is ever padded.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Result, RmnError};
use crate::util::write_atomic;

pub type TokenId = u32;

pub const BOS_ID: TokenId = 0;
pub const EOS_ID: TokenId = 1;
pub const UNK_ID: TokenId = 2;
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

pub const DEFAULT_MAX_SENTENCE_LEN: usize = 150;

/// Vocabulary cutoff policy applied after frequency ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabLimit {
    /// Keep everything.
    All,
    /// Keep the most frequent tokens up to a total vocabulary size
    /// (reserved tokens included in the count).
    MaxSize(usize),
    /// Keep tokens seen at least this many times.
    MinCount(u64),
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
    counts: Vec<u64>,
}

impl Vocabulary {
    /// Rank tokens by descending frequency (ties broken lexicographically)
    /// and keep those inside the limit. Reserved tokens always occupy ids
    /// 0..=2. Deterministic for a given corpus.
    pub fn build<'a, I>(lines: I, limit: VocabLimit) -> Result<Vocabulary>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut freq: HashMap<String, u64> = HashMap::new();
        let mut saw_any = false;
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            saw_any = true;
            for tok in line.split_whitespace() {
                *freq.entry(tok.to_string()).or_insert(0) += 1;
            }
        }
        if !saw_any {
            return Err(RmnError::EmptyInput("build_vocab"));
        }
        let mut ranked: Vec<(String, u64)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut id_to_token = vec![
            BOS_TOKEN.to_string(),
            EOS_TOKEN.to_string(),
            UNK_TOKEN.to_string(),
        ];
        let mut counts = vec![0u64, 0, 0];
        for (tok, count) in ranked {
            match limit {
                VocabLimit::All => {}
                VocabLimit::MaxSize(max) => {
                    if id_to_token.len() >= max {
                        break;
                    }
                }
                VocabLimit::MinCount(min) => {
                    if count < min {
                        // ranking is by count, so everything after is below too
                        break;
                    }
                }
            }
            id_to_token.push(tok);
            counts.push(count);
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
            counts,
        })
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.id_to_token[id as usize]
    }

    /// `[begin, ids.., end]`, or `None` for a blank line (skip signal).
    pub fn encode_sentence(&self, line: &str) -> Option<Vec<TokenId>> {
        let line = line.trim();
        if line.is_empty() {
            return None;
        }
        Some(self.encode_tokens(line.split_whitespace()))
    }

    /// Encode an already-split token sequence, adding boundary markers.
    pub fn encode_tokens<'a, I>(&self, tokens: I) -> Vec<TokenId>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut ids = vec![BOS_ID];
        ids.extend(tokens.into_iter().map(|t| self.id(t)));
        ids.push(EOS_ID);
        ids
    }

    /// Tokens for the inner ids (markers included verbatim).
    pub fn decode(&self, ids: &[TokenId]) -> Vec<&str> {
        ids.iter().map(|&id| self.token(id)).collect()
    }

    /// Canonical serialized form: `token<TAB>id<TAB>count` lines,
    /// reserved tokens first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = String::new();
        for (i, tok) in self.id_to_token.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{}\n", tok, i, self.counts[i]));
        }
        out.into_bytes()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let text = fs::read_to_string(path)?;
        let mut id_to_token = Vec::new();
        let mut counts = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split('\t');
            let (tok, id, count) = match (parts.next(), parts.next(), parts.next()) {
                (Some(t), Some(i), Some(c)) => (t, i, c),
                _ => {
                    return Err(RmnError::Config(format!(
                        "vocabulary file line {} is malformed",
                        lineno + 1
                    )))
                }
            };
            let id: usize = id
                .parse()
                .map_err(|_| RmnError::Config(format!("bad id on line {}", lineno + 1)))?;
            if id != id_to_token.len() {
                return Err(RmnError::Config(format!(
                    "vocabulary ids must be dense, line {} has id {}",
                    lineno + 1,
                    id
                )));
            }
            let count: u64 = count
                .parse()
                .map_err(|_| RmnError::Config(format!("bad count on line {}", lineno + 1)))?;
            id_to_token.push(tok.to_string());
            counts.push(count);
        }
        if id_to_token.len() < 3
            || id_to_token[0] != BOS_TOKEN
            || id_to_token[1] != EOS_TOKEN
            || id_to_token[2] != UNK_TOKEN
        {
            return Err(RmnError::Config(
                "vocabulary file must start with the reserved tokens".into(),
            ));
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
            counts,
        })
    }

    /// SHA-256 of the canonical serialized form; checkpoints embed this to
    /// pin the vocabulary they were trained with.
    pub fn content_hash(&self) -> [u8; 32] {
        let digest = Sha256::digest(self.to_bytes());
        let mut out = [0u8; 32];
        out.copy_from_slice(&digest);
        out
    }
}

/// An encoded corpus plus skip accounting.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub sentences: Vec<Vec<TokenId>>,
    pub skipped_empty: usize,
    pub skipped_long: usize,
}

/// Encode every line; blank lines and lines longer than `max_len` raw
/// tokens are skipped and counted.
pub fn encode_corpus(lines: &[String], vocab: &Vocabulary, max_len: usize) -> Corpus {
    let mut corpus = Corpus::default();
    for line in lines {
        match vocab.encode_sentence(line) {
            None => corpus.skipped_empty += 1,
            Some(ids) => {
                if ids.len() - 2 > max_len {
                    corpus.skipped_long += 1;
                } else {
                    corpus.sentences.push(ids);
                }
            }
        }
    }
    corpus
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}

pub fn load_corpus(path: &Path, vocab: &Vocabulary, max_len: usize) -> Result<Corpus> {
    Ok(encode_corpus(&read_lines(path)?, vocab, max_len))
}

/// A group of equally long encoded sentences.
#[derive(Debug, Clone)]
pub struct Batch {
    pub length: usize,
    pub sentences: Vec<Vec<TokenId>>,
}

/// Group sentences into equal-length buckets, shuffle within each bucket,
/// emit consecutive chunks of `batch_size` (the last chunk of a bucket may
/// be smaller), and shuffle the bucket emission order. Deterministic in
/// `seed`; every sentence lands in exactly one batch.
pub fn bucket_batches(sentences: &[Vec<TokenId>], batch_size: usize, seed: u64) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in sentences.iter().enumerate() {
        buckets.entry(s.len()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lengths: Vec<usize> = buckets.keys().copied().collect();
    lengths.shuffle(&mut rng);
    let mut batches = Vec::new();
    for len in lengths {
        let mut members = buckets.remove(&len).unwrap();
        members.shuffle(&mut rng);
        for chunk in members.chunks(batch_size) {
            batches.push(Batch {
                length: len,
                sentences: chunk.iter().map(|&i| sentences[i].clone()).collect(),
            });
        }
    }
    batches
}
