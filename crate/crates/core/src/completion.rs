//! Sentence-completion scoring.
//!
//! Each item is a sentence with one blank and five candidates. Every
//! candidate is spliced into the blank, the whole sentence is scored by
//! its log-probability under the model, and the highest-scoring candidate
//! wins. Scores are totals, not per-token averages, so a longer candidate
//! pays for every extra token; ties break toward the lowest index.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::Vocabulary;
use crate::error::{Result, RmnError};
use crate::model::ModelStack;
use crate::util::write_atomic;

pub const BLANK_MARKER: &str = "___";
pub const CANDIDATES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionItem {
    pub id: String,
    /// Sentence tokens containing exactly one blank marker.
    pub tokens: Vec<String>,
    /// Five candidate token sequences (multi-token candidates allowed).
    pub candidates: Vec<Vec<String>>,
    /// Gold candidate index, 0-4.
    pub gold: usize,
}

impl CompletionItem {
    fn blank_index(&self) -> Result<usize> {
        let blanks: Vec<usize> = self
            .tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| *t == BLANK_MARKER)
            .map(|(i, _)| i)
            .collect();
        match blanks.as_slice() {
            [one] => Ok(*one),
            _ => Err(RmnError::ItemsFile(format!(
                "item `{}` must contain exactly one `{BLANK_MARKER}`, found {}",
                self.id,
                blanks.len()
            ))),
        }
    }

    /// The sentence with candidate `idx` spliced into the blank.
    pub fn splice(&self, idx: usize) -> Result<Vec<String>> {
        let blank = self.blank_index()?;
        let mut out = Vec::with_capacity(self.tokens.len() + self.candidates[idx].len());
        out.extend_from_slice(&self.tokens[..blank]);
        out.extend_from_slice(&self.candidates[idx]);
        out.extend_from_slice(&self.tokens[blank + 1..]);
        Ok(out)
    }
}

/// Parse the tab-separated items format:
/// `id<TAB>sentence with ___<TAB>cand_a..cand_e<TAB>gold_letter`.
pub fn parse_items(text: &str) -> Result<Vec<CompletionItem>> {
    let mut items = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 + CANDIDATES {
            return Err(RmnError::ItemsFile(format!(
                "line {}: expected {} tab-separated columns, got {}",
                lineno + 1,
                3 + CANDIDATES,
                cols.len()
            )));
        }
        let gold = match cols[7] {
            "a" => 0,
            "b" => 1,
            "c" => 2,
            "d" => 3,
            "e" => 4,
            other => {
                return Err(RmnError::ItemsFile(format!(
                    "line {}: gold letter must be a-e, got `{other}`",
                    lineno + 1
                )))
            }
        };
        let candidates: Vec<Vec<String>> = cols[2..7]
            .iter()
            .map(|c| c.split_whitespace().map(|t| t.to_string()).collect())
            .collect();
        if candidates.iter().any(|c: &Vec<String>| c.is_empty()) {
            return Err(RmnError::ItemsFile(format!(
                "line {}: empty candidate",
                lineno + 1
            )));
        }
        let item = CompletionItem {
            id: cols[0].to_string(),
            tokens: cols[1].split_whitespace().map(|t| t.to_string()).collect(),
            candidates,
            gold,
        };
        item.blank_index()
            .map_err(|_| RmnError::ItemsFile(format!("line {}: bad blank marker", lineno + 1)))?;
        items.push(item);
    }
    Ok(items)
}

pub fn load_items(path: &Path) -> Result<Vec<CompletionItem>> {
    parse_items(&fs::read_to_string(path)?)
}

/// Total log-probability of each spliced sentence and the argmax index.
/// When `normalize` is set, scores divide by the predicted-token count
/// (off by default; whole-sentence probability is the reference behavior).
pub fn score_candidates_with_options(
    model: &ModelStack,
    vocab: &Vocabulary,
    item: &CompletionItem,
    normalize: bool,
) -> Result<(Vec<f64>, usize)> {
    let mut scores = Vec::with_capacity(CANDIDATES);
    for idx in 0..CANDIDATES {
        let tokens = item.splice(idx)?;
        let ids = vocab.encode_tokens(tokens.iter().map(|t| t.as_str()));
        let (nll, count, _) = model.sentence_nll(&ids)?;
        let mut score = -nll;
        if normalize {
            score /= count as f64;
        }
        scores.push(score);
    }
    let mut chosen = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[chosen] {
            chosen = i;
        }
    }
    Ok((scores, chosen))
}

pub fn score_candidates(
    model: &ModelStack,
    vocab: &Vocabulary,
    item: &CompletionItem,
) -> Result<(Vec<f64>, usize)> {
    score_candidates_with_options(model, vocab, item, false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemResult {
    pub id: String,
    pub scores: Vec<f64>,
    pub chosen: usize,
    pub gold: usize,
}

pub fn score_items(
    model: &ModelStack,
    vocab: &Vocabulary,
    items: &[CompletionItem],
) -> Result<Vec<ItemResult>> {
    items
        .iter()
        .map(|item| {
            let (scores, chosen) = score_candidates(model, vocab, item)?;
            Ok(ItemResult {
                id: item.id.clone(),
                scores,
                chosen,
                gold: item.gold,
            })
        })
        .collect()
}

/// Fraction of items whose chosen candidate is the gold one.
pub fn challenge_accuracy(
    model: &ModelStack,
    vocab: &Vocabulary,
    items: &[CompletionItem],
) -> Result<f64> {
    if items.is_empty() {
        return Err(RmnError::EmptyInput("challenge_accuracy"));
    }
    let results = score_items(model, vocab, items)?;
    Ok(accuracy_of(&results))
}

pub fn accuracy_of(results: &[ItemResult]) -> f64 {
    let correct = results.iter().filter(|r| r.chosen == r.gold).count();
    correct as f64 / results.len() as f64
}

const LETTERS: [char; CANDIDATES] = ['a', 'b', 'c', 'd', 'e'];

/// Per-item table plus a trailing accuracy line.
pub fn results_table(results: &[ItemResult]) -> String {
    let mut out = String::from("id\tchosen\tgold\tscore_a\tscore_b\tscore_c\tscore_d\tscore_e\n");
    for r in results {
        write!(out, "{}\t{}\t{}", r.id, LETTERS[r.chosen], LETTERS[r.gold]).unwrap();
        for s in &r.scores {
            write!(out, "\t{s:.6}").unwrap();
        }
        out.push('\n');
    }
    writeln!(out, "accuracy\t{:.6}", accuracy_of(results)).unwrap();
    out
}

pub fn write_results(results: &[ItemResult], path: &Path) -> Result<()> {
    write_atomic(path, results_table(results).as_bytes())
}
