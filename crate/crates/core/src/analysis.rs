//! Perplexity evaluation and attention analyses.
//!
//! Everything here consumes [`AttentionTrace`]s collected from a frozen
//! model: per-position attention averages, heatmap dumps for plotting,
//! extraction of (most-attended-word, word-to-predict) pairs that reach
//! far back, co-occurrence statistics of those pairs against the training
//! corpus, and a breakdown of attention by dependency relation against
//! externally supplied parses. Outputs are tab-separated text with header
//! rows, ready for external plotting; no rendering happens here.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::TokenId;
use crate::error::{Result, RmnError};
use crate::model::{AttentionTrace, ModelStack};
use crate::util::write_atomic;
use crate::data::Vocabulary;

pub const DEFAULT_HEATMAP_SAMPLES: usize = 100;
/// "More than six positions to the left."
pub const DEFAULT_MIN_DISTANCE: usize = 7;
/// Individual distance columns in the dependency table; farther positions
/// merge into one bin.
pub const DEFAULT_DEP_BINS: usize = 8;

/// Corpus perplexity: `exp(total NLL / total predicted tokens)`.
///
/// Sentence order cannot matter beyond float rounding; summation is
/// compensated so reorderings agree to ~1e-12.
pub fn perplexity(model: &ModelStack, corpus: &[Vec<TokenId>]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(RmnError::EmptyInput("perplexity"));
    }
    let mut nll_sum = 0.0;
    let mut comp = 0.0;
    let mut tokens = 0usize;
    for ids in corpus {
        let (nll, count, _) = model.sentence_nll(ids)?;
        let y = nll - comp;
        let t = nll_sum + y;
        comp = (t - nll_sum) - y;
        nll_sum = t;
        tokens += count;
    }
    Ok((nll_sum / tokens as f64).exp())
}

/// Run the model over a corpus and keep every attention trace.
pub fn collect_traces(model: &ModelStack, corpus: &[Vec<TokenId>]) -> Result<Vec<AttentionTrace>> {
    corpus
        .iter()
        .map(|ids| model.sentence_nll(ids).map(|(_, _, trace)| trace))
        .collect()
}

/// Mean attention per memory position, oldest to newest, right-aligned to
/// `width` slots. Each position averages only over the steps where that
/// position existed; positions never observed report 0.
pub fn avg_attention_by_position(traces: &[AttentionTrace], width: usize) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; width];
    let mut counts = vec![0usize; width];
    let mut any = false;
    for trace in traces {
        for row in &trace.rows {
            any = true;
            let k = row.probs.len();
            for (j, &p) in row.probs.iter().enumerate() {
                let pos = width - k + j;
                sums[pos] += p;
                counts[pos] += 1;
            }
        }
    }
    if !any {
        return Err(RmnError::EmptyInput("avg_attention_by_position"));
    }
    Ok(sums
        .iter()
        .zip(counts.iter())
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect())
}

/// Sample `sample_count` traced steps uniformly and write one row each:
/// sentence index, step, the slice word ids, then `width` attention columns
/// right-aligned with missing slots left empty.
pub fn dump_heatmap(
    traces: &[AttentionTrace],
    width: usize,
    sample_count: usize,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let mut steps: Vec<(usize, usize)> = Vec::new();
    for (si, trace) in traces.iter().enumerate() {
        for ri in 0..trace.rows.len() {
            steps.push((si, ri));
        }
    }
    if sample_count > steps.len() {
        return Err(RmnError::InvalidArgument {
            what: "dump_heatmap",
            why: format!(
                "requested {sample_count} samples but only {} steps were traced",
                steps.len()
            ),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    steps.shuffle(&mut rng);
    let mut chosen: Vec<(usize, usize)> = steps.into_iter().take(sample_count).collect();
    chosen.sort_unstable();

    let mut out = String::from("sentence\tstep\twords");
    for k in 1..=width {
        write!(out, "\tpos_{k}").unwrap();
    }
    out.push('\n');
    for (si, ri) in chosen {
        let row = &traces[si].rows[ri];
        let words = row
            .word_ids
            .iter()
            .map(|id| id.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        write!(out, "{si}\t{}\t{words}", row.t).unwrap();
        let k = row.probs.len();
        for _ in 0..width.saturating_sub(k) {
            out.push('\t');
        }
        for p in &row.probs {
            write!(out, "\t{p:.6}").unwrap();
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// A step whose attention argmax landed far behind the prediction target.
#[derive(Debug, Clone, PartialEq)]
pub struct DistantPair {
    pub attended_word: String,
    pub predicted_word: String,
    pub attended_id: TokenId,
    pub predicted_id: TokenId,
    /// Positions between the attended word and the prediction target.
    pub distance: usize,
    pub sentence: usize,
    pub t: usize,
}

/// Extract one pair per traced step whose argmax-attended word sits at
/// least `min_distance` positions left of the prediction target. Argmax
/// ties break toward the most recent slot.
pub fn distant_pairs(
    traces: &[AttentionTrace],
    vocab: &Vocabulary,
    min_distance: usize,
) -> Vec<DistantPair> {
    let mut pairs = Vec::new();
    for (si, trace) in traces.iter().enumerate() {
        for row in &trace.rows {
            let slot = row.argmax_slot();
            let attended_pos = row.positions[slot];
            let target_pos = row.t + 1;
            if attended_pos >= target_pos {
                continue; // future slot of a bidirectional slice
            }
            let distance = target_pos - attended_pos;
            if distance < min_distance {
                continue;
            }
            let attended_id = row.word_ids[slot];
            let predicted_id = trace.sentence[row.t];
            pairs.push(DistantPair {
                attended_word: vocab.token(attended_id).to_string(),
                predicted_word: vocab.token(predicted_id).to_string(),
                attended_id,
                predicted_id,
                distance,
                sentence: si,
                t: row.t,
            });
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceRow {
    pub distance: usize,
    pub pairs: usize,
    pub mean_frequency: f64,
}

/// Count, for every extracted pair, how often its attended word is followed
/// by its predicted word within `window` positions in the same training
/// sentence (any gap up to the window), then report the mean count per
/// observed pair distance. One row per distance in `min_distance..=window`;
/// an empty pair list yields an empty table.
pub fn cooccurrence_stats(
    pairs: &[DistantPair],
    train_corpus: &[Vec<TokenId>],
    window: usize,
    min_distance: usize,
) -> Vec<CooccurrenceRow> {
    if pairs.is_empty() {
        return Vec::new();
    }
    let mut counts: HashMap<(TokenId, TokenId), u64> = HashMap::new();
    for ids in train_corpus {
        for i in 0..ids.len() {
            for j in (i + 1)..ids.len().min(i + window + 1) {
                *counts.entry((ids[i], ids[j])).or_insert(0) += 1;
            }
        }
    }
    let mut rows = Vec::new();
    for d in min_distance..=window {
        let group: Vec<u64> = pairs
            .iter()
            .filter(|p| p.distance == d)
            .map(|p| counts.get(&(p.attended_id, p.predicted_id)).copied().unwrap_or(0))
            .collect();
        let mean = if group.is_empty() {
            0.0
        } else {
            group.iter().sum::<u64>() as f64 / group.len() as f64
        };
        rows.push(CooccurrenceRow {
            distance: d,
            pairs: group.len(),
            mean_frequency: mean,
        });
    }
    rows
}

pub fn write_cooccurrence_table(rows: &[CooccurrenceRow], path: &Path) -> Result<()> {
    let mut out = String::from("distance\tpairs\tmean_frequency\n");
    for r in rows {
        writeln!(out, "{}\t{}\t{:.6}", r.distance, r.pairs, r.mean_frequency).unwrap();
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_distant_pairs(pairs: &[DistantPair], path: &Path) -> Result<()> {
    let mut out = String::from("sentence\tstep\tattended\tpredicted\tdistance\n");
    for p in pairs {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            p.sentence, p.t, p.attended_word, p.predicted_word, p.distance
        )
        .unwrap();
    }
    write_atomic(path, out.as_bytes())
}

/// One dependency-parsed sentence: per token, a 1-based head index
/// (0 means root) and a relation label. Parses are inputs; nothing here
/// produces them, and they are never used for training.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSentence {
    pub tokens: Vec<String>,
    pub heads: Vec<usize>,
    pub relations: Vec<String>,
}

/// Read CoNLL-style blocks: tab-separated `index token head relation`
/// lines, sentences separated by blank lines.
pub fn parse_conll(text: &str) -> Result<Vec<ParsedSentence>> {
    let mut sentences = Vec::new();
    let mut current = ParsedSentence {
        tokens: Vec::new(),
        heads: Vec::new(),
        relations: Vec::new(),
    };
    let flush = |current: &mut ParsedSentence, sentences: &mut Vec<ParsedSentence>| -> Result<()> {
        if current.tokens.is_empty() {
            return Ok(());
        }
        let n = current.tokens.len();
        if current.heads.iter().any(|&h| h > n) {
            return Err(RmnError::ParseFile(format!(
                "head index out of range in sentence of {n} tokens"
            )));
        }
        sentences.push(std::mem::replace(
            current,
            ParsedSentence {
                tokens: Vec::new(),
                heads: Vec::new(),
                relations: Vec::new(),
            },
        ));
        Ok(())
    };
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            flush(&mut current, &mut sentences)?;
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(RmnError::ParseFile(format!(
                "line {}: expected 4 tab-separated columns, got {}",
                lineno + 1,
                cols.len()
            )));
        }
        let index: usize = cols[0]
            .parse()
            .map_err(|_| RmnError::ParseFile(format!("line {}: bad index", lineno + 1)))?;
        if index != current.tokens.len() + 1 {
            return Err(RmnError::ParseFile(format!(
                "line {}: token indices must be sequential from 1",
                lineno + 1
            )));
        }
        let head: usize = cols[2]
            .parse()
            .map_err(|_| RmnError::ParseFile(format!("line {}: bad head index", lineno + 1)))?;
        current.tokens.push(cols[1].to_string());
        current.heads.push(head);
        current.relations.push(cols[3].to_string());
    }
    flush(&mut current, &mut sentences)?;
    Ok(sentences)
}

pub const ALL_LABEL: &str = "ALL";
pub const NONE_LABEL: &str = "none";

/// Mean attention-at-argmax per (relation+direction, distance bin).
///
/// `->rel` means the prediction target is a dependent of the attended word;
/// `rel<-` means the attended word is a dependent of the target. Distances
/// `1..=bins` get individual columns; anything farther merges into a final
/// bin. The `ALL` row averages every step regardless of relation.
#[derive(Debug, Clone)]
pub struct DependencyBreakdown {
    pub bins: usize,
    sums: HashMap<String, Vec<f64>>,
    counts: HashMap<String, Vec<usize>>,
    pub skipped_sentences: usize,
}

impl DependencyBreakdown {
    pub fn columns(&self) -> usize {
        self.bins + 1
    }

    /// Sorted row labels: ALL first, `none` last.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self
            .sums
            .keys()
            .filter(|l| *l != ALL_LABEL && *l != NONE_LABEL)
            .cloned()
            .collect();
        labels.sort();
        let mut out = vec![ALL_LABEL.to_string()];
        out.extend(labels);
        if self.sums.contains_key(NONE_LABEL) {
            out.push(NONE_LABEL.to_string());
        }
        out
    }

    /// Mean for a cell, or `None` when no step fell into it.
    pub fn cell(&self, label: &str, bin: usize) -> Option<f64> {
        let counts = self.counts.get(label)?;
        if counts[bin] == 0 {
            return None;
        }
        Some(self.sums[label][bin] / counts[bin] as f64)
    }

    fn add(&mut self, label: &str, bin: usize, weight: f64) {
        let cols = self.columns();
        let sums = self
            .sums
            .entry(label.to_string())
            .or_insert_with(|| vec![0.0; cols]);
        sums[bin] += weight;
        let counts = self
            .counts
            .entry(label.to_string())
            .or_insert_with(|| vec![0; cols]);
        counts[bin] += 1;
    }
}

pub fn dependency_breakdown(
    traces: &[AttentionTrace],
    parses: &[ParsedSentence],
    bins: usize,
) -> Result<DependencyBreakdown> {
    if traces.len() != parses.len() {
        return Err(RmnError::ParseFile(format!(
            "{} traced sentences but {} parses",
            traces.len(),
            parses.len()
        )));
    }
    let mut breakdown = DependencyBreakdown {
        bins,
        sums: HashMap::new(),
        counts: HashMap::new(),
        skipped_sentences: 0,
    };
    for (trace, parse) in traces.iter().zip(parses.iter()) {
        let word_count = trace.sentence.len().saturating_sub(2);
        if parse.tokens.len() != word_count {
            breakdown.skipped_sentences += 1;
            continue;
        }
        for row in &trace.rows {
            let slot = row.argmax_slot();
            let attended_pos = row.positions[slot];
            let target_pos = row.t + 1;
            if attended_pos >= target_pos {
                continue;
            }
            let distance = target_pos - attended_pos;
            let bin = if distance <= bins { distance - 1 } else { bins };
            let weight = row.probs[slot];

            // sentence position p maps to parse token p-1 (1-based);
            // boundary markers sit outside the parse
            let attended_tok = attended_pos.checked_sub(1).filter(|&i| (1..=word_count).contains(&i));
            let target_tok = target_pos.checked_sub(1).filter(|&i| (1..=word_count).contains(&i));
            let label = match (attended_tok, target_tok) {
                (Some(a), Some(t)) => {
                    if parse.heads[t - 1] == a {
                        format!("->{}", parse.relations[t - 1])
                    } else if parse.heads[a - 1] == t {
                        format!("{}<-", parse.relations[a - 1])
                    } else {
                        NONE_LABEL.to_string()
                    }
                }
                _ => NONE_LABEL.to_string(),
            };
            breakdown.add(&label, bin, weight);
            breakdown.add(ALL_LABEL, bin, weight);
        }
    }
    Ok(breakdown)
}

pub fn write_dependency_table(breakdown: &DependencyBreakdown, path: &Path) -> Result<()> {
    let mut out = String::from("relation");
    for d in 1..=breakdown.bins {
        write!(out, "\t{d}").unwrap();
    }
    write!(out, "\t{}+", breakdown.bins + 1).unwrap();
    out.push('\n');
    for label in breakdown.labels() {
        out.push_str(&label);
        for bin in 0..breakdown.columns() {
            match breakdown.cell(&label, bin) {
                Some(v) => write!(out, "\t{v:.6}").unwrap(),
                None => out.push('\t'),
            }
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_avg_attention(avg: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("position\tmean_attention\n");
    for (i, v) in avg.iter().enumerate() {
        writeln!(out, "{}\t{:.6}", i + 1, v).unwrap();
    }
    write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{VocabLimit, BOS_ID, EOS_ID};
    use crate::memory::Composition;
    use crate::model::{LayerKind, MemoryDirection, ModelConfig, TraceRow};

    fn uniform_model(vocab_size: usize) -> ModelStack {
        let cfg = ModelConfig {
            vocab_size,
            dim: 8,
            memory_size: 4,
            layers: vec![LayerKind::Lstm, LayerKind::Mb],
            temporal: true,
            composition: Composition::Gated,
            direction: MemoryDirection::Unidirectional,
            dropout: 0.0,
            output_gate: crate::lstm::OutputGate::Tanh,
            gate_bias: false,
        };
        let mut model = ModelStack::new(cfg, 7).unwrap();
        for name in ["out.w", "out.b"] {
            let id = model.params.id_of(name).unwrap();
            model.params.get_mut(id).values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        model
    }

    fn trace_with_rows(sentence: Vec<TokenId>, rows: Vec<TraceRow>) -> AttentionTrace {
        AttentionTrace { sentence, rows }
    }

    fn row(t: usize, positions: Vec<usize>, probs: Vec<f64>) -> TraceRow {
        let word_ids = positions.iter().map(|&p| p as TokenId).collect();
        TraceRow {
            t,
            positions,
            word_ids,
            probs,
        }
    }

    #[test]
    fn uniform_model_perplexity_equals_vocab_size() {
        let model = uniform_model(10);
        let corpus = vec![
            vec![BOS_ID, 4, 5, EOS_ID],
            vec![BOS_ID, 6, EOS_ID],
            vec![BOS_ID, 3, 7, 8, EOS_ID],
        ];
        let ppl = perplexity(&model, &corpus).unwrap();
        assert!((ppl - 10.0).abs() < 1e-6, "{ppl}");
    }

    #[test]
    fn perplexity_matches_an_independent_aggregation() {
        let model = uniform_model(12); // any model works; uniform is cheap
        let corpus = vec![
            vec![BOS_ID, 4, 5, EOS_ID],
            vec![BOS_ID, 6, 9, 10, 3, EOS_ID],
            vec![BOS_ID, 11, EOS_ID],
        ];
        let ppl = perplexity(&model, &corpus).unwrap();
        let mut total = 0.0;
        let mut count = 0usize;
        for ids in &corpus {
            let (nll, c, _) = model.sentence_nll(ids).unwrap();
            total += nll;
            count += c;
        }
        assert!((ppl - (total / count as f64).exp()).abs() < 1e-12);
        assert!(ppl >= 1.0);
    }

    #[test]
    fn perplexity_is_order_invariant() {
        let model = uniform_model(12);
        let corpus = vec![
            vec![BOS_ID, 4, 5, EOS_ID],
            vec![BOS_ID, 6, 9, 10, 3, EOS_ID],
            vec![BOS_ID, 11, EOS_ID],
        ];
        let mut reversed = corpus.clone();
        reversed.reverse();
        let a = perplexity(&model, &corpus).unwrap();
        let b = perplexity(&model, &reversed).unwrap();
        assert!((a - b).abs() < 1e-9);
        assert!(perplexity(&model, &[]).is_err());
    }

    #[test]
    fn avg_attention_examples() {
        // one uniform row over 4 slots
        let traces = vec![trace_with_rows(
            vec![BOS_ID, 3, 4, 5, EOS_ID],
            vec![row(4, vec![1, 2, 3, 4], vec![0.25; 4])],
        )];
        let avg = avg_attention_by_position(&traces, 4).unwrap();
        assert_eq!(avg, vec![0.25; 4]);

        // full-width rows sum to one
        let traces = vec![trace_with_rows(
            vec![BOS_ID, 3, 4, 5, EOS_ID],
            vec![
                row(4, vec![1, 2, 3, 4], vec![0.1, 0.2, 0.3, 0.4]),
                row(5, vec![2, 3, 4, 5], vec![0.4, 0.3, 0.2, 0.1]),
            ],
        )];
        let avg = avg_attention_by_position(&traces, 4).unwrap();
        assert!((avg.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        // rows of lengths 1 and 2: newest slot averages over both rows,
        // second-newest over one
        let traces = vec![trace_with_rows(
            vec![BOS_ID, 3, EOS_ID],
            vec![row(1, vec![1], vec![1.0]), row(2, vec![1, 2], vec![0.3, 0.7])],
        )];
        let avg = avg_attention_by_position(&traces, 4).unwrap();
        assert_eq!(avg[3], (1.0 + 0.7) / 2.0);
        assert_eq!(avg[2], 0.3);
        assert_eq!(avg[0], 0.0);
        assert!(avg.iter().all(|&v| (0.0..=1.0).contains(&v)));

        assert!(avg_attention_by_position(&[], 4).is_err());
    }

    #[test]
    fn heatmap_rows_are_normalized_and_seed_stable() {
        let dir = tempfile::tempdir().unwrap();
        let traces = vec![trace_with_rows(
            vec![BOS_ID, 3, 4, 5, EOS_ID],
            vec![
                row(1, vec![1], vec![1.0]),
                row(2, vec![1, 2], vec![0.3, 0.7]),
                row(3, vec![1, 2, 3], vec![0.2, 0.5, 0.3]),
                row(4, vec![1, 2, 3, 4], vec![0.1, 0.2, 0.3, 0.4]),
            ],
        )];
        let path_a = dir.path().join("a.tsv");
        dump_heatmap(&traces, 4, 3, 11, &path_a).unwrap();
        let text = std::fs::read_to_string(&path_a).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("sentence\tstep\twords\tpos_1"));
        let mut data_rows = 0;
        for line in lines {
            data_rows += 1;
            let numeric: f64 = line
                .split('\t')
                .skip(3)
                .filter(|f| !f.is_empty())
                .map(|f| f.parse::<f64>().unwrap())
                .sum();
            assert!((numeric - 1.0).abs() < 1e-6, "row `{line}`");
        }
        assert_eq!(data_rows, 3);

        let path_b = dir.path().join("b.tsv");
        dump_heatmap(&traces, 4, 3, 11, &path_b).unwrap();
        assert_eq!(
            std::fs::read(&path_a).unwrap(),
            std::fs::read(&path_b).unwrap()
        );
        // more samples than steps is an error
        assert!(dump_heatmap(&traces, 4, 10, 11, &dir.path().join("c.tsv")).is_err());
    }

    fn pair_vocab() -> Vocabulary {
        Vocabulary::build(
            "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10".lines(),
            VocabLimit::All,
        )
        .unwrap()
    }

    #[test]
    fn distance_threshold_is_strictly_more_than_six() {
        let vocab = pair_vocab();
        // sentence long enough for a distance-7 step: t = 8 predicts
        // position 9; slot at position 2 sits 7 back
        let sentence: Vec<TokenId> = vec![BOS_ID, 3, 4, 5, 6, 7, 8, 9, 10, EOS_ID];
        let mut probs = vec![0.01; 8];
        probs[1] = 0.93; // slot for position 2
        let traces = vec![trace_with_rows(
            sentence.clone(),
            vec![row(8, (1..=8).collect(), probs.clone())],
        )];
        assert_eq!(distant_pairs(&traces, &vocab, DEFAULT_MIN_DISTANCE).len(), 1);

        // argmax at distance 6 is excluded under the default
        let mut probs6 = vec![0.01; 8];
        probs6[2] = 0.93; // position 3, distance 6
        let traces6 = vec![trace_with_rows(
            sentence,
            vec![row(8, (1..=8).collect(), probs6)],
        )];
        assert!(distant_pairs(&traces6, &vocab, DEFAULT_MIN_DISTANCE).is_empty());
    }

    #[test]
    fn exact_ties_break_to_the_most_recent_slot() {
        let vocab = pair_vocab();
        let sentence: Vec<TokenId> = vec![BOS_ID, 3, 4, 5, EOS_ID];
        let traces = vec![trace_with_rows(
            sentence,
            vec![row(3, vec![1, 2, 3], vec![1.0 / 3.0; 3])],
        )];
        // tie-broken to position 3, distance 1: excluded at the default
        assert!(distant_pairs(&traces, &vocab, DEFAULT_MIN_DISTANCE).is_empty());
        // with min_distance 1 exactly one pair per traced step
        let pairs = distant_pairs(&traces, &vocab, 1);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].distance, 1);
    }

    #[test]
    fn cooccurrence_counts_match_a_brute_force_scan() {
        let vocab = pair_vocab();
        let a = vocab.id("w1");
        let b = vocab.id("w2");
        // corpus: w1 appears before w2 (gap <= window) three times
        let train: Vec<Vec<TokenId>> = vec![
            vec![BOS_ID, a, 9, b, EOS_ID],
            vec![BOS_ID, a, b, EOS_ID],
            vec![BOS_ID, a, 9, 9, 9, b, EOS_ID],
            vec![BOS_ID, b, a, EOS_ID], // wrong order, ignored
        ];
        let pair = DistantPair {
            attended_word: "w1".into(),
            predicted_word: "w2".into(),
            attended_id: a,
            predicted_id: b,
            distance: 7,
            sentence: 0,
            t: 8,
        };
        let rows = cooccurrence_stats(&[pair], &train, 15, 7);
        assert_eq!(rows.len(), 9); // distances 7..=15
        assert_eq!(rows[0].distance, 7);
        assert_eq!(rows[0].pairs, 1);
        assert_eq!(rows[0].mean_frequency, 3.0);
        assert_eq!(rows[8].distance, 15);
        assert_eq!(rows[8].pairs, 0);

        assert!(cooccurrence_stats(&[], &train, 15, 7).is_empty());
    }

    #[test]
    fn conll_parsing_and_validation() {
        let text = "1\tthe\t2\tdet\n2\tcat\t3\tsubj\n3\tsat\t0\troot\n\n1\tgo\t0\troot\n";
        let parses = parse_conll(text).unwrap();
        assert_eq!(parses.len(), 2);
        assert_eq!(parses[0].tokens, vec!["the", "cat", "sat"]);
        assert_eq!(parses[0].heads, vec![2, 3, 0]);
        assert!(parse_conll("1\tx\t9\trel\n").is_err()); // head out of range
        assert!(parse_conll("2\tx\t0\trel\n").is_err()); // non-sequential
        assert!(parse_conll("1\tx\t0\n").is_err()); // missing column
    }

    #[test]
    fn dependency_cells_follow_the_definitions() {
        // parse: B (token 2) is a modifier of A (token 1)
        let parse = ParsedSentence {
            tokens: vec!["A".into(), "B".into()],
            heads: vec![0, 1],
            relations: vec!["root".into(), "mod".into()],
        };
        // step t=1 predicts position 2 (A): attended bos -> none bucket
        // step t=2 predicts position 3 (B): attended position 2 (A) -> "->mod"
        let sentence: Vec<TokenId> = vec![BOS_ID, 5, 6, EOS_ID];
        let traces = vec![trace_with_rows(
            sentence,
            vec![
                row(1, vec![1], vec![1.0]),
                row(2, vec![1, 2], vec![0.2, 0.8]),
            ],
        )];
        let b = dependency_breakdown(&traces, &[parse.clone()], 8).unwrap();
        assert_eq!(b.cell("->mod", 0), Some(0.8));
        assert_eq!(b.cell(NONE_LABEL, 0), Some(1.0));
        // ALL row is the position-wise mean over every step
        assert_eq!(b.cell(ALL_LABEL, 0), Some((1.0 + 0.8) / 2.0));
        assert_eq!(b.labels()[0], ALL_LABEL);
        assert_eq!(b.labels().last().unwrap(), NONE_LABEL);

        // reversed direction: attended word is a dependent of the target
        let parse_rev = ParsedSentence {
            tokens: vec!["A".into(), "B".into()],
            heads: vec![2, 0],
            relations: vec!["subj".into(), "root".into()],
        };
        let sentence: Vec<TokenId> = vec![BOS_ID, 5, 6, EOS_ID];
        let traces = vec![trace_with_rows(
            sentence,
            vec![row(2, vec![1, 2], vec![0.1, 0.9])],
        )];
        let b = dependency_breakdown(&traces, &[parse_rev], 8).unwrap();
        assert_eq!(b.cell("subj<-", 0), Some(0.9));

        // token-count mismatch is skipped and counted
        let short_parse = ParsedSentence {
            tokens: vec!["A".into()],
            heads: vec![0],
            relations: vec!["root".into()],
        };
        let sentence: Vec<TokenId> = vec![BOS_ID, 5, 6, EOS_ID];
        let traces = vec![trace_with_rows(
            sentence,
            vec![row(2, vec![1, 2], vec![0.5, 0.5])],
        )];
        let b = dependency_breakdown(&traces, &[short_parse], 8).unwrap();
        assert_eq!(b.skipped_sentences, 1);
        // all cell values are probabilities
        for label in b.labels() {
            for bin in 0..b.columns() {
                if let Some(v) = b.cell(&label, bin) {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn far_distances_merge_into_the_last_bin() {
        let parse = ParsedSentence {
            tokens: (1..=12).map(|i| format!("t{i}")).collect(),
            heads: vec![0; 12],
            relations: vec!["root".into(); 12],
        };
        let sentence: Vec<TokenId> = (0..14).map(|i| if i == 0 { BOS_ID } else { 3 }).collect();
        // t=11 predicts position 12; argmax at position 1 (bos), distance 11
        let mut probs = vec![0.0; 11];
        probs[0] = 1.0;
        let traces = vec![trace_with_rows(
            sentence,
            vec![row(11, (1..=11).collect(), probs)],
        )];
        let b = dependency_breakdown(&traces, &[parse], 8).unwrap();
        assert_eq!(b.cell(ALL_LABEL, 8), Some(1.0));
        assert_eq!(b.cell(NONE_LABEL, 8), Some(1.0));
    }
}
