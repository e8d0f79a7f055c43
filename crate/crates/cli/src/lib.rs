//! Subcommand front door.
//!
//! `train` builds a vocabulary from the corpus, trains per the config file
//! (flags override file values), writes a checkpoint per epoch plus a
//! tab-separated log, and keeps the best-validation checkpoint at `--out`.
//! The sibling files `<out>.vocab` and `<out>.log` hold the vocabulary and
//! the log. Evaluation subcommands load `<model>.vocab` next to the
//! checkpoint unless `--vocab` points elsewhere; the checkpoint's embedded
//! vocabulary hash must match. All artifacts are written atomically.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rmn_core::analysis;
use rmn_core::checkpoint;
use rmn_core::completion;
use rmn_core::config::{
    parse_composition, parse_direction, parse_on_off, Overrides, RunConfig,
};
use rmn_core::data::{encode_corpus, read_lines, Vocabulary};
use rmn_core::model::ModelStack;
use rmn_core::train::{train, EpochStats, TrainControl};
use rmn_core::util::write_atomic;

#[derive(Debug, Parser)]
#[command(name = "rmn", version, about = "Recurrent memory language model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a tokenized corpus
    Train(TrainArgs),
    /// Report test-set perplexity of a checkpoint
    Ppl(PplArgs),
    /// Write sampled attention rows for heatmap plotting
    DumpAttention(DumpAttentionArgs),
    /// Extract distant attention pairs and their co-occurrence statistics
    AnalyzePairs(AnalyzePairsArgs),
    /// Break attention down by dependency relation against given parses
    AnalyzeDeps(AnalyzeDepsArgs),
    /// Score sentence-completion items
    Complete(CompleteArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub memory_size: Option<usize>,
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long, value_parser = ["on", "off"])]
    pub temporal: Option<String>,
    #[arg(long, value_parser = ["linear", "gated"])]
    pub compose: Option<String>,
    #[arg(long, value_parser = ["uni", "bi"])]
    pub direction: Option<String>,
}

#[derive(Debug, Args)]
pub struct PplArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DumpAttentionArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = analysis::DEFAULT_HEATMAP_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write the per-position attention averages here
    #[arg(long)]
    pub avg_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzePairsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Training corpus used for co-occurrence counting
    #[arg(long)]
    pub train_corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = analysis::DEFAULT_MIN_DISTANCE)]
    pub min_distance: usize,
    /// Also write the raw extracted pairs here
    #[arg(long)]
    pub pairs_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeDepsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub parses: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompleteArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

/// Parse argv; clap renders usage errors itself.
pub fn parse_args<I, T>(argv: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(argv)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn load_model_and_vocab(
    model_path: &Path,
    vocab_path: Option<&Path>,
) -> Result<(ModelStack, Vocabulary)> {
    let vocab_path = vocab_path
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| sibling(model_path, ".vocab"));
    let vocab = Vocabulary::load(&vocab_path)
        .with_context(|| format!("loading vocabulary {}", vocab_path.display()))?;
    let (model, _) = checkpoint::load(model_path, Some(&vocab.content_hash()))
        .with_context(|| format!("loading checkpoint {}", model_path.display()))?;
    Ok((model, vocab))
}

fn load_and_encode(path: &Path, vocab: &Vocabulary, max_len: usize) -> Result<Vec<Vec<u32>>> {
    let corpus = rmn_core::data::load_corpus(path, vocab, max_len)
        .with_context(|| format!("loading corpus {}", path.display()))?;
    if corpus.skipped_empty + corpus.skipped_long > 0 {
        eprintln!(
            "skipped {} empty and {} over-length sentences in {}",
            corpus.skipped_empty,
            corpus.skipped_long,
            path.display()
        );
    }
    Ok(corpus.sentences)
}

fn log_line(stats: &EpochStats) -> String {
    let valid = match stats.valid_ppl {
        Some(v) => format!("{v:.6}"),
        None => "-".into(),
    };
    format!(
        "{}\t{}\t{:.6}\t{}\t{:.3}\n",
        stats.epoch, stats.lr, stats.train_ppl, valid, stats.seconds
    )
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)
        .with_context(|| format!("loading config {}", args.config.display()))?;
    let overrides = Overrides {
        seed: args.seed,
        dim: args.dim,
        memory_size: args.memory_size,
        arch: args.arch.clone(),
        temporal: args.temporal.as_deref().map(parse_on_off).transpose()?,
        compose: args.compose.as_deref().map(parse_composition).transpose()?,
        direction: args.direction.as_deref().map(parse_direction).transpose()?,
    };
    overrides.apply(&mut cfg)?;

    let lines = read_lines(&args.corpus)?;
    let vocab = Vocabulary::build(lines.iter().map(|l| l.as_str()), cfg.vocab_limit())?;
    let vocab_path = sibling(&args.out, ".vocab");
    vocab.save(&vocab_path)?;
    let vocab_hash = vocab.content_hash();

    let train_sents = encode_corpus(&lines, &vocab, cfg.max_sentence_len);
    if train_sents.skipped_empty + train_sents.skipped_long > 0 {
        eprintln!(
            "skipped {} empty and {} over-length training sentences",
            train_sents.skipped_empty, train_sents.skipped_long
        );
    }
    let valid_sents = match &args.valid {
        Some(path) => Some(load_and_encode(path, &vocab, cfg.max_sentence_len)?),
        None => None,
    };

    let mut model = ModelStack::new(cfg.to_model_config(vocab.size()), cfg.train.seed)?;
    eprintln!(
        "training {} parameters on {} sentences (|V| = {})",
        model.param_count(),
        train_sents.sentences.len(),
        vocab.size()
    );

    let log_path = sibling(&args.out, ".log");
    fs::write(&log_path, "epoch\tlr\ttrain_ppl\tvalid_ppl\tseconds\n")?;
    let mut best: Option<(f64, PathBuf)> = None;
    let mut hook = |stats: &EpochStats, model: &ModelStack| {
        let epoch_path = sibling(&args.out, &format!(".epoch{:02}", stats.epoch));
        checkpoint::save(model, &vocab_hash, &epoch_path)?;
        let mut log = fs::OpenOptions::new().append(true).open(&log_path)?;
        use std::io::Write;
        log.write_all(log_line(stats).as_bytes())?;
        let score = stats.valid_ppl.unwrap_or(stats.train_ppl);
        if best.as_ref().map_or(true, |(b, _)| score < *b) {
            best = Some((score, epoch_path));
        }
        Ok(TrainControl::Continue)
    };
    let log = train(
        &mut model,
        &train_sents.sentences,
        valid_sents.as_deref(),
        &cfg.train,
        &mut hook,
    )?;
    let (_, best_path) = best.expect("at least one epoch ran");
    fs::copy(&best_path, &args.out)?;
    let last = log.last().expect("at least one epoch ran");
    println!(
        "trained {} epochs; final train ppl {:.6}; best checkpoint {}",
        log.len(),
        last.train_ppl,
        args.out.display()
    );
    Ok(())
}

fn cmd_ppl(args: &PplArgs) -> Result<()> {
    let (model, vocab) = load_model_and_vocab(&args.model, args.vocab.as_deref())?;
    let corpus = load_and_encode(&args.corpus, &vocab, usize::MAX)?;
    let ppl = analysis::perplexity(&model, &corpus)?;
    println!("perplexity\t{ppl:.6}");
    Ok(())
}

fn cmd_dump_attention(args: &DumpAttentionArgs) -> Result<()> {
    let (model, vocab) = load_model_and_vocab(&args.model, args.vocab.as_deref())?;
    if !model.cfg.has_mb() {
        bail!("this checkpoint has no memory block; nothing to trace");
    }
    let corpus = load_and_encode(&args.corpus, &vocab, usize::MAX)?;
    let traces = analysis::collect_traces(&model, &corpus)?;
    let width = model.cfg.memory_width();
    analysis::dump_heatmap(&traces, width, args.samples, args.seed, &args.out)?;
    println!("wrote {} sampled rows to {}", args.samples, args.out.display());
    if let Some(avg_out) = &args.avg_out {
        let avg = analysis::avg_attention_by_position(&traces, width)?;
        analysis::write_avg_attention(&avg, avg_out)?;
        println!("wrote position averages to {}", avg_out.display());
    }
    Ok(())
}

fn cmd_analyze_pairs(args: &AnalyzePairsArgs) -> Result<()> {
    let (model, vocab) = load_model_and_vocab(&args.model, args.vocab.as_deref())?;
    if !model.cfg.has_mb() {
        bail!("this checkpoint has no memory block; nothing to analyze");
    }
    let corpus = load_and_encode(&args.corpus, &vocab, usize::MAX)?;
    let traces = analysis::collect_traces(&model, &corpus)?;
    let pairs = analysis::distant_pairs(&traces, &vocab, args.min_distance);
    let train_sents = load_and_encode(&args.train_corpus, &vocab, usize::MAX)?;
    let window = model.cfg.memory_size;
    let rows = analysis::cooccurrence_stats(&pairs, &train_sents, window, args.min_distance);
    analysis::write_cooccurrence_table(&rows, &args.out)?;
    println!(
        "extracted {} pairs at distance >= {}; wrote {}",
        pairs.len(),
        args.min_distance,
        args.out.display()
    );
    if let Some(pairs_out) = &args.pairs_out {
        analysis::write_distant_pairs(&pairs, pairs_out)?;
        println!("wrote raw pairs to {}", pairs_out.display());
    }
    Ok(())
}

fn cmd_analyze_deps(args: &AnalyzeDepsArgs) -> Result<()> {
    let (model, vocab) = load_model_and_vocab(&args.model, args.vocab.as_deref())?;
    if !model.cfg.has_mb() {
        bail!("this checkpoint has no memory block; nothing to analyze");
    }
    let corpus = load_and_encode(&args.corpus, &vocab, usize::MAX)?;
    let traces = analysis::collect_traces(&model, &corpus)?;
    let parses = analysis::parse_conll(&fs::read_to_string(&args.parses)?)?;
    let breakdown = analysis::dependency_breakdown(&traces, &parses, analysis::DEFAULT_DEP_BINS)?;
    if breakdown.skipped_sentences > 0 {
        eprintln!(
            "skipped {} sentences whose parses did not align",
            breakdown.skipped_sentences
        );
    }
    analysis::write_dependency_table(&breakdown, &args.out)?;
    println!("wrote dependency breakdown to {}", args.out.display());
    Ok(())
}

fn cmd_complete(args: &CompleteArgs) -> Result<()> {
    let (model, vocab) = load_model_and_vocab(&args.model, args.vocab.as_deref())?;
    let items = completion::load_items(&args.items)?;
    if items.is_empty() {
        bail!("no items in {}", args.items.display());
    }
    let results = completion::score_items(&model, &vocab, &items)?;
    let table = completion::results_table(&results);
    print!("{table}");
    if let Some(out) = &args.out {
        write_atomic(out, table.as_bytes())?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Ppl(args) => cmd_ppl(args),
        Command::DumpAttention(args) => cmd_dump_attention(args),
        Command::AnalyzePairs(args) => cmd_analyze_pairs(args),
        Command::AnalyzeDeps(args) => cmd_analyze_deps(args),
        Command::Complete(args) => cmd_complete(args),
    }
}
