//! End-to-end checks against the real binary.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rmn_cli::{parse_args, Command as Cmd};

fn rmn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rmn"))
}

fn write_toy_corpus(dir: &Path) {
    // deterministic pseudo-random token lines, a few lengths
    let words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let mut state = 88172645463325252u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state as usize
    };
    let mut lines = Vec::new();
    for _ in 0..40 {
        let len = 3 + next() % 5;
        let line: Vec<&str> = (0..len).map(|_| words[next() % words.len()].as_str()).collect();
        lines.push(line.join(" "));
    }
    fs::write(dir.join("train.txt"), lines.join("\n") + "\n").unwrap();
    fs::write(dir.join("valid.txt"), lines[..10].join("\n") + "\n").unwrap();
}

fn write_config(dir: &Path) {
    fs::write(
        dir.join("toy.cfg"),
        "arch = rm\ndim = 16\nmemory_size = 5\ntemporal = on\ncompose = gated\n\
         epochs = 3\nbatch_size = 8\ninitial_lr = 1.0\nlr_halving_start_epoch = 3\nseed = 11\n",
    )
    .unwrap();
}

#[test]
fn arg_parsing_matches_the_contract() {
    let cli = parse_args([
        "rmn", "train", "--config", "c.cfg", "--corpus", "t.txt", "--out", "m.ckpt",
    ])
    .unwrap();
    match cli.command {
        Cmd::Train(args) => {
            assert_eq!(args.config, Path::new("c.cfg"));
            assert_eq!(args.seed, None);
        }
        other => panic!("wrong command {other:?}"),
    }

    // --seed overrides the config value
    let cli = parse_args([
        "rmn", "train", "--config", "c.cfg", "--corpus", "t.txt", "--out", "m.ckpt", "--seed", "7",
    ])
    .unwrap();
    match cli.command {
        Cmd::Train(args) => assert_eq!(args.seed, Some(7)),
        other => panic!("wrong command {other:?}"),
    }

    // missing required flag is a usage error
    assert!(parse_args(["rmn", "ppl", "--corpus", "t.txt"]).is_err());
    // unknown flags are rejected
    assert!(parse_args(["rmn", "ppl", "--model", "m", "--corpus", "c", "--bogus", "1"]).is_err());
}

#[test]
fn full_pipeline_runs_fast_and_reruns_byte_identically() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    write_toy_corpus(dir.path());
    write_config(dir.path());
    let p = |name: &str| dir.path().join(name).to_string_lossy().to_string();

    let train = |out: &str| {
        let status = rmn()
            .args([
                "train",
                "--config",
                &p("toy.cfg"),
                "--corpus",
                &p("train.txt"),
                "--valid",
                &p("valid.txt"),
                "--out",
                &p(out),
            ])
            .status()
            .unwrap();
        assert!(status.success());
    };
    train("m.ckpt");

    // perplexity prints a parseable value
    let out = rmn()
        .args(["ppl", "--model", &p("m.ckpt"), "--corpus", &p("valid.txt")])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let ppl: f64 = text.trim().split('\t').nth(1).unwrap().parse().unwrap();
    assert!(ppl > 1.0 && ppl < 50.0, "{ppl}");

    // attention dump exists and is non-trivial
    let status = rmn()
        .args([
            "dump-attention",
            "--model",
            &p("m.ckpt"),
            "--corpus",
            &p("valid.txt"),
            "--out",
            &p("heat.tsv"),
            "--samples",
            "20",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let heat = fs::read_to_string(p("heat.tsv")).unwrap();
    assert_eq!(heat.lines().count(), 21);

    // identical seeds give byte-identical checkpoints
    train("m2.ckpt");
    assert_eq!(
        fs::read(p("m.ckpt")).unwrap(),
        fs::read(p("m2.ckpt")).unwrap()
    );

    assert!(
        started.elapsed().as_secs() < 60,
        "pipeline took {:?}",
        started.elapsed()
    );
}

#[test]
fn uniform_checkpoint_reports_vocab_size_perplexity() {
    use rmn_core::checkpoint;
    use rmn_core::config::RunConfig;
    use rmn_core::data::{VocabLimit, Vocabulary};
    use rmn_core::model::ModelStack;

    let dir = tempfile::tempdir().unwrap();
    // 7 corpus tokens + 3 reserved = |V| = 10
    let corpus_text = "a b c d e f g\na b c\n";
    fs::write(dir.path().join("test.txt"), corpus_text).unwrap();
    let vocab = Vocabulary::build(corpus_text.lines(), VocabLimit::All).unwrap();
    assert_eq!(vocab.size(), 10);
    vocab.save(&dir.path().join("m.ckpt.vocab")).unwrap();

    let mut cfg = RunConfig::default();
    cfg.dim = 8;
    cfg.memory_size = 4;
    let mut model = ModelStack::new(cfg.to_model_config(vocab.size()), 1).unwrap();
    for name in ["out.w", "out.b"] {
        let id = model.params.id_of(name).unwrap();
        model
            .params
            .get_mut(id)
            .values_mut()
            .iter_mut()
            .for_each(|v| *v = 0.0);
    }
    checkpoint::save(&model, &vocab.content_hash(), &dir.path().join("m.ckpt")).unwrap();

    let out = rmn()
        .args([
            "ppl",
            "--model",
            &dir.path().join("m.ckpt").to_string_lossy(),
            "--corpus",
            &dir.path().join("test.txt").to_string_lossy(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.trim(), "perplexity\t10.000000");
}

#[test]
fn runtime_failures_exit_nonzero_with_a_message() {
    let out = rmn()
        .args(["ppl", "--model", "/nonexistent/m.ckpt", "--corpus", "/nonexistent/c.txt"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = rmn().args(["bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
