//! Cross-module flows: checkpoint resume determinism, train/save/load/eval.

use rmn_core::checkpoint;
use rmn_core::data::{TokenId, BOS_ID, EOS_ID};
use rmn_core::lstm::OutputGate;
use rmn_core::memory::Composition;
use rmn_core::model::{LayerKind, MemoryDirection, ModelConfig, ModelStack};
use rmn_core::train::{train, train_from, no_hook, TrainConfig};

fn toy_corpus() -> Vec<Vec<TokenId>> {
    (0..12u32)
        .map(|i| {
            vec![
                BOS_ID,
                3 + (i % 7),
                3 + ((i * 3 + 1) % 7),
                3 + ((i * 5 + 2) % 7),
                EOS_ID,
            ]
        })
        .collect()
}

fn toy_model(seed: u64) -> ModelStack {
    let cfg = ModelConfig {
        vocab_size: 10,
        dim: 8,
        memory_size: 4,
        layers: vec![LayerKind::Lstm, LayerKind::Mb],
        temporal: true,
        composition: Composition::Gated,
        direction: MemoryDirection::Unidirectional,
        dropout: 0.0,
        output_gate: OutputGate::Tanh,
        gate_bias: false,
    };
    ModelStack::new(cfg, seed).unwrap()
}

#[test]
fn resuming_from_a_checkpoint_reproduces_the_straight_run() {
    let corpus = toy_corpus();
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 4,
        seed: 21,
        ..TrainConfig::default()
    };

    // straight run
    let mut straight = toy_model(21);
    let log_a = train(&mut straight, &corpus, Some(&corpus), &cfg, &mut no_hook()).unwrap();

    // run one epoch, checkpoint, reload, continue from epoch 2
    let mut first = toy_model(21);
    let one_epoch = TrainConfig { epochs: 1, ..cfg.clone() };
    train(&mut first, &corpus, Some(&corpus), &one_epoch, &mut no_hook()).unwrap();
    let ckpt = dir.path().join("resume.ckpt");
    checkpoint::save(&first, &[9u8; 32], &ckpt).unwrap();
    let (mut resumed, _) = checkpoint::load(&ckpt, None).unwrap();
    let log_b = train_from(&mut resumed, &corpus, Some(&corpus), &cfg, 2, &mut no_hook()).unwrap();

    // epoch 2 and 3 statistics match bitwise
    assert_eq!(log_b.len(), 2);
    for (a, b) in log_a[1..].iter().zip(log_b.iter()) {
        assert_eq!(a.epoch, b.epoch);
        assert_eq!(a.train_ppl.to_bits(), b.train_ppl.to_bits(), "epoch {}", a.epoch);
        assert_eq!(
            a.valid_ppl.unwrap().to_bits(),
            b.valid_ppl.unwrap().to_bits()
        );
    }

    // and so do the final parameters
    for (id_a, id_b) in straight.params.ids().zip(resumed.params.ids()) {
        assert_eq!(
            straight.params.get(id_a).values(),
            resumed.params.get(id_b).values(),
            "{}",
            straight.params.name(id_a)
        );
    }
}

#[test]
fn trained_model_survives_a_save_load_cycle_bitwise() {
    let corpus = toy_corpus();
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 4,
        seed: 5,
        ..TrainConfig::default()
    };
    let mut model = toy_model(5);
    train(&mut model, &corpus, None, &cfg, &mut no_hook()).unwrap();
    let ckpt = dir.path().join("m.ckpt");
    checkpoint::save(&model, &[0u8; 32], &ckpt).unwrap();
    let (loaded, _) = checkpoint::load(&ckpt, None).unwrap();
    for ids in &corpus {
        let (a, _, _) = model.sentence_nll(ids).unwrap();
        let (b, _, _) = loaded.sentence_nll(ids).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
