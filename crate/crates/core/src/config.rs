//! Flat key=value run configuration.
//!
//! One file drives a whole run: architecture, dimensions, memory settings,
//! and every training field by name. `#` starts a comment. Command-line
//! flags override file values; the effective model configuration is echoed
//! into each checkpoint and validated on load.

use std::fs;
use std::path::Path;

use crate::data::DEFAULT_MAX_SENTENCE_LEN;
use crate::error::{Result, RmnError};
use crate::lstm::OutputGate;
use crate::memory::Composition;
use crate::model::{arch_to_string, parse_arch, LayerKind, MemoryDirection, ModelConfig};
use crate::train::TrainConfig;

pub fn parse_on_off(value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        other => Err(RmnError::Config(format!("expected on|off, got `{other}`"))),
    }
}

pub fn on_off(v: bool) -> &'static str {
    if v {
        "on"
    } else {
        "off"
    }
}

pub fn parse_composition(value: &str) -> Result<Composition> {
    match value {
        "linear" => Ok(Composition::Linear),
        "gated" => Ok(Composition::Gated),
        other => Err(RmnError::Config(format!(
            "expected linear|gated, got `{other}`"
        ))),
    }
}

pub fn composition_str(c: Composition) -> &'static str {
    match c {
        Composition::Linear => "linear",
        Composition::Gated => "gated",
    }
}

pub fn parse_direction(value: &str) -> Result<MemoryDirection> {
    match value {
        "uni" => Ok(MemoryDirection::Unidirectional),
        "bi" => Ok(MemoryDirection::Bidirectional),
        other => Err(RmnError::Config(format!("expected uni|bi, got `{other}`"))),
    }
}

pub fn direction_str(d: MemoryDirection) -> &'static str {
    match d {
        MemoryDirection::Unidirectional => "uni",
        MemoryDirection::Bidirectional => "bi",
    }
}

pub fn parse_output_gate(value: &str) -> Result<OutputGate> {
    match value {
        "tanh" => Ok(OutputGate::Tanh),
        "sigmoid" => Ok(OutputGate::Sigmoid),
        other => Err(RmnError::Config(format!(
            "expected tanh|sigmoid, got `{other}`"
        ))),
    }
}

pub fn output_gate_str(g: OutputGate) -> &'static str {
    match g {
        OutputGate::Tanh => "tanh",
        OutputGate::Sigmoid => "sigmoid",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub arch: Vec<LayerKind>,
    pub dim: usize,
    pub memory_size: usize,
    pub temporal: bool,
    pub compose: Composition,
    pub direction: MemoryDirection,
    pub output_gate: OutputGate,
    pub gate_bias: bool,
    pub train: TrainConfig,
    pub max_sentence_len: usize,
    /// 0 means unlimited.
    pub vocab_max_size: usize,
    pub vocab_min_count: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            arch: parse_arch("rm").unwrap(),
            dim: 128,
            memory_size: 15,
            temporal: true,
            compose: Composition::Gated,
            direction: MemoryDirection::Unidirectional,
            output_gate: OutputGate::Tanh,
            gate_bias: false,
            train: TrainConfig::default(),
            max_sentence_len: DEFAULT_MAX_SENTENCE_LEN,
            vocab_max_size: 0,
            vocab_min_count: 1,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                RmnError::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value).map_err(|e| {
                RmnError::Config(format!("line {}: {e}", lineno + 1))
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        RunConfig::parse(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| RmnError::Config(format!("bad value `{value}` for {key}")))
        }
        match key {
            "arch" => self.arch = parse_arch(value)?,
            "dim" => self.dim = num(key, value)?,
            "memory_size" => self.memory_size = num(key, value)?,
            "temporal" => self.temporal = parse_on_off(value)?,
            "compose" => self.compose = parse_composition(value)?,
            "direction" => self.direction = parse_direction(value)?,
            "output_gate" => self.output_gate = parse_output_gate(value)?,
            "gate_bias" => self.gate_bias = parse_on_off(value)?,
            "dropout" => self.train.dropout = num(key, value)?,
            "epochs" => self.train.epochs = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "initial_lr" => self.train.initial_lr = num(key, value)?,
            "lr_halving_start_epoch" => self.train.lr_halving_start_epoch = num(key, value)?,
            "clip_threshold" => self.train.clip_threshold = num(key, value)?,
            "seed" => self.train.seed = num(key, value)?,
            "max_sentence_len" => self.max_sentence_len = num(key, value)?,
            "vocab_max_size" => self.vocab_max_size = num(key, value)?,
            "vocab_min_count" => self.vocab_min_count = num(key, value)?,
            other => return Err(RmnError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn to_model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            dim: self.dim,
            memory_size: self.memory_size,
            layers: self.arch.clone(),
            temporal: self.temporal,
            composition: self.compose,
            direction: self.direction,
            dropout: self.train.dropout,
            output_gate: self.output_gate,
            gate_bias: self.gate_bias,
        }
    }

    pub fn vocab_limit(&self) -> crate::data::VocabLimit {
        use crate::data::VocabLimit;
        if self.vocab_max_size > 0 {
            VocabLimit::MaxSize(self.vocab_max_size)
        } else if self.vocab_min_count > 1 {
            VocabLimit::MinCount(self.vocab_min_count)
        } else {
            VocabLimit::All
        }
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dim: Option<usize>,
    pub memory_size: Option<usize>,
    pub arch: Option<String>,
    pub temporal: Option<bool>,
    pub compose: Option<Composition>,
    pub direction: Option<MemoryDirection>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(dim) = self.dim {
            cfg.dim = dim;
        }
        if let Some(n) = self.memory_size {
            cfg.memory_size = n;
        }
        if let Some(arch) = &self.arch {
            cfg.arch = parse_arch(arch)?;
        }
        if let Some(t) = self.temporal {
            cfg.temporal = t;
        }
        if let Some(c) = self.compose {
            cfg.compose = c;
        }
        if let Some(d) = self.direction {
            cfg.direction = d;
        }
        Ok(())
    }
}

/// Canonical text block describing a model configuration; embedded in
/// checkpoints and compared on load.
pub fn model_config_to_text(cfg: &ModelConfig) -> String {
    format!(
        "arch={}\ndim={}\nmemory_size={}\ntemporal={}\ncompose={}\ndirection={}\ndropout={}\noutput_gate={}\ngate_bias={}\nvocab_size={}\n",
        arch_to_string(&cfg.layers),
        cfg.dim,
        cfg.memory_size,
        on_off(cfg.temporal),
        composition_str(cfg.composition),
        direction_str(cfg.direction),
        cfg.dropout,
        output_gate_str(cfg.output_gate),
        on_off(cfg.gate_bias),
        cfg.vocab_size,
    )
}

pub fn model_config_from_text(text: &str) -> Result<ModelConfig> {
    let mut cfg = ModelConfig {
        vocab_size: 0,
        dim: 0,
        memory_size: 0,
        layers: Vec::new(),
        temporal: false,
        composition: Composition::Linear,
        direction: MemoryDirection::Unidirectional,
        dropout: 0.0,
        output_gate: OutputGate::Tanh,
        gate_bias: false,
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| RmnError::Checkpoint(format!("bad config line `{line}`")))?;
        match key {
            "arch" => cfg.layers = parse_arch(value)?,
            "dim" => cfg.dim = value.parse().map_err(|_| bad(key, value))?,
            "memory_size" => cfg.memory_size = value.parse().map_err(|_| bad(key, value))?,
            "temporal" => cfg.temporal = parse_on_off(value)?,
            "compose" => cfg.composition = parse_composition(value)?,
            "direction" => cfg.direction = parse_direction(value)?,
            "dropout" => cfg.dropout = value.parse().map_err(|_| bad(key, value))?,
            "output_gate" => cfg.output_gate = parse_output_gate(value)?,
            "gate_bias" => cfg.gate_bias = parse_on_off(value)?,
            "vocab_size" => cfg.vocab_size = value.parse().map_err(|_| bad(key, value))?,
            other => return Err(RmnError::Checkpoint(format!("unknown config key `{other}`"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn bad(key: &str, value: &str) -> RmnError {
    RmnError::Checkpoint(format!("bad value `{value}` for {key}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trips_defaults_and_overrides() {
        let text = "\
# toy run
arch = rm
dim = 32
memory_size = 15
temporal = on
compose = gated
direction = uni
dropout = 0.3
epochs = 15
batch_size = 20
initial_lr = 1.0
lr_halving_start_epoch = 5
clip_threshold = 5.0
seed = 7
max_sentence_len = 150
vocab_max_size = 0
vocab_min_count = 1
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.dim, 32);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.train.dropout, 0.3);
        assert_eq!(cfg.arch.len(), 2);

        let overrides = Overrides {
            seed: Some(99),
            dim: Some(16),
            arch: Some("rmr".into()),
            ..Overrides::default()
        };
        let mut cfg = cfg;
        overrides.apply(&mut cfg).unwrap();
        assert_eq!(cfg.train.seed, 99);
        assert_eq!(cfg.dim, 16);
        assert_eq!(cfg.arch.len(), 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("dim").is_err());
    }

    #[test]
    fn model_config_text_round_trips() {
        let cfg = RunConfig::default().to_model_config(123);
        let text = model_config_to_text(&cfg);
        let back = model_config_from_text(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
