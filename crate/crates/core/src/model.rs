//! Model assembly: embeddings, stacked layers, output softmax.
//!
//! A stack is an ordered list of layers, each either an LSTM or the memory
//! block, fed by a shared input embedding table and topped by a projection
//! to vocabulary logits. The common shapes:
//!
//! * `lstm`            - plain recurrent baseline (any depth)
//! * `lstm,mb`         - memory block on top of one LSTM layer
//! * `lstm,mb,lstm`    - a further LSTM above the block carries its outputs
//!                       recurrently (the block itself has no connection
//!                       between time steps)
//! * `lstm,lstm,lstm,mb` - the deeper completion configuration
//!
//! Attention distributions are recorded per step into an [`AttentionTrace`];
//! these traces feed every analysis in [`crate::analysis`].

use rand_chacha::ChaCha8Rng;

use crate::data::TokenId;
use crate::error::{Result, RmnError};
use crate::lstm::{dropout_mask, LstmCell, LstmState, OutputGate};
use crate::memory::{build_bidirectional_memory, gather_memory, Composition, MemoryBlock, MemorySlice};
use crate::numeric::{softmax_stable, NodeId, ParamId, ParamRegistry, Tape, Tensor};
use crate::rng::init_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Lstm,
    Mb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryDirection {
    Unidirectional,
    Bidirectional,
}

/// Parse an architecture string: a shorthand name (`lstm`, `lstm-2`,
/// `lstm-3`, `rm`, `rmr`, `rm-3`) or an explicit comma list (`lstm,mb,lstm`).
pub fn parse_arch(s: &str) -> Result<Vec<LayerKind>> {
    let layers = match s {
        "lstm" => vec![LayerKind::Lstm],
        "lstm-2" => vec![LayerKind::Lstm; 2],
        "lstm-3" => vec![LayerKind::Lstm; 3],
        "rm" => vec![LayerKind::Lstm, LayerKind::Mb],
        "rmr" => vec![LayerKind::Lstm, LayerKind::Mb, LayerKind::Lstm],
        "rm-3" => vec![
            LayerKind::Lstm,
            LayerKind::Lstm,
            LayerKind::Lstm,
            LayerKind::Mb,
        ],
        list => {
            let mut layers = Vec::new();
            for part in list.split(',') {
                match part.trim() {
                    "lstm" => layers.push(LayerKind::Lstm),
                    "mb" => layers.push(LayerKind::Mb),
                    other => {
                        return Err(RmnError::Config(format!(
                            "unknown layer `{other}` in arch `{list}`"
                        )))
                    }
                }
            }
            layers
        }
    };
    Ok(layers)
}

/// Canonical comma-list form used in config echoes and checkpoints.
pub fn arch_to_string(layers: &[LayerKind]) -> String {
    layers
        .iter()
        .map(|l| match l {
            LayerKind::Lstm => "lstm",
            LayerKind::Mb => "mb",
        })
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub memory_size: usize,
    pub layers: Vec<LayerKind>,
    pub temporal: bool,
    pub composition: Composition,
    pub direction: MemoryDirection,
    pub dropout: f64,
    pub output_gate: OutputGate,
    pub gate_bias: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let mb_count = self.layers.iter().filter(|l| **l == LayerKind::Mb).count();
        if mb_count > 1 {
            return Err(RmnError::Config(
                "at most one memory-block layer is supported".into(),
            ));
        }
        if self.layers.is_empty() {
            return Err(RmnError::Config("layer list must not be empty".into()));
        }
        if self.vocab_size == 0 || self.dim == 0 {
            return Err(RmnError::Config("vocab size and dim must be positive".into()));
        }
        if mb_count == 1 && self.memory_size == 0 {
            return Err(RmnError::Config("memory size must be positive".into()));
        }
        if self.direction == MemoryDirection::Bidirectional && mb_count == 0 {
            return Err(RmnError::Config(
                "bidirectional memory requires a memory-block layer".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(RmnError::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn has_mb(&self) -> bool {
        self.layers.contains(&LayerKind::Mb)
    }

    /// Width of an attention row: the number of memory slots a full-length
    /// slice can hold.
    pub fn memory_width(&self) -> usize {
        match self.direction {
            MemoryDirection::Unidirectional => self.memory_size,
            MemoryDirection::Bidirectional => 2 * self.memory_size,
        }
    }
}

/// Attention recorded at one time step. `positions` are 1-based sentence
/// positions of the slice words, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub positions: Vec<usize>,
    pub word_ids: Vec<TokenId>,
    pub probs: Vec<f64>,
}

impl TraceRow {
    /// Index of the most-attended slot; ties go to the most recent slot.
    pub fn argmax_slot(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p >= self.probs[best] {
                best = k;
            }
        }
        best
    }
}

/// Per-sentence attention record.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub sentence: Vec<TokenId>,
    pub rows: Vec<TraceRow>,
}

enum Layer {
    Lstm(LstmCell),
    Mb(MemoryBlock),
}

pub struct ModelStack {
    pub cfg: ModelConfig,
    pub params: ParamRegistry,
    embed: ParamId,
    layers: Vec<Layer>,
    w_out: ParamId,
    b_out: ParamId,
}

/// Dropout context threaded through a training forward pass.
pub(crate) struct TrainCtx<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl ModelStack {
    /// Build and initialize a model. All parameters draw from the
    /// initialization stream of `seed` in registration order, so equal
    /// seeds give bitwise-equal models.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = init_rng(seed);
        let mut params = ParamRegistry::new();
        let embed = params.register(
            "embed",
            Tensor::uniform(cfg.vocab_size, cfg.dim, -crate::lstm::INIT_RANGE, crate::lstm::INIT_RANGE, &mut rng),
        )?;
        let mut layers = Vec::with_capacity(cfg.layers.len());
        let mut lstm_ordinal = 0;
        for kind in &cfg.layers {
            match kind {
                LayerKind::Lstm => {
                    let cell = LstmCell::init(
                        &mut params,
                        &format!("lstm{lstm_ordinal}"),
                        cfg.dim,
                        cfg.dim,
                        cfg.output_gate,
                        &mut rng,
                    )?;
                    lstm_ordinal += 1;
                    layers.push(Layer::Lstm(cell));
                }
                LayerKind::Mb => {
                    let temporal_rows = if cfg.temporal { cfg.memory_width() } else { 0 };
                    let mb = MemoryBlock::init(
                        &mut params,
                        "mb",
                        cfg.vocab_size,
                        cfg.dim,
                        cfg.memory_size,
                        temporal_rows,
                        cfg.composition,
                        cfg.gate_bias,
                        &mut rng,
                    )?;
                    layers.push(Layer::Mb(mb));
                }
            }
        }
        let w_out = params.register(
            "out.w",
            Tensor::uniform(cfg.vocab_size, cfg.dim, -crate::lstm::INIT_RANGE, crate::lstm::INIT_RANGE, &mut rng),
        )?;
        let b_out = params.register(
            "out.b",
            Tensor::uniform(cfg.vocab_size, 1, -crate::lstm::INIT_RANGE, crate::lstm::INIT_RANGE, &mut rng),
        )?;
        Ok(ModelStack {
            cfg,
            params,
            embed,
            layers,
            w_out,
            b_out,
        })
    }

    pub fn lstm_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, Layer::Lstm(_)))
            .count()
    }

    pub fn param_count(&self) -> usize {
        self.params.entry_count()
    }

    pub fn zero_states(&self) -> Vec<LstmState> {
        (0..self.lstm_layer_count())
            .map(|_| LstmState::zeros(self.cfg.dim))
            .collect()
    }

    fn memory_slice(&self, ids: &[TokenId], t: usize) -> Result<MemorySlice> {
        match self.cfg.direction {
            MemoryDirection::Unidirectional => gather_memory(ids, t, self.cfg.memory_size),
            MemoryDirection::Bidirectional => {
                build_bidirectional_memory(ids, t, self.cfg.memory_size)
            }
        }
    }

    /// One step through the whole stack on `tape`. `states` holds `(h, c)`
    /// nodes per LSTM layer and is updated in place. Returns the logits
    /// node and, when the stack contains a memory block, the trace row.
    fn step_stack(
        &self,
        tape: &mut Tape,
        ids: &[TokenId],
        t: usize,
        states: &mut [(NodeId, NodeId)],
        mut train: Option<&mut TrainCtx<'_>>,
    ) -> Result<(NodeId, Option<TraceRow>)> {
        let word = ids[t - 1] as usize;
        let mut v = tape.embed_row(&self.params, self.embed, word)?;
        let mut trace = None;
        let mut lstm_ordinal = 0;
        for layer in &self.layers {
            match layer {
                Layer::Lstm(cell) => {
                    let (h_prev, c_prev) = states[lstm_ordinal];
                    let (h, c) = cell.step_on_tape(tape, &self.params, v, h_prev, c_prev)?;
                    states[lstm_ordinal] = (h, c);
                    lstm_ordinal += 1;
                    v = h;
                    if let Some(ctx) = train.as_deref_mut() {
                        if ctx.rate > 0.0 {
                            let mask = dropout_mask(self.cfg.dim, ctx.rate, ctx.rng)?;
                            v = tape.dropout(v, mask)?;
                        }
                    }
                }
                Layer::Mb(mb) => {
                    let slice = self.memory_slice(ids, t)?;
                    let (out, probs) = mb.step_on_tape(tape, &self.params, &slice, v)?;
                    trace = Some(TraceRow {
                        t,
                        positions: slice.positions.clone(),
                        word_ids: slice.word_ids.clone(),
                        probs: tape.values(probs).to_vec(),
                    });
                    v = out;
                }
            }
        }
        let projected = tape.matvec(&self.params, self.w_out, v)?;
        let logits = tape.add_bias(&self.params, projected, self.b_out)?;
        Ok((logits, trace))
    }

    /// Forward a whole sentence on one tape. Returns the tape, the scalar
    /// total-NLL node, its value, the predicted-token count, and the trace.
    pub(crate) fn sentence_forward(
        &self,
        ids: &[TokenId],
        mut train: Option<&mut TrainCtx<'_>>,
    ) -> Result<(Tape, NodeId, f64, usize, AttentionTrace)> {
        if ids.len() < 2 {
            return Err(RmnError::InvalidArgument {
                what: "sentence_nll",
                why: format!("sentence must hold at least 2 ids, got {}", ids.len()),
            });
        }
        let mut tape = Tape::new();
        let mut states: Vec<(NodeId, NodeId)> = Vec::with_capacity(self.lstm_layer_count());
        for _ in 0..self.lstm_layer_count() {
            let h = tape.leaf_zeros(self.cfg.dim)?;
            let c = tape.leaf_zeros(self.cfg.dim)?;
            states.push((h, c));
        }
        let mut trace = AttentionTrace {
            sentence: ids.to_vec(),
            rows: Vec::new(),
        };
        let mut total: Option<NodeId> = None;
        for t in 1..ids.len() {
            let (logits, row) = self.step_stack(&mut tape, ids, t, &mut states, train.as_deref_mut())?;
            if let Some(row) = row {
                trace.rows.push(row);
            }
            let target = ids[t] as usize;
            if target >= self.cfg.vocab_size {
                return Err(RmnError::InvalidTokenId {
                    id: ids[t],
                    vocab: self.cfg.vocab_size,
                });
            }
            let ce = tape.cross_entropy(logits, target)?;
            total = Some(match total {
                None => ce,
                Some(acc) => tape.add(acc, ce)?,
            });
        }
        let total = total.expect("length >= 2 guarantees at least one prediction");
        let nll = tape.values(total)[0];
        Ok((tape, total, nll, ids.len() - 1, trace))
    }

    /// Total negative log-likelihood of an encoded sentence (begin marker
    /// through end marker), the number of predicted tokens, and the
    /// attention trace. States start at zero; nothing leaks across calls.
    pub fn sentence_nll(&self, ids: &[TokenId]) -> Result<(f64, usize, AttentionTrace)> {
        let (_, _, nll, count, trace) = self.sentence_forward(ids, None)?;
        Ok((nll, count, trace))
    }

    /// One evaluation step at position `t`: the next-word distribution, the
    /// updated per-layer states, and the trace row if the stack has a
    /// memory block. Deterministic; dropout never applies here.
    pub fn forward_step(
        &self,
        ids: &[TokenId],
        t: usize,
        states: &[LstmState],
    ) -> Result<(Vec<f64>, Vec<LstmState>, Option<TraceRow>)> {
        if t < 1 || t > ids.len() {
            return Err(RmnError::InvalidArgument {
                what: "forward_step",
                why: format!("position {t} out of range for sentence of length {}", ids.len()),
            });
        }
        if states.len() != self.lstm_layer_count() {
            return Err(RmnError::ShapeMismatch {
                op: "forward_step",
                expected: format!("{} layer states", self.lstm_layer_count()),
                got: format!("{}", states.len()),
            });
        }
        let mut tape = Tape::new();
        let mut node_states = Vec::with_capacity(states.len());
        for s in states {
            let h = tape.leaf(&s.h)?;
            let c = tape.leaf(&s.c)?;
            node_states.push((h, c));
        }
        let (logits, row) = self.step_stack(&mut tape, ids, t, &mut node_states, None)?;
        let dist = softmax_stable(tape.values(logits))?;
        let new_states = node_states
            .into_iter()
            .map(|(h, c)| LstmState {
                h: tape.values(h).to_vec(),
                c: tape.values(c).to_vec(),
            })
            .collect();
        Ok((dist, new_states, row))
    }

    /// Mean NLL per predicted token over a batch, eval mode.
    pub fn batch_mean_nll(&self, batch: &[Vec<TokenId>]) -> Result<f64> {
        if batch.is_empty() {
            return Err(RmnError::EmptyInput("batch_mean_nll"));
        }
        let total_tokens: usize = batch.iter().map(|s| s.len().saturating_sub(1)).sum();
        let mut total = 0.0;
        for ids in batch {
            let (_, _, nll, _, _) = self.sentence_forward(ids, None)?;
            total += nll;
        }
        Ok(total / total_tokens as f64)
    }

    /// Same loss with gradients accumulated into the registry. Callers own
    /// zeroing; training zeroes per batch.
    pub fn batch_mean_nll_with_grad(&mut self, batch: &[Vec<TokenId>]) -> Result<f64> {
        if batch.is_empty() {
            return Err(RmnError::EmptyInput("batch_mean_nll_with_grad"));
        }
        let total_tokens: usize = batch.iter().map(|s| s.len().saturating_sub(1)).sum();
        let mut total = 0.0;
        for ids in batch {
            let (mut tape, loss, nll, _, _) = self.sentence_forward(ids, None)?;
            total += nll;
            tape.backward(loss, 1.0 / total_tokens as f64, &mut self.params)?;
        }
        Ok(total / total_tokens as f64)
    }

    /// Distribution over the next word after consuming `prefix`, which must
    /// start with the begin marker.
    pub fn next_word_distribution(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        if prefix.is_empty() {
            return Err(RmnError::EmptyInput("next_word_distribution"));
        }
        if prefix[0] != crate::data::BOS_ID {
            return Err(RmnError::InvalidArgument {
                what: "next_word_distribution",
                why: "prefix must start with the begin marker".into(),
            });
        }
        let mut states = self.zero_states();
        let mut dist = Vec::new();
        for t in 1..=prefix.len() {
            let (d, new_states, _) = self.forward_step(prefix, t, &states)?;
            states = new_states;
            dist = d;
        }
        Ok(dist)
    }
}
