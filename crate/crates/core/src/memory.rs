//! The attention memory block.
//!
//! At step `t` the block looks at the most recent words of the current
//! sentence (at most `memory_size` of them, never crossing the sentence
//! start), scores each against the incoming hidden state through an input
//! embedding table, and mixes the matching output embeddings into a context
//! vector. The context is folded back into the hidden state either by plain
//! addition or by a GRU-style gate.
//!
//! An optional temporal matrix adds one learned row per memory slot to the
//! input embeddings before scoring, biasing attention by position. When the
//! sentence prefix is shorter than the memory, only the first `t` temporal
//! rows take part; there is no padding anywhere.
//!
//! Bidirectional slices (used for sentence completion) extend the window
//! with the words following the prediction target. The target itself is
//! always excluded, and future slots use the upper half of a `2n`-row
//! temporal matrix, nearest word first.

use rand_chacha::ChaCha8Rng;

use crate::data::TokenId;
use crate::error::{Result, RmnError};
use crate::lstm::INIT_RANGE;
use crate::numeric::{softmax_stable, NodeId, ParamId, ParamRegistry, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Composition {
    Linear,
    Gated,
}

#[derive(Debug, Clone)]
struct GateParams {
    w_update_ctx: ParamId,
    w_update_hid: ParamId,
    w_reset_ctx: ParamId,
    w_reset_hid: ParamId,
    w_cand_ctx: ParamId,
    w_cand_hid: ParamId,
    /// Optional biases; the published equations carry none, so these are
    /// behind a flag that defaults off.
    biases: Option<(ParamId, ParamId, ParamId)>,
}

#[derive(Debug, Clone)]
pub struct MemoryBlock {
    pub memory_size: usize,
    pub dim: usize,
    pub composition: Composition,
    input_table: ParamId,
    output_table: ParamId,
    temporal: Option<ParamId>,
    gates: Option<GateParams>,
}

/// The words visible to the block at one step: ids and 1-based sentence
/// positions ordered oldest first (for bidirectional slices: past oldest
/// first, then future nearest first), plus the temporal row each slot uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemorySlice {
    pub word_ids: Vec<TokenId>,
    pub positions: Vec<usize>,
    pub temporal_rows: Vec<usize>,
}

impl MemorySlice {
    pub fn len(&self) -> usize {
        self.word_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_ids.is_empty()
    }
}

/// The `min(t, n)` most recent words up to and including position `t`.
/// Positions are 1-based within the sentence, boundary markers included.
pub fn gather_memory(sentence_ids: &[TokenId], t: usize, n: usize) -> Result<MemorySlice> {
    if t < 1 || t > sentence_ids.len() {
        return Err(RmnError::InvalidArgument {
            what: "gather_memory",
            why: format!(
                "position {t} out of range for sentence of length {}",
                sentence_ids.len()
            ),
        });
    }
    let start = t.saturating_sub(n) + 1;
    let positions: Vec<usize> = (start..=t).collect();
    let word_ids = positions.iter().map(|&p| sentence_ids[p - 1]).collect();
    let temporal_rows = (0..positions.len()).collect();
    Ok(MemorySlice {
        word_ids,
        positions,
        temporal_rows,
    })
}

/// Window around the prediction target (position `t + 1`): up to `n` words
/// before it and up to `n` words after it, target excluded. Future slots map
/// to temporal rows `n..2n`, nearest word first.
pub fn build_bidirectional_memory(
    sentence_ids: &[TokenId],
    t: usize,
    n: usize,
) -> Result<MemorySlice> {
    let mut slice = gather_memory(sentence_ids, t, n)?;
    let len = sentence_ids.len();
    let future_start = t + 2;
    let future_end = len.min(t + n + 1);
    for (k, p) in (future_start..=future_end).enumerate() {
        slice.word_ids.push(sentence_ids[p - 1]);
        slice.positions.push(p);
        slice.temporal_rows.push(n + k);
    }
    Ok(slice)
}

impl MemoryBlock {
    /// Register and initialize all block parameters under `prefix`.
    /// `temporal_rows` is the number of temporal matrix rows to allocate
    /// (`n` for unidirectional use, `2n` for bidirectional), or 0 for none.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        params: &mut ParamRegistry,
        prefix: &str,
        vocab_size: usize,
        dim: usize,
        memory_size: usize,
        temporal_rows: usize,
        composition: Composition,
        gate_bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if vocab_size == 0 || dim == 0 || memory_size == 0 {
            return Err(RmnError::InvalidArgument {
                what: "MemoryBlock::init",
                why: "vocab size, dim and memory size must be at least 1".into(),
            });
        }
        let uni = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            Tensor::uniform(rows, cols, -INIT_RANGE, INIT_RANGE, rng)
        };
        let input_table =
            params.register(&format!("{prefix}.input_table"), uni(vocab_size, dim, rng))?;
        let output_table =
            params.register(&format!("{prefix}.output_table"), uni(vocab_size, dim, rng))?;
        let temporal = if temporal_rows > 0 {
            Some(params.register(&format!("{prefix}.temporal"), uni(temporal_rows, dim, rng))?)
        } else {
            None
        };
        let gates = match composition {
            Composition::Linear => None,
            Composition::Gated => {
                let w_update_ctx =
                    params.register(&format!("{prefix}.w_update_ctx"), uni(dim, dim, rng))?;
                let w_update_hid =
                    params.register(&format!("{prefix}.w_update_hid"), uni(dim, dim, rng))?;
                let w_reset_ctx =
                    params.register(&format!("{prefix}.w_reset_ctx"), uni(dim, dim, rng))?;
                let w_reset_hid =
                    params.register(&format!("{prefix}.w_reset_hid"), uni(dim, dim, rng))?;
                let w_cand_ctx =
                    params.register(&format!("{prefix}.w_cand_ctx"), uni(dim, dim, rng))?;
                let w_cand_hid =
                    params.register(&format!("{prefix}.w_cand_hid"), uni(dim, dim, rng))?;
                let biases = if gate_bias {
                    Some((
                        params.register(&format!("{prefix}.b_update"), uni(dim, 1, rng))?,
                        params.register(&format!("{prefix}.b_reset"), uni(dim, 1, rng))?,
                        params.register(&format!("{prefix}.b_cand"), uni(dim, 1, rng))?,
                    ))
                } else {
                    None
                };
                Some(GateParams {
                    w_update_ctx,
                    w_update_hid,
                    w_reset_ctx,
                    w_reset_hid,
                    w_cand_ctx,
                    w_cand_hid,
                    biases,
                })
            }
        };
        Ok(MemoryBlock {
            memory_size,
            dim,
            composition,
            input_table,
            output_table,
            temporal,
            gates,
        })
    }

    pub fn has_temporal(&self) -> bool {
        self.temporal.is_some()
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.input_table, self.output_table];
        if let Some(t) = self.temporal {
            ids.push(t);
        }
        if let Some(g) = &self.gates {
            ids.extend([
                g.w_update_ctx,
                g.w_update_hid,
                g.w_reset_ctx,
                g.w_reset_hid,
                g.w_cand_ctx,
                g.w_cand_hid,
            ]);
            if let Some((bz, br, bc)) = g.biases {
                ids.extend([bz, br, bc]);
            }
        }
        ids
    }

    fn slice_ids_usize(&self, slice: &MemorySlice) -> Vec<usize> {
        slice.word_ids.iter().map(|&id| id as usize).collect()
    }

    /// Attention logits and probabilities for a slice, as tape nodes.
    /// Returns `(probabilities, input_rows)`.
    fn attention_on_tape(
        &self,
        tape: &mut Tape,
        params: &ParamRegistry,
        slice: &MemorySlice,
        h: NodeId,
    ) -> Result<NodeId> {
        if slice.is_empty() {
            return Err(RmnError::EmptyInput("attention_weights"));
        }
        if slice.len() > 2 * self.memory_size {
            return Err(RmnError::InvalidArgument {
                what: "attention_weights",
                why: format!(
                    "slice of {} slots exceeds memory size {}",
                    slice.len(),
                    self.memory_size
                ),
            });
        }
        let rows = tape.gather_rows(params, self.input_table, &self.slice_ids_usize(slice))?;
        let keys = match self.temporal {
            Some(temporal) => {
                let t_rows = tape.gather_rows(params, temporal, &slice.temporal_rows)?;
                tape.add(rows, t_rows)?
            }
            None => rows,
        };
        let logits = tape.matvec_node(keys, h)?;
        tape.softmax(logits)
    }

    fn context_on_tape(
        &self,
        tape: &mut Tape,
        params: &ParamRegistry,
        slice: &MemorySlice,
        probs: NodeId,
    ) -> Result<NodeId> {
        let rows = tape.gather_rows(params, self.output_table, &self.slice_ids_usize(slice))?;
        tape.mat_t_vec_node(rows, probs)
    }

    fn compose_on_tape(
        &self,
        tape: &mut Tape,
        params: &ParamRegistry,
        context: NodeId,
        h: NodeId,
    ) -> Result<NodeId> {
        match self.composition {
            Composition::Linear => tape.add(context, h),
            Composition::Gated => {
                let g = self.gates.as_ref().ok_or(RmnError::InvalidArgument {
                    what: "compose_gated",
                    why: "gate parameters missing".into(),
                })?;
                let pre = |tape: &mut Tape, w_ctx, w_hid, bias: Option<ParamId>| -> Result<NodeId> {
                    let a = tape.matvec(params, w_ctx, context)?;
                    let b = tape.matvec(params, w_hid, h)?;
                    let sum = tape.add(a, b)?;
                    match bias {
                        Some(b) => tape.add_bias(params, sum, b),
                        None => Ok(sum),
                    }
                };
                let (bz, br, bc) = match g.biases {
                    Some((bz, br, bc)) => (Some(bz), Some(br), Some(bc)),
                    None => (None, None, None),
                };
                let update_pre = pre(tape, g.w_update_ctx, g.w_update_hid, bz)?;
                let update = tape.sigmoid(update_pre)?;
                let reset_pre = pre(tape, g.w_reset_ctx, g.w_reset_hid, br)?;
                let reset = tape.sigmoid(reset_pre)?;
                let gated_h = tape.mul(reset, h)?;
                let cand_a = tape.matvec(params, g.w_cand_ctx, context)?;
                let cand_b = tape.matvec(params, g.w_cand_hid, gated_h)?;
                let cand_sum = tape.add(cand_a, cand_b)?;
                let cand_pre = match bc {
                    Some(b) => tape.add_bias(params, cand_sum, b)?,
                    None => cand_sum,
                };
                let cand = tape.tanh(cand_pre)?;
                let keep = tape.one_minus(update)?;
                let kept = tape.mul(keep, h)?;
                let written = tape.mul(update, cand)?;
                tape.add(kept, written)
            }
        }
    }

    /// Full block step on an existing tape: returns `(output, attention)`.
    pub fn step_on_tape(
        &self,
        tape: &mut Tape,
        params: &ParamRegistry,
        slice: &MemorySlice,
        h: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let probs = self.attention_on_tape(tape, params, slice, h)?;
        let context = self.context_on_tape(tape, params, slice, probs)?;
        let out = self.compose_on_tape(tape, params, context, h)?;
        Ok((out, probs))
    }
}

/// Attention distribution over the slice for a plain-value hidden state.
pub fn attention_weights(
    mb: &MemoryBlock,
    params: &ParamRegistry,
    slice: &MemorySlice,
    h: &[f64],
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let hn = tape.leaf(h)?;
    let probs = mb.attention_on_tape(&mut tape, params, slice, hn)?;
    Ok(tape.values(probs).to_vec())
}

/// Probability-weighted mix of output-table rows for the slice.
pub fn context_vector(
    mb: &MemoryBlock,
    params: &ParamRegistry,
    slice: &MemorySlice,
    probs: &[f64],
) -> Result<Vec<f64>> {
    if probs.len() != slice.len() {
        return Err(RmnError::ShapeMismatch {
            op: "context_vector",
            expected: format!("{} probabilities", slice.len()),
            got: format!("{}", probs.len()),
        });
    }
    let mut tape = Tape::new();
    let pn = tape.leaf(probs)?;
    let ctx = mb.context_on_tape(&mut tape, params, slice, pn)?;
    Ok(tape.values(ctx).to_vec())
}

/// Elementwise sum of context and hidden state.
pub fn compose_linear(context: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if context.len() != h.len() {
        return Err(RmnError::ShapeMismatch {
            op: "compose_linear",
            expected: format!("{}", context.len()),
            got: format!("{}", h.len()),
        });
    }
    Ok(context.iter().zip(h.iter()).map(|(a, b)| a + b).collect())
}

/// GRU-style gate merging context and hidden state.
pub fn compose_gated(
    mb: &MemoryBlock,
    params: &ParamRegistry,
    context: &[f64],
    h: &[f64],
) -> Result<Vec<f64>> {
    if context.len() != h.len() {
        return Err(RmnError::ShapeMismatch {
            op: "compose_gated",
            expected: format!("{}", context.len()),
            got: format!("{}", h.len()),
        });
    }
    let mut tape = Tape::new();
    let cn = tape.leaf(context)?;
    let hn = tape.leaf(h)?;
    let out = mb.compose_on_tape(&mut tape, params, cn, hn)?;
    Ok(tape.values(out).to_vec())
}

/// One full plain-value block step: gather, attend, mix, compose.
/// Returns the composed output and the attention distribution.
pub fn mb_step(
    mb: &MemoryBlock,
    params: &ParamRegistry,
    sentence_ids: &[TokenId],
    t: usize,
    h: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let slice = gather_memory(sentence_ids, t, mb.memory_size)?;
    let mut tape = Tape::new();
    let hn = tape.leaf(h)?;
    let (out, probs) = mb.step_on_tape(&mut tape, params, &slice, hn)?;
    Ok((tape.values(out).to_vec(), tape.values(probs).to_vec()))
}

/// Plain-value softmax over slice logits; kept public for analysis code.
pub fn attention_logits_to_probs(logits: &[f64]) -> Result<Vec<f64>> {
    softmax_stable(logits)
}
