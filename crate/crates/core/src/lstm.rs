//! The LSTM cell.
//!
//! Gate layout: input gate `i`, candidate `j`, forget gate `f`, output
//! gate `o`, cell `c = c_prev * f + i * j`, hidden `h = tanh(c) * o`.
//! `i`, `j` and `f` are always sigmoid. The output gate is configurable:
//! [`OutputGate::Tanh`] (the default) or [`OutputGate::Sigmoid`], the
//! conventional choice. Both are kept because the tanh form is unusual
//! enough to be a plausible transcription slip, and results may hinge on it.
//!
//! The forget-gate bias initializes to 1; every other parameter draws
//! uniformly from (-0.05, 0.05).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, RmnError};
use crate::numeric::{NodeId, ParamId, ParamRegistry, Tape, Tensor};

pub const INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputGate {
    /// o_t = tanh(W_xo x + W_ho h + b_o)
    Tanh,
    /// o_t = sigm(W_xo x + W_ho h + b_o)
    Sigmoid,
}

#[derive(Debug, Clone)]
pub struct LstmCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_gate: OutputGate,
    w_x_in: ParamId,
    w_h_in: ParamId,
    b_in: ParamId,
    w_x_cand: ParamId,
    w_h_cand: ParamId,
    b_cand: ParamId,
    w_x_forget: ParamId,
    w_h_forget: ParamId,
    b_forget: ParamId,
    w_x_out: ParamId,
    w_h_out: ParamId,
    b_out: ParamId,
}

/// Hidden and cell state as plain values, for step-at-a-time evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(dim: usize) -> Self {
        LstmState {
            h: vec![0.0; dim],
            c: vec![0.0; dim],
        }
    }
}

impl LstmCell {
    /// Register and initialize all cell parameters under `prefix`.
    pub fn init(
        params: &mut ParamRegistry,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        output_gate: OutputGate,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(RmnError::InvalidArgument {
                what: "LstmCell::init",
                why: "dimensions must be at least 1".into(),
            });
        }
        let (d_in, d) = (input_dim, hidden_dim);
        let mat = |params: &mut ParamRegistry, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            params.register(
                &format!("{prefix}.{name}"),
                Tensor::uniform(rows, cols, -INIT_RANGE, INIT_RANGE, rng),
            )
        };
        let w_x_in = mat(params, "w_x_in", d, d_in, rng)?;
        let w_h_in = mat(params, "w_h_in", d, d, rng)?;
        let b_in = mat(params, "b_in", d, 1, rng)?;
        let w_x_cand = mat(params, "w_x_cand", d, d_in, rng)?;
        let w_h_cand = mat(params, "w_h_cand", d, d, rng)?;
        let b_cand = mat(params, "b_cand", d, 1, rng)?;
        let w_x_forget = mat(params, "w_x_forget", d, d_in, rng)?;
        let w_h_forget = mat(params, "w_h_forget", d, d, rng)?;
        let b_forget = params.register(&format!("{prefix}.b_forget"), Tensor::full(d, 1, 1.0))?;
        let w_x_out = mat(params, "w_x_out", d, d_in, rng)?;
        let w_h_out = mat(params, "w_h_out", d, d, rng)?;
        let b_out = mat(params, "b_out", d, 1, rng)?;
        Ok(LstmCell {
            input_dim,
            hidden_dim,
            output_gate,
            w_x_in,
            w_h_in,
            b_in,
            w_x_cand,
            w_h_cand,
            b_cand,
            w_x_forget,
            w_h_forget,
            b_forget,
            w_x_out,
            w_h_out,
            b_out,
        })
    }

    fn gate(
        &self,
        tape: &mut Tape,
        params: &ParamRegistry,
        w_x: ParamId,
        w_h: ParamId,
        b: ParamId,
        x: NodeId,
        h: NodeId,
    ) -> Result<NodeId> {
        let from_x = tape.matvec(params, w_x, x)?;
        let from_h = tape.matvec(params, w_h, h)?;
        let sum = tape.add(from_x, from_h)?;
        tape.add_bias(params, sum, b)
    }

    /// One step on an existing tape. Returns `(h, c)` nodes.
    pub fn step_on_tape(
        &self,
        tape: &mut Tape,
        params: &ParamRegistry,
        x: NodeId,
        prev_h: NodeId,
        prev_c: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let pre_in = self.gate(tape, params, self.w_x_in, self.w_h_in, self.b_in, x, prev_h)?;
        let gate_in = tape.sigmoid(pre_in)?;
        let pre_cand = self.gate(tape, params, self.w_x_cand, self.w_h_cand, self.b_cand, x, prev_h)?;
        let cand = tape.sigmoid(pre_cand)?;
        let pre_forget = self.gate(
            tape,
            params,
            self.w_x_forget,
            self.w_h_forget,
            self.b_forget,
            x,
            prev_h,
        )?;
        let gate_forget = tape.sigmoid(pre_forget)?;
        let pre_out = self.gate(tape, params, self.w_x_out, self.w_h_out, self.b_out, x, prev_h)?;
        let gate_out = match self.output_gate {
            OutputGate::Tanh => tape.tanh(pre_out)?,
            OutputGate::Sigmoid => tape.sigmoid(pre_out)?,
        };
        let kept = tape.mul(prev_c, gate_forget)?;
        let written = tape.mul(gate_in, cand)?;
        let c = tape.add(kept, written)?;
        let c_squashed = tape.tanh(c)?;
        let h = tape.mul(c_squashed, gate_out)?;
        Ok((h, c))
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![
            self.w_x_in,
            self.w_h_in,
            self.b_in,
            self.w_x_cand,
            self.w_h_cand,
            self.b_cand,
            self.w_x_forget,
            self.w_h_forget,
            self.b_forget,
            self.w_x_out,
            self.w_h_out,
            self.b_out,
        ]
    }
}

/// One plain-value step; shares the tape implementation with training.
pub fn lstm_step(
    cell: &LstmCell,
    params: &ParamRegistry,
    x: &[f64],
    prev: &LstmState,
) -> Result<LstmState> {
    if x.len() != cell.input_dim || prev.h.len() != cell.hidden_dim || prev.c.len() != cell.hidden_dim {
        return Err(RmnError::ShapeMismatch {
            op: "lstm_step",
            expected: format!("input {} and state {}", cell.input_dim, cell.hidden_dim),
            got: format!("input {} and state {}/{}", x.len(), prev.h.len(), prev.c.len()),
        });
    }
    let mut tape = Tape::new();
    let xn = tape.leaf(x)?;
    let hn = tape.leaf(&prev.h)?;
    let cn = tape.leaf(&prev.c)?;
    let (h, c) = cell.step_on_tape(&mut tape, params, xn, hn, cn)?;
    Ok(LstmState {
        h: tape.values(h).to_vec(),
        c: tape.values(c).to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

/// A multiplicative dropout mask: each slot is 0 with probability `rate`,
/// otherwise `1/(1-rate)` so that eval needs no rescaling.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(RmnError::InvalidArgument {
            what: "dropout",
            why: format!("rate must lie in [0, 1), got {rate}"),
        });
    }
    if rate == 0.0 {
        return Ok(vec![1.0; len]);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect())
}

/// Inverted dropout on a plain vector. Identity in eval mode.
pub fn apply_dropout(
    v: &[f64],
    rate: f64,
    mode: DropoutMode,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(RmnError::InvalidArgument {
            what: "apply_dropout",
            why: format!("rate must lie in [0, 1), got {rate}"),
        });
    }
    match mode {
        DropoutMode::Eval => Ok(v.to_vec()),
        DropoutMode::Train => {
            let mask = dropout_mask(v.len(), rate, rng)?;
            Ok(v.iter().zip(mask.iter()).map(|(a, m)| a * m).collect())
        }
    }
}
