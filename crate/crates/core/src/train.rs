//! SGD training loop: bucketed batches, global-norm clipping, halving
//! learning-rate schedule, per-epoch validation and checkpoint hooks.

use std::time::Instant;

use crate::analysis;
use crate::data::{bucket_batches, TokenId};
use crate::error::{Result, RmnError};
use crate::model::{ModelStack, TrainCtx};
use crate::numeric::clip_gradients;
use crate::rng::dropout_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    /// First epoch whose learning rate is halved; halving then compounds
    /// every epoch. The default of 5 keeps epochs 1-4 at the initial rate.
    pub lr_halving_start_epoch: usize,
    pub clip_threshold: f64,
    pub seed: u64,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            batch_size: 20,
            initial_lr: 1.0,
            lr_halving_start_epoch: 5,
            clip_threshold: 5.0,
            seed: 1,
            dropout: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(RmnError::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if self.initial_lr <= 0.0 || self.clip_threshold <= 0.0 {
            return Err(RmnError::Config(
                "initial_lr and clip_threshold must be positive".into(),
            ));
        }
        if self.lr_halving_start_epoch == 0 {
            return Err(RmnError::Config(
                "lr_halving_start_epoch must be positive".into(),
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
}

/// Learning rate for a 1-indexed epoch: the initial rate up to the halving
/// start, then halved once per epoch.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch == 0 {
        return Err(RmnError::InvalidArgument {
            what: "lr_at_epoch",
            why: "epochs are 1-indexed".into(),
        });
    }
    if epoch < cfg.lr_halving_start_epoch {
        Ok(cfg.initial_lr)
    } else {
        let halvings = epoch - cfg.lr_halving_start_epoch + 1;
        Ok(cfg.initial_lr / f64::powi(2.0, halvings as i32))
    }
}

/// Clip, then descend: `theta -= lr * grad` for every entry. Gradients are
/// zeroed afterwards. Returns the clip scale that was applied.
pub fn sgd_update(
    params: &mut crate::numeric::ParamRegistry,
    lr: f64,
    clip_threshold: f64,
) -> Result<f64> {
    let scale = clip_gradients(params, clip_threshold)?;
    for id in params.ids() {
        let t = params.get_mut(id);
        let n = t.len();
        for k in 0..n {
            let g = t.grad()[k];
            let v = t.values()[k] - lr * g;
            if !v.is_finite() {
                return Err(RmnError::NonFinite { op: "sgd_update" });
            }
            t.values_mut()[k] = v;
        }
        t.zero_grad();
    }
    Ok(scale)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_ppl: f64,
    pub valid_ppl: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainControl {
    Continue,
    Stop,
}

/// Callback invoked after every epoch with the fresh stats and the model
/// as it stands; checkpointing and early termination live here.
pub type EpochHook<'a> = dyn FnMut(&EpochStats, &ModelStack) -> Result<TrainControl> + 'a;

/// Run one batch: accumulate mean-per-token NLL gradients over all
/// sentences and take one SGD step. Returns (total nll, token count).
fn train_batch(
    model: &mut ModelStack,
    sentences: &[Vec<TokenId>],
    lr: f64,
    cfg: &TrainConfig,
    dropout: &mut rand_chacha::ChaCha8Rng,
) -> Result<(f64, usize)> {
    let total_tokens: usize = sentences.iter().map(|s| s.len() - 1).sum();
    let mut batch_nll = 0.0;
    model.params.zero_all_grads();
    for ids in sentences {
        let mut ctx = TrainCtx {
            rate: cfg.dropout,
            rng: dropout,
        };
        let (mut tape, loss, nll, _, _) = model.sentence_forward(ids, Some(&mut ctx))?;
        batch_nll += nll;
        tape.backward(loss, 1.0 / total_tokens as f64, &mut model.params)?;
    }
    if !batch_nll.is_finite() {
        return Err(RmnError::NonFinite { op: "train_batch" });
    }
    sgd_update(&mut model.params, lr, cfg.clip_threshold)?;
    Ok((batch_nll, total_tokens))
}

/// The full loop starting at `start_epoch` (1-indexed); lets a caller
/// resume from a checkpoint and reproduce the exact continuation, since
/// every epoch's shuffling and dropout streams derive from (seed, epoch).
pub fn train_from(
    model: &mut ModelStack,
    train_corpus: &[Vec<TokenId>],
    valid_corpus: Option<&[Vec<TokenId>]>,
    cfg: &TrainConfig,
    start_epoch: usize,
    on_epoch: &mut EpochHook<'_>,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if train_corpus.is_empty() {
        return Err(RmnError::EmptyInput("train"));
    }
    let mut log = Vec::new();
    for epoch in start_epoch..=cfg.epochs {
        let started = Instant::now();
        let lr = lr_at_epoch(cfg, epoch)?;
        let batches = bucket_batches(train_corpus, cfg.batch_size, cfg.seed.wrapping_add(epoch as u64));
        let mut dropout = dropout_rng(cfg.seed, epoch);
        let mut epoch_nll = 0.0;
        let mut epoch_tokens = 0usize;
        for (batch_id, batch) in batches.iter().enumerate() {
            match train_batch(model, &batch.sentences, lr, cfg, &mut dropout) {
                Ok((nll, tokens)) => {
                    epoch_nll += nll;
                    epoch_tokens += tokens;
                }
                Err(RmnError::NonFinite { .. }) => {
                    return Err(RmnError::Diverged {
                        epoch,
                        batch: batch_id,
                    })
                }
                Err(e) => return Err(e),
            }
        }
        let train_ppl = (epoch_nll / epoch_tokens as f64).exp();
        let valid_ppl = match valid_corpus {
            Some(c) if !c.is_empty() => Some(analysis::perplexity(model, c)?),
            _ => None,
        };
        let stats = EpochStats {
            epoch,
            lr,
            train_ppl,
            valid_ppl,
            seconds: started.elapsed().as_secs_f64(),
        };
        let control = on_epoch(&stats, model)?;
        log.push(stats);
        if control == TrainControl::Stop {
            break;
        }
    }
    Ok(log)
}

pub fn train(
    model: &mut ModelStack,
    train_corpus: &[Vec<TokenId>],
    valid_corpus: Option<&[Vec<TokenId>]>,
    cfg: &TrainConfig,
    on_epoch: &mut EpochHook<'_>,
) -> Result<Vec<EpochStats>> {
    train_from(model, train_corpus, valid_corpus, cfg, 1, on_epoch)
}

/// Convenience hook that never checkpoints and never stops early.
pub fn no_hook() -> impl FnMut(&EpochStats, &ModelStack) -> Result<TrainControl> {
    |_: &EpochStats, _: &ModelStack| Ok(TrainControl::Continue)
}
