//! Binary model checkpoints.
//!
//! Self-describing container: magic, format version, the model
//! configuration as a text block, the SHA-256 of the vocabulary it was
//! trained with, then every registry entry in registration order as
//! name + shape + row-major 64-bit values. Round trips are bit-exact.

use std::fs;
use std::path::Path;

use crate::config::{model_config_from_text, model_config_to_text};
use crate::error::{Result, RmnError};
use crate::model::ModelStack;
use crate::util::write_atomic;

const MAGIC: &[u8; 8] = b"RMNCKPT1";
const VERSION: u32 = 1;

pub fn save(model: &ModelStack, vocab_hash: &[u8; 32], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg_text = model_config_to_text(&model.cfg);
    out.extend_from_slice(&(cfg_text.len() as u32).to_le_bytes());
    out.extend_from_slice(cfg_text.as_bytes());
    out.extend_from_slice(vocab_hash);
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (name, tensor) in model.params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(tensor.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(tensor.cols() as u32).to_le_bytes());
        for v in tensor.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(RmnError::Checkpoint("file truncated".into()));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        let mut buf = [0u8; 8];
        buf.copy_from_slice(b);
        Ok(f64::from_le_bytes(buf))
    }
}

/// Load a checkpoint. When `expected_vocab_hash` is given it must match
/// the stored hash. Returns the model and the stored vocabulary hash.
pub fn load(path: &Path, expected_vocab_hash: Option<&[u8; 32]>) -> Result<(ModelStack, [u8; 32])> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        at: 0,
    };
    if r.take(8)? != MAGIC {
        return Err(RmnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(RmnError::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let cfg_len = r.u32()? as usize;
    let cfg_text = std::str::from_utf8(r.take(cfg_len)?)
        .map_err(|_| RmnError::Checkpoint("config block is not UTF-8".into()))?;
    let cfg = model_config_from_text(cfg_text)?;

    let mut vocab_hash = [0u8; 32];
    vocab_hash.copy_from_slice(r.take(32)?);
    if let Some(expected) = expected_vocab_hash {
        if *expected != vocab_hash {
            return Err(RmnError::Checkpoint(
                "vocabulary hash does not match the checkpoint".into(),
            ));
        }
    }

    // construct the skeleton, then overwrite every entry in order
    let mut model = ModelStack::new(cfg, 0)?;
    let count = r.u32()? as usize;
    if count != model.params.len() {
        return Err(RmnError::Checkpoint(format!(
            "expected {} parameters, found {count}",
            model.params.len()
        )));
    }
    for id in model.params.ids().collect::<Vec<_>>() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| RmnError::Checkpoint("parameter name is not UTF-8".into()))?;
        if name != model.params.name(id) {
            return Err(RmnError::Checkpoint(format!(
                "parameter order mismatch: expected `{}`, found `{name}`",
                model.params.name(id)
            )));
        }
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let tensor = model.params.get_mut(id);
        if rows != tensor.rows() || cols != tensor.cols() {
            return Err(RmnError::Checkpoint(format!(
                "shape mismatch for `{name}`: expected {}x{}, found {rows}x{cols}",
                tensor.rows(),
                tensor.cols()
            )));
        }
        for k in 0..rows * cols {
            tensor.values_mut()[k] = r.f64()?;
        }
        tensor.zero_grad();
    }
    if r.at != bytes.len() {
        return Err(RmnError::Checkpoint("trailing bytes after parameters".into()));
    }
    Ok((model, vocab_hash))
}
