//! Model parameter file.
//!
//! Same conventions as the knowledge store: little-endian, a fixed header,
//! then the tensors as float32 in [`EdParams`] declaration order.
//!
//! ```text
//! 0   magic "RELMODEL"
//! 8   version u32
//! 12  relations u32        20  lbp_iters u32      28  scorer_hidden u32
//! 16  dim u32              24  attention_keep u32
//! 32  k1 u32   36  k2 u32   40  k u32   44  n_context u32
//! 48  margin f32           52  damping f32
//! 56  tensors: attention_diag, local_diag, rel_diags, affinity_diags,
//!     encoder_weight (row-major d × 2d), encoder_bias, scorer_w1 (H × 2),
//!     scorer_b1, scorer_w2, scorer_b2, calib_slope, calib_offset
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::candidates::SelectionParams;

use super::{EdHyperParams, EdParams, ModelError};

pub const MODEL_MAGIC: &[u8; 8] = b"RELMODEL";
pub const MODEL_VERSION: u32 = 1;

pub fn save_model(
    path: impl AsRef<Path>,
    hyper: &EdHyperParams,
    selection: &SelectionParams,
    params: &EdParams,
) -> Result<(), ModelError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MODEL_MAGIC)?;
    for v in [
        MODEL_VERSION,
        hyper.relations as u32,
        hyper.dim as u32,
        hyper.lbp_iters as u32,
        hyper.attention_keep as u32,
        hyper.scorer_hidden as u32,
        selection.k1 as u32,
        selection.k2 as u32,
        selection.k as u32,
        selection.n_context as u32,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&(hyper.margin as f32).to_le_bytes())?;
    out.write_all(&(hyper.lbp_damping as f32).to_le_bytes())?;
    for v in params.flatten() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_model(
    path: impl AsRef<Path>,
) -> Result<(EdHyperParams, SelectionParams, EdParams), ModelError> {
    let path = path.as_ref();
    let mut file = File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    if bytes.len() < 56 || &bytes[0..8] != MODEL_MAGIC {
        return Err(ModelError::BadMagic { path: path.into() });
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let f32_at = |at: usize| f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != MODEL_VERSION {
        return Err(ModelError::UnsupportedVersion(version));
    }
    let hyper = EdHyperParams {
        relations: u32_at(12) as usize,
        dim: u32_at(16) as usize,
        lbp_iters: u32_at(20) as usize,
        attention_keep: u32_at(24) as usize,
        scorer_hidden: u32_at(28) as usize,
        margin: f32_at(48) as f64,
        lbp_damping: f32_at(52) as f64,
    };
    hyper.validate().map_err(ModelError::Corrupt)?;
    let selection = SelectionParams {
        k1: u32_at(32) as usize,
        k2: u32_at(36) as usize,
        k: u32_at(40) as usize,
        n_context: u32_at(44) as usize,
    };
    selection.validate().map_err(ModelError::Corrupt)?;

    let mut params = EdParams::zeros(&hyper);
    let expected = params.num_params();
    let payload = &bytes[56..];
    if payload.len() != expected * 4 {
        return Err(ModelError::Corrupt(format!(
            "expected {} tensor bytes, found {}",
            expected * 4,
            payload.len()
        )));
    }
    let mut flat = Vec::with_capacity(expected);
    for chunk in payload.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        if !v.is_finite() {
            return Err(ModelError::Corrupt("non-finite tensor value".into()));
        }
        flat.push(v);
    }
    params.assign_flat(&flat);
    Ok((hyper, selection, params))
}
