//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes   "CAECKPT1"
//! header_len u64 LE
//! header     JSON (format_version, kind, config, layout, seed, tensors)
//! payload    f64 LE, tensors in header order, each row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LatentLayout, Linear, ModelKind, ModelParams, NetConfig};
use crate::error::{Error, Result};
use crate::numcore::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CAECKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Refuse headers larger than this; a corrupt length would otherwise
/// trigger a huge allocation.
const MAX_HEADER: u64 = 16 << 20;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: ModelKind,
    config: NetConfig,
    layout: LatentLayout,
    seed: u64,
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(params, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_checkpoint<W: Write>(params: &ModelParams, w: &mut W) -> Result<()> {
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        kind: params.kind,
        config: params.config.clone(),
        layout: params.layout,
        seed: params.seed,
        tensors: params
            .tensor_layout()
            .into_iter()
            .map(|(name, rows, cols)| TensorEntry { name, rows, cols })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let io = |e| Error::io("<checkpoint>", e);
    w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for v in params.flatten() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(file))
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<ModelParams> {
    let truncated = |what: &str| Error::Checkpoint(format!("truncated file while reading {what}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| truncated("magic"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| truncated("header length"))?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(Error::Checkpoint(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json).map_err(|_| truncated("header"))?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {} (expected {CHECKPOINT_VERSION})",
            header.format_version
        )));
    }

    let mut tensors = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let mut buf = vec![0u8; t.rows * t.cols * 8];
        r.read_exact(&mut buf).map_err(|_| truncated(&t.name))?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        tensors.push(Matrix::from_vec(t.rows, t.cols, data)?);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io("<checkpoint>", e))? != 0 {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }

    let mut it = tensors.into_iter();
    let mut take = |n: usize| -> Result<Vec<Linear>> {
        (0..n)
            .map(|_| match (it.next(), it.next()) {
                (Some(weight), Some(bias)) => Ok(Linear { weight, bias }),
                _ => Err(Error::Checkpoint("tensor list does not match config".into())),
            })
            .collect()
    };
    let depth = header.config.depth();
    let encoder = take(depth)?;
    let decoder = take(depth)?;
    let fusion = match header.kind {
        ModelKind::Cae => Some(take(1)?.remove(0)),
        ModelKind::Vanilla => None,
    };
    let params = ModelParams {
        kind: header.kind,
        config: header.config,
        layout: header.layout,
        seed: header.seed,
        encoder,
        decoder,
        fusion,
    };
    params
        .validate()
        .map_err(|e| Error::Checkpoint(format!("inconsistent tensors: {e}")))?;
    Ok(params)
}
