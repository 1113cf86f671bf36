//! Binary parameter checkpoints.
//!
//! ```text
//! "MRCP" | version u16 | header_len u32 | header JSON (config, vocab, tensor names)
//!        | count u64 | count × f64 LE | SHA-256 of everything before it
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ModelConfig, Vocab};
use super::params::Params;
use super::Model;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MRCP";
const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocab,
    tensors: Vec<String>,
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &Model) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        tensors: model.params.names(),
    })?;
    let mut buf = Vec::with_capacity(32 + header.len() + 8 * model.params.num_values());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(model.params.num_values() as u64).to_le_bytes());
    for s in model.params.slices() {
        for v in s {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    w.write_all(&buf).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Model> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if buf.len() < 4 + 2 + 4 + 8 + 32 {
        return Err(bad("file too short"));
    }
    let (body, digest) = buf.split_at(buf.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("content hash mismatch"));
    }
    if &body[..4] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u16::from_le_bytes([body[4], body[5]]);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(body[6..10].try_into().expect("4 bytes")) as usize;
    let header_end = 10 + header_len;
    if body.len() < header_end + 8 {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[10..header_end])?;
    header.config.validate()?;
    let count = u64::from_le_bytes(body[header_end..header_end + 8].try_into().expect("8 bytes")) as usize;
    let values = &body[header_end + 8..];
    if values.len() != count * 8 {
        return Err(bad("value count does not match payload"));
    }

    // Shapes come from the config and vocabulary; values are overwritten.
    let mut params = Params::init(&header.config, header.vocab.len(), &mut ChaCha8Rng::seed_from_u64(0));
    if params.names() != header.tensors || params.num_values() != count {
        return Err(bad("tensor layout does not match the config"));
    }
    let mut chunks = values.chunks_exact(8);
    for s in params.slices_mut() {
        for v in s.iter_mut() {
            *v = f64::from_le_bytes(chunks.next().expect("count checked").try_into().expect("8 bytes"));
        }
    }
    Ok(Model { config: header.config, vocab: header.vocab, params })
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, model)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}
