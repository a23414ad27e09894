//! Checkpoint file format: a JSON manifest header followed by a flat
//! little-endian f32 blob.
//!
//! ```text
//! magic "TRMSMCKP" | u32 version | u64 manifest_len | manifest JSON | f32 blob
//! ```
//!
//! The manifest lists every array (model parameters plus optimizer
//! moments) as (name, shape, offset-in-floats) in deterministic parameter
//! order, and carries the model config snapshot, the step counter, and the
//! training RNG state (seed + stream position).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::optim::AdamState;

const MAGIC: &[u8; 8] = b"TRMSMCKP";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    entries: Vec<ManifestEntry>,
    config: ModelConfig,
    step: usize,
    optim_t: u64,
    rng_seed: u64,
    /// ChaCha word position, decimal string (u128).
    rng_word_pos: String,
}

/// In-memory checkpoint contents.
pub struct Checkpoint {
    pub config: ModelConfig,
    pub step: usize,
    pub optim_t: u64,
    pub rng_seed: u64,
    pub rng_word_pos: u128,
    arrays: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn array(&self, name: &str) -> Option<&(Vec<usize>, Vec<f64>)> {
        self.arrays.get(name)
    }

    pub fn array_names(&self) -> Vec<String> {
        self.arrays.keys().cloned().collect()
    }

    /// Copy parameter arrays into the model (values round-tripped through
    /// f32 by construction of the format).
    pub fn apply_to_model(&self, model: &Model) -> Result<()> {
        for name in model.params.names() {
            let (shape, data) = self.arrays.get(&name).ok_or_else(|| {
                Error::Checkpoint(format!("missing parameter {name:?} in checkpoint"))
            })?;
            let tensor = model.params.get(&name);
            if tensor.shape() != *shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {name:?} shape mismatch: model {:?} vs checkpoint {:?}",
                    tensor.shape(),
                    shape
                )));
            }
            tensor.set_data(data);
        }
        Ok(())
    }

    /// Rebuild the optimizer moment buffers.
    pub fn optim_state(&self) -> AdamState {
        let mut state = AdamState::new();
        state.t = self.optim_t;
        for (name, (_, data)) in &self.arrays {
            if let Some(p) = name.strip_prefix("optim.m.") {
                state.m.insert(p.to_string(), data.clone());
            } else if let Some(p) = name.strip_prefix("optim.v.") {
                state.v.insert(p.to_string(), data.clone());
            }
        }
        state
    }
}

/// Serialize model parameters and optimizer state to checkpoint bytes.
pub fn to_bytes(
    model: &Model,
    optim: Option<&AdamState>,
    step: usize,
    rng_seed: u64,
    rng_word_pos: u128,
) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, data: &[f64], blob: &mut Vec<u8>| {
        let offset = (blob.len() / 4) as u64;
        for v in data {
            blob.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        entries.push(ManifestEntry {
            name,
            shape,
            offset,
        });
    };
    for name in model.params.names() {
        let t = model.params.get(&name);
        push(name, t.shape(), &t.data(), &mut blob);
    }
    let mut optim_t = 0;
    if let Some(state) = optim {
        optim_t = state.t;
        for (name, m) in &state.m {
            push(format!("optim.m.{name}"), vec![m.len()], m, &mut blob);
        }
        for (name, v) in &state.v {
            push(format!("optim.v.{name}"), vec![v.len()], v, &mut blob);
        }
    }
    let manifest = serde_json::to_vec(&Manifest {
        entries,
        config: model.config.clone(),
        step,
        optim_t,
        rng_seed,
        rng_word_pos: rng_word_pos.to_string(),
    })?;
    let mut out = Vec::with_capacity(16 + manifest.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.extend_from_slice(&blob);
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut cur = std::io::Cursor::new(bytes);
    let mut magic = [0u8; 8];
    cur.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let mut v = [0u8; 4];
    cur.read_exact(&mut v)?;
    if u32::from_le_bytes(v) != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {}",
            u32::from_le_bytes(v)
        )));
    }
    let mut len = [0u8; 8];
    cur.read_exact(&mut len)?;
    let mlen = u64::from_le_bytes(len) as usize;
    let mut mbytes = vec![0u8; mlen];
    cur.read_exact(&mut mbytes)?;
    let manifest: Manifest = serde_json::from_slice(&mbytes)?;
    let mut blob = Vec::new();
    cur.read_to_end(&mut blob)?;
    let floats: Vec<f64> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let mut arrays = BTreeMap::new();
    for e in manifest.entries {
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        if start + n > floats.len() {
            return Err(Error::Checkpoint(format!(
                "array {:?} extends past blob end",
                e.name
            )));
        }
        arrays.insert(e.name, (e.shape, floats[start..start + n].to_vec()));
    }
    Ok(Checkpoint {
        config: manifest.config,
        step: manifest.step,
        optim_t: manifest.optim_t,
        rng_seed: manifest.rng_seed,
        rng_word_pos: manifest
            .rng_word_pos
            .parse()
            .map_err(|_| Error::Checkpoint("bad rng position".into()))?,
        arrays,
    })
}

pub fn save(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes)
}
