//! Sentence-level encoder: one d_u vector per utterance.
//!
//! Two providers share the same pooling head (element-wise max over word
//! vectors, then a trainable affine projection to d_u):
//!
//! * `trainable-bow` hashes each token into an embedding bucket and trains
//!   the embedding table jointly with the rest of the model;
//! * `precomputed` looks word-pooled utterance vectors up by
//!   (conversation id, utterance index) from a binary file, for users who
//!   produce sentence embeddings offline.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Conversation;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{concat_rows, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    TrainableBow,
    Precomputed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub provider: ProviderKind,
    pub vocab_hash_buckets: usize,
    pub d_w: usize,
    pub d_u: usize,
}

impl Default for EncoderConfig {
    fn default() -> EncoderConfig {
        EncoderConfig {
            provider: ProviderKind::TrainableBow,
            vocab_hash_buckets: 1 << 15,
            d_w: 64,
            d_u: 64,
        }
    }
}

/// FNV-1a; stable across platforms and runs.
pub fn hash_token(token: &str, buckets: usize) -> usize {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in token.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    (h % buckets as u64) as usize
}

const VEC_MAGIC: &[u8; 8] = b"TRMSMVEC";

/// Precomputed utterance vectors: a manifest of (conversation id,
/// utterance index, offset) plus a flat little-endian f32 array.
#[derive(Clone, Debug, Default)]
pub struct PrecomputedVectors {
    pub d_w: usize,
    vectors: HashMap<(String, usize), Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct VecManifest {
    d_w: usize,
    /// (conversation id, utterance index, offset in floats)
    entries: Vec<(String, usize, u64)>,
}

impl PrecomputedVectors {
    pub fn new(d_w: usize) -> PrecomputedVectors {
        PrecomputedVectors {
            d_w,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, conv_id: &str, index: usize, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.d_w);
        self.vectors.insert((conv_id.to_string(), index), vector);
    }

    pub fn get(&self, conv_id: &str, index: usize) -> Result<&Vec<f64>> {
        self.vectors
            .get(&(conv_id.to_string(), index))
            .ok_or_else(|| Error::MissingVector {
                conv_id: conv_id.to_string(),
                index,
            })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut keys: Vec<&(String, usize)> = self.vectors.keys().collect();
        keys.sort();
        let mut entries = Vec::with_capacity(keys.len());
        let mut blob: Vec<u8> = Vec::new();
        for key in keys {
            let offset = (blob.len() / 4) as u64;
            entries.push((key.0.clone(), key.1, offset));
            for v in &self.vectors[key] {
                blob.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let manifest = serde_json::to_vec(&VecManifest {
            d_w: self.d_w,
            entries,
        })?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(VEC_MAGIC)?;
        f.write_all(&(manifest.len() as u64).to_le_bytes())?;
        f.write_all(&manifest)?;
        f.write_all(&blob)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PrecomputedVectors> {
        let mut f = std::fs::File::open(path)?;
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != VEC_MAGIC {
            return Err(Error::Data(format!(
                "not a precomputed-vector file: {}",
                path.display()
            )));
        }
        let mut len_bytes = [0u8; 8];
        f.read_exact(&mut len_bytes)?;
        let mlen = u64::from_le_bytes(len_bytes) as usize;
        let mut mbytes = vec![0u8; mlen];
        f.read_exact(&mut mbytes)?;
        let manifest: VecManifest = serde_json::from_slice(&mbytes)?;
        let mut blob = Vec::new();
        f.read_to_end(&mut blob)?;
        let floats: Vec<f64> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let mut out = PrecomputedVectors::new(manifest.d_w);
        for (conv_id, index, offset) in manifest.entries {
            let start = offset as usize;
            let end = start + manifest.d_w;
            if end > floats.len() {
                return Err(Error::Data(format!(
                    "vector offset {offset} out of range for {conv_id:?}"
                )));
            }
            out.insert(&conv_id, index, floats[start..end].to_vec());
        }
        Ok(out)
    }
}

pub struct UtteranceEncoder {
    pub config: EncoderConfig,
    pub precomputed: Option<PrecomputedVectors>,
}

impl UtteranceEncoder {
    pub fn new(config: EncoderConfig, precomputed: Option<PrecomputedVectors>) -> Result<UtteranceEncoder> {
        if config.d_w == 0 || config.d_u == 0 {
            return Err(Error::Config("d_w and d_u must be positive".into()));
        }
        if config.provider == ProviderKind::Precomputed && precomputed.is_none() {
            return Err(Error::Config(
                "precomputed provider requires a vectors file".into(),
            ));
        }
        Ok(UtteranceEncoder {
            config,
            precomputed,
        })
    }

    /// Register this encoder's trainable parameters.
    pub fn init_params(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        if self.config.provider == ProviderKind::TrainableBow {
            store.glorot(
                "encoder.embed",
                self.config.vocab_hash_buckets,
                self.config.d_w,
                rng,
            );
        }
        store.glorot("encoder.proj.w", self.config.d_w, self.config.d_u, rng);
        store.zeros("encoder.proj.b", self.config.d_u);
    }

    /// Pooled (pre-projection) d_w vector for one utterance.
    fn pooled(&self, store: &ParamStore, conv: &Conversation, index: usize) -> Result<Tensor> {
        match self.config.provider {
            ProviderKind::TrainableBow => {
                let table = store.get("encoder.embed");
                let indices: Vec<usize> = conv.utterances[index]
                    .tokens
                    .iter()
                    .map(|t| hash_token(t, self.config.vocab_hash_buckets))
                    .collect();
                table.gather_rows(&indices)?.max_pool_rows()
            }
            ProviderKind::Precomputed => {
                let vecs = self.precomputed.as_ref().unwrap();
                let v = vecs.get(&conv.id, index)?;
                Ok(Tensor::from_vec(v.clone(), &[1, self.config.d_w]))
            }
        }
    }

    /// `[1, d_u]` representation of one utterance.
    pub fn encode_utterance(&self, store: &ParamStore, conv: &Conversation, index: usize) -> Result<Tensor> {
        let pooled = self.pooled(store, conv, index)?;
        pooled
            .matmul(store.get("encoder.proj.w"))?
            .add_row(store.get("encoder.proj.b"))
    }

    /// `[N, d_u]` representation matrix, rows in utterance order.
    pub fn encode_conversation(&self, store: &ParamStore, conv: &Conversation) -> Result<Tensor> {
        let rows: Vec<Tensor> = (0..conv.len())
            .map(|i| self.pooled(store, conv, i))
            .collect::<Result<_>>()?;
        concat_rows(&rows)?
            .matmul(store.get("encoder.proj.w"))?
            .add_row(store.get("encoder.proj.b"))
    }
}
