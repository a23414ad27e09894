//! Dialogue-level encoder: sinusoidal positions plus three independent
//! masked transformer stacks (conventional / intra-speaker / inter-speaker).
//!
//! Sublayer ordering is post-norm: `A' = LN(O + x)`, then
//! `out = LN(FFN(A') + A')`. Q/K/V projections and the output projection
//! carry no bias. Dropout hits the attention weights and the FFN output.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masks::{Mask, MaskSet};
use crate::params::ParamStore;
use crate::tensor::{concat_cols, Tensor};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockConfig {
    pub d_u: usize,
    pub heads: usize,
    pub layers: usize,
    pub d_ff: usize,
    pub dropout: f64,
    /// Learned positional table instead of the fixed sinusoidal one.
    pub learned_positional: bool,
    /// Capacity of the learned positional table.
    pub max_positions: usize,
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_u == 0 || self.heads == 0 || self.layers == 0 {
            return Err(Error::Config("d_u, heads and layers must be positive".into()));
        }
        if self.d_u % self.heads != 0 {
            return Err(Error::Config(format!(
                "heads ({}) must divide d_u ({})",
                self.heads, self.d_u
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_u / self.heads
    }
}

impl Default for BlockConfig {
    fn default() -> BlockConfig {
        BlockConfig {
            d_u: 64,
            heads: 4,
            layers: 2,
            d_ff: 256,
            dropout: 0.1,
            learned_positional: false,
            max_positions: 512,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    Conventional,
    Intra,
    Inter,
}

impl BlockKind {
    pub const ALL: [BlockKind; 3] = [BlockKind::Conventional, BlockKind::Intra, BlockKind::Inter];

    pub fn as_str(&self) -> &'static str {
        match self {
            BlockKind::Conventional => "conventional",
            BlockKind::Intra => "intra",
            BlockKind::Inter => "inter",
        }
    }
}

impl std::str::FromStr for BlockKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<BlockKind> {
        match s {
            "conventional" => Ok(BlockKind::Conventional),
            "intra" => Ok(BlockKind::Intra),
            "inter" => Ok(BlockKind::Inter),
            other => Err(Error::Config(format!("unknown block {other:?}"))),
        }
    }
}

/// Attention weights captured in probe mode.
#[derive(Clone, Debug)]
pub struct AttentionRecord {
    pub block: BlockKind,
    pub layer: usize,
    pub head: usize,
    pub n: usize,
    pub weights: Vec<f64>,
}

/// Final-layer outputs of the enabled stacks.
#[derive(Default)]
pub struct EncoderOutputs {
    pub conventional: Option<Tensor>,
    pub intra: Option<Tensor>,
    pub inter: Option<Tensor>,
    pub attention: Vec<AttentionRecord>,
}

impl EncoderOutputs {
    pub fn get(&self, kind: BlockKind) -> Option<&Tensor> {
        match kind {
            BlockKind::Conventional => self.conventional.as_ref(),
            BlockKind::Intra => self.intra.as_ref(),
            BlockKind::Inter => self.inter.as_ref(),
        }
    }
}

/// Fixed sinusoidal positional table, rows 0..n.
pub fn sinusoidal_table(n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    for pos in 0..n {
        for j in 0..d {
            let pair = (j / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
            out[pos * d + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

/// Register every parameter of the enabled stacks (and the learned
/// positional table when configured). Creation order is fixed:
/// conventional, intra, inter; layers in order.
pub fn init_block_params(
    cfg: &BlockConfig,
    enabled: &[BlockKind],
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
) {
    if cfg.learned_positional {
        store.glorot("positional.table", cfg.max_positions, cfg.d_u, rng);
    }
    for kind in BlockKind::ALL {
        if !enabled.contains(&kind) {
            continue;
        }
        for l in 0..cfg.layers {
            let p = format!("block.{}.layer{l}", kind.as_str());
            store.glorot(&format!("{p}.attn.wq"), cfg.d_u, cfg.d_u, rng);
            store.glorot(&format!("{p}.attn.wk"), cfg.d_u, cfg.d_u, rng);
            store.glorot(&format!("{p}.attn.wv"), cfg.d_u, cfg.d_u, rng);
            store.glorot(&format!("{p}.attn.wo"), cfg.d_u, cfg.d_u, rng);
            store.layer_norm_pair(&format!("{p}.ln1"), cfg.d_u);
            store.glorot(&format!("{p}.ffn.w1"), cfg.d_u, cfg.d_ff, rng);
            store.zeros(&format!("{p}.ffn.b1"), cfg.d_ff);
            store.glorot(&format!("{p}.ffn.w2"), cfg.d_ff, cfg.d_u, rng);
            store.zeros(&format!("{p}.ffn.b2"), cfg.d_u);
            store.layer_norm_pair(&format!("{p}.ln2"), cfg.d_u);
        }
    }
}

/// `C + PE(0:N)`.
pub fn add_positional(c: &Tensor, cfg: &BlockConfig, store: &ParamStore) -> Result<Tensor> {
    let shape = c.shape();
    let (n, d) = (shape[0], shape[1]);
    if cfg.learned_positional {
        let indices: Vec<usize> = (0..n).collect();
        if n > cfg.max_positions {
            return Err(Error::Config(format!(
                "conversation length {n} exceeds positional table capacity {}",
                cfg.max_positions
            )));
        }
        let pe = store.get("positional.table").gather_rows(&indices)?;
        c.add(&pe)
    } else {
        c.add(&Tensor::from_vec(sinusoidal_table(n, d), &[n, d]))
    }
}

/// One post-norm transformer layer with a validity mask.
#[allow(clippy::too_many_arguments)]
pub fn transformer_layer(
    x: &Tensor,
    mask: &Mask,
    cfg: &BlockConfig,
    store: &ParamStore,
    prefix: &str,
    train: bool,
    rng: &mut ChaCha8Rng,
    probe: Option<(&mut Vec<AttentionRecord>, BlockKind, usize)>,
) -> Result<Tensor> {
    let n = x.shape()[0];
    let d_a = cfg.head_dim();
    let q = x.matmul(store.get(&format!("{prefix}.attn.wq")))?;
    let k = x.matmul(store.get(&format!("{prefix}.attn.wk")))?;
    let v = x.matmul(store.get(&format!("{prefix}.attn.wv")))?;
    let mut records = probe;
    let mut heads = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = q.slice_cols(h * d_a, d_a)?;
        let kh = k.slice_cols(h * d_a, d_a)?;
        let vh = v.slice_cols(h * d_a, d_a)?;
        let scores = qh
            .matmul(&kh.transpose()?)?
            .scale(1.0 / (d_a as f64).sqrt());
        let weights = scores.masked_softmax(mask)?;
        if let Some((records, block, layer)) = records.as_mut() {
            records.push(AttentionRecord {
                block: *block,
                layer: *layer,
                head: h,
                n,
                weights: weights.data(),
            });
        }
        let weights = weights.dropout(cfg.dropout, train, rng);
        heads.push(weights.matmul(&vh)?);
    }
    let o = concat_cols(&heads)?.matmul(store.get(&format!("{prefix}.attn.wo")))?;
    let a1 = o.add(x)?.layer_norm(
        store.get(&format!("{prefix}.ln1.gain")),
        store.get(&format!("{prefix}.ln1.bias")),
    )?;
    let f = a1
        .matmul(store.get(&format!("{prefix}.ffn.w1")))?
        .add_row(store.get(&format!("{prefix}.ffn.b1")))?
        .relu()
        .matmul(store.get(&format!("{prefix}.ffn.w2")))?
        .add_row(store.get(&format!("{prefix}.ffn.b2")))?
        .dropout(cfg.dropout, train, rng);
    f.add(&a1)?.layer_norm(
        store.get(&format!("{prefix}.ln2.gain")),
        store.get(&format!("{prefix}.ln2.bias")),
    )
}

/// Run one stack of layers over an already-positioned input.
#[allow(clippy::too_many_arguments)]
pub fn run_stack(
    input: &Tensor,
    mask: &Mask,
    kind: BlockKind,
    cfg: &BlockConfig,
    store: &ParamStore,
    train: bool,
    rng: &mut ChaCha8Rng,
    mut records: Option<&mut Vec<AttentionRecord>>,
) -> Result<Tensor> {
    let mut x = input.clone();
    for l in 0..cfg.layers {
        let prefix = format!("block.{}.layer{l}", kind.as_str());
        let probe = records.as_deref_mut().map(|r| (r, kind, l));
        x = transformer_layer(&x, mask, cfg, store, &prefix, train, rng, probe)?;
    }
    Ok(x)
}

/// Positional embedding once, then each enabled stack independently with
/// its own mask and parameters.
pub fn run_blocks(
    c: &Tensor,
    masks: &MaskSet,
    enabled: &[BlockKind],
    cfg: &BlockConfig,
    store: &ParamStore,
    train: bool,
    rng: &mut ChaCha8Rng,
    probe: bool,
) -> Result<EncoderOutputs> {
    if enabled.is_empty() {
        return Err(Error::Config("no transformer blocks enabled".into()));
    }
    let positioned = add_positional(c, cfg, store)?;
    let mut out = EncoderOutputs::default();
    for kind in BlockKind::ALL {
        if !enabled.contains(&kind) {
            continue;
        }
        let mask = match kind {
            BlockKind::Conventional => &masks.conventional,
            BlockKind::Intra => &masks.intra,
            BlockKind::Inter => &masks.inter,
        };
        let records = if probe { Some(&mut out.attention) } else { None };
        let y = run_stack(&positioned, mask, kind, cfg, store, train, rng, records)?;
        match kind {
            BlockKind::Conventional => out.conventional = Some(y),
            BlockKind::Intra => out.intra = Some(y),
            BlockKind::Inter => out.inter = Some(y),
        }
    }
    Ok(out)
}
