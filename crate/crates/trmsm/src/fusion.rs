//! Fusion of the block outputs (add / cat / att), the classifier, and the
//! training loss.
//!
//! Ablated blocks are handled by restricting fusion to the enabled
//! outputs, never by zero-filling: att softmaxes over however many blocks
//! are enabled, cat concatenates only them, and the classifier is sized to
//! match.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{concat_cols, Tensor};
use crate::transformer::{BlockKind, EncoderOutputs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    Add,
    Cat,
    Att,
}

impl std::str::FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<FusionMode> {
        match s {
            "add" => Ok(FusionMode::Add),
            "cat" => Ok(FusionMode::Cat),
            "att" => Ok(FusionMode::Att),
            other => Err(Error::Config(format!("unknown fusion mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FusionConfig {
    pub mode: FusionMode,
    pub d_u: usize,
    pub num_classes: usize,
}

impl FusionConfig {
    /// Classifier input width for a given number of enabled blocks.
    pub fn classifier_input_dim(&self, num_blocks: usize) -> usize {
        match self.mode {
            FusionMode::Cat => num_blocks * self.d_u,
            _ => self.d_u,
        }
    }
}

/// Register the fusion and classifier parameters.
pub fn init_fusion_params(
    cfg: &FusionConfig,
    num_blocks: usize,
    store: &mut ParamStore,
    rng: &mut rand_chacha::ChaCha8Rng,
) {
    if cfg.mode == FusionMode::Att {
        store.glorot("fusion.w_f", 1, cfg.d_u, rng);
    }
    let input_dim = cfg.classifier_input_dim(num_blocks);
    store.glorot("clf.w", input_dim, cfg.num_classes, rng);
    store.zeros("clf.b", cfg.num_classes);
}

/// Fusion result: the fused representation and, for att mode, the
/// per-utterance weights over the enabled blocks.
pub struct Fused {
    pub representation: Tensor,
    pub fusion_weights: Option<Tensor>,
    pub fused_blocks: Vec<BlockKind>,
}

/// Fuse the enabled block outputs.
pub fn fuse(outputs: &EncoderOutputs, mode: FusionMode, store: &ParamStore) -> Result<Fused> {
    let mut parts: Vec<(BlockKind, &Tensor)> = Vec::new();
    for kind in BlockKind::ALL {
        if let Some(t) = outputs.get(kind) {
            parts.push((kind, t));
        }
    }
    if parts.is_empty() {
        return Err(Error::Config("no block outputs to fuse".into()));
    }
    let shape = parts[0].1.shape();
    for (_, t) in &parts {
        if t.shape() != shape {
            return Err(Error::ShapeMismatch {
                op: "fuse",
                lhs: shape,
                rhs: t.shape(),
            });
        }
    }
    let kinds: Vec<BlockKind> = parts.iter().map(|(k, _)| *k).collect();
    match mode {
        FusionMode::Add => {
            let mut sum = parts[0].1.clone();
            for (_, t) in &parts[1..] {
                sum = sum.add(t)?;
            }
            Ok(Fused {
                representation: sum,
                fusion_weights: None,
                fused_blocks: kinds,
            })
        }
        FusionMode::Cat => {
            let tensors: Vec<Tensor> = parts.iter().map(|(_, t)| (*t).clone()).collect();
            Ok(Fused {
                representation: concat_cols(&tensors)?,
                fusion_weights: None,
                fused_blocks: kinds,
            })
        }
        FusionMode::Att => {
            let w_f = store.get("fusion.w_f"); // [1, d_u]
            let w_col = w_f.transpose()?; // [d_u, 1]
            // score column per block, then a rowwise softmax over blocks
            let scores: Vec<Tensor> = parts
                .iter()
                .map(|(_, t)| t.matmul(&w_col))
                .collect::<Result<_>>()?;
            let alpha = concat_cols(&scores)?.softmax_rows()?; // [N, B]
            let mut fused: Option<Tensor> = None;
            for (b, (_, t)) in parts.iter().enumerate() {
                let weighted = t.mul_col(&alpha.slice_cols(b, 1)?)?;
                fused = Some(match fused {
                    None => weighted,
                    Some(acc) => acc.add(&weighted)?,
                });
            }
            Ok(Fused {
                representation: fused.unwrap(),
                fusion_weights: Some(alpha),
                fused_blocks: kinds,
            })
        }
    }
}

/// Rowwise softmax over classes: `softmax(R W_clf + b_clf)`.
pub fn classify(r: &Tensor, store: &ParamStore) -> Result<Tensor> {
    let w = store.get("clf.w");
    let (rw, ww) = (r.shape()[1], w.shape()[0]);
    if rw != ww {
        return Err(Error::ShapeMismatch {
            op: "classify",
            lhs: r.shape(),
            rhs: w.shape(),
        });
    }
    r.matmul(w)?.add_row(store.get("clf.b"))?.softmax_rows()
}

/// Argmax per row, ties broken toward the lowest class index.
pub fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    let shape = probs.shape();
    let (n, k) = (shape[0], shape[1]);
    let data = probs.data();
    (0..n)
        .map(|i| {
            let row = &data[i * k..(i + 1) * k];
            let mut best = 0;
            for j in 1..k {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Mean negative log-likelihood over all utterances of a batch of
/// conversations (total-utterance normalization).
pub fn batch_loss(predictions: &[(Tensor, Vec<usize>)]) -> Result<Tensor> {
    if predictions.is_empty() {
        return Err(Error::Data("empty prediction batch".into()));
    }
    let total: usize = predictions.iter().map(|(_, l)| l.len()).sum();
    let mut acc: Option<Tensor> = None;
    for (probs, labels) in predictions {
        let n = labels.len();
        // per-conversation mean re-weighted to a global utterance mean
        let term = probs
            .cross_entropy(labels)?
            .scale(n as f64 / total as f64);
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(&term)?,
        });
    }
    Ok(acc.unwrap())
}
