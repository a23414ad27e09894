//! Inspection artifacts for a single conversation: attention maps,
//! fusion weights, predictions, and the speaker masks, all as CSV.

use std::path::Path;

use crate::data::Conversation;
use crate::error::{Error, Result};
use crate::model::{ForwardOutput, Model};
use crate::transformer::{AttentionRecord, BlockKind};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Everything produced by one probe pass.
pub struct ProbeBundle {
    /// `block,query_index,key_index,weight` — top layer, averaged over heads.
    pub attention_csv: String,
    /// `block,layer,head,query_index,key_index,weight` — every recorded map.
    pub attention_per_head_csv: String,
    /// `utterance_index,<one column per fused block>` fusion weights
    /// (att mode only).
    pub fusion_csv: Option<String>,
    /// `utterance_index,gold,pred` (gold blank when unlabeled).
    pub predictions_csv: String,
    /// 0/1 validity matrices, one per mask.
    pub mask_conventional_csv: String,
    pub mask_intra_csv: String,
    pub mask_inter_csv: String,
}

/// Average the top-layer attention maps over heads, per block.
fn head_average(records: &[AttentionRecord], block: BlockKind) -> Option<(usize, Vec<f64>)> {
    let top = records
        .iter()
        .filter(|r| r.block == block)
        .map(|r| r.layer)
        .max()?;
    let maps: Vec<&AttentionRecord> = records
        .iter()
        .filter(|r| r.block == block && r.layer == top)
        .collect();
    let n = maps[0].n;
    let mut avg = vec![0.0; n * n];
    for m in &maps {
        for (a, w) in avg.iter_mut().zip(&m.weights) {
            *a += w;
        }
    }
    for a in &mut avg {
        *a /= maps.len() as f64;
    }
    Some((n, avg))
}

fn attention_csv(records: &[AttentionRecord]) -> String {
    let mut out = String::from("block,query_index,key_index,weight\n");
    for block in BlockKind::ALL {
        if let Some((n, avg)) = head_average(records, block) {
            for i in 0..n {
                for j in 0..n {
                    out.push_str(&format!(
                        "{},{i},{j},{:.12}\n",
                        block.as_str(),
                        avg[i * n + j]
                    ));
                }
            }
        }
    }
    out
}

fn attention_per_head_csv(records: &[AttentionRecord]) -> String {
    let mut out = String::from("block,layer,head,query_index,key_index,weight\n");
    for r in records {
        for i in 0..r.n {
            for j in 0..r.n {
                out.push_str(&format!(
                    "{},{},{},{i},{j},{:.12}\n",
                    r.block.as_str(),
                    r.layer,
                    r.head,
                    r.weights[i * r.n + j]
                ));
            }
        }
    }
    out
}

fn fusion_csv(out: &ForwardOutput) -> Option<String> {
    let weights = out.fusion_weights.as_ref()?;
    let shape = weights.shape();
    let (n, b) = (shape[0], shape[1]);
    let data = weights.data();
    let mut csv = String::from("utterance_index");
    for kind in &out.fused_blocks {
        csv.push_str(&format!(",{}", kind.as_str()));
    }
    csv.push('\n');
    for i in 0..n {
        csv.push_str(&i.to_string());
        for j in 0..b {
            csv.push_str(&format!(",{:.12}", data[i * b + j]));
        }
        csv.push('\n');
    }
    Some(csv)
}

fn predictions_csv(conv: &Conversation, preds: &[usize]) -> String {
    let mut out = String::from("utterance_index,gold,pred\n");
    for (i, (u, p)) in conv.utterances.iter().zip(preds).enumerate() {
        let gold = u.label.map(|l| l.to_string()).unwrap_or_default();
        out.push_str(&format!("{i},{gold},{p}\n"));
    }
    out
}

/// Run one evaluation-mode forward pass with probing enabled and collect
/// the artifacts.
pub fn probe(model: &Model, conv: &Conversation) -> Result<ProbeBundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(0); // unused in eval mode
    let out = model.forward(conv, false, &mut rng, true)?;
    let preds = crate::fusion::argmax_rows(&out.probs);
    Ok(ProbeBundle {
        attention_csv: attention_csv(&out.attention),
        attention_per_head_csv: attention_per_head_csv(&out.attention),
        fusion_csv: fusion_csv(&out),
        predictions_csv: predictions_csv(conv, &preds),
        mask_conventional_csv: out.masks.conventional.to_csv(),
        mask_intra_csv: out.masks.intra.to_csv(),
        mask_inter_csv: out.masks.inter.to_csv(),
    })
}

impl ProbeBundle {
    /// Write the bundle into `dir` with fixed file names. The per-head
    /// map is included only when `per_head` is set.
    pub fn write_to(&self, dir: &Path, per_head: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("attention.csv"), &self.attention_csv)?;
        if per_head {
            std::fs::write(dir.join("attention_per_head.csv"), &self.attention_per_head_csv)?;
        }
        if let Some(f) = &self.fusion_csv {
            std::fs::write(dir.join("fusion_weights.csv"), f)?;
        }
        std::fs::write(dir.join("predictions.csv"), &self.predictions_csv)?;
        std::fs::write(dir.join("mask_conventional.csv"), &self.mask_conventional_csv)?;
        std::fs::write(dir.join("mask_intra.csv"), &self.mask_intra_csv)?;
        std::fs::write(dir.join("mask_inter.csv"), &self.mask_inter_csv)?;
        Ok(())
    }
}

/// Parse the head-averaged attention CSV back into per-block matrices.
pub fn parse_attention_csv(csv: &str) -> Result<Vec<(BlockKind, usize, Vec<f64>)>> {
    let mut per_block: Vec<(BlockKind, Vec<(usize, usize, f64)>)> = Vec::new();
    for (lineno, line) in csv.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected 4 columns, got {}", cols.len()),
            });
        }
        let block: BlockKind = cols[0].parse()?;
        let bad = |msg: &str| Error::Parse {
            line: lineno + 1,
            msg: msg.into(),
        };
        let i: usize = cols[1].parse().map_err(|_| bad("bad query index"))?;
        let j: usize = cols[2].parse().map_err(|_| bad("bad key index"))?;
        let w: f64 = cols[3].parse().map_err(|_| bad("bad weight"))?;
        match per_block.iter_mut().find(|(b, _)| *b == block) {
            Some((_, cells)) => cells.push((i, j, w)),
            None => per_block.push((block, vec![(i, j, w)])),
        }
    }
    let mut out = Vec::new();
    for (block, cells) in per_block {
        let n = cells.iter().map(|&(i, _, _)| i + 1).max().unwrap_or(0);
        let mut m = vec![0.0; n * n];
        for (i, j, w) in cells {
            m[i * n + j] = w;
        }
        out.push((block, n, m));
    }
    Ok(out)
}
