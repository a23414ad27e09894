//! Run configuration: a flat key=value config file, CLI overrides, and
//! the per-dataset presets.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::encoder::{EncoderConfig, ProviderKind};
use crate::error::{Error, Result};
use crate::fusion::FusionMode;
use crate::model::ModelConfig;
use crate::optim::TrainConfig;
use crate::transformer::{BlockConfig, BlockKind};

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Train/dev split when no dev file is present.
    pub split_ratio: f64,
    pub split_seed: u64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            model: ModelConfig {
                encoder: EncoderConfig::default(),
                block: BlockConfig::default(),
                fusion: FusionMode::Att,
                num_classes: 2,
                blocks: BlockKind::ALL.to_vec(),
                window: None,
            },
            train: TrainConfig::default(),
            split_ratio: 0.8,
            split_seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for key {key:?}")))
}

pub fn parse_blocks(value: &str) -> Result<Vec<BlockKind>> {
    let blocks: Vec<BlockKind> = value
        .split(',')
        .map(|b| b.trim().parse())
        .collect::<Result<_>>()?;
    if blocks.is_empty() {
        return Err(Error::Config("empty block list".into()));
    }
    Ok(blocks)
}

pub fn parse_window(value: &str) -> Result<Option<(usize, usize)>> {
    let v = value.trim();
    if v == "none" || v == "all" {
        return Ok(None);
    }
    let parts: Vec<&str> = v
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("bad window {value:?}; want x,y or none")));
    }
    // prior extent may be written negative, matching the (-x, y) notation
    let x: i64 = parse("window", parts[0].trim())?;
    let y: i64 = parse("window", parts[1].trim())?;
    if y < 0 {
        return Err(Error::Config(format!("posterior window {y} must be >= 0")));
    }
    Ok(Some((x.unsigned_abs() as usize, y as usize)))
}

impl RunConfig {
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "provider" => {
                self.model.encoder.provider = match value {
                    "trainable-bow" => ProviderKind::TrainableBow,
                    "precomputed" => ProviderKind::Precomputed,
                    other => return Err(Error::Config(format!("unknown provider {other:?}"))),
                }
            }
            "vocab_hash_buckets" | "buckets" => {
                self.model.encoder.vocab_hash_buckets = parse(key, value)?
            }
            "d_w" => self.model.encoder.d_w = parse(key, value)?,
            "d_u" => {
                self.model.encoder.d_u = parse(key, value)?;
                self.model.block.d_u = parse(key, value)?;
            }
            "heads" => self.model.block.heads = parse(key, value)?,
            "layers" => self.model.block.layers = parse(key, value)?,
            "d_ff" => self.model.block.d_ff = parse(key, value)?,
            "dropout" => self.model.block.dropout = parse(key, value)?,
            "learned_positional" => self.model.block.learned_positional = parse(key, value)?,
            "max_positions" => self.model.block.max_positions = parse(key, value)?,
            "fusion" => self.model.fusion = value.parse()?,
            "blocks" => self.model.blocks = parse_blocks(value)?,
            "window" => self.model.window = parse_window(value)?,
            "num_classes" => self.model.num_classes = parse(key, value)?,
            "total_steps" => self.train.total_steps = parse(key, value)?,
            "warmup_steps" => self.train.warmup_steps = parse(key, value)?,
            "peak_lr" | "lr" => self.train.peak_lr = parse(key, value)?,
            "weight_decay" => self.train.weight_decay = parse(key, value)?,
            "beta1" => self.train.beta1 = parse(key, value)?,
            "beta2" => self.train.beta2 = parse(key, value)?,
            "eps" => self.train.eps = parse(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            "eval_every" => self.train.eval_every = parse(key, value)?,
            "checkpoint_every" => {
                self.train.checkpoint_every = if value == "none" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "clip_norm" => {
                self.train.clip_norm = if value == "none" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "select_metric" => self.train.select_metric = value.to_string(),
            "split_ratio" => self.split_ratio = parse(key, value)?,
            "split_seed" => self.split_seed = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        if self.model.block.d_ff == 0 {
            self.model.block.d_ff = 4 * self.model.block.d_u;
        }
        Ok(())
    }

    /// Baked-in per-dataset hyperparameters.
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let kvs: &[(&str, &str)] = match name {
            "iemocap" => &[
                ("d_u", "300"),
                ("layers", "6"),
                ("heads", "6"),
                ("peak_lr", "1e-5"),
                ("d_ff", "1200"),
                ("dropout", "0.1"),
                ("total_steps", "10000"),
                ("warmup_steps", "1000"),
                ("num_classes", "6"),
                ("select_metric", "weighted_f1"),
            ],
            "meld" => &[
                ("d_u", "200"),
                ("layers", "1"),
                ("heads", "4"),
                ("peak_lr", "8e-6"),
                ("d_ff", "800"),
                ("dropout", "0.1"),
                ("total_steps", "10000"),
                ("warmup_steps", "1000"),
                ("num_classes", "7"),
                ("select_metric", "m_f1"),
            ],
            other => return Err(Error::Config(format!("unknown preset {other:?}"))),
        };
        for (k, v) in kvs {
            self.apply_kv(k, v)?;
        }
        Ok(())
    }

    /// Load a flat `key = value` file ('#' starts a comment).
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Echo the effective configuration as a flat key=value listing.
    pub fn to_flat(&self) -> String {
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert(
            "provider",
            match self.model.encoder.provider {
                ProviderKind::TrainableBow => "trainable-bow".into(),
                ProviderKind::Precomputed => "precomputed".into(),
            },
        );
        kv.insert("vocab_hash_buckets", self.model.encoder.vocab_hash_buckets.to_string());
        kv.insert("d_w", self.model.encoder.d_w.to_string());
        kv.insert("d_u", self.model.encoder.d_u.to_string());
        kv.insert("heads", self.model.block.heads.to_string());
        kv.insert("layers", self.model.block.layers.to_string());
        kv.insert("d_ff", self.model.block.d_ff.to_string());
        kv.insert("dropout", self.model.block.dropout.to_string());
        kv.insert("learned_positional", self.model.block.learned_positional.to_string());
        kv.insert(
            "fusion",
            match self.model.fusion {
                FusionMode::Add => "add".into(),
                FusionMode::Cat => "cat".into(),
                FusionMode::Att => "att".into(),
            },
        );
        kv.insert(
            "blocks",
            self.model
                .blocks
                .iter()
                .map(|b| b.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.insert(
            "window",
            match self.model.window {
                None => "none".into(),
                Some((x, y)) => format!("{x},{y}"),
            },
        );
        kv.insert("num_classes", self.model.num_classes.to_string());
        kv.insert("total_steps", self.train.total_steps.to_string());
        kv.insert("warmup_steps", self.train.warmup_steps.to_string());
        kv.insert("peak_lr", format!("{:e}", self.train.peak_lr));
        kv.insert("weight_decay", self.train.weight_decay.to_string());
        kv.insert("seed", self.train.seed.to_string());
        kv.insert("eval_every", self.train.eval_every.to_string());
        kv.insert("select_metric", self.train.select_metric.clone());
        kv.insert("split_ratio", self.split_ratio.to_string());
        kv.insert("split_seed", self.split_seed.to_string());
        let mut out = String::new();
        for (k, v) in kv {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}
