//! Training loop: one conversation per optimizer step, seeded epoch
//! shuffles, periodic dev evaluation, and resumable checkpoints.
//!
//! Whenever a periodic checkpoint is written, the live parameters and
//! optimizer moments are immediately re-read from the serialized bytes,
//! so a run resumed from that checkpoint continues bit-identically to the
//! run that wrote it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::{self, Checkpoint};
use crate::data::Conversation;
use crate::error::{Error, Result};
use crate::metrics::Scores;
use crate::model::Model;
use crate::optim::{adamw_step, clip_grad_norm, AdamState, TrainConfig};

#[derive(Clone, Debug, Serialize)]
pub struct LogEntry {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<Scores>,
}

pub struct TrainReport {
    pub log: Vec<LogEntry>,
    pub best_step: usize,
    pub best_metric: f64,
    pub best_checkpoint: Vec<u8>,
    pub final_checkpoint: Vec<u8>,
    /// Periodic resumable snapshots (step, bytes).
    pub periodic_checkpoints: Vec<(usize, Vec<u8>)>,
}

fn epoch_order(len: usize, epoch: u64, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed.wrapping_add((epoch + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    );
    order.shuffle(&mut rng);
    order
}

/// Train from scratch.
pub fn train(
    model: &Model,
    train_set: &[Conversation],
    dev_set: &[Conversation],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let mut state = AdamState::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run_loop(model, train_set, dev_set, cfg, &mut state, 0, &mut rng)
}

/// Continue training from a periodic checkpoint.
pub fn resume(
    model: &Model,
    ckpt: &Checkpoint,
    train_set: &[Conversation],
    dev_set: &[Conversation],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    ckpt.apply_to_model(model)?;
    let mut state = ckpt.optim_state();
    let mut rng = ChaCha8Rng::seed_from_u64(ckpt.rng_seed);
    rng.set_word_pos(ckpt.rng_word_pos);
    run_loop(model, train_set, dev_set, cfg, &mut state, ckpt.step, &mut rng)
}

fn run_loop(
    model: &Model,
    train_set: &[Conversation],
    dev_set: &[Conversation],
    cfg: &TrainConfig,
    state: &mut AdamState,
    start_step: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let len = train_set.len();
    let mut log = Vec::new();
    let mut order: Vec<usize> = Vec::new();
    let mut order_epoch = u64::MAX;
    let mut best_metric = f64::NEG_INFINITY;
    let mut best_step = 0;
    let mut best_checkpoint: Option<Vec<u8>> = None;
    let mut periodic = Vec::new();

    for step in (start_step + 1)..=cfg.total_steps {
        let epoch = ((step - 1) / len) as u64;
        if epoch != order_epoch {
            order = epoch_order(len, epoch, cfg.seed);
            order_epoch = epoch;
        }
        let conv = &train_set[order[(step - 1) % len]];

        model.params.zero_grads();
        let loss = model.loss(conv, true, rng)?;
        let loss_value = loss.item();
        if !loss_value.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                loss: loss_value,
            });
        }
        loss.backward();
        if let Some(max_norm) = cfg.clip_norm {
            clip_grad_norm(&model.params, max_norm);
        }
        let lr = cfg.lr_at(step);
        adamw_step(&model.params, state, lr, cfg);

        let mut dev_scores = None;
        if !dev_set.is_empty() && (step % cfg.eval_every == 0 || step == cfg.total_steps) {
            let report = model.evaluate(dev_set)?;
            let metric = report.scores.get(&cfg.select_metric).ok_or_else(|| {
                Error::Config(format!("unknown selection metric {:?}", cfg.select_metric))
            })?;
            if metric > best_metric {
                best_metric = metric;
                best_step = step;
                best_checkpoint = Some(checkpoint::to_bytes(
                    model,
                    Some(state),
                    step,
                    cfg.seed,
                    rng.get_word_pos(),
                )?);
            }
            dev_scores = Some(report.scores);
        }
        log.push(LogEntry {
            step,
            lr,
            loss: loss_value,
            dev: dev_scores,
        });

        if let Some(every) = cfg.checkpoint_every {
            if step % every == 0 && step < cfg.total_steps {
                let bytes =
                    checkpoint::to_bytes(model, Some(state), step, cfg.seed, rng.get_word_pos())?;
                // sync live state to the persisted precision
                let ckpt = checkpoint::from_bytes(&bytes)?;
                ckpt.apply_to_model(model)?;
                *state = ckpt.optim_state();
                periodic.push((step, bytes));
            }
        }
    }

    let final_checkpoint = checkpoint::to_bytes(
        model,
        Some(state),
        cfg.total_steps,
        cfg.seed,
        rng.get_word_pos(),
    )?;
    if best_checkpoint.is_none() {
        best_step = cfg.total_steps;
        best_metric = f64::NAN;
        best_checkpoint = Some(final_checkpoint.clone());
    }
    Ok(TrainReport {
        log,
        best_step,
        best_metric,
        best_checkpoint: best_checkpoint.unwrap(),
        final_checkpoint,
        periodic_checkpoints: periodic,
    })
}
