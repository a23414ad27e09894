//! The full model: sentence-level encoding, speaker-masked transformer
//! stacks, fusion, and classification, over one conversation at a time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Conversation;
use crate::encoder::{EncoderConfig, PrecomputedVectors, UtteranceEncoder};
use crate::error::{Error, Result};
use crate::fusion::{self, FusionConfig, FusionMode};
use crate::masks::{build_masks, MaskSet};
use crate::metrics::{report, MetricsReport};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::transformer::{self, AttentionRecord, BlockConfig, BlockKind};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub block: BlockConfig,
    pub fusion: FusionMode,
    pub num_classes: usize,
    /// Enabled transformer stacks; a single conventional stack with add
    /// fusion is the plain-transformer ablation.
    pub blocks: Vec<BlockKind>,
    /// Context window (prior, posterior), intersected into all masks.
    pub window: Option<(usize, usize)>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.block.validate()?;
        if self.encoder.d_u != self.block.d_u {
            return Err(Error::Config(format!(
                "encoder d_u ({}) must match block d_u ({})",
                self.encoder.d_u, self.block.d_u
            )));
        }
        if self.blocks.is_empty() {
            return Err(Error::Config("at least one block must be enabled".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        Ok(())
    }

    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            mode: self.fusion,
            d_u: self.block.d_u,
            num_classes: self.num_classes,
        }
    }
}

pub struct ForwardOutput {
    /// `[N, K]` row-stochastic emotion distributions.
    pub probs: Tensor,
    /// `[N, B]` fusion weights for att mode.
    pub fusion_weights: Option<Tensor>,
    pub fused_blocks: Vec<BlockKind>,
    pub attention: Vec<AttentionRecord>,
    pub masks: MaskSet,
}

pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub encoder: UtteranceEncoder,
}

impl Model {
    /// Build a model with freshly initialized parameters. Initialization
    /// order is fixed (encoder, blocks, fusion) so equal seeds give
    /// bitwise-equal parameters.
    pub fn new(
        config: ModelConfig,
        precomputed: Option<PrecomputedVectors>,
        seed: u64,
    ) -> Result<Model> {
        config.validate()?;
        let encoder = UtteranceEncoder::new(config.encoder.clone(), precomputed)?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        encoder.init_params(&mut params, &mut rng);
        transformer::init_block_params(&config.block, &config.blocks, &mut params, &mut rng);
        fusion::init_fusion_params(
            &config.fusion_config(),
            config.blocks.len(),
            &mut params,
            &mut rng,
        );
        Ok(Model {
            config,
            params,
            encoder,
        })
    }

    pub fn forward(
        &self,
        conv: &Conversation,
        train: bool,
        rng: &mut ChaCha8Rng,
        probe: bool,
    ) -> Result<ForwardOutput> {
        let masks = build_masks(&conv.speakers(), self.config.window)?;
        let c = self.encoder.encode_conversation(&self.params, conv)?;
        let outputs = transformer::run_blocks(
            &c,
            &masks,
            &self.config.blocks,
            &self.config.block,
            &self.params,
            train,
            rng,
            probe,
        )?;
        let fused = fusion::fuse(&outputs, self.config.fusion, &self.params)?;
        let probs = fusion::classify(&fused.representation, &self.params)?;
        Ok(ForwardOutput {
            probs,
            fusion_weights: fused.fusion_weights,
            fused_blocks: fused.fused_blocks,
            attention: outputs.attention,
            masks,
        })
    }

    /// Loss over one conversation (batch size 1: the per-conversation mean).
    pub fn loss(&self, conv: &Conversation, train: bool, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let labels = conv
            .labels()
            .ok_or_else(|| Error::Data(format!("conversation {:?} has unlabeled utterances", conv.id)))?;
        let out = self.forward(conv, train, rng, false)?;
        out.probs.cross_entropy(&labels)
    }

    /// Deterministic evaluation-mode predictions.
    pub fn predict(&self, conv: &Conversation) -> Result<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0); // unused in eval mode
        let out = self.forward(conv, false, &mut rng, false)?;
        Ok(fusion::argmax_rows(&out.probs))
    }

    /// Metrics over a labeled conversation set.
    pub fn evaluate(&self, convs: &[Conversation]) -> Result<MetricsReport> {
        let mut gold = Vec::new();
        let mut pred = Vec::new();
        for c in convs {
            let labels = c
                .labels()
                .ok_or_else(|| Error::Data(format!("conversation {:?} has unlabeled utterances", c.id)))?;
            gold.extend(labels);
            pred.extend(self.predict(c)?);
        }
        report(&gold, &pred, self.config.num_classes)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig, SyntheticRule};
    use crate::encoder::ProviderKind;

    pub fn small_config(blocks: Vec<BlockKind>, fusion: FusionMode) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                provider: ProviderKind::TrainableBow,
                vocab_hash_buckets: 64,
                d_w: 8,
                d_u: 8,
            },
            block: BlockConfig {
                d_u: 8,
                heads: 2,
                layers: 1,
                d_ff: 16,
                dropout: 0.0,
                learned_positional: false,
                max_positions: 64,
            },
            fusion,
            num_classes: 4,
            blocks,
            window: None,
        }
    }

    fn sample_conv() -> Conversation {
        let cfg = SyntheticConfig {
            train_convs: 1,
            dev_convs: 0,
            test_convs: 0,
            speakers_per_conv: 2,
            utterances_per_conv: 5,
            num_classes: 4,
            rule: SyntheticRule::SameSpeakerPrevious,
            seed: 3,
        };
        generate_synthetic(&cfg).train.remove(0)
    }

    #[test]
    fn forward_shapes() {
        let model = Model::new(small_config(BlockKind::ALL.to_vec(), FusionMode::Att), None, 0).unwrap();
        let conv = sample_conv();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = model.forward(&conv, false, &mut rng, true).unwrap();
        assert_eq!(out.probs.shape(), vec![5, 4]);
        assert_eq!(out.fusion_weights.unwrap().shape(), vec![5, 3]);
        // 3 blocks x 1 layer x 2 heads of attention records
        assert_eq!(out.attention.len(), 6);
    }

    #[test]
    fn probs_rows_sum_to_one() {
        let model = Model::new(small_config(BlockKind::ALL.to_vec(), FusionMode::Cat), None, 1).unwrap();
        let conv = sample_conv();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = model.forward(&conv, false, &mut rng, false).unwrap();
        let p = out.probs.data();
        for i in 0..5 {
            let sum: f64 = p[i * 4..(i + 1) * 4].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_params_and_outputs() {
        let cfg = small_config(BlockKind::ALL.to_vec(), FusionMode::Att);
        let a = Model::new(cfg.clone(), None, 7).unwrap();
        let b = Model::new(cfg, None, 7).unwrap();
        for name in a.params.names() {
            assert_eq!(a.params.get(&name).data(), b.params.get(&name).data());
        }
        let conv = sample_conv();
        let mut r1 = ChaCha8Rng::seed_from_u64(0);
        let mut r2 = ChaCha8Rng::seed_from_u64(0);
        let pa = a.forward(&conv, false, &mut r1, false).unwrap().probs.data();
        let pb = b.forward(&conv, false, &mut r2, false).unwrap().probs.data();
        assert_eq!(pa, pb);
    }

    #[test]
    fn monologue_does_not_nan() {
        let model = Model::new(small_config(BlockKind::ALL.to_vec(), FusionMode::Att), None, 2).unwrap();
        let conv = Conversation {
            id: "m".into(),
            utterances: (0..4)
                .map(|i| crate::data::Utterance {
                    speaker: "A".into(),
                    tokens: vec![format!("c{i}")],
                    label: Some(0),
                })
                .collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = model.forward(&conv, false, &mut rng, false).unwrap();
        assert!(out.probs.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn mismatched_dims_rejected() {
        let mut cfg = small_config(vec![BlockKind::Conventional], FusionMode::Add);
        cfg.encoder.d_u = 16;
        assert!(Model::new(cfg, None, 0).is_err());
    }

    #[test]
    fn empty_blocks_rejected() {
        let cfg = small_config(vec![], FusionMode::Add);
        assert!(Model::new(cfg, None, 0).is_err());
    }
}
