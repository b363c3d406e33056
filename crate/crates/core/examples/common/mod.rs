//! Small encoder and synthetic data shared by the examples. Trains in a few
//! seconds on one core.

#![allow(dead_code)]

use sits_align::augment::{AugmentConfig, Strategy};
use sits_align::contrastive::LossConfig;
use sits_align::encoder::EncoderConfig;
use sits_align::synth::{generate, SynthData, SynthSpec};
use sits_align::train::{train_contrastive, TrainConfig, TrainSetup, TrainState};

pub const WIDTH: usize = 64;

pub fn small_data() -> sits_align::Result<SynthData> {
    generate(&SynthSpec {
        embed_width: WIDTH,
        ..SynthSpec::default()
    })
}

pub fn small_setup() -> TrainSetup {
    TrainSetup {
        encoder: EncoderConfig {
            layers: 2,
            heads: 4,
            model_width: WIDTH,
            ffn_width: WIDTH,
            head_width: WIDTH,
            output_width: WIDTH,
            ..EncoderConfig::default()
        },
        loss: LossConfig {
            queue_size: 256,
            ..LossConfig::default()
        },
        augment: AugmentConfig {
            strategy: Strategy::TsMixAug,
            ..AugmentConfig::default()
        },
        train: TrainConfig {
            epochs: 20,
            warmup_epochs: 2,
            batch_size: 32,
            lr: 2e-3,
            ..TrainConfig::default()
        },
    }
}

/// Synthetic data plus an encoder trained on its training split.
pub fn trained() -> sits_align::Result<(SynthData, TrainState)> {
    let data = small_data()?;
    let state = train_contrastive(&data.train, &small_setup(), 0, None, |_| {})?;
    Ok((data, state))
}
