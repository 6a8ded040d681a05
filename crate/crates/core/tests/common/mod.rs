#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use t2v_autograd::{Tape, Tensor, Var};
use t2v_core::data_pipeline::{synthesize_toy_corpus, ToyCorpusSpec};
use t2v_core::text_encoder::{Caption, Vocabulary};
use t2v_core::video_generator::VideoClip;
use t2v_core::{ModelConfig, TrainConfig};

/// 4 frames of 8x8 pixels with every width at two or three units.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        frames: 4,
        channels: 3,
        height: 8,
        width: 8,
        text_dim: 8,
        word_dim: 4,
        encoder_hidden: 5,
        frame_feat_dim: 6,
        gist_latent_dim: 4,
        cvae_width: 2,
        filter_channels: 2,
        filter_ky: 3,
        filter_kz: 3,
        text_gist_dim: 5,
        text_gist_width: 2,
        noise_dim: 3,
        generator_width: 2,
        critic_width: 2,
        critic_hidden: 4,
    }
}

/// Like [`tiny_config`] at 16x16 so the generators have hidden upsampling layers.
pub fn small_config() -> ModelConfig {
    ModelConfig {
        height: 16,
        width: 16,
        ..tiny_config()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const CAPTIONS: [&str; 3] = [
    "a shape moving right on a red background",
    "a shape moving up on a blue background",
    "swimming in the swimming pool",
];

pub fn vocab() -> Vocabulary {
    Vocabulary::build(&CAPTIONS).unwrap()
}

pub fn captions(vocab: &Vocabulary) -> Vec<Caption> {
    CAPTIONS.iter().map(|c| vocab.caption(c).unwrap()).collect()
}

/// Weighted sum with fixed random weights, so every output entry matters.
pub fn probe<'t>(y: Var<'t, f64>, seed: u64) -> Var<'t, f64> {
    let w = Tensor::randn(&y.shape(), &mut rng(seed));
    y.mul(y.tape().constant(w)).sum()
}

pub fn uniform<'t>(tape: &'t Tape<f64>, shape: &[usize], seed: u64) -> Var<'t, f64> {
    tape.constant(Tensor::rand_uniform(shape, -1.0, 1.0, &mut rng(seed)))
}

/// A zero-noise toy corpus at the resolution of `cfg`.
pub fn toy_pairs(cfg: &ModelConfig, colors: usize, motions: usize, per: usize, seed: u64) -> (Vocabulary, Vec<(VideoClip, Caption)>) {
    let spec = ToyCorpusSpec {
        frames: cfg.frames,
        size: cfg.height,
        ..ToyCorpusSpec::standard(colors, motions, per, seed)
    };
    let pairs = synthesize_toy_corpus(&spec).unwrap();
    let texts: Vec<&str> = pairs.iter().map(|p| p.caption.as_str()).collect();
    let vocab = Vocabulary::build(&texts).unwrap();
    let data = pairs
        .iter()
        .map(|p| (p.clip.clone(), vocab.caption(&p.caption).unwrap()))
        .collect();
    (vocab, data)
}

pub fn train_config(seed: u64, batch_size: usize) -> TrainConfig {
    TrainConfig {
        seed,
        batch_size,
        ..TrainConfig::default()
    }
}
