//! Model dimensions and training hyperparameters.

use serde::{Deserialize, Serialize};
use t2v_autograd::AdamConfig;

use crate::error::{invalid, Result};

/// Network dimensions shared by every module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Frames per clip (T).
    pub frames: usize,
    /// Color bands (C).
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Length of the encoded text vector (F_t).
    pub text_dim: usize,
    pub word_dim: usize,
    pub encoder_hidden: usize,
    /// Frame feature length (D_eta).
    pub frame_feat_dim: usize,
    /// Gist latent length (D_g).
    pub gist_latent_dim: usize,
    pub cvae_width: usize,
    /// Number of text-generated kernels (F_c).
    pub filter_channels: usize,
    pub filter_ky: usize,
    pub filter_kz: usize,
    /// Text-gist vector length (D_gt).
    pub text_gist_dim: usize,
    pub text_gist_width: usize,
    /// Video noise length (D_n).
    pub noise_dim: usize,
    pub generator_width: usize,
    pub critic_width: usize,
    pub critic_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            frames: 32,
            channels: 3,
            height: 64,
            width: 64,
            text_dim: 64,
            word_dim: 32,
            encoder_hidden: 64,
            frame_feat_dim: 256,
            gist_latent_dim: 64,
            cvae_width: 16,
            filter_channels: 64,
            filter_ky: 3,
            filter_kz: 3,
            text_gist_dim: 256,
            text_gist_width: 16,
            noise_dim: 64,
            generator_width: 16,
            critic_width: 16,
            critic_hidden: 64,
        }
    }
}

impl ModelConfig {
    /// Reduced resolution and widths for fast experiments on the toy corpus.
    pub fn toy() -> Self {
        ModelConfig {
            frames: 8,
            height: 16,
            width: 16,
            text_dim: 32,
            word_dim: 16,
            encoder_hidden: 32,
            frame_feat_dim: 64,
            gist_latent_dim: 16,
            cvae_width: 8,
            filter_channels: 16,
            text_gist_dim: 64,
            text_gist_width: 8,
            noise_dim: 16,
            generator_width: 8,
            critic_width: 8,
            critic_hidden: 32,
            ..Default::default()
        }
    }

    /// Number of stride-2 stages between the 4x4 seed and the frame size.
    pub fn levels(&self) -> usize {
        (self.height / 4).trailing_zeros() as usize
    }

    /// Temporal length of the generator's seed volume.
    pub fn seed_frames(&self) -> usize {
        self.frames >> self.levels()
    }

    pub fn frame_shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn clip_shape(&self) -> [usize; 4] {
        [self.frames, self.channels, self.height, self.width]
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("frames", self.frames),
            ("channels", self.channels),
            ("text_dim", self.text_dim),
            ("word_dim", self.word_dim),
            ("encoder_hidden", self.encoder_hidden),
            ("frame_feat_dim", self.frame_feat_dim),
            ("gist_latent_dim", self.gist_latent_dim),
            ("cvae_width", self.cvae_width),
            ("filter_channels", self.filter_channels),
            ("text_gist_dim", self.text_gist_dim),
            ("text_gist_width", self.text_gist_width),
            ("noise_dim", self.noise_dim),
            ("generator_width", self.generator_width),
            ("critic_width", self.critic_width),
            ("critic_hidden", self.critic_hidden),
        ];
        for (name, v) in pos {
            if v == 0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if self.height != self.width {
            return Err(invalid(format!(
                "frames must be square, got {}x{}",
                self.height, self.width
            )));
        }
        if self.height < 8 || !self.height.is_power_of_two() {
            return Err(invalid(format!(
                "frame size must be a power of two >= 8, got {}",
                self.height
            )));
        }
        let stride = 1usize << self.levels();
        if self.frames % stride != 0 {
            return Err(invalid(format!(
                "frames ({}) must be a multiple of {stride} for a {}x{} frame",
                self.frames, self.height, self.width
            )));
        }
        if self.filter_ky % 2 == 0 || self.filter_kz % 2 == 0 {
            return Err(invalid("filter kernel sizes must be odd for same padding"));
        }
        Ok(())
    }
}

/// Weights of the joint objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            gamma1: 1.0,
            gamma2: 1.0,
            gamma3: 0.1,
        }
    }
}

impl ObjectiveWeights {
    pub fn new(gamma1: f64, gamma2: f64, gamma3: f64) -> Result<Self> {
        let w = ObjectiveWeights {
            gamma1,
            gamma2,
            gamma3,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("gamma1", self.gamma1), ("gamma2", self.gamma2), ("gamma3", self.gamma3)] {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(invalid(format!("{name} must be a finite non-negative number, got {g}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub weights: ObjectiveWeights,
    pub clip_value: f64,
    #[serde(with = "adam_serde")]
    pub generator_adam: AdamConfig,
    #[serde(with = "adam_serde")]
    pub critic_adam: AdamConfig,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            weights: ObjectiveWeights::default(),
            clip_value: 0.01,
            generator_adam: AdamConfig::default(),
            critic_adam: AdamConfig::default(),
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.clip_value > 0.0) {
            return Err(invalid("clip_value must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        for adam in [&self.generator_adam, &self.critic_adam] {
            if !(adam.lr > 0.0) || !(0.0..1.0).contains(&adam.beta1) || !(0.0..1.0).contains(&adam.beta2) {
                return Err(invalid("optimizer settings out of range"));
            }
        }
        Ok(())
    }
}

mod adam_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use t2v_autograd::AdamConfig;

    #[derive(Serialize, Deserialize)]
    struct Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    }

    pub fn serialize<S: Serializer>(c: &AdamConfig, s: S) -> Result<S::Ok, S::Error> {
        Adam {
            lr: c.lr,
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.eps,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<AdamConfig, D::Error> {
        let a = Adam::deserialize(d)?;
        Ok(AdamConfig {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
        })
    }
}
