//! Text-to-video generation: a conditional VAE draws a static gist from the
//! caption, caption-generated kernels filter the gist into a conditioning
//! vector, and a mask/motion/background generator renders the clip under a
//! Wasserstein critic.

pub mod adversarial;
pub mod checkpoint;
pub mod config;
pub mod data_pipeline;
pub mod error;
pub mod evaluation;
pub mod gist_cvae;
pub mod text2filter;
pub mod text_encoder;
pub mod training;
pub mod video_generator;

pub use config::{ModelConfig, ObjectiveWeights, TrainConfig};
pub use error::{Error, Result};
