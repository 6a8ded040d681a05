//! Flat `key = value` run configuration with strict key checking and
//! `T2V_<KEY>` environment overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use t2v_autograd::AdamConfig;
use t2v_core::data_pipeline::ClipQualificationConfig;
use t2v_core::evaluation::ClassifierConfig;
use t2v_core::training::VariantKind;
use t2v_core::{ModelConfig, ObjectiveWeights, TrainConfig};

pub const ENV_PREFIX: &str = "T2V_";

#[derive(Debug)]
pub enum ConfigError {
    UnknownKey { key: String, source: String },
    BadValue { key: String, value: String, reason: String },
    Malformed { source: String, line: usize, text: String },
    Duplicate { key: String, source: String },
    Io { path: String, error: std::io::Error },
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::UnknownKey { key, source } => write!(f, "unknown config key `{key}` in {source}"),
            ConfigError::BadValue { key, value, reason } => write!(f, "bad value {value:?} for `{key}`: {reason}"),
            ConfigError::Malformed { source, line, text } => {
                write!(f, "{source}:{line}: expected `key = value`, found {text:?}")
            }
            ConfigError::Duplicate { key, source } => write!(f, "key `{key}` set twice in {source}"),
            ConfigError::Io { path, error } => write!(f, "cannot read config {path}: {error}"),
            ConfigError::Invalid(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

macro_rules! run_config {
    ($($(#[doc = $doc:literal])* $key:ident : $ty:ty = $default:expr;)*) => {
        /// Every tunable of a run. Absent keys take these defaults.
        #[derive(Clone, Debug, PartialEq)]
        pub struct RunConfig {
            $($(#[doc = $doc])* pub $key: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $($key: $default,)* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($key)),*];

            pub fn set(&mut self, key: &str, value: &str, source: &str) -> Result<(), ConfigError> {
                match key {
                    $(stringify!($key) => self.$key = parse_value(key, value)?,)*
                    _ => {
                        return Err(ConfigError::UnknownKey {
                            key: key.into(),
                            source: source.into(),
                        })
                    }
                }
                Ok(())
            }

            /// `(key, value)` for every key, in declaration order.
            pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($key), self.$key.to_string())),*]
            }
        }
    };
}

run_config! {
    variant: String = "T2V".into();
    /// Frames per clip (T); also the qualified clip length.
    frames: usize = ModelConfig::default().frames;
    channels: usize = ModelConfig::default().channels;
    height: usize = ModelConfig::default().height;
    width: usize = ModelConfig::default().width;
    /// Encoded text length (F_t).
    text_dim: usize = ModelConfig::default().text_dim;
    word_dim: usize = ModelConfig::default().word_dim;
    encoder_hidden: usize = ModelConfig::default().encoder_hidden;
    frame_feat_dim: usize = ModelConfig::default().frame_feat_dim;
    /// Gist latent length (D_g).
    gist_latent_dim: usize = ModelConfig::default().gist_latent_dim;
    cvae_width: usize = ModelConfig::default().cvae_width;
    /// Text-generated kernel count (F_c).
    filter_channels: usize = ModelConfig::default().filter_channels;
    filter_ky: usize = ModelConfig::default().filter_ky;
    filter_kz: usize = ModelConfig::default().filter_kz;
    /// Text-gist length (D_gt).
    text_gist_dim: usize = ModelConfig::default().text_gist_dim;
    text_gist_width: usize = ModelConfig::default().text_gist_width;
    /// Video noise length (D_n).
    noise_dim: usize = ModelConfig::default().noise_dim;
    generator_width: usize = ModelConfig::default().generator_width;
    critic_width: usize = ModelConfig::default().critic_width;
    critic_hidden: usize = ModelConfig::default().critic_hidden;
    gamma1: f64 = ObjectiveWeights::default().gamma1;
    gamma2: f64 = ObjectiveWeights::default().gamma2;
    gamma3: f64 = ObjectiveWeights::default().gamma3;
    clip_value: f64 = TrainConfig::default().clip_value;
    generator_lr: f64 = TrainConfig::default().generator_adam.lr;
    generator_beta1: f64 = TrainConfig::default().generator_adam.beta1;
    generator_beta2: f64 = TrainConfig::default().generator_adam.beta2;
    critic_lr: f64 = TrainConfig::default().critic_adam.lr;
    critic_beta1: f64 = TrainConfig::default().critic_adam.beta1;
    critic_beta2: f64 = TrainConfig::default().critic_adam.beta2;
    adam_eps: f64 = TrainConfig::default().generator_adam.eps;
    batch_size: usize = TrainConfig::default().batch_size;
    seed: u64 = 0;
    steps: u64 = 2000;
    fps: u32 = ClipQualificationConfig::default().fps;
    min_keypoint_overlap: f64 = ClipQualificationConfig::default().min_keypoint_overlap;
    classifier_epochs: usize = ClassifierConfig::default().epochs;
    classifier_lr: f64 = ClassifierConfig::default().learning_rate;
    /// Generated clips per class during evaluation.
    eval_per_class: usize = 20;
    workers: usize = 1;
    corpus_dir: String = "corpus".into();
    run_dir: String = "run".into();
}

impl RunConfig {
    /// Defaults, then the file (if any), then `T2V_*` variables from `env`.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|error| ConfigError::Io {
                path: p.display().to_string(),
                error,
            })?;
            cfg.apply_text(&text, &p.display().to_string())?;
        }
        cfg.apply_env(env)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text, "<config>")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<(), ConfigError> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Malformed {
                    source: source.into(),
                    line: i + 1,
                    text: raw.into(),
                });
            };
            let key = k.trim();
            let v = v.trim();
            let value = v
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .unwrap_or(v);
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate {
                    key: key.into(),
                    source: source.into(),
                });
            }
            self.set(key, value, source)?;
        }
        Ok(())
    }

    pub fn apply_env(&mut self, env: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        let mut vars: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (k, v) in vars {
            let key = k[ENV_PREFIX.len()..].to_ascii_lowercase();
            self.set(&key, v.trim(), &format!("environment variable {k}"))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn variant_kind(&self) -> Result<VariantKind, ConfigError> {
        self.variant.parse().map_err(|e: t2v_core::Error| ConfigError::BadValue {
            key: "variant".into(),
            value: self.variant.clone(),
            reason: e.to_string(),
        })
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            frames: self.frames,
            channels: self.channels,
            height: self.height,
            width: self.width,
            text_dim: self.text_dim,
            word_dim: self.word_dim,
            encoder_hidden: self.encoder_hidden,
            frame_feat_dim: self.frame_feat_dim,
            gist_latent_dim: self.gist_latent_dim,
            cvae_width: self.cvae_width,
            filter_channels: self.filter_channels,
            filter_ky: self.filter_ky,
            filter_kz: self.filter_kz,
            text_gist_dim: self.text_gist_dim,
            text_gist_width: self.text_gist_width,
            noise_dim: self.noise_dim,
            generator_width: self.generator_width,
            critic_width: self.critic_width,
            critic_hidden: self.critic_hidden,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let adam = |lr, beta1, beta2| AdamConfig {
            lr,
            beta1,
            beta2,
            eps: self.adam_eps,
        };
        TrainConfig {
            weights: ObjectiveWeights {
                gamma1: self.gamma1,
                gamma2: self.gamma2,
                gamma3: self.gamma3,
            },
            clip_value: self.clip_value,
            generator_adam: adam(self.generator_lr, self.generator_beta1, self.generator_beta2),
            critic_adam: adam(self.critic_lr, self.critic_beta1, self.critic_beta2),
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }

    pub fn qualification(&self) -> ClipQualificationConfig {
        ClipQualificationConfig {
            fps: self.fps,
            clip_length: self.frames,
            resolution: self.height,
            min_keypoint_overlap: self.min_keypoint_overlap,
            ..ClipQualificationConfig::default()
        }
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        ClassifierConfig {
            epochs: self.classifier_epochs,
            learning_rate: self.classifier_lr,
            seed: self.seed,
            ..ClassifierConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |e: t2v_core::Error| ConfigError::Invalid(e.to_string());
        self.variant_kind()?;
        self.model_config().validate().map_err(wrap)?;
        self.train_config().validate().map_err(wrap)?;
        self.qualification().validate().map_err(wrap)?;
        if self.workers == 0 || self.steps == 0 || self.eval_per_class == 0 || self.classifier_epochs == 0 {
            return Err(ConfigError::Invalid(
                "workers, steps, eval_per_class and classifier_epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}
