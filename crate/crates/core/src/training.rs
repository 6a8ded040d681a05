//! Joint objective, model variants, and the alternating critic/generator step.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use t2v_autograd::{concat, Adam, Float, ParamStore, Tape, Tensor, Var};

use crate::adversarial::{critic_loss, enforce_lipschitz, generator_adv_loss, Critic};
use crate::config::{ModelConfig, ObjectiveWeights, TrainConfig};
use crate::error::{invalid, Error, Result};
use crate::gist_cvae::{CvaeTerms, Gist, GistCvae};
use crate::text2filter::{GistFeatureEncoder, Text2Filter};
use crate::text_encoder::{Caption, TextEncoder, Vocabulary};
use crate::video_generator::{GeneratorOutput, VideoClip, VideoGenerator};

pub const TEXT_PREFIX: &str = "text.";
pub const CVAE_PREFIX: &str = "cvae.";
pub const TEXT2FILTER_PREFIX: &str = "text2filter.";
pub const GIST_ENCODER_PREFIX: &str = "gist_encoder.";
pub const GENERATOR_PREFIX: &str = "generator.";
pub const CRITIC_PREFIX: &str = "critic.";

pub const LOSS_LOG_HEADER: &str = "step,cvae,gan_d,gan_g,recons,total";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariantKind {
    /// Text and noise straight into the video generator.
    DT2V,
    /// DT2V with mismatched caption pairs shown to the critic as fakes.
    PT2V,
    /// Gist encoding concatenated with text and noise.
    GT2V,
    /// Gist filtered by text-generated kernels.
    T2V,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [VariantKind::DT2V, VariantKind::PT2V, VariantKind::GT2V, VariantKind::T2V];

    pub fn has_gist(self) -> bool {
        matches!(self, VariantKind::GT2V | VariantKind::T2V)
    }

    pub fn uses_mismatch(self) -> bool {
        self == VariantKind::PT2V
    }

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::DT2V => "DT2V",
            VariantKind::PT2V => "PT2V",
            VariantKind::GT2V => "GT2V",
            VariantKind::T2V => "T2V",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| invalid(format!("unknown variant `{s}` (expected DT2V, PT2V, GT2V or T2V)")))
    }
}

/// Sum of the weighted objective terms. Fails on any non-finite component.
pub fn total_loss(cvae: f64, gan: f64, recons: f64, w: &ObjectiveWeights) -> Result<f64> {
    for (term, v) in [("cvae", cvae), ("gan", gan), ("recons", recons)] {
        if !v.is_finite() {
            return Err(Error::Divergence { step: None, term });
        }
    }
    Ok(w.gamma1 * cvae + w.gamma2 * gan + w.gamma3 * recons)
}

/// Mean absolute difference between `reference` `[N, C, H, W]` repeated over
/// time and `video` `[N, C, T, H, W]`.
pub fn reconstruction_loss<'t, T: Float>(reference: Var<'t, T>, video: Var<'t, T>) -> Result<Var<'t, T>> {
    let (rs, vs) = (reference.shape(), video.shape());
    if rs.len() != 4 || vs.len() != 5 || rs[0] != vs[0] || rs[1] != vs[1] || rs[2..] != vs[3..] {
        return Err(invalid(format!("cannot compare reference {rs:?} with video {vs:?}")));
    }
    let repeated = reference.reshape(&[rs[0], rs[1], 1, rs[2], rs[3]]).expand(&vs);
    Ok(repeated.sub(video).abs().mean())
}

/// [`reconstruction_loss`] for a single gist and clip.
pub fn reconstruction_loss_clip(gist: &Gist, clip: &VideoClip) -> Result<f64> {
    let tape = Tape::<f64>::empty();
    let g = gist.pixels.cast::<f64>();
    let gs = g.shape().to_vec();
    let r = tape.constant(g.reshape(&[1, gs[0], gs[1], gs[2]]));
    let v = clip.channels_first().cast::<f64>();
    let vshape = v.shape().to_vec();
    let mut shape = vec![1];
    shape.extend_from_slice(&vshape);
    let v = tape.constant(v.reshape(&shape));
    Ok(reconstruction_loss(r, v)?.item())
}

/// The sub-networks of one variant.
#[derive(Clone, Debug)]
pub struct Model {
    pub kind: VariantKind,
    pub cfg: ModelConfig,
    pub text: TextEncoder,
    pub cvae: Option<GistCvae>,
    pub text2filter: Option<Text2Filter>,
    pub gist_encoder: Option<GistFeatureEncoder>,
    pub generator: VideoGenerator,
    pub critic: Critic,
}

/// Everything produced by one generator pass.
pub struct Forward<'t, T: Float> {
    /// Encoded captions `[N, F_t]`.
    pub psi: Var<'t, T>,
    pub gist: Option<Var<'t, T>>,
    pub cvae: Option<CvaeTerms<'t, T>>,
    /// `z_v`.
    pub latent: Var<'t, T>,
    pub output: GeneratorOutput<'t, T>,
}

/// Where `z_g` comes from.
pub enum GistSource<'t, T: Float> {
    /// Posterior sample from first frames `[N, C, H, W]` with standard-normal `noise`.
    Posterior { first_frames: Var<'t, T>, noise: Var<'t, T> },
    /// Prior draw, used at test time.
    Prior(Var<'t, T>),
}

impl Model {
    pub fn new<T: Float, R: Rng + ?Sized>(
        kind: VariantKind,
        cfg: &ModelConfig,
        vocab_size: usize,
        ps: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        if vocab_size < 3 {
            return Err(invalid("vocabulary must hold at least one word besides the reserved ids"));
        }
        let text = TextEncoder::new(ps, "text", vocab_size, cfg, rng);
        let (cvae, text2filter, gist_encoder, gen_in) = match kind {
            VariantKind::DT2V | VariantKind::PT2V => (None, None, None, cfg.text_dim),
            VariantKind::GT2V => {
                let cvae = GistCvae::new(ps, "cvae", cfg, rng);
                let enc = GistFeatureEncoder::new(
                    ps,
                    "gist_encoder",
                    cfg.channels,
                    cfg.text_gist_width,
                    cfg.text_gist_dim,
                    cfg,
                    rng,
                );
                (Some(cvae), None, Some(enc), cfg.text_gist_dim + cfg.text_dim)
            }
            VariantKind::T2V => {
                let cvae = GistCvae::new(ps, "cvae", cfg, rng);
                let t2f = Text2Filter::new(ps, "text2filter", "text2filter.encoder", cfg, rng);
                (Some(cvae), Some(t2f), None, cfg.text_gist_dim)
            }
        };
        let generator = VideoGenerator::new(ps, "generator", gen_in + cfg.noise_dim, cfg, rng);
        let critic = Critic::new(ps, "critic", cfg, rng);
        Ok(Model {
            kind,
            cfg: cfg.clone(),
            text,
            cvae,
            text2filter,
            gist_encoder,
            generator,
            critic,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.text.vocab_size
    }

    /// Caption encoding, gist, conditioning vector and generated video.
    pub fn forward<'t, T: Float>(
        &self,
        tape: &'t Tape<T>,
        captions: &[&Caption],
        gist: GistSource<'t, T>,
        video_noise: Var<'t, T>,
    ) -> Result<Forward<'t, T>> {
        let psi = self.text.forward(tape, captions)?;
        let n = captions.len();
        if video_noise.shape() != [n, self.cfg.noise_dim] {
            return Err(invalid(format!("video noise shape {:?} != [{n}, {}]", video_noise.shape(), self.cfg.noise_dim)));
        }
        let (gist, cvae) = match &self.cvae {
            None => (None, None),
            Some(net) => match gist {
                GistSource::Posterior { first_frames, noise } => {
                    let terms = net.loss(first_frames, psi, noise)?;
                    (Some(terms.gist), Some(terms))
                }
                GistSource::Prior(z) => (Some(net.sample(psi, z)?), None),
            },
        };
        let latent = match (self.kind, gist) {
            (VariantKind::T2V, Some(g)) => {
                let t2f = self.text2filter.as_ref().expect("T2V has a Text2Filter");
                concat(&[t2f.forward(g, psi)?, video_noise], 1)
            }
            (VariantKind::GT2V, Some(g)) => {
                let enc = self.gist_encoder.as_ref().expect("GT2V has a gist encoder");
                concat(&[enc.forward(g)?, psi, video_noise], 1)
            }
            _ => concat(&[psi, video_noise], 1),
        };
        let output = self.generator.forward(latent)?;
        Ok(Forward {
            psi,
            gist,
            cvae,
            latent,
            output,
        })
    }
}

/// Assembles a variant with freshly initialized parameters.
pub fn build_model_variant(
    kind: VariantKind,
    cfg: &ModelConfig,
    vocab_size: usize,
    seed: u64,
) -> Result<(Model, ParamStore<f32>)> {
    let mut ps = ParamStore::new();
    let mut rng = init_rng(seed);
    let model = Model::new(kind, cfg, vocab_size, &mut ps, &mut rng)?;
    Ok((model, ps))
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

/// Noise generator for training step `step`.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

/// Batch indices for training step `step`, drawn without replacement.
pub fn batch_indices(n_items: usize, batch_size: usize, seed: u64, step: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    rng.set_stream(step);
    index::sample(&mut rng, n_items, batch_size.min(n_items)).into_vec()
}

/// Caption permutation without fixed points (a random non-zero rotation).
pub fn mismatch_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    if n < 2 {
        return (0..n).collect();
    }
    let shift = rng.random_range(1..n);
    (0..n).map(|i| (i + shift) % n).collect()
}

/// What the critic was shown in one step.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticBatch {
    pub real: usize,
    pub fake: usize,
    pub mismatched: usize,
    /// Caption index paired with each real video in the mismatched set.
    pub permutation: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub step: u64,
    pub cvae: f64,
    pub gan_d: f64,
    pub gan_g: f64,
    pub recons: f64,
    pub total: f64,
    pub critic_batch: CriticBatch,
}

impl LossReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step, self.cvae, self.gan_d, self.gan_g, self.recons, self.total
        )
    }
}

/// Generated gist (gist variants only) and clip.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub gist: Option<Gist>,
    pub video: VideoClip,
}

fn standard_normal(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f32> {
    Tensor::randn(shape, rng)
}

fn finite(v: f64, step: u64, term: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence { step: Some(step), term })
    }
}

/// Parameters, optimizer state and counters of a training run.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: Model,
    pub params: ParamStore<f32>,
    pub generator_opt: Adam<f32>,
    pub critic_opt: Adam<f32>,
    pub step: u64,
    pub seed: u64,
    pub train: TrainConfig,
    pub vocab: Vocabulary,
}

impl TrainState {
    pub fn new(kind: VariantKind, cfg: &ModelConfig, train: &TrainConfig, vocab: Vocabulary) -> Result<Self> {
        train.validate()?;
        let (model, params) = build_model_variant(kind, cfg, vocab.len(), train.seed)?;
        Ok(TrainState {
            model,
            params,
            generator_opt: Adam::new(train.generator_adam),
            critic_opt: Adam::new(train.critic_adam),
            step: 0,
            seed: train.seed,
            train: train.clone(),
            vocab,
        })
    }

    pub fn kind(&self) -> VariantKind {
        self.model.kind
    }

    fn batch_tensors(&self, batch: &[(VideoClip, Caption)]) -> Result<(Tensor<f32>, Tensor<f32>)> {
        if batch.is_empty() {
            return Err(invalid("empty training batch"));
        }
        let cfg = &self.model.cfg;
        let mut videos = Vec::with_capacity(batch.len());
        let mut firsts = Vec::with_capacity(batch.len());
        for (clip, caption) in batch {
            if clip.dims() != cfg.clip_shape() {
                return Err(invalid(format!(
                    "clip {} has shape {:?}, model expects {:?}",
                    clip.caption_id,
                    clip.dims(),
                    cfg.clip_shape()
                )));
            }
            caption.validate(self.model.vocab_size())?;
            videos.push(clip.channels_first());
            firsts.push(clip.frame(0));
        }
        Ok((Tensor::stack(&videos), Tensor::stack(&firsts)))
    }

    /// One critic update (followed by weight clipping), then one update of all
    /// other parameters on the weighted objective. A non-finite critic loss
    /// aborts before any update; a non-finite generator term aborts after the
    /// critic update but before the generator update.
    pub fn train_step(&mut self, batch: &[(VideoClip, Caption)]) -> Result<LossReport> {
        let (real, first) = self.batch_tensors(batch)?;
        let step = self.step;
        let cfg = self.model.cfg.clone();
        let n = batch.len();
        let captions: Vec<&Caption> = batch.iter().map(|(_, c)| c).collect();
        let mut rng = step_rng(self.seed, step);
        let gist_noise = standard_normal(&[n, cfg.gist_latent_dim], &mut rng);
        let video_noise = standard_normal(&[n, cfg.noise_dim], &mut rng);
        let permutation = if self.model.kind.uses_mismatch() {
            mismatch_permutation(n, &mut rng)
        } else {
            Vec::new()
        };

        let gen_tape = Tape::new(&self.params, true, |name| !name.starts_with(CRITIC_PREFIX));
        let first_v = gen_tape.constant(first);
        let fwd = self.model.forward(
            &gen_tape,
            &captions,
            GistSource::Posterior {
                first_frames: first_v,
                noise: gen_tape.constant(gist_noise),
            },
            gen_tape.constant(video_noise),
        )?;
        let fake = fwd.output.video.value();

        // Real, fake (and mismatched) videos share one critic batch so that
        // batch normalization sees them together; scored separately, every
        // batch would be normalized to the same feature mean.
        let gan_d = {
            let tape = Tape::new(&self.params, true, |name| name.starts_with(CRITIC_PREFIX));
            let psi = tape.constant((*fwd.psi.value()).clone());
            let real_v = tape.constant(real.clone());
            let fake_v = tape.constant((*fake).clone());
            let critic = &self.model.critic;
            let loss = if permutation.is_empty() {
                let s = critic.forward(concat(&[real_v, fake_v], 0), concat(&[psi, psi], 0))?;
                critic_loss(s.narrow(0, 0, n), s.narrow(0, n, n))
            } else {
                let wrong_text = psi.index_rows(&permutation);
                let s = critic.forward(
                    concat(&[real_v, fake_v, real_v], 0),
                    concat(&[psi, psi, wrong_text], 0),
                )?;
                let (real_s, fake_s, wrong_s) = (s.narrow(0, 0, n), s.narrow(0, n, n), s.narrow(0, 2 * n, n));
                fake_s.mean().add(wrong_s.mean()).scale(0.5).sub(real_s.mean())
            };
            let value = finite(loss.item() as f64, step, "gan_d")?;
            let grads = tape.backward(loss);
            self.critic_opt.step(&mut self.params, &grads.params());
            for (id, v) in tape.take_buffer_updates() {
                self.params.set(id, v);
            }
            enforce_lipschitz(&mut self.params, CRITIC_PREFIX, self.train.clip_value)?;
            value
        };

        gen_tape.refresh_params(&self.params, |name| name.starts_with(CRITIC_PREFIX));
        let video = fwd.output.video;
        let psi = fwd.psi.detach();
        let scores = self.model.critic.forward(
            concat(&[gen_tape.constant(real), video], 0),
            concat(&[psi, psi], 0),
        )?;
        let fake_s = scores.narrow(0, n, n);
        let gan_g = generator_adv_loss(fake_s);
        let reference = fwd.gist.unwrap_or(first_v);
        let recons = reconstruction_loss(reference, video)?;
        let w = self.train.weights;
        let mut total = gan_g.scale(w.gamma2 as f32).add(recons.scale(w.gamma3 as f32));
        let mut cvae_value = 0.0;
        if let Some(terms) = &fwd.cvae {
            cvae_value = finite(terms.total.item() as f64, step, "cvae")?;
            total = total.add(terms.total.scale(w.gamma1 as f32));
        }
        let gan_g_value = finite(gan_g.item() as f64, step, "gan_g")?;
        let recons_value = finite(recons.item() as f64, step, "recons")?;
        let total_value = finite(total.item() as f64, step, "total")?;
        let grads = gen_tape.backward(total);
        self.generator_opt.step(&mut self.params, &grads.params());
        self.step += 1;

        Ok(LossReport {
            step: self.step,
            cvae: cvae_value,
            gan_d,
            gan_g: gan_g_value,
            recons: recons_value,
            total: total_value,
            critic_batch: CriticBatch {
                real: n,
                fake: n,
                mismatched: if permutation.is_empty() { 0 } else { n },
                permutation,
            },
        })
    }

    /// Runs `steps` training steps on batches drawn from `data`, appending one
    /// CSV row per step to `log`. Callers write [`LOSS_LOG_HEADER`] first.
    pub fn train<W: Write>(
        &mut self,
        data: &[(VideoClip, Caption)],
        steps: u64,
        mut log: Option<&mut W>,
        mut on_step: impl FnMut(&LossReport),
    ) -> Result<Vec<LossReport>> {
        if data.is_empty() {
            return Err(invalid("training set is empty"));
        }
        let mut reports = Vec::with_capacity(steps as usize);
        for _ in 0..steps {
            let idx = batch_indices(data.len(), self.train.batch_size, self.seed, self.step);
            let batch: Vec<(VideoClip, Caption)> = idx.iter().map(|&i| data[i].clone()).collect();
            let report = self.train_step(&batch)?;
            if let Some(w) = log.as_deref_mut() {
                writeln!(w, "{}", report.csv_row()).map_err(crate::error::io_err("writing loss log"))?;
            }
            on_step(&report);
            reports.push(report);
        }
        Ok(reports)
    }

    /// Encode text, draw the gist from the prior, build `z_v` and render a clip.
    /// All noise comes from `seed`.
    pub fn generate_sample(&self, caption: &Caption, seed: u64) -> Result<Sample> {
        generate_sample(&self.model, &self.params, caption, seed)
    }

    pub fn generate_batch(&self, captions: &[&Caption], seed: u64) -> Result<Vec<Sample>> {
        generate_batch(&self.model, &self.params, captions, seed)
    }
}

pub fn generate_sample(model: &Model, ps: &ParamStore<f32>, caption: &Caption, seed: u64) -> Result<Sample> {
    Ok(generate_batch(model, ps, &[caption], seed)?.remove(0))
}

/// Samples one clip per caption; the noise for caption `i` depends only on
/// `(seed, i)`.
pub fn generate_batch(model: &Model, ps: &ParamStore<f32>, captions: &[&Caption], seed: u64) -> Result<Vec<Sample>> {
    if captions.is_empty() {
        return Err(invalid("no captions to generate from"));
    }
    for prefix in [TEXT_PREFIX, GENERATOR_PREFIX] {
        if !ps.has_prefix(prefix) {
            return Err(Error::Uninitialized(format!("no `{prefix}` parameters in the store")));
        }
    }
    if model.kind.has_gist() && !ps.has_prefix(CVAE_PREFIX) {
        return Err(Error::Uninitialized("no gist network parameters in the store".into()));
    }
    let cfg = &model.cfg;
    let n = captions.len();
    let mut zg = Vec::with_capacity(n * cfg.gist_latent_dim);
    let mut nv = Vec::with_capacity(n * cfg.noise_dim);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        zg.extend(standard_normal(&[cfg.gist_latent_dim], &mut rng).into_vec());
        nv.extend(standard_normal(&[cfg.noise_dim], &mut rng).into_vec());
    }
    let tape = Tape::inference(ps);
    let fwd = model.forward(
        &tape,
        captions,
        GistSource::Prior(tape.constant(Tensor::from_vec(&[n, cfg.gist_latent_dim], zg))),
        tape.constant(Tensor::from_vec(&[n, cfg.noise_dim], nv)),
    )?;
    let video = fwd.output.video.value();
    let gists = fwd.gist.map(|g| g.value());
    (0..n)
        .map(|i| {
            Ok(Sample {
                gist: gists.as_ref().map(|g| Gist { pixels: g.index0(i) }),
                video: VideoClip::from_batch(&video, i, captions[i].raw_text.clone())?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_weights_sum() {
        let w = ObjectiveWeights::default();
        assert!((total_loss(1.0, 1.0, 1.0, &w).unwrap() - 2.1).abs() < 1e-12);
        assert_eq!(total_loss(0.0, 0.0, 0.0, &w).unwrap(), 0.0);
        let sel = ObjectiveWeights::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(total_loss(3.0, -7.0, 5.0, &sel).unwrap(), 5.0);
        assert!(matches!(
            total_loss(f64::NAN, 0.0, 0.0, &w),
            Err(Error::Divergence { term: "cvae", .. })
        ));
    }

    #[test]
    fn variant_names_roundtrip() {
        for k in VariantKind::ALL {
            assert_eq!(k.name().parse::<VariantKind>().unwrap(), k);
        }
        assert_eq!("t2v".parse::<VariantKind>().unwrap(), VariantKind::T2V);
        assert!("X2V".parse::<VariantKind>().is_err());
    }

    #[test]
    fn mismatch_has_no_fixed_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 2..20 {
            let p = mismatch_permutation(n, &mut rng);
            let mut sorted = p.clone();
            sorted.sort();
            assert_eq!(sorted, (0..n).collect::<Vec<_>>());
            assert!(p.iter().enumerate().all(|(i, &j)| i != j));
        }
    }

    #[test]
    fn reconstruction_examples() {
        let tape = Tape::<f64>::empty();
        let g = tape.constant(Tensor::zeros(&[1, 3, 4, 4]));
        let v = tape.constant(Tensor::ones(&[1, 3, 32, 4, 4]));
        assert_eq!(reconstruction_loss(g, v).unwrap().item(), 1.0);
        let g = tape.constant(Tensor::full(&[1, 3, 4, 4], 0.25));
        let v = tape.constant(Tensor::full(&[1, 3, 32, 4, 4], 0.25));
        assert_eq!(reconstruction_loss(g, v).unwrap().item(), 0.0);
    }
}
