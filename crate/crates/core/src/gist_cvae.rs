//! Conditional VAE producing the gist: a static, text-conditioned sketch of
//! background color and layout, trained against the first frame of a clip.

use rand::Rng;
use t2v_autograd::nn::{Conv, ConvTranspose, Init, Linear};
use t2v_autograd::{concat, ConvGeom, Float, ParamStore, Tape, Tensor, Var};

use crate::config::ModelConfig;
use crate::error::{invalid, Result};
use crate::text_encoder::EncodedText;

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

/// Static sketch `[C, H, W]` with values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gist {
    pub pixels: Tensor<f32>,
}

/// A latent sample together with the Gaussian it was drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGist {
    pub values: Vec<f32>,
    pub mu: Vec<f32>,
    pub log_var: Vec<f32>,
}

/// Scalar terms of the negated lower bound, averaged over the batch.
pub struct CvaeTerms<'t, T: Float> {
    pub total: Var<'t, T>,
    pub recon: Var<'t, T>,
    pub kl: Var<'t, T>,
    pub gist: Var<'t, T>,
}

pub(crate) fn check_pixel_range<T: Float>(t: &Tensor<T>, what: &str) -> Result<()> {
    let one = T::ONE + T::from_f64(1e-6);
    if let Some(v) = t.data().iter().find(|v| !(v.abs() <= one)) {
        return Err(invalid(format!("{what} value {v} outside [-1, 1]")));
    }
    Ok(())
}

/// `mu + exp(log_var / 2) * noise`.
pub fn sample_latent<'t, T: Float>(mu: Var<'t, T>, log_var: Var<'t, T>, noise: Var<'t, T>) -> Var<'t, T> {
    mu.add(log_var.scale(T::from_f64(0.5)).exp().mul(noise))
}

/// `KL(N(mu, diag(exp(log_var))) || N(0, I))` per sample, averaged over the batch.
pub fn kl_to_standard_normal<'t, T: Float>(mu: Var<'t, T>, log_var: Var<'t, T>) -> Var<'t, T> {
    let n = mu.shape()[0];
    let per = mu
        .square()
        .add(log_var.exp())
        .sub(log_var)
        .add_scalar(-T::ONE)
        .sum()
        .scale(T::from_f64(0.5));
    per.scale(T::ONE / T::from_f64(n as f64))
}

/// Negative log-likelihood of `target` under a unit-variance Gaussian
/// centered at `recon`, summed over pixels and averaged over the batch.
pub fn unit_gaussian_nll<'t, T: Float>(target: Var<'t, T>, recon: Var<'t, T>) -> Var<'t, T> {
    let shape = target.shape();
    let n = shape[0];
    let pixels: usize = shape[1..].iter().product();
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    target
        .sub(recon)
        .square()
        .sum()
        .scale(T::from_f64(0.5 / n as f64))
        .add_scalar(T::from_f64(half_log_2pi * pixels as f64))
}

#[derive(Clone, Debug)]
pub struct GistCvae {
    frame_shape: [usize; 3],
    latent_dim: usize,
    text_dim: usize,
    seed_channels: usize,
    frame_convs: Vec<Conv>,
    frame_feat: Linear,
    pub mu_head: Linear,
    pub log_var_head: Linear,
    decode_seed: Linear,
    decode_convs: Vec<ConvTranspose>,
}

impl GistCvae {
    pub fn new<T: Float, R: Rng + ?Sized>(ps: &mut ParamStore<T>, prefix: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        let levels = cfg.levels();
        let w = cfg.cvae_width;
        let widths: Vec<usize> = (0..levels).map(|i| w << i).collect();
        let g = ConvGeom::planar(4, 2, 1);
        let mut frame_convs = Vec::with_capacity(levels);
        let mut ch = cfg.channels;
        for (i, &out) in widths.iter().enumerate() {
            frame_convs.push(Conv::new(ps, &format!("{prefix}.frame_conv{i}"), ch, out, g, true, Init::FanIn, rng));
            ch = out;
        }
        let seed_channels = widths[levels - 1];
        let frame_feat = Linear::new(ps, &format!("{prefix}.frame_feat"), seed_channels * 16, cfg.frame_feat_dim, rng);
        let joint = cfg.frame_feat_dim + cfg.text_dim;
        let mu_head = Linear::new(ps, &format!("{prefix}.mu"), joint, cfg.gist_latent_dim, rng);
        let log_var_head = Linear::new(ps, &format!("{prefix}.log_var"), joint, cfg.gist_latent_dim, rng);
        let decode_seed = Linear::new(
            ps,
            &format!("{prefix}.decode_seed"),
            cfg.gist_latent_dim + cfg.text_dim,
            seed_channels * 16,
            rng,
        );
        let mut decode_convs = Vec::with_capacity(levels);
        let mut ch = seed_channels;
        for i in 0..levels {
            let out = if i + 1 == levels { cfg.channels } else { widths[levels - 2 - i] };
            decode_convs.push(ConvTranspose::new(
                ps,
                &format!("{prefix}.decode_conv{i}"),
                ch,
                out,
                g,
                true,
                Init::FanIn,
                rng,
            ));
            ch = out;
        }
        GistCvae {
            frame_shape: cfg.frame_shape(),
            latent_dim: cfg.gist_latent_dim,
            text_dim: cfg.text_dim,
            seed_channels,
            frame_convs,
            frame_feat,
            mu_head,
            log_var_head,
            decode_seed,
            decode_convs,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// Frame encoder: `[N, C, H, W] -> [N, D_eta]`.
    pub fn encode_frame<'t, T: Float>(&self, frames: Var<'t, T>) -> Result<Var<'t, T>> {
        let s = frames.shape();
        if s.len() != 4 || s[1..] != self.frame_shape {
            return Err(invalid(format!(
                "frame batch shape {:?} does not match [N, {}, {}, {}]",
                s, self.frame_shape[0], self.frame_shape[1], self.frame_shape[2]
            )));
        }
        check_pixel_range(&frames.value(), "frame")?;
        let mut h = frames;
        for conv in &self.frame_convs {
            h = conv.forward(h).leaky_relu(T::from_f64(0.2));
        }
        Ok(self.frame_feat.forward(h.flatten()).leaky_relu(T::from_f64(0.2)))
    }

    /// Affine heads on `[frame_feat; text_feat]`; log-variance clamped to `[-10, 10]`.
    pub fn posterior_params<'t, T: Float>(
        &self,
        frame_feat: Var<'t, T>,
        text_feat: Var<'t, T>,
    ) -> (Var<'t, T>, Var<'t, T>) {
        let joint = concat(&[frame_feat, text_feat], 1);
        let mu = self.mu_head.forward(joint);
        let log_var = self
            .log_var_head
            .forward(joint)
            .clamp(T::from_f64(LOG_VAR_MIN), T::from_f64(LOG_VAR_MAX));
        (mu, log_var)
    }

    /// Decoder on `[z_g; text_feat]`, tanh output `[N, C, H, W]`.
    pub fn decode<'t, T: Float>(&self, z: Var<'t, T>, text_feat: Var<'t, T>) -> Result<Var<'t, T>> {
        let (zs, ts) = (z.shape(), text_feat.shape());
        if zs.len() != 2 || zs[1] != self.latent_dim || ts.len() != 2 || ts[1] != self.text_dim || zs[0] != ts[0] {
            return Err(invalid(format!("decode inputs {zs:?} / {ts:?} do not match latent/text sizes")));
        }
        let n = zs[0];
        let mut h = self
            .decode_seed
            .forward(concat(&[z, text_feat], 1))
            .reshape(&[n, self.seed_channels, 4, 4])
            .relu();
        let last = self.decode_convs.len() - 1;
        for (i, conv) in self.decode_convs.iter().enumerate() {
            h = conv.forward(h);
            h = if i == last { h.tanh() } else { h.relu() };
        }
        Ok(h)
    }

    /// Negated lower bound on a batch of first frames, with one posterior sample
    /// per clip from `noise` (`[N, D_g]`, standard normal).
    pub fn loss<'t, T: Float>(
        &self,
        first_frames: Var<'t, T>,
        text_feat: Var<'t, T>,
        noise: Var<'t, T>,
    ) -> Result<CvaeTerms<'t, T>> {
        let feat = self.encode_frame(first_frames)?;
        let (mu, log_var) = self.posterior_params(feat, text_feat);
        if noise.shape() != mu.shape() {
            return Err(invalid(format!("noise shape {:?} != latent shape {:?}", noise.shape(), mu.shape())));
        }
        let z = sample_latent(mu, log_var, noise);
        let gist = self.decode(z, text_feat)?;
        let recon = unit_gaussian_nll(first_frames, gist);
        let kl = kl_to_standard_normal(mu, log_var);
        Ok(CvaeTerms {
            total: recon.add(kl),
            recon,
            kl,
            gist,
        })
    }

    /// Test-time gist: the frame encoder is skipped and `z_g` is the given prior draw.
    pub fn sample<'t, T: Float>(&self, text_feat: Var<'t, T>, prior_noise: Var<'t, T>) -> Result<Var<'t, T>> {
        self.decode(prior_noise, text_feat)
    }

    /// Single-caption gist generation in evaluation mode.
    pub fn generate_gist(&self, ps: &ParamStore<f32>, text: &EncodedText, noise: &[f32]) -> Result<Gist> {
        if text.values.len() != self.text_dim || noise.len() != self.latent_dim {
            return Err(invalid("text or noise length does not match the model"));
        }
        let tape = Tape::inference(ps);
        let t = tape.constant(Tensor::from_vec(&[1, self.text_dim], text.values.clone()));
        let z = tape.constant(Tensor::from_vec(&[1, self.latent_dim], noise.to_vec()));
        let g = self.sample(t, z)?.value();
        Ok(Gist {
            pixels: (*g).clone().reshape(&self.frame_shape),
        })
    }

    /// Posterior sample for one frame and caption.
    pub fn infer_latent(
        &self,
        ps: &ParamStore<f32>,
        frame: &Tensor<f32>,
        text: &EncodedText,
        noise: &[f32],
    ) -> Result<LatentGist> {
        let tape = Tape::inference(ps);
        let mut shape = vec![1];
        shape.extend_from_slice(frame.shape());
        let f = tape.constant(frame.clone().reshape(&shape));
        let t = tape.constant(Tensor::from_vec(&[1, self.text_dim], text.values.clone()));
        let feat = self.encode_frame(f)?;
        let (mu, lv) = self.posterior_params(feat, t);
        if noise.len() != self.latent_dim {
            return Err(invalid("noise length does not match the latent size"));
        }
        let e = tape.constant(Tensor::from_vec(&[1, self.latent_dim], noise.to_vec()));
        let z = sample_latent(mu, lv, e);
        Ok(LatentGist {
            values: z.value().data().to_vec(),
            mu: mu.value().data().to_vec(),
            log_var: lv.value().data().to_vec(),
        })
    }
}
