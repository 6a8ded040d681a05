//! Text-conditioned Wasserstein critic and its losses.

use rand::Rng;
use t2v_autograd::nn::{BatchNorm, Conv, Init, Linear};
use t2v_autograd::{concat, ConvGeom, Float, ParamStore, Tape, Tensor, Var};

use crate::config::ModelConfig;
use crate::error::{invalid, Result};
use crate::gist_cvae::check_pixel_range;
use crate::text_encoder::EncodedText;
use crate::video_generator::VideoClip;

pub const CRITIC_LAYERS: usize = 5;

/// Clipped weights keep activation variance around 1e-6 or below; the usual
/// 1e-5 would swamp it and flatten every score to the same value.
pub const CRITIC_BN_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticScore {
    pub value: f32,
}

/// Halve every axis longer than one, leave singleton axes alone.
pub(crate) fn layer_geom(dims: [usize; 3]) -> ConvGeom {
    let mut g = ConvGeom::new([1; 3], [1; 3], [0; 3]);
    for (i, &d) in dims.iter().enumerate() {
        if d > 1 {
            g.kernel[i] = 4;
            g.stride[i] = 2;
            g.padding[i] = 1;
        }
    }
    g
}

#[derive(Clone, Debug)]
pub struct Critic {
    input: [usize; 4],
    text_dim: usize,
    convs: Vec<(Conv, BatchNorm)>,
    hidden: Linear,
    out: Linear,
}

impl Critic {
    pub fn new<T: Float, R: Rng + ?Sized>(ps: &mut ParamStore<T>, prefix: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        let w = cfg.critic_width;
        let widths = [w, 2 * w, 4 * w, 8 * w, 8 * w];
        let mut dims = [cfg.frames, cfg.height, cfg.width];
        let mut ch = cfg.channels;
        let mut convs = Vec::with_capacity(CRITIC_LAYERS);
        for (i, &out) in widths.iter().enumerate() {
            let g = layer_geom(dims);
            let conv = Conv::new(ps, &format!("{prefix}.conv{i}"), ch, out, g, false, Init::FanIn, rng);
            let mut bn = BatchNorm::new(ps, &format!("{prefix}.bn{i}"), out);
            bn.eps = CRITIC_BN_EPS;
            convs.push((conv, bn));
            dims = g.out_dims(dims);
            ch = out;
        }
        let feat = ch * dims.iter().product::<usize>();
        let hidden = Linear::new(ps, &format!("{prefix}.hidden"), feat + cfg.text_dim, cfg.critic_hidden, rng);
        let out = Linear::new(ps, &format!("{prefix}.out"), cfg.critic_hidden, 1, rng);
        Critic {
            input: [cfg.channels, cfg.frames, cfg.height, cfg.width],
            text_dim: cfg.text_dim,
            convs,
            hidden,
            out,
        }
    }

    /// Scores `[N, C, T, H, W]` videos paired with `[N, F_t]` texts; returns `[N]`.
    pub fn forward<'t, T: Float>(&self, video: Var<'t, T>, text_feat: Var<'t, T>) -> Result<Var<'t, T>> {
        let vs = video.shape();
        let ts = text_feat.shape();
        if vs.len() != 5 || vs[1..] != self.input {
            return Err(invalid(format!("critic expects [N, {:?}] videos, got {vs:?}", self.input)));
        }
        if ts.len() != 2 || ts[1] != self.text_dim || ts[0] != vs[0] {
            return Err(invalid(format!("text features {ts:?} do not pair with videos {vs:?}")));
        }
        let lrelu = T::from_f64(0.2);
        let mut h = video;
        for (conv, bn) in &self.convs {
            h = bn.forward(conv.forward(h)).leaky_relu(lrelu);
        }
        let joint = concat(&[h.flatten(), text_feat], 1);
        let s = self.out.forward(self.hidden.forward(joint).leaky_relu(lrelu));
        Ok(s.reshape(&[vs[0]]))
    }

    /// Scores one clip with evaluation-mode normalization.
    pub fn discriminate(&self, ps: &ParamStore<f32>, clip: &VideoClip, text: &EncodedText) -> Result<CriticScore> {
        check_pixel_range(&clip.frames, "clip")?;
        let tape = Tape::inference(ps);
        let mut shape = vec![1];
        shape.extend_from_slice(&clip.channels_first().shape().to_vec());
        if shape[1..] != self.input {
            return Err(invalid(format!("clip shape {:?} does not match the critic", clip.dims())));
        }
        let v = tape.constant(clip.channels_first().reshape(&shape));
        let t = tape.constant(Tensor::from_vec(&[1, text.values.len()], text.values.clone()));
        let s = self.forward(v, t)?;
        Ok(CriticScore { value: s.item() })
    }
}

/// `mean(fake) - mean(real)`, minimized by the critic.
pub fn critic_loss<'t, T: Float>(real: Var<'t, T>, fake: Var<'t, T>) -> Var<'t, T> {
    fake.mean().sub(real.mean())
}

/// `-mean(fake)`, minimized by the generator.
pub fn generator_adv_loss<'t, T: Float>(fake: Var<'t, T>) -> Var<'t, T> {
    fake.mean().neg()
}

/// Clamps every critic weight under `prefix` to `[-clip_value, clip_value]`.
pub fn enforce_lipschitz<T: Float>(ps: &mut ParamStore<T>, prefix: &str, clip_value: f64) -> Result<()> {
    if !(clip_value > 0.0) {
        return Err(invalid(format!("clip value must be positive, got {clip_value}")));
    }
    ps.clamp_weights(prefix, T::from_f64(clip_value));
    Ok(())
}
