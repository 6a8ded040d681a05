//! Text2Filter: kernels generated from the encoded caption, correlated with the
//! gist, then encoded into the text-gist vector `g_t`.

use rand::Rng;
use t2v_autograd::nn::{Conv, Init, Linear};
use t2v_autograd::{ConvGeom, Float, ParamStore, Tape, Tensor, Var};

use crate::config::ModelConfig;
use crate::error::{invalid, Result};
use crate::gist_cvae::Gist;
use crate::text_encoder::EncodedText;

/// Kernel bank `[F_c, C, ky, kz]` for one caption.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionFilter {
    pub kernels: Tensor<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextGistVector {
    pub values: Vec<f32>,
}

/// Same-padding, stride-1 geometry for a `ky x kz` kernel.
pub fn filter_geom(ky: usize, kz: usize) -> ConvGeom {
    ConvGeom::new([1, ky, kz], [1, 1, 1], [0, ky / 2, kz / 2])
}

/// Correlates each gist `[N, C, H, W]` with its own kernel bank
/// `[N, F_c, C, ky, kz]`; output `[N, F_c, H, W]`.
pub fn apply_filter<'t, T: Float>(gist: Var<'t, T>, filter: Var<'t, T>) -> Result<Var<'t, T>> {
    let (gs, fs) = (gist.shape(), filter.shape());
    if gs.len() != 4 || fs.len() != 5 || fs[0] != gs[0] {
        return Err(invalid(format!("gist {gs:?} and filter {fs:?} are not batched alike")));
    }
    if fs[2] != gs[1] {
        return Err(invalid(format!("filter expects {} channels, gist has {}", fs[2], gs[1])));
    }
    if fs[3] % 2 == 0 || fs[4] % 2 == 0 {
        return Err(invalid("filter kernel sizes must be odd"));
    }
    Ok(gist.conv_per_sample(filter, filter_geom(fs[3], fs[4])))
}

/// Linear map from the encoded text to a kernel bank, plus the CNN encoder
/// that turns the filtered gist into `g_t`.
#[derive(Clone, Debug)]
pub struct Text2Filter {
    pub filter_gen: Linear,
    kernel_shape: [usize; 4],
    text_dim: usize,
    encoder: GistFeatureEncoder,
}

impl Text2Filter {
    pub fn new<T: Float, R: Rng + ?Sized>(
        ps: &mut ParamStore<T>,
        filter_prefix: &str,
        encoder_prefix: &str,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Self {
        let kernel_shape = [cfg.filter_channels, cfg.channels, cfg.filter_ky, cfg.filter_kz];
        let out: usize = kernel_shape.iter().product();
        let filter_gen = Linear::with_init(
            ps,
            &format!("{filter_prefix}.generator"),
            cfg.text_dim,
            out,
            Init::FanIn,
            Init::Zeros,
            rng,
        );
        let encoder = GistFeatureEncoder::new(
            ps,
            encoder_prefix,
            cfg.filter_channels,
            cfg.text_gist_width,
            cfg.text_gist_dim,
            cfg,
            rng,
        );
        Text2Filter {
            filter_gen,
            kernel_shape,
            text_dim: cfg.text_dim,
            encoder,
        }
    }

    pub fn kernel_shape(&self) -> [usize; 4] {
        self.kernel_shape
    }

    /// `[N, F_t] -> [N, F_c, C, ky, kz]`.
    pub fn make_filter<'t, T: Float>(&self, text_feat: Var<'t, T>) -> Result<Var<'t, T>> {
        let s = text_feat.shape();
        if s.len() != 2 || s[1] != self.text_dim {
            return Err(invalid(format!("encoded text has shape {s:?}, expected [N, {}]", self.text_dim)));
        }
        let [f, c, ky, kz] = self.kernel_shape;
        Ok(self.filter_gen.forward(text_feat).reshape(&[s[0], f, c, ky, kz]))
    }

    /// Feature maps `[N, F_c, H, W] -> g_t` `[N, D_gt]`.
    pub fn encode_text_gist<'t, T: Float>(&self, maps: Var<'t, T>) -> Result<Var<'t, T>> {
        self.encoder.forward(maps)
    }

    /// Full path: `g_t = Encoder(conv(gist, f(text)))`.
    pub fn forward<'t, T: Float>(&self, gist: Var<'t, T>, text_feat: Var<'t, T>) -> Result<Var<'t, T>> {
        let filter = self.make_filter(text_feat)?;
        let maps = apply_filter(gist, filter)?;
        self.encode_text_gist(maps)
    }

    pub fn filter_for(&self, ps: &ParamStore<f32>, text: &EncodedText) -> Result<MotionFilter> {
        let tape = Tape::inference(ps);
        let t = tape.constant(Tensor::from_vec(&[1, text.values.len()], text.values.clone()));
        let k = self.make_filter(t)?.value();
        Ok(MotionFilter {
            kernels: (*k).clone().reshape(&self.kernel_shape),
        })
    }

    pub fn text_gist(&self, ps: &ParamStore<f32>, gist: &Gist, text: &EncodedText) -> Result<TextGistVector> {
        let tape = Tape::inference(ps);
        let mut shape = vec![1];
        shape.extend_from_slice(gist.pixels.shape());
        let g = tape.constant(gist.pixels.clone().reshape(&shape));
        let t = tape.constant(Tensor::from_vec(&[1, text.values.len()], text.values.clone()));
        Ok(TextGistVector {
            values: self.forward(g, t)?.value().data().to_vec(),
        })
    }
}

/// Stride-2 convolution stack down to 4x4 followed by a linear projection.
/// Used for the filtered gist and, in the gist-only variant, for the raw gist.
#[derive(Clone, Debug)]
pub struct GistFeatureEncoder {
    in_channels: usize,
    spatial: usize,
    convs: Vec<Conv>,
    project: Linear,
}

impl GistFeatureEncoder {
    pub fn new<T: Float, R: Rng + ?Sized>(
        ps: &mut ParamStore<T>,
        prefix: &str,
        in_channels: usize,
        width: usize,
        out_dim: usize,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Self {
        let levels = cfg.levels();
        let g = ConvGeom::planar(4, 2, 1);
        let mut convs = Vec::with_capacity(levels);
        let mut ch = in_channels;
        for i in 0..levels {
            let out = width << i;
            convs.push(Conv::new(ps, &format!("{prefix}.conv{i}"), ch, out, g, true, Init::FanIn, rng));
            ch = out;
        }
        let project = Linear::new(ps, &format!("{prefix}.project"), ch * 16, out_dim, rng);
        GistFeatureEncoder {
            in_channels,
            spatial: cfg.height,
            convs,
            project,
        }
    }

    pub fn forward<'t, T: Float>(&self, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.in_channels || s[2] != self.spatial || s[3] != self.spatial {
            return Err(invalid(format!(
                "feature maps {s:?} do not match [N, {}, {}, {}]",
                self.in_channels, self.spatial, self.spatial
            )));
        }
        let mut h = x;
        for conv in &self.convs {
            h = conv.forward(h).leaky_relu(T::from_f64(0.2));
        }
        Ok(self.project.forward(h.flatten()))
    }
}
