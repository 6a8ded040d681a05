//! Video generator with scene decomposition: a mask blends a moving
//! foreground volume with a static background image repeated over time.
//!
//! Internal batches use the `[N, C, T, H, W]` layout; [`VideoClip`] stores a
//! single clip as `[T, C, H, W]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use image::codecs::gif::{GifEncoder, Repeat};
use image::{Delay, Frame, RgbImage, RgbaImage};
use rand::Rng;
use t2v_autograd::nn::{ConvTranspose, Init, Linear};
use t2v_autograd::{ConvGeom, Float, ParamStore, Tape, Tensor, Var};

use crate::config::ModelConfig;
use crate::error::{invalid, io_err, Error, Result};
use crate::gist_cvae::check_pixel_range;

/// A clip of `T` frames, `[T, C, H, W]`, values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    pub frames: Tensor<f32>,
    pub caption_id: String,
}

impl VideoClip {
    pub fn new(frames: Tensor<f32>, caption_id: impl Into<String>) -> Result<Self> {
        if frames.ndim() != 4 {
            return Err(invalid(format!("clip must be [T, C, H, W], got rank {}", frames.ndim())));
        }
        check_pixel_range(&frames, "clip")?;
        Ok(VideoClip {
            frames,
            caption_id: caption_id.into(),
        })
    }

    /// `[T, C, H, W]`.
    pub fn dims(&self) -> [usize; 4] {
        let s = self.frames.shape();
        [s[0], s[1], s[2], s[3]]
    }

    pub fn num_frames(&self) -> usize {
        self.dims()[0]
    }

    /// Frame `t` as `[C, H, W]`.
    pub fn frame(&self, t: usize) -> Tensor<f32> {
        self.frames.index0(t)
    }

    /// `[C, T, H, W]`, the per-sample layout of generator batches.
    pub fn channels_first(&self) -> Tensor<f32> {
        self.frames.permute(&[1, 0, 2, 3])
    }

    /// Clip `i` of an `[N, C, T, H, W]` batch.
    pub fn from_batch(batch: &Tensor<f32>, i: usize, caption_id: impl Into<String>) -> Result<Self> {
        VideoClip::new(batch.index0(i).permute(&[1, 0, 2, 3]), caption_id)
    }

    /// Raw tensor file: `T, C, H, W` as little-endian `u32`, then the values as
    /// little-endian `f32` in `[T, C, H, W]` order.
    pub fn write_raw<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for d in self.dims() {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for &v in self.frames.data() {
            w.write_f32::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn read_raw<R: Read>(mut r: R, path: &Path) -> Result<Self> {
        let fmt = |reason: String| Error::Format {
            what: "raw clip",
            path: path.to_path_buf(),
            reason,
        };
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.read_u32::<LittleEndian>().map_err(|e| fmt(format!("header: {e}")))? as usize;
        }
        let n: usize = dims.iter().product();
        let mut data = vec![0f32; n];
        r.read_f32_into::<LittleEndian>(&mut data)
            .map_err(|e| fmt(format!("expected {n} values: {e}")))?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| fmt(e.to_string()))? != 0 {
            return Err(fmt("trailing bytes after tensor data".into()));
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        VideoClip::new(Tensor::from_vec(&dims, data), stem).map_err(|e| fmt(e.to_string()))
    }

    pub fn save_raw(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(io_err(format!("creating {}", path.display())))?;
        let mut w = BufWriter::new(f);
        self.write_raw(&mut w)
            .and_then(|_| w.flush())
            .map_err(io_err(format!("writing {}", path.display())))
    }

    pub fn load_raw(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(io_err(format!("opening {}", path.display())))?;
        VideoClip::read_raw(BufReader::new(f), path)
    }

    pub fn save_gif(&self, path: &Path, frame_delay_ms: u32) -> Result<()> {
        let f = File::create(path).map_err(io_err(format!("creating {}", path.display())))?;
        let mut enc = GifEncoder::new_with_speed(BufWriter::new(f), 10);
        enc.set_repeat(Repeat::Infinite)?;
        let delay = Delay::from_numer_denom_ms(frame_delay_ms, 1);
        let frames = (0..self.num_frames()).map(|t| {
            let rgba: RgbaImage = image::DynamicImage::ImageRgb8(to_rgb_image(&self.frame(t))).to_rgba8();
            Frame::from_parts(rgba, 0, 0, delay)
        });
        enc.encode_frames(frames)?;
        Ok(())
    }

    /// Writes `prefix_000.png`, `prefix_001.png`, ... into `dir`.
    pub fn save_pngs(&self, dir: &Path, prefix: &str) -> Result<()> {
        for t in 0..self.num_frames() {
            let p = dir.join(format!("{prefix}_{t:03}.png"));
            to_rgb_image(&self.frame(t)).save(&p)?;
        }
        Ok(())
    }
}

/// `[-1, 1] -> [0, 255]`.
pub fn to_byte(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// `[C, H, W]` image with one or three bands.
pub fn to_rgb_image(frame: &Tensor<f32>) -> RgbImage {
    let s = frame.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let d = frame.data();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |ch: usize| to_byte(d[(ch.min(c - 1) * h + y as usize) * w + x as usize]);
        image::Rgb([px(0), px(1), px(2)])
    })
}

pub fn save_png(frame: &Tensor<f32>, path: &Path) -> Result<()> {
    to_rgb_image(frame).save(path)?;
    Ok(())
}

/// `z_v = [g_t; n_v]`.
pub fn compose_latent(text_gist: &[f32], noise: &[f32], noise_dim: usize) -> Result<Vec<f32>> {
    if noise.len() != noise_dim {
        return Err(invalid(format!("noise has length {}, expected {noise_dim}", noise.len())));
    }
    let mut z = Vec::with_capacity(text_gist.len() + noise.len());
    z.extend_from_slice(text_gist);
    z.extend_from_slice(noise);
    Ok(z)
}

/// `alpha * m + (1 - alpha) * s` with `alpha` `[N, 1, T, H, W]` broadcast over
/// channels and `s` `[N, C, H, W]` broadcast over time.
pub fn compose<'t, T: Float>(mask: Var<'t, T>, motion: Var<'t, T>, still: Var<'t, T>) -> Var<'t, T> {
    let shape = motion.shape();
    let (n, c) = (shape[0], shape[1]);
    let ss = still.shape();
    let alpha = mask.expand(&shape);
    let background = still.reshape(&[n, c, 1, ss[2], ss[3]]).expand(&shape);
    alpha.mul(motion).add(alpha.neg().add_scalar(T::ONE).mul(background))
}

pub struct GeneratorOutput<'t, T: Float> {
    /// `[N, C, T, H, W]`.
    pub video: Var<'t, T>,
    /// `[N, 1, T, H, W]`, in `[0, 1]`.
    pub mask: Var<'t, T>,
    /// `[N, C, T, H, W]`, in `[-1, 1]`.
    pub motion: Var<'t, T>,
    /// `[N, C, H, W]`, in `[-1, 1]`.
    pub still: Var<'t, T>,
}

#[derive(Clone, Debug)]
pub struct VideoGenerator {
    latent_dim: usize,
    seed_channels: usize,
    seed_frames: usize,
    seed: Linear,
    trunk: Vec<ConvTranspose>,
    motion_head: ConvTranspose,
    mask_head: ConvTranspose,
    still_seed: Linear,
    still_trunk: Vec<ConvTranspose>,
    still_head: ConvTranspose,
}

impl VideoGenerator {
    /// `latent_dim` is the length of `z_v`.
    pub fn new<T: Float, R: Rng + ?Sized>(
        ps: &mut ParamStore<T>,
        prefix: &str,
        latent_dim: usize,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Self {
        let levels = cfg.levels();
        let seed_channels = cfg.generator_width << (levels - 1);
        let seed_frames = cfg.seed_frames();
        let g3 = ConvGeom::cubic(4, 2, 1);
        let g2 = ConvGeom::planar(4, 2, 1);
        let seed = Linear::new(ps, &format!("{prefix}.seed"), latent_dim, seed_channels * seed_frames * 16, rng);
        let still_seed = Linear::new(ps, &format!("{prefix}.still_seed"), latent_dim, seed_channels * 16, rng);
        let mut trunk = Vec::new();
        let mut still_trunk = Vec::new();
        let mut ch = seed_channels;
        for i in 0..levels - 1 {
            let out = ch / 2;
            trunk.push(ConvTranspose::new(ps, &format!("{prefix}.trunk{i}"), ch, out, g3, true, Init::FanIn, rng));
            still_trunk.push(ConvTranspose::new(
                ps,
                &format!("{prefix}.still{i}"),
                ch,
                out,
                g2,
                true,
                Init::FanIn,
                rng,
            ));
            ch = out;
        }
        let c = cfg.channels;
        let motion_head = ConvTranspose::new(ps, &format!("{prefix}.motion_head"), ch, c, g3, true, Init::FanIn, rng);
        let mask_head = ConvTranspose::new(ps, &format!("{prefix}.mask_head"), ch, 1, g3, true, Init::FanIn, rng);
        let still_head = ConvTranspose::new(ps, &format!("{prefix}.still_head"), ch, c, g2, true, Init::FanIn, rng);
        VideoGenerator {
            latent_dim,
            seed_channels,
            seed_frames,
            seed,
            trunk,
            motion_head,
            mask_head,
            still_seed,
            still_trunk,
            still_head,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn check_latent<T: Float>(&self, z: &Var<'_, T>) -> Result<usize> {
        let s = z.shape();
        if s.len() != 2 || s[1] != self.latent_dim {
            return Err(invalid(format!("latent has shape {s:?}, expected [N, {}]", self.latent_dim)));
        }
        Ok(s[0])
    }

    /// Shared trunk for the mask and motion heads.
    fn trunk<'t, T: Float>(&self, z: Var<'t, T>, n: usize) -> Var<'t, T> {
        let mut h = self
            .seed
            .forward(z)
            .reshape(&[n, self.seed_channels, self.seed_frames, 4, 4])
            .relu();
        for layer in &self.trunk {
            h = layer.forward(h).relu();
        }
        h
    }

    /// `m(z_v)`, `[N, C, T, H, W]`.
    pub fn motion_net<'t, T: Float>(&self, z: Var<'t, T>) -> Result<Var<'t, T>> {
        let n = self.check_latent(&z)?;
        Ok(self.motion_head.forward(self.trunk(z, n)).tanh())
    }

    /// `alpha(z_v)`, `[N, 1, T, H, W]`.
    pub fn mask_net<'t, T: Float>(&self, z: Var<'t, T>) -> Result<Var<'t, T>> {
        let n = self.check_latent(&z)?;
        Ok(self.mask_head.forward(self.trunk(z, n)).sigmoid())
    }

    /// `s(z_v)`, `[N, C, H, W]`.
    pub fn static_net<'t, T: Float>(&self, z: Var<'t, T>) -> Result<Var<'t, T>> {
        let n = self.check_latent(&z)?;
        let mut h = self.still_seed.forward(z).reshape(&[n, self.seed_channels, 4, 4]).relu();
        for layer in &self.still_trunk {
            h = layer.forward(h).relu();
        }
        Ok(self.still_head.forward(h).tanh())
    }

    pub fn forward<'t, T: Float>(&self, z: Var<'t, T>) -> Result<GeneratorOutput<'t, T>> {
        let n = self.check_latent(&z)?;
        let h = self.trunk(z, n);
        let motion = self.motion_head.forward(h).tanh();
        let mask = self.mask_head.forward(h).sigmoid();
        let still = self.static_net(z)?;
        Ok(GeneratorOutput {
            video: compose(mask, motion, still),
            mask,
            motion,
            still,
        })
    }

    /// Generates one clip from `z_v`.
    pub fn generate_video(&self, ps: &ParamStore<f32>, z: &[f32], caption_id: &str) -> Result<VideoClip> {
        if z.len() != self.latent_dim {
            return Err(invalid(format!("latent has length {}, expected {}", z.len(), self.latent_dim)));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(invalid("latent contains non-finite values"));
        }
        let tape = Tape::inference(ps);
        let zv = tape.constant(Tensor::from_vec(&[1, self.latent_dim], z.to_vec()));
        let out = self.forward(zv)?;
        VideoClip::from_batch(&out.video.value(), 0, caption_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compose_latent_concatenates_in_order() {
        let g = vec![1.0; 256];
        let n = vec![2.0; 64];
        let z = compose_latent(&g, &n, 64).unwrap();
        assert_eq!(z.len(), 320);
        assert_eq!(&z[..256], &g[..]);
        assert!(compose_latent(&g, &n, 32).is_err());
    }

    #[test]
    fn byte_map_endpoints() {
        assert_eq!(to_byte(-1.0), 0);
        assert_eq!(to_byte(1.0), 255);
        assert_eq!(to_byte(0.0), 128);
    }

    #[test]
    fn raw_roundtrip() {
        let data: Vec<f32> = (0..2 * 3 * 4 * 4).map(|i| (i as f32 / 96.0) * 2.0 - 1.0).collect();
        let clip = VideoClip::new(Tensor::from_vec(&[2, 3, 4, 4], data), "c").unwrap();
        let mut buf = Vec::new();
        clip.write_raw(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 96 * 4);
        assert_eq!(&buf[..4], &2u32.to_le_bytes());
        let back = VideoClip::read_raw(&buf[..], Path::new("c.raw")).unwrap();
        assert_eq!(back.frames, clip.frames);
        assert!(VideoClip::read_raw(&buf[..buf.len() - 1], Path::new("c.raw")).is_err());
    }

    #[test]
    fn rejects_out_of_range_clip() {
        assert!(VideoClip::new(Tensor::full(&[1, 1, 2, 2], 1.5), "x").is_err());
    }
}
