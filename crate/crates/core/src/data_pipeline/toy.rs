//! Synthetic captioned clips: a contrasting square translating over a solid
//! background, so color and motion are independently controllable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use t2v_autograd::Tensor;

use crate::error::{invalid, Result};
use crate::video_generator::VideoClip;

/// Named background colors in `[-1, 1]` RGB. The first four are the vertices
/// of a regular tetrahedron, so nearest-color guessing is at exactly 1/4.
pub const PALETTE: [(&str, [f32; 3]); 8] = [
    ("red", [1.0, -1.0, -1.0]),
    ("green", [-1.0, 1.0, -1.0]),
    ("blue", [-1.0, -1.0, 1.0]),
    ("white", [1.0, 1.0, 1.0]),
    ("yellow", [1.0, 1.0, -1.0]),
    ("cyan", [-1.0, 1.0, 1.0]),
    ("magenta", [1.0, -1.0, 1.0]),
    ("black", [-1.0, -1.0, -1.0]),
];

/// Motion names and their per-frame `(dx, dy)`, image `y` pointing down.
pub const MOTIONS: [(&str, [i32; 2]); 8] = [
    ("right", [1, 0]),
    ("left", [-1, 0]),
    ("up", [0, -1]),
    ("down", [0, 1]),
    ("up-right", [1, -1]),
    ("down-left", [-1, 1]),
    ("up-left", [-1, -1]),
    ("down-right", [1, 1]),
];

pub fn color_rgb(name: &str) -> Option<[f32; 3]> {
    PALETTE.iter().find(|(n, _)| *n == name).map(|&(_, c)| c)
}

pub fn motion_step(name: &str) -> Option<[i32; 2]> {
    MOTIONS.iter().find(|(n, _)| *n == name).map(|&(_, m)| m)
}

pub fn caption_for(color: &str, motion: &str) -> String {
    format!("a shape moving {motion} on a {color} background")
}

/// Recovers `(color, motion)` from a caption produced by [`caption_for`].
pub fn parse_caption(caption: &str) -> Option<(String, String)> {
    let rest = caption.trim().strip_prefix("a shape moving ")?;
    let (motion, rest) = rest.split_once(" on a ")?;
    let color = rest.strip_suffix(" background")?;
    (color_rgb(color).is_some() && motion_step(motion).is_some()).then(|| (color.to_string(), motion.to_string()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyCorpusSpec {
    pub background_colors: Vec<String>,
    pub motions: Vec<String>,
    pub clips_per_combination: usize,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise_level: f64,
    pub seed: u64,
    pub frames: usize,
    pub size: usize,
}

impl ToyCorpusSpec {
    /// The first `colors` palette entries and first `motions` directions.
    pub fn standard(colors: usize, motions: usize, per_combination: usize, seed: u64) -> Self {
        ToyCorpusSpec {
            background_colors: PALETTE.iter().take(colors).map(|(n, _)| n.to_string()).collect(),
            motions: MOTIONS.iter().take(motions).map(|(n, _)| n.to_string()).collect(),
            clips_per_combination: per_combination,
            noise_level: 0.0,
            seed,
            frames: 32,
            size: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.background_colors.len() < 2 || self.motions.len() < 2 {
            return Err(invalid("need at least two colors and two motions"));
        }
        for c in &self.background_colors {
            color_rgb(c).ok_or_else(|| invalid(format!("unknown color {c:?}")))?;
        }
        for m in &self.motions {
            motion_step(m).ok_or_else(|| invalid(format!("unknown motion {m:?}")))?;
        }
        if self.clips_per_combination == 0 {
            return Err(invalid("clips_per_combination must be positive"));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(invalid("noise_level must be finite and non-negative"));
        }
        if self.frames < 2 || self.size < 8 {
            return Err(invalid("clips need at least 2 frames of at least 8x8 pixels"));
        }
        if self.frames - 1 + shape_side(self.size) > self.size {
            return Err(invalid(format!(
                "a {}-frame path does not fit in a {}-pixel frame",
                self.frames, self.size
            )));
        }
        Ok(())
    }
}

/// Side of the moving square.
pub fn shape_side(size: usize) -> usize {
    (size / 4).max(2)
}

/// White on dark backgrounds, black on light ones.
pub fn shape_color(background: [f32; 3]) -> [f32; 3] {
    let lum = 0.299 * background[0] + 0.587 * background[1] + 0.114 * background[2];
    if lum < 0.0 {
        [1.0; 3]
    } else {
        [-1.0; 3]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyPair {
    pub clip: VideoClip,
    pub caption: String,
}

/// Start coordinate so that `frames` steps of `d` keep the shape inside.
fn start<R: Rng>(d: i32, size: usize, side: usize, frames: usize, rng: &mut R) -> usize {
    let travel = frames - 1;
    let span = size - side;
    match d {
        0 => rng.random_range(0..=span),
        1 => rng.random_range(0..=span - travel),
        _ => rng.random_range(travel..=span),
    }
}

/// Renders one clip `[T, 3, H, W]`.
pub fn render_clip<R: Rng>(
    background: [f32; 3],
    step: [i32; 2],
    frames: usize,
    size: usize,
    noise: f64,
    rng: &mut R,
) -> Tensor<f32> {
    let side = shape_side(size);
    let x0 = start(step[0], size, side, frames, rng) as i32;
    let y0 = start(step[1], size, side, frames, rng) as i32;
    let fg = shape_color(background);
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut data = Vec::with_capacity(frames * 3 * size * size);
    for t in 0..frames as i32 {
        let (sx, sy) = (x0 + step[0] * t, y0 + step[1] * t);
        for (&bg, &fgc) in background.iter().zip(&fg) {
            for y in 0..size as i32 {
                for x in 0..size as i32 {
                    let inside = x >= sx && x < sx + side as i32 && y >= sy && y < sy + side as i32;
                    let mut v = if inside { fgc } else { bg };
                    if noise > 0.0 {
                        v = (v + normal.sample(rng) as f32).clamp(-1.0, 1.0);
                    }
                    data.push(v);
                }
            }
        }
    }
    Tensor::from_vec(&[frames, 3, size, size], data)
}

/// One clip per (color, motion, index), in that nesting order.
pub fn synthesize_toy_corpus(spec: &ToyCorpusSpec) -> Result<Vec<ToyPair>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::new();
    for color in &spec.background_colors {
        let bg = color_rgb(color).expect("validated");
        for motion in &spec.motions {
            let step = motion_step(motion).expect("validated");
            for k in 0..spec.clips_per_combination {
                let frames = render_clip(bg, step, spec.frames, spec.size, spec.noise_level, &mut rng);
                let id = format!("{color}_{motion}_{k:04}");
                out.push(ToyPair {
                    clip: VideoClip::new(frames, id)?,
                    caption: caption_for(color, motion),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_tetrahedron_is_regular() {
        let d = |a: [f32; 3], b: [f32; 3]| a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f32>();
        for i in 0..4 {
            for j in i + 1..4 {
                assert_eq!(d(PALETTE[i].1, PALETTE[j].1), 8.0);
            }
        }
    }

    #[test]
    fn enumerates_combinations() {
        let mut spec = ToyCorpusSpec::standard(4, 4, 10, 3);
        spec.frames = 8;
        spec.size = 16;
        let pairs = synthesize_toy_corpus(&spec).unwrap();
        assert_eq!(pairs.len(), 160);
        for p in &pairs {
            assert!(parse_caption(&p.caption).is_some());
        }
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(ToyCorpusSpec::standard(1, 4, 1, 0).validate().is_err());
        let mut s = ToyCorpusSpec::standard(2, 2, 1, 0);
        s.motions[0] = "sideways".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn parser_rejects_other_text() {
        assert_eq!(parse_caption("a dog running"), None);
        assert_eq!(
            parse_caption(&caption_for("cyan", "up-left")),
            Some(("cyan".into(), "up-left".into()))
        );
    }
}
