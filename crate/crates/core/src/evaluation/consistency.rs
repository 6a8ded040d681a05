//! Caption consistency on the toy corpus: does the gist show the captioned
//! background color, and does the clip move in the captioned direction?

use t2v_autograd::Tensor;

use crate::data_pipeline::toy::{color_rgb, motion_step, parse_caption, PALETTE};
use crate::error::{invalid, Result};
use crate::gist_cvae::Gist;
use crate::video_generator::VideoClip;

pub const BORDER: usize = 4;

/// Mean RGB over the outer `BORDER`-pixel frame of a `[C, H, W]` image.
pub fn border_mean(image: &Tensor<f32>) -> [f64; 3] {
    let s = image.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let b = BORDER.min(h / 2).min(w / 2);
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            if y < b || y >= h - b || x < b || x >= w - b {
                for (ch, acc) in sum.iter_mut().enumerate() {
                    *acc += image.data()[(ch.min(c - 1) * h + y) * w + x] as f64;
                }
                count += 1;
            }
        }
    }
    sum.map(|v| v / count as f64)
}

fn unit(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0 && n.is_finite()).then(|| v.map(|x| x / n))
}

/// Candidate color nearest to `rgb` after scaling both to unit length.
pub fn nearest_color<'a>(rgb: [f64; 3], candidates: &[&'a str]) -> Option<&'a str> {
    let u = unit(rgb)?;
    let mut best: Option<(&str, f64)> = None;
    for &name in candidates {
        let c = unit(color_rgb(name)?.map(|v| v as f64))?;
        let d: f64 = u.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((name, d));
        }
    }
    best.map(|(n, _)| n)
}

/// Least-squares drift `(dx/dt, dy/dt)` of the frame-difference energy
/// centroid. `None` when fewer than two frame pairs carry any change.
pub fn centroid_drift(clip: &VideoClip) -> Option<[f64; 2]> {
    let [t_len, c, h, w] = clip.dims();
    let d = clip.frames.data();
    let frame = c * h * w;
    let mut pts: Vec<(f64, f64, f64)> = Vec::new();
    for t in 1..t_len {
        let (mut e, mut ex, mut ey) = (0.0f64, 0.0f64, 0.0f64);
        for y in 0..h {
            for x in 0..w {
                let mut v = 0.0f64;
                for ch in 0..c {
                    let i = (ch * h + y) * w + x;
                    v += (d[t * frame + i] - d[(t - 1) * frame + i]).abs() as f64;
                }
                e += v;
                ex += v * x as f64;
                ey += v * y as f64;
            }
        }
        if e > 0.0 {
            pts.push((t as f64, ex / e, ey / e));
        }
    }
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.2).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mx)).sum();
    let sy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.2 - my)).sum();
    Some([sx / stt, sy / stt])
}

/// Whether `drift` points within 45 degrees of the named motion.
pub fn motion_matches(drift: Option<[f64; 2]>, motion: &str) -> bool {
    let (Some([dx, dy]), Some([mx, my])) = (drift, motion_step(motion)) else {
        return false;
    };
    let norm = (dx * dx + dy * dy).sqrt();
    if !(norm > 1e-9) {
        return false;
    }
    let m = ((mx * mx + my * my) as f64).sqrt();
    let cos = (dx * mx as f64 + dy * my as f64) / (norm * m);
    cos >= std::f64::consts::FRAC_1_SQRT_2 - 1e-12
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsistencyRates {
    pub color_match_rate: f64,
    pub motion_match_rate: f64,
}

/// One evaluated sample. Variants without a gist pass the first generated
/// frame in its place.
pub struct ConsistencySample<'a> {
    pub gist: &'a Gist,
    pub video: &'a VideoClip,
    pub caption: &'a str,
}

/// Palette colors that occur in `captions`, in palette order.
pub fn caption_colors<S: AsRef<str>>(captions: &[S]) -> Result<Vec<&'static str>> {
    let mut seen = [false; PALETTE.len()];
    for c in captions {
        let (color, _) =
            parse_caption(c.as_ref()).ok_or_else(|| invalid(format!("unparseable caption {:?}", c.as_ref())))?;
        let i = PALETTE.iter().position(|(n, _)| *n == color).expect("parsed color is in the palette");
        seen[i] = true;
    }
    Ok(PALETTE
        .iter()
        .zip(seen)
        .filter(|(_, s)| *s)
        .map(|((n, _), _)| *n)
        .collect())
}

/// Match rates against the colors in `candidates` (defaults to the colors
/// present in the captions).
pub fn caption_consistency_metrics(
    samples: &[ConsistencySample<'_>],
    candidates: Option<&[&str]>,
) -> Result<ConsistencyRates> {
    if samples.is_empty() {
        return Err(invalid("no samples to evaluate"));
    }
    let captions: Vec<&str> = samples.iter().map(|s| s.caption).collect();
    let found = caption_colors(&captions)?;
    let candidates = candidates.unwrap_or(&found);
    let mut color_hits = 0usize;
    let mut motion_hits = 0usize;
    for s in samples {
        let (color, motion) = parse_caption(s.caption).expect("checked by caption_colors");
        if nearest_color(border_mean(&s.gist.pixels), candidates) == Some(color.as_str()) {
            color_hits += 1;
        }
        if motion_matches(centroid_drift(s.video), &motion) {
            motion_hits += 1;
        }
    }
    let n = samples.len() as f64;
    Ok(ConsistencyRates {
        color_match_rate: color_hits as f64 / n,
        motion_match_rate: motion_hits as f64 / n,
    })
}
