//! Corner keypoints, patch descriptors and translation-consensus matching,
//! used to decide whether consecutive frames show the same scene.

/// Grayscale image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn from_rgb(img: &image::RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let data = img
            .pixels()
            .map(|p| (0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32) / 255.0)
            .collect();
        GrayImage {
            width: w as usize,
            height: h as usize,
            data,
        }
    }

    fn at(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn mean_abs_diff(&self, other: &GrayImage) -> f64 {
        if self.data.len() != other.data.len() || self.data.is_empty() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / self.data.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeypointConfig {
    pub max_keypoints: usize,
    /// Harris sensitivity `k` in `det - k * trace^2`.
    pub harris_k: f32,
    /// Responses below this fraction of the strongest are discarded.
    pub relative_threshold: f32,
    pub patch_radius: usize,
    /// Lowe-style ratio between best and second-best descriptor distance.
    pub match_ratio: f32,
    /// Pixel tolerance for translation inliers.
    pub inlier_tolerance: f32,
    /// Below this many keypoints in both frames, fall back to pixel difference.
    pub min_keypoints: usize,
    pub fallback_max_diff: f64,
}

impl Default for KeypointConfig {
    fn default() -> Self {
        KeypointConfig {
            max_keypoints: 200,
            harris_k: 0.04,
            relative_threshold: 0.01,
            patch_radius: 3,
            match_ratio: 0.8,
            inlier_tolerance: 2.0,
            min_keypoints: 4,
            fallback_max_diff: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub response: f32,
    pub descriptor: Vec<f32>,
}

/// Harris corners with 3x3 non-maximum suppression and normalized patch
/// descriptors, strongest first.
pub fn detect(img: &GrayImage, cfg: &KeypointConfig) -> Vec<Keypoint> {
    let (w, h) = (img.width, img.height);
    let r = cfg.patch_radius;
    if w <= 2 * r + 2 || h <= 2 * r + 2 {
        return Vec::new();
    }
    let mut ixx = vec![0f32; w * h];
    let mut iyy = vec![0f32; w * h];
    let mut ixy = vec![0f32; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (img.at(x + 1, y - 1) + 2.0 * img.at(x + 1, y) + img.at(x + 1, y + 1))
                - (img.at(x - 1, y - 1) + 2.0 * img.at(x - 1, y) + img.at(x - 1, y + 1));
            let gy = (img.at(x - 1, y + 1) + 2.0 * img.at(x, y + 1) + img.at(x + 1, y + 1))
                - (img.at(x - 1, y - 1) + 2.0 * img.at(x, y - 1) + img.at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let window = |a: &[f32], x: usize, y: usize| -> f32 {
        let mut s = 0.0;
        for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                s += a[yy * w + xx];
            }
        }
        s
    };
    let mut resp = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let (a, b, c) = (window(&ixx, x, y), window(&iyy, x, y), window(&ixy, x, y));
            resp[y * w + x] = a * b - c * c - cfg.harris_k * (a + b) * (a + b);
        }
    }
    let max = resp.iter().cloned().fold(0f32, f32::max);
    if !(max > 1e-8) {
        return Vec::new();
    }
    let thresh = max * cfg.relative_threshold;
    let mut cands = Vec::new();
    for y in r..h - r {
        for x in r..w - r {
            let v = resp[y * w + x];
            if v <= thresh {
                continue;
            }
            let mut is_max = true;
            'nms: for yy in y - 1..=y + 1 {
                for xx in x - 1..=x + 1 {
                    let u = resp[yy * w + xx];
                    if (yy, xx) != (y, x) && (u > v || (u == v && (yy, xx) < (y, x))) {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                cands.push((x, y, v));
            }
        }
    }
    cands.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.1, a.0).cmp(&(b.1, b.0))));
    cands.truncate(cfg.max_keypoints);
    cands
        .into_iter()
        .filter_map(|(x, y, v)| {
            descriptor(img, x, y, r).map(|d| Keypoint {
                x: x as f32,
                y: y as f32,
                response: v,
                descriptor: d,
            })
        })
        .collect()
}

fn descriptor(img: &GrayImage, x: usize, y: usize, r: usize) -> Option<Vec<f32>> {
    let mut d = Vec::with_capacity((2 * r + 1).pow(2));
    for yy in y - r..=y + r {
        for xx in x - r..=x + r {
            d.push(img.data[yy * img.width + xx]);
        }
    }
    let mean = d.iter().sum::<f32>() / d.len() as f32;
    d.iter_mut().for_each(|v| *v -= mean);
    let norm = d.iter().map(|v| v * v).sum::<f32>().sqrt();
    (norm > 1e-6).then(|| d.into_iter().map(|v| v / norm).collect())
}

fn dist2(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest-neighbour matches `(index in a, index in b)` passing the ratio test.
pub fn match_descriptors(a: &[Keypoint], b: &[Keypoint], ratio: f32) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, ka) in a.iter().enumerate() {
        let mut best = (f32::INFINITY, usize::MAX);
        let mut second = f32::INFINITY;
        for (j, kb) in b.iter().enumerate() {
            let d = dist2(&ka.descriptor, &kb.descriptor);
            if d < best.0 {
                second = best.0;
                best = (d, j);
            } else if d < second {
                second = d;
            }
        }
        if best.1 != usize::MAX && best.0.sqrt() <= ratio * second.sqrt() {
            out.push((i, best.1));
        }
    }
    out
}

/// Largest set of matches agreeing on one translation, trying every match's
/// own offset as the hypothesis.
pub fn translation_inliers(a: &[Keypoint], b: &[Keypoint], matches: &[(usize, usize)], tol: f32) -> usize {
    let mut best = 0;
    for &(i, j) in matches {
        let (tx, ty) = (b[j].x - a[i].x, b[j].y - a[i].y);
        let n = matches
            .iter()
            .filter(|&&(p, q)| {
                let ex = b[q].x - a[p].x - tx;
                let ey = b[q].y - a[p].y - ty;
                ex.abs() <= tol && ey.abs() <= tol
            })
            .count();
        best = best.max(n);
    }
    best
}

/// Fraction of keypoints explained by a single translation between frames.
pub fn overlap(
    img_a: &GrayImage,
    kp_a: &[Keypoint],
    img_b: &GrayImage,
    kp_b: &[Keypoint],
    cfg: &KeypointConfig,
) -> f64 {
    if kp_a.len() < cfg.min_keypoints && kp_b.len() < cfg.min_keypoints {
        return if img_a.mean_abs_diff(img_b) < cfg.fallback_max_diff { 1.0 } else { 0.0 };
    }
    let matches = match_descriptors(kp_a, kp_b, cfg.match_ratio);
    let inliers = translation_inliers(kp_a, kp_b, &matches, cfg.inlier_tolerance);
    inliers as f64 / kp_a.len().max(kp_b.len()) as f64
}
