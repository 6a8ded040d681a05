//! Clip qualification: keep runs of frames that overlap enough to show one
//! continuous shot, then cut them into fixed-length, resized clips.

use image::imageops::{self, FilterType};
use image::RgbImage;
use t2v_autograd::Tensor;

use crate::data_pipeline::keypoints::{detect, overlap, GrayImage, KeypointConfig};
use crate::data_pipeline::parallel::parallel_map;
use crate::error::{invalid, Result};
use crate::video_generator::VideoClip;

#[derive(Clone, Debug, PartialEq)]
pub struct ClipQualificationConfig {
    pub fps: u32,
    pub clip_length: usize,
    pub resolution: usize,
    pub min_keypoint_overlap: f64,
    pub keypoints: KeypointConfig,
}

impl Default for ClipQualificationConfig {
    fn default() -> Self {
        ClipQualificationConfig {
            fps: 25,
            clip_length: 32,
            resolution: 64,
            min_keypoint_overlap: 0.5,
            keypoints: KeypointConfig::default(),
        }
    }
}

impl ClipQualificationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fps == 0 || self.clip_length == 0 || self.resolution == 0 {
            return Err(invalid("fps, clip_length and resolution must be positive"));
        }
        if !(0.0..=1.0).contains(&self.min_keypoint_overlap) {
            return Err(invalid(format!(
                "min_keypoint_overlap must lie in [0, 1], got {}",
                self.min_keypoint_overlap
            )));
        }
        Ok(())
    }
}

/// Overlap fraction between each pair of consecutive frames.
pub fn frame_overlaps(frames: &[RgbImage], cfg: &KeypointConfig) -> Vec<f64> {
    let grays: Vec<GrayImage> = frames.iter().map(GrayImage::from_rgb).collect();
    let kps: Vec<_> = grays.iter().map(|g| detect(g, cfg)).collect();
    (1..frames.len())
        .map(|i| overlap(&grays[i - 1], &kps[i - 1], &grays[i], &kps[i], cfg))
        .collect()
}

/// Frame ranges `[start, end)` of the emitted clips.
pub fn clip_spans(overlaps: &[f64], num_frames: usize, clip_length: usize, threshold: f64) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    for end in 1..=num_frames {
        let breaks = end == num_frames || !(overlaps[end - 1] >= threshold);
        if breaks {
            let mut s = start;
            while s + clip_length <= end {
                spans.push((s, s + clip_length));
                s += clip_length;
            }
            start = end;
        }
    }
    spans
}

/// Center square crop, resize and scale to `[-1, 1]`, channels first.
pub fn preprocess_frame(frame: &RgbImage, resolution: usize) -> Vec<f32> {
    let (w, h) = frame.dimensions();
    let side = w.min(h);
    let crop = imageops::crop_imm(frame, (w - side) / 2, (h - side) / 2, side, side).to_image();
    let r = resolution as u32;
    let img = if side == r {
        crop
    } else {
        imageops::resize(&crop, r, r, FilterType::Triangle)
    };
    let plane = resolution * resolution;
    let mut out = vec![0f32; 3 * plane];
    for (i, p) in img.pixels().enumerate() {
        for c in 0..3 {
            out[c * plane + i] = p[c] as f32 / 127.5 - 1.0;
        }
    }
    out
}

/// Clips from one decoded frame sequence. Too few qualifying frames yields an
/// empty list.
pub fn qualify_clips(frames: &[RgbImage], cfg: &ClipQualificationConfig) -> Result<Vec<VideoClip>> {
    qualify_clips_named(frames, cfg, "")
}

/// As [`qualify_clips`], tagging each clip with `caption_id`.
pub fn qualify_clips_named(frames: &[RgbImage], cfg: &ClipQualificationConfig, caption_id: &str) -> Result<Vec<VideoClip>> {
    cfg.validate()?;
    if frames.len() < cfg.clip_length {
        return Ok(Vec::new());
    }
    let overlaps = frame_overlaps(frames, &cfg.keypoints);
    let r = cfg.resolution;
    clip_spans(&overlaps, frames.len(), cfg.clip_length, cfg.min_keypoint_overlap)
        .into_iter()
        .map(|(s, e)| {
            let data: Vec<f32> = frames[s..e].iter().flat_map(|f| preprocess_frame(f, r)).collect();
            VideoClip::new(Tensor::from_vec(&[e - s, 3, r, r], data), caption_id)
        })
        .collect()
}

/// Qualifies several videos, one worker per video; output order follows input.
pub fn qualify_videos(videos: &[Vec<RgbImage>], cfg: &ClipQualificationConfig, workers: usize) -> Result<Vec<Vec<VideoClip>>> {
    parallel_map(videos, workers, |v| qualify_clips(v, cfg)).into_iter().collect()
}
