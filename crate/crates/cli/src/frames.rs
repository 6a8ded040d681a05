//! Decoded frames from a video file (through an external ffmpeg process) or
//! a directory of PNG images.

use std::path::Path;
use std::process::{Command, Stdio};

use image::RgbImage;

use crate::{CliError, CliResult};

/// Frames of `path` at `fps`, center-cropped and scaled to `size`x`size` when
/// decoding a video file. Directories are read in file-name order.
pub fn decode(path: &Path, fps: u32, size: usize) -> CliResult<Vec<RgbImage>> {
    if path.is_dir() {
        read_dir(path)
    } else {
        ffmpeg(path, fps, size)
    }
}

fn read_dir(dir: &Path) -> CliResult<Vec<RgbImage>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            image::open(p)
                .map(|i| i.to_rgb8())
                .map_err(|e| CliError::Runtime(format!("decoding {}: {e}", p.display())))
        })
        .collect()
}

fn ffmpeg(path: &Path, fps: u32, size: usize) -> CliResult<Vec<RgbImage>> {
    let filter = format!("fps={fps},scale={size}:{size}:force_original_aspect_ratio=increase,crop={size}:{size}");
    let out = Command::new("ffmpeg")
        .args(["-v", "error", "-i"])
        .arg(path)
        .args(["-vf", &filter, "-f", "rawvideo", "-pix_fmt", "rgb24", "-"])
        .stdin(Stdio::null())
        .output()
        .map_err(|e| CliError::Runtime(format!("running ffmpeg on {}: {e}", path.display())))?;
    if !out.status.success() {
        return Err(CliError::Runtime(format!(
            "ffmpeg failed on {}: {}",
            path.display(),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    let frame = size * size * 3;
    Ok(out
        .stdout
        .chunks_exact(frame)
        .map(|c| RgbImage::from_raw(size as u32, size as u32, c.to_vec()).expect("chunk holds one frame"))
        .collect())
}
