//! Temporal clip inspection: four midpoint-sampled frames from a queried
//! interval, composed row-major into a 2x2 grid and capped in resolution.

use std::path::{Path, PathBuf};
use std::process::Command;

use image::imageops::{self, FilterType};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::ToolError;
use crate::types::{FrameGrid, NewsItem};

pub const FRAMES_PER_GRID: usize = 4;
pub const GRID_COLUMNS: u32 = 2;
pub const FIXTURE_MANIFEST: &str = "video.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Upper bound on the longer side of the composed grid, in pixels.
    pub resolution_cap: u32,
    /// Where composed grids are written.
    pub output_dir: PathBuf,
    /// External decoder argv; `{path}`, `{t}` and `{out}` are substituted.
    /// Only used for videos that are not fixture directories.
    pub decoder_command: Option<Vec<String>>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            resolution_cap: 1024,
            output_dir: std::env::temp_dir().join("evidentia-grids"),
            decoder_command: None,
        }
    }
}

/// Clamps `[start_s, end_s]` to `[0, duration_s]` and places one sample at the
/// midpoint of each quarter of the clamped interval.
pub fn sample_timestamps(start_s: f64, end_s: f64, duration_s: f64) -> Result<((f64, f64), [f64; FRAMES_PER_GRID]), ToolError> {
    if !(start_s.is_finite() && end_s.is_finite()) || start_s >= end_s {
        return Err(ToolError::BadParams(format!("interval [{start_s}, {end_s}] is empty")));
    }
    let lo = start_s.max(0.0);
    let hi = end_s.min(duration_s);
    if hi <= lo {
        return Err(ToolError::DegenerateInterval);
    }
    let step = (hi - lo) / FRAMES_PER_GRID as f64;
    let ts = std::array::from_fn(|i| lo + (i as f64 + 0.5) * step);
    Ok(((lo, hi), ts))
}

/// A directory of numbered stills standing in for a decoded video.
///
/// Layout: `video.json` (`{"duration_s", "fps", "frame_count"}`) plus
/// `frame_00000.png`, `frame_00001.png`, ... with frame `k` shown at `k / fps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureVideo {
    pub duration_s: f64,
    pub fps: f64,
    pub frame_count: u32,
}

impl FixtureVideo {
    pub fn frame_name(index: u32) -> String {
        format!("frame_{index:05}.png")
    }

    pub fn load(dir: &Path) -> Option<Self> {
        let text = std::fs::read_to_string(dir.join(FIXTURE_MANIFEST)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn nearest_frame(&self, t: f64) -> u32 {
        let idx = (t * self.fps).round();
        (idx.max(0.0) as u32).min(self.frame_count.saturating_sub(1))
    }

    /// Writes a fixture whose frames are produced by `paint(index)`.
    pub fn write(&self, dir: &Path, mut paint: impl FnMut(u32) -> RgbImage) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(FIXTURE_MANIFEST), serde_json::to_vec_pretty(self)?)?;
        for k in 0..self.frame_count {
            paint(k)
                .save(dir.join(Self::frame_name(k)))
                .map_err(std::io::Error::other)?;
        }
        Ok(())
    }
}

fn decode_frame(video_path: &Path, t: f64, cfg: &RenderConfig) -> Result<RgbImage, ToolError> {
    if let Some(fixture) = FixtureVideo::load(video_path) {
        let path = video_path.join(FixtureVideo::frame_name(fixture.nearest_frame(t)));
        return image::open(&path)
            .map(|img| img.to_rgb8())
            .map_err(|e| ToolError::DecodeFailure(format!("{}: {e}", path.display())));
    }
    let Some(argv) = cfg.decoder_command.as_ref().filter(|a| !a.is_empty()) else {
        return Err(ToolError::DecodeFailure(format!(
            "{} is not a fixture video and no decoder is configured",
            video_path.display()
        )));
    };
    let scratch = tempfile::Builder::new()
        .prefix("evidentia-frame")
        .suffix(".png")
        .tempfile()
        .map_err(|e| ToolError::DecodeFailure(e.to_string()))?;
    let out = scratch.path().to_path_buf();
    let args: Vec<String> = argv
        .iter()
        .map(|a| {
            a.replace("{path}", &video_path.to_string_lossy())
                .replace("{t}", &format!("{t:.3}"))
                .replace("{out}", &out.to_string_lossy())
        })
        .collect();
    let status = Command::new(&args[0])
        .args(&args[1..])
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status()
        .map_err(|e| ToolError::DecodeFailure(format!("{}: {e}", args[0])))?;
    if !status.success() {
        return Err(ToolError::DecodeFailure(format!("decoder exited with {status} at t={t:.3}")));
    }
    image::open(&out)
        .map(|img| img.to_rgb8())
        .map_err(|e| ToolError::DecodeFailure(format!("t={t:.3}: {e}")))
}

/// Places four frames row-major in a 2x2 grid, then downscales (aspect
/// preserved) until the longer side fits `cap`. Frames are resized to the
/// first frame's size when they differ.
pub fn compose_grid(frames: &[RgbImage], cap: u32) -> RgbImage {
    assert_eq!(frames.len(), FRAMES_PER_GRID, "grid needs exactly four frames");
    let (cw, ch) = frames[0].dimensions();
    let mut grid = RgbImage::new(cw * GRID_COLUMNS, ch * GRID_COLUMNS);
    for (i, frame) in frames.iter().enumerate() {
        let x = (i as u32 % GRID_COLUMNS) * cw;
        let y = (i as u32 / GRID_COLUMNS) * ch;
        if frame.dimensions() == (cw, ch) {
            imageops::replace(&mut grid, frame, x as i64, y as i64);
        } else {
            let resized = imageops::resize(frame, cw, ch, FilterType::Triangle);
            imageops::replace(&mut grid, &resized, x as i64, y as i64);
        }
    }
    let (w, h) = grid.dimensions();
    match capped_dimensions(w, h, cap) {
        Some((nw, nh)) => imageops::resize(&grid, nw, nh, FilterType::Triangle),
        None => grid,
    }
}

/// Target size for a `w`x`h` image so its longer side is at most `cap`, or
/// `None` when it already fits.
pub fn capped_dimensions(w: u32, h: u32, cap: u32) -> Option<(u32, u32)> {
    let longest = w.max(h);
    if longest <= cap || cap == 0 {
        return None;
    }
    let scale = cap as f64 / longest as f64;
    let nw = ((w as f64 * scale).round() as u32).clamp(1, cap);
    let nh = ((h as f64 * scale).round() as u32).clamp(1, cap);
    Some((nw, nh))
}

fn grid_file_name(item_id: &str, lo: f64, hi: f64) -> String {
    let safe: String = item_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}_{lo:.3}_{hi:.3}.png")
}

/// Samples, decodes and composes the grid for one clip request.
pub fn clip_scout(start_s: f64, end_s: f64, item: &NewsItem, cfg: &RenderConfig) -> Result<FrameGrid, ToolError> {
    let ((lo, hi), timestamps) = sample_timestamps(start_s, end_s, item.video_duration_s)?;
    let video = Path::new(&item.video_path);
    let frames = timestamps
        .iter()
        .map(|&t| decode_frame(video, t, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = compose_grid(&frames, cfg.resolution_cap);

    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| ToolError::Io(e.to_string()))?;
    let target = cfg.output_dir.join(grid_file_name(&item.id, lo, hi));
    // Concurrent rollouts of one item render the same grid; write-then-rename
    // keeps readers from ever seeing a partial file.
    let tmp = tempfile::Builder::new()
        .prefix(".grid")
        .suffix(".png")
        .tempfile_in(&cfg.output_dir)
        .map_err(|e| ToolError::Io(e.to_string()))?;
    grid.write_to(&mut std::io::BufWriter::new(tmp.as_file()), image::ImageFormat::Png)
        .map_err(|e| ToolError::Io(e.to_string()))?;
    tmp.persist(&target).map_err(|e| ToolError::Io(e.to_string()))?;

    Ok(FrameGrid {
        interval: (lo, hi),
        sample_timestamps: timestamps.to_vec(),
        image: target.to_string_lossy().into_owned(),
        width: grid.width(),
        height: grid.height(),
    })
}
