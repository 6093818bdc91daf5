#![allow(dead_code)]

use std::path::Path;

use evidentia_core::tools::FixtureVideo;
use image::{Rgb, RgbImage};

/// Writes a fixture video whose frame `k` is a flat colour derived from `k`.
pub fn write_fixture(dir: &Path, duration_s: f64, fps: f64, width: u32, height: u32) {
    let frames = (duration_s * fps).round() as u32 + 1;
    FixtureVideo {
        duration_s,
        fps,
        frame_count: frames,
    }
    .write(dir, |k| RgbImage::from_pixel(width, height, Rgb([(k * 7 % 256) as u8, (k * 13 % 256) as u8, 90])))
    .unwrap();
}
