//! 8-bit grayscale PNG previews, max-abs normalized (negatives clip to black).

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use pact_core::Image;

use crate::error::{PactError, Result};

/// Gray levels in row-major order with row 0 at the top (largest `y`).
pub fn gray_levels(img: &Image) -> Vec<u8> {
    let g = img.grid();
    let peak = img.values().iter().fold(0.0f32, |a, v| a.max(v.abs()));
    let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    let mut out = Vec::with_capacity(g.len());
    for j in (0..g.ny).rev() {
        for i in 0..g.nx {
            out.push((img.get(i, j) * scale).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let io = |e: std::io::Error| PactError::io(path, e);
    let file = File::create(path).map_err(io)?;
    let g = img.grid();
    let mut enc = png::Encoder::new(BufWriter::new(file), g.nx as u32, g.ny as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| PactError::io(path, std::io::Error::other(e));
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(&gray_levels(img)).map_err(png_err)?;
    w.finish().map_err(png_err)
}
