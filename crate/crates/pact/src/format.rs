//! Little-endian binary containers for sinograms, images and INR checkpoints.
//!
//! Every file is `magic (8 bytes) | header | f32 payload | CRC32`, with the
//! CRC (IEEE) taken over everything before it. Layouts are listed in the
//! README.

use std::fs;
use std::path::Path;

use pact_core::inr::{Field, HashEncodingConfig, InrModel, MlpConfig, ModelConfig};
use pact_core::{Image, ImageGrid, RingGeometry, Sinogram};

use crate::error::FormatError;

pub const SINOGRAM_MAGIC: &[u8; 8] = b"PACTSGM1";
pub const IMAGE_MAGIC: &[u8; 8] = b"PACTIMG1";
pub const INR_MAGIC: &[u8; 8] = b"PACTINR1";

/// Payloads above this many values are rejected before allocating.
pub const MAX_VALUES: u64 = 1 << 31;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) -> Result<(), FormatError> {
        let v = u32::try_from(v).map_err(|_| FormatError::DimensionOverflow(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f32s(&mut self, vs: &[f32]) {
        self.0.reserve(4 * vs.len() + 4);
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.0);
        self.0.extend_from_slice(&crc.to_le_bytes());
        self.0
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    /// Checks the magic; the CRC is verified in [`Reader::finish`] once the
    /// header has told us where the payload ends.
    fn open(buf: &'a [u8], magic: &[u8; 8]) -> Result<Self, FormatError> {
        if buf.len() < 8 {
            return Err(FormatError::Truncated { needed: 8, available: buf.len() });
        }
        if &buf[..8] != magic {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(&buf[..8]).into_owned(),
            });
        }
        Ok(Reader { buf, at: 8 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(FormatError::Truncated { needed: self.at.saturating_add(n), available: self.buf.len() });
        };
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Reads `n` f32 values after checking `n` against [`MAX_VALUES`] and the
    /// bytes actually present (payload plus CRC).
    fn f32s(&mut self, n: u64) -> Result<Vec<f32>, FormatError> {
        if n > MAX_VALUES {
            return Err(FormatError::DimensionOverflow(format!("{n} values exceed the limit of {MAX_VALUES}")));
        }
        let n = n as usize;
        let bytes = self.take(4 * n)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(mut self) -> Result<(), FormatError> {
        let body_end = self.at;
        let stored = self.u32()?;
        if self.at != self.buf.len() {
            return Err(FormatError::TrailingBytes(self.buf.len() - self.at));
        }
        let actual = crc32fast::hash(&self.buf[..body_end]);
        if stored != actual {
            return Err(FormatError::Checksum { stored, actual });
        }
        Ok(())
    }
}

fn product(a: u32, b: u32) -> Result<u64, FormatError> {
    let n = a as u64 * b as u64;
    if n > MAX_VALUES {
        return Err(FormatError::DimensionOverflow(format!("{a} x {b} exceeds the limit of {MAX_VALUES} values")));
    }
    Ok(n)
}

pub fn encode_sinogram(s: &Sinogram) -> Result<Vec<u8>, FormatError> {
    let mut w = Writer::default();
    w.0.extend_from_slice(SINOGRAM_MAGIC);
    w.u32(s.n_detectors())?;
    w.u32(s.n_samples())?;
    w.f64(s.fs_hz());
    w.f64(s.c_mps());
    w.f64(s.t0_s());
    w.f64(s.geometry().radius_m());
    for &a in s.geometry().angles() {
        w.f64(a);
    }
    w.f32s(s.data());
    Ok(w.finish())
}

pub fn decode_sinogram(buf: &[u8]) -> Result<Sinogram, FormatError> {
    let mut r = Reader::open(buf, SINOGRAM_MAGIC)?;
    let n_det = r.u32()?;
    let n_samples = r.u32()?;
    let n = product(n_det, n_samples)?;
    let (fs, c, t0, radius) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let angles = (0..n_det).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    let data = r.f32s(n)?;
    r.finish()?;
    let geometry = RingGeometry::from_angles(radius, angles)?;
    Ok(Sinogram::new(geometry, n_samples as usize, fs, c, t0, data)?)
}

fn write_grid(w: &mut Writer, g: &ImageGrid) -> Result<(), FormatError> {
    w.u32(g.nx)?;
    w.u32(g.ny)?;
    w.f64(g.pixel_m);
    w.f64(g.center.x);
    w.f64(g.center.y);
    Ok(())
}

fn read_grid(r: &mut Reader<'_>) -> Result<(ImageGrid, u64), FormatError> {
    let (nx, ny) = (r.u32()?, r.u32()?);
    let n = product(nx, ny)?;
    let (pixel, cx, cy) = (r.f64()?, r.f64()?, r.f64()?);
    let grid = ImageGrid::with_center(nx as usize, ny as usize, pixel, pact_core::geometry::Point::new(cx, cy))?;
    Ok((grid, n))
}

pub fn encode_image(img: &Image) -> Result<Vec<u8>, FormatError> {
    let mut w = Writer::default();
    w.0.extend_from_slice(IMAGE_MAGIC);
    write_grid(&mut w, img.grid())?;
    w.f32s(img.values());
    Ok(w.finish())
}

pub fn decode_image(buf: &[u8]) -> Result<Image, FormatError> {
    let mut r = Reader::open(buf, IMAGE_MAGIC)?;
    let (grid, n) = read_grid(&mut r)?;
    let values = r.f32s(n)?;
    r.finish()?;
    Ok(Image::new(grid, values)?)
}

pub fn encode_inr(model: &InrModel<f32>) -> Result<Vec<u8>, FormatError> {
    let cfg = model.config();
    let mut w = Writer::default();
    w.0.extend_from_slice(INR_MAGIC);
    w.u32(cfg.hash.n_levels)?;
    w.u32(cfg.hash.features_per_level)?;
    w.u32(cfg.hash.table_size_log2 as usize)?;
    w.u32(cfg.hash.base_resolution as usize)?;
    w.u32(cfg.hash.finest_resolution as usize)?;
    w.u32(cfg.mlp.hidden_layers)?;
    w.u32(cfg.mlp.hidden_width)?;
    w.f64(cfg.mlp.output_bias);
    write_grid(&mut w, model.domain())?;
    w.u64(model.n_params() as u64);
    w.f32s(model.params());
    Ok(w.finish())
}

pub fn decode_inr(buf: &[u8]) -> Result<InrModel<f32>, FormatError> {
    let mut r = Reader::open(buf, INR_MAGIC)?;
    let hash = HashEncodingConfig {
        n_levels: r.u32()? as usize,
        features_per_level: r.u32()? as usize,
        table_size_log2: r.u32()?,
        base_resolution: r.u32()?,
        finest_resolution: r.u32()?,
    };
    let mlp = MlpConfig { hidden_layers: r.u32()? as usize, hidden_width: r.u32()? as usize, output_bias: r.f64()? };
    let (domain, _) = read_grid(&mut r)?;
    let n = r.u64()?;
    let params = r.f32s(n)?;
    r.finish()?;
    let mut model = InrModel::<f32>::zeroed(&ModelConfig { hash, mlp }, domain)?;
    if model.n_params() as u64 != n {
        return Err(FormatError::Inconsistent(format!(
            "header describes a model with {} parameters, payload has {n}",
            model.n_params()
        )));
    }
    model.params_mut().copy_from_slice(&params);
    Ok(model)
}

fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|e| FormatError::Io { path: path.to_path_buf(), source: e })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    fs::write(path, bytes).map_err(|e| FormatError::Io { path: path.to_path_buf(), source: e })
}

pub fn save_sinogram(path: &Path, s: &Sinogram) -> Result<(), FormatError> {
    write_file(path, &encode_sinogram(s)?)
}

pub fn load_sinogram(path: &Path) -> Result<Sinogram, FormatError> {
    decode_sinogram(&read_file(path)?)
}

pub fn save_image(path: &Path, img: &Image) -> Result<(), FormatError> {
    write_file(path, &encode_image(img)?)
}

pub fn load_image(path: &Path) -> Result<Image, FormatError> {
    decode_image(&read_file(path)?)
}

pub fn save_inr(path: &Path, model: &InrModel<f32>) -> Result<(), FormatError> {
    write_file(path, &encode_inr(model)?)
}

pub fn load_inr(path: &Path) -> Result<InrModel<f32>, FormatError> {
    decode_inr(&read_file(path)?)
}
