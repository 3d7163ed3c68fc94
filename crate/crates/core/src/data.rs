//! Image and RF-data containers.
//!
//! Both store `f32` samples, which is also their on-disk precision; numerical
//! kernels widen to `f64` internally.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{ImageGrid, RingGeometry};

fn check_finite(values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Raster image on an [`ImageGrid`], row-major (`j * nx + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    grid: ImageGrid,
    values: Vec<f32>,
}

impl Image {
    pub fn new(grid: ImageGrid, values: Vec<f32>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} = {} values", grid.nx, grid.ny, grid.len()),
                actual: format!("{} values", values.len()),
            });
        }
        check_finite(&values)?;
        Ok(Image { grid, values })
    }

    pub fn zeros(grid: ImageGrid) -> Self {
        Image { grid, values: alloc::vec![0.0; grid.len()] }
    }

    /// Builds an image from `f64` values, rounding to `f32`.
    pub fn from_f64(grid: ImageGrid, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| v as f32).collect())
    }

    pub fn grid(&self) -> &ImageGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[j * self.grid.nx + i]
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min(&self) -> f32 {
        self.values.iter().copied().fold(f32::INFINITY, f32::min)
    }

    /// Clips negatives to zero and scales the maximum to one. An image with
    /// no positive value becomes all zeros.
    pub fn normalized(&self) -> Image {
        let max = self.values.iter().copied().fold(0.0f32, f32::max);
        let values = if max > 0.0 {
            self.values.iter().map(|&v| v.max(0.0) / max).collect()
        } else {
            alloc::vec![0.0; self.values.len()]
        };
        Image { grid: self.grid, values }
    }

    /// Affine rescale so the minimum maps to 0 and the maximum to 1.
    pub fn min_max_normalized(&self) -> Image {
        let (lo, hi) = (self.min(), self.max());
        let span = hi - lo;
        let values = if span > 0.0 {
            self.values.iter().map(|&v| (v - lo) / span).collect()
        } else {
            alloc::vec![0.0; self.values.len()]
        };
        Image { grid: self.grid, values }
    }
}

/// RF pressure samples, one row of `n_samples` per detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geometry: RingGeometry,
    n_samples: usize,
    fs_hz: f64,
    c_mps: f64,
    t0_s: f64,
    data: Vec<f32>,
}

impl Sinogram {
    pub fn new(
        geometry: RingGeometry,
        n_samples: usize,
        fs_hz: f64,
        c_mps: f64,
        t0_s: f64,
        data: Vec<f32>,
    ) -> Result<Self> {
        let expected = geometry.n_elements() * n_samples;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected: format!("{} detectors x {} samples = {}", geometry.n_elements(), n_samples, expected),
                actual: format!("{} values", data.len()),
            });
        }
        if !(fs_hz.is_finite() && fs_hz > 0.0) {
            return Err(Error::Config(format!("sampling frequency must be > 0, got {fs_hz}")));
        }
        if !(c_mps.is_finite() && c_mps > 0.0) {
            return Err(Error::Config(format!("speed of sound must be > 0, got {c_mps}")));
        }
        if !t0_s.is_finite() {
            return Err(Error::Config("t0 must be finite".into()));
        }
        check_finite(&data)?;
        Ok(Sinogram { geometry, n_samples, fs_hz, c_mps, t0_s, data })
    }

    pub fn zeros(geometry: RingGeometry, n_samples: usize, fs_hz: f64, c_mps: f64) -> Result<Self> {
        let len = geometry.n_elements() * n_samples;
        Self::new(geometry, n_samples, fs_hz, c_mps, 0.0, alloc::vec![0.0; len])
    }

    pub fn geometry(&self) -> &RingGeometry {
        &self.geometry
    }

    pub fn n_detectors(&self) -> usize {
        self.geometry.n_elements()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }

    pub fn c_mps(&self) -> f64 {
        self.c_mps
    }

    pub fn t0_s(&self) -> f64 {
        self.t0_s
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, d: usize) -> &[f32] {
        &self.data[d * self.n_samples..(d + 1) * self.n_samples]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// Time of sample `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.t0_s + i as f64 / self.fs_hz
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    /// Same acquisition with new sample values.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Self::new(self.geometry.clone(), self.n_samples, self.fs_hz, self.c_mps, self.t0_s, data)
    }

    /// Divides every sample by the maximum absolute value. All-zero data is
    /// returned unchanged.
    pub fn normalized(&self) -> Sinogram {
        let m = self.max_abs();
        let mut out = self.clone();
        if m > 0.0 {
            out.data.iter_mut().for_each(|v| *v /= m);
        }
        out
    }

    /// Keeps every `n_detectors / n_proj`-th detector starting at index 0.
    pub fn subsample_detectors(&self, n_proj: usize) -> Result<Sinogram> {
        let n = self.n_detectors();
        if n_proj == 0 || !n.is_multiple_of(n_proj) {
            return Err(Error::NotADivisor { n_proj, n_detectors: n });
        }
        let stride = n / n_proj;
        let geometry = self.geometry.decimate(stride)?;
        let mut data = Vec::with_capacity(n_proj * self.n_samples);
        for d in (0..n).step_by(stride) {
            data.extend_from_slice(self.row(d));
        }
        Ok(Sinogram { geometry, data, ..self.clone() })
    }
}
