//! Universal back-projection.
//!
//! Each pixel `r'` accumulates, over detectors `r`,
//!
//! ```text
//! [2p(r, t) − 2t·∂p/∂t(r, t)] · cosθ₀ / |r − r'|² · dS₀ / Ω₀,   t = |r − r'|/c
//! ```
//!
//! where `θ₀` is the angle between the inward element normal and the direction
//! to the pixel and `dS₀ = 2πR/N` is the arc length per element. `∂p/∂t` uses
//! centered differences on the samples (one-sided at the ends); both `p` and
//! `∂p/∂t` are interpolated linearly at `t`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::data::{Image, Sinogram};
use crate::error::Result;
use crate::geometry::{ImageGrid, Point};
use crate::par;

/// Solid angle subtended by the receiving surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ElementShape {
    /// Ω₀ = 2π.
    Planar,
    /// Ω₀ = 4π.
    #[default]
    Cylindrical,
}

impl ElementShape {
    pub fn solid_angle(self) -> f64 {
        match self {
            ElementShape::Planar => 2.0 * PI,
            ElementShape::Cylindrical => 4.0 * PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct UbpConfig {
    pub element_shape: ElementShape,
    /// Clip negative values of the result to zero.
    pub clip_negative: bool,
}

impl Default for UbpConfig {
    fn default() -> Self {
        UbpConfig { element_shape: ElementShape::Cylindrical, clip_negative: true }
    }
}

/// Centered time derivative of one RF row; one-sided at both ends.
pub fn time_derivative(row: &[f64], fs_hz: f64) -> Vec<f64> {
    let n = row.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    out[0] = (row[1] - row[0]) * fs_hz;
    out[n - 1] = (row[n - 1] - row[n - 2]) * fs_hz;
    for i in 1..n - 1 {
        out[i] = (row[i + 1] - row[i - 1]) * 0.5 * fs_hz;
    }
    out
}

/// Obliquity factor `cosθ₀` for an element at `detector` on a ring of radius
/// `ring_radius` (centered at the origin) looking at `pixel`.
pub fn obliquity(detector: [f64; 2], pixel: [f64; 2], ring_radius: f64) -> f64 {
    let dx = pixel[0] - detector[0];
    let dy = pixel[1] - detector[1];
    let dist = dx.hypot(dy);
    if dist == 0.0 {
        return 0.0;
    }
    // Inward normal is -detector/R.
    let c = -(dx * detector[0] + dy * detector[1]) / (ring_radius * dist);
    c.clamp(0.0, 1.0)
}

/// Precomputed per-detector rows shared by every evaluation point.
struct Backprojector {
    rows: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
    detectors: Vec<[f64; 2]>,
    fs: f64,
    c: f64,
    t0: f64,
    ring_r: f64,
    norm: f64,
}

impl Backprojector {
    fn new(s: &Sinogram, cfg: &UbpConfig) -> Self {
        let n_det = s.n_detectors();
        let fs = s.fs_hz();
        let ring_r = s.geometry().radius_m();
        let ds = 2.0 * PI * ring_r / n_det as f64;
        let rows: Vec<Vec<f64>> = (0..n_det).map(|d| s.row(d).iter().map(|&v| v as f64).collect()).collect();
        let derivs = rows.iter().map(|r| time_derivative(r, fs)).collect();
        Backprojector {
            rows,
            derivs,
            detectors: s.geometry().positions().iter().map(|p| [p.x, p.y]).collect(),
            fs,
            c: s.c_mps(),
            t0: s.t0_s(),
            ring_r,
            norm: ds / cfg.element_shape.solid_angle(),
        }
    }

    fn value(&self, pixel: [f64; 2]) -> f64 {
        let ns = self.rows.first().map_or(0, Vec::len);
        let mut acc = 0.0;
        for (d, det) in self.detectors.iter().enumerate() {
            let dist = (pixel[0] - det[0]).hypot(pixel[1] - det[1]);
            let t = dist / self.c;
            let f = (t - self.t0) * self.fs;
            if !(f >= 0.0 && f <= (ns - 1) as f64) {
                continue;
            }
            let (p, dp) = if ns == 1 {
                (self.rows[d][0], self.derivs[d][0])
            } else {
                let k = (f.floor() as usize).min(ns - 2);
                let a = f - k as f64;
                (
                    (1.0 - a) * self.rows[d][k] + a * self.rows[d][k + 1],
                    (1.0 - a) * self.derivs[d][k] + a * self.derivs[d][k + 1],
                )
            };
            let b = 2.0 * p - 2.0 * t * dp;
            acc += b * obliquity(*det, pixel, self.ring_r) / (dist * dist);
        }
        acc * self.norm
    }
}

/// Back-projected values at arbitrary world points, without clipping.
pub fn ubp_at_points(s: &Sinogram, cfg: &UbpConfig, points: &[Point]) -> Vec<f64> {
    let bp = Backprojector::new(s, cfg);
    points.iter().map(|p| bp.value([p.x, p.y])).collect()
}

pub fn ubp_reconstruct(s: &Sinogram, cfg: &UbpConfig, grid: &ImageGrid) -> Result<Image> {
    let bp = Backprojector::new(s, cfg);
    let mut out = vec![0.0; grid.len()];
    par::for_each_chunk_mut(&mut out, grid.nx, |j, row_out| {
        for (i, v) in row_out.iter_mut().enumerate() {
            let px = grid.pixel_center(i, j);
            let value = bp.value([px.x, px.y]);
            *v = if cfg.clip_negative { value.max(0.0) } else { value };
        }
    });
    Image::from_f64(*grid, &out)
}
