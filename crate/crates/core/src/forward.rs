//! Discrete photoacoustic forward model.
//!
//! The pressure seen by a detector at time `t` is modelled as the time
//! derivative of an arc integral of the initial heat distribution `H`:
//!
//! ```text
//! I(t) = ∫ H(r') / |r - r'| dL'(t)        (arc of radius c·t around the detector)
//! p(t) ≈ [I(t + Δt) - I(t - Δt)] / (2Δt)
//! ```
//!
//! The arc is sampled by `M` points spanning the opening angle
//! `α = 2·asin(R_roi / R_ring)` and facing the ROI center. Segment lengths are
//! `α·c·t/(M-1)` in the interior and zero past the ends, so with
//! `|r - r'| = c·t` the quadrature reduces to `α/(M-1)` times a trapezoid sum
//! of `H` over the arc points. Off-grid samples of `H` use bilinear
//! interpolation with zero padding. Physical constants are dropped.
//!
//! [`ForwardOperator`] applies the map matrix-free, applies its exact transpose,
//! or assembles it as a sparse matrix. All three walk the same taps.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::data::{Image, Sinogram};
use crate::error::{Error, Result};
use crate::geometry::{ImageGrid, Point, RingGeometry, RoiCircle};
use crate::par;

/// Opening angle `2·asin(R_roi/R_ring)` of the sector that covers the ROI as
/// seen from a ring element.
pub fn opening_angle(roi: &RoiCircle, geometry: &RingGeometry) -> Result<f64> {
    roi.validate(geometry)?;
    Ok(2.0 * (roi.radius_m / geometry.radius_m()).asin())
}

/// Trapezoid weights `α/(M-1)·{½, 1, …, 1, ½}` for `m` arc points.
pub fn quadrature_weights(alpha: f64, m: usize) -> Vec<f64> {
    let step = alpha / (m - 1) as f64;
    (0..m).map(|j| if j == 0 || j == m - 1 { 0.5 * step } else { step }).collect()
}

/// Acquisition and discretization parameters of the forward model.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardConfig {
    pub geometry: RingGeometry,
    pub grid: ImageGrid,
    pub roi: RoiCircle,
    pub fs_hz: f64,
    pub c_mps: f64,
    pub n_samples: usize,
    pub t0_s: f64,
    /// Points per arc (`M`).
    pub m_arc_points: usize,
    /// Half-step of the centered time derivative (`Δt`).
    pub dt_deriv_s: f64,
}

impl ForwardConfig {
    /// Config with the default ROI (circle circumscribing the grid),
    /// `Δt = 0.1/fs` and `M` tied to the pixel pitch.
    pub fn new(geometry: RingGeometry, grid: ImageGrid, fs_hz: f64, c_mps: f64, n_samples: usize) -> Result<Self> {
        let roi = RoiCircle::circumscribing(&grid);
        let mut cfg = ForwardConfig {
            geometry,
            grid,
            roi,
            fs_hz,
            c_mps,
            n_samples,
            t0_s: 0.0,
            m_arc_points: 2,
            dt_deriv_s: 0.1 / fs_hz,
        };
        cfg.m_arc_points = cfg.default_m()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config matching an existing sinogram's acquisition.
    pub fn for_sinogram(s: &Sinogram, grid: ImageGrid) -> Result<Self> {
        let mut cfg = Self::new(s.geometry().clone(), grid, s.fs_hz(), s.c_mps(), s.n_samples())?;
        cfg.t0_s = s.t0_s();
        cfg.m_arc_points = cfg.default_m()?;
        Ok(cfg)
    }

    /// Same acquisition restricted to another detector ring, keeping `M` and `Δt`.
    pub fn with_geometry(&self, geometry: RingGeometry) -> Result<Self> {
        let cfg = ForwardConfig { geometry, ..self.clone() };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces the ROI and recomputes the default `M`.
    pub fn with_roi(mut self, roi: RoiCircle) -> Result<Self> {
        self.roi = roi;
        self.m_arc_points = self.default_m()?;
        self.validate()?;
        Ok(self)
    }

    pub fn with_m(mut self, m: usize) -> Result<Self> {
        self.m_arc_points = m;
        self.validate()?;
        Ok(self)
    }

    /// Smallest `M` whose arc spacing at the largest radius is at most one pixel.
    pub fn default_m(&self) -> Result<usize> {
        let alpha = self.alpha()?;
        let r_max = self.c_mps * self.t_max();
        Ok((alpha * r_max / self.grid.pixel_m).ceil().max(1.0) as usize + 1)
    }

    /// Largest time at which an arc is evaluated.
    pub fn t_max(&self) -> f64 {
        self.t0_s + (self.n_samples.max(1) - 1) as f64 / self.fs_hz + self.dt_deriv_s
    }

    pub fn alpha(&self) -> Result<f64> {
        opening_angle(&self.roi, &self.geometry)
    }

    pub fn n_detectors(&self) -> usize {
        self.geometry.n_elements()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0_s + i as f64 / self.fs_hz
    }

    pub fn validate(&self) -> Result<()> {
        self.roi.validate(&self.geometry)?;
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            return Err(Error::Config(format!("fs must be > 0, got {}", self.fs_hz)));
        }
        if !(self.c_mps.is_finite() && self.c_mps > 0.0) {
            return Err(Error::Config(format!("speed of sound must be > 0, got {}", self.c_mps)));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        if self.m_arc_points < 2 {
            return Err(Error::Config(format!("need at least 2 arc points, got {}", self.m_arc_points)));
        }
        if !(self.dt_deriv_s > 0.0 && self.dt_deriv_s < 1.0 / self.fs_hz) {
            return Err(Error::Config(format!(
                "derivative step {} s must lie in (0, 1/fs = {} s)",
                self.dt_deriv_s,
                1.0 / self.fs_hz
            )));
        }
        Ok(())
    }

    /// Direction angle of arc point `j` for detector `d` (before adding the
    /// radius): the arc is centered on the direction from the detector to the
    /// ROI center.
    pub fn arc_angle(&self, d: usize, j: usize, alpha: f64, jitter: f64) -> f64 {
        let p0 = self.geometry.position(d);
        let facing = (self.roi.center.y - p0.y).atan2(self.roi.center.x - p0.x);
        facing - 0.5 * alpha + j as f64 * alpha / (self.m_arc_points - 1) as f64 + jitter
    }

    /// The `M` arc points for detector `d` at time `t`, rotated by `jitter`.
    pub fn arc_points(&self, d: usize, t: f64, jitter: f64) -> Result<Vec<Point>> {
        let alpha = self.alpha()?;
        let p0 = self.geometry.position(d);
        let radius = self.c_mps * t;
        Ok((0..self.m_arc_points)
            .map(|j| {
                let (s, c) = self.arc_angle(d, j, alpha, jitter).sin_cos();
                Point::new(p0.x + radius * c, p0.y + radius * s)
            })
            .collect())
    }

    /// Maximum jitter magnitude `α/(2M-2)`, half the arc spacing.
    pub fn max_jitter(&self) -> Result<f64> {
        Ok(self.alpha()? / (2 * self.m_arc_points - 2) as f64)
    }
}

/// Arc integral `I(t)` of `image` for detector `d`, evaluated with the same
/// quadrature and interpolation as [`ForwardOperator`].
pub fn line_integral(image: &Image, d: usize, t: f64, cfg: &ForwardConfig) -> Result<f64> {
    check_grid(image.grid(), &cfg.grid)?;
    let op = ForwardOperator::new(cfg)?;
    let h = image.to_f64();
    Ok(op.integral(&h, d, t, 0.0))
}

/// Simulated RF data for `image`.
pub fn forward_project(image: &Image, cfg: &ForwardConfig) -> Result<Sinogram> {
    check_grid(image.grid(), &cfg.grid)?;
    let op = ForwardOperator::new(cfg)?;
    let p = op.apply(&image.to_f64());
    Sinogram::new(
        cfg.geometry.clone(),
        cfg.n_samples,
        cfg.fs_hz,
        cfg.c_mps,
        cfg.t0_s,
        p.iter().map(|&v| v as f32).collect(),
    )
}

/// Transpose of [`forward_project`].
pub fn adjoint_project(s: &Sinogram, cfg: &ForwardConfig) -> Result<Image> {
    let op = ForwardOperator::new(cfg)?;
    op.check_sinogram(s)?;
    Image::from_f64(cfg.grid, &op.apply_adjoint(&s.to_f64()))
}

fn check_grid(actual: &ImageGrid, expected: &ImageGrid) -> Result<()> {
    if actual != expected {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} grid @ {} m", expected.nx, expected.ny, expected.pixel_m),
            actual: format!("{}x{} grid @ {} m", actual.nx, actual.ny, actual.pixel_m),
        });
    }
    Ok(())
}

/// Linear map from a raster image to RF samples, with its exact adjoint.
///
/// Buffers are `f64`, image in raster order and data detector-major
/// (`d * n_samples + i`).
#[derive(Debug, Clone)]
pub struct ForwardOperator {
    cfg: ForwardConfig,
    alpha: f64,
    /// Quadrature weight per arc point.
    weights: Vec<f64>,
    /// Unit directions per detector and arc point, `[d * M + j]`.
    dirs: Vec<[f64; 2]>,
    /// Detector positions in pixel coordinates.
    origins_px: Vec<[f64; 2]>,
    /// Distance from each detector to the grid center, in pixels.
    center_dist_px: Vec<f64>,
    /// Grid half-diagonal plus one pixel of bilinear reach, in pixels.
    reach_px: f64,
}

const ADJOINT_CHUNK: usize = 8;

impl ForwardOperator {
    pub fn new(cfg: &ForwardConfig) -> Result<Self> {
        cfg.validate()?;
        let alpha = cfg.alpha()?;
        let m = cfg.m_arc_points;
        let grid = &cfg.grid;
        let n_det = cfg.n_detectors();
        let mut dirs = Vec::with_capacity(n_det * m);
        let mut origins_px = Vec::with_capacity(n_det);
        let mut center_dist_px = Vec::with_capacity(n_det);
        for d in 0..n_det {
            for j in 0..m {
                let (s, c) = cfg.arc_angle(d, j, alpha, 0.0).sin_cos();
                dirs.push([c, s]);
            }
            let p0 = cfg.geometry.position(d);
            let (fi, fj) = grid.world_to_pixel(p0);
            origins_px.push([fi, fj]);
            center_dist_px.push(p0.distance(grid.center) / grid.pixel_m);
        }
        Ok(ForwardOperator {
            cfg: cfg.clone(),
            alpha,
            weights: quadrature_weights(alpha, m),
            dirs,
            origins_px,
            center_dist_px,
            reach_px: grid.half_diagonal() / grid.pixel_m + 1.5,
        })
    }

    pub fn config(&self) -> &ForwardConfig {
        &self.cfg
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_rows(&self) -> usize {
        self.cfg.n_detectors() * self.cfg.n_samples
    }

    pub fn n_cols(&self) -> usize {
        self.cfg.grid.len()
    }

    fn check_sinogram(&self, s: &Sinogram) -> Result<()> {
        if s.n_detectors() != self.cfg.n_detectors() || s.n_samples() != self.cfg.n_samples {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", self.cfg.n_detectors(), self.cfg.n_samples),
                actual: format!("{}x{}", s.n_detectors(), s.n_samples()),
            });
        }
        Ok(())
    }

    /// Calls `f(pixel, weight)` for every bilinear tap of the arc of detector
    /// `d` at time `t`; `weight` includes the quadrature weight.
    #[inline]
    fn for_each_tap(&self, d: usize, t: f64, jitter: f64, mut f: impl FnMut(usize, f64)) {
        if t < 0.0 {
            return;
        }
        let grid = &self.cfg.grid;
        let r_px = self.cfg.c_mps * t / grid.pixel_m;
        let dc = self.center_dist_px[d];
        if r_px + self.reach_px < dc || r_px > dc + self.reach_px {
            return;
        }
        let m = self.cfg.m_arc_points;
        let [ox, oy] = self.origins_px[d];
        let nx = grid.nx as isize;
        let ny = grid.ny as isize;
        let (fx, fy) = (grid.nx as f64, grid.ny as f64);
        let mut tap = |j: usize, ux: f64, uy: f64| {
            let fi = ox + r_px * ux;
            let fj = oy + r_px * uy;
            if !(fi > -1.0 && fj > -1.0 && fi < fx && fj < fy) {
                return;
            }
            let i0f = fi.floor();
            let j0f = fj.floor();
            let ax = fi - i0f;
            let ay = fj - j0f;
            let i0 = i0f as isize;
            let j0 = j0f as isize;
            let w = self.weights[j];
            for (dj, wy) in [(0isize, 1.0 - ay), (1, ay)] {
                let jj = j0 + dj;
                if jj < 0 || jj >= ny || wy == 0.0 {
                    continue;
                }
                for (di, wx) in [(0isize, 1.0 - ax), (1, ax)] {
                    let ii = i0 + di;
                    if ii < 0 || ii >= nx || wx == 0.0 {
                        continue;
                    }
                    f(jj as usize * grid.nx + ii as usize, w * wx * wy);
                }
            }
        };
        if jitter == 0.0 {
            for (j, u) in self.dirs[d * m..(d + 1) * m].iter().enumerate() {
                tap(j, u[0], u[1]);
            }
        } else {
            for j in 0..m {
                let (s, c) = self.cfg.arc_angle(d, j, self.alpha, jitter).sin_cos();
                tap(j, c, s);
            }
        }
    }

    /// Arc integral `I(t)` for detector `d`.
    pub fn integral(&self, h: &[f64], d: usize, t: f64, jitter: f64) -> f64 {
        let mut acc = 0.0;
        self.for_each_tap(d, t, jitter, |k, w| acc += w * h[k]);
        acc
    }

    /// Predicted sample `i` of detector `d`.
    pub fn sample(&self, h: &[f64], d: usize, i: usize) -> f64 {
        let t = self.cfg.time(i);
        let dt = self.cfg.dt_deriv_s;
        (self.integral(h, d, t + dt, 0.0) - self.integral(h, d, t - dt, 0.0)) / (2.0 * dt)
    }

    /// `A·h`.
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        assert_eq!(h.len(), self.n_cols(), "image length");
        let ns = self.cfg.n_samples;
        let mut out = vec![0.0; self.n_rows()];
        par::for_each_chunk_mut(&mut out, ns, |d, row| {
            for (i, v) in row.iter_mut().enumerate() {
                *v = self.sample(h, d, i);
            }
        });
        out
    }

    /// `Aᵀ·p`.
    pub fn apply_adjoint(&self, p: &[f64]) -> Vec<f64> {
        assert_eq!(p.len(), self.n_rows(), "data length");
        let n_det = self.cfg.n_detectors();
        let ns = self.cfg.n_samples;
        let dt = self.cfg.dt_deriv_s;
        let scale = 1.0 / (2.0 * dt);
        let n_chunks = n_det.div_ceil(ADJOINT_CHUNK);
        let partials = par::map_range(n_chunks, |c| {
            let mut buf = vec![0.0; self.n_cols()];
            let hi = ((c + 1) * ADJOINT_CHUNK).min(n_det);
            for d in c * ADJOINT_CHUNK..hi {
                for i in 0..ns {
                    let v = p[d * ns + i] * scale;
                    if v == 0.0 {
                        continue;
                    }
                    let t = self.cfg.time(i);
                    self.for_each_tap(d, t + dt, 0.0, |k, w| buf[k] += w * v);
                    self.for_each_tap(d, t - dt, 0.0, |k, w| buf[k] -= w * v);
                }
            }
            buf
        });
        let mut out = vec![0.0; self.n_cols()];
        for buf in partials {
            out.iter_mut().zip(&buf).for_each(|(o, b)| *o += b);
        }
        out
    }

    /// Explicit sparse `A`. Fails if the estimated storage exceeds `max_bytes`.
    pub fn assemble(&self, max_bytes: usize) -> Result<SparseMatrix> {
        let dt = self.cfg.dt_deriv_s;
        let scale = 1.0 / (2.0 * dt);
        self.assemble_with(max_bytes, |d, t, row| {
            self.for_each_tap(d, t + dt, 0.0, |k, w| row.push((k, w * scale)));
            self.for_each_tap(d, t - dt, 0.0, |k, w| row.push((k, -w * scale)));
        })
    }

    /// Sparse matrix of the arc integrals `I(t_i + offset)` alone, before the
    /// finite difference is taken.
    pub fn assemble_integrals(&self, offset_s: f64, max_bytes: usize) -> Result<SparseMatrix> {
        self.assemble_with(max_bytes, |d, t, row| {
            self.for_each_tap(d, t + offset_s, 0.0, |k, w| row.push((k, w)));
        })
    }

    fn assemble_with(
        &self,
        max_bytes: usize,
        fill: impl Fn(usize, f64, &mut Vec<(usize, f64)>),
    ) -> Result<SparseMatrix> {
        let n_det = self.cfg.n_detectors();
        let ns = self.cfg.n_samples;
        // Upper bound on stored entries: every arc point hits four pixels on both arcs.
        let mut bound = 0usize;
        for d in 0..n_det {
            for i in 0..ns {
                let mut c = 0usize;
                self.for_each_tap(d, self.cfg.time(i) + self.cfg.dt_deriv_s, 0.0, |_, _| c += 1);
                bound += 2 * c;
            }
        }
        let needed = bound * (core::mem::size_of::<f64>() + core::mem::size_of::<usize>())
            + (self.n_rows() + 1) * core::mem::size_of::<usize>();
        if needed > max_bytes {
            return Err(Error::MemoryBudget { needed, limit: max_bytes });
        }
        let mut row_ptr = Vec::with_capacity(self.n_rows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut row = Vec::new();
        for d in 0..n_det {
            for i in 0..ns {
                row.clear();
                fill(d, self.cfg.time(i), &mut row);
                row.sort_by_key(|e| e.0);
                let mut k = 0;
                while k < row.len() {
                    let col = row[k].0;
                    let mut v = 0.0;
                    while k < row.len() && row[k].0 == col {
                        v += row[k].1;
                        k += 1;
                    }
                    col_idx.push(col);
                    values.push(v);
                }
                row_ptr.push(col_idx.len());
            }
        }
        Ok(SparseMatrix { n_rows: self.n_rows(), n_cols: self.n_cols(), row_ptr, col_idx, values })
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum()
            })
            .collect()
    }

    pub fn matvec_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n_rows);
        let mut out = vec![0.0; self.n_cols];
        for (r, &yr) in y.iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, v) in cols.iter().zip(vals) {
                out[c] += v * yr;
            }
        }
        out
    }
}

/// Default storage budget for [`assemble_matrix`]: 2 GiB.
pub const DEFAULT_MATRIX_BUDGET: usize = 2 << 30;

/// Explicit sparse measurement matrix for `cfg`.
pub fn assemble_matrix(cfg: &ForwardConfig, max_bytes: usize) -> Result<SparseMatrix> {
    ForwardOperator::new(cfg)?.assemble(max_bytes)
}

/// Earliest time at which any point of the ROI can reach a detector.
pub fn first_arrival(cfg: &ForwardConfig) -> f64 {
    (cfg.geometry.radius_m() - cfg.roi.radius_m) / cfg.c_mps
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(n: usize, n_det: usize, ns: usize) -> ForwardConfig {
        // 40 mm ring; grid pitch chosen so the grid spans 25.6 mm.
        let grid = ImageGrid::square(n, 25.6e-3 / n as f64).unwrap();
        let ring = RingGeometry::uniform(0.04, n_det).unwrap();
        let mut cfg = ForwardConfig::new(ring, grid, 20e6, 1500.0, ns).unwrap();
        // Sample window around the ROI so a few samples suffice.
        cfg.t0_s = 14e-6;
        cfg.fs_hz = ns as f64 / 28e-6;
        cfg.dt_deriv_s = 0.1 / cfg.fs_hz;
        cfg.m_arc_points = cfg.default_m().unwrap();
        cfg
    }

    #[test]
    fn opening_angle_values() {
        let ring = RingGeometry::uniform(0.04, 16).unwrap();
        let a = opening_angle(&RoiCircle::new(0.0125), &ring).unwrap();
        assert!((a - 0.635_647).abs() < 1e-6, "{a}");
        let a = opening_angle(&RoiCircle::new(0.02), &ring).unwrap();
        assert!((a - PI / 3.0).abs() < 1e-12);
        let a = opening_angle(&RoiCircle::new(1e-9), &ring).unwrap();
        assert!(a > 0.0 && a < 1e-7);
        assert!(opening_angle(&RoiCircle::new(0.04), &ring).is_err());
    }

    #[test]
    fn opening_angle_matches_tangent_construction() {
        // The tangent from a point at distance R to a circle of radius r
        // touches it where the radius is perpendicular: half-angle = asin(r/R).
        // Brute force: scan directions, find the widest one that still hits the circle.
        let (r_ring, r_roi) = (0.04, 0.0125);
        let ring = RingGeometry::uniform(r_ring, 16).unwrap();
        let expected = opening_angle(&RoiCircle::new(r_roi), &ring).unwrap();
        let mut widest: f64 = 0.0;
        let n = 200_000;
        for k in 0..n {
            let phi = k as f64 / n as f64 * 0.5 * PI;
            // Ray from (R, 0) heading at angle π - phi; closest approach to origin.
            let dist = r_ring * phi.sin();
            if dist <= r_roi {
                widest = widest.max(phi);
            }
        }
        assert!((2.0 * widest - expected).abs() < 1e-4);
    }

    #[test]
    fn arc_midpoint_hits_ring_center() {
        let grid = ImageGrid::square(64, 0.4e-3).unwrap();
        let ring = RingGeometry::uniform(0.04, 16).unwrap();
        let cfg = ForwardConfig::new(ring, grid, 20e6, 1500.0, 1024).unwrap().with_m(101).unwrap();
        let pts = cfg.arc_points(0, 0.04 / 1500.0, 0.0).unwrap();
        assert!(pts[50].norm() < 1e-15);
        let at_zero = cfg.arc_points(3, 0.0, 0.0).unwrap();
        assert!(at_zero.iter().all(|p| *p == cfg.geometry.position(3)));
    }

    #[test]
    fn arc_spacing_uniform() {
        let grid = ImageGrid::square(64, 0.4e-3).unwrap();
        let ring = RingGeometry::uniform(0.04, 16).unwrap();
        let cfg = ForwardConfig::new(ring, grid, 20e6, 1500.0, 1024).unwrap().with_m(33).unwrap();
        let alpha = cfg.alpha().unwrap();
        for j in 1..33 {
            let a = cfg.arc_angle(5, j, alpha, 0.01) - cfg.arc_angle(5, j - 1, alpha, 0.01);
            assert!((a - alpha / 32.0).abs() < 1e-12);
        }
    }

    #[test]
    fn default_m_tracks_pixel_pitch() {
        let grid = ImageGrid::square(512, 0.05e-3).unwrap();
        let ring = RingGeometry::uniform(0.04, 256).unwrap();
        let cfg = ForwardConfig::new(ring, grid, 20e6, 1500.0, 1024).unwrap();
        let alpha = cfg.alpha().unwrap();
        let spacing = alpha * 1500.0 * cfg.t_max() / (cfg.m_arc_points - 1) as f64;
        assert!(spacing <= 0.05e-3);
        let spacing_fewer = alpha * 1500.0 * cfg.t_max() / (cfg.m_arc_points - 2) as f64;
        assert!(spacing_fewer > 0.05e-3);
        assert!(cfg.dt_deriv_s < 1.0 / cfg.fs_hz);
    }

    #[test]
    fn config_validation() {
        let cfg = small_cfg(16, 8, 32);
        assert!(cfg.clone().with_m(1).is_err());
        let mut bad = cfg.clone();
        bad.dt_deriv_s = 2.0 / cfg.fs_hz;
        assert!(bad.validate().is_err());
        assert!(cfg.with_roi(RoiCircle::new(0.05)).is_err());
    }

    #[test]
    fn zero_image_gives_zero_everywhere() {
        let cfg = small_cfg(16, 8, 32);
        let op = ForwardOperator::new(&cfg).unwrap();
        assert!(op.apply(&vec![0.0; 256]).iter().all(|&v| v == 0.0));
        assert!(op.apply_adjoint(&vec![0.0; 256]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_dot_product_small() {
        let cfg = small_cfg(24, 8, 48);
        let op = ForwardOperator::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let x: Vec<f64> = (0..op.n_cols()).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = (0..op.n_rows()).map(|_| rng.random::<f64>() - 0.5).collect();
            let ax = op.apply(&x);
            let aty = op.apply_adjoint(&y);
            let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
            let nax = ax.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((lhs - rhs).abs() / (nax * ny) < 1e-10);
        }
    }

    #[test]
    fn assembled_matrix_matches_operator() {
        let cfg = small_cfg(32, 8, 64);
        let op = ForwardOperator::new(&cfg).unwrap();
        let a = op.assemble(DEFAULT_MATRIX_BUDGET).unwrap();
        assert_eq!((a.n_rows, a.n_cols), (8 * 64, 32 * 32));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let x: Vec<f64> = (0..op.n_cols()).map(|_| rng.random::<f64>()).collect();
            let direct = op.apply(&x);
            let via = a.matvec(&x);
            let num: f64 = direct.iter().zip(&via).map(|(a, b)| (a - b) * (a - b)).sum();
            let den: f64 = direct.iter().map(|a| a * a).sum();
            assert!((num / den).sqrt() < 1e-6);
        }
    }

    #[test]
    fn integral_matrix_is_nonnegative_and_causal() {
        let cfg = small_cfg(32, 8, 64);
        let op = ForwardOperator::new(&cfg).unwrap();
        let m = op.assemble_integrals(cfg.dt_deriv_s, DEFAULT_MATRIX_BUDGET).unwrap();
        assert!(m.values.iter().all(|&v| v >= 0.0));
        let a = op.assemble(DEFAULT_MATRIX_BUDGET).unwrap();
        assert!(a.values.iter().any(|&v| v < 0.0));
        // Rows before the first possible arrival are empty. Bilinear reach lets
        // the corner pixels respond up to half a pixel diagonal beyond the ROI.
        let reach = 0.5 * core::f64::consts::SQRT_2 * cfg.grid.pixel_m / cfg.c_mps;
        let t_first = first_arrival(&cfg) - reach - 2.0 * cfg.dt_deriv_s;
        let mut empty_rows = 0;
        for i in 0..cfg.n_samples {
            if cfg.time(i) < t_first {
                for d in 0..cfg.n_detectors() {
                    assert!(a.row(d * cfg.n_samples + i).0.is_empty());
                    empty_rows += 1;
                }
            }
        }
        assert!(empty_rows > 0);
    }

    #[test]
    fn assembly_respects_budget() {
        let cfg = small_cfg(32, 8, 64);
        let err = assemble_matrix(&cfg, 1024).unwrap_err();
        assert!(matches!(err, Error::MemoryBudget { .. }));
        assert!(alloc::string::ToString::to_string(&err).contains("matrix-free"));
    }

    #[test]
    fn one_hot_adjoint_support_is_near_the_arcs() {
        let cfg = small_cfg(32, 8, 64);
        let op = ForwardOperator::new(&cfg).unwrap();
        let (d, i) = (2, 30);
        let mut y = vec![0.0; op.n_rows()];
        y[d * cfg.n_samples + i] = 1.0;
        let img = op.apply_adjoint(&y);
        let p0 = cfg.geometry.position(d);
        let t = cfg.time(i);
        let r_lo = cfg.c_mps * (t - cfg.dt_deriv_s);
        let r_hi = cfg.c_mps * (t + cfg.dt_deriv_s);
        let reach = cfg.grid.pixel_m * core::f64::consts::SQRT_2;
        let mut nonzero = 0;
        for (k, &v) in img.iter().enumerate() {
            if v != 0.0 {
                nonzero += 1;
                let c = cfg.grid.pixel_center(k % 32, k / 32);
                let r = c.distance(p0);
                assert!(r > r_lo - reach && r < r_hi + reach, "pixel {k} at r={r}");
            }
        }
        assert!(nonzero > 0);
    }
}
