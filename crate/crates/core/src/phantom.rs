//! Synthetic phantoms and simulated acquisition.
//!
//! Shapes are rasterized with 4×4 supersampling: a pixel's value is the shape
//! amplitude times the fraction of its sub-samples covered. Overlapping shapes
//! combine by maximum, so values stay in `[0, 1]`.
//!
//! Wire-like shapes (delta, heart, star, point lists) are polylines stroked at
//! a fixed width, two pixels unless given. Curves, in shape-local units scaled
//! by `size_m`:
//!
//! * delta: equilateral triangle with circumradius 1, apex up;
//! * heart: `x = 16 sin³s / 17`, `y = (13 cos s − 5 cos 2s − 2 cos 3s − cos 4s) / 17`;
//! * star: five-pointed star, outer radius 1, inner radius 0.4, tip up.
//!
//! Vessels are a seeded random-walk tree: each branch steps forward with a
//! perturbed heading and a tapering width, and occasionally spawns a thinner
//! child branch. Branches stop when they leave the bounding square or become
//! thinner than `min_width_m`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Image, Sinogram};
use crate::error::{Error, Result};
use crate::forward::{forward_project, ForwardConfig};
use crate::geometry::{ImageGrid, Point, RingGeometry, RoiCircle};
use crate::metrics::{Rect, RegionSpec};

const SUPERSAMPLE: usize = 4;

/// Parameters of the branching-vessel generator.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct VesselParams {
    pub seed: u64,
    pub center: Point,
    /// Branches are confined to the square `center ± half_extent_m`.
    pub half_extent_m: f64,
    pub root_width_m: f64,
    pub min_width_m: f64,
    pub step_m: f64,
    /// Width multiplier per step.
    pub taper: f64,
    /// Standard deviation of the heading change per step (radians).
    pub wander_rad: f64,
    pub branch_prob: f64,
    pub max_segments: usize,
    /// Number of trunks leaving the center.
    pub n_roots: usize,
    pub amplitude: f64,
}

impl Default for VesselParams {
    fn default() -> Self {
        VesselParams {
            seed: 0,
            center: Point::ORIGIN,
            half_extent_m: 5.0e-3,
            root_width_m: 0.4e-3,
            min_width_m: 0.1e-3,
            step_m: 0.2e-3,
            taper: 0.985,
            wander_rad: 0.15,
            branch_prob: 0.08,
            max_segments: 2000,
            n_roots: 3,
            amplitude: 1.0,
        }
    }
}

/// One phantom component.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields))]
pub enum Shape {
    Disk { center: Point, radius_m: f64, amplitude: f64 },
    Vessels(VesselParams),
    Delta { center: Point, size_m: f64, width_m: Option<f64>, amplitude: f64 },
    Heart { center: Point, size_m: f64, width_m: Option<f64>, amplitude: f64 },
    Star { center: Point, size_m: f64, width_m: Option<f64>, amplitude: f64 },
    Wire { points: Vec<Point>, closed: bool, width_m: Option<f64>, amplitude: f64 },
}

/// A phantom: shapes plus optional default metric regions.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PhantomSpec {
    pub shapes: Vec<Shape>,
    pub regions: Option<RegionSpec>,
}

impl PhantomSpec {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Single disk.
    pub fn disk(center: Point, radius_m: f64) -> Self {
        PhantomSpec { shapes: vec![Shape::Disk { center, radius_m, amplitude: 1.0 }], regions: None }
    }

    /// Branching vessel tree filling the central `extent` fraction of `grid`.
    pub fn vessel(grid: &ImageGrid, seed: u64) -> Self {
        let half = 0.4 * grid.half_width_x().min(grid.half_width_y());
        let params = VesselParams {
            seed,
            center: grid.center,
            half_extent_m: half,
            root_width_m: 6.0 * grid.pixel_m,
            min_width_m: 1.5 * grid.pixel_m,
            step_m: 2.0 * grid.pixel_m,
            ..VesselParams::default()
        };
        PhantomSpec { shapes: vec![Shape::Vessels(params)], regions: None }
    }

    /// Wire star centered on the grid, spanning 60% of the half-width, with
    /// a signal region on the upper tip stroke and a background region in an
    /// empty corner.
    pub fn star(grid: &ImageGrid) -> Self {
        let size = 0.6 * grid.half_width_x().min(grid.half_width_y());
        let shape = Shape::Star { center: grid.center, size_m: size, width_m: None, amplitude: 1.0 };
        PhantomSpec { shapes: vec![shape], regions: Some(star_regions(grid, size)) }
    }

    pub fn heart(grid: &ImageGrid) -> Self {
        let size = 0.6 * grid.half_width_x().min(grid.half_width_y());
        let shape = Shape::Heart { center: grid.center, size_m: size, width_m: None, amplitude: 1.0 };
        PhantomSpec { shapes: vec![shape], regions: None }
    }

    pub fn delta(grid: &ImageGrid) -> Self {
        let size = 0.6 * grid.half_width_x().min(grid.half_width_y());
        let shape = Shape::Delta { center: grid.center, size_m: size, width_m: None, amplitude: 1.0 };
        PhantomSpec { shapes: vec![shape], regions: None }
    }
}

/// Signal: a small box around the upper tip of the star (the stroke runs
/// through it). Background: a box in the lower-left corner, clear of the
/// star and of the ROI edge.
fn star_regions(grid: &ImageGrid, size_m: f64) -> RegionSpec {
    let tip = Point::new(grid.center.x, grid.center.y + 0.92 * size_m);
    let (ti, tj) = grid.world_to_pixel(tip);
    let side = (grid.nx.min(grid.ny) / 32).max(2);
    let sx = (ti.round() as isize - side as isize / 2).max(0) as usize;
    let sy = (tj.round() as isize - side as isize / 2).max(0) as usize;
    let bside = (grid.nx.min(grid.ny) / 8).max(2);
    let margin = grid.nx.min(grid.ny) / 16;
    RegionSpec { signal: Rect::new(sx, sy, side, side), background: Rect::new(margin, margin, bside, bside) }
}

/// Rasterization primitive: a capsule whose radius varies linearly from `ra`
/// at `a` to `rb` at `b`. A disk is a capsule with `a == b`.
#[derive(Debug, Clone, Copy)]
struct Capsule {
    a: Point,
    b: Point,
    ra: f64,
    rb: f64,
}

impl Capsule {
    fn contains(&self, p: Point) -> bool {
        let (dx, dy) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let len2 = dx * dx + dy * dy;
        let s = if len2 > 0.0 { (((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let q = Point::new(self.a.x + s * dx, self.a.y + s * dy);
        let r = self.ra + s * (self.rb - self.ra);
        let (ex, ey) = (p.x - q.x, p.y - q.y);
        ex * ex + ey * ey <= r * r
    }

    fn bounds(&self) -> (Point, Point) {
        let r = self.ra.max(self.rb);
        (
            Point::new(self.a.x.min(self.b.x) - r, self.a.y.min(self.b.y) - r),
            Point::new(self.a.x.max(self.b.x) + r, self.a.y.max(self.b.y) + r),
        )
    }
}

fn polyline(points: &[Point], closed: bool, width: f64, out: &mut Vec<Capsule>) {
    let r = 0.5 * width;
    for w in points.windows(2) {
        out.push(Capsule { a: w[0], b: w[1], ra: r, rb: r });
    }
    if closed && points.len() > 2 {
        out.push(Capsule { a: points[points.len() - 1], b: points[0], ra: r, rb: r });
    }
    if points.len() == 1 {
        out.push(Capsule { a: points[0], b: points[0], ra: r, rb: r });
    }
}

fn local(center: Point, size: f64, x: f64, y: f64) -> Point {
    Point::new(center.x + size * x, center.y + size * y)
}

fn delta_points(center: Point, size: f64) -> Vec<Point> {
    (0..3)
        .map(|k| {
            let a = PI / 2.0 + 2.0 * PI * k as f64 / 3.0;
            local(center, size, a.cos(), a.sin())
        })
        .collect()
}

fn heart_points(center: Point, size: f64, n: usize) -> Vec<Point> {
    (0..n)
        .map(|k| {
            let s = 2.0 * PI * k as f64 / n as f64;
            let x = 16.0 * s.sin().powi(3);
            let y = 13.0 * s.cos() - 5.0 * (2.0 * s).cos() - 2.0 * (3.0 * s).cos() - (4.0 * s).cos();
            local(center, size, x / 17.0, y / 17.0)
        })
        .collect()
}

fn star_points(center: Point, size: f64) -> Vec<Point> {
    (0..10)
        .map(|k| {
            let a = PI / 2.0 + PI * k as f64 / 5.0;
            let r = if k % 2 == 0 { 1.0 } else { 0.4 };
            local(center, size, r * a.cos(), r * a.sin())
        })
        .collect()
}

fn vessel_capsules(v: &VesselParams, out: &mut Vec<Capsule>) -> Result<()> {
    if !(v.half_extent_m > 0.0 && v.step_m > 0.0 && v.root_width_m > 0.0 && v.min_width_m > 0.0)
        || !(0.0..=1.0).contains(&v.branch_prob)
        || !(v.taper > 0.0 && v.taper <= 1.0)
    {
        return Err(Error::Phantom(format!("invalid vessel parameters: {v:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(v.seed);
    let wander = Normal::new(0.0, v.wander_rad.max(0.0)).map_err(|e| Error::Phantom(format!("{e}")))?;
    // (position, heading, width)
    let mut stack: Vec<(Point, f64, f64)> = Vec::new();
    let phase: f64 = rng.random::<f64>() * 2.0 * PI;
    for k in 0..v.n_roots {
        stack.push((v.center, phase + 2.0 * PI * k as f64 / v.n_roots as f64, v.root_width_m));
    }
    let inside = |p: Point| (p.x - v.center.x).abs() <= v.half_extent_m && (p.y - v.center.y).abs() <= v.half_extent_m;
    let mut segments = 0;
    while let Some((mut pos, mut heading, mut width)) = stack.pop() {
        while width >= v.min_width_m && segments < v.max_segments {
            heading += wander.sample(&mut rng);
            let next = Point::new(pos.x + v.step_m * heading.cos(), pos.y + v.step_m * heading.sin());
            let next_width = width * v.taper;
            // Keep the whole stroke inside the square.
            let margin = 0.5 * width;
            if !inside(Point::new(
                next.x + margin * (next.x - v.center.x).signum(),
                next.y + margin * (next.y - v.center.y).signum(),
            )) {
                break;
            }
            out.push(Capsule { a: pos, b: next, ra: 0.5 * width, rb: 0.5 * next_width });
            segments += 1;
            if rng.random::<f64>() < v.branch_prob {
                let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let angle = side * (0.35 + 0.5 * rng.random::<f64>());
                stack.push((next, heading + angle, next_width * 0.75));
                heading -= 0.3 * angle;
            }
            pos = next;
            width = next_width;
        }
    }
    Ok(())
}

fn stroke_width(width_m: Option<f64>, grid: &ImageGrid) -> f64 {
    width_m.unwrap_or(2.0 * grid.pixel_m)
}

fn check_amplitude(a: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::Phantom(format!("amplitude {a} outside [0, 1]")));
    }
    Ok(())
}

fn shape_capsules(shape: &Shape, grid: &ImageGrid) -> Result<(Vec<Capsule>, f64)> {
    let mut caps = Vec::new();
    let amp = match shape {
        Shape::Disk { center, radius_m, amplitude } => {
            if !(radius_m.is_finite() && *radius_m > 0.0) {
                return Err(Error::Phantom(format!("disk radius {radius_m} must be positive")));
            }
            caps.push(Capsule { a: *center, b: *center, ra: *radius_m, rb: *radius_m });
            *amplitude
        }
        Shape::Vessels(v) => {
            vessel_capsules(v, &mut caps)?;
            v.amplitude
        }
        Shape::Delta { center, size_m, width_m, amplitude } => {
            polyline(&delta_points(*center, *size_m), true, stroke_width(*width_m, grid), &mut caps);
            *amplitude
        }
        Shape::Heart { center, size_m, width_m, amplitude } => {
            polyline(&heart_points(*center, *size_m, 256), true, stroke_width(*width_m, grid), &mut caps);
            *amplitude
        }
        Shape::Star { center, size_m, width_m, amplitude } => {
            polyline(&star_points(*center, *size_m), true, stroke_width(*width_m, grid), &mut caps);
            *amplitude
        }
        Shape::Wire { points, closed, width_m, amplitude } => {
            if points.is_empty() {
                return Err(Error::Phantom("wire needs at least one point".into()));
            }
            polyline(points, *closed, stroke_width(*width_m, grid), &mut caps);
            *amplitude
        }
    };
    check_amplitude(amp)?;
    Ok((caps, amp))
}

/// Rasterizes `spec` on `grid`. Every shape must lie inside both the grid
/// and the ROI circle that circumscribes it.
pub fn render_phantom(spec: &PhantomSpec, grid: &ImageGrid) -> Result<Image> {
    let roi = RoiCircle::circumscribing(grid);
    let (hx, hy) = (grid.half_width_x(), grid.half_width_y());
    let mut out = vec![0.0f32; grid.len()];
    let mut mask = vec![0u16; grid.len()];
    for (k, shape) in spec.shapes.iter().enumerate() {
        let (caps, amp) = shape_capsules(shape, grid)?;
        mask.iter_mut().for_each(|m| *m = 0);
        for c in &caps {
            let (lo, hi) = c.bounds();
            let outside_grid = lo.x < grid.center.x - hx
                || hi.x > grid.center.x + hx
                || lo.y < grid.center.y - hy
                || hi.y > grid.center.y + hy;
            let r = c.ra.max(c.rb);
            let outside_roi =
                c.a.distance(roi.center) + r > roi.radius_m || c.b.distance(roi.center) + r > roi.radius_m;
            if outside_grid || outside_roi {
                return Err(Error::Phantom(format!("shape {k} extends outside the ROI")));
            }
            let (i0, j0) = grid.world_to_pixel(lo);
            let (i1, j1) = grid.world_to_pixel(hi);
            let clampi = |v: f64, n: usize| (v.round().max(0.0) as usize).min(n - 1);
            for j in clampi(j0, grid.ny)..=clampi(j1, grid.ny) {
                for i in clampi(i0, grid.nx)..=clampi(i1, grid.nx) {
                    let idx = j * grid.nx + i;
                    let mut bits = mask[idx];
                    if bits == u16::MAX {
                        continue;
                    }
                    for sj in 0..SUPERSAMPLE {
                        for si in 0..SUPERSAMPLE {
                            let bit = 1u16 << (sj * SUPERSAMPLE + si);
                            if bits & bit != 0 {
                                continue;
                            }
                            let fi = i as f64 + (si as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                            let fj = j as f64 + (sj as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                            if c.contains(grid.pixel_to_world(fi, fj)) {
                                bits |= bit;
                            }
                        }
                    }
                    mask[idx] = bits;
                }
            }
        }
        for (o, &m) in out.iter_mut().zip(&mask) {
            if m != 0 {
                let v = (amp * m.count_ones() as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64) as f32;
                *o = o.max(v);
            }
        }
    }
    Image::new(*grid, out)
}

/// White Gaussian noise added per detector channel at a fixed SNR
/// (`10·log10(signal power / noise power)` of that channel).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

/// Simulated measurement plus the noise settings that produced it.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub sinogram: Sinogram,
    pub noise: Option<NoiseSpec>,
}

/// Forward-projects `phantom` and optionally adds channel noise. Without
/// noise the result is exactly [`forward_project`].
pub fn simulate_acquisition(phantom: &Image, fwd: &ForwardConfig, noise: Option<NoiseSpec>) -> Result<Acquisition> {
    let clean = forward_project(phantom, fwd)?;
    add_noise(clean, noise)
}

/// Like [`simulate_acquisition`] but generates the data from `spec` rendered
/// on a grid `factor` times finer, with `M` scaled to match, so the data do
/// not come from the exact discrete model used for reconstruction.
pub fn simulate_supersampled(
    spec: &PhantomSpec,
    fwd: &ForwardConfig,
    factor: usize,
    noise: Option<NoiseSpec>,
) -> Result<Acquisition> {
    if factor == 0 {
        return Err(Error::Config("supersampling factor must be positive".into()));
    }
    let g = fwd.grid;
    let fine = ImageGrid::with_center(g.nx * factor, g.ny * factor, g.pixel_m / factor as f64, g.center)?;
    let phantom = render_phantom(spec, &fine)?;
    let mut cfg = fwd.clone();
    cfg.grid = fine;
    cfg.m_arc_points = (fwd.m_arc_points - 1) * factor + 1;
    simulate_acquisition(&phantom, &cfg, noise)
}

fn add_noise(clean: Sinogram, noise: Option<NoiseSpec>) -> Result<Acquisition> {
    let Some(spec) = noise else {
        return Ok(Acquisition { sinogram: clean, noise: None });
    };
    if !spec.snr_db.is_finite() {
        return Err(Error::Config(format!("noise SNR {} dB is not finite", spec.snr_db)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ns = clean.n_samples();
    let mut data = clean.data().to_vec();
    for row in data.chunks_mut(ns) {
        let power = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / ns as f64;
        let sigma = (power / 10f64.powf(spec.snr_db / 10.0)).sqrt();
        if sigma == 0.0 {
            continue;
        }
        let dist = Normal::new(0.0, sigma).map_err(|e| Error::Numerical(format!("{e}")))?;
        for v in row.iter_mut() {
            *v = (*v as f64 + dist.sample(&mut rng)) as f32;
        }
    }
    Ok(Acquisition { sinogram: clean.with_data(data)?, noise: Some(spec) })
}

/// Acquisition protocol of the in-silico study: 40 mm ring with 256
/// elements, 20 MHz sampling, 1500 m/s, 1024 samples, 512×512 grid at 0.05 mm.
pub fn default_protocol() -> Result<ForwardConfig> {
    let ring = RingGeometry::uniform(0.04, 256)?;
    let grid = ImageGrid::square(512, 0.05e-3)?;
    ForwardConfig::new(ring, grid, 20e6, 1500.0, 1024)
}
