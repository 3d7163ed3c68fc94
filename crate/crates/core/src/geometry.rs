//! Ring layout, image raster and the world-coordinate conventions shared by
//! every operator.
//!
//! World coordinates are meters with the origin at the ring center. Pixel
//! `(i, j)` has its center at
//! `x = (i + 0.5 - nx/2) * pixel_m + cx`, `y = (j + 0.5 - ny/2) * pixel_m + cy`;
//! `i` runs along x (columns) and `j` along y (rows). Raster buffers are stored
//! row-major, index `j * nx + i`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::TAU;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};

/// A 2-D point in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Circular transducer array.
#[derive(Debug, Clone, PartialEq)]
pub struct RingGeometry {
    radius_m: f64,
    angles: Vec<f64>,
}

impl RingGeometry {
    /// `n_elements` elements evenly spaced, element `k` at angle `2πk/n`.
    pub fn uniform(radius_m: f64, n_elements: usize) -> Result<Self> {
        let angles = (0..n_elements).map(|k| TAU * k as f64 / n_elements as f64).collect();
        Self::from_angles(radius_m, angles)
    }

    pub fn from_angles(radius_m: f64, angles: Vec<f64>) -> Result<Self> {
        if !(radius_m.is_finite() && radius_m > 0.0) {
            return Err(Error::Geometry(format!("ring radius must be > 0, got {radius_m}")));
        }
        if angles.len() < 4 {
            return Err(Error::Geometry(format!("ring needs at least 4 elements, got {}", angles.len())));
        }
        if angles.iter().any(|a| !(0.0..TAU).contains(a)) {
            return Err(Error::Geometry("element angles must lie in [0, 2π)".into()));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Geometry("element angles must be strictly increasing".into()));
        }
        Ok(RingGeometry { radius_m, angles })
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    pub fn n_elements(&self) -> usize {
        self.angles.len()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn position(&self, k: usize) -> Point {
        let (s, c) = self.angles[k].sin_cos();
        Point::new(self.radius_m * c, self.radius_m * s)
    }

    pub fn positions(&self) -> Vec<Point> {
        (0..self.n_elements()).map(|k| self.position(k)).collect()
    }

    /// Keeps every `stride`-th element starting at index 0.
    pub fn decimate(&self, stride: usize) -> Result<Self> {
        let angles = self.angles.iter().copied().step_by(stride.max(1)).collect();
        Self::from_angles(self.radius_m, angles)
    }
}

/// Reconstruction raster.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImageGrid {
    pub nx: usize,
    pub ny: usize,
    pub pixel_m: f64,
    pub center: Point,
}

impl ImageGrid {
    pub fn new(nx: usize, ny: usize, pixel_m: f64) -> Result<Self> {
        Self::with_center(nx, ny, pixel_m, Point::ORIGIN)
    }

    pub fn with_center(nx: usize, ny: usize, pixel_m: f64, center: Point) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Geometry(format!("grid must be non-empty, got {nx}x{ny}")));
        }
        if !(pixel_m.is_finite() && pixel_m > 0.0) {
            return Err(Error::Geometry(format!("pixel pitch must be > 0, got {pixel_m}")));
        }
        Ok(ImageGrid { nx, ny, pixel_m, center })
    }

    /// Square `n`×`n` grid at the origin.
    pub fn square(n: usize, pixel_m: f64) -> Result<Self> {
        Self::new(n, n, pixel_m)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn half_width_x(&self) -> f64 {
        self.nx as f64 * self.pixel_m / 2.0
    }

    pub fn half_width_y(&self) -> f64 {
        self.ny as f64 * self.pixel_m / 2.0
    }

    /// Distance from the grid center to its farthest corner.
    pub fn half_diagonal(&self) -> f64 {
        self.half_width_x().hypot(self.half_width_y())
    }

    /// World coordinates of (possibly fractional) pixel coordinates.
    pub fn pixel_to_world(&self, i: f64, j: f64) -> Point {
        Point::new(
            (i + 0.5 - self.nx as f64 / 2.0) * self.pixel_m + self.center.x,
            (j + 0.5 - self.ny as f64 / 2.0) * self.pixel_m + self.center.y,
        )
    }

    /// Fractional pixel coordinates of a world point; never clamps.
    pub fn world_to_pixel(&self, p: Point) -> (f64, f64) {
        (
            (p.x - self.center.x) / self.pixel_m + self.nx as f64 / 2.0 - 0.5,
            (p.y - self.center.y) / self.pixel_m + self.ny as f64 / 2.0 - 0.5,
        )
    }

    pub fn pixel_center(&self, i: usize, j: usize) -> Point {
        self.pixel_to_world(i as f64, j as f64)
    }

    /// All pixel centers in raster order.
    pub fn pixel_centers(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push(self.pixel_center(i, j));
            }
        }
        out
    }

    /// Maps a world point into the unit square spanned by the grid's outer
    /// pixel edges, clamped to `[0, 1]²`.
    pub fn normalize(&self, p: Point) -> [f64; 2] {
        let u = (p.x - self.center.x) / (2.0 * self.half_width_x()) + 0.5;
        let v = (p.y - self.center.y) / (2.0 * self.half_width_y()) + 0.5;
        [u.clamp(0.0, 1.0), v.clamp(0.0, 1.0)]
    }

    /// True if bilinear interpolation at `p` touches at least one pixel.
    pub fn in_support(&self, p: Point) -> bool {
        let (fi, fj) = self.world_to_pixel(p);
        fi > -1.0 && fj > -1.0 && fi < self.nx as f64 && fj < self.ny as f64
    }

    /// Bilinear taps `(raster index, weight)` at `p`. Neighbours outside the
    /// grid are dropped (zero padding). Returns the number of taps written.
    pub fn bilinear_taps(&self, p: Point, taps: &mut [(usize, f64); 4]) -> usize {
        let (fi, fj) = self.world_to_pixel(p);
        if !(fi > -1.0 && fj > -1.0 && fi < self.nx as f64 && fj < self.ny as f64) {
            return 0;
        }
        let i0 = fi.floor();
        let j0 = fj.floor();
        let ax = fi - i0;
        let ay = fj - j0;
        let i0 = i0 as isize;
        let j0 = j0 as isize;
        let mut n = 0;
        for (dj, wy) in [(0isize, 1.0 - ay), (1, ay)] {
            let j = j0 + dj;
            if j < 0 || j >= self.ny as isize || wy == 0.0 {
                continue;
            }
            for (di, wx) in [(0isize, 1.0 - ax), (1, ax)] {
                let i = i0 + di;
                if i < 0 || i >= self.nx as isize || wx == 0.0 {
                    continue;
                }
                taps[n] = (j as usize * self.nx + i as usize, wx * wy);
                n += 1;
            }
        }
        n
    }
}

/// Circular region of interest used to size the forward model's arcs.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoiCircle {
    pub radius_m: f64,
    pub center: Point,
}

impl RoiCircle {
    pub fn new(radius_m: f64) -> Self {
        RoiCircle { radius_m, center: Point::ORIGIN }
    }

    /// Circle circumscribing the grid square.
    pub fn circumscribing(grid: &ImageGrid) -> Self {
        RoiCircle { radius_m: grid.half_diagonal(), center: grid.center }
    }

    pub fn validate(&self, geometry: &RingGeometry) -> Result<()> {
        if !(self.radius_m > 0.0 && self.radius_m < geometry.radius_m()) {
            return Err(Error::Domain(format!(
                "ROI radius {} m must lie in (0, ring radius {} m)",
                self.radius_m,
                geometry.radius_m()
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: Point) -> bool {
        p.distance(self.center) <= self.radius_m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_grid() -> ImageGrid {
        ImageGrid::square(512, 0.05e-3).unwrap()
    }

    #[test]
    fn origin_maps_to_center_of_even_grid() {
        assert_eq!(paper_grid().world_to_pixel(Point::ORIGIN), (255.5, 255.5));
    }

    #[test]
    fn positive_corner_maps_to_last_pixel_center() {
        let g = paper_grid();
        let hw = g.half_width_x();
        let (i, j) = g.world_to_pixel(Point::new(hw, hw));
        assert!((i - 511.5).abs() < 1e-9 && (j - 511.5).abs() < 1e-9);
    }

    #[test]
    fn pixel_world_pixel_round_trip() {
        let g = paper_grid();
        let (fi, fj) = g.world_to_pixel(g.pixel_center(17, 300));
        assert_eq!((fi.round(), fj.round()), (17.0, 300.0));
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (fi, fj) = g.world_to_pixel(g.pixel_center(i, j));
                assert_eq!((fi.round() as usize, fj.round() as usize), (i, j));
                assert!((fi - i as f64).abs() < 1e-9 && (fj - j as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn points_outside_are_not_clamped() {
        let g = ImageGrid::square(8, 1.0).unwrap();
        let (i, j) = g.world_to_pixel(Point::new(100.0, -100.0));
        assert!(i > 8.0 && j < 0.0);
    }

    #[test]
    fn ring_positions_on_circle() {
        let ring = RingGeometry::uniform(0.04, 256).unwrap();
        for p in ring.positions() {
            assert!((p.norm() - 0.04).abs() <= 1e-12 * 0.04);
        }
        assert_eq!(ring.position(0), Point::new(0.04, 0.0));
    }

    #[test]
    fn ring_validation() {
        assert!(RingGeometry::uniform(0.0, 16).is_err());
        assert!(RingGeometry::uniform(0.04, 3).is_err());
        assert!(RingGeometry::from_angles(0.04, alloc::vec![0.0, 1.0, 1.0, 2.0]).is_err());
        assert!(RingGeometry::from_angles(0.04, alloc::vec![0.0, 1.0, 2.0, 7.0]).is_err());
    }

    #[test]
    fn decimated_ring_keeps_uniform_angles() {
        let ring = RingGeometry::uniform(0.04, 256).unwrap();
        let sub = ring.decimate(4).unwrap();
        let direct = RingGeometry::uniform(0.04, 64).unwrap();
        assert_eq!(sub.n_elements(), 64);
        for (a, b) in sub.angles().iter().zip(direct.angles()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn default_roi_circumscribes_square() {
        let roi = RoiCircle::circumscribing(&ImageGrid::square(500, 0.05e-3).unwrap());
        assert!((roi.radius_m - 0.0125 * core::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn bilinear_taps_sum_to_one_inside() {
        let g = ImageGrid::square(10, 1.0).unwrap();
        let mut taps = [(0, 0.0); 4];
        let n = g.bilinear_taps(Point::new(0.3, -1.7), &mut taps);
        let s: f64 = taps[..n].iter().map(|t| t.1).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(g.bilinear_taps(Point::new(50.0, 0.0), &mut taps), 0);
    }
}
