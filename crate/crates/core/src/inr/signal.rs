//! Forward model evaluated on a continuous field, and training-pair sampling.
//!
//! Arcs use the same angles, trapezoid weights and centered time difference
//! as the raster operator. The difference is that the field is queried
//! directly at the arc points. Points outside the grid square get zero weight
//! and are never evaluated. This matches the raster model, whose zero padding
//! makes everything past the grid edge contribute nothing.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{Field, EVAL_CHUNK};
use super::real::Real;
use crate::error::Result;
use crate::forward::{quadrature_weights, ForwardConfig};
use crate::geometry::Point;

/// One training pair: detector, time sample, and the arc rotation `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchItem {
    pub detector: u32,
    pub sample: u32,
    pub jitter: f64,
}

/// Precomputed arc geometry for a forward configuration.
#[derive(Debug, Clone)]
pub struct ArcSampler {
    cfg: ForwardConfig,
    alpha: f64,
    weights: Vec<f64>,
    origins: Vec<Point>,
    facing: Vec<f64>,
    /// Distance range from each detector to the grid square.
    reach: Vec<(f64, f64)>,
}

impl ArcSampler {
    pub fn new(cfg: &ForwardConfig) -> Result<Self> {
        cfg.validate()?;
        let alpha = cfg.alpha()?;
        let g = &cfg.grid;
        let (hx, hy) = (g.half_width_x(), g.half_width_y());
        let mut origins = Vec::new();
        let mut facing = Vec::new();
        let mut reach = Vec::new();
        for d in 0..cfg.n_detectors() {
            let p0 = cfg.geometry.position(d);
            origins.push(p0);
            facing.push((cfg.roi.center.y - p0.y).atan2(cfg.roi.center.x - p0.x));
            // Nearest and farthest points of the square.
            let dx = (p0.x - g.center.x).abs();
            let dy = (p0.y - g.center.y).abs();
            let near = Point::new((dx - hx).max(0.0), (dy - hy).max(0.0)).norm();
            let far = Point::new(dx + hx, dy + hy).norm();
            reach.push((near, far));
        }
        Ok(ArcSampler {
            cfg: cfg.clone(),
            alpha,
            weights: quadrature_weights(alpha, cfg.m_arc_points),
            origins,
            facing,
            reach,
        })
    }

    pub fn config(&self) -> &ForwardConfig {
        &self.cfg
    }

    /// Half the angular spacing between arc points, `α/(2M−2)`.
    pub fn max_jitter(&self) -> f64 {
        self.alpha / (2 * self.cfg.m_arc_points - 2) as f64
    }

    /// Appends the in-grid arc points of `item` (normalized to the grid's
    /// unit square) with their signed derivative weights.
    pub fn collect(&self, item: &BatchItem, pts: &mut Vec<[f64; 2]>, coef: &mut Vec<f64>) {
        let d = item.detector as usize;
        let cfg = &self.cfg;
        let g = &cfg.grid;
        let (hx, hy) = (g.half_width_x(), g.half_width_y());
        let m = cfg.m_arc_points;
        let p0 = self.origins[d];
        let dt = cfg.dt_deriv_s;
        let t = cfg.time(item.sample as usize);
        let (near, far) = self.reach[d];
        for (sign, tt) in [(1.0, t + dt), (-1.0, t - dt)] {
            if tt < 0.0 {
                continue;
            }
            let r = cfg.c_mps * tt;
            if r < near || r > far {
                continue;
            }
            let scale = sign / (2.0 * dt);
            for j in 0..m {
                let angle = self.facing[d] - 0.5 * self.alpha + j as f64 * self.alpha / (m - 1) as f64 + item.jitter;
                let (s, c) = angle.sin_cos();
                let (x, y) = (p0.x + r * c - g.center.x, p0.y + r * s - g.center.y);
                if x.abs() > hx || y.abs() > hy {
                    continue;
                }
                pts.push([x / (2.0 * hx) + 0.5, y / (2.0 * hy) + 0.5]);
                coef.push(scale * self.weights[j]);
            }
        }
    }
}

/// Predicted RF sample for every batch item: the forward model applied to
/// `field` (without any gain).
pub fn predicted_signal<T: Real, F: Field<T>>(field: &F, sampler: &ArcSampler, items: &[BatchItem]) -> Vec<f64> {
    let mut pts = Vec::new();
    let mut coef = Vec::new();
    let mut vals = Vec::new();
    let mut cache = F::Cache::default();
    items
        .iter()
        .map(|item| {
            pts.clear();
            coef.clear();
            sampler.collect(item, &mut pts, &mut coef);
            vals.resize(pts.len(), T::zero());
            for (p, v) in pts.chunks(EVAL_CHUNK).zip(vals.chunks_mut(EVAL_CHUNK)) {
                field.eval(p, v, &mut cache);
            }
            coef.iter().zip(&vals).map(|(&c, v)| c * v.f64()).sum()
        })
        .collect()
}

/// Shuffled epochs over all (detector, sample) pairs, with a fresh uniform
/// `γ ∈ [−γ_max, γ_max]` drawn for every pair each time it is used.
#[derive(Debug, Clone)]
pub struct PairSampler {
    rng: ChaCha8Rng,
    n_samples: usize,
    n_pairs: usize,
    max_jitter: f64,
}

impl PairSampler {
    pub fn new(seed: u64, n_detectors: usize, n_samples: usize, max_jitter: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        PairSampler { rng, n_samples, n_pairs: n_detectors * n_samples, max_jitter }
    }

    /// A random permutation of all pair indices (`detector·n_samples + sample`).
    pub fn epoch_order(&mut self) -> Vec<u32> {
        let mut order: Vec<u32> = (0..self.n_pairs as u32).collect();
        order.shuffle(&mut self.rng);
        order
    }

    pub fn draw_jitter(&mut self) -> f64 {
        self.max_jitter * (2.0 * self.rng.random::<f64>() - 1.0)
    }

    pub fn items(&mut self, pairs: &[u32]) -> Vec<BatchItem> {
        pairs
            .iter()
            .map(|&k| BatchItem {
                detector: k / self.n_samples as u32,
                sample: k % self.n_samples as u32,
                jitter: self.draw_jitter(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Image;
    use crate::forward::forward_project;
    use crate::geometry::{ImageGrid, RingGeometry};
    use crate::inr::model::ConstantField;

    fn cfg() -> ForwardConfig {
        let ring = RingGeometry::uniform(0.04, 16).unwrap();
        let mut c = ForwardConfig::new(ring, ImageGrid::square(48, 2e-4).unwrap(), 20e6, 1500.0, 1024).unwrap();
        c.m_arc_points = c.default_m().unwrap();
        c
    }

    fn all_items(c: &ForwardConfig) -> Vec<BatchItem> {
        (0..c.n_detectors() as u32)
            .flat_map(|d| (0..c.n_samples as u32).map(move |i| BatchItem { detector: d, sample: i, jitter: 0.0 }))
            .collect()
    }

    #[test]
    fn zero_and_constant_fields() {
        // A small ROI keeps the arcs' sector narrow enough that some arcs
        // lie entirely inside the grid square.
        let c = cfg().with_roi(crate::geometry::RoiCircle::new(2e-3)).unwrap();
        let s = ArcSampler::new(&c).unwrap();
        let items = all_items(&c);
        let zero = predicted_signal(&ConstantField(0.0f64), &s, &items);
        assert!(zero.iter().all(|&v| v == 0.0));
        // A constant field integrates to α·h on any arc fully inside the
        // grid, so the centered difference cancels there.
        let g = c.grid;
        let inside = |item: &BatchItem| {
            let t = c.time(item.sample as usize);
            [t - c.dt_deriv_s, t + c.dt_deriv_s].iter().all(|&tt| {
                c.arc_points(item.detector as usize, tt, 0.0).unwrap().iter().all(|p| {
                    (p.x - g.center.x).abs() <= g.half_width_x() && (p.y - g.center.y).abs() <= g.half_width_y()
                })
            })
        };
        let flat = predicted_signal(&ConstantField(0.7f64), &s, &items);
        let reference = flat.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut checked = 0;
        for (item, v) in items.iter().zip(&flat) {
            if inside(item) {
                assert!(v.abs() < 1e-9 * reference.max(1.0), "{item:?}: {v}");
                checked += 1;
            }
        }
        assert!(checked > 100 && reference > 0.0, "{checked}");
    }

    /// Gaussian bump on the unit square, negligible at the edges.
    struct Bump;

    impl Field<f64> for Bump {
        type Cache = ();
        fn params(&self) -> &[f64] {
            &[]
        }
        fn params_mut(&mut self) -> &mut [f64] {
            &mut []
        }
        fn eval(&self, pts: &[[f64; 2]], out: &mut [f64], _: &mut ()) {
            for (p, o) in pts.iter().zip(out) {
                let (x, y) = (p[0] - 0.45, p[1] - 0.55);
                *o = (-(x * x + y * y) / (2.0 * 0.1 * 0.1)).exp();
            }
        }
        fn backward(&self, _: &[[f64; 2]], _: &[f64], _: &mut (), _: &mut [f64]) {}
    }

    #[test]
    fn matches_raster_forward_model() {
        // Same field of view as `cfg`, twice the raster resolution: the
        // bilinear raster's radial derivative error is first order in the pitch.
        let mut c = cfg();
        c.grid = ImageGrid::square(96, 1e-4).unwrap();
        c.m_arc_points = c.default_m().unwrap();
        let pts: Vec<[f64; 2]> = c.grid.pixel_centers().into_iter().map(|p| c.grid.normalize(p)).collect();
        let raster = crate::inr::eval_all(&Bump, &pts);
        let image = Image::from_f64(c.grid, &raster).unwrap();
        let projected = forward_project(&image, &c).unwrap();
        let s = ArcSampler::new(&c).unwrap();
        let direct = predicted_signal(&Bump, &s, &all_items(&c));
        let num: f64 = direct.iter().zip(projected.data()).map(|(a, &b)| (a - b as f64).powi(2)).sum();
        let den: f64 = projected.data().iter().map(|&b| (b as f64).powi(2)).sum();
        let rel = (num / den).sqrt();
        assert!(rel < 0.02, "relative difference {rel}");
    }

    #[test]
    fn epochs_are_permutations_and_reproducible() {
        let mut s = PairSampler::new(3, 5, 7, 0.01);
        let mut a = s.epoch_order();
        let b = s.epoch_order();
        assert_ne!(a, b);
        a.sort_unstable();
        assert_eq!(a, (0..35).collect::<Vec<u32>>());
        let mut s1 = PairSampler::new(11, 4, 9, 0.02);
        let mut s2 = PairSampler::new(11, 4, 9, 0.02);
        for _ in 0..3 {
            let (o1, o2) = (s1.epoch_order(), s2.epoch_order());
            assert_eq!(o1, o2);
            assert_eq!(s1.items(&o1[..10]), s2.items(&o2[..10]));
        }
    }

    /// Asymptotic Kolmogorov–Smirnov p-value.
    fn ks_p_value(d: f64, n: usize) -> f64 {
        let sn = (n as f64).sqrt();
        let lambda = (sn + 0.12 + 0.11 / sn) * d;
        let mut p = 0.0;
        for k in 1..100 {
            let term = 2.0 * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
            p += if k % 2 == 1 { term } else { -term };
        }
        p.clamp(0.0, 1.0)
    }

    #[test]
    fn jitter_is_uniform() {
        let c = cfg();
        let max = ArcSampler::new(&c).unwrap().max_jitter();
        assert!((max - c.max_jitter().unwrap()).abs() < 1e-15);
        let mut s = PairSampler::new(42, 1, 1, max);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n).map(|_| s.draw_jitter()).collect();
        assert!(draws.iter().all(|g| g.abs() <= max));
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d: f64 = 0.0;
        for (k, g) in draws.iter().enumerate() {
            let f = (g + max) / (2.0 * max);
            d = d.max((f - k as f64 / n as f64).abs()).max(((k + 1) as f64 / n as f64 - f).abs());
        }
        let p = ks_p_value(d, n);
        assert!(p > 0.01, "KS D = {d}, p = {p}");
    }
}
