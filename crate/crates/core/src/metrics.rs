//! Image-quality metrics: global SSIM, PSNR, MSE, and region-based SNR/CNR.
//!
//! Statistics are population (1/N) moments. Degenerate ratios return infinite
//! sentinels instead of errors: PSNR of identical images is `+∞`, SNR with a
//! flat background is `+∞`, CNR with equal region means is `−∞`.

use alloc::format;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::data::Image;
use crate::error::{Error, Result};
use crate::geometry::ImageGrid;

/// SSIM stabilizers, applied as given (not squared).
pub const SSIM_C1: f64 = 0.01;
pub const SSIM_C2: f64 = 0.03;

fn check_same(f: &Image, gt: &Image) -> Result<()> {
    let (a, b) = (f.grid(), gt.grid());
    if a.nx != b.nx || a.ny != b.ny {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", b.nx, b.ny),
            actual: format!("{}x{}", a.nx, a.ny),
        });
    }
    Ok(())
}

fn mean(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64
}

/// Global structural similarity.
pub fn ssim(f: &Image, gt: &Image) -> Result<f64> {
    check_same(f, gt)?;
    let (a, b) = (f.values(), gt.values());
    let n = a.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        va += dx * dx;
        vb += dy * dy;
        cov += dx * dy;
    }
    let (va, vb, cov) = (va / n, vb / n, cov / n);
    Ok((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2) / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2)))
}

/// Mean squared error over all pixels.
pub fn mse(f: &Image, gt: &Image) -> Result<f64> {
    check_same(f, gt)?;
    let sum: f64 = f
        .values()
        .iter()
        .zip(gt.values())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / f.values().len() as f64)
}

/// Peak signal-to-noise ratio in dB, with the peak taken over both images.
/// Identical images give `+∞`.
pub fn psnr(f: &Image, gt: &Image) -> Result<f64> {
    let err = mse(f, gt)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = f.max().max(gt.max()) as f64;
    Ok(10.0 * (peak * peak / err).log10())
}

/// Pixel-aligned rectangle `(x, y, w, h)`: columns `x..x+w`, rows `y..y+h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }

    fn overlaps(&self, o: &Rect) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    fn fits(&self, grid: &ImageGrid) -> bool {
        self.x + self.w <= grid.nx && self.y + self.h <= grid.ny
    }

    /// Mean and population standard deviation of `image` inside the rectangle.
    pub fn stats(&self, image: &Image) -> (f64, f64) {
        let nx = image.grid().nx;
        let v = image.values();
        let n = (self.w * self.h) as f64;
        let mut sum = 0.0;
        for j in self.y..self.y + self.h {
            for i in self.x..self.x + self.w {
                sum += v[j * nx + i] as f64;
            }
        }
        let m = sum / n;
        let mut var = 0.0;
        for j in self.y..self.y + self.h {
            for i in self.x..self.x + self.w {
                let d = v[j * nx + i] as f64 - m;
                var += d * d;
            }
        }
        (m, (var / n).sqrt())
    }
}

/// Signal and background rectangles for SNR/CNR.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegionSpec {
    pub signal: Rect,
    pub background: Rect,
}

impl RegionSpec {
    pub fn validate(&self, grid: &ImageGrid) -> Result<()> {
        for (name, r) in [("signal", &self.signal), ("background", &self.background)] {
            if r.w == 0 || r.h == 0 {
                return Err(Error::Config(format!("{name} region has zero area")));
            }
            if !r.fits(grid) {
                return Err(Error::Config(format!("{name} region {r:?} exceeds the {}x{} grid", grid.nx, grid.ny)));
            }
        }
        if self.signal.overlaps(&self.background) {
            return Err(Error::Config("signal and background regions overlap".into()));
        }
        Ok(())
    }
}

/// `20·log10(mean_signal / std_background)`.
pub fn snr(image: &Image, regions: &RegionSpec) -> Result<f64> {
    regions.validate(image.grid())?;
    let (ms, _) = regions.signal.stats(image);
    let (_, sb) = regions.background.stats(image);
    if sb == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (ms / sb).log10())
}

/// `20·log10(|mean_signal − mean_background| / √(std_bg² + std_signal²))`.
pub fn cnr(image: &Image, regions: &RegionSpec) -> Result<f64> {
    regions.validate(image.grid())?;
    let (ms, ss) = regions.signal.stats(image);
    let (mb, sb) = regions.background.stats(image);
    let num = (ms - mb).abs();
    let den = (sb * sb + ss * ss).sqrt();
    if num == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if den == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (num / den).log10())
}

/// All metrics for one reconstruction; reference-based entries are `None`
/// without a ground truth, region-based ones without regions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricSet {
    pub ssim: Option<f64>,
    pub psnr: Option<f64>,
    pub mse: Option<f64>,
    pub snr: Option<f64>,
    pub cnr: Option<f64>,
}

pub fn evaluate(image: &Image, gt: Option<&Image>, regions: Option<&RegionSpec>) -> Result<MetricSet> {
    let mut m = MetricSet::default();
    if let Some(gt) = gt {
        m.ssim = Some(ssim(image, gt)?);
        m.psnr = Some(psnr(image, gt)?);
        m.mse = Some(mse(image, gt)?);
    }
    if let Some(r) = regions {
        m.snr = Some(snr(image, r)?);
        m.cnr = Some(cnr(image, r)?);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn img(n: usize, v: Vec<f32>) -> Image {
        Image::new(ImageGrid::square(n, 1.0).unwrap(), v).unwrap()
    }

    #[test]
    fn ssim_identity_and_constants() {
        let a = img(4, (0..16).map(|k| k as f32 / 16.0).collect());
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let (x, y) = (0.3f32, 0.8f32);
        let s = ssim(&img(4, vec![x; 16]), &img(4, vec![y; 16])).unwrap();
        let (x, y) = (x as f64, y as f64);
        assert!((s - (2.0 * x * y + 0.01) / (x * x + y * y + 0.01)).abs() < 1e-12);
    }

    #[test]
    fn psnr_arithmetic() {
        // Peak 1, every pixel off by 0.1 -> MSE 0.01 -> 20 dB.
        let gt = img(2, vec![1.0, 0.0, 0.5, 0.5]);
        let f = img(2, vec![0.9, 0.1, 0.4, 0.6]);
        assert!((psnr(&f, &gt).unwrap() - 20.0).abs() < 1e-5);
        assert_eq!(psnr(&gt, &gt).unwrap(), f64::INFINITY);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(ssim(&img(2, vec![0.0; 4]), &img(3, vec![0.0; 9])).is_err());
        assert!(psnr(&img(2, vec![0.0; 4]), &img(3, vec![0.0; 9])).is_err());
    }

    fn two_region_image(sig: &[f32], bg: &[f32]) -> (Image, RegionSpec) {
        // 4x2 image: left 2x2 block is the signal, right 2x2 block the background.
        let v = vec![sig[0], sig[1], bg[0], bg[1], sig[2], sig[3], bg[2], bg[3]];
        let image = Image::new(ImageGrid::new(4, 2, 1.0).unwrap(), v).unwrap();
        let regions = RegionSpec { signal: Rect::new(0, 0, 2, 2), background: Rect::new(2, 0, 2, 2) };
        (image, regions)
    }

    #[test]
    fn snr_cnr_arithmetic() {
        let (image, r) = two_region_image(&[10.0; 4], &[1.0, -1.0, 1.0, -1.0]);
        assert!((snr(&image, &r).unwrap() - 20.0).abs() < 1e-12);
        let (image, r) = two_region_image(&[1.1, 0.9, 1.1, 0.9], &[0.1, -0.1, 0.1, -0.1]);
        let expected = 20.0 * (1.0 / 0.02f64.sqrt()).log10();
        assert!((cnr(&image, &r).unwrap() - expected).abs() < 1e-5);
        assert!((expected - 16.99).abs() < 0.01);
        let (image, r) = two_region_image(&[0.5; 4], &[0.5; 4]);
        assert_eq!(cnr(&image, &r).unwrap(), f64::NEG_INFINITY);
        assert_eq!(snr(&image, &r).unwrap(), f64::INFINITY);
    }

    #[test]
    fn region_validation() {
        let grid = ImageGrid::square(8, 1.0).unwrap();
        let ok = RegionSpec { signal: Rect::new(0, 0, 2, 2), background: Rect::new(4, 4, 4, 4) };
        assert!(ok.validate(&grid).is_ok());
        let overlap = RegionSpec { background: Rect::new(1, 1, 2, 2), ..ok };
        assert!(overlap.validate(&grid).is_err());
        let outside = RegionSpec { background: Rect::new(6, 6, 4, 4), ..ok };
        assert!(outside.validate(&grid).is_err());
        let empty = RegionSpec { background: Rect::new(6, 6, 0, 2), ..ok };
        assert!(empty.validate(&grid).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_reflexive(a in proptest::collection::vec(0.0f32..1.0, 36),
                                   b in proptest::collection::vec(0.0f32..1.0, 36)) {
            let (fa, fb) = (img(6, a), img(6, b));
            prop_assert!((ssim(&fa, &fb).unwrap() - ssim(&fb, &fa).unwrap()).abs() < 1e-12);
            prop_assert!((ssim(&fa, &fa).unwrap() - 1.0).abs() < 1e-12);
            prop_assert_eq!(psnr(&fa, &fb).unwrap(), psnr(&fb, &fa).unwrap());
        }

        #[test]
        fn region_ratios_are_scale_and_shift_invariant(
            sig in proptest::collection::vec(1.0f32..2.0, 4),
            bg in proptest::collection::vec(0.0f32..0.5, 4),
            k in 0.5f32..4.0,
            c in -1.0f32..1.0,
        ) {
            let (image, r) = two_region_image(&sig, &bg);
            let scaled: Vec<f32> = image.values().iter().map(|v| v * k).collect();
            let scaled = Image::new(*image.grid(), scaled).unwrap();
            let shifted: Vec<f32> = image.values().iter().map(|v| v + c).collect();
            let shifted = Image::new(*image.grid(), shifted).unwrap();
            let (s0, c0) = (snr(&image, &r).unwrap(), cnr(&image, &r).unwrap());
            prop_assert!((snr(&scaled, &r).unwrap() - s0).abs() < 1e-3);
            prop_assert!((cnr(&scaled, &r).unwrap() - c0).abs() < 1e-3);
            prop_assert!((cnr(&shifted, &r).unwrap() - c0).abs() < 1e-3);
        }
    }
}
