use pact_core::forward::{ForwardConfig, ForwardOperator};
use pact_core::geometry::{ImageGrid, RingGeometry};
use pact_core::inr::{HashEncoding, HashEncodingConfig};
use pact_core::mb::{mb_reconstruct, MbConfig};
use pact_core::metrics::{cnr, psnr, snr, ssim, Rect, RegionSpec};
use pact_core::tv::{tv, tv_gradient};
use pact_core::{Image, Sinogram};
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn small_forward(n: usize, n_det: usize, n_samples: usize) -> ForwardConfig {
    let grid = ImageGrid::square(n, 8e-3 / n as f64).unwrap();
    let fwd = ForwardConfig::new(RingGeometry::uniform(0.02, n_det).unwrap(), grid, 20e6, 1500.0, n_samples).unwrap();
    // Start the record just before the first arrivals.
    ForwardConfig { t0_s: (0.02 - grid.half_diagonal()) / 1500.0 - 1e-7, ..fwd }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjoint_dot_product(
        n in 4usize..20,
        n_det in 4usize..9,
        seed in any::<u64>(),
    ) {
        let fwd = small_forward(n, n_det, 96);
        let op = ForwardOperator::new(&fwd).unwrap();
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let x: Vec<f64> = (0..op.n_cols()).map(|_| next()).collect();
        let y: Vec<f64> = (0..op.n_rows()).map(|_| next()).collect();
        let ax = op.apply(&x);
        let aty = op.apply_adjoint(&y);
        let scale = dot(&ax, &ax).sqrt() * dot(&y, &y).sqrt();
        prop_assume!(scale > 0.0);
        prop_assert!((dot(&ax, &y) - dot(&x, &aty)).abs() / scale < 1e-9);
    }

    #[test]
    fn subsampling_keeps_rows(
        k in 0usize..3,
        n_samples in 1usize..16,
        data in proptest::collection::vec(-1e3f32..1e3, 64 * 16),
    ) {
        let n_proj = [4, 16, 64][k];
        let ring = RingGeometry::uniform(0.04, 64).unwrap();
        let s = Sinogram::new(ring, n_samples, 20e6, 1500.0, 0.0, data[..64 * n_samples].to_vec()).unwrap();
        let sub = s.subsample_detectors(n_proj).unwrap();
        let stride = 64 / n_proj;
        for d in 0..n_proj {
            prop_assert_eq!(sub.row(d), s.row(d * stride));
            prop_assert_eq!(sub.geometry().angles()[d], s.geometry().angles()[d * stride]);
        }
    }

    #[test]
    fn pixel_world_round_trip(n in 1usize..600, i in 0usize..600, j in 0usize..600) {
        let grid = ImageGrid::square(n, 5e-5).unwrap();
        let (i, j) = (i % n, j % n);
        let (u, v) = grid.world_to_pixel(grid.pixel_center(i, j));
        prop_assert!((u - i as f64).abs() < 1e-9 && (v - j as f64).abs() < 1e-9);
    }

    #[test]
    fn tv_gradient_matches_differences(h in proptest::collection::vec(0.0f64..1.0, 16 * 16)) {
        let g = tv_gradient(&h, 16, 16, 1e-8);
        let step = 1e-6;
        for k in (0..256).step_by(17) {
            let mut p = h.clone();
            p[k] += step;
            let mut m = h.clone();
            m[k] -= step;
            let fd = (tv(&p, 16, 16, 1e-8) - tv(&m, 16, 16, 1e-8)) / (2.0 * step);
            prop_assert!((fd - g[k]).abs() < 1e-5, "{} vs {}", fd, g[k]);
        }
    }

    #[test]
    fn hash_weights_partition_unity(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let enc = HashEncoding::new(&HashEncodingConfig {
            n_levels: 6,
            table_size_log2: 10,
            finest_resolution: 128,
            ..HashEncodingConfig::default()
        })
        .unwrap();
        for level in &enc.levels {
            let (slots, w) = level.corners([x, y]);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!(slots.iter().all(|&s| s < level.entries));
        }
    }

    #[test]
    fn metric_symmetries(
        a in proptest::collection::vec(0.0f32..1.0, 64),
        b in proptest::collection::vec(0.0f32..1.0, 64),
        k in 0.1f32..10.0,
    ) {
        let grid = ImageGrid::square(8, 1e-4).unwrap();
        let (f, g) = (Image::new(grid, a.clone()).unwrap(), Image::new(grid, b).unwrap());
        prop_assert!((ssim(&f, &g).unwrap() - ssim(&g, &f).unwrap()).abs() < 1e-12);
        prop_assert_eq!(psnr(&f, &g).unwrap(), psnr(&g, &f).unwrap());
        prop_assert_eq!(ssim(&f, &f).unwrap(), 1.0);
        let regions = RegionSpec {
            signal: Rect { x: 0, y: 0, w: 4, h: 4 },
            background: Rect { x: 4, y: 4, w: 4, h: 4 },
        };
        let scaled = Image::new(grid, a.iter().map(|v| v * k).collect()).unwrap();
        let (s0, s1) = (snr(&f, &regions).unwrap(), snr(&scaled, &regions).unwrap());
        let (c0, c1) = (cnr(&f, &regions).unwrap(), cnr(&scaled, &regions).unwrap());
        prop_assert!((s0 - s1).abs() < 1e-4 && (c0 - c1).abs() < 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn mb_output_is_nonnegative(data in proptest::collection::vec(-1.0f32..1.0, 8 * 96)) {
        let fwd = small_forward(12, 8, 96);
        let s = Sinogram::new(fwd.geometry.clone(), 96, fwd.fs_hz, fwd.c_mps, fwd.t0_s, data).unwrap();
        let cfg = MbConfig { n_iters: 10, ..MbConfig::default() };
        let out = mb_reconstruct(&s, &cfg, &fwd).unwrap();
        prop_assert!(out.image.values().iter().all(|&v| v >= 0.0));
        for w in out.trace.windows(2) {
            prop_assert!(w[1].total <= w[0].total);
        }
    }
}
