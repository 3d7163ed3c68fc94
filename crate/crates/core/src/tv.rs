//! Isotropic total variation with ε-smoothing.
//!
//! `TV(H) = Σ √((∇ₓH)² + (∇ᵧH)² + ε²)` with forward differences and Neumann
//! boundaries (the difference past the last row or column is zero).

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::data::Image;

/// Smoothing used by [`tv_value`] and [`tv_subgradient`].
pub const TV_EPSILON: f64 = 1e-8;

#[inline]
fn diffs(h: &[f64], nx: usize, ny: usize, i: usize, j: usize) -> (f64, f64) {
    let k = j * nx + i;
    let gx = if i + 1 < nx { h[k + 1] - h[k] } else { 0.0 };
    let gy = if j + 1 < ny { h[k + nx] - h[k] } else { 0.0 };
    (gx, gy)
}

/// TV of a raster `h` of `nx`×`ny` values.
pub fn tv(h: &[f64], nx: usize, ny: usize, eps: f64) -> f64 {
    assert_eq!(h.len(), nx * ny);
    let e2 = eps * eps;
    let mut acc = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let (gx, gy) = diffs(h, nx, ny, i, j);
            acc += (gx * gx + gy * gy + e2).sqrt();
        }
    }
    acc
}

/// Adds `scale · ∇TV(h)` to `grad`.
pub fn tv_gradient_into(h: &[f64], nx: usize, ny: usize, eps: f64, scale: f64, grad: &mut [f64]) {
    assert_eq!(h.len(), nx * ny);
    assert_eq!(grad.len(), nx * ny);
    let e2 = eps * eps;
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let (gx, gy) = diffs(h, nx, ny, i, j);
            let n = (gx * gx + gy * gy + e2).sqrt();
            let (wx, wy) = (scale * gx / n, scale * gy / n);
            grad[k] -= wx + wy;
            if i + 1 < nx {
                grad[k + 1] += wx;
            }
            if j + 1 < ny {
                grad[k + nx] += wy;
            }
        }
    }
}

/// `∇TV(h)`.
pub fn tv_gradient(h: &[f64], nx: usize, ny: usize, eps: f64) -> Vec<f64> {
    let mut g = vec![0.0; h.len()];
    tv_gradient_into(h, nx, ny, eps, 1.0, &mut g);
    g
}

pub fn tv_value(image: &Image) -> f64 {
    let g = image.grid();
    tv(&image.to_f64(), g.nx, g.ny, TV_EPSILON)
}

pub fn tv_subgradient(image: &Image) -> Image {
    let g = image.grid();
    let grad = tv_gradient(&image.to_f64(), g.nx, g.ny, TV_EPSILON);
    Image::from_f64(*g, &grad).expect("gradient of a finite image is finite")
}
