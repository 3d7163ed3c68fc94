//! Model-based reconstruction: non-negative least squares with a TV penalty,
//!
//! ```text
//! min_{H ≥ 0}  ‖p_m − A·H‖² + λ·TV(H)
//! ```
//!
//! solved by projected gradient descent from `H₀ = 0`. Every iteration starts
//! from the step `1/L`, `L = 2·‖AᵀA‖` (power-iteration estimate), and halves
//! it until the Armijo condition holds. If no step passes within the halving
//! limit the iterate is kept, so the loss trace never increases.
//!
//! [`mb_reconstruct`] normalizes the measured data by its maximum magnitude and
//! the operator by `‖A‖`, which makes `λ` independent of physical units.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::data::{Image, Sinogram};
use crate::error::{Error, Result};
use crate::forward::{ForwardConfig, ForwardOperator, SparseMatrix, DEFAULT_MATRIX_BUDGET};
use crate::tv::{tv, tv_gradient_into, TV_EPSILON};

/// A real linear map between flat `f64` buffers.
pub trait LinearOperator: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64>;
}

impl LinearOperator for ForwardOperator {
    fn n_rows(&self) -> usize {
        ForwardOperator::n_rows(self)
    }
    fn n_cols(&self) -> usize {
        ForwardOperator::n_cols(self)
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        ForwardOperator::apply(self, x)
    }
    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        ForwardOperator::apply_adjoint(self, y)
    }
}

impl LinearOperator for SparseMatrix {
    fn n_rows(&self) -> usize {
        self.n_rows
    }
    fn n_cols(&self) -> usize {
        self.n_cols
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matvec(x)
    }
    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.matvec_transpose(y)
    }
}

/// `scale · A`.
pub struct Scaled<'a, A: ?Sized> {
    pub inner: &'a A,
    pub scale: f64,
}

impl<A: LinearOperator + ?Sized> LinearOperator for Scaled<'_, A> {
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }
    fn n_cols(&self) -> usize {
        self.inner.n_cols()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.inner.apply(x);
        y.iter_mut().for_each(|v| *v *= self.scale);
        y
    }
    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.inner.apply_adjoint(y);
        x.iter_mut().for_each(|v| *v *= self.scale);
        x
    }
}

/// Power-iteration estimate of `‖AᵀA‖₂`, started from a constant vector.
pub fn normal_norm_estimate<A: LinearOperator + ?Sized>(op: &A, iterations: usize) -> f64 {
    let n = op.n_cols();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for _ in 0..iterations.max(1) {
        let w = op.apply_adjoint(&op.apply(&v));
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v.iter_mut().zip(&w).for_each(|(a, b)| *a = b / norm);
    }
    lambda
}

/// Largest λ accepted unless [`MbConfig::allow_large_lambda`] is set.
pub const MAX_DEFAULT_LAMBDA: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MbConfig {
    /// TV weight λ.
    pub lambda_tv: f64,
    pub n_iters: usize,
    /// Power iterations for the step-size estimate.
    pub power_iters: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    pub max_halvings: usize,
    /// Assemble the sparse matrix instead of running matrix-free.
    pub use_assembled_matrix: bool,
    /// Memory budget for the assembled matrix, bytes.
    pub matrix_budget_bytes: usize,
    pub allow_large_lambda: bool,
}

impl Default for MbConfig {
    fn default() -> Self {
        MbConfig {
            lambda_tv: 0.01,
            n_iters: 50,
            power_iters: 15,
            armijo_c: 1e-4,
            max_halvings: 30,
            use_assembled_matrix: false,
            matrix_budget_bytes: DEFAULT_MATRIX_BUDGET,
            allow_large_lambda: false,
        }
    }
}

impl MbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_tv >= 0.0 && self.lambda_tv.is_finite()) {
            return Err(Error::Config(format!("lambda_tv must be >= 0, got {}", self.lambda_tv)));
        }
        if self.lambda_tv > MAX_DEFAULT_LAMBDA && !self.allow_large_lambda {
            return Err(Error::Config(format!(
                "lambda_tv {} is outside [0, {MAX_DEFAULT_LAMBDA}]; set allow_large_lambda to override",
                self.lambda_tv
            )));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::Config("armijo_c must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub data: f64,
    pub tv: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct MbSolution {
    pub h: Vec<f64>,
    /// Loss at `H₀` followed by the loss after each iteration.
    pub trace: Vec<LossRecord>,
}

/// Raster shape used by the TV term; `None` disables TV regardless of λ.
#[derive(Debug, Clone, Copy)]
pub struct TvShape {
    pub nx: usize,
    pub ny: usize,
}

fn objective(residual: &[f64], h: &[f64], lambda: f64, shape: Option<TvShape>) -> (f64, f64) {
    let data: f64 = residual.iter().map(|r| r * r).sum();
    let reg = match shape {
        Some(s) if lambda > 0.0 => tv(h, s.nx, s.ny, TV_EPSILON),
        _ => 0.0,
    };
    (data, reg)
}

/// Projected gradient descent on `‖p − A·h‖² + λ·TV(h)` over `h ≥ 0`.
///
/// `lipschitz_normal` is `‖AᵀA‖`; pass `None` to estimate it here.
pub fn solve_nnls_tv<A: LinearOperator + ?Sized>(
    op: &A,
    p: &[f64],
    cfg: &MbConfig,
    shape: Option<TvShape>,
    lipschitz_normal: Option<f64>,
) -> Result<MbSolution> {
    cfg.validate()?;
    if p.len() != op.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} data samples", op.n_rows()),
            actual: format!("{}", p.len()),
        });
    }
    let n = op.n_cols();
    let lambda = cfg.lambda_tv;
    let l_normal = match lipschitz_normal {
        Some(l) => l,
        None => normal_norm_estimate(op, cfg.power_iters),
    };
    let base_step = if l_normal > 0.0 { 1.0 / (2.0 * l_normal) } else { 1.0 };

    let mut h = vec![0.0; n];
    let mut residual: Vec<f64> = p.iter().map(|v| -v).collect();
    let (mut data, mut reg) = objective(&residual, &h, lambda, shape);
    let mut total = data + lambda * reg;
    let mut trace = Vec::with_capacity(cfg.n_iters + 1);
    trace.push(LossRecord { iteration: 0, data, tv: reg, total });

    for it in 1..=cfg.n_iters {
        let mut grad = op.apply_adjoint(&residual);
        grad.iter_mut().for_each(|g| *g *= 2.0);
        if let (Some(s), true) = (shape, lambda > 0.0) {
            tv_gradient_into(&h, s.nx, s.ny, TV_EPSILON, lambda, &mut grad);
        }
        let mut step = base_step;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let candidate: Vec<f64> = h.iter().zip(&grad).map(|(x, g)| (x - step * g).max(0.0)).collect();
            let moved: f64 = candidate.iter().zip(&h).map(|(a, b)| (a - b) * (a - b)).sum();
            if moved == 0.0 {
                break;
            }
            let ax = op.apply(&candidate);
            let cand_res: Vec<f64> = ax.iter().zip(p).map(|(a, b)| a - b).collect();
            let (d, r) = objective(&cand_res, &candidate, lambda, shape);
            let t = d + lambda * r;
            if !t.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss at iteration {it}")));
            }
            if t <= total - cfg.armijo_c / step * moved {
                accepted = Some((candidate, cand_res, d, r, t));
                break;
            }
            step *= 0.5;
        }
        if let Some((c, res, d, r, t)) = accepted {
            h = c;
            residual = res;
            data = d;
            reg = r;
            total = t;
        }
        trace.push(LossRecord { iteration: it, data, tv: reg, total });
    }
    Ok(MbSolution { h, trace })
}

/// Output of [`mb_reconstruct`].
#[derive(Debug, Clone)]
pub struct MbOutput {
    pub image: Image,
    pub trace: Vec<LossRecord>,
}

/// Reconstructs `s` on `fwd.grid`.
pub fn mb_reconstruct(s: &Sinogram, cfg: &MbConfig, fwd: &ForwardConfig) -> Result<MbOutput> {
    cfg.validate()?;
    if s.n_detectors() != fwd.n_detectors() || s.n_samples() != fwd.n_samples {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} sinogram", fwd.n_detectors(), fwd.n_samples),
            actual: format!("{}x{}", s.n_detectors(), s.n_samples()),
        });
    }
    let op = ForwardOperator::new(fwd)?;
    let p = s.normalized().to_f64();
    let shape = Some(TvShape { nx: fwd.grid.nx, ny: fwd.grid.ny });
    let solution = if cfg.use_assembled_matrix {
        let a = op.assemble(cfg.matrix_budget_bytes)?;
        solve_scaled(&a, &p, cfg, shape)?
    } else {
        solve_scaled(&op, &p, cfg, shape)?
    };
    let image = Image::from_f64(fwd.grid, &solution.h)?;
    Ok(MbOutput { image, trace: solution.trace })
}

fn solve_scaled<A: LinearOperator>(op: &A, p: &[f64], cfg: &MbConfig, shape: Option<TvShape>) -> Result<MbSolution> {
    let l = normal_norm_estimate(op, cfg.power_iters);
    if l == 0.0 {
        return solve_nnls_tv(op, p, cfg, shape, Some(0.0));
    }
    let scaled = Scaled { inner: op, scale: 1.0 / l.sqrt() };
    solve_nnls_tv(&scaled, p, cfg, shape, Some(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::ForwardConfig;
    use crate::geometry::{ImageGrid, RingGeometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Identity(usize);

    impl LinearOperator for Identity {
        fn n_rows(&self) -> usize {
            self.0
        }
        fn n_cols(&self) -> usize {
            self.0
        }
        fn apply(&self, x: &[f64]) -> Vec<f64> {
            x.to_vec()
        }
        fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
            y.to_vec()
        }
    }

    #[test]
    fn identity_operator_projects_onto_nonnegative_orthant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p: Vec<f64> = (0..64).map(|_| rng.random::<f64>() - 0.5).collect();
        let cfg = MbConfig { lambda_tv: 0.0, ..MbConfig::default() };
        let sol = solve_nnls_tv(&Identity(64), &p, &cfg, None, None).unwrap();
        for (h, v) in sol.h.iter().zip(&p) {
            assert!((h - v.max(0.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_lambda_outside_range() {
        let cfg = MbConfig { lambda_tv: 0.5, ..MbConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = MbConfig { lambda_tv: 0.5, allow_large_lambda: true, ..MbConfig::default() };
        assert!(cfg.validate().is_ok());
    }

    fn disk_problem() -> (ForwardConfig, Vec<f64>) {
        let grid = ImageGrid::square(16, 1.6e-3).unwrap();
        let ring = RingGeometry::uniform(0.04, 64).unwrap();
        let mut cfg = ForwardConfig::new(ring, grid, 2e6, 1500.0, 64).unwrap();
        cfg.t0_s = 18e-6;
        cfg.m_arc_points = cfg.default_m().unwrap();
        let h: Vec<f64> = grid.pixel_centers().iter().map(|c| if c.norm() < 6e-3 { 1.0 } else { 0.0 }).collect();
        (cfg, h)
    }

    #[test]
    fn overdetermined_noiseless_fit() {
        let (cfg, truth) = disk_problem();
        let op = ForwardOperator::new(&cfg).unwrap();
        let p = op.apply(&truth);
        let mcfg = MbConfig { lambda_tv: 0.0, n_iters: 200, ..MbConfig::default() };
        let l = normal_norm_estimate(&op, 20);
        let scaled = Scaled { inner: &op, scale: 1.0 / l.sqrt() };
        let ps: Vec<f64> = p.iter().map(|v| v / l.sqrt()).collect();
        let sol = solve_nnls_tv(&scaled, &ps, &mcfg, None, Some(1.0)).unwrap();
        let ah = scaled.apply(&sol.h);
        let num: f64 = ah.iter().zip(&ps).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = ps.iter().map(|b| b * b).sum();
        assert!((num / den).sqrt() < 1e-2, "{}", (num / den).sqrt());
        assert!(sol.h.iter().all(|&v| v >= 0.0));
        assert!(sol.trace.windows(2).all(|w| w[1].total <= w[0].total));
    }

    #[test]
    fn larger_lambda_never_raises_tv() {
        let (cfg, truth) = disk_problem();
        let op = ForwardOperator::new(&cfg).unwrap();
        let p = op.apply(&truth);
        let s = Sinogram::new(
            cfg.geometry.clone(),
            cfg.n_samples,
            cfg.fs_hz,
            cfg.c_mps,
            cfg.t0_s,
            p.iter().map(|&v| v as f32).collect(),
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for lambda in [0.0, 0.01, 0.05, 0.1] {
            let out = mb_reconstruct(&s, &MbConfig { lambda_tv: lambda, ..MbConfig::default() }, &cfg).unwrap();
            let t = crate::tv::tv_value(&out.image);
            assert!(t <= last * (1.0 + 1e-9), "λ={lambda}: {t} > {last}");
            last = t;
            assert!(out.image.values().iter().all(|&v| v >= 0.0));
            assert!(out.trace.windows(2).all(|w| w[1].total <= w[0].total));
        }
    }

    #[test]
    fn assembled_and_matrix_free_agree() {
        let (cfg, truth) = disk_problem();
        let op = ForwardOperator::new(&cfg).unwrap();
        let p = op.apply(&truth);
        let s = Sinogram::new(
            cfg.geometry.clone(),
            cfg.n_samples,
            cfg.fs_hz,
            cfg.c_mps,
            cfg.t0_s,
            p.iter().map(|&v| v as f32).collect(),
        )
        .unwrap();
        let base = MbConfig { n_iters: 10, ..MbConfig::default() };
        let a = mb_reconstruct(&s, &base, &cfg).unwrap();
        let b = mb_reconstruct(&s, &MbConfig { use_assembled_matrix: true, ..base }, &cfg).unwrap();
        for (x, y) in a.image.values().iter().zip(b.image.values()) {
            assert!((x - y).abs() <= 1e-4 * a.image.max().max(1e-12));
        }
    }
}
