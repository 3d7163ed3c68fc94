//! Self-supervised INR training.
//!
//! Per step, for a batch of `B` (detector, sample) pairs with predictions `F`
//! and normalized measurements `p`:
//!
//! ```text
//! g    = max(⟨F, p⟩, 0) / ⟨F, F⟩              (closed-form gain, optional)
//! c    = max(⟨F, p⟩, 0) / (‖F‖·‖p‖)           (so g = c·‖p‖/‖F‖)
//! loss = (1/B)·‖g·F − p‖² + η · TV(c̄·‖p‖/‖F‖ · R) / P   (R: field rasterized on the grid)
//! ```
//!
//! The gain absorbs the physical constants dropped by the forward model: the
//! sigmoid bounds `H` to `(0, 1)` while the RF data are in arbitrary units.
//! `F` is computed with the forward map scaled by `κ = 1/√‖AᵀA‖` (`A` the
//! raster forward operator), the normalization the model-based solver uses,
//! so `g·R` is the image on that solver's scale. `P` is the number of
//! (detector, sample) pairs: over a full epoch the loss is that solver's
//! objective divided by `P`, so `η` plays the role of its `λ`. TV sees that
//! image, except that the correlation `c` inside the gain is replaced by the
//! previous step's value `c̄`, a constant within the step.
//!
//! The gain is the least-squares scalar restricted to `g ≥ 0`, since heat
//! cannot be negative. Left free, it flips sign on batches where the still
//! featureless `F` happens to anti-correlate with `p`, and the resulting
//! updates cancel those of the other batches.
//!
//! The data term depends only on the direction of `F`, and the nearly
//! constant initial field gives an `F` almost orthogonal to `p`: a saddle
//! where the data gradient (∝ `c`) vanishes. With the live gain, TV's
//! gradient through `c` pushes `F` away from `p` and turns the zero image into
//! a local minimum; training stays there. Lagging `c` removes that push while
//! the live `‖p‖/‖F‖` keeps the term invariant to rescaling `R` (lagging the
//! whole gain lets `R` shrink freely under TV with `g` growing to match).
//! For a frozen batch and `c̄`, gradients are exact; the data term's
//! dependence on `g` vanishes because `g` is its minimizer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::adam::{step_decay, Adam, AdamConfig};
use super::model::{eval_all, render_image, Field, InrModel, ModelConfig, EVAL_CHUNK};
use super::real::Real;
use super::signal::{ArcSampler, BatchItem, PairSampler};
use crate::data::{Image, Sinogram};
use crate::error::{Error, Result};
use crate::forward::{ForwardConfig, ForwardOperator};
use crate::mb::normal_norm_estimate;
use crate::par;
use crate::tv::{tv, tv_gradient_into, TV_EPSILON};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct InrTrainConfig {
    pub lr0: f64,
    /// Learning-rate multiplier applied every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// TV weight `η`.
    pub eta_tv: f64,
    pub stop_loss: f64,
    pub max_epochs: usize,
    /// (detector, sample) pairs per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    /// Arc points per arc; `None` uses the forward model's `M`.
    pub m_arc_points: Option<usize>,
    /// Fit the closed-form gain each step; with `false` the gain is 1.
    pub fit_gain: bool,
    /// Rotate each arc by a random `γ` every time it is used.
    pub arc_jitter: bool,
    /// Fixed number of gradient partitions. Each partition accumulates into
    /// its own buffer and the buffers are summed in order, so results do not
    /// depend on how many threads run them.
    pub grad_partitions: usize,
    /// Abort when the epoch loss exceeds `divergence_factor` × the first
    /// epoch's loss for `divergence_patience` consecutive epochs.
    pub divergence_factor: f64,
    pub divergence_patience: usize,
}

impl Default for InrTrainConfig {
    fn default() -> Self {
        InrTrainConfig {
            lr0: 1e-3,
            lr_decay: 0.5,
            lr_decay_every: 20,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            eta_tv: 0.02,
            stop_loss: 1e-4,
            max_epochs: 500,
            batch_size: 4096,
            seed: 0,
            m_arc_points: None,
            fit_gain: true,
            arc_jitter: true,
            grad_partitions: 4,
            divergence_factor: 10.0,
            divergence_patience: 5,
        }
    }
}

impl InrTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr0", self.lr0),
            ("lr_decay", self.lr_decay),
            ("adam_eps", self.adam_eps),
            ("stop_loss", self.stop_loss),
            ("divergence_factor", self.divergence_factor),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eta_tv.is_finite() && self.eta_tv >= 0.0) {
            return Err(Error::Config(format!("eta_tv must be >= 0, got {}", self.eta_tv)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.batch_size == 0 || self.lr_decay_every == 0 || self.grad_partitions == 0 {
            return Err(Error::Config("batch_size, lr_decay_every and grad_partitions must be positive".into()));
        }
        if self.m_arc_points.is_some_and(|m| m < 2) {
            return Err(Error::Config("INR arcs need at least 2 points".into()));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        step_decay(self.lr0, self.lr_decay, self.lr_decay_every, epoch)
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct InrConfig {
    pub model: ModelConfig,
    pub train: InrTrainConfig,
}

/// Everything the loss needs that does not change during training.
#[derive(Debug, Clone)]
pub struct InrProblem {
    sampler: ArcSampler,
    /// Max-abs normalized measurements, detector-major.
    target: Vec<f64>,
    /// Normalized pixel centers for the TV raster.
    raster: Vec<[f64; 2]>,
    nx: usize,
    ny: usize,
    /// `κ`, multiplies every arc weight.
    signal_scale: f64,
}

/// Power iterations behind [`InrProblem::new`]'s `κ`.
pub const SIGNAL_SCALE_ITERS: usize = 10;

impl InrProblem {
    /// `fwd` must describe `s`; `m_arc_points` overrides its `M`.
    pub fn new(s: &Sinogram, fwd: &ForwardConfig, m_arc_points: Option<usize>) -> Result<Self> {
        if s.n_detectors() != fwd.n_detectors() || s.n_samples() != fwd.n_samples {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", fwd.n_detectors(), fwd.n_samples),
                actual: format!("{}x{}", s.n_detectors(), s.n_samples()),
            });
        }
        let mut cfg = fwd.clone();
        if let Some(m) = m_arc_points {
            cfg = cfg.with_m(m)?;
        }
        let scale = s.max_abs() as f64;
        let target = s.data().iter().map(|&v| if scale > 0.0 { v as f64 / scale } else { 0.0 }).collect();
        let grid = fwd.grid;
        let raster = grid.pixel_centers().into_iter().map(|p| grid.normalize(p)).collect();
        let l = normal_norm_estimate(&ForwardOperator::new(&cfg)?, SIGNAL_SCALE_ITERS);
        let signal_scale = if l > 0.0 { 1.0 / l.sqrt() } else { 1.0 };
        Ok(InrProblem { sampler: ArcSampler::new(&cfg)?, target, raster, nx: grid.nx, ny: grid.ny, signal_scale })
    }

    /// Replaces `κ`.
    pub fn with_signal_scale(mut self, kappa: f64) -> Self {
        self.signal_scale = kappa;
        self
    }

    pub fn signal_scale(&self) -> f64 {
        self.signal_scale
    }

    pub fn sampler(&self) -> &ArcSampler {
        &self.sampler
    }

    pub fn n_pairs(&self) -> usize {
        self.target.len()
    }

    pub fn target(&self, item: &BatchItem) -> f64 {
        self.target[item.detector as usize * self.sampler.config().n_samples + item.sample as usize]
    }
}

/// Loss of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub data: f64,
    pub tv: f64,
    pub total: f64,
    pub gain: f64,
    /// Correlation `c` between `F` and `p`.
    pub corr: f64,
}

/// Work unit of the gradient pass: a chunk of points with their upstream
/// gradients.
struct Unit<'a> {
    pts: &'a [[f64; 2]],
    d_out: Vec<f64>,
}

/// Loss of `field` on a frozen batch, with `tv_corr` as `c̄` (ignored
/// without `fit_gain`, where the TV gain is 1); with `grad`, also adds its
/// gradient.
pub fn batch_loss<T: Real, F: Field<T>>(
    field: &F,
    problem: &InrProblem,
    items: &[BatchItem],
    cfg: &InrTrainConfig,
    tv_corr: f64,
    grad: Option<&mut [T]>,
) -> StepLoss {
    let b = items.len().max(1) as f64;
    let mut pts = Vec::new();
    let mut coef = Vec::new();
    let mut owner: Vec<u32> = Vec::new();
    for (k, item) in items.iter().enumerate() {
        let before = pts.len();
        problem.sampler.collect(item, &mut pts, &mut coef);
        coef[before..].iter_mut().for_each(|c| *c *= problem.signal_scale);
        owner.extend(core::iter::repeat_n(k as u32, pts.len() - before));
    }

    // Pass 1: predictions.
    let vals = eval_chunks(field, &pts);
    let mut f = vec![0.0; items.len()];
    for ((&k, &c), v) in owner.iter().zip(&coef).zip(&vals) {
        f[k as usize] += c * v.f64();
    }
    let p: Vec<f64> = items.iter().map(|it| problem.target(it)).collect();
    let ff: f64 = f.iter().map(|v| v * v).sum();
    let fp: f64 = f.iter().zip(&p).map(|(a, b)| a * b).sum();
    let gain = if !cfg.fit_gain {
        1.0
    } else if ff > 0.0 {
        fp.max(0.0) / ff
    } else {
        0.0
    };
    let data = f.iter().zip(&p).map(|(&fi, &pi)| (gain * fi - pi).powi(2)).sum::<f64>() / b;
    let pp: f64 = p.iter().map(|v| v * v).sum();
    let corr = if ff > 0.0 && pp > 0.0 { fp.max(0.0) / (ff * pp).sqrt() } else { 0.0 };
    let norm_live = cfg.fit_gain && ff > 0.0;
    let tv_gain = match (cfg.fit_gain, norm_live) {
        (false, _) => 1.0,
        (true, true) => tv_corr * (pp / ff).sqrt(),
        (true, false) => 0.0,
    };

    // TV on the image estimate.
    let n_pairs = problem.target.len() as f64;
    let mut tv_term = 0.0;
    let mut d_raster = Vec::new();
    let mut d_gain = 0.0;
    if cfg.eta_tv > 0.0 && tv_gain != 0.0 {
        let r: Vec<f64> = eval_chunks(field, &problem.raster).iter().map(|v| v.f64()).collect();
        let gr: Vec<f64> = r.iter().map(|v| tv_gain * v).collect();
        tv_term = cfg.eta_tv * tv(&gr, problem.nx, problem.ny, TV_EPSILON) / n_pairs;
        if grad.is_some() {
            let mut g_tv = vec![0.0; gr.len()];
            tv_gradient_into(&gr, problem.nx, problem.ny, TV_EPSILON, cfg.eta_tv / n_pairs, &mut g_tv);
            d_gain = g_tv.iter().zip(&r).map(|(a, b)| a * b).sum();
            d_raster = g_tv.iter().map(|v| tv_gain * v).collect();
        }
    }
    let loss = StepLoss { data, tv: tv_term, total: data + tv_term, gain, corr };
    let Some(grad) = grad else {
        return loss;
    };

    // dL/dF per item; the data term is stationary in the fitted gain, and
    // d(tv_gain)/dF = −tv_gain·F/⟨F, F⟩.
    let d_norm = if norm_live { -d_gain * tv_gain / ff } else { 0.0 };
    let d_f: Vec<f64> = f.iter().zip(&p).map(|(&fi, &pi)| 2.0 / b * gain * (gain * fi - pi) + d_norm * fi).collect();

    // Pass 2: backpropagate through the field.
    let mut units = Vec::new();
    for ((pc, cc), oc) in pts.chunks(EVAL_CHUNK).zip(coef.chunks(EVAL_CHUNK)).zip(owner.chunks(EVAL_CHUNK)) {
        let d_out = cc.iter().zip(oc).map(|(&cf, &k)| cf * d_f[k as usize]).collect();
        units.push(Unit { pts: pc, d_out });
    }
    if !d_raster.is_empty() {
        for (pc, dc) in problem.raster.chunks(EVAL_CHUNK).zip(d_raster.chunks(EVAL_CHUNK)) {
            units.push(Unit { pts: pc, d_out: dc.to_vec() });
        }
    }
    accumulate_gradient(field, &units, cfg.grad_partitions, grad);
    loss
}

fn eval_chunks<T: Real, F: Field<T>>(field: &F, pts: &[[f64; 2]]) -> Vec<T> {
    let n_chunks = pts.len().div_ceil(EVAL_CHUNK);
    let parts = par::map_range(n_chunks, |c| {
        let chunk = &pts[c * EVAL_CHUNK..((c + 1) * EVAL_CHUNK).min(pts.len())];
        let mut out = vec![T::zero(); chunk.len()];
        field.eval(chunk, &mut out, &mut F::Cache::default());
        out
    });
    parts.concat()
}

fn accumulate_gradient<T: Real, F: Field<T>>(field: &F, units: &[Unit<'_>], partitions: usize, grad: &mut [T]) {
    let run = |range: &[Unit<'_>], acc: &mut [T]| {
        let mut cache = F::Cache::default();
        let mut vals = Vec::new();
        let mut d_out = Vec::new();
        for u in range {
            vals.resize(u.pts.len(), T::zero());
            field.eval(u.pts, &mut vals, &mut cache);
            d_out.clear();
            d_out.extend(u.d_out.iter().map(|&v| T::of(v)));
            field.backward(u.pts, &d_out, &mut cache, acc);
        }
    };
    let per = units.len().div_ceil(partitions.max(1)).max(1);
    let groups: Vec<&[Unit<'_>]> = units.chunks(per).collect();
    if groups.len() <= 1 {
        run(units, grad);
        return;
    }
    let n = grad.len();
    let partial = par::map_range(groups.len(), |k| {
        let mut acc = vec![T::zero(); n];
        run(groups[k], &mut acc);
        acc
    });
    for acc in &partial {
        for (g, &v) in grad.iter_mut().zip(acc) {
            *g += v;
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub data: f64,
    pub tv: f64,
    pub total: f64,
    /// Gain of the epoch's last step.
    pub gain: f64,
}

/// Trains `field` in place. `on_epoch` sees every record as it is produced.
pub fn train_field<T: Real, F: Field<T>>(
    field: &mut F,
    problem: &InrProblem,
    cfg: &InrTrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    let mut adam = Adam::new(field.n_params(), cfg.adam());
    let sc = problem.sampler.config();
    let max_jitter = if cfg.arc_jitter { problem.sampler.max_jitter() } else { 0.0 };
    let mut pairs = PairSampler::new(cfg.seed, sc.n_detectors(), sc.n_samples, max_jitter);
    let mut grad = vec![T::zero(); field.n_params()];
    let mut trace: Vec<EpochRecord> = Vec::new();
    let mut over = 0;
    let mut tv_corr = 0.0;
    for epoch in 0..cfg.max_epochs {
        let lr = cfg.learning_rate(epoch);
        let order = pairs.epoch_order();
        let (mut data, mut tv_sum, mut gain) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let items = pairs.items(chunk);
            grad.iter_mut().for_each(|g| *g = T::zero());
            let step = batch_loss(&*field, problem, &items, cfg, tv_corr, Some(&mut grad));
            if !step.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!("non-finite INR loss or gradient in epoch {epoch}")));
            }
            adam.step(field.params_mut(), &grad, lr);
            let w = items.len() as f64 / order.len() as f64;
            data += w * step.data;
            tv_sum += w * step.tv;
            gain = step.gain;
            tv_corr = step.corr.abs();
        }
        let rec = EpochRecord { epoch, lr, data, tv: tv_sum, total: data + tv_sum, gain };
        on_epoch(&rec);
        trace.push(rec);
        if rec.total < cfg.stop_loss {
            break;
        }
        if rec.total > cfg.divergence_factor * trace[0].total {
            over += 1;
            if over >= cfg.divergence_patience {
                return Err(Error::Numerical(format!(
                    "INR training diverged: loss {:.3e} above {}x the initial {:.3e} for {over} epochs",
                    rec.total, cfg.divergence_factor, trace[0].total
                )));
            }
        } else {
            over = 0;
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone)]
pub struct InrOutput {
    pub model: InrModel<f32>,
    pub trace: Vec<EpochRecord>,
}

/// Builds a model on `fwd.grid` and fits it to `s`.
pub fn inr_train(s: &Sinogram, fwd: &ForwardConfig, cfg: &InrConfig) -> Result<InrOutput> {
    inr_train_with(s, fwd, cfg, |_| {})
}

/// [`inr_train`] with a per-epoch callback.
pub fn inr_train_with(
    s: &Sinogram,
    fwd: &ForwardConfig,
    cfg: &InrConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<InrOutput> {
    cfg.train.validate()?;
    let problem = InrProblem::new(s, fwd, cfg.train.m_arc_points)?;
    let mut model = InrModel::<f32>::new(&cfg.model, fwd.grid, cfg.train.seed)?;
    let trace = train_field(&mut model, &problem, &cfg.train, on_epoch)?;
    Ok(InrOutput { model, trace })
}

/// Trains and renders on `fwd.grid`.
pub fn inr_reconstruct(s: &Sinogram, fwd: &ForwardConfig, cfg: &InrConfig) -> Result<(Image, InrOutput)> {
    let out = inr_train(s, fwd, cfg)?;
    Ok((render_image(&out.model, &fwd.grid)?, out))
}

/// Field values at the problem's raster, for diagnostics.
pub fn raster_values<T: Real, F: Field<T>>(field: &F, problem: &InrProblem) -> Vec<T> {
    eval_all(field, &problem.raster)
}

/// Outcome of [`gradient_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic − fd| / max(|analytic|, |fd|)` over checked parameters.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Draws rejected because the finite-difference stencil was not smooth.
    pub rejected: usize,
}

/// Compares the analytic gradient of [`batch_loss`] with central finite
/// differences on `n` random parameters.
///
/// Parameters are drawn among those whose gradient is at least `1e-3` of the
/// largest one (below that, finite differences are round-off). ReLU kinks are
/// amplified by the centered time difference, so a stencil that straddles
/// one gives a meaningless difference. Such draws are detected by comparing
/// steps `h` and `h/2` and are redrawn. A wrong analytic gradient still
/// fails, because both steps agree with each other but not with it.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check<F: Field<f64> + Clone>(
    field: &F,
    problem: &InrProblem,
    items: &[BatchItem],
    cfg: &InrTrainConfig,
    tv_corr: f64,
    n: usize,
    h: f64,
    seed: u64,
) -> GradCheck {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut grad = vec![0.0; field.n_params()];
    batch_loss(field, problem, items, cfg, tv_corr, Some(&mut grad));
    let gmax = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    let candidates: Vec<usize> = (0..grad.len()).filter(|&k| grad[k].abs() >= 1e-3 * gmax).collect();
    let mut probe = field.clone();
    let mut fd = |k: usize, step: f64| {
        let orig = probe.params()[k];
        probe.params_mut()[k] = orig + step;
        let up = batch_loss(&probe, problem, items, cfg, tv_corr, None).total;
        probe.params_mut()[k] = orig - step;
        let down = batch_loss(&probe, problem, items, cfg, tv_corr, None).total;
        probe.params_mut()[k] = orig;
        (up - down) / (2.0 * step)
    };
    let mut out = GradCheck { max_rel_error: 0.0, checked: 0, rejected: 0 };
    if candidates.is_empty() {
        return out;
    }
    while out.checked < n && out.rejected < 20 * n {
        let k = candidates[rng.random_range(0..candidates.len())];
        let (coarse, fine) = (fd(k, h), fd(k, 0.5 * h));
        if (coarse - fine).abs() > 1e-4 * coarse.abs().max(fine.abs()) {
            out.rejected += 1;
            continue;
        }
        let err = (fine - grad[k]).abs() / fine.abs().max(grad[k].abs());
        out.max_rel_error = out.max_rel_error.max(err);
        out.checked += 1;
    }
    out
}
