//! simulate → reconstruct → evaluate, and the sweep that chains them.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};

use pact_core::forward::ForwardConfig;
use pact_core::inr::{inr_train_with, render_image, EpochRecord, InrModel};
use pact_core::mb::{mb_reconstruct, LossRecord};
use pact_core::metrics::{evaluate as evaluate_metrics, MetricSet, RegionSpec};
use pact_core::phantom::{render_phantom, simulate_acquisition, simulate_supersampled, PhantomSpec};
use pact_core::ubp::ubp_reconstruct;
use pact_core::{Image, RoiCircle, Sinogram};

use crate::config::{Method, RunConfig};
use crate::error::{PactError, Result};
use crate::format;
use crate::preview::write_png;
use crate::report::{metrics_table, write_inr_trace, write_mb_trace, write_metrics_csv, MetricsRow};

pub const PHANTOM_FILE: &str = "phantom.img";
pub const SINOGRAM_FILE: &str = "sinogram.sgm";
pub const IMAGE_FILE: &str = "image.img";
pub const PREVIEW_FILE: &str = "preview.png";
pub const TRACE_FILE: &str = "trace.csv";
pub const MODEL_FILE: &str = "model.inr";
pub const METRICS_FILE: &str = "metrics.csv";
/// Wall-clock timings; kept out of the CSVs so those stay reproducible.
pub const TIMINGS_FILE: &str = "timings.txt";

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PactError::io(dir, e))
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub spec: PhantomSpec,
    pub phantom: Image,
    pub sinogram: Sinogram,
}

/// Renders the phantom for `seed` and acquires it on the full ring.
pub fn simulate(cfg: &RunConfig, seed: u64) -> Result<Simulated> {
    let fwd = cfg.forward()?;
    let spec = cfg.phantom.resolve(&fwd.grid, seed);
    let phantom = render_phantom(&spec, &fwd.grid)?;
    let acq = match cfg.supersample {
        Some(f) if f > 1 => simulate_supersampled(&spec, &fwd, f, cfg.noise(seed))?,
        _ => simulate_acquisition(&phantom, &fwd, cfg.noise(seed))?,
    };
    Ok(Simulated { spec, phantom, sinogram: acq.sinogram })
}

pub fn write_simulation(dir: &Path, sim: &Simulated) -> Result<()> {
    create_dir(dir)?;
    format::save_image(&dir.join(PHANTOM_FILE), &sim.phantom)?;
    format::save_sinogram(&dir.join(SINOGRAM_FILE), &sim.sinogram)?;
    write_png(&dir.join(PREVIEW_FILE), &sim.phantom)
}

#[derive(Debug, Clone)]
pub enum Trace {
    None,
    Mb(Vec<LossRecord>),
    Inr(Vec<EpochRecord>),
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub method: Method,
    pub projections: usize,
    pub image: Image,
    pub trace: Trace,
    pub model: Option<InrModel<f32>>,
    pub seconds: f64,
}

/// Forward model for an already subsampled sinogram, with the grid, ROI and
/// `M` of `cfg`.
pub fn forward_for(cfg: &RunConfig, s: &Sinogram) -> Result<ForwardConfig> {
    let mut fwd = ForwardConfig::for_sinogram(s, cfg.image_grid()?)?;
    if let Some(r) = cfg.acquisition.roi_radius_m {
        fwd = fwd.with_roi(RoiCircle::new(r))?;
    }
    fwd.m_arc_points = match cfg.acquisition.m_arc_points {
        Some(m) => m,
        None => fwd.default_m()?,
    };
    fwd.validate()?;
    Ok(fwd)
}

/// Keeps `n_proj` detectors of `full` and reconstructs with `method`.
pub fn reconstruct(
    cfg: &RunConfig,
    method: Method,
    n_proj: usize,
    seed: u64,
    full: &Sinogram,
) -> Result<Reconstruction> {
    let s = full.subsample_detectors(n_proj)?;
    let fwd = forward_for(cfg, &s)?;
    let t = Instant::now();
    let (image, trace, model) = match method {
        Method::Ubp => (ubp_reconstruct(&s, &cfg.ubp, &fwd.grid)?, Trace::None, None),
        Method::Mb => {
            let out = mb_reconstruct(&s, &cfg.mb, &fwd)?;
            (out.image, Trace::Mb(out.trace), None)
        }
        Method::Inr => {
            let out = inr_train_with(&s, &fwd, &cfg.inr_for_seed(seed), |r| {
                log::debug!(
                    "inr epoch {} loss {:.4e} (data {:.4e}, tv {:.4e}) gain {:.3e}",
                    r.epoch,
                    r.total,
                    r.data,
                    r.tv,
                    r.gain
                );
            })?;
            (render_image(&out.model, &fwd.grid)?, Trace::Inr(out.trace), Some(out.model))
        }
    };
    let seconds = t.elapsed().as_secs_f64();
    info!("{method} with {n_proj} projections: {seconds:.1} s");
    Ok(Reconstruction { method, projections: n_proj, image, trace, model, seconds })
}

pub fn write_reconstruction(dir: &Path, rec: &Reconstruction) -> Result<()> {
    create_dir(dir)?;
    format::save_image(&dir.join(IMAGE_FILE), &rec.image)?;
    write_png(&dir.join(PREVIEW_FILE), &rec.image)?;
    match &rec.trace {
        Trace::None => {}
        Trace::Mb(t) => write_mb_trace(&dir.join(TRACE_FILE), t)?,
        Trace::Inr(t) => write_inr_trace(&dir.join(TRACE_FILE), t)?,
    }
    if let Some(m) = &rec.model {
        format::save_inr(&dir.join(MODEL_FILE), m)?;
    }
    Ok(())
}

/// Image scoring convention for every method: negatives clipped, then the
/// range mapped affinely onto `[0, 1]` like the phantom. For images whose
/// minimum is already zero (clipped UBP, MB) this is division by the maximum;
/// it also removes the sigmoid floor of INR renders.
pub fn scoring_image(img: &Image) -> Image {
    img.normalized().min_max_normalized()
}

/// Metrics of `image` (after [`scoring_image`]). Without `gt` only SNR/CNR
/// are computed, with a warning.
pub fn evaluate(image: &Image, gt: Option<&Image>, regions: Option<&RegionSpec>) -> Result<MetricSet> {
    if gt.is_none() {
        warn!("no ground truth: SSIM, PSNR and MSE skipped, reporting SNR/CNR only");
    }
    if regions.is_none() {
        warn!("no metric regions: SNR and CNR skipped");
    }
    let gt = gt.map(scoring_image);
    Ok(evaluate_metrics(&scoring_image(image), gt.as_ref(), regions)?)
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

pub fn recon_dir(out: &Path, seed: u64, n_proj: usize, method: Method) -> PathBuf {
    seed_dir(out, seed).join(format!("proj_{n_proj}")).join(method.name())
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<MetricsRow>,
    /// MB loss traces keyed by (seed, projections), in run order.
    pub mb_traces: Vec<(u64, usize, Vec<LossRecord>)>,
}

/// Every seed × projection count × method. Writes all artifacts under
/// `cfg.out_dir`, plus the resolved config and `metrics.csv`.
pub fn sweep(cfg: &RunConfig) -> Result<SweepResult> {
    let out = &cfg.out_dir;
    create_dir(out)?;
    cfg.save(out)?;
    let mut rows = Vec::new();
    let mut mb_traces = Vec::new();
    let mut timings = String::new();
    for &seed in &cfg.seeds {
        let sim = simulate(cfg, seed)?;
        write_simulation(&seed_dir(out, seed), &sim)?;
        for &n_proj in &cfg.projections {
            for &method in &cfg.methods {
                let rec = reconstruct(cfg, method, n_proj, seed, &sim.sinogram)?;
                write_reconstruction(&recon_dir(out, seed, n_proj, method), &rec)?;
                let metrics = evaluate(&rec.image, Some(&sim.phantom), sim.spec.regions.as_ref())?;
                timings.push_str(&format!("seed {seed} projections {n_proj} {method}: {:.3} s\n", rec.seconds));
                if let Trace::Mb(t) = rec.trace {
                    mb_traces.push((seed, n_proj, t));
                }
                rows.push(MetricsRow { seed, projections: Some(n_proj), method: Some(method), metrics });
            }
        }
    }
    write_metrics_csv(&out.join(METRICS_FILE), &rows)?;
    let tpath = out.join(TIMINGS_FILE);
    fs::write(&tpath, timings).map_err(|e| PactError::io(tpath, e))?;
    info!("metrics:\n{}", metrics_table(&rows));
    Ok(SweepResult { rows, mb_traces })
}
