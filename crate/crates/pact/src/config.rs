//! TOML run configuration. Unknown keys are rejected; the resolved config of
//! every run is written next to its outputs.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use pact_core::forward::ForwardConfig;
use pact_core::inr::InrConfig;
use pact_core::mb::MbConfig;
use pact_core::metrics::RegionSpec;
use pact_core::phantom::{NoiseSpec, PhantomSpec, Shape};
use pact_core::ubp::UbpConfig;
use pact_core::{ImageGrid, RingGeometry, RoiCircle};

use crate::error::{PactError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ubp,
    Mb,
    Inr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ubp, Method::Mb, Method::Inr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ubp => "ubp",
            Method::Mb => "mb",
            Method::Inr => "inr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}; valid methods: ubp, mb, inr"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub ring_radius_m: f64,
    pub n_elements: usize,
    pub fs_hz: f64,
    pub c_mps: f64,
    pub n_samples: usize,
    pub t0_s: f64,
    /// Points per arc; defaults to one per pixel pitch of arc length.
    pub m_arc_points: Option<usize>,
    /// Forward-model ROI radius; defaults to the circle around the grid.
    pub roi_radius_m: Option<f64>,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            ring_radius_m: 0.04,
            n_elements: 256,
            fs_hz: 20e6,
            c_mps: 1500.0,
            n_samples: 1024,
            t0_s: 0.0,
            m_arc_points: None,
            roi_radius_m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub pixel_m: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { nx: 512, ny: 512, pixel_m: 0.05e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Vessel,
    Star,
    Heart,
    Delta,
    Disk,
}

/// A preset (sized to the grid; the vessel tree is drawn from the run seed)
/// and/or explicit shapes. `regions` overrides the preset's default regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub preset: Option<Preset>,
    pub shapes: Vec<Shape>,
    pub regions: Option<RegionSpec>,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig { preset: Some(Preset::Vessel), shapes: Vec::new(), regions: None }
    }
}

impl PhantomConfig {
    pub fn resolve(&self, grid: &ImageGrid, seed: u64) -> PhantomSpec {
        let mut spec = match self.preset {
            None => PhantomSpec::empty(),
            Some(Preset::Vessel) => PhantomSpec::vessel(grid, seed),
            Some(Preset::Star) => PhantomSpec::star(grid),
            Some(Preset::Heart) => PhantomSpec::heart(grid),
            Some(Preset::Delta) => PhantomSpec::delta(grid),
            Some(Preset::Disk) => PhantomSpec::disk(grid.center, 0.3 * grid.half_width_x().min(grid.half_width_y())),
        };
        spec.shapes.extend(self.shapes.iter().cloned());
        if self.regions.is_some() {
            spec.regions = self.regions;
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Each seed draws the phantom (vessel preset), the noise and the INR
    /// initialization; `inr.train.seed` is replaced by it.
    pub seeds: Vec<u64>,
    pub projections: Vec<usize>,
    pub methods: Vec<Method>,
    /// Worker threads; `None` uses all cores. Results do not depend on it.
    pub threads: Option<usize>,
    /// Per-channel SNR of added white noise; `None` for noiseless data.
    pub noise_snr_db: Option<f64>,
    /// Generate data on a grid this many times finer (`None`: same grid).
    pub supersample: Option<usize>,
    pub acquisition: AcquisitionConfig,
    pub grid: GridConfig,
    pub phantom: PhantomConfig,
    pub ubp: UbpConfig,
    pub mb: MbConfig,
    pub inr: InrConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("pact-out"),
            seeds: vec![0],
            projections: vec![32, 64, 128, 256],
            methods: Method::ALL.to_vec(),
            threads: None,
            noise_snr_db: None,
            supersample: None,
            acquisition: AcquisitionConfig::default(),
            grid: GridConfig::default(),
            phantom: PhantomConfig::default(),
            ubp: UbpConfig::default(),
            mb: MbConfig::default(),
            inr: InrConfig::default(),
        }
    }
}

/// Name of the resolved config written next to outputs.
pub const RESOLVED_NAME: &str = "config.toml";

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| PactError::Config { path: path.to_path_buf(), message: format!("cannot read: {e}") })?;
        Self::parse(&text).map_err(|message| PactError::Config { path: path.to_path_buf(), message })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string().trim_end().replace('\n', " "))?;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RESOLVED_NAME);
        fs::write(&path, self.to_toml()).map_err(|e| PactError::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(PactError::Usage(m));
        if self.seeds.is_empty() || self.projections.is_empty() || self.methods.is_empty() {
            return usage("seeds, projections and methods must be non-empty".into());
        }
        if let Some(&n) = self.projections.iter().find(|&&n| n == 0 || !self.acquisition.n_elements.is_multiple_of(n)) {
            return usage(format!("{n} projections do not evenly divide {} detectors", self.acquisition.n_elements));
        }
        if self.threads == Some(0) {
            return usage("threads must be positive".into());
        }
        if self.supersample == Some(0) {
            return usage("supersample must be positive".into());
        }
        if self.noise_snr_db.is_some_and(|v| !v.is_finite()) {
            return usage("noise_snr_db must be finite".into());
        }
        self.mb.validate()?;
        self.inr.train.validate()?;
        self.inr.model.hash.validate()?;
        self.inr.model.mlp.validate()?;
        self.forward()?;
        Ok(())
    }

    pub fn image_grid(&self) -> Result<ImageGrid> {
        Ok(ImageGrid::new(self.grid.nx, self.grid.ny, self.grid.pixel_m)?)
    }

    /// Full-ring forward model.
    pub fn forward(&self) -> Result<ForwardConfig> {
        let a = &self.acquisition;
        let ring = RingGeometry::uniform(a.ring_radius_m, a.n_elements)?;
        let mut fwd = ForwardConfig::new(ring, self.image_grid()?, a.fs_hz, a.c_mps, a.n_samples)?;
        fwd.t0_s = a.t0_s;
        if let Some(r) = a.roi_radius_m {
            fwd = fwd.with_roi(RoiCircle::new(r))?;
        }
        fwd.m_arc_points = match a.m_arc_points {
            Some(m) => m,
            None => fwd.default_m()?,
        };
        fwd.validate()?;
        Ok(fwd)
    }

    pub fn noise(&self, seed: u64) -> Option<NoiseSpec> {
        self.noise_snr_db.map(|snr_db| NoiseSpec { snr_db, seed })
    }

    pub fn inr_for_seed(&self, seed: u64) -> InrConfig {
        let mut c = self.inr.clone();
        c.train.seed = seed;
        c
    }
}
