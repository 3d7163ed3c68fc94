//! Multiresolution hash encoding of 2-D coordinates.
//!
//! Level `l` overlays a grid of `N_l × N_l` cells on the unit square, with
//! `N_l` growing geometrically from the base to the finest resolution. Each
//! grid vertex owns a feature vector: directly indexed when the level's
//! `(N_l + 1)²` vertices fit in the table, otherwise through the spatial hash
//! `(x·1 ⊕ y·2654435761) mod T`. A point's encoding is the bilinear blend of
//! its cell's four corner features, concatenated over levels.

use alloc::format;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::real::Real;
use crate::error::{Error, Result};

const PRIME_Y: u32 = 2_654_435_761;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct HashEncodingConfig {
    pub n_levels: usize,
    pub features_per_level: usize,
    pub table_size_log2: u32,
    pub base_resolution: u32,
    pub finest_resolution: u32,
}

impl Default for HashEncodingConfig {
    fn default() -> Self {
        HashEncodingConfig {
            n_levels: 16,
            features_per_level: 2,
            table_size_log2: 19,
            base_resolution: 16,
            finest_resolution: 512,
        }
    }
}

impl HashEncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_levels == 0 || self.features_per_level == 0 {
            return Err(Error::Config("hash encoding needs at least one level and one feature".into()));
        }
        if !(1..=30).contains(&self.table_size_log2) {
            return Err(Error::Config(format!("table_size_log2 {} outside 1..=30", self.table_size_log2)));
        }
        if self.base_resolution == 0 || self.finest_resolution < self.base_resolution {
            return Err(Error::Config(format!(
                "resolutions must satisfy 0 < base ({}) <= finest ({})",
                self.base_resolution, self.finest_resolution
            )));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.n_levels * self.features_per_level
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HashLevel {
    pub resolution: u32,
    /// Number of feature vectors in this level's table.
    pub entries: usize,
    /// Offset of the table in the flat parameter vector.
    pub offset: usize,
    pub direct: bool,
}

impl HashLevel {
    /// Table slot of vertex `(x, y)`.
    #[inline(always)]
    pub fn slot(&self, x: u32, y: u32) -> usize {
        if self.direct {
            y as usize * (self.resolution as usize + 1) + x as usize
        } else {
            ((x ^ y.wrapping_mul(PRIME_Y)) as usize) & (self.entries - 1)
        }
    }

    /// Cell corner slots and bilinear weights at `p ∈ [0,1]²`, corners in
    /// order `(0,0), (1,0), (0,1), (1,1)`.
    #[inline(always)]
    pub fn corners(&self, p: [f64; 2]) -> ([usize; 4], [f64; 4]) {
        let n = self.resolution;
        let locate = |u: f64| {
            // Non-negative, so truncation is floor.
            let x = u.clamp(0.0, 1.0) * n as f64;
            let i = (x as u32).min(n - 1);
            (i, x - i as f64)
        };
        let (ix, fx) = locate(p[0]);
        let (iy, fy) = locate(p[1]);
        (
            [self.slot(ix, iy), self.slot(ix + 1, iy), self.slot(ix, iy + 1), self.slot(ix + 1, iy + 1)],
            [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
        )
    }
}

/// Level layout of a hash encoding; the tables themselves live in the
/// model's flat parameter vector starting at offset 0.
#[derive(Debug, Clone, PartialEq)]
pub struct HashEncoding {
    pub cfg: HashEncodingConfig,
    pub levels: Vec<HashLevel>,
    pub n_params: usize,
}

/// Corner slots (absolute parameter offsets) and weights for a batch of
/// points, kept for the backward pass.
#[derive(Debug, Default, Clone)]
pub struct EncodingCache<T> {
    pub slots: Vec<u32>,
    pub weights: Vec<T>,
}

impl HashEncoding {
    pub fn new(cfg: &HashEncodingConfig) -> Result<Self> {
        cfg.validate()?;
        let table = 1usize << cfg.table_size_log2;
        let growth = if cfg.n_levels > 1 {
            ((cfg.finest_resolution as f64).ln() - (cfg.base_resolution as f64).ln()) / (cfg.n_levels - 1) as f64
        } else {
            0.0
        };
        let mut levels = Vec::with_capacity(cfg.n_levels);
        let mut offset = 0;
        for l in 0..cfg.n_levels {
            let res = ((cfg.base_resolution as f64) * (growth * l as f64).exp() + 1e-9).floor() as u32;
            let res = res.clamp(cfg.base_resolution, cfg.finest_resolution);
            let dense = (res as usize + 1) * (res as usize + 1);
            let direct = dense <= table;
            let entries = if direct { dense } else { table };
            levels.push(HashLevel { resolution: res, entries, offset, direct });
            offset += entries * cfg.features_per_level;
        }
        if offset > u32::MAX as usize {
            return Err(Error::Config(format!("hash tables too large: {offset} parameters")));
        }
        Ok(HashEncoding { cfg: cfg.clone(), levels, n_params: offset })
    }

    pub fn output_dim(&self) -> usize {
        self.cfg.output_dim()
    }

    /// Encodes `pts` into `out` (`pts.len() × output_dim`, row-major).
    pub fn encode<T: Real>(&self, params: &[T], pts: &[[f64; 2]], out: &mut [T], cache: &mut EncodingCache<T>) {
        let f = self.cfg.features_per_level;
        let dim = self.output_dim();
        let nl = self.levels.len();
        let n = pts.len();
        cache.slots.resize(n * nl * 4, 0);
        cache.weights.resize(n * nl * 4, T::zero());
        for (pi, (p, row)) in pts.iter().zip(out.chunks_exact_mut(dim)).enumerate() {
            for (l, level) in self.levels.iter().enumerate() {
                let (slots, w) = level.corners(*p);
                let at = (pi * nl + l) * 4;
                let cs = &mut cache.slots[at..at + 4];
                let cw = &mut cache.weights[at..at + 4];
                for c in 0..4 {
                    cs[c] = (level.offset + slots[c] * f) as u32;
                    cw[c] = T::of(w[c]);
                }
                let feat = &mut row[l * f..(l + 1) * f];
                if f == 2 {
                    let (mut a, mut b) = (T::zero(), T::zero());
                    for c in 0..4 {
                        let base = cs[c] as usize;
                        a += cw[c] * params[base];
                        b += cw[c] * params[base + 1];
                    }
                    feat[0] = a;
                    feat[1] = b;
                } else {
                    feat.iter_mut().for_each(|v| *v = T::zero());
                    for c in 0..4 {
                        let base = cs[c] as usize;
                        for (k, v) in feat.iter_mut().enumerate() {
                            *v += cw[c] * params[base + k];
                        }
                    }
                }
            }
        }
    }

    /// Scatters `d_out` (gradient w.r.t. the encoding) into `grad`.
    pub fn backward<T: Real>(&self, d_out: &[T], cache: &EncodingCache<T>, grad: &mut [T]) {
        let f = self.cfg.features_per_level;
        let dim = self.output_dim();
        let nl = self.levels.len();
        for (pi, drow) in d_out.chunks_exact(dim).enumerate() {
            for l in 0..nl {
                let dfeat = &drow[l * f..(l + 1) * f];
                let at = (pi * nl + l) * 4;
                let cs = &cache.slots[at..at + 4];
                let cw = &cache.weights[at..at + 4];
                if f == 2 {
                    let (da, db) = (dfeat[0], dfeat[1]);
                    for c in 0..4 {
                        let base = cs[c] as usize;
                        grad[base] += cw[c] * da;
                        grad[base + 1] += cw[c] * db;
                    }
                } else {
                    for c in 0..4 {
                        let base = cs[c] as usize;
                        for (j, &g) in dfeat.iter().enumerate() {
                            grad[base + j] += cw[c] * g;
                        }
                    }
                }
            }
        }
    }
}
