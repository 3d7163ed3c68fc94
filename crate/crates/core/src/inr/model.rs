//! The continuous image model `H(x, y) = sigmoid(MLP(hash(x, y)))`, plus the
//! [`Field`] abstraction the trainer works against.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::hash::{EncodingCache, HashEncoding, HashEncodingConfig};
use super::mlp::{Mlp, MlpCache, MlpConfig};
use super::real::Real;
use crate::data::Image;
use crate::error::Result;
use crate::geometry::{ImageGrid, Point};

/// Points per batch evaluation.
pub const EVAL_CHUNK: usize = 1024;

/// A trainable scalar field on the unit square.
pub trait Field<T: Real>: Sync {
    type Cache: Default + Send;

    fn params(&self) -> &[T];
    fn params_mut(&mut self) -> &mut [T];

    fn n_params(&self) -> usize {
        self.params().len()
    }

    /// Values at normalized points `pts ∈ [0,1]²`.
    fn eval(&self, pts: &[[f64; 2]], out: &mut [T], cache: &mut Self::Cache);

    /// After `eval(pts, …, cache)`: `grad += Σ_k d_out[k] · ∂out[k]/∂θ`.
    fn backward(&self, pts: &[[f64; 2]], d_out: &[T], cache: &mut Self::Cache, grad: &mut [T]);
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ModelConfig {
    pub hash: HashEncodingConfig,
    pub mlp: MlpConfig,
}

/// Hash tables and MLP weights in one flat parameter vector, tables first.
#[derive(Debug, Clone, PartialEq)]
pub struct InrModel<T> {
    cfg: ModelConfig,
    /// The unit square of the encoding spans this grid's outer edges.
    domain: ImageGrid,
    hash: HashEncoding,
    mlp: Mlp,
    params: Vec<T>,
}

#[derive(Debug, Default, Clone)]
pub struct ModelCache<T> {
    enc: EncodingCache<T>,
    x: Vec<T>,
    mlp: MlpCache<T>,
    d_x: Vec<T>,
}

impl<T: Real> InrModel<T> {
    /// Fresh model: tables uniform in `±1e-4`, MLP per [`Mlp::init`].
    pub fn new(cfg: &ModelConfig, domain: ImageGrid, seed: u64) -> Result<Self> {
        let mut model = Self::zeroed(cfg, domain)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_hash = model.hash.n_params;
        for v in &mut model.params[..n_hash] {
            *v = T::of((2.0 * rng.random::<f64>() - 1.0) * 1e-4);
        }
        let mlp = model.mlp.clone();
        mlp.init(&mut model.params, || rng.random::<f64>());
        Ok(model)
    }

    /// Model with every parameter zero; used when loading checkpoints.
    pub fn zeroed(cfg: &ModelConfig, domain: ImageGrid) -> Result<Self> {
        let hash = HashEncoding::new(&cfg.hash)?;
        let mlp = Mlp::new(hash.output_dim(), &cfg.mlp, hash.n_params)?;
        let n = hash.n_params + mlp.n_params;
        Ok(InrModel { cfg: cfg.clone(), domain, hash, mlp, params: vec![T::zero(); n] })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn domain(&self) -> &ImageGrid {
        &self.domain
    }

    pub fn encoding(&self) -> &HashEncoding {
        &self.hash
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    /// Number of hash-table parameters (they come first).
    pub fn n_hash_params(&self) -> usize {
        self.hash.n_params
    }

    /// Same model in another precision.
    pub fn cast<U: Real>(&self) -> InrModel<U> {
        InrModel {
            cfg: self.cfg.clone(),
            domain: self.domain,
            hash: self.hash.clone(),
            mlp: self.mlp.clone(),
            params: self.params.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    /// `H` at world points.
    pub fn query(&self, points: &[Point]) -> Vec<T> {
        let pts: Vec<[f64; 2]> = points.iter().map(|&p| self.domain.normalize(p)).collect();
        eval_all(self, &pts)
    }
}

impl<T: Real> Field<T> for InrModel<T> {
    type Cache = ModelCache<T>;

    fn params(&self) -> &[T] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn eval(&self, pts: &[[f64; 2]], out: &mut [T], cache: &mut ModelCache<T>) {
        let n = pts.len();
        cache.x.resize(n * self.hash.output_dim(), T::zero());
        self.hash.encode(&self.params, pts, &mut cache.x, &mut cache.enc);
        self.mlp.forward(&self.params, &cache.x, n, out, &mut cache.mlp);
    }

    fn backward(&self, pts: &[[f64; 2]], d_out: &[T], cache: &mut ModelCache<T>, grad: &mut [T]) {
        let n = pts.len();
        cache.d_x.resize(n * self.hash.output_dim(), T::zero());
        self.mlp.backward(&self.params, &cache.x, n, d_out, &mut cache.mlp, grad, &mut cache.d_x);
        self.hash.backward(&cache.d_x[..n * self.hash.output_dim()], &cache.enc, grad);
    }
}

/// Evaluates `field` at every point, in chunks.
pub fn eval_all<T: Real, F: Field<T>>(field: &F, pts: &[[f64; 2]]) -> Vec<T> {
    let mut out = vec![T::zero(); pts.len()];
    let mut cache = F::Cache::default();
    for (p, o) in pts.chunks(EVAL_CHUNK).zip(out.chunks_mut(EVAL_CHUNK)) {
        field.eval(p, o, &mut cache);
    }
    out
}

/// Rasterizes the model at the pixel centers of `grid`.
pub fn render_image<T: Real>(model: &InrModel<T>, grid: &ImageGrid) -> Result<Image> {
    let values = model.query(&grid.pixel_centers());
    Image::new(*grid, values.iter().map(|v| v.f64() as f32).collect())
}

/// Field with the same value everywhere and no parameters.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField<T>(pub T);

impl<T: Real> Field<T> for ConstantField<T> {
    type Cache = ();

    fn params(&self) -> &[T] {
        &[]
    }

    fn params_mut(&mut self) -> &mut [T] {
        &mut []
    }

    fn eval(&self, _pts: &[[f64; 2]], out: &mut [T], _cache: &mut ()) {
        out.iter_mut().for_each(|v| *v = self.0);
    }

    fn backward(&self, _pts: &[[f64; 2]], _d_out: &[T], _cache: &mut (), _grad: &mut [T]) {}
}

/// Constant field whose value is its single trainable parameter.
#[derive(Debug, Clone, Copy)]
pub struct ScalarField<T>(pub [T; 1]);

impl<T: Real> Field<T> for ScalarField<T> {
    type Cache = ();

    fn params(&self) -> &[T] {
        &self.0
    }

    fn params_mut(&mut self) -> &mut [T] {
        &mut self.0
    }

    fn eval(&self, _pts: &[[f64; 2]], out: &mut [T], _cache: &mut ()) {
        out.iter_mut().for_each(|v| *v = self.0[0]);
    }

    fn backward(&self, _pts: &[[f64; 2]], d_out: &[T], _cache: &mut (), grad: &mut [T]) {
        grad[0] += d_out.iter().copied().sum::<T>();
    }
}
