//! Invertible sliced layers and their composition into a normalizing flow.
//!
//! A layer moves samples only inside the span of its slice basis:
//! `x' = x + A (Ψ(Aᵀx) - Aᵀx)`, so the orthogonal complement is untouched and
//! the Jacobian determinant is the product of the 1D map derivatives.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Result, SinfError};
use crate::patch::PatchLayout;
use crate::preprocess::Preprocess;
use crate::rng;
use crate::sliced::SliceBasis;
use crate::spline::RegularizedMap;

/// A slice basis and one monotone map per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceTransform {
    basis: SliceBasis,
    maps: Vec<RegularizedMap>,
}

impl SliceTransform {
    pub fn new(basis: SliceBasis, maps: Vec<RegularizedMap>) -> Result<Self> {
        if maps.len() != basis.k() {
            return Err(SinfError::InvalidArgument(format!(
                "need one map per axis: K={}, got {} maps",
                basis.k(),
                maps.len()
            )));
        }
        Ok(Self { basis, maps })
    }

    pub fn basis(&self) -> &SliceBasis {
        &self.basis
    }

    pub fn maps(&self) -> &[RegularizedMap] {
        &self.maps
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Applies the transform to every row; returns the per-row log-Jacobian.
    pub fn forward(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
        let a = self.basis.matrix();
        let proj = x * a;
        let mut delta = DMatrix::zeros(proj.nrows(), proj.ncols());
        let mut log_jac = vec![0.0; x.nrows()];
        for (k, map) in self.maps.iter().enumerate() {
            if map.is_identity() {
                continue;
            }
            for i in 0..proj.nrows() {
                let v = proj[(i, k)];
                delta[(i, k)] = map.forward(v) - v;
                log_jac[i] += map.derivative(v).ln();
            }
        }
        (x + delta * a.transpose(), log_jac)
    }

    /// Inverts the transform; the log-Jacobian returned is that of the
    /// forward map evaluated at the recovered input.
    pub fn inverse(&self, y: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
        let a = self.basis.matrix();
        let proj = y * a;
        let mut delta = DMatrix::zeros(proj.nrows(), proj.ncols());
        let mut log_jac = vec![0.0; y.nrows()];
        for (k, map) in self.maps.iter().enumerate() {
            if map.is_identity() {
                continue;
            }
            for i in 0..proj.nrows() {
                let v = proj[(i, k)];
                let u = map.inverse(v);
                delta[(i, k)] = u - v;
                log_jac[i] += map.derivative(u).ln();
            }
        }
        (y + delta * a.transpose(), log_jac)
    }
}

/// One iteration of the flow: a single transform over the whole vector, or
/// one transform per patch of a [`PatchLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct SinfLayer {
    transforms: Vec<SliceTransform>,
    patch: Option<PatchLayout>,
}

impl SinfLayer {
    pub fn new(transform: SliceTransform) -> Self {
        Self {
            transforms: vec![transform],
            patch: None,
        }
    }

    pub fn patched(layout: PatchLayout, transforms: Vec<SliceTransform>) -> Result<Self> {
        if transforms.len() != layout.num_patches() {
            return Err(SinfError::InvalidArgument(format!(
                "layout has {} patches but {} transforms were given",
                layout.num_patches(),
                transforms.len()
            )));
        }
        if let Some(t) = transforms.iter().find(|t| t.dim() != layout.patch_dim()) {
            return Err(SinfError::DimensionMismatch {
                expected: layout.patch_dim(),
                got: t.dim(),
            });
        }
        Ok(Self {
            transforms,
            patch: Some(layout),
        })
    }

    /// A layer whose maps are all the identity.
    pub fn identity(d: usize) -> Self {
        let maps = (0..d).map(|_| RegularizedMap::identity()).collect();
        Self::new(SliceTransform {
            basis: SliceBasis::identity(d),
            maps,
        })
    }

    pub fn transforms(&self) -> &[SliceTransform] {
        &self.transforms
    }

    pub fn patch(&self) -> Option<&PatchLayout> {
        self.patch.as_ref()
    }

    pub fn dim(&self) -> usize {
        match &self.patch {
            Some(layout) => layout.dim(),
            None => self.transforms[0].dim(),
        }
    }

    fn check(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(SinfError::DimensionMismatch {
                expected: self.dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn apply(
        &self,
        x: &DMatrix<f64>,
        f: impl Fn(&SliceTransform, &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>),
    ) -> Result<(DMatrix<f64>, Vec<f64>)> {
        self.check(x)?;
        match &self.patch {
            None => Ok(f(&self.transforms[0], x)),
            Some(layout) => {
                let mut out = x.clone();
                let mut log_jac = vec![0.0; x.nrows()];
                for (p, t) in self.transforms.iter().enumerate() {
                    let block = layout.gather_one(x, p)?;
                    let (moved, lj) = f(t, &block);
                    layout.scatter_one(&mut out, p, &moved)?;
                    for (acc, v) in log_jac.iter_mut().zip(lj) {
                        *acc += v;
                    }
                }
                Ok((out, log_jac))
            }
        }
    }

    /// Forward map and per-row log-Jacobian (summed over patches).
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
        self.apply(x, SliceTransform::forward)
    }

    pub fn inverse(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.inverse_with_log_jacobian(y)?.0)
    }

    /// Inverse map plus the forward log-Jacobian at the recovered points.
    pub fn inverse_with_log_jacobian(&self, y: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
        self.apply(y, SliceTransform::inverse)
    }
}

/// Which way the layers were trained.
///
/// `Sig` layers push latent Gaussian samples toward the data; `Gis` layers
/// push data toward the latent Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sig,
    Gis,
}

/// Log-density of one point, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensityReport {
    pub logp: f64,
    pub log_jacobian: f64,
    pub base_logp: f64,
}

/// Standard-normal log-density of a vector.
pub fn standard_normal_logpdf(z: &[f64]) -> f64 {
    let sq: f64 = z.iter().map(|v| v * v).sum();
    -0.5 * z.len() as f64 * (2.0 * PI).ln() - 0.5 * sq
}

/// A stack of layers over a standard-normal base distribution.
///
/// Layers are stored in training order; `direction` decides which way they
/// are traversed for density evaluation and sampling. SIG flows support
/// density evaluation, but their log-densities are typically poor.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    layers: Vec<SinfLayer>,
    direction: Direction,
    dim: usize,
    image_shape: Option<(usize, usize, usize)>,
    preprocess: Preprocess,
}

impl Flow {
    pub fn new(dim: usize, direction: Direction) -> Self {
        Self {
            layers: Vec::new(),
            direction,
            dim,
            image_shape: None,
            preprocess: Preprocess::Identity,
        }
    }

    pub fn with_image_shape(mut self, shape: Option<(usize, usize, usize)>) -> Self {
        self.image_shape = shape;
        self
    }

    pub fn with_preprocess(mut self, preprocess: Preprocess) -> Self {
        self.preprocess = preprocess;
        self
    }

    pub fn set_preprocess(&mut self, preprocess: Preprocess) {
        self.preprocess = preprocess;
    }

    pub fn push(&mut self, layer: SinfLayer) -> Result<()> {
        if layer.dim() != self.dim {
            return Err(SinfError::DimensionMismatch {
                expected: self.dim,
                got: layer.dim(),
            });
        }
        self.layers.push(layer);
        Ok(())
    }

    pub fn truncate(&mut self, len: usize) {
        self.layers.truncate(len);
    }

    pub fn layers(&self) -> &[SinfLayer] {
        &self.layers
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.image_shape
    }

    pub fn preprocess(&self) -> Preprocess {
        self.preprocess
    }

    fn check(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.dim {
            return Err(SinfError::DimensionMismatch {
                expected: self.dim,
                got: x.ncols(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SinfError::InvalidData("non-finite input".into()));
        }
        Ok(())
    }

    /// Maps data rows to latent space, accumulating `ln |det ∂z/∂x|` per row
    /// (including the preprocessing Jacobian).
    pub fn to_latent(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
        self.check(x)?;
        let mut log_jac = vec![0.0; x.nrows()];
        let mut z = x.clone();
        if self.preprocess != Preprocess::Identity {
            for (i, acc) in log_jac.iter_mut().enumerate() {
                for j in 0..self.dim {
                    let (v, lj) = self.preprocess.forward(x[(i, j)])?;
                    z[(i, j)] = v;
                    *acc += lj;
                }
            }
        }
        match self.direction {
            Direction::Gis => {
                for layer in &self.layers {
                    let (next, lj) = layer.forward(&z)?;
                    z = next;
                    log_jac.iter_mut().zip(lj).for_each(|(a, v)| *a += v);
                }
            }
            Direction::Sig => {
                for layer in self.layers.iter().rev() {
                    let (prev, lj) = layer.inverse_with_log_jacobian(&z)?;
                    z = prev;
                    log_jac.iter_mut().zip(lj).for_each(|(a, v)| *a -= v);
                }
            }
        }
        Ok((z, log_jac))
    }

    /// Maps latent rows back to data space.
    pub fn from_latent(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.dim {
            return Err(SinfError::DimensionMismatch {
                expected: self.dim,
                got: z.ncols(),
            });
        }
        let mut x = z.clone();
        match self.direction {
            Direction::Gis => {
                for layer in self.layers.iter().rev() {
                    x = layer.inverse(&x)?;
                }
            }
            Direction::Sig => {
                for layer in &self.layers {
                    x = layer.forward(&x)?.0;
                }
            }
        }
        if self.preprocess != Preprocess::Identity {
            x.apply(|v| *v = self.preprocess.inverse(*v));
        }
        Ok(x)
    }

    /// Log-density of every row of `x`.
    pub fn log_density_batch(&self, x: &DMatrix<f64>) -> Result<Vec<LogDensityReport>> {
        let (z, log_jac) = self.to_latent(x)?;
        Ok((0..z.nrows())
            .map(|i| {
                let row: Vec<f64> = z.row(i).iter().copied().collect();
                let base_logp = standard_normal_logpdf(&row);
                LogDensityReport {
                    logp: base_logp + log_jac[i],
                    log_jacobian: log_jac[i],
                    base_logp,
                }
            })
            .collect())
    }

    pub fn log_density(&self, x: &[f64]) -> Result<LogDensityReport> {
        if x.len() != self.dim {
            return Err(SinfError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let m = DMatrix::from_row_slice(1, self.dim, x);
        Ok(self.log_density_batch(&m)?[0])
    }

    /// Draws `n` samples with latent standard deviation `temperature`.
    pub fn sample(&self, n: usize, temperature: f64, seed: u64) -> Result<DMatrix<f64>> {
        if n == 0 {
            return Err(SinfError::InvalidArgument(
                "sample count must be >= 1".into(),
            ));
        }
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(SinfError::InvalidArgument(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let mut r = rng::seeded(seed);
        let z = rng::standard_normal_matrix(n, self.dim, &mut r) * temperature;
        self.from_latent(&z)
    }
}
