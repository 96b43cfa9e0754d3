//! Sliced iterative normalizing flows.
//!
//! A flow is built greedily, one layer per iteration: find the K orthonormal
//! axes along which two sample sets differ most (the max K-sliced Wasserstein
//! distance, optimized on the Stiefel manifold), then match the 1D marginals
//! along those axes with monotone rational quadratic splines. Mapping Gaussian
//! samples onto data gives a sampler ([`train::train_sig`]); mapping data onto
//! Gaussian samples gives a density estimator ([`train::train_gis`]).
//!
//! ```no_run
//! use sinf::train::{train_gis, TrainConfig};
//! # let data = nalgebra::DMatrix::<f64>::zeros(100, 2);
//! let (flow, report) = train_gis(&data, &TrainConfig::gis(2)).unwrap();
//! let logp = flow.log_density(&[0.0, 0.0]).unwrap().logp;
//! let samples = flow.sample(1000, 1.0, 7).unwrap();
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cdf;
pub mod config;
pub mod error;
pub mod flow;
pub mod io;
pub mod metrics;
pub mod model_file;
pub mod patch;
pub mod preprocess;
pub mod rng;
pub mod sliced;
pub mod spline;
pub mod train;

pub use error::{Result, SinfError};
pub use flow::{Direction, Flow, LogDensityReport, SinfLayer, SliceTransform};
pub use sliced::{MaxSwdOptions, MaxSwdResult, SliceBasis};
pub use spline::{RegularizedMap, RqSpline};
