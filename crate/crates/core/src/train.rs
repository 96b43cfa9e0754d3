//! Greedy sliced iterations and the SIG / GIS trainers.
//!
//! Each iteration finds the K orthonormal axes along which the source and
//! target samples differ most (max K-SWD), fits a monotone 1D transport map
//! per axis, and moves the source samples with the resulting layer.

use std::time::{Duration, Instant};

use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::cdf::{
    estimate_cdf_kde, estimate_cdf_quantile, fit_marginal_ot_map, BoundaryPolicy, CdfMethod,
    KdeConfig, TailSamples,
};
use crate::error::{Result, SinfError};
use crate::flow::{standard_normal_logpdf, Direction, Flow, SinfLayer, SliceTransform};
use crate::patch::{ChannelMode, PatchLayout, PatchSchedule};
use crate::rng;
use crate::sliced::{
    k_sliced_distance_at, max_k_swd, random_orthonormal, validate_samples, LineSearchConfig,
    MaxSwdOptions, SliceBasis,
};
use crate::spline::RegularizedMap;

/// Knot budget per 1D map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnotCount {
    /// 400 for SIG; `√N` clamped to `[50, 200]` for GIS.
    Auto,
    Fixed(usize),
}

/// Iteration cap of the Stiefel ascent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StiefelIters {
    /// 200 for SIG; `max(1, ⌊N/d⌋)` for GIS.
    Auto,
    Fixed(usize),
}

/// How slice axes are chosen each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisSelection {
    /// Maximize the K-sliced distance on the Stiefel manifold.
    Optimized,
    /// Haar-random orthonormal axes (no optimization).
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub k: usize,
    pub max_layers: usize,
    pub stiefel_max_iter: StiefelIters,
    /// `(α₁, α₂)`: blend toward the identity inside the knot range and in the tails.
    pub alpha: (f64, f64),
    pub knots: KnotCount,
    pub kde: KdeConfig,
    pub patch_schedule: Option<PatchSchedule>,
    /// `(S, c)` for square images flattened as `S × S × c`.
    pub image_shape: Option<(usize, usize)>,
    pub validation_fraction: f64,
    /// Stop GIS after this many iterations without validation improvement.
    pub patience: Option<usize>,
    pub axes: AxisSelection,
    pub line_search: LineSearchConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults for sample generation.
    pub fn sig(k: usize) -> Self {
        Self {
            k,
            max_layers: 100,
            stiefel_max_iter: StiefelIters::Auto,
            alpha: (0.0, 0.0),
            knots: KnotCount::Auto,
            kde: KdeConfig::default(),
            patch_schedule: None,
            image_shape: None,
            validation_fraction: 0.0,
            patience: None,
            axes: AxisSelection::Optimized,
            line_search: LineSearchConfig::default(),
            seed: 0,
        }
    }

    /// Defaults for density estimation.
    pub fn gis(k: usize) -> Self {
        Self {
            max_layers: 1000,
            alpha: (0.9, 0.9),
            validation_fraction: 0.1,
            patience: Some(20),
            ..Self::sig(k)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_layers(mut self, max_layers: usize) -> Self {
        self.max_layers = max_layers;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(SinfError::InvalidArgument("K must be >= 1".into()));
        }
        if self.max_layers < 1 {
            return Err(SinfError::InvalidArgument("max_layers must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(SinfError::InvalidArgument(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        for a in [self.alpha.0, self.alpha.1] {
            if !(0.0..1.0).contains(&a) {
                return Err(SinfError::InvalidArgument(format!(
                    "alpha must lie in [0, 1), got {a}"
                )));
            }
        }
        if let KnotCount::Fixed(m) = self.knots {
            if m < 2 {
                return Err(SinfError::InvalidArgument("need at least 2 knots".into()));
            }
        }
        if let StiefelIters::Fixed(0) = self.stiefel_max_iter {
            return Err(SinfError::InvalidArgument(
                "Stiefel iteration cap must be >= 1".into(),
            ));
        }
        if self.patch_schedule.is_some() && self.image_shape.is_none() {
            return Err(SinfError::InvalidArgument(
                "a patch schedule needs an image shape".into(),
            ));
        }
        Ok(())
    }
}

/// Regularization presets for small training sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmallDataMode {
    HighAlpha,
    LowAlpha,
}

/// GIS configuration for small datasets of `n_train` points in `d` dimensions.
///
/// High regularization: `b = 1`, `α = (1 - 0.02 log₁₀N, 1 - 0.001 log₁₀N)`.
/// Low regularization: `b = 2`, `α = (0, 1 - 0.01 log₁₀N)`. Both use
/// `K = min(8, d)` and hold out a validation set 30% the size of the
/// training set.
pub fn small_data_presets(n_train: usize, d: usize, mode: SmallDataMode) -> Result<TrainConfig> {
    if n_train < 10 || d < 1 {
        return Err(SinfError::InvalidArgument(format!(
            "presets need N_train >= 10 and d >= 1, got {n_train}, {d}"
        )));
    }
    let lg = (n_train as f64).log10();
    let (b, alpha) = match mode {
        SmallDataMode::HighAlpha => (1.0, (1.0 - 0.02 * lg, 1.0 - 0.001 * lg)),
        SmallDataMode::LowAlpha => (2.0, (0.0, 1.0 - 0.01 * lg)),
    };
    Ok(TrainConfig {
        k: d.min(8),
        alpha,
        kde: KdeConfig::with_factor(b),
        // validation : train = 0.3 : 1
        validation_fraction: 0.3 / 1.3,
        ..TrainConfig::gis(d.min(8))
    })
}

/// Settings for one sliced iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationSettings {
    pub k: usize,
    pub cdf: CdfMethod,
    pub kde: KdeConfig,
    pub knots: usize,
    pub alpha: (f64, f64),
    pub boundary: BoundaryPolicy,
    pub stiefel_max_iter: usize,
    pub axes: AxisSelection,
    pub line_search: LineSearchConfig,
    pub seed: u64,
}

impl IterationSettings {
    /// Quantile CDFs, unit tail slopes, no regularization.
    pub fn sig(k: usize, seed: u64) -> Self {
        Self {
            k,
            cdf: CdfMethod::Quantile,
            kde: KdeConfig::default(),
            knots: 400,
            alpha: (0.0, 0.0),
            boundary: BoundaryPolicy::FixedUnitSlopes,
            stiefel_max_iter: 200,
            axes: AxisSelection::Optimized,
            line_search: LineSearchConfig::default(),
            seed,
        }
    }

    /// KDE CDFs, fitted tails, regularized maps.
    pub fn gis(k: usize, alpha: (f64, f64), knots: usize, seed: u64) -> Self {
        Self {
            cdf: CdfMethod::Kde,
            knots,
            alpha,
            boundary: BoundaryPolicy::FitTails,
            ..Self::sig(k, seed)
        }
    }
}

/// Diagnostics from one iteration (summed over patches for patched layers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    /// Max K-SWD along the chosen axes before the update.
    pub distance_before: f64,
    /// The same quantity along the same axes after the update.
    pub distance_after: f64,
    pub stiefel_iterations: usize,
    pub degenerate_axes: usize,
}

fn column(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

fn fit_axis_map(source: &[f64], target: &[f64], s: &IterationSettings) -> Result<RegularizedMap> {
    let (gs, ft) = match s.cdf {
        CdfMethod::Quantile => (
            estimate_cdf_quantile(source, s.knots)?,
            estimate_cdf_quantile(target, s.knots)?,
        ),
        CdfMethod::Kde => (
            estimate_cdf_kde(source, s.knots, &s.kde)?,
            estimate_cdf_kde(target, s.knots, &s.kde)?,
        ),
    };
    let tails = match s.boundary {
        BoundaryPolicy::FitTails if source.len() == target.len() => {
            let mut a = source.to_vec();
            let mut b = target.to_vec();
            a.sort_unstable_by(f64::total_cmp);
            b.sort_unstable_by(f64::total_cmp);
            Some((a, b))
        }
        _ => None,
    };
    let tail_samples = tails.as_ref().map(|(a, b)| TailSamples {
        source: a,
        target: b,
    });
    fit_marginal_ot_map(&gs, &ft, s.alpha, s.boundary, tail_samples)
}

fn fit_transform(
    source: &DMatrix<f64>,
    target: &DMatrix<f64>,
    s: &IterationSettings,
) -> Result<(SliceTransform, IterationStats)> {
    let d = source.ncols();
    let k = s.k.min(d);
    let (basis, stiefel_iterations): (SliceBasis, usize) = match s.axes {
        AxisSelection::Optimized => {
            let opts = MaxSwdOptions {
                k,
                p: 2.0,
                max_iter: s.stiefel_max_iter,
                line_search: s.line_search,
                tolerance: 1e-6,
                seed: s.seed,
            };
            let r = max_k_swd(source, target, &opts)?;
            (r.basis, r.iterations_used)
        }
        AxisSelection::Random => (random_orthonormal(d, k, s.seed)?, 0),
    };
    let a = basis.matrix();
    let ps = source * a;
    let pt = target * a;
    let mut degenerate_axes = 0;
    let maps = (0..k)
        .map(
            |j| match fit_axis_map(&column(&ps, j), &column(&pt, j), s) {
                Ok(map) => Ok(map),
                Err(SinfError::DegenerateMarginal(why)) => {
                    warn!("axis {j} left unchanged: {why}");
                    degenerate_axes += 1;
                    Ok(RegularizedMap::identity())
                }
                Err(e) => Err(e),
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let distance_before = k_sliced_distance_at(source, target, &basis, 2.0)?;
    let transform = SliceTransform::new(basis, maps)?;
    Ok((
        transform,
        IterationStats {
            distance_before,
            distance_after: distance_before,
            stiefel_iterations,
            degenerate_axes,
        },
    ))
}

/// One greedy iteration: choose axes, fit per-axis transport maps, and move
/// the source samples.
///
/// With a patch layout the iteration runs independently on every patch, and
/// pixels outside the patches are left as they are.
pub fn sinf_iteration(
    source: &DMatrix<f64>,
    target: &DMatrix<f64>,
    settings: &IterationSettings,
    patch: Option<PatchLayout>,
) -> Result<(SinfLayer, DMatrix<f64>, IterationStats)> {
    validate_samples(source)?;
    validate_samples(target)?;
    if source.ncols() != target.ncols() {
        return Err(SinfError::DimensionMismatch {
            expected: source.ncols(),
            got: target.ncols(),
        });
    }
    match patch {
        None => {
            let (transform, mut stats) = fit_transform(source, target, settings)?;
            let layer = SinfLayer::new(transform);
            let (moved, _) = layer.forward(source)?;
            let t = &layer.transforms()[0];
            stats.distance_after = k_sliced_distance_at(&moved, target, t.basis(), 2.0)?;
            Ok((layer, moved, stats))
        }
        Some(layout) => {
            let mut transforms = Vec::with_capacity(layout.num_patches());
            let mut stats = IterationStats {
                distance_before: 0.0,
                distance_after: 0.0,
                stiefel_iterations: 0,
                degenerate_axes: 0,
            };
            let mut moved = source.clone();
            for p in 0..layout.num_patches() {
                let src = layout.gather_one(source, p)?;
                let tgt = layout.gather_one(target, p)?;
                let patch_settings = IterationSettings {
                    seed: rng::derive_seed(settings.seed, p as u64),
                    ..settings.clone()
                };
                let (t, st) = fit_transform(&src, &tgt, &patch_settings)?;
                let (out, _) = t.forward(&src);
                let after = k_sliced_distance_at(&out, &tgt, t.basis(), 2.0)?;
                layout.scatter_one(&mut moved, p, &out)?;
                stats.distance_before += st.distance_before;
                stats.distance_after += after;
                stats.stiefel_iterations += st.stiefel_iterations;
                stats.degenerate_axes += st.degenerate_axes;
                transforms.push(t);
            }
            let layer = SinfLayer::patched(layout, transforms)?;
            Ok((layer, moved, stats))
        }
    }
}

/// Per-iteration record of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Max K-SWD before each iteration's update.
    pub objective: Vec<f64>,
    /// Mean validation log-likelihood (GIS): entry 0 is the empty flow, entry
    /// `l` follows `l` layers.
    pub validation_logp: Vec<f64>,
    /// Stiefel ascent iterations used by each iteration (summed over patches).
    pub stiefel_iterations: Vec<usize>,
    pub layers_built: usize,
    /// Layers kept in the returned flow (GIS keeps the best validation prefix).
    pub layers_kept: usize,
    pub wall_time: Duration,
}

/// One planned iteration: axes count plus an optional patch stage.
#[derive(Debug, Clone, Copy)]
struct PlannedIteration {
    k: usize,
    patch: Option<(usize, ChannelMode)>,
}

fn plan(cfg: &TrainConfig) -> Vec<PlannedIteration> {
    match &cfg.patch_schedule {
        Some(schedule) => schedule
            .stages
            .iter()
            .flat_map(|s| {
                std::iter::repeat_n(
                    PlannedIteration {
                        k: s.k,
                        patch: Some((s.patch, s.mode)),
                    },
                    s.iterations,
                )
            })
            .take(cfg.max_layers)
            .collect(),
        None => vec![
            PlannedIteration {
                k: cfg.k,
                patch: None,
            };
            cfg.max_layers
        ],
    }
}

fn layout_for(
    cfg: &TrainConfig,
    step: &PlannedIteration,
    rng: &mut rng::Rng,
) -> Result<Option<PatchLayout>> {
    let Some((q, mode)) = step.patch else {
        return Ok(None);
    };
    let (side, channels) = cfg.image_shape.expect("validated");
    let shift = (rng.random_range(0..side), rng.random_range(0..side));
    PatchLayout::new(side, channels, q, shift, mode).map(Some)
}

fn check_image_shape(cfg: &TrainConfig, d: usize) -> Result<()> {
    if let Some((side, channels)) = cfg.image_shape {
        if side * side * channels != d {
            return Err(SinfError::DimensionMismatch {
                expected: side * side * channels,
                got: d,
            });
        }
    }
    Ok(())
}

fn flow_image_shape(cfg: &TrainConfig) -> Option<(usize, usize, usize)> {
    cfg.image_shape.map(|(s, c)| (s, s, c))
}

/// Trains a generator: standard-normal samples are iteratively mapped onto
/// the data.
pub fn train_sig(data: &DMatrix<f64>, cfg: &TrainConfig) -> Result<(Flow, TrainReport)> {
    cfg.validate()?;
    validate_samples(data)?;
    let (n, d) = data.shape();
    if n < 2 {
        return Err(SinfError::InvalidArgument("need at least 2 samples".into()));
    }
    check_image_shape(cfg, d)?;
    let start = Instant::now();
    let mut base_rng = rng::seeded(rng::derive_seed(cfg.seed, 1));
    let mut source = rng::standard_normal_matrix(n, d, &mut base_rng);
    let mut shift_rng = rng::seeded(rng::derive_seed(cfg.seed, 2));
    let knots = match cfg.knots {
        KnotCount::Auto => 400,
        KnotCount::Fixed(m) => m,
    };
    let stiefel = match cfg.stiefel_max_iter {
        StiefelIters::Auto => 200,
        StiefelIters::Fixed(j) => j,
    };

    let mut flow = Flow::new(d, Direction::Sig).with_image_shape(flow_image_shape(cfg));
    let mut report = TrainReport::default();
    for (l, step) in plan(cfg).iter().enumerate() {
        let settings = IterationSettings {
            knots,
            stiefel_max_iter: stiefel,
            axes: cfg.axes,
            line_search: cfg.line_search,
            ..IterationSettings::sig(step.k, rng::derive_seed(cfg.seed, 1000 + l as u64))
        };
        let layout = layout_for(cfg, step, &mut shift_rng)?;
        let (layer, moved, stats) = sinf_iteration(&source, data, &settings, layout)?;
        source = moved;
        flow.push(layer)?;
        report.objective.push(stats.distance_before);
        report.stiefel_iterations.push(stats.stiefel_iterations);
    }
    report.layers_built = flow.layers().len();
    report.layers_kept = report.layers_built;
    report.wall_time = start.elapsed();
    Ok((flow, report))
}

fn mean_logp(z: &DMatrix<f64>, log_jac: &[f64]) -> f64 {
    let total: f64 = (0..z.nrows())
        .map(|i| {
            let row: Vec<f64> = z.row(i).iter().copied().collect();
            standard_normal_logpdf(&row) + log_jac[i]
        })
        .sum();
    total / z.nrows() as f64
}

/// Splits rows into (train, validation) after a seeded shuffle.
pub fn split_validation(
    data: &DMatrix<f64>,
    fraction: f64,
    seed: u64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = data.nrows();
    let n_val = ((n as f64) * fraction).round() as usize;
    let n_val = n_val.min(n.saturating_sub(2));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let (val, train) = idx.split_at(n_val);
    (data.select_rows(train.iter()), data.select_rows(val.iter()))
}

/// Trains a density estimator: the data are iteratively Gaussianized.
///
/// Stops when the validation log-likelihood has not improved for `patience`
/// iterations and keeps the best-scoring prefix of layers.
pub fn train_gis(data: &DMatrix<f64>, cfg: &TrainConfig) -> Result<(Flow, TrainReport)> {
    cfg.validate()?;
    validate_samples(data)?;
    let d = data.ncols();
    if data.nrows() < 2 {
        return Err(SinfError::InvalidArgument("need at least 2 samples".into()));
    }
    check_image_shape(cfg, d)?;
    let start = Instant::now();
    let (mut source, mut val) =
        split_validation(data, cfg.validation_fraction, rng::derive_seed(cfg.seed, 3));
    if cfg.patience.is_some() && val.nrows() == 0 {
        return Err(SinfError::InvalidArgument(
            "early stopping needs a nonempty validation split".into(),
        ));
    }
    let n = source.nrows();
    let mut target_rng = rng::seeded(rng::derive_seed(cfg.seed, 4));
    let target = rng::standard_normal_matrix(n, d, &mut target_rng);
    let mut shift_rng = rng::seeded(rng::derive_seed(cfg.seed, 2));
    let knots = match cfg.knots {
        KnotCount::Auto => ((n as f64).sqrt().round() as usize).clamp(50, 200),
        KnotCount::Fixed(m) => m,
    };
    let stiefel = match cfg.stiefel_max_iter {
        StiefelIters::Auto => (n / d).max(1),
        StiefelIters::Fixed(j) => j,
    };

    let mut flow = Flow::new(d, Direction::Gis).with_image_shape(flow_image_shape(cfg));
    let mut report = TrainReport::default();
    let mut val_log_jac = vec![0.0; val.nrows()];
    let has_val = val.nrows() > 0;
    let mut best = (f64::NEG_INFINITY, 0usize);
    if has_val {
        let v = mean_logp(&val, &val_log_jac);
        report.validation_logp.push(v);
        best = (v, 0);
    }

    for (l, step) in plan(cfg).iter().enumerate() {
        let settings = IterationSettings {
            kde: cfg.kde,
            stiefel_max_iter: stiefel,
            axes: cfg.axes,
            line_search: cfg.line_search,
            ..IterationSettings::gis(
                step.k,
                cfg.alpha,
                knots,
                rng::derive_seed(cfg.seed, 1000 + l as u64),
            )
        };
        let layout = layout_for(cfg, step, &mut shift_rng)?;
        let (layer, moved, stats) = sinf_iteration(&source, &target, &settings, layout)?;
        source = moved;
        report.objective.push(stats.distance_before);
        report.stiefel_iterations.push(stats.stiefel_iterations);
        if has_val {
            let (v, lj) = layer.forward(&val)?;
            val = v;
            val_log_jac.iter_mut().zip(lj).for_each(|(a, b)| *a += b);
            let score = mean_logp(&val, &val_log_jac);
            report.validation_logp.push(score);
            flow.push(layer)?;
            if score > best.0 {
                best = (score, flow.layers().len());
            }
            if let Some(patience) = cfg.patience {
                if flow.layers().len() - best.1 >= patience {
                    break;
                }
            }
        } else {
            flow.push(layer)?;
        }
    }
    report.layers_built = flow.layers().len();
    if has_val {
        flow.truncate(best.1);
    }
    report.layers_kept = flow.layers().len();
    report.wall_time = start.elapsed();
    Ok((flow, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let hi = small_data_presets(100, 6, SmallDataMode::HighAlpha).unwrap();
        assert!((hi.alpha.0 - 0.96).abs() < 1e-12);
        assert!((hi.alpha.1 - 0.998).abs() < 1e-12);
        assert_eq!(hi.kde.width_factor, 1.0);
        let lo = small_data_presets(100, 6, SmallDataMode::LowAlpha).unwrap();
        assert_eq!(lo.kde.width_factor, 2.0);
        assert_eq!(lo.alpha.0, 0.0);
        assert!((lo.alpha.1 - 0.98).abs() < 1e-12);
        assert_eq!(lo.k, 6);
        assert_eq!(
            small_data_presets(100, 50, SmallDataMode::LowAlpha)
                .unwrap()
                .k,
            8
        );
        assert!(small_data_presets(5, 2, SmallDataMode::LowAlpha).is_err());
    }

    #[test]
    fn validation_split_sizes() {
        let x = DMatrix::from_fn(130, 2, |i, j| (i + j) as f64);
        let (t, v) = split_validation(&x, 0.3 / 1.3, 1);
        assert_eq!(t.nrows(), 100);
        assert_eq!(v.nrows(), 30);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::sig(2);
        c.validation_fraction = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::sig(2);
        c.alpha = (1.0, 0.0);
        assert!(c.validate().is_err());
        let mut c = TrainConfig::sig(0);
        c.k = 0;
        assert!(c.validate().is_err());
    }
}
