//! 1D CDF estimates and the monotone optimal-transport map between them.

use crate::error::{Result, SinfError};
use crate::spline::{
    fit_knot_derivatives, merge_close_knots, RegularizedMap, RqSpline, KNOT_MERGE_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfMethod {
    Quantile,
    Kde,
}

/// A tabulated CDF: nondecreasing values at increasing support points.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfEstimate {
    support: Vec<f64>,
    cdf: Vec<f64>,
    method: CdfMethod,
}

impl CdfEstimate {
    pub fn new(support: Vec<f64>, cdf: Vec<f64>, method: CdfMethod) -> Result<Self> {
        if support.len() < 2 || cdf.len() != support.len() {
            return Err(SinfError::InvalidArgument(
                "CDF table needs at least two matching entries".into(),
            ));
        }
        if support.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SinfError::InvalidData(
                "CDF support must be strictly increasing".into(),
            ));
        }
        if cdf.windows(2).any(|w| w[1] < w[0]) || cdf[0] < 0.0 || cdf[cdf.len() - 1] > 1.0 {
            return Err(SinfError::InvalidData(
                "CDF values must be nondecreasing within [0, 1]".into(),
            ));
        }
        Ok(Self {
            support,
            cdf,
            method,
        })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    pub fn method(&self) -> CdfMethod {
        self.method
    }

    /// Piecewise-linear CDF value; clamps outside the support.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let n = self.support.len();
        if x <= self.support[0] {
            return self.cdf[0];
        }
        if x >= self.support[n - 1] {
            return self.cdf[n - 1];
        }
        let j = self.support.partition_point(|&s| s <= x) - 1;
        let t = (x - self.support[j]) / (self.support[j + 1] - self.support[j]);
        self.cdf[j] + t * (self.cdf[j + 1] - self.cdf[j])
    }

    /// Piecewise-linear quantile function, `None` outside the tabulated levels.
    pub fn quantile(&self, u: f64) -> Option<f64> {
        let n = self.cdf.len();
        if !(u >= self.cdf[0] && u <= self.cdf[n - 1]) {
            return None;
        }
        // First index with cdf > u; the segment ending there brackets u.
        let hi = self.cdf.partition_point(|&c| c <= u);
        if hi == 0 {
            return Some(self.support[0]);
        }
        let lo = hi - 1;
        if hi == n || self.cdf[lo] == u {
            // Exact hit on a tabulated level: leftmost support with that level.
            let first = self.cdf.partition_point(|&c| c < self.cdf[lo]);
            return Some(self.support[first]);
        }
        let t = (u - self.cdf[lo]) / (self.cdf[hi] - self.cdf[lo]);
        Some(self.support[lo] + t * (self.support[hi] - self.support[lo]))
    }
}

fn sorted_finite(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(SinfError::InvalidArgument(format!(
            "need at least two values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SinfError::InvalidData("non-finite value".into()));
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    Ok(v)
}

/// Empirical quantiles at `M` evenly spaced levels `0, 1/(M-1), …, 1`,
/// linearly interpolated between order statistics. Tied support points are
/// merged (the lowest level is kept).
pub fn estimate_cdf_quantile(values: &[f64], knots: usize) -> Result<CdfEstimate> {
    if knots < 2 {
        return Err(SinfError::InvalidArgument("need M >= 2 knots".into()));
    }
    let sorted = sorted_finite(values)?;
    let n = sorted.len();
    if sorted[n - 1] - sorted[0] <= KNOT_MERGE_TOL {
        return Err(SinfError::DegenerateMarginal(
            "all values are identical".into(),
        ));
    }
    let mut support = Vec::with_capacity(knots);
    let mut cdf = Vec::with_capacity(knots);
    for m in 0..knots {
        let u = m as f64 / (knots - 1) as f64;
        let pos = u * (n - 1) as f64;
        let lo = (pos.floor() as usize).min(n - 1);
        let hi = (lo + 1).min(n - 1);
        let frac = pos - lo as f64;
        let q = sorted[lo] + frac * (sorted[hi] - sorted[lo]);
        if support
            .last()
            .is_some_and(|&last: &f64| q - last <= KNOT_MERGE_TOL)
        {
            continue;
        }
        support.push(q);
        cdf.push(u);
    }
    CdfEstimate::new(support, cdf, CdfMethod::Quantile)
}

/// Gaussian kernel density settings: `σ = b · N^(-1/5) · σ_data` unless a
/// fixed bandwidth is given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeConfig {
    pub width_factor: f64,
    pub bandwidth: Option<f64>,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            width_factor: 1.0,
            bandwidth: None,
        }
    }
}

impl KdeConfig {
    pub fn with_factor(width_factor: f64) -> Self {
        Self {
            width_factor,
            bandwidth: None,
        }
    }

    /// Kernel width for `n` samples with standard deviation `data_std`.
    pub fn bandwidth_for(&self, n: usize, data_std: f64) -> Result<f64> {
        if let Some(bw) = self.bandwidth {
            if !(bw > 0.0) {
                return Err(SinfError::InvalidArgument(format!(
                    "bandwidth must be positive, got {bw}"
                )));
            }
            return Ok(bw);
        }
        if !(self.width_factor > 0.0) {
            return Err(SinfError::InvalidArgument(format!(
                "kernel width factor must be positive, got {}",
                self.width_factor
            )));
        }
        if !(data_std > 0.0) {
            return Err(SinfError::DegenerateMarginal("zero data variance".into()));
        }
        Ok(self.width_factor * (n as f64).powf(-0.2) * data_std)
    }
}

fn std_dev(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    var.sqrt()
}

/// Standard normal CDF.
pub fn normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

/// CDF of the Gaussian-kernel mixture tabulated at `M` points spanning the
/// data range plus four bandwidths on each side.
pub fn estimate_cdf_kde(values: &[f64], knots: usize, kde: &KdeConfig) -> Result<CdfEstimate> {
    if knots < 2 {
        return Err(SinfError::InvalidArgument("need M >= 2 knots".into()));
    }
    let sorted = sorted_finite(values)?;
    let n = sorted.len();
    let sigma = kde.bandwidth_for(n, std_dev(&sorted))?;
    let lo = sorted[0] - 4.0 * sigma;
    let hi = sorted[n - 1] + 4.0 * sigma;
    // Kernels further than this many widths away contribute exactly 0 or 1
    // at double precision.
    const CUTOFF: f64 = 8.5;
    let mut support = Vec::with_capacity(knots);
    let mut cdf = Vec::with_capacity(knots);
    for m in 0..knots {
        let x = lo + (hi - lo) * m as f64 / (knots - 1) as f64;
        let below = sorted.partition_point(|&v| v < x - CUTOFF * sigma);
        let above = sorted.partition_point(|&v| v <= x + CUTOFF * sigma);
        let mut total = below as f64;
        for &v in &sorted[below..above] {
            total += normal_cdf((x - v) / sigma);
        }
        support.push(x);
        cdf.push((total / n as f64).clamp(0.0, 1.0));
    }
    CdfEstimate::new(support, cdf, CdfMethod::Kde)
}

/// How the end derivatives and tail slopes of a fitted map are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPolicy {
    /// Unit end derivatives and tail slopes.
    FixedUnitSlopes,
    /// Least-squares slope of the sorted source/target pairing beyond the end
    /// knots, falling back to the adjacent bin slope.
    FitTails,
}

/// Sorted, equal-length source and target samples used to fit tail slopes.
#[derive(Debug, Clone, Copy)]
pub struct TailSamples<'a> {
    pub source: &'a [f64],
    pub target: &'a [f64],
}

fn tail_slope(pairs: impl Iterator<Item = (f64, f64)>, anchor: (f64, f64)) -> Option<f64> {
    let (mut sxy, mut sxx, mut count) = (0.0, 0.0, 0usize);
    for (x, y) in pairs {
        let dx = x - anchor.0;
        let dy = y - anchor.1;
        sxy += dx * dy;
        sxx += dx * dx;
        count += 1;
    }
    if count < 2 || !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    (slope > 0.0 && slope.is_finite()).then_some(slope)
}

/// Monotone transport map `F⁻¹ ∘ G` from the source CDF `G` to the target CDF
/// `F`, as a rational quadratic spline.
///
/// Knots sit at the source support points; each is paired with the target
/// quantile at the same CDF level. Knots whose level falls outside the target
/// table are dropped, and near-duplicates are merged.
pub fn fit_marginal_ot_map(
    source: &CdfEstimate,
    target: &CdfEstimate,
    alpha: (f64, f64),
    policy: BoundaryPolicy,
    tails: Option<TailSamples<'_>>,
) -> Result<RegularizedMap> {
    let mut xs = Vec::with_capacity(source.support.len());
    let mut ys = Vec::with_capacity(source.support.len());
    for (&x, &u) in source.support.iter().zip(&source.cdf) {
        if let Some(y) = target.quantile(u) {
            xs.push(x);
            ys.push(y);
        }
    }
    let (xs, ys) = merge_close_knots(&xs, &ys);
    if xs.len() < 2 {
        return Err(SinfError::DegenerateMarginal(
            "fewer than two distinct transport knots".into(),
        ));
    }
    let mut derivs = fit_knot_derivatives(&xs, &ys)?;
    let last = xs.len() - 1;
    match policy {
        BoundaryPolicy::FixedUnitSlopes => {
            derivs[0] = 1.0;
            derivs[last] = 1.0;
        }
        BoundaryPolicy::FitTails => {
            if let Some(t) = tails {
                let pairs = || t.source.iter().copied().zip(t.target.iter().copied());
                if let Some(s) = tail_slope(pairs().filter(|p| p.0 < xs[0]), (xs[0], ys[0])) {
                    derivs[0] = s;
                }
                if let Some(s) =
                    tail_slope(pairs().filter(|p| p.0 > xs[last]), (xs[last], ys[last]))
                {
                    derivs[last] = s;
                }
            }
        }
    }
    let spline = RqSpline::new(xs, ys, derivs)?;
    RegularizedMap::new(spline, alpha.0, alpha.1)
}
