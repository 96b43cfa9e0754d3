//! Sliced optimal-transport distances.
//!
//! Closed-form 1D Wasserstein distances between equal-size empirical samples,
//! the Monte Carlo sliced distance, and the maximum K-sliced distance. The
//! latter maximizes the mean p-th-power 1D distance over K orthonormal axes
//! by gradient ascent on the Stiefel manifold with Cayley retractions and a
//! backtracking line search.

use nalgebra::DMatrix;
use rand::seq::index;

use crate::error::{Result, SinfError};
use crate::rng::{self, Rng};

/// Orthonormality tolerance for slice bases.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// A `d × K` matrix with orthonormal columns; each column is one slice axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceBasis {
    a: DMatrix<f64>,
}

impl SliceBasis {
    /// Wraps a matrix after checking `AᵀA = I` within [`ORTHONORMAL_TOL`].
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let (d, k) = a.shape();
        if k == 0 || k > d {
            return Err(SinfError::InvalidArgument(format!(
                "slice basis must have 1 <= K <= d, got d={d}, K={k}"
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(SinfError::InvalidData("non-finite basis entry".into()));
        }
        let err = orthonormality_error(&a);
        if err > ORTHONORMAL_TOL {
            return Err(SinfError::InvalidData(format!(
                "basis columns are not orthonormal (max |AᵀA - I| = {err:e})"
            )));
        }
        Ok(Self { a })
    }

    /// The `d × d` identity, i.e. all coordinate axes.
    pub fn identity(d: usize) -> Self {
        Self {
            a: DMatrix::identity(d, d),
        }
    }

    pub(crate) fn from_matrix_unchecked(a: DMatrix<f64>) -> Self {
        Self { a }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.a
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Number of axes `K`.
    pub fn k(&self) -> usize {
        self.a.ncols()
    }

    pub fn axis(&self, k: usize) -> Vec<f64> {
        self.a.column(k).iter().copied().collect()
    }

    /// Largest absolute entry of `AᵀA - I`.
    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.a)
    }
}

pub fn orthonormality_error(a: &DMatrix<f64>) -> f64 {
    let gram = a.transpose() * a;
    let k = gram.nrows();
    let mut worst = 0.0_f64;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Backtracking line-search parameters for the Stiefel ascent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchConfig {
    pub initial_step: f64,
    pub shrink_factor: f64,
    /// Armijo-style constant; zero accepts any strict increase.
    pub sufficient_increase: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            initial_step: 0.5,
            shrink_factor: 0.5,
            sufficient_increase: 0.0,
            max_backtracks: 20,
        }
    }
}

impl LineSearchConfig {
    fn validate(&self) -> Result<()> {
        if !(self.initial_step > 0.0)
            || !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0)
            || !(self.sufficient_increase >= 0.0)
            || self.max_backtracks < 1
        {
            return Err(SinfError::InvalidArgument(format!(
                "invalid line search configuration {self:?}"
            )));
        }
        Ok(())
    }
}

/// Settings for one max K-SWD optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxSwdOptions {
    pub k: usize,
    pub p: f64,
    /// Maximum number of ascent iterations.
    pub max_iter: usize,
    pub line_search: LineSearchConfig,
    /// Stop once the relative objective gain or the Frobenius step falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl MaxSwdOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            p: 2.0,
            max_iter: 200,
            line_search: LineSearchConfig::default(),
            tolerance: 1e-6,
            seed: 0,
        }
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Outcome of a max K-SWD optimization.
#[derive(Debug, Clone)]
pub struct MaxSwdResult {
    /// `D^(1/p)` at the returned basis.
    pub distance: f64,
    pub basis: SliceBasis,
    pub iterations_used: usize,
    pub converged: bool,
    /// Objective `D` after each accepted step, starting with the initial basis.
    pub trace: Vec<f64>,
}

fn check_order(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(SinfError::InvalidArgument(format!(
            "order p must be >= 1, got {p}"
        )));
    }
    Ok(())
}

#[inline]
fn abs_pow(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else if p == 1.0 {
        x.abs()
    } else {
        x.abs().powf(p)
    }
}

/// Mean of `|x_(n) - y_(n)|^p` over two already sorted sequences.
fn sorted_mean_pow(xs: &[f64], ys: &[f64], p: f64) -> f64 {
    let total: f64 = xs.iter().zip(ys).map(|(a, b)| abs_pow(a - b, p)).sum();
    total / xs.len() as f64
}

fn sort_values(v: &mut [f64]) {
    v.sort_unstable_by(f64::total_cmp);
}

/// p-Wasserstein distance between two equal-size 1D empirical distributions.
///
/// Uses the sorted (monotone) coupling, which is optimal in one dimension.
pub fn wasserstein_1d(xs: &[f64], ys: &[f64], p: f64) -> Result<f64> {
    check_order(p)?;
    if xs.len() != ys.len() {
        return Err(SinfError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(SinfError::InvalidData("empty sample".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(SinfError::InvalidData("non-finite sample value".into()));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    sort_values(&mut a);
    sort_values(&mut b);
    Ok(sorted_mean_pow(&a, &b, p).powf(1.0 / p))
}

/// Checks a sample matrix: at least one row and column, all entries finite.
pub fn validate_samples(x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(SinfError::InvalidData(format!(
            "sample matrix must be non-empty, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
        return Err(SinfError::InvalidData(format!(
            "non-finite entry in row {}",
            pos % x.nrows()
        )));
    }
    Ok(())
}

fn check_pair(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    validate_samples(x)?;
    validate_samples(y)?;
    if x.ncols() != y.ncols() {
        return Err(SinfError::DimensionMismatch {
            expected: x.ncols(),
            got: y.ncols(),
        });
    }
    if x.nrows() != y.nrows() {
        return Err(SinfError::LengthMismatch {
            left: x.nrows(),
            right: y.nrows(),
        });
    }
    Ok(())
}

/// Randomly subsamples rows of the larger matrix so both have the same count.
///
/// Sorted pairing needs equal sample counts; this is the helper callers use
/// for unequal-size inputs.
pub fn equalize_sample_counts(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    seed: u64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = x.nrows().min(y.nrows());
    let mut rng = rng::seeded(seed);
    let pick = |m: &DMatrix<f64>, rng: &mut Rng| {
        if m.nrows() == n {
            m.clone()
        } else {
            let mut rows = index::sample(rng, m.nrows(), n).into_vec();
            rows.sort_unstable();
            m.select_rows(rows.iter())
        }
    };
    let xs = pick(x, &mut rng);
    let ys = pick(y, &mut rng);
    (xs, ys)
}

/// Monte Carlo sliced p-Wasserstein distance over `n_projections` uniformly
/// random directions.
pub fn sliced_wasserstein(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    n_projections: usize,
    p: f64,
    seed: u64,
) -> Result<f64> {
    check_order(p)?;
    check_pair(x, y)?;
    if n_projections < 1 {
        return Err(SinfError::InvalidArgument(
            "n_projections must be >= 1".into(),
        ));
    }
    let d = x.ncols();
    let mut rng = rng::seeded(seed);
    let directions = random_unit_vectors(d, n_projections, &mut rng);

    // Bounded memory: project in column chunks.
    const CHUNK: usize = 64;
    let mut total = 0.0;
    let mut start = 0;
    while start < n_projections {
        let width = CHUNK.min(n_projections - start);
        let theta = directions.columns(start, width);
        let px = x * theta;
        let py = y * theta;
        for j in 0..width {
            let mut a: Vec<f64> = px.column(j).iter().copied().collect();
            let mut b: Vec<f64> = py.column(j).iter().copied().collect();
            sort_values(&mut a);
            sort_values(&mut b);
            total += sorted_mean_pow(&a, &b, p);
        }
        start += width;
    }
    Ok((total / n_projections as f64).powf(1.0 / p))
}

/// `count` uniformly distributed unit vectors in ℝ^d, one per column.
pub fn random_unit_vectors(d: usize, count: usize, rng: &mut Rng) -> DMatrix<f64> {
    let mut m = rng::standard_normal_matrix(d, count, rng);
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        } else {
            col[0] = 1.0;
        }
    }
    m
}

/// Haar-distributed `d × K` orthonormal matrix: QR of a Gaussian matrix with
/// the column signs fixed by the diagonal of R.
pub fn random_orthonormal(d: usize, k: usize, seed: u64) -> Result<SliceBasis> {
    let mut rng = rng::seeded(seed);
    random_orthonormal_with(d, k, &mut rng)
}

pub fn random_orthonormal_with(d: usize, k: usize, rng: &mut Rng) -> Result<SliceBasis> {
    if k == 0 || k > d {
        return Err(SinfError::InvalidArgument(format!(
            "need 1 <= K <= d, got d={d}, K={k}"
        )));
    }
    let g = rng::standard_normal_matrix(d, k, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(SliceBasis::from_matrix_unchecked(q))
}

/// Objective `D = (1/(KN)) Σ_k Σ_n |x̂_(n) - ŷ_(n)|^p` for the basis `a`.
pub fn objective(x: &DMatrix<f64>, y: &DMatrix<f64>, a: &DMatrix<f64>, p: f64) -> f64 {
    let px = x * a;
    let py = y * a;
    let k = a.ncols();
    let mut total = 0.0;
    // Fixed reduction order over axes.
    for j in 0..k {
        let mut xs: Vec<f64> = px.column(j).iter().copied().collect();
        let mut ys: Vec<f64> = py.column(j).iter().copied().collect();
        sort_values(&mut xs);
        sort_values(&mut ys);
        total += sorted_mean_pow(&xs, &ys, p);
    }
    total / k as f64
}

/// Stable argsort: ascending by value, ties by original index.
pub(crate) fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    idx
}

/// Gradient of [`objective`] with respect to the entries of `A`.
///
/// The sort permutations are frozen at the current projection; at ties this
/// is the subgradient selected by the stable (value, index) ordering.
pub fn objective_gradient(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    basis: &SliceBasis,
    p: f64,
) -> Result<DMatrix<f64>> {
    check_order(p)?;
    check_pair(x, y)?;
    if basis.dim() != x.ncols() {
        return Err(SinfError::DimensionMismatch {
            expected: x.ncols(),
            got: basis.dim(),
        });
    }
    Ok(gradient_unchecked(x, y, basis.matrix(), p))
}

fn gradient_unchecked(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    a: &DMatrix<f64>,
    p: f64,
) -> DMatrix<f64> {
    let n = x.nrows();
    let k = a.ncols();
    let px = x * a;
    let py = y * a;
    let scale = p / (k as f64 * n as f64);
    let mut wx = DMatrix::zeros(n, k);
    let mut wy = DMatrix::zeros(n, k);
    for j in 0..k {
        let xs: Vec<f64> = px.column(j).iter().copied().collect();
        let ys: Vec<f64> = py.column(j).iter().copied().collect();
        let ox = argsort(&xs);
        let oy = argsort(&ys);
        for (&ix, &iy) in ox.iter().zip(&oy) {
            let r = xs[ix] - ys[iy];
            let c = if p == 2.0 {
                2.0 * r / (k as f64 * n as f64)
            } else if r == 0.0 {
                0.0
            } else {
                scale * r.abs().powf(p - 1.0) * r.signum()
            };
            wx[(ix, j)] = c;
            wy[(iy, j)] = c;
        }
    }
    x.transpose() * wx - y.transpose() * wy
}

fn check_retraction_args(a: &SliceBasis, g: &DMatrix<f64>, tau: f64) -> Result<()> {
    if g.shape() != a.matrix().shape() {
        return Err(SinfError::DimensionMismatch {
            expected: a.dim() * a.k(),
            got: g.nrows() * g.ncols(),
        });
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(SinfError::InvalidArgument(format!(
            "step must be a finite nonnegative number, got {tau}"
        )));
    }
    Ok(())
}

/// Cayley retraction `(I + τ/2 B)⁻¹ (I - τ/2 B) A` with `B = G Aᵀ - A Gᵀ`.
///
/// Solves a `d × d` system; see [`cayley_retract_woodbury`] for the cheaper form.
pub fn cayley_retract_full(a: &SliceBasis, g: &DMatrix<f64>, tau: f64) -> Result<SliceBasis> {
    check_retraction_args(a, g, tau)?;
    let am = a.matrix();
    let d = a.dim();
    let b = g * am.transpose() - am * g.transpose();
    let half = 0.5 * tau;
    let lhs = DMatrix::<f64>::identity(d, d) + &b * half;
    let rhs = (DMatrix::<f64>::identity(d, d) - &b * half) * am;
    let next = lhs
        .lu()
        .solve(&rhs)
        .ok_or(SinfError::StepTooLarge { tau })?;
    Ok(SliceBasis::from_matrix_unchecked(next))
}

/// The same retraction via Sherman-Morrison-Woodbury:
/// `A - τ U (I_2K + τ/2 VᵀU)⁻¹ VᵀA` with `U = [G, A]`, `V = [A, -G]`.
pub fn cayley_retract_woodbury(a: &SliceBasis, g: &DMatrix<f64>, tau: f64) -> Result<SliceBasis> {
    check_retraction_args(a, g, tau)?;
    let am = a.matrix();
    let (d, k) = am.shape();
    let mut u = DMatrix::zeros(d, 2 * k);
    u.columns_mut(0, k).copy_from(g);
    u.columns_mut(k, k).copy_from(am);
    let mut v = DMatrix::zeros(d, 2 * k);
    v.columns_mut(0, k).copy_from(am);
    v.columns_mut(k, k).copy_from(&(-g));
    let vt = v.transpose();
    let small = DMatrix::<f64>::identity(2 * k, 2 * k) + (&vt * &u) * (0.5 * tau);
    let rhs = &vt * am;
    let z = small
        .lu()
        .solve(&rhs)
        .ok_or(SinfError::StepTooLarge { tau })?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(SinfError::StepTooLarge { tau });
    }
    Ok(SliceBasis::from_matrix_unchecked(am - (u * z) * tau))
}

/// Maximum K-sliced p-Wasserstein distance by Stiefel-manifold gradient ascent
/// from a Haar-random start.
pub fn max_k_swd(x: &DMatrix<f64>, y: &DMatrix<f64>, opts: &MaxSwdOptions) -> Result<MaxSwdResult> {
    check_pair(x, y)?;
    let start = random_orthonormal(x.ncols(), opts.k, opts.seed)?;
    max_k_swd_from(x, y, start, opts)
}

/// Runs the ascent from a given starting basis.
pub fn max_k_swd_from(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    start: SliceBasis,
    opts: &MaxSwdOptions,
) -> Result<MaxSwdResult> {
    check_order(opts.p)?;
    check_pair(x, y)?;
    opts.line_search.validate()?;
    if opts.k == 0 || opts.k > x.ncols() {
        return Err(SinfError::InvalidArgument(format!(
            "need 1 <= K <= d, got d={}, K={}",
            x.ncols(),
            opts.k
        )));
    }
    if start.dim() != x.ncols() || start.k() != opts.k {
        return Err(SinfError::DimensionMismatch {
            expected: x.ncols() * opts.k,
            got: start.dim() * start.k(),
        });
    }
    if opts.max_iter < 1 {
        return Err(SinfError::InvalidArgument("max_iter must be >= 1".into()));
    }

    let p = opts.p;
    let ls = &opts.line_search;
    let mut basis = start;
    let mut value = objective(x, y, basis.matrix(), p);
    let mut trace = vec![value];
    let mut iterations_used = 0;
    let mut converged = false;

    for iter in 0..opts.max_iter {
        let grad = gradient_unchecked(x, y, basis.matrix(), p);
        let ascent = -&grad;
        // Squared norm of the Riemannian gradient under the canonical metric.
        let a = basis.matrix();
        let riem = &grad - a * (grad.transpose() * a);
        let slope = riem.norm_squared();
        if !(slope > 0.0) {
            converged = true;
            break;
        }

        let mut tau = ls.initial_step;
        let mut accepted = None;
        for _ in 0..ls.max_backtracks {
            if let Ok(candidate) = cayley_retract_woodbury(&basis, &ascent, tau) {
                let cv = objective(x, y, candidate.matrix(), p);
                if cv > value + ls.sufficient_increase * tau * slope {
                    accepted = Some((candidate, cv));
                    break;
                }
            }
            tau *= ls.shrink_factor;
        }

        let Some((candidate, cv)) = accepted else {
            // No ascent step: local maximum at this resolution.
            converged = true;
            break;
        };
        let step = (candidate.matrix() - basis.matrix()).norm();
        let gain = (cv - value) / value.abs().max(f64::MIN_POSITIVE);
        basis = candidate;
        value = cv;
        trace.push(value);
        iterations_used = iter + 1;
        if gain < opts.tolerance || step < opts.tolerance {
            converged = true;
            break;
        }
    }

    Ok(MaxSwdResult {
        distance: value.max(0.0).powf(1.0 / p),
        basis,
        iterations_used,
        converged,
        trace,
    })
}

/// Best of `restarts` independent ascents (different random starts).
pub fn max_k_swd_restarts(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    opts: &MaxSwdOptions,
    restarts: usize,
) -> Result<MaxSwdResult> {
    let restarts = restarts.max(1);
    let mut best: Option<MaxSwdResult> = None;
    for r in 0..restarts {
        let run_opts = MaxSwdOptions {
            seed: rng::derive_seed(opts.seed, r as u64),
            ..*opts
        };
        let result = max_k_swd(x, y, &run_opts)?;
        if best.as_ref().is_none_or(|b| result.distance > b.distance) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Objective at a fixed basis, returned as a distance `D^(1/p)`.
pub fn k_sliced_distance_at(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    basis: &SliceBasis,
    p: f64,
) -> Result<f64> {
    check_order(p)?;
    check_pair(x, y)?;
    if basis.dim() != x.ncols() {
        return Err(SinfError::DimensionMismatch {
            expected: x.ncols(),
            got: basis.dim(),
        });
    }
    Ok(objective(x, y, basis.matrix(), p).powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_w(xs: &[f64], ys: &[f64], p: f64) -> f64 {
        // Minimum over all permutations (Heap's algorithm).
        let n = xs.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        let mut c = vec![0usize; n];
        let cost = |perm: &[usize]| -> f64 {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| (xs[i] - ys[j]).abs().powf(p))
                .sum::<f64>()
                / n as f64
        };
        best = best.min(cost(&perm));
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.min(cost(&perm));
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        best.powf(1.0 / p)
    }

    #[test]
    fn wasserstein_trivial_cases() {
        assert_eq!(wasserstein_1d(&[0.0, 1.0], &[0.0, 1.0], 2.0).unwrap(), 0.0);
        assert_eq!(wasserstein_1d(&[0.0], &[3.0], 2.0).unwrap(), 3.0);
    }

    #[test]
    fn wasserstein_matches_coupling_enumeration() {
        let w = wasserstein_1d(&[1.0, 0.0], &[5.0, 2.0], 2.0).unwrap();
        let oracle = brute_force_w(&[1.0, 0.0], &[5.0, 2.0], 2.0);
        assert!((w - oracle).abs() < 1e-12);
        assert!((w - 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_errors() {
        assert!(matches!(
            wasserstein_1d(&[0.0, 1.0], &[0.0], 2.0),
            Err(SinfError::LengthMismatch { .. })
        ));
        assert!(matches!(
            wasserstein_1d(&[f64::NAN], &[0.0], 2.0),
            Err(SinfError::InvalidData(_))
        ));
        assert!(wasserstein_1d(&[0.0], &[0.0], 0.5).is_err());
    }

    #[test]
    fn sliced_is_exact_in_one_dimension() {
        let x = DMatrix::from_column_slice(4, 1, &[0.3, -1.0, 2.0, 0.5]);
        let y = DMatrix::from_column_slice(4, 1, &[1.0, 1.5, -0.2, 4.0]);
        let xs: Vec<f64> = x.iter().copied().collect();
        let ys: Vec<f64> = y.iter().copied().collect();
        let w = wasserstein_1d(&xs, &ys, 2.0).unwrap();
        let s = sliced_wasserstein(&x, &y, 7, 2.0, 3).unwrap();
        assert!((w - s).abs() < 1e-12);
        assert_eq!(sliced_wasserstein(&x, &x, 5, 2.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn sliced_rejects_bad_input() {
        let x = DMatrix::zeros(3, 2);
        let y = DMatrix::zeros(3, 3);
        assert!(sliced_wasserstein(&x, &y, 4, 2.0, 0).is_err());
        assert!(sliced_wasserstein(&x, &x, 0, 2.0, 0).is_err());
    }

    #[test]
    fn random_orthonormal_properties() {
        let b = random_orthonormal(1, 1, 9).unwrap();
        assert!((b.matrix()[(0, 0)].abs() - 1.0).abs() < 1e-15);
        let full = random_orthonormal(10, 10, 4).unwrap();
        assert!(full.orthonormality_error() < 1e-12);
        assert!((full.matrix().determinant().abs() - 1.0).abs() < 1e-10);
        let other = random_orthonormal(10, 10, 5).unwrap();
        assert_ne!(full, other);
        assert!(random_orthonormal(3, 4, 0).is_err());
    }

    #[test]
    fn gradient_hand_case() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let y = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 5.0, 0.0]);
        let basis = SliceBasis::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let d = objective(&x, &y, basis.matrix(), 2.0);
        assert!((d - 12.5).abs() < 1e-12);
        let g = objective_gradient(&x, &y, &basis, 2.0).unwrap();
        // Central differences of D along each entry.
        let h = 1e-6;
        for i in 0..2 {
            let mut ap = basis.matrix().clone();
            let mut am = basis.matrix().clone();
            ap[(i, 0)] += h;
            am[(i, 0)] -= h;
            let fd = (objective(&x, &y, &ap, 2.0) - objective(&x, &y, &am, 2.0)) / (2.0 * h);
            assert!(
                (fd - g[(i, 0)]).abs() <= 1e-6 * fd.abs().max(1.0),
                "{fd} vs {}",
                g[(i, 0)]
            );
        }
        // Hand values: residuals -3, -4 paired with x-y rows (-3,0), (-4,0).
        assert!((g[(0, 0)] - 25.0).abs() < 1e-12);
        assert!(g[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn gradient_is_zero_for_identical_samples() {
        let mut rng = rng::seeded(1);
        let x = rng::standard_normal_matrix(10, 3, &mut rng);
        let basis = random_orthonormal(3, 2, 2).unwrap();
        let g = objective_gradient(&x, &x, &basis, 2.0).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn retractions_at_zero_step_are_identity() {
        let a = random_orthonormal(5, 2, 1).unwrap();
        let mut rng = rng::seeded(2);
        let g = rng::standard_normal_matrix(5, 2, &mut rng);
        let full = cayley_retract_full(&a, &g, 0.0).unwrap();
        let wood = cayley_retract_woodbury(&a, &g, 0.0).unwrap();
        assert!((full.matrix() - a.matrix()).amax() < 1e-15);
        assert_eq!(wood.matrix(), a.matrix());
        assert!(cayley_retract_full(&a, &g, -1.0).is_err());
    }

    #[test]
    fn retraction_forms_agree() {
        let a = random_orthonormal(3, 1, 11).unwrap();
        let g = DMatrix::from_column_slice(3, 1, &[0.4, -1.2, 0.7]);
        let full = cayley_retract_full(&a, &g, 0.3).unwrap();
        let wood = cayley_retract_woodbury(&a, &g, 0.3).unwrap();
        assert!((full.matrix() - wood.matrix()).amax() < 1e-10);
        assert!(full.orthonormality_error() < 1e-10);
    }

    #[test]
    fn max_k_swd_of_identical_samples_is_zero() {
        let mut rng = rng::seeded(3);
        let x = rng::standard_normal_matrix(50, 3, &mut rng);
        let r = max_k_swd(&x, &x, &MaxSwdOptions::new(2)).unwrap();
        assert_eq!(r.distance, 0.0);
        assert!(r.basis.orthonormality_error() < ORTHONORMAL_TOL);
    }

    #[test]
    fn max_k_swd_single_point() {
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let y = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let r = max_k_swd(&x, &y, &MaxSwdOptions::new(1).with_max_iter(500)).unwrap();
        assert!((r.distance - 5.0).abs() < 1e-4, "{}", r.distance);
    }

    #[test]
    fn max_k_swd_rejects_k_above_d() {
        let x = DMatrix::zeros(4, 2);
        assert!(max_k_swd(&x, &x, &MaxSwdOptions::new(3)).is_err());
    }

    #[test]
    fn line_search_trace_is_monotone() {
        let mut rng = rng::seeded(8);
        let x = rng::standard_normal_matrix(200, 4, &mut rng);
        let mut y = rng::standard_normal_matrix(200, 4, &mut rng);
        y.column_mut(2).scale_mut(3.0);
        let r = max_k_swd(&x, &y, &MaxSwdOptions::new(2).with_seed(5)).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] > w[0]));
        assert!(r.basis.orthonormality_error() < ORTHONORMAL_TOL);
    }

    #[test]
    fn equalize_subsamples_larger_set() {
        let x = DMatrix::from_fn(10, 2, |i, j| (i * 2 + j) as f64);
        let y = DMatrix::zeros(4, 2);
        let (a, b) = equalize_sample_counts(&x, &y, 1);
        assert_eq!(a.nrows(), 4);
        assert_eq!(b.nrows(), 4);
    }
}
