//! Monotonic rational quadratic splines.
//!
//! Each bin between knots `(x_m, y_m)` and `(x_{m+1}, y_{m+1})` is the ratio of
//! two quadratics with prescribed knot derivatives; outside the knot range the
//! map continues linearly with the end derivatives, so the spline is a strictly
//! increasing C¹ bijection of the real line with a closed-form inverse.

use crate::error::{Result, SinfError};

/// Knots closer than this (in x or y) are merged before fitting.
pub const KNOT_MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RqSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    derivs: Vec<f64>,
}

/// Locates the bin `m` with `knots[m] <= v < knots[m + 1]`, clamped to the
/// valid bin range. Assumes `knots[0] <= v <= knots[last]`.
#[inline]
fn find_bin(knots: &[f64], v: f64) -> usize {
    let upper = knots.partition_point(|&k| k <= v);
    upper.saturating_sub(1).min(knots.len() - 2)
}

impl RqSpline {
    /// Builds a spline from knots and positive knot derivatives.
    ///
    /// The tail slopes are the end derivatives `derivs[0]` and `derivs[M-1]`.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, derivs: Vec<f64>) -> Result<Self> {
        let m = xs.len();
        if m < 2 || ys.len() != m || derivs.len() != m {
            return Err(SinfError::InvalidArgument(format!(
                "spline needs M >= 2 knots with matching lengths (got {}, {}, {})",
                xs.len(),
                ys.len(),
                derivs.len()
            )));
        }
        if xs.iter().chain(&ys).chain(&derivs).any(|v| !v.is_finite()) {
            return Err(SinfError::InvalidData("non-finite spline parameter".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) || ys.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SinfError::InvalidData(
                "spline knots must be strictly increasing".into(),
            ));
        }
        if derivs.iter().any(|&d| !(d > 0.0)) {
            return Err(SinfError::InvalidData(
                "spline knot derivatives must be positive".into(),
            ));
        }
        Ok(Self { xs, ys, derivs })
    }

    /// Fits interior derivatives from the knots, using the given end slopes.
    pub fn fit(xs: Vec<f64>, ys: Vec<f64>, left_slope: f64, right_slope: f64) -> Result<Self> {
        let mut derivs = fit_knot_derivatives(&xs, &ys)?;
        let last = derivs.len() - 1;
        derivs[0] = left_slope;
        derivs[last] = right_slope;
        Self::new(xs, ys, derivs)
    }

    pub fn identity() -> Self {
        Self {
            xs: vec![0.0, 1.0],
            ys: vec![0.0, 1.0],
            derivs: vec![1.0, 1.0],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.xs == self.ys && self.derivs.iter().all(|&d| d == 1.0)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn derivs(&self) -> &[f64] {
        &self.derivs
    }

    pub fn num_knots(&self) -> usize {
        self.xs.len()
    }

    pub fn left_slope(&self) -> f64 {
        self.derivs[0]
    }

    pub fn right_slope(&self) -> f64 {
        self.derivs[self.derivs.len() - 1]
    }

    fn x_range(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    fn y_range(&self) -> (f64, f64) {
        (self.ys[0], self.ys[self.ys.len() - 1])
    }

    #[inline]
    fn bin_params(&self, m: usize) -> (f64, f64, f64, f64, f64) {
        let width = self.xs[m + 1] - self.xs[m];
        let height = self.ys[m + 1] - self.ys[m];
        let s = height / width;
        let d0 = self.derivs[m];
        let d1 = self.derivs[m + 1];
        (width, height, s, d0, d1)
    }

    pub fn forward(&self, x: f64) -> f64 {
        let (x_lo, x_hi) = self.x_range();
        if x <= x_lo {
            return self.ys[0] + self.left_slope() * (x - x_lo);
        }
        if x >= x_hi {
            return self.ys[self.ys.len() - 1] + self.right_slope() * (x - x_hi);
        }
        let m = find_bin(&self.xs, x);
        let (width, height, s, d0, d1) = self.bin_params(m);
        let xi = (x - self.xs[m]) / width;
        let t = xi * (1.0 - xi);
        let sigma = d1 + d0 - 2.0 * s;
        self.ys[m] + height * (s * xi * xi + d0 * t) / (s + sigma * t)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (x_lo, x_hi) = self.x_range();
        if x < x_lo {
            return self.left_slope();
        }
        if x > x_hi {
            return self.right_slope();
        }
        let m = find_bin(&self.xs, x);
        let (width, _, s, d0, d1) = self.bin_params(m);
        let xi = ((x - self.xs[m]) / width).clamp(0.0, 1.0);
        if xi == 0.0 {
            return d0;
        }
        if xi == 1.0 {
            return d1;
        }
        let t = xi * (1.0 - xi);
        let sigma = d1 + d0 - 2.0 * s;
        let denom = s + sigma * t;
        s * s * (d1 * xi * xi + 2.0 * s * t + d0 * (1.0 - xi) * (1.0 - xi)) / (denom * denom)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        let (y_lo, y_hi) = self.y_range();
        if y <= y_lo {
            return self.xs[0] + (y - y_lo) / self.left_slope();
        }
        if y >= y_hi {
            return self.xs[self.xs.len() - 1] + (y - y_hi) / self.right_slope();
        }
        let m = find_bin(&self.ys, y);
        let (width, height, s, d0, d1) = self.bin_params(m);
        let zeta = ((y - self.ys[m]) / height).clamp(0.0, 1.0);
        let sigma = d1 + d0 - 2.0 * s;
        let a = (s - d0) + zeta * sigma;
        let b = d0 - zeta * sigma;
        let c = -s * zeta;
        let disc = (b * b - 4.0 * a * c).max(0.0);
        let xi = (2.0 * c / (-b - disc.sqrt())).clamp(0.0, 1.0);
        self.xs[m] + width * xi
    }
}

/// Knot derivatives from local quadratic fits through each interior knot and
/// its two neighbours. End derivatives default to the adjacent secant slopes;
/// callers replace them according to their boundary policy.
pub fn fit_knot_derivatives(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    let m = xs.len();
    if m < 2 || ys.len() != m {
        return Err(SinfError::InvalidArgument(format!(
            "need M >= 2 knots with matching lengths (got {}, {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) || ys.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SinfError::InvalidData(
            "knots must be strictly increasing".into(),
        ));
    }
    let slopes: Vec<f64> = (0..m - 1)
        .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
        .collect();
    let mut derivs = Vec::with_capacity(m);
    derivs.push(slopes[0]);
    for i in 1..m - 1 {
        let left = xs[i] - xs[i - 1];
        let right = xs[i + 1] - xs[i];
        derivs.push((slopes[i - 1] * right + slopes[i] * left) / (left + right));
    }
    derivs.push(slopes[m - 2]);
    Ok(derivs)
}

/// Drops knots that would break strict monotonicity: any knot within
/// [`KNOT_MERGE_TOL`] of the previously kept knot in x or in y.
pub fn merge_close_knots(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut kx = Vec::with_capacity(xs.len());
    let mut ky = Vec::with_capacity(ys.len());
    for (&x, &y) in xs.iter().zip(ys) {
        if !x.is_finite() || !y.is_finite() {
            continue;
        }
        match (kx.last(), ky.last()) {
            (Some(&px), Some(&py)) if x - px <= KNOT_MERGE_TOL || y - py <= KNOT_MERGE_TOL => {}
            _ => {
                kx.push(x);
                ky.push(y);
            }
        }
    }
    (kx, ky)
}

/// A spline blended with the identity: `(1 - α₁) ψ(x) + α₁ x` on the knot
/// range, and tails continuing linearly with slope `(1 - α₂) ψ' + α₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedMap {
    base: RqSpline,
    alpha_spline: f64,
    alpha_tail: f64,
}

const INVERSE_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;

impl RegularizedMap {
    pub fn new(base: RqSpline, alpha_spline: f64, alpha_tail: f64) -> Result<Self> {
        for a in [alpha_spline, alpha_tail] {
            if !(0.0..1.0).contains(&a) {
                return Err(SinfError::InvalidArgument(format!(
                    "regularization alpha must lie in [0, 1), got {a}"
                )));
            }
        }
        Ok(Self {
            base,
            alpha_spline,
            alpha_tail,
        })
    }

    pub fn unregularized(base: RqSpline) -> Self {
        Self {
            base,
            alpha_spline: 0.0,
            alpha_tail: 0.0,
        }
    }

    pub fn identity() -> Self {
        Self::unregularized(RqSpline::identity())
    }

    pub fn is_identity(&self) -> bool {
        self.base.is_identity()
    }

    pub fn base(&self) -> &RqSpline {
        &self.base
    }

    pub fn alpha_spline(&self) -> f64 {
        self.alpha_spline
    }

    pub fn alpha_tail(&self) -> f64 {
        self.alpha_tail
    }

    fn interior(&self, x: f64) -> f64 {
        (1.0 - self.alpha_spline) * self.base.forward(x) + self.alpha_spline * x
    }

    fn left_slope(&self) -> f64 {
        (1.0 - self.alpha_tail) * self.base.left_slope() + self.alpha_tail
    }

    fn right_slope(&self) -> f64 {
        (1.0 - self.alpha_tail) * self.base.right_slope() + self.alpha_tail
    }

    fn knot_value(&self, m: usize) -> f64 {
        (1.0 - self.alpha_spline) * self.base.ys[m] + self.alpha_spline * self.base.xs[m]
    }

    pub fn forward(&self, x: f64) -> f64 {
        if self.alpha_spline == 0.0 && self.alpha_tail == 0.0 {
            return self.base.forward(x);
        }
        let (x_lo, x_hi) = self.base.x_range();
        let last = self.base.num_knots() - 1;
        if x < x_lo {
            self.knot_value(0) + self.left_slope() * (x - x_lo)
        } else if x > x_hi {
            self.knot_value(last) + self.right_slope() * (x - x_hi)
        } else {
            self.interior(x)
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if self.alpha_spline == 0.0 && self.alpha_tail == 0.0 {
            return self.base.derivative(x);
        }
        let (x_lo, x_hi) = self.base.x_range();
        if x < x_lo {
            self.left_slope()
        } else if x > x_hi {
            self.right_slope()
        } else {
            (1.0 - self.alpha_spline) * self.base.derivative(x) + self.alpha_spline
        }
    }

    /// Inverse map. Closed form when unregularized or in the tails; otherwise a
    /// bracketed Newton iteration inside the bin that contains `y`.
    pub fn inverse(&self, y: f64) -> f64 {
        if self.alpha_spline == 0.0 && self.alpha_tail == 0.0 {
            return self.base.inverse(y);
        }
        let last = self.base.num_knots() - 1;
        let y_lo = self.knot_value(0);
        let y_hi = self.knot_value(last);
        if y <= y_lo {
            return self.base.xs[0] + (y - y_lo) / self.left_slope();
        }
        if y >= y_hi {
            return self.base.xs[last] + (y - y_hi) / self.right_slope();
        }
        if self.alpha_spline == 0.0 {
            return self.base.inverse(y);
        }
        // Bin search over the blended knot values, which stay increasing.
        let (mut lo, mut hi) = (0, last);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.knot_value(mid) <= y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut a = self.base.xs[lo];
        let mut b = self.base.xs[hi];
        // Start from the unregularized inverse, clamped into the bracket.
        let mut x = self.base.inverse(y).clamp(a, b);
        for _ in 0..MAX_BISECTIONS {
            let f = self.interior(x) - y;
            if f == 0.0 {
                return x;
            }
            if f > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let df = self.derivative(x);
            let newton = x - f / df;
            let next = if newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            if (next - x).abs() <= INVERSE_TOL * (1.0 + x.abs()) || b - a <= INVERSE_TOL {
                return next;
            }
            x = next;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_spline() -> RqSpline {
        RqSpline::new(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 2.0, 3.0],
            vec![1.0, 1.5, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn knot_derivative_formula() {
        let d = fit_knot_derivatives(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(d[1], 1.0);
        let d = fit_knot_derivatives(&[0.0, 1.0, 2.0], &[0.0, 2.0, 3.0]).unwrap();
        assert!((d[1] - 1.5).abs() < 1e-15);
        let xs = [-1.0, 0.5, 0.7, 3.0, 10.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 + 0.25 * x).collect();
        let d = fit_knot_derivatives(&xs, &ys).unwrap();
        assert!(d.iter().all(|v| (v - 0.25).abs() < 1e-14));
        assert!(fit_knot_derivatives(&[0.0, 1.0, 0.5], &[0.0, 1.0, 2.0]).is_err());
        assert!(fit_knot_derivatives(&[0.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn forward_bin_value() {
        let s = example_spline();
        // s = 2, σ = 1.5 + 1 - 4 = -1.5, ξ = 0.5.
        let xi: f64 = 0.5;
        let expected =
            2.0 * (2.0 * xi * xi + 1.0 * xi * (1.0 - xi)) / (2.0 - 1.5 * xi * (1.0 - xi));
        assert!((s.forward(0.5) - expected).abs() < 1e-15);
        assert!((s.forward(0.5) - 0.923_076_923_076_923).abs() < 1e-12);
        assert_eq!(s.forward(1.0), 2.0);
        assert_eq!(s.forward(3.0), 3.0 + 1.0);
        assert_eq!(s.forward(-2.0), -2.0);
    }

    #[test]
    fn derivative_at_knots_and_tails() {
        let s = example_spline();
        assert!((s.derivative(0.0) - 1.0).abs() < 1e-15);
        assert!((s.derivative(1.0) - 1.5).abs() < 1e-12);
        assert!((s.derivative(2.0) - 1.0).abs() < 1e-12);
        assert_eq!(s.derivative(5.0), 1.0);
        let id = RqSpline::identity();
        for x in [-3.0, 0.2, 0.9, 7.0] {
            assert!((id.derivative(x) - 1.0).abs() < 1e-15);
            assert!((id.inverse(x) - x).abs() < 1e-15);
        }
    }

    #[test]
    fn inverse_hits_knots() {
        let s = example_spline();
        for (&x, &y) in s.xs().iter().zip(s.ys()) {
            assert!((s.inverse(y) - x).abs() < 1e-14);
        }
        assert!((s.inverse(s.forward(0.37)) - 0.37).abs() < 1e-14);
    }

    #[test]
    fn rejects_invalid_knots() {
        assert!(RqSpline::new(vec![0.0], vec![0.0], vec![1.0]).is_err());
        assert!(RqSpline::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(RqSpline::new(vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn merge_drops_duplicates() {
        let (x, y) = merge_close_knots(&[0.0, 0.0, 1.0, 2.0], &[0.0, 0.5, 1.0, 1.0]);
        assert_eq!(x, vec![0.0, 1.0]);
        assert_eq!(y, vec![0.0, 1.0]);
    }

    #[test]
    fn regularized_blend() {
        let base = example_spline();
        let plain = RegularizedMap::new(base.clone(), 0.0, 0.0).unwrap();
        assert_eq!(plain.forward(0.5), base.forward(0.5));
        let reg = RegularizedMap::new(base.clone(), 0.5, 0.0).unwrap();
        let expected = 0.5 * base.forward(0.5) + 0.5 * 0.5;
        assert!((reg.forward(0.5) - expected).abs() < 1e-15);
        assert!((reg.forward(0.5) - 0.711_538_461_538_461_5).abs() < 1e-12);
        assert!(RegularizedMap::new(base, 1.0, 0.0).is_err());
    }

    #[test]
    fn regularized_tails_are_continuous() {
        let reg = RegularizedMap::new(example_spline(), 0.3, 0.8).unwrap();
        let eps = 1e-9;
        assert!((reg.forward(2.0 + eps) - reg.forward(2.0 - eps)).abs() < 1e-8);
        assert!((reg.forward(0.0 + eps) - reg.forward(0.0 - eps)).abs() < 1e-8);
        assert!((reg.derivative(10.0) - (0.2 * 1.0 + 0.8)).abs() < 1e-15);
        for x in [-5.0, -0.1, 0.3, 1.7, 2.5, 9.0] {
            assert!((reg.inverse(reg.forward(x)) - x).abs() < 1e-10);
        }
    }
}
