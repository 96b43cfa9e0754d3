use crate::error::{Result, SinfError};

/// Elementwise data preprocessing applied before the flow layers.
///
/// The logit transform squeezes `x ∈ [0, 1]` to `s = λ + (1 - 2λ) x` and maps
/// it to `ln s - ln(1 - s)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Preprocess {
    #[default]
    Identity,
    Logit {
        lambda: f64,
    },
}

impl Preprocess {
    pub fn logit(lambda: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&lambda) {
            return Err(SinfError::InvalidArgument(format!(
                "logit squeeze must lie in [0, 0.5), got {lambda}"
            )));
        }
        Ok(Preprocess::Logit { lambda })
    }

    /// Transforms one value and returns `(value, ln |d value / dx|)`.
    pub fn forward(&self, x: f64) -> Result<(f64, f64)> {
        match *self {
            Preprocess::Identity => Ok((x, 0.0)),
            Preprocess::Logit { lambda } => {
                if !(0.0..=1.0).contains(&x) {
                    return Err(SinfError::InvalidData(format!(
                        "logit preprocessing needs values in [0, 1], got {x}"
                    )));
                }
                // Centered form keeps s = 0.5 exact at x = 0.5.
                let scale = 1.0 - 2.0 * lambda;
                let s = 0.5 + scale * (x - 0.5);
                if s <= 0.0 || s >= 1.0 {
                    return Err(SinfError::InvalidData(format!(
                        "logit of {x} is infinite with squeeze {lambda}"
                    )));
                }
                let z = s.ln() - (1.0 - s).ln();
                let log_jac = scale.ln() - s.ln() - (1.0 - s).ln();
                Ok((z, log_jac))
            }
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        match *self {
            Preprocess::Identity => z,
            Preprocess::Logit { lambda } => {
                let s = if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                };
                0.5 + (s - 0.5) / (1.0 - 2.0 * lambda)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logit_of_half_is_zero() {
        let p = Preprocess::logit(1e-6).unwrap();
        assert_eq!(p.forward(0.5).unwrap().0, 0.0);
        assert!(p.forward(1.5).is_err());
        assert!(Preprocess::logit(0.0).unwrap().forward(0.0).is_err());
    }

    #[test]
    fn logit_jacobian_matches_finite_difference() {
        let p = Preprocess::logit(1e-3).unwrap();
        for x in [0.01, 0.2, 0.5, 0.77, 0.99] {
            let h = 1e-6;
            let fd = (p.forward(x + h).unwrap().0 - p.forward(x - h).unwrap().0) / (2.0 * h);
            let (_, lj) = p.forward(x).unwrap();
            assert!((lj.exp() - fd).abs() < 1e-6 * fd, "{x}");
            let (z, _) = p.forward(x).unwrap();
            assert!((p.inverse(z) - x).abs() < 1e-12);
        }
    }
}
