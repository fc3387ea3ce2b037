//! Scalar activation functions.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const INV_SQRT_2PI: f64 = 0.3989422804014327;

/// Standard normal CDF, via the complementary error function for tail
/// accuracy.
fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// A scalar activation function: deterministic and finite on finite inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ScalarActivation {
    Relu,
    /// Exact GELU, `x · Φ(x)` with `Φ` the standard normal CDF.
    Gelu,
    Identity,
    /// Piecewise-linear interpolation of `(x, f(x))` pairs, linearly
    /// extrapolated beyond the table with the end-segment slopes.
    Tabulated {
        points: Vec<(f64, f64)>,
    },
}

impl ScalarActivation {
    /// Validated tabulated activation. The table must have at least two
    /// points, strictly increasing in `x`, all values finite.
    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidActivation {
                reason: format!("tabulated activation needs >= 2 points, got {}", points.len()),
            });
        }
        for pair in points.windows(2) {
            if !(pair[0].0 < pair[1].0) {
                return Err(Error::InvalidActivation {
                    reason: format!(
                        "tabulated x values must be strictly increasing ({} then {})",
                        pair[0].0, pair[1].0
                    ),
                });
            }
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidActivation {
                reason: "tabulated points must be finite".into(),
            });
        }
        Ok(ScalarActivation::Tabulated { points })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarActivation::Relu => x.max(0.0),
            ScalarActivation::Gelu => x * normal_cdf(x),
            ScalarActivation::Identity => x,
            ScalarActivation::Tabulated { points } => tabulated_eval(points, x),
        }
    }

    /// Pointwise derivative, used by backpropagation. At the ReLU corner the
    /// subgradient 0 is used; tabulated activations use the segment slope
    /// (right-continuous at knots).
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            ScalarActivation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ScalarActivation::Gelu => normal_cdf(x) + x * normal_pdf(x),
            ScalarActivation::Identity => 1.0,
            ScalarActivation::Tabulated { points } => tabulated_slope(points, x),
        }
    }

    /// Locations where the function is not smooth, in its own coordinates.
    /// The fitting quadrature splits its domain at these points.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            ScalarActivation::Relu => vec![0.0],
            ScalarActivation::Gelu | ScalarActivation::Identity => Vec::new(),
            ScalarActivation::Tabulated { points } => points.iter().map(|(x, _)| *x).collect(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScalarActivation::Relu => "relu",
            ScalarActivation::Gelu => "gelu",
            ScalarActivation::Identity => "identity",
            ScalarActivation::Tabulated { .. } => "tabulated",
        }
    }

    /// Parse one of the named kinds (tabulated activations only come from
    /// constructed tables, not names).
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(ScalarActivation::Relu),
            "gelu" => Ok(ScalarActivation::Gelu),
            "identity" => Ok(ScalarActivation::Identity),
            other => Err(Error::InvalidActivation {
                reason: format!("unknown activation '{other}' (expected relu|gelu|identity)"),
            }),
        }
    }
}

fn segment_index(points: &[(f64, f64)], x: f64) -> usize {
    // Index of the segment whose slope applies at x; clamped to end segments.
    match points.binary_search_by(|(px, _)| px.partial_cmp(&x).expect("finite table")) {
        Ok(i) => i.min(points.len() - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(points.len() - 2),
    }
}

fn tabulated_eval(points: &[(f64, f64)], x: f64) -> f64 {
    let i = segment_index(points, x);
    let (x0, y0) = points[i];
    let (x1, y1) = points[i + 1];
    y0 + (y1 - y0) / (x1 - x0) * (x - x0)
}

fn tabulated_slope(points: &[(f64, f64)], x: f64) -> f64 {
    let i = segment_index(points, x);
    let (x0, y0) = points[i];
    let (x1, y1) = points[i + 1];
    (y1 - y0) / (x1 - x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn relu_and_identity() {
        assert_eq!(ScalarActivation::Relu.eval(-2.0), 0.0);
        assert_eq!(ScalarActivation::Relu.eval(3.0), 3.0);
        assert_eq!(ScalarActivation::Identity.eval(-7.5), -7.5);
    }

    #[test]
    fn gelu_known_values() {
        let g = ScalarActivation::Gelu;
        assert_abs_diff_eq!(g.eval(0.0), 0.0);
        // GELU(x) -> x as x -> inf, -> 0 as x -> -inf
        assert_abs_diff_eq!(g.eval(10.0), 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.eval(-10.0), 0.0, epsilon = 1e-12);
        // GELU(1) = Φ(1) = 0.8413447460685429
        assert_abs_diff_eq!(g.eval(1.0), 0.8413447460685429, epsilon = 1e-12);
    }

    #[test]
    fn gelu_derivative_matches_finite_difference() {
        let g = ScalarActivation::Gelu;
        for &x in &[-2.0, -0.3, 0.0, 0.9, 4.0] {
            let h = 1e-6;
            let fd = (g.eval(x + h) - g.eval(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(g.derivative(x), fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn tabulated_interpolates_and_extrapolates() {
        let t = ScalarActivation::tabulated(vec![(0.0, 0.0), (1.0, 2.0), (3.0, 2.0)]).unwrap();
        assert_abs_diff_eq!(t.eval(0.5), 1.0);
        assert_abs_diff_eq!(t.eval(2.0), 2.0);
        assert_abs_diff_eq!(t.eval(-1.0), -2.0); // extrapolated with slope 2
        assert_abs_diff_eq!(t.eval(4.0), 2.0); // extrapolated with slope 0
        assert_abs_diff_eq!(t.derivative(0.2), 2.0);
        assert_abs_diff_eq!(t.derivative(2.5), 0.0);
    }

    #[test]
    fn tabulated_rejects_unsorted_tables() {
        assert!(ScalarActivation::tabulated(vec![(1.0, 0.0), (0.0, 1.0)]).is_err());
        assert!(ScalarActivation::tabulated(vec![(0.0, 0.0)]).is_err());
        assert!(ScalarActivation::tabulated(vec![(0.0, 0.0), (0.0, 1.0)]).is_err());
    }
}
