//! Gaussian-weighted least-squares polynomial approximation of scalar
//! activations in the orthonormal Hermite basis.
//!
//! The best degree-`d` approximation of `f` under the weight `N(mu, s^2)` is
//! the truncated expansion whose coefficients are `c_l = E[f(mu + s·Z) h_l(Z)]`
//! for standard normal `Z`, and its mean squared error has the Parseval form
//! `E[f^2] − Σ c_l^2`. Series are stored and evaluated in the Hermite basis
//! throughout; at degree 255 a monomial conversion would be hopelessly
//! ill-conditioned, while the three-term recurrence is stable.

mod hermite;
pub mod quadrature;

pub use hermite::hermite_ortho;
pub use quadrature::Quadrature;

use crate::activation::ScalarActivation;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::BTreeMap;

/// Largest series degree supported anywhere in the crate.
pub const MAX_DEGREE: usize = 255;

/// Parseval MSE values in `[-MSE_CLAMP, 0)` clamp to zero; anything more
/// negative signals an inconsistent quadrature and is an error.
pub const MSE_CLAMP: f64 = 1e-9;

/// The fitting weight: a normal distribution `N(mu, (r·sigma)^2)`.
///
/// `r >= 1` widens the weight relative to the observed input distribution,
/// trading accuracy near the mean for robustness in the tails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianWeight {
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
}

impl GaussianWeight {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        Self::scaled(mu, sigma, 1.0)
    }

    pub fn scaled(mu: f64, sigma: f64, r: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || !(sigma > 0.0) {
            return Err(Error::InvalidWeight {
                reason: format!("mu = {mu}, sigma = {sigma}; need finite mu and sigma > 0"),
            });
        }
        if !r.is_finite() || !(r >= 1.0) {
            return Err(Error::InvalidWeight {
                reason: format!("scale ratio r = {r}; need finite r >= 1"),
            });
        }
        Ok(GaussianWeight { mu, sigma, r })
    }

    /// The standard deviation actually used for fitting, `r·sigma`.
    pub fn sigma_eff(&self) -> f64 {
        self.r * self.sigma
    }

    /// Activation breakpoints mapped to standard-normal coordinates.
    fn breakpoints_z(&self, f: &ScalarActivation) -> Vec<f64> {
        let s = self.sigma_eff();
        f.breakpoints()
            .into_iter()
            .map(|b| (b - self.mu) / s)
            .collect()
    }
}

/// A fitted polynomial stored as coefficients in the shifted/scaled
/// orthonormal Hermite basis: `p(x) = Σ_l coeffs[l] · h_l((x − mu)/sigma_eff)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteSeries {
    mu: f64,
    sigma_eff: f64,
    coeffs: Vec<f64>,
}

impl HermiteSeries {
    pub fn new(mu: f64, sigma_eff: f64, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() > MAX_DEGREE + 1 {
            return Err(Error::DegreeTooLarge {
                degree: coeffs.len().saturating_sub(1),
                max: MAX_DEGREE,
            });
        }
        if !mu.is_finite() || !sigma_eff.is_finite() || !(sigma_eff > 0.0) {
            return Err(Error::InvalidWeight {
                reason: format!("series center mu = {mu}, sigma_eff = {sigma_eff}"),
            });
        }
        if let Some(index) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteCoefficient { index });
        }
        Ok(HermiteSeries {
            mu,
            sigma_eff,
            coeffs,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma_eff(&self) -> f64 {
        self.sigma_eff
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Evaluate the series at `x` using the same recurrence as
    /// [`hermite_ortho`], accumulating term by term.
    pub fn eval(&self, x: f64) -> f64 {
        hermite::hermite_sum(&self.coeffs, (x - self.mu) / self.sigma_eff)
    }

    /// Derivative at `x`, from `h_l' = sqrt(l)·h_{l−1}` and the chain rule.
    pub fn derivative(&self, x: f64) -> f64 {
        hermite::hermite_sum_derivative(&self.coeffs, (x - self.mu) / self.sigma_eff)
            / self.sigma_eff
    }

    /// Serialize as `{mu, sigma_eff, coeffs}` with coefficients rendered as
    /// decimal strings carrying 17 significant digits, enough to round-trip
    /// an f64 exactly.
    pub fn to_json_string(&self) -> String {
        let raw = SeriesJson {
            mu: self.mu,
            sigma_eff: self.sigma_eff,
            coeffs: self.coeffs.iter().map(|c| format!("{c:.16e}")).collect(),
        };
        serde_json::to_string_pretty(&raw).expect("series serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: SeriesJson = serde_json::from_str(text)?;
        let mut coeffs = Vec::with_capacity(raw.coeffs.len());
        for (index, c) in raw.coeffs.iter().enumerate() {
            let value: f64 = c.parse().map_err(|_| Error::NonFiniteCoefficient { index })?;
            coeffs.push(value);
        }
        HermiteSeries::new(raw.mu, raw.sigma_eff, coeffs)
    }
}

#[derive(Serialize, Deserialize)]
struct SeriesJson {
    mu: f64,
    sigma_eff: f64,
    coeffs: Vec<String>,
}

/// Per-degree minimized MSE of one activation under one weight, derived from
/// a single maximal-degree fit so the table is non-increasing by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    /// `degree -> E[d; f]` for every degree `0..=max` requested.
    pub by_degree: BTreeMap<usize, f64>,
    /// `<f, f>` under the weight.
    pub total_energy: f64,
}

/// Fit the degree-`d` least-squares series with the default quadrature.
pub fn fit(f: &ScalarActivation, w: &GaussianWeight, degree: usize) -> Result<HermiteSeries> {
    fit_with(f, w, degree, &Quadrature::default())
}

/// Fit with explicit quadrature settings.
///
/// Coefficients are Gauss–Hermite integrals after the change of variables
/// `t = mu + sigma_eff·sqrt(2)·u`; convergence is verified by doubling the
/// node count and requiring agreement within `check_tolerance` relative to
/// the largest coefficient.
pub fn fit_with(
    f: &ScalarActivation,
    w: &GaussianWeight,
    degree: usize,
    quad: &Quadrature,
) -> Result<HermiteSeries> {
    if degree > MAX_DEGREE {
        return Err(Error::DegreeTooLarge {
            degree,
            max: MAX_DEGREE,
        });
    }
    let base = coefficients_at(f, w, degree, quad, quad.nodes);
    let fine = coefficients_at(f, w, degree, quad, quad.nodes * 2);

    let scale = fine.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1e-300);
    let tolerance = quad.check_tolerance * scale;
    for (index, (b, f_)) in base.iter().zip(&fine).enumerate() {
        let delta = (b - f_).abs();
        if !(delta <= tolerance) {
            return Err(Error::QuadratureNotConverged {
                index,
                delta,
                tolerance,
            });
        }
    }
    HermiteSeries::new(w.mu, w.sigma_eff(), base)
}

fn coefficients_at(
    f: &ScalarActivation,
    w: &GaussianWeight,
    degree: usize,
    quad: &Quadrature,
    nodes: usize,
) -> Vec<f64> {
    let breaks = w.breakpoints_z(f);
    let mu = w.mu;
    let s = w.sigma_eff();
    let row = RefCell::new(Vec::with_capacity(degree + 1));
    quad.expect_vec_at(nodes, &breaks, degree + 1, |z, out| {
        let fv = f.eval(mu + s * z);
        let mut row = row.borrow_mut();
        hermite::hermite_row(degree, z, &mut row);
        for (o, h) in out.iter_mut().zip(row.iter()) {
            *o = fv * h;
        }
    })
}

fn check_same_weight(w: &GaussianWeight, p: &HermiteSeries) -> Result<()> {
    if p.mu != w.mu || p.sigma_eff != w.sigma_eff() {
        return Err(Error::InvalidWeight {
            reason: format!(
                "series was fitted at N({}, {}^2) but the weight is N({}, {}^2)",
                p.mu,
                p.sigma_eff,
                w.mu,
                w.sigma_eff()
            ),
        });
    }
    Ok(())
}

/// `<f, f>` under the weight: `E[f(mu + sigma_eff·Z)^2]`.
pub fn energy(f: &ScalarActivation, w: &GaussianWeight) -> f64 {
    let quad = Quadrature::default();
    let (mu, s) = (w.mu, w.sigma_eff());
    quad.expect(&w.breakpoints_z(f), |z| {
        let v = f.eval(mu + s * z);
        v * v
    })
}

/// Minimized MSE in Parseval form: `<f,f> − Σ c_l^2`, clamped at zero for
/// tiny negative roundoff.
pub fn mse(f: &ScalarActivation, w: &GaussianWeight, p: &HermiteSeries) -> Result<f64> {
    check_same_weight(w, p)?;
    let total = energy(f, w);
    let sum_sq: f64 = p.coeffs.iter().map(|c| c * c).sum();
    clamp_mse(total - sum_sq)
}

fn clamp_mse(value: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -MSE_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::QuadratureInconsistent { value })
    }
}

/// Direct-quadrature MSE `E[(f − p)^2]`, the cross-check for the Parseval
/// route. Not clamped.
pub fn mse_direct(f: &ScalarActivation, w: &GaussianWeight, p: &HermiteSeries) -> f64 {
    let quad = Quadrature::default();
    let (mu, s) = (w.mu, w.sigma_eff());
    quad.expect(&w.breakpoints_z(f), |z| {
        let x = mu + s * z;
        let d = f.eval(x) - p.eval(x);
        d * d
    })
}

/// Mean residual `E[f − p]` under the weight. The projection keeps the
/// degree-0 component exact, so this is zero up to quadrature error for any
/// series produced by [`fit`].
pub fn mean_residual(f: &ScalarActivation, w: &GaussianWeight, p: &HermiteSeries) -> f64 {
    let quad = Quadrature::default();
    let (mu, s) = (w.mu, w.sigma_eff());
    quad.expect(&w.breakpoints_z(f), |z| {
        let x = mu + s * z;
        f.eval(x) - p.eval(x)
    })
}

/// MSE table for all degrees `0..=max_degree`, from one fit at `max_degree`.
pub fn mse_report(
    f: &ScalarActivation,
    w: &GaussianWeight,
    max_degree: usize,
) -> Result<MseReport> {
    let series = fit(f, w, max_degree)?;
    let total_energy = energy(f, w);
    let mut by_degree = BTreeMap::new();
    let mut prefix = 0.0;
    for (degree, c) in series.coeffs.iter().enumerate() {
        prefix += c * c;
        by_degree.insert(degree, clamp_mse(total_energy - prefix)?);
    }
    Ok(MseReport {
        by_degree,
        total_energy,
    })
}

#[cfg(test)]
mod tests;
