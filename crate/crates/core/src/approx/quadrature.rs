//! Gaussian-expectation quadrature.
//!
//! Everything in this crate that integrates against a normal density is
//! funneled through [`Quadrature::expect`], which computes `E[g(Z)]` for
//! standard normal `Z`. Smooth integrands use a Gauss–Hermite rule after the
//! change of variables `z = sqrt(2)·u`; integrands with known kinks (the ReLU
//! corner, tabulated knots) are split at the kink locations and each panel is
//! handled by a Gauss–Legendre rule against the explicit density, which
//! restores fast convergence across the non-smooth points.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Default number of quadrature nodes.
pub const DEFAULT_NODES: usize = 512;

/// Default relative tolerance for the node-doubling convergence check.
pub const DEFAULT_CHECK_TOLERANCE: f64 = 1e-10;

/// Integration cutoff in standard-normal units. Beyond this the density times
/// any polynomially bounded integrand is far below double-precision roundoff
/// (the normalized Hermite polynomials satisfy |h_l(z)| <= 1.09 e^{z^2/4}, so
/// the weighted integrand decays at least like e^{-z^2/4}).
const Z_CUT: f64 = 20.0;

/// Node-skip cutoff for the Hermite path, in Gauss–Hermite units (z = sqrt2·u).
/// Contributions beyond it are bounded by e^{-u^2/2} < 1e-86; skipping them
/// also prevents 0·inf = NaN at the extreme nodes of large rules.
const U_CUT: f64 = 20.0;

const SQRT_PI: f64 = 1.772453850905516;
const SQRT_2PI: f64 = 2.5066282746310002;

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

/// Nodes and weights of a one-dimensional rule.
struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Gauss–Hermite rule for weight e^{-u^2} on the real line.
///
/// Nodes are the eigenvalues of the Jacobi matrix (zero diagonal, off-diagonal
/// sqrt(i/2)), located by Sturm-sequence bisection — extrapolated Newton
/// starts lose roots once n reaches the hundreds — then polished by Newton on
/// the orthonormal recurrence. Weights are 2/p_n'(x)^2, assembled in log space
/// so far-tail weights underflow cleanly to zero instead of tripping inf
/// arithmetic.
fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 2);
    let offdiag_sq: Vec<f64> = (1..n).map(|i| i as f64 / 2.0).collect();
    let bound = (2.0 * n as f64 + 1.0).sqrt() + 2.0;

    // Number of eigenvalues strictly below x, by the inertia of J - xI.
    let count_below = |x: f64| -> usize {
        let mut d = -x;
        let mut count = usize::from(d < 0.0);
        for &bsq in &offdiag_sq {
            if d == 0.0 {
                d = -1e-300;
            }
            d = -x - bsq / d;
            count += usize::from(d < 0.0);
        }
        count
    };

    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n / 2;

    // Non-negative eigenvalues: indices half..n-1 in ascending order.
    for k in half..n {
        let mut lo = 0.0f64;
        let mut hi = bound;
        for _ in 0..90 {
            let mid = 0.5 * (lo + hi);
            if count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-14 * hi.max(1.0) {
                break;
            }
        }
        let (z, log_pp) = newton_polish_hermite(n, 0.5 * (lo + hi));

        // Store in descending order from index 0 to mirror the rule layout.
        let i = n - 1 - k;
        let w = 2.0 * (-2.0 * log_pp).exp();
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        // Odd rules have an exact zero node; the mirror assignment above
        // already wrote it, but force symmetry explicitly.
        nodes[half] = 0.0;
    }
    Rule { nodes, weights }
}

/// A few Newton steps on the orthonormal physicists' Hermite recurrence.
/// Returns the refined root and ln|p_n'| there, tracked through periodic
/// renormalization because the raw polynomial values overflow f64 near the
/// extreme nodes of large rules.
fn newton_polish_hermite(n: usize, start: f64) -> (f64, f64) {
    const PIM4: f64 = 0.7511255444649425; // pi^(-1/4)
    const RESCALE: f64 = 1e100;
    let mut z = start;
    let mut log_pp = 0.0;
    for _ in 0..8 {
        let mut rescales = 0i64;
        let mut p_prev = 0.0f64;
        let mut p = PIM4;
        for j in 1..=n {
            let p_next =
                z * (2.0 / j as f64).sqrt() * p - ((j as f64 - 1.0) / j as f64).sqrt() * p_prev;
            p_prev = p;
            p = p_next;
            if p.abs() > RESCALE {
                p /= RESCALE;
                p_prev /= RESCALE;
                rescales += 1;
            }
        }
        let pp = (2.0 * n as f64).sqrt() * p_prev;
        let dz = p / pp;
        z -= dz;
        log_pp = pp.abs().ln() + rescales as f64 * RESCALE.ln();
        if dz.abs() <= 1e-16 * z.abs().max(1.0) {
            break;
        }
    }
    (z, log_pp)
}

/// Gauss–Legendre rule on [-1, 1].
fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 2);
    const MAX_NEWTON: usize = 64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);

    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..MAX_NEWTON {
            let mut p_prev = 0.0f64;
            let mut p = 1.0f64;
            for j in 1..=n {
                let jf = j as f64;
                let p_next = ((2.0 * jf - 1.0) * z * p - (jf - 1.0) * p_prev) / jf;
                p_prev = p;
                p = p_next;
            }
            pp = n as f64 * (z * p - p_prev) / (z * z - 1.0);
            let dz = p / pp;
            z -= dz;
            if dz.abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum RuleKind {
    Hermite,
    Legendre,
}

fn cached_rule(kind: RuleKind, n: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<BTreeMap<(u8, usize), Arc<Rule>>>> = OnceLock::new();
    let key = (if kind == RuleKind::Hermite { 0u8 } else { 1u8 }, n);
    let cache = CACHE.get_or_init(|| Mutex::new(BTreeMap::new()));
    let mut guard = cache.lock().expect("quadrature rule cache poisoned");
    guard
        .entry(key)
        .or_insert_with(|| {
            Arc::new(match kind {
                RuleKind::Hermite => gauss_hermite(n),
                RuleKind::Legendre => gauss_legendre(n),
            })
        })
        .clone()
}

/// Configuration for Gaussian-expectation integrals.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    /// Base node count; the convergence check doubles it.
    pub nodes: usize,
    /// Relative tolerance for the node-doubling check, measured against the
    /// largest coefficient of the fitted series.
    pub check_tolerance: f64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            nodes: DEFAULT_NODES,
            check_tolerance: DEFAULT_CHECK_TOLERANCE,
        }
    }
}

impl Quadrature {
    /// `E[g(Z)]` for standard normal `Z`, at the base node count.
    ///
    /// `breakpoints` are locations (in standard-normal coordinates) where the
    /// integrand is non-smooth; the domain is split there.
    pub fn expect(&self, breakpoints: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        self.expect_at(self.nodes, breakpoints, g)
    }

    /// Same as [`Quadrature::expect`] with an explicit node count.
    pub fn expect_at(&self, n: usize, breakpoints: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        let mut sum = 0.0;
        self.visit_nodes(n, breakpoints, |z, w| sum += w * g(z));
        sum
    }

    /// Vector-valued expectation: returns `E[g(Z)]` component-wise, with `g`
    /// writing its `dim` outputs into the provided scratch slice. One pass
    /// over the nodes regardless of `dim`.
    pub fn expect_vec_at(
        &self,
        n: usize,
        breakpoints: &[f64],
        dim: usize,
        g: impl Fn(f64, &mut [f64]),
    ) -> Vec<f64> {
        let mut acc = vec![0.0; dim];
        let mut scratch = vec![0.0; dim];
        self.visit_nodes(n, breakpoints, |z, w| {
            g(z, &mut scratch);
            for (a, s) in acc.iter_mut().zip(&scratch) {
                *a += w * s;
            }
        });
        acc
    }

    /// Visit every quadrature node as `(z, effective_weight)` so that
    /// `Σ effective_weight · g(z) ≈ E[g(Z)]`.
    fn visit_nodes(&self, n: usize, breakpoints: &[f64], mut visit: impl FnMut(f64, f64)) {
        let mut cuts: Vec<f64> = breakpoints
            .iter()
            .copied()
            .filter(|b| b.is_finite() && b.abs() < Z_CUT)
            .collect();
        if cuts.is_empty() {
            let rule = cached_rule(RuleKind::Hermite, n);
            for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
                if u.abs() > U_CUT {
                    continue;
                }
                visit(std::f64::consts::SQRT_2 * u, w / SQRT_PI);
            }
            return;
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).expect("breakpoints must not be NaN"));
        cuts.dedup();

        let rule = cached_rule(RuleKind::Legendre, n);
        let mut lo = -Z_CUT;
        for &cut in cuts.iter().chain(std::iter::once(&Z_CUT)) {
            let half = 0.5 * (cut - lo);
            let mid = 0.5 * (cut + lo);
            for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
                let z = mid + half * t;
                visit(z, w * half * std_normal_pdf(z));
            }
            lo = cut;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hermite_rule_moments() {
        for n in [8, 64, 512, 1024] {
            let rule = gauss_hermite(n);
            let total: f64 = rule.weights.iter().sum();
            assert_abs_diff_eq!(total, SQRT_PI, epsilon = 1e-12);
            let second: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * x * x)
                .sum();
            assert_abs_diff_eq!(second, SQRT_PI / 2.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn legendre_rule_moments() {
        for n in [8, 64, 512, 1024] {
            let rule = gauss_legendre(n);
            let total: f64 = rule.weights.iter().sum();
            assert_abs_diff_eq!(total, 2.0, epsilon = 1e-13);
            let second: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * x * x)
                .sum();
            assert_abs_diff_eq!(second, 2.0 / 3.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn gaussian_moments_smooth_path() {
        let q = Quadrature::default();
        assert_abs_diff_eq!(q.expect(&[], |_| 1.0), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(q.expect(&[], |z| z), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(q.expect(&[], |z| z * z), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(q.expect(&[], |z| z.powi(4)), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn split_path_matches_known_folded_moments() {
        let q = Quadrature::default();
        // E|Z| = sqrt(2/pi)
        let e_abs = q.expect(&[0.0], |z| z.abs());
        assert_abs_diff_eq!(e_abs, (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-13);
        // E[max(Z,0)] = 1/sqrt(2 pi)
        let e_relu = q.expect(&[0.0], |z| z.max(0.0));
        assert_abs_diff_eq!(e_relu, 1.0 / SQRT_2PI, epsilon = 1e-13);
        // split points outside the cutoff fall back to the smooth path
        let e_sq = q.expect(&[25.0], |z| z * z);
        assert_abs_diff_eq!(e_sq, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn split_and_smooth_paths_agree_on_smooth_integrands() {
        let q = Quadrature::default();
        let smooth = q.expect(&[], |z| (0.3 * z).sin() + z * z);
        let split = q.expect(&[0.7], |z| (0.3 * z).sin() + z * z);
        assert_abs_diff_eq!(smooth, split, epsilon = 1e-12);
    }

    #[test]
    fn doubling_is_consistent() {
        let q = Quadrature::default();
        let base = q.expect_at(512, &[0.0], |z| z.max(0.0) * z);
        let fine = q.expect_at(1024, &[0.0], |z| z.max(0.0) * z);
        assert_abs_diff_eq!(base, fine, epsilon = 1e-13);
        assert_abs_diff_eq!(base, 0.5, epsilon = 1e-13);
    }
}

