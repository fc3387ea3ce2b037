use super::*;
use crate::activation::ScalarActivation;
use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::Distribution;

// Analytic Gaussian moments of ReLU against the first basis polynomials:
//   E[relu(Z)]            = 1/sqrt(2 pi)
//   E[relu(Z)·Z]          = 1/2
//   E[relu(Z)·(Z^2−1)/√2] = 1/(2 sqrt(pi))
const RELU_C0: f64 = 0.3989422804014327;
const RELU_C1: f64 = 0.5;
const RELU_C2: f64 = 0.28209479177387814;

#[test]
fn identity_fit_is_exact() {
    let w = GaussianWeight::new(0.0, 1.0).unwrap();
    let p = fit(&ScalarActivation::Identity, &w, 3).unwrap();
    let expected = [0.0, 1.0, 0.0, 0.0];
    for (c, e) in p.coeffs().iter().zip(expected) {
        assert_abs_diff_eq!(*c, e, epsilon = 1e-12);
    }
    assert_abs_diff_eq!(p.eval(5.0), 5.0, epsilon = 1e-12);

    // General weight: identity is mu + sigma_eff·h_1.
    let w = GaussianWeight::scaled(-2.5, 0.7, 2.0).unwrap();
    let p = fit(&ScalarActivation::Identity, &w, 4).unwrap();
    assert_abs_diff_eq!(p.coeffs()[0], -2.5, epsilon = 1e-12);
    assert_abs_diff_eq!(p.coeffs()[1], 1.4, epsilon = 1e-12);
    for c in &p.coeffs()[2..] {
        assert_abs_diff_eq!(*c, 0.0, epsilon = 1e-12);
    }
}

#[test]
fn relu_fit_matches_analytic_moments() {
    let w = GaussianWeight::new(0.0, 1.0).unwrap();
    let p = fit(&ScalarActivation::Relu, &w, 2).unwrap();
    assert_abs_diff_eq!(p.coeffs()[0], RELU_C0, epsilon = 1e-13);
    assert_abs_diff_eq!(p.coeffs()[1], RELU_C1, epsilon = 1e-13);
    assert_abs_diff_eq!(p.coeffs()[2], RELU_C2, epsilon = 1e-13);
}

#[test]
fn relu_fit_matches_monte_carlo_oracle() {
    // Weight from a real profiled layer; each coefficient must sit within
    // three standard errors of a 10^6-sample Monte-Carlo estimate.
    let w = GaussianWeight::new(0.329, 1.948).unwrap();
    let degree = 7;
    let p = fit(&ScalarActivation::Relu, &w, degree).unwrap();

    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0x5eed_1234);
    let normal = rand_distr::StandardNormal;
    let n = 1_000_000usize;
    let mut sums = vec![0.0f64; degree + 1];
    let mut sq_sums = vec![0.0f64; degree + 1];
    for _ in 0..n {
        let z: f64 = normal.sample(&mut rng);
        let fv = (w.mu + w.sigma * z).max(0.0);
        for (l, (s, q)) in sums.iter_mut().zip(sq_sums.iter_mut()).enumerate() {
            let term = fv * hermite_ortho(l, z);
            *s += term;
            *q += term * term;
        }
    }
    for l in 0..=degree {
        let mean = sums[l] / n as f64;
        let var = (sq_sums[l] / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        let diff = (p.coeffs()[l] - mean).abs();
        assert!(
            diff <= 3.0 * se,
            "coefficient {l}: fitted {} vs MC {mean} (3se = {})",
            p.coeffs()[l],
            3.0 * se
        );
    }
}

#[test]
fn eval_degree_zero_is_constant() {
    let p = HermiteSeries::new(0.0, 1.0, vec![2.5]).unwrap();
    assert_abs_diff_eq!(p.eval(-100.0), 2.5);
    assert_abs_diff_eq!(p.eval(7.0), 2.5);
}

#[test]
fn eval_degree_two_relu_series_at_zero() {
    // c0 + c2·h_2(0) = c0 − c2/√2 = 1/(2·sqrt(2 pi))
    let w = GaussianWeight::new(0.0, 1.0).unwrap();
    let p = fit(&ScalarActivation::Relu, &w, 2).unwrap();
    assert_abs_diff_eq!(p.eval(0.0), 0.19947114020071635, epsilon = 1e-12);
}

#[test]
fn relu_mse_degree_zero_analytic() {
    // E[relu(Z)^2] − c0^2 = 1/2 − 1/(2 pi)
    let w = GaussianWeight::new(0.0, 1.0).unwrap();
    let p = fit(&ScalarActivation::Relu, &w, 0).unwrap();
    let e = mse(&ScalarActivation::Relu, &w, &p).unwrap();
    assert_abs_diff_eq!(e, 0.5 - 1.0 / (2.0 * std::f64::consts::PI), epsilon = 1e-12);
}

#[test]
fn identity_mse_is_zero_from_degree_one() {
    let w = GaussianWeight::new(1.0, 2.0).unwrap();
    for d in [1, 2, 5] {
        let p = fit(&ScalarActivation::Identity, &w, d).unwrap();
        let e = mse(&ScalarActivation::Identity, &w, &p).unwrap();
        assert!((0.0..=1e-12).contains(&e), "identity mse {e} not ~0");
    }
}

#[test]
fn parseval_agrees_with_direct_quadrature() {
    let w = GaussianWeight::new(0.0, 1.0).unwrap();
    let p = fit(&ScalarActivation::Relu, &w, 2).unwrap();
    let parseval = mse(&ScalarActivation::Relu, &w, &p).unwrap();
    let direct = mse_direct(&ScalarActivation::Relu, &w, &p);
    assert_abs_diff_eq!(parseval, direct, epsilon = 1e-8);
}

#[test]
fn mean_residual_is_zero() {
    let relu = ScalarActivation::Relu;
    let gelu = ScalarActivation::Gelu;
    let w1 = GaussianWeight::new(0.0, 1.0).unwrap();
    let w2 = GaussianWeight::new(1.0, 2.0).unwrap();
    let p = fit(&relu, &w1, 2).unwrap();
    assert!(mean_residual(&relu, &w1, &p).abs() < 1e-8);
    let p = fit(&gelu, &w2, 3).unwrap();
    assert!(mean_residual(&gelu, &w2, &p).abs() < 1e-8);
    let p = fit(&ScalarActivation::Identity, &w2, 1).unwrap();
    assert!(mean_residual(&ScalarActivation::Identity, &w2, &p).abs() < 1e-12);
}

#[test]
fn orthonormality_under_quadrature() {
    let quad = Quadrature::default();
    for i in 0..=12usize {
        for j in 0..=12usize {
            let inner = quad.expect(&[], |z| hermite_ortho(i, z) * hermite_ortho(j, z));
            let expected = if i == j { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(inner, expected, epsilon = 1e-10);
        }
    }
}

#[test]
fn mse_report_is_monotone_and_bounded() {
    let w = GaussianWeight::new(0.329, 1.948).unwrap();
    let report = mse_report(&ScalarActivation::Relu, &w, 31).unwrap();
    let values: Vec<f64> = report.by_degree.values().copied().collect();
    for pair in values.windows(2) {
        assert!(pair[1] <= pair[0]);
    }
    for v in &values {
        assert!(*v >= 0.0 && *v <= report.total_energy);
    }
}

#[test]
fn degree_cap_is_enforced() {
    let w = GaussianWeight::new(0.0, 1.0).unwrap();
    assert!(matches!(
        fit(&ScalarActivation::Relu, &w, 256),
        Err(crate::error::Error::DegreeTooLarge { .. })
    ));
    assert!(HermiteSeries::new(0.0, 1.0, vec![0.0; 257]).is_err());
    assert!(fit(&ScalarActivation::Relu, &w, 255).is_ok());
}

#[test]
fn scaled_weight_is_pure_reparameterization() {
    // Fitting N(mu, sigma, r) is bit-identical to fitting N(mu, r·sigma, 1).
    let scaled = GaussianWeight::scaled(0.4, 1.3, 2.5).unwrap();
    let direct = GaussianWeight::new(0.4, 1.3 * 2.5).unwrap();
    let a = fit(&ScalarActivation::Gelu, &scaled, 9).unwrap();
    let b = fit(&ScalarActivation::Gelu, &direct, 9).unwrap();
    assert_eq!(a.coeffs(), b.coeffs());
    assert_eq!(a.sigma_eff().to_bits(), b.sigma_eff().to_bits());
}

#[test]
fn undersized_quadrature_reports_nonconvergence() {
    let w = GaussianWeight::new(0.0, 1.0).unwrap();
    let quad = Quadrature {
        nodes: 8,
        ..Quadrature::default()
    };
    let result = fit_with(&ScalarActivation::Gelu, &w, 7, &quad);
    assert!(matches!(
        result,
        Err(crate::error::Error::QuadratureNotConverged { .. })
    ));
}

#[test]
fn mismatched_weight_is_rejected() {
    let w = GaussianWeight::new(0.0, 1.0).unwrap();
    let other = GaussianWeight::new(0.5, 1.0).unwrap();
    let p = fit(&ScalarActivation::Relu, &w, 3).unwrap();
    assert!(mse(&ScalarActivation::Relu, &other, &p).is_err());
}

#[test]
fn series_json_round_trips_exactly() {
    let w = GaussianWeight::new(0.329, 1.948).unwrap();
    let p = fit(&ScalarActivation::Relu, &w, 7).unwrap();
    let text = p.to_json_string();
    let back = HermiteSeries::from_json_str(&text).unwrap();
    assert_eq!(p.coeffs().len(), back.coeffs().len());
    for (a, b) in p.coeffs().iter().zip(back.coeffs()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(p.mu().to_bits(), back.mu().to_bits());
    assert_eq!(p.sigma_eff().to_bits(), back.sigma_eff().to_bits());
}

#[test]
fn tabulated_activation_fits_through_knot_splits() {
    // A hat function: kinks at −1, 0, 1.
    let hat =
        ScalarActivation::tabulated(vec![(-3.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (1.0, 0.0), (3.0, 0.0)])
            .unwrap();
    let w = GaussianWeight::new(0.0, 1.0).unwrap();
    let p = fit(&hat, &w, 15).unwrap();
    let parseval = mse(&hat, &w, &p).unwrap();
    let direct = mse_direct(&hat, &w, &p);
    assert_abs_diff_eq!(parseval, direct, epsilon = 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // The fitted series is the projection: any coefficient perturbation can
    // only increase the direct-quadrature MSE.
    #[test]
    fn projection_optimality(
        mu in -2.0f64..2.0,
        sigma in 0.5f64..2.0,
        seed in 0u64..1000,
    ) {
        let w = GaussianWeight::new(mu, sigma).unwrap();
        let f = ScalarActivation::Relu;
        let degree = 5;
        let p = fit(&f, &w, degree).unwrap();
        let base = mse_direct(&f, &w, &p);

        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let normal = rand_distr::StandardNormal;
        let mut coeffs = p.coeffs().to_vec();
        let mut norm_sq = 0.0;
        for c in coeffs.iter_mut() {
            let d: f64 = normal.sample(&mut rng);
            let d = d * 0.05;
            *c += d;
            norm_sq += d * d;
        }
        prop_assume!(norm_sq > 1e-12);
        let q = HermiteSeries::new(p.mu(), p.sigma_eff(), coeffs).unwrap();
        let perturbed = mse_direct(&f, &w, &q);
        prop_assert!(perturbed >= base - 1e-10,
            "perturbed {perturbed} < optimal {base}");
        // Parseval again: the gap is exactly the squared perturbation norm.
        prop_assert!((perturbed - base - norm_sq).abs() < 1e-7);
    }

    // fit(f, (mu, s), d)(x) = fit(f(mu + s·t), (0,1), d)((x−mu)/s)
    #[test]
    fn affine_covariance(
        mu in -2.0f64..2.0,
        sigma in 0.5f64..2.0,
        x in -4.0f64..4.0,
    ) {
        let w = GaussianWeight::new(mu, sigma).unwrap();
        let p = fit(&ScalarActivation::Gelu, &w, 8).unwrap();

        // Shifted function sampled onto a dense table would lose smoothness;
        // instead express it exactly through the standard weight by fitting
        // gelu(mu + sigma·t) via a closure-equivalent: gelu itself with a
        // standard weight, then compare evaluations through the change of
        // variables. The coefficients must agree, which implies the pointwise
        // identity.
        let std_w = GaussianWeight::new(0.0, 1.0).unwrap();
        let shifted = ShiftedGelu { mu, sigma };
        let coeffs_shifted = shifted.project(&std_w, 8);
        for (a, b) in p.coeffs().iter().zip(&coeffs_shifted) {
            prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        let u = (x - mu) / sigma;
        let lhs = p.eval(x);
        let rhs = hermite_sum_eval(&coeffs_shifted, u);
        prop_assert!((lhs - rhs).abs() < 1e-8);
    }

    // Mean-zero residual holds for every activation, weight, and degree.
    #[test]
    fn mean_residual_zero_everywhere(
        mu in -2.0f64..2.0,
        sigma in 0.5f64..2.0,
        degree in 0usize..12,
        which in 0usize..3,
    ) {
        let f = match which {
            0 => ScalarActivation::Relu,
            1 => ScalarActivation::Gelu,
            _ => ScalarActivation::Identity,
        };
        let w = GaussianWeight::new(mu, sigma).unwrap();
        let p = fit(&f, &w, degree).unwrap();
        prop_assert!(mean_residual(&f, &w, &p).abs() < 1e-8);
    }

    // Direct-quadrature MSE is non-increasing in the fitted degree.
    #[test]
    fn direct_mse_monotone_in_degree(
        mu in -1.0f64..1.0,
        sigma in 0.5f64..2.0,
    ) {
        let w = GaussianWeight::new(mu, sigma).unwrap();
        let f = ScalarActivation::Relu;
        let mut last = f64::INFINITY;
        for d in [0usize, 1, 2, 4, 8] {
            let p = fit(&f, &w, d).unwrap();
            let e = mse_direct(&f, &w, &p);
            prop_assert!(e <= last + 1e-12);
            last = e;
        }
    }
}

/// Test-only oracle for the affine-covariance property: projects
/// `gelu(mu + sigma·t)` onto the standard-normal Hermite basis with its own
/// quadrature pass (no kinks involved, the smooth path applies).
struct ShiftedGelu {
    mu: f64,
    sigma: f64,
}

impl ShiftedGelu {
    fn project(&self, w: &GaussianWeight, degree: usize) -> Vec<f64> {
        assert_eq!((w.mu, w.sigma_eff()), (0.0, 1.0));
        let quad = Quadrature::default();
        let g = ScalarActivation::Gelu;
        (0..=degree)
            .map(|l| {
                quad.expect(&[], |z| g.eval(self.mu + self.sigma * z) * hermite_ortho(l, z))
            })
            .collect()
    }
}

fn hermite_sum_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(l, c)| c * hermite_ortho(l, x))
        .sum()
}
