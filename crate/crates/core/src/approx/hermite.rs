//! Hermite polynomials orthonormal under the standard normal weight.
//!
//! `h_0 = 1`, `h_1(x) = x`, and
//! `h_{l+1}(x) = (x·h_l(x) − sqrt(l)·h_{l−1}(x)) / sqrt(l+1)`,
//! so that `∫ φ(x) h_i(x) h_j(x) dx = δ_ij` with `φ` the standard normal
//! density. All series evaluation in this crate runs on this recurrence;
//! nothing is ever converted to monomial coefficients.

/// Evaluate the degree-`l` orthonormal Hermite polynomial at `x`.
pub fn hermite_ortho(l: usize, x: f64) -> f64 {
    match l {
        0 => 1.0,
        1 => x,
        _ => {
            let mut prev = 1.0;
            let mut cur = x;
            for j in 1..l {
                let next = (x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Fill `out` with `h_0(x) .. h_{l_max}(x)`.
pub(crate) fn hermite_row(l_max: usize, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if l_max == 0 {
        return;
    }
    out.push(x);
    for j in 1..l_max {
        let next = (x * out[j] - (j as f64).sqrt() * out[j - 1]) / ((j + 1) as f64).sqrt();
        out.push(next);
    }
}

/// Evaluate `Σ_l coeffs[l] · h_l(x)` term by term on the recurrence.
pub(crate) fn hermite_sum(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    let mut prev = 0.0;
    let mut cur = 1.0;
    for (j, &c) in coeffs.iter().enumerate() {
        acc += c * cur;
        let next = if j == 0 {
            x
        } else {
            (x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt()
        };
        prev = cur;
        cur = next;
    }
    acc
}

/// Evaluate `Σ_l coeffs[l] · h_l'(x)` using `h_l' = sqrt(l)·h_{l−1}`.
pub(crate) fn hermite_sum_derivative(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    let mut prev = 0.0;
    let mut cur = 1.0;
    for (j, &c) in coeffs.iter().enumerate() {
        if j > 0 {
            acc += c * (j as f64).sqrt() * prev;
        }
        let next = if j == 0 {
            x
        } else {
            (x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt()
        };
        prev = cur;
        cur = next;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn low_degrees_match_closed_forms() {
        assert_abs_diff_eq!(hermite_ortho(0, 3.7), 1.0);
        assert_abs_diff_eq!(hermite_ortho(1, 2.0), 2.0);
        // h_2(x) = (x^2 - 1)/sqrt(2)
        assert_abs_diff_eq!(
            hermite_ortho(2, 2.0),
            3.0 / std::f64::consts::SQRT_2,
            epsilon = 1e-15
        );
        // h_3(x) = (x^3 - 3x)/sqrt(6)
        let x = 1.3;
        assert_abs_diff_eq!(
            hermite_ortho(3, x),
            (x.powi(3) - 3.0 * x) / 6.0f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn row_matches_single_evaluations() {
        let mut row = Vec::new();
        hermite_row(12, 0.83, &mut row);
        for (l, &v) in row.iter().enumerate() {
            assert_abs_diff_eq!(v, hermite_ortho(l, 0.83), epsilon = 1e-14);
        }
    }

    #[test]
    fn sum_matches_naive_accumulation() {
        let coeffs = [0.5, -1.0, 0.25, 0.0, 2.0];
        let x = -1.7;
        let naive: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(l, c)| c * hermite_ortho(l, x))
            .sum();
        assert_abs_diff_eq!(hermite_sum(&coeffs, x), naive, epsilon = 1e-13);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let coeffs = [0.3, 0.7, -0.2, 0.05, 1.1, -0.4];
        let x = 0.9;
        let h = 1e-6;
        let fd = (hermite_sum(&coeffs, x + h) - hermite_sum(&coeffs, x - h)) / (2.0 * h);
        assert_abs_diff_eq!(hermite_sum_derivative(&coeffs, x), fd, epsilon = 1e-8);
    }
}
