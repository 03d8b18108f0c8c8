//! Matérn-5/2 ARD kernel parameterized by inverse squared lengthscales.

pub(crate) const SQRT5: f64 = 2.236_067_977_499_79;

/// Correlation at scaled squared distance `r2 = Σ ρ_i (x_i − x'_i)²`.
pub fn matern52(r2: f64) -> f64 {
    let t = SQRT5 * r2.max(0.0).sqrt();
    (1.0 + t + t * t / 3.0) * (-t).exp()
}

/// Correlation and its derivative with respect to `r2`.
pub fn matern52_with_grad(r2: f64) -> (f64, f64) {
    let t = SQRT5 * r2.max(0.0).sqrt();
    let e = (-t).exp();
    ((1.0 + t + t * t / 3.0) * e, -(5.0 / 6.0) * (1.0 + t) * e)
}

pub fn scaled_sq_dist(a: &[f64], b: &[f64], rho: &[f64]) -> f64 {
    a.iter().zip(b).zip(rho).map(|((x, y), r)| r * (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_at_zero_and_decays() {
        assert_eq!(matern52(0.0), 1.0);
        assert!(matern52(1.0) < 1.0);
        assert!(matern52(100.0) < 1e-5);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for r2 in [0.01, 0.3, 1.0, 4.0] {
            let h = 1e-6;
            let fd = (matern52(r2 + h) - matern52(r2 - h)) / (2.0 * h);
            let (_, g) = matern52_with_grad(r2);
            assert!((fd - g).abs() < 1e-7, "r2={r2}: {fd} vs {g}");
        }
        assert!((matern52_with_grad(0.0).1 + 5.0 / 6.0).abs() < 1e-15);
    }
}
