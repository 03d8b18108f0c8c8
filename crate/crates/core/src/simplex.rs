//! Geometry and sampling of the B-capped simplex
//! `{α ∈ [0,1]^n : Σ α_i ≤ B}`.
//!
//! Points are generated by stick-breaking: walking the coordinates in some
//! ordering with a residual `R` that starts at `B`, each coefficient takes
//! `min(x_i R, 1)` and is subtracted from the residual. The same map doubles
//! as a smooth-almost-everywhere parameterization of the simplex by the unit
//! hypercube, which is what the acquisition optimizer ascends over.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::types::MergeCoefficients;

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Fraction of the unit hypercube `[0,1]^n` lying inside the B-capped simplex.
///
/// Evaluates the alternating binomial sum term by term in log space and
/// accumulates with Neumaier compensation.
pub fn capped_simplex_volume(n: usize, cap: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if !(cap > 0.0) || !cap.is_finite() {
        return Err(Error::InvalidInput(format!("cap must be positive, got {cap}")));
    }
    if cap >= n as f64 {
        return Ok(1.0);
    }
    let ln_n_fact = ln_factorial(n);
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let upper = cap.floor() as usize;
    for k in 0..=upper.min(n) {
        let base = cap - k as f64;
        if base <= 0.0 {
            continue;
        }
        let ln_binom = ln_n_fact - ln_factorial(k) - ln_factorial(n - k);
        let magnitude = (ln_binom + n as f64 * base.ln() - ln_n_fact).exp();
        let term = if k % 2 == 0 { magnitude } else { -magnitude };
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    Ok((sum + comp).clamp(0.0, 1.0))
}

/// A hypercube point together with the coordinate ordering and cap that
/// define one stick-breaking map.
#[derive(Debug, Clone, PartialEq)]
pub struct StickBreakInput {
    x: Vec<f64>,
    ordering: Vec<usize>,
    cap: f64,
}

impl StickBreakInput {
    pub fn new(x: Vec<f64>, ordering: Vec<usize>, cap: f64) -> Result<Self> {
        let n = x.len();
        if ordering.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: ordering.len(),
            });
        }
        let mut seen = vec![false; n];
        for &i in &ordering {
            if i >= n || seen[i] {
                return Err(Error::InvalidInput(format!("ordering is not a permutation of 0..{n}")));
            }
            seen[i] = true;
        }
        if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("latent value {v} outside [0, 1]")));
        }
        if !(cap > 0.0) {
            return Err(Error::InvalidInput(format!("cap must be positive, got {cap}")));
        }
        Ok(Self { x, ordering, cap })
    }

    pub fn identity(x: Vec<f64>, cap: f64) -> Result<Self> {
        let ordering = (0..x.len()).collect();
        Self::new(x, ordering, cap)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }
}

/// Forward pass shared by the map, its Jacobian and its adjoint.
/// Returns the coefficients, the residual before each step (in ordering
/// position) and whether each step was clamped at 1.
fn forward(x: &[f64], ordering: &[usize], cap: f64) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let n = x.len();
    let mut alpha = vec![0.0; n];
    let mut residual = Vec::with_capacity(n);
    let mut clamped = Vec::with_capacity(n);
    let mut r = cap;
    for &i in ordering {
        residual.push(r);
        let raw = x[i] * r;
        let a = if raw >= 1.0 { 1.0 } else { raw };
        clamped.push(raw >= 1.0);
        alpha[i] = a;
        r = (r - a).max(0.0);
    }
    (alpha, residual, clamped)
}

/// Raw stick-breaking map on slices, without validation.
pub(crate) fn stick_break_raw(x: &[f64], ordering: &[usize], cap: f64) -> Vec<f64> {
    forward(x, ordering, cap).0
}

pub fn stick_break(input: &StickBreakInput) -> MergeCoefficients {
    MergeCoefficients::clamped(stick_break_raw(&input.x, &input.ordering, input.cap))
}

/// `∂α/∂x` as an `n × n` matrix (row = coefficient, column = latent
/// coordinate). The clamped branch of `min(·, 1)` has derivative 0.
pub fn stick_break_jacobian(input: &StickBreakInput) -> DMatrix<f64> {
    let n = input.x.len();
    let (_, residual, clamped) = forward(&input.x, &input.ordering, input.cap);
    let mut jac = DMatrix::zeros(n, n);
    // dR/dx for the current residual
    let mut d_r = vec![0.0; n];
    for (pos, &i) in input.ordering.iter().enumerate() {
        if !clamped[pos] {
            for j in 0..n {
                jac[(i, j)] = input.x[i] * d_r[j];
            }
            jac[(i, i)] += residual[pos];
        }
        for j in 0..n {
            d_r[j] -= jac[(i, j)];
        }
    }
    jac
}

/// Vector-Jacobian product `(∂α/∂x)ᵀ ḡ` in O(n).
pub(crate) fn stick_break_vjp(x: &[f64], ordering: &[usize], cap: f64, grad_alpha: &[f64]) -> Vec<f64> {
    let n = x.len();
    let (_, residual, clamped) = forward(x, ordering, cap);
    let mut grad_x = vec![0.0; n];
    let mut r_bar = 0.0;
    for pos in (0..n).rev() {
        let i = ordering[pos];
        if clamped[pos] {
            continue;
        }
        let a_bar = grad_alpha[i] - r_bar;
        grad_x[i] = a_bar * residual[pos];
        r_bar += a_bar * x[i];
    }
    grad_x
}

/// Zeroes every entry strictly below `tau`.
pub fn sparsify(alpha: &mut [f64], tau: f64) {
    for v in alpha.iter_mut() {
        if *v < tau {
            *v = 0.0;
        }
    }
}

pub fn random_ordering<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut ordering: Vec<usize> = (0..n).collect();
    ordering.shuffle(rng);
    ordering
}

/// Draws `count` sparse initial samples inside the capped simplex: fresh
/// uniform latent point and random ordering per sample, then entries below
/// `tau` are zeroed (no renormalization).
pub fn sample_initial<R: Rng + ?Sized>(
    n: usize,
    cap: f64,
    tau: f64,
    count: usize,
    rng: &mut R,
) -> Vec<MergeCoefficients> {
    (0..count)
        .map(|_| {
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let ordering = random_ordering(n, rng);
            let mut alpha = stick_break_raw(&x, &ordering, cap);
            sparsify(&mut alpha, tau);
            MergeCoefficients::clamped(alpha)
        })
        .collect()
}

/// Uniform samples of `[0,1]^n`, sparsified at `tau`.
pub fn sample_hypercube<R: Rng + ?Sized>(n: usize, tau: f64, count: usize, rng: &mut R) -> Vec<MergeCoefficients> {
    (0..count)
        .map(|_| {
            let mut alpha: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            sparsify(&mut alpha, tau);
            MergeCoefficients::clamped(alpha)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn binom(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    // Naive direct evaluation in f64; fine for the small cases it checks.
    fn volume_direct(n: u64, cap: f64) -> f64 {
        let fact: f64 = (1..=n).map(|i| i as f64).product();
        let mut s = 0.0;
        for k in 0..=(cap.floor() as u64).min(n) {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * binom(n, k) * (cap - k as f64).max(0.0).powi(n as i32);
        }
        s / fact
    }

    #[test]
    fn volume_small_cases() {
        assert_eq!(capped_simplex_volume(1, 1.0).unwrap(), 1.0);
        assert!((capped_simplex_volume(2, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let v = capped_simplex_volume(10, 2.0).unwrap();
        let exact = 1014.0 / 3628800.0;
        assert!(((v - exact) / exact).abs() < 1e-12, "{v} vs {exact}");
        // ≈ 0.03 %
        assert!((v * 100.0 - 0.03).abs() < 0.01);
        assert!(capped_simplex_volume(30, 2.0).unwrap() < 1e-23);
    }

    #[test]
    fn volume_matches_direct_formula() {
        for n in 1..=12u64 {
            for cap in [0.5, 1.0, 1.5, 2.0, 3.0, 4.5] {
                let a = capped_simplex_volume(n as usize, cap).unwrap();
                let b = volume_direct(n, cap).min(1.0);
                assert!(
                    (a - b).abs() <= 1e-12 * b.max(1e-300) + 1e-15,
                    "n={n} cap={cap}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn volume_stays_finite_to_64() {
        for n in [20, 40, 64] {
            let v = capped_simplex_volume(n, 2.0).unwrap();
            assert!(v.is_finite() && v > 0.0);
            let exact_ratio = (2f64.powi(n as i32) - n as f64) / 2f64.powi(n as i32);
            let lead = (n as f64 * 2f64.ln() - ln_factorial(n)).exp();
            assert!((v / (lead * exact_ratio) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn volume_rejects_bad_input() {
        assert!(capped_simplex_volume(0, 1.0).is_err());
        assert!(capped_simplex_volume(3, 0.0).is_err());
        assert!(capped_simplex_volume(3, -1.0).is_err());
    }

    #[test]
    fn stick_break_examples() {
        let z = StickBreakInput::new(vec![0.0; 4], vec![2, 0, 3, 1], 2.0).unwrap();
        assert_eq!(stick_break(&z).as_slice(), &[0.0; 4]);

        let ones = StickBreakInput::identity(vec![1.0; 4], 2.0).unwrap();
        assert_eq!(stick_break(&ones).as_slice(), &[1.0, 1.0, 0.0, 0.0]);

        let half = StickBreakInput::identity(vec![0.5; 3], 2.0).unwrap();
        assert_eq!(stick_break(&half).as_slice(), &[1.0, 0.5, 0.25]);
    }

    #[test]
    fn stick_break_input_validation() {
        assert!(StickBreakInput::new(vec![0.5, 0.5], vec![0, 0], 2.0).is_err());
        assert!(StickBreakInput::new(vec![0.5, 0.5], vec![0], 2.0).is_err());
        assert!(StickBreakInput::new(vec![1.5], vec![0], 2.0).is_err());
    }

    #[test]
    fn jacobian_examples() {
        let one = StickBreakInput::identity(vec![0.3], 1.0).unwrap();
        assert_eq!(stick_break_jacobian(&one)[(0, 0)], 1.0);

        let half = StickBreakInput::identity(vec![0.5; 3], 2.0).unwrap();
        let j = stick_break_jacobian(&half);
        assert_eq!(j[(0, 0)], 0.0);
        assert_eq!(j[(1, 1)], 1.0);
    }

    #[test]
    fn jacobian_is_causal_in_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = 6;
            let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let ordering = random_ordering(n, &mut rng);
            let input = StickBreakInput::new(x, ordering.clone(), 2.0).unwrap();
            let j = stick_break_jacobian(&input);
            for (p, &i) in ordering.iter().enumerate() {
                for &later in &ordering[p + 1..] {
                    assert_eq!(j[(i, later)], 0.0);
                }
            }
        }
    }

    #[test]
    fn vjp_matches_jacobian_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = 7;
            let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let g: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let ordering = random_ordering(n, &mut rng);
            let input = StickBreakInput::new(x.clone(), ordering.clone(), 2.0).unwrap();
            let j = stick_break_jacobian(&input);
            let vjp = stick_break_vjp(&x, &ordering, 2.0, &g);
            for c in 0..n {
                let expected: f64 = (0..n).map(|r| j[(r, c)] * g[r]).sum();
                assert!((vjp[c] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sparsify_zeroes_below_threshold() {
        let mut a = vec![1.0, 0.5, 0.05];
        sparsify(&mut a, 0.1);
        assert_eq!(a, vec![1.0, 0.5, 0.0]);
    }

    #[test]
    fn initial_samples_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = sample_initial(20, 2.0, 0.1, 5, &mut rng);
        assert_eq!(s.len(), 5);
        for a in &s {
            assert!(a.sum() <= 2.0 + 1e-12);
            assert!(a.as_slice().iter().all(|v| *v == 0.0 || *v >= 0.1));
        }
    }

    #[test]
    fn initial_coordinate_means_are_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 10;
        let count = 100_000;
        let mut means = vec![0.0; n];
        for a in sample_initial(n, 2.0, 0.1, count, &mut rng) {
            for (m, v) in means.iter_mut().zip(a.as_slice()) {
                *m += v / count as f64;
            }
        }
        let mu = means.iter().sum::<f64>() / n as f64;
        let sd = (means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(sd / mu < 0.02, "coefficient of variation {}", sd / mu);
    }

    proptest::proptest! {
        #[test]
        fn stick_break_is_feasible(x in proptest::collection::vec(0.0f64..=1.0, 1..30),
                                   cap in 0.1f64..5.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ordering = random_ordering(x.len(), &mut rng);
            let a = stick_break(&StickBreakInput::new(x, ordering, cap).unwrap());
            proptest::prop_assert!(a.sum() <= cap + 1e-12);
            proptest::prop_assert!(a.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
