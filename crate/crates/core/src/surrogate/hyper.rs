//! Sparse axis-aligned subspace (SAAS) hyperposterior.
//!
//! Unconstrained coordinates: `[ln τ, ln ρ̃_1 … ln ρ̃_d, ln s², ln σ²]` with
//! `ρ_i = τ ρ̃_i`. Priors: `τ ~ HalfCauchy(0.1)`, `ρ̃_i ~ HalfCauchy(1)`
//! (hence `ρ_i | τ ~ HalfCauchy(τ)`), `s² ~ Gamma(2, 0.15)`,
//! `σ² ~ Gamma(0.9, 10)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::matern52_with_grad;
use super::nuts::{sample_nuts, LogDensity, NutsSettings};
use super::Points;
use crate::error::{Error, Result};
use crate::linalg;

const GLOBAL_SCALE: f64 = 0.1;
const SIGNAL_SHAPE: f64 = 2.0;
const SIGNAL_RATE: f64 = 0.15;
const NOISE_SHAPE: f64 = 0.9;
const NOISE_RATE: f64 = 10.0;
// Prior medians, used as the chain's starting point.
const SIGNAL_MEDIAN: f64 = 11.188_979_933_444_408;
const NOISE_MEDIAN: f64 = 0.059_674_304_895_539_46;
const LN_2PI: f64 = 1.837_877_066_409_345_5;
const MAX_LOG_PARAM: f64 = 30.0;

/// One posterior draw of the kernel hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperDraw {
    pub inv_sq_lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub global_shrinkage: f64,
    pub observation_noise: f64,
}

impl HyperDraw {
    pub fn is_valid(&self) -> bool {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        self.inv_sq_lengthscales.iter().all(|&v| ok(v))
            && ok(self.signal_variance)
            && ok(self.global_shrinkage)
            && ok(self.observation_noise)
    }

    fn from_unconstrained(theta: &[f64]) -> Self {
        let d = theta.len() - 3;
        let tau = theta[0].exp();
        Self {
            inv_sq_lengthscales: theta[1..=d].iter().map(|v| tau * v.exp()).collect(),
            signal_variance: theta[d + 1].exp(),
            global_shrinkage: tau,
            observation_noise: theta[d + 2].exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub warmup: usize,
    pub samples: usize,
    pub thinning: usize,
    pub max_tree_depth: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            warmup: 80,
            samples: 80,
            thinning: 5,
            max_tree_depth: 6,
        }
    }
}

impl SamplerConfig {
    pub fn retained(&self) -> usize {
        self.samples / self.thinning
    }
}

/// Log half-Cauchy density of `e^θ` plus the log-Jacobian, and its derivative.
fn half_cauchy_log(theta: f64, scale: f64) -> (f64, f64) {
    let x = theta.exp();
    let r = x / scale;
    let lp = (2.0 / (std::f64::consts::PI * scale)).ln() - (1.0 + r * r).ln() + theta;
    (lp, 1.0 - 2.0 * r * r / (1.0 + r * r))
}

fn gamma_log(theta: f64, shape: f64, rate: f64) -> (f64, f64) {
    let x = theta.exp();
    (shape * theta - rate * x, shape - rate * x)
}

pub(crate) struct SaasPosterior<'a> {
    y: &'a [f64],
    m: usize,
    d: usize,
    /// Squared coordinate differences for each pair `a > b`, `d` per pair.
    sq_diff: Vec<f64>,
    jitter: f64,
}

impl<'a> SaasPosterior<'a> {
    pub(crate) fn new(x: &Points, y: &'a [f64], jitter: f64) -> Self {
        let m = x.len();
        let d = x.dim();
        let mut sq_diff = Vec::with_capacity(m * (m - 1) / 2 * d);
        for a in 0..m {
            for b in 0..a {
                sq_diff.extend(x.row(a).iter().zip(x.row(b)).map(|(p, q)| (p - q) * (p - q)));
            }
        }
        Self {
            y,
            m,
            d,
            sq_diff,
            jitter,
        }
    }
}

impl LogDensity for SaasPosterior<'_> {
    fn dim(&self) -> usize {
        self.d + 3
    }

    fn log_density(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (m, d) = (self.m, self.d);
        if theta.iter().any(|t| !t.is_finite() || t.abs() > MAX_LOG_PARAM) {
            return f64::NEG_INFINITY;
        }
        let tau = theta[0].exp();
        let rho: Vec<f64> = theta[1..=d].iter().map(|v| tau * v.exp()).collect();
        let s2 = theta[d + 1].exp();
        let noise = theta[d + 2].exp();

        let mut a = vec![0.0; m * m];
        let mut corr = vec![0.0; self.sq_diff.len() / d.max(1)];
        let mut dcorr = vec![0.0; corr.len()];
        let mut p = 0;
        for i in 0..m {
            a[i * m + i] = s2 + noise + self.jitter;
            for j in 0..i {
                let diffs = &self.sq_diff[p * d..(p + 1) * d];
                let r2 = linalg::dot(diffs, &rho);
                let (c, g) = matern52_with_grad(r2);
                corr[p] = c;
                dcorr[p] = g;
                a[i * m + j] = s2 * c;
                a[j * m + i] = s2 * c;
                p += 1;
            }
        }
        if !linalg::cholesky_in_place(&mut a, m) {
            return f64::NEG_INFINITY;
        }
        let l = a;
        let mut alpha = self.y.to_vec();
        linalg::cholesky_solve(&l, m, &mut alpha);
        let log_lik =
            -0.5 * linalg::dot(self.y, &alpha) - 0.5 * linalg::log_det_from_cholesky(&l, m) - 0.5 * m as f64 * LN_2PI;
        let a_inv = linalg::inverse_from_cholesky(&l, m);

        // W = α αᵀ − A⁻¹; dL/dθ = ½ tr(W dA/dθ)
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut d_rho = vec![0.0; d];
        let mut d_s2 = 0.0;
        let mut trace_w = 0.0;
        let mut p = 0;
        for i in 0..m {
            let wii = alpha[i] * alpha[i] - a_inv[i * m + i];
            trace_w += wii;
            d_s2 += 0.5 * wii * s2;
            for j in 0..i {
                let w = alpha[i] * alpha[j] - a_inv[i * m + j];
                d_s2 += w * s2 * corr[p];
                let coef = w * s2 * dcorr[p];
                let diffs = &self.sq_diff[p * d..(p + 1) * d];
                for (dr, df) in d_rho.iter_mut().zip(diffs) {
                    *dr += coef * df;
                }
                p += 1;
            }
        }
        let mut lp = log_lik;
        let mut d_tau = 0.0;
        for i in 0..d {
            let g = rho[i] * d_rho[i];
            grad[1 + i] = g;
            d_tau += g;
        }
        grad[0] = d_tau;
        grad[d + 1] = d_s2;
        grad[d + 2] = 0.5 * noise * trace_w;

        let (lp_tau, g_tau) = half_cauchy_log(theta[0], GLOBAL_SCALE);
        lp += lp_tau;
        grad[0] += g_tau;
        for i in 0..d {
            let (lpi, gi) = half_cauchy_log(theta[1 + i], 1.0);
            lp += lpi;
            grad[1 + i] += gi;
        }
        let (lps, gs) = gamma_log(theta[d + 1], SIGNAL_SHAPE, SIGNAL_RATE);
        let (lpn, gn) = gamma_log(theta[d + 2], NOISE_SHAPE, NOISE_RATE);
        grad[d + 1] += gs;
        grad[d + 2] += gn;
        lp + lps + lpn
    }
}

fn median_init(d: usize) -> Vec<f64> {
    let mut theta = vec![0.0; d + 3];
    theta[0] = GLOBAL_SCALE.ln();
    theta[d + 1] = SIGNAL_MEDIAN.ln();
    theta[d + 2] = NOISE_MEDIAN.ln();
    theta
}

/// Draws kernel hyperparameters from the SAAS posterior given standardized
/// targets `y` at inputs `x`. Returns `samples / thinning` draws.
pub fn sample_hyperposterior<R: Rng + ?Sized>(
    x: &Points,
    y: &[f64],
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<HyperDraw>> {
    if x.len() < 2 {
        return Err(Error::InvalidInput(
            "hyperposterior needs at least two training points".into(),
        ));
    }
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let init = median_init(x.dim());
    let mut grad = vec![0.0; init.len()];
    let mut posterior = None;
    for jitter in [1e-6, 1e-5, 1e-4] {
        let candidate = SaasPosterior::new(x, y, jitter);
        if candidate.log_density(&init, &mut grad).is_finite() {
            posterior = Some(candidate);
            break;
        }
    }
    let posterior = posterior.ok_or(Error::Singular { jitter: 1e-4 })?;
    let settings = NutsSettings {
        warmup: config.warmup,
        samples: config.samples,
        max_tree_depth: config.max_tree_depth,
        ..NutsSettings::default()
    };
    let chain = sample_nuts(&posterior, init, &settings, rng)?;
    Ok(chain
        .iter()
        .enumerate()
        .filter(|(i, _)| (i + 1) % config.thinning == 0)
        .map(|(_, theta)| HyperDraw::from_unconstrained(theta))
        .collect())
}

/// Per-dimension relevance, sorted descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relevance {
    pub dim: usize,
    pub score: f64,
}

/// Median inverse squared lengthscale per dimension across draws,
/// sorted from most to least relevant.
pub fn relevance_ranking(draws: &[HyperDraw]) -> Result<Vec<Relevance>> {
    let first = draws
        .first()
        .ok_or_else(|| Error::InvalidInput("relevance needs at least one draw".into()))?;
    let d = first.inv_sq_lengthscales.len();
    let mut out: Vec<Relevance> = (0..d)
        .map(|i| {
            let mut v: Vec<f64> = draws.iter().map(|h| h.inv_sq_lengthscales[i]).collect();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            let score = if n % 2 == 1 {
                v[n / 2]
            } else {
                0.5 * (v[n / 2 - 1] + v[n / 2])
            };
            Relevance { dim: i, score }
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.dim.cmp(&b.dim)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(m: usize, d: usize, seed: u64) -> (Points, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Points::new(d, (0..m * d).map(|_| rng.random()).collect()).unwrap();
        let y: Vec<f64> = x.rows().map(|r| (3.0 * r[0]).sin() + r[d - 1]).collect();
        (x, super::super::probit::standardize(&y))
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = toy(9, 4, 1);
        let post = SaasPosterior::new(&x, &y, 1e-6);
        let theta = vec![-1.0, 0.3, -0.2, 0.5, 0.1, 0.4, -2.0];
        let mut g = vec![0.0; 7];
        post.log_density(&theta, &mut g);
        let mut scratch = vec![0.0; 7];
        for i in 0..7 {
            let h = 1e-5;
            let mut tp = theta.clone();
            tp[i] += h;
            let mut tm = theta.clone();
            tm[i] -= h;
            let fd = (post.log_density(&tp, &mut scratch) - post.log_density(&tm, &mut scratch)) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()),
                "coord {i}: fd {fd} vs {}",
                g[i]
            );
        }
    }

    #[test]
    fn returns_thinned_draw_count() {
        let (x, y) = toy(10, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = sample_hyperposterior(&x, &y, &SamplerConfig::default(), &mut rng).unwrap();
        assert_eq!(draws.len(), 16);
        assert!(draws.iter().all(HyperDraw::is_valid));
    }

    #[test]
    fn needs_two_points() {
        let x = Points::from_rows(&[vec![0.5]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_hyperposterior(&x, &[0.0], &SamplerConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn relevance_of_identical_draws() {
        let draw = HyperDraw {
            inv_sq_lengthscales: vec![0.2, 3.0, 1.0],
            signal_variance: 1.0,
            global_shrinkage: 0.1,
            observation_noise: 0.01,
        };
        let r = relevance_ranking(&[draw.clone(), draw.clone(), draw]).unwrap();
        let dims: Vec<_> = r.iter().map(|x| x.dim).collect();
        assert_eq!(dims, vec![1, 2, 0]);
        assert_eq!(r[0].score, 3.0);
        let single = HyperDraw {
            inv_sq_lengthscales: vec![0.7],
            signal_variance: 1.0,
            global_shrinkage: 0.1,
            observation_noise: 0.01,
        };
        assert_eq!(relevance_ranking(&[single]).unwrap().len(), 1);
        assert!(relevance_ranking(&[]).is_err());
    }
}
