use serde::{Deserialize, Serialize};

use super::kernel::matern52;
use super::Points;
use crate::error::{Error, Result};
use crate::linalg;

const MAX_NEWTON_STEPS: usize = 100;
const GRAD_TOL: f64 = 1e-10;
/// Diagonal jitter that is part of the reference prior covariance.
const REFERENCE_JITTER: f64 = 1e-6;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Latent utility per observed sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentUtilities {
    /// Standardized utilities (mean 0, population sd 1, or all 0).
    pub values: Vec<f64>,
    /// MAP estimate before standardization.
    pub map: Vec<f64>,
    pub standardized: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

fn log_ndtr(z: f64) -> f64 {
    if z > -20.0 {
        (0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)).ln()
    } else {
        let z2 = z * z;
        -0.5 * z2 - (-z).ln() - LN_SQRT_2PI + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

/// `φ(z) / Φ(z)`.
fn inverse_mills(z: f64) -> f64 {
    if z > -20.0 {
        let pdf = (-0.5 * z * z - LN_SQRT_2PI).exp();
        pdf / (0.5 * libm::erfc(-z / std::f64::consts::SQRT_2))
    } else {
        let z2 = z * z;
        -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2))
    }
}

/// Reference prior covariance: unit-variance Matérn-5/2 with isotropic
/// lengthscale `sqrt(d)/2`, plus a small diagonal jitter.
fn reference_kernel(x: &Points) -> Vec<f64> {
    let m = x.len();
    let rho = 4.0 / x.dim() as f64;
    let mut k = vec![0.0; m * m];
    for a in 0..m {
        k[a * m + a] = 1.0 + REFERENCE_JITTER;
        for b in 0..a {
            let r2: f64 = x
                .row(a)
                .iter()
                .zip(x.row(b))
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                * rho;
            let v = matern52(r2);
            k[a * m + b] = v;
            k[b * m + a] = v;
        }
    }
    k
}

struct Problem<'a> {
    m: usize,
    pairs: &'a [(usize, usize)],
    sigma: f64,
    k_inv: Vec<f64>,
}

impl Problem<'_> {
    fn value(&self, u: &[f64]) -> f64 {
        let lik: f64 = self
            .pairs
            .iter()
            .map(|&(i, j)| log_ndtr((u[i] - u[j]) / self.sigma))
            .sum();
        lik - 0.5 * self.quad(u)
    }

    fn quad(&self, u: &[f64]) -> f64 {
        let m = self.m;
        (0..m)
            .map(|a| u[a] * linalg::dot(&self.k_inv[a * m..(a + 1) * m], u))
            .sum()
    }

    /// Gradient and the negative Hessian `W + K⁻¹`.
    fn gradient(&self, u: &[f64], with_hessian: bool) -> (Vec<f64>, Option<Vec<f64>>) {
        let m = self.m;
        let mut g: Vec<f64> = (0..m)
            .map(|a| -linalg::dot(&self.k_inv[a * m..(a + 1) * m], u))
            .collect();
        let mut h = with_hessian.then(|| self.k_inv.clone());
        for &(i, j) in self.pairs {
            let z = (u[i] - u[j]) / self.sigma;
            let lam = inverse_mills(z);
            g[i] += lam / self.sigma;
            g[j] -= lam / self.sigma;
            if let Some(h) = h.as_mut() {
                let w = lam * (z + lam) / (self.sigma * self.sigma);
                h[i * m + i] += w;
                h[j * m + j] += w;
                h[i * m + j] -= w;
                h[j * m + i] -= w;
            }
        }
        (g, h)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_pairs(m: usize, pairs: &[(usize, usize)]) -> Result<()> {
    for &(i, j) in pairs {
        if i >= m || j >= m {
            return Err(Error::InvalidInput(format!(
                "pair ({i}, {j}) references a row outside 0..{m}"
            )));
        }
        if i == j {
            return Err(Error::InvalidInput(format!(
                "pair ({i}, {i}) compares a row with itself"
            )));
        }
    }
    Ok(())
}

fn build_problem<'a>(x: &Points, pairs: &'a [(usize, usize)], sigma: f64) -> Result<Problem<'a>> {
    let m = x.len();
    check_pairs(m, pairs)?;
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput(format!(
            "probit noise must be positive, got {sigma}"
        )));
    }
    let k = reference_kernel(x);
    let (l, _) = linalg::cholesky_with_jitter(&k, m, 0.0).ok_or(Error::Singular { jitter: 1e-4 })?;
    Ok(Problem {
        m,
        pairs,
        sigma,
        k_inv: linalg::inverse_from_cholesky(&l, m),
    })
}

/// Value and gradient of the probit MAP objective
/// `Σ log Φ((u_i − u_j)/σ) − ½ uᵀ K₀⁻¹ u` at `u`.
pub fn probit_objective(x: &Points, pairs: &[(usize, usize)], sigma: f64, u: &[f64]) -> Result<(f64, Vec<f64>)> {
    let p = build_problem(x, pairs, sigma)?;
    if u.len() != p.m {
        return Err(Error::DimensionMismatch {
            expected: p.m,
            found: u.len(),
        });
    }
    Ok((p.value(u), p.gradient(u, false).0))
}

/// MAP latent utilities from pairwise comparisons `(preferred_row, other_row)`
/// via damped Newton iterations started from zero, then standardized.
pub fn infer_latent_utilities(x: &Points, pairs: &[(usize, usize)], sigma: f64) -> Result<LatentUtilities> {
    let p = build_problem(x, pairs, sigma)?;
    let m = p.m;
    let mut u = vec![0.0; m];
    let mut f = p.value(&u);
    let mut iterations = 0;
    let mut grad_norm;
    loop {
        let (g, h) = p.gradient(&u, true);
        grad_norm = norm(&g);
        if grad_norm <= GRAD_TOL {
            break;
        }
        if iterations == MAX_NEWTON_STEPS {
            return Err(Error::NotConverged {
                iterations,
                grad_norm,
                last: u,
            });
        }
        iterations += 1;
        let mut h = h.expect("hessian requested");
        if !linalg::cholesky_in_place(&mut h, m) {
            return Err(Error::Singular { jitter: 0.0 });
        }
        let mut step = g.clone();
        linalg::cholesky_solve(&h, m, &mut step);
        let slope = linalg::dot(&g, &step);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let ft = p.value(&trial);
            if ft >= f + 1e-4 * t * slope {
                u = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // Round-off floor: no representable ascent left.
            if grad_norm <= 1e-7 {
                break;
            }
            return Err(Error::NotConverged {
                iterations,
                grad_norm,
                last: u,
            });
        }
    }
    Ok(LatentUtilities {
        values: standardize(&u),
        map: u,
        standardized: true,
        iterations,
        grad_norm,
    })
}

pub(crate) fn standardize(u: &[f64]) -> Vec<f64> {
    let m = u.len() as f64;
    if u.is_empty() {
        return Vec::new();
    }
    let mean = u.iter().sum::<f64>() / m;
    let sd = (u.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m).sqrt();
    if sd < 1e-12 {
        return vec![0.0; u.len()];
    }
    u.iter().map(|v| (v - mean) / sd).collect()
}
