use nalgebra::{DMatrix, DVector};

use super::hyper::HyperDraw;
use super::kernel::{matern52, scaled_sq_dist};
use super::Points;
use crate::error::{Error, Result};
use crate::linalg;

/// Conditioned GP for one hyperparameter draw.
#[derive(Debug, Clone)]
pub(crate) struct Component {
    pub(crate) draw: HyperDraw,
    /// Row-major Cholesky factor of `s² C(X, X) + (σ² + jitter) I`.
    pub(crate) chol: Vec<f64>,
    /// `A⁻¹ y`.
    pub(crate) alpha: Vec<f64>,
    pub(crate) jitter: f64,
}

/// GP predictive posterior as a uniform mixture over hyperparameter draws.
#[derive(Debug, Clone)]
pub struct PosteriorMixture {
    pub(crate) x: Points,
    pub(crate) components: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawPrediction {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub per_draw: Vec<DrawPrediction>,
    pub mixture_mean: Vec<f64>,
    pub mixture_variance: Vec<f64>,
}

impl PosteriorMixture {
    pub fn new(x: Points, y: Vec<f64>, draws: Vec<HyperDraw>) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InvalidInput("posterior needs at least one draw".into()));
        }
        if y.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        let m = x.len();
        let mut components = Vec::with_capacity(draws.len());
        for draw in draws {
            if draw.inv_sq_lengthscales.len() != x.dim() {
                return Err(Error::DimensionMismatch {
                    expected: x.dim(),
                    found: draw.inv_sq_lengthscales.len(),
                });
            }
            if !draw.is_valid() {
                return Err(Error::InvalidInput(
                    "hyperparameters must be positive and finite".into(),
                ));
            }
            let mut a = vec![0.0; m * m];
            for i in 0..m {
                a[i * m + i] = draw.signal_variance + draw.observation_noise;
                for j in 0..i {
                    let v =
                        draw.signal_variance * matern52(scaled_sq_dist(x.row(i), x.row(j), &draw.inv_sq_lengthscales));
                    a[i * m + j] = v;
                    a[j * m + i] = v;
                }
            }
            let (chol, jitter) = linalg::cholesky_with_jitter(&a, m, 0.0).ok_or(Error::Singular { jitter: 1e-4 })?;
            let mut alpha = y.clone();
            linalg::cholesky_solve(&chol, m, &mut alpha);
            components.push(Component {
                draw,
                chol,
                alpha,
                jitter,
            });
        }
        Ok(Self { x, components })
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    pub fn num_draws(&self) -> usize {
        self.components.len()
    }

    pub fn num_train(&self) -> usize {
        self.x.len()
    }

    pub fn draws(&self) -> impl Iterator<Item = &HyperDraw> {
        self.components.iter().map(|c| &c.draw)
    }

    pub fn max_jitter(&self) -> f64 {
        self.components.iter().map(|c| c.jitter).fold(0.0, f64::max)
    }

    /// Latent mean and variance of one component at a single point.
    pub(crate) fn component_mean_var(&self, c: &Component, q: &[f64], scratch: &mut Vec<f64>) -> (f64, f64) {
        let m = self.x.len();
        let rho = &c.draw.inv_sq_lengthscales;
        let s2 = c.draw.signal_variance;
        scratch.clear();
        scratch.extend(self.x.rows().map(|r| s2 * matern52(scaled_sq_dist(r, q, rho))));
        let mean = linalg::dot(scratch, &c.alpha);
        linalg::solve_lower(&c.chol, m, scratch);
        let var = (s2 - linalg::dot(scratch, scratch)).max(0.0);
        (mean, var)
    }

    /// Mixture mean and variance at a single point.
    pub fn mean_variance(&self, q: &[f64]) -> Result<(f64, f64)> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: q.len(),
            });
        }
        let mut scratch = Vec::with_capacity(self.x.len());
        let h = self.components.len() as f64;
        let (mut m1, mut m2) = (0.0, 0.0);
        for c in &self.components {
            let (mu, var) = self.component_mean_var(c, q, &mut scratch);
            m1 += mu / h;
            m2 += (var + mu * mu) / h;
        }
        Ok((m1, (m2 - m1 * m1).max(0.0)))
    }

    /// Per-draw joint predictive moments at `queries`, plus mixture marginals.
    pub fn predict(&self, queries: &Points) -> Result<Prediction> {
        if queries.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: queries.dim(),
            });
        }
        let m = self.x.len();
        let nq = queries.len();
        let h = self.components.len() as f64;
        let mut per_draw = Vec::with_capacity(self.components.len());
        let mut m1 = vec![0.0; nq];
        let mut m2 = vec![0.0; nq];
        for c in &self.components {
            let rho = &c.draw.inv_sq_lengthscales;
            let s2 = c.draw.signal_variance;
            let mut mean = DVector::zeros(nq);
            let mut v = Vec::with_capacity(nq);
            for (j, q) in queries.rows().enumerate() {
                let mut k: Vec<f64> = self
                    .x
                    .rows()
                    .map(|r| s2 * matern52(scaled_sq_dist(r, q, rho)))
                    .collect();
                mean[j] = linalg::dot(&k, &c.alpha);
                linalg::solve_lower(&c.chol, m, &mut k);
                v.push(k);
            }
            let mut cov = DMatrix::zeros(nq, nq);
            for a in 0..nq {
                for b in 0..=a {
                    let prior = s2 * matern52(scaled_sq_dist(queries.row(a), queries.row(b), rho));
                    let val = prior - linalg::dot(&v[a], &v[b]);
                    cov[(a, b)] = val;
                    cov[(b, a)] = val;
                }
                cov[(a, a)] = cov[(a, a)].max(0.0);
            }
            for j in 0..nq {
                m1[j] += mean[j] / h;
                m2[j] += (cov[(j, j)] + mean[j] * mean[j]) / h;
            }
            per_draw.push(DrawPrediction { mean, covariance: cov });
        }
        let mixture_variance = m2.iter().zip(&m1).map(|(s, mu)| (s - mu * mu).max(0.0)).collect();
        Ok(Prediction {
            per_draw,
            mixture_mean: m1,
            mixture_variance,
        })
    }
}
