//! Upper-confidence-bound acquisition and its batch maximization.

mod qucb;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use qucb::{qucb_batch, qucb_batch_gradient, BaseSamples};

use crate::error::{Error, Result};
use crate::optim::BoxLbfgs;
use crate::simplex::{random_ordering, stick_break_raw, stick_break_vjp};
use crate::surrogate::{Points, PosteriorMixture};
use crate::types::{MergeCoefficients, SearchSpace, SUM_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub lambda: f64,
    pub q: usize,
    pub raw_samples: usize,
    pub restarts: usize,
    pub mc_base_samples: usize,
    /// Latent variables stay in `[clamp_eps, 1 − clamp_eps]` during ascent.
    pub clamp_eps: f64,
    /// Output coefficients within this distance of 0 or 1 are snapped.
    pub round_eps: f64,
    /// Quasi-Newton iteration cap per restart.
    pub max_iters: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            lambda: 9.0,
            q: 8,
            raw_samples: 1024,
            restarts: 20,
            mc_base_samples: 128,
            clamp_eps: 1e-4,
            round_eps: 1e-2,
            max_iters: 200,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::InvalidInput("q must be at least 1".into()));
        }
        if self.restarts == 0 || self.raw_samples < self.restarts {
            return Err(Error::InvalidInput(format!(
                "need 1 <= restarts ({}) <= raw_samples ({})",
                self.restarts, self.raw_samples
            )));
        }
        if self.mc_base_samples == 0 {
            return Err(Error::InvalidInput("mc_base_samples must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.clamp_eps >= 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::InvalidInput("clamp_eps must lie in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// `μ(α) + λ √var(α)` under the posterior mixture.
pub fn ucb(post: &PosteriorMixture, alpha: &[f64], lambda: f64) -> Result<f64> {
    let (mean, var) = post.mean_variance(alpha)?;
    Ok(mean + lambda * var.sqrt())
}

/// Snaps entries below `eps` to 0, and entries within `eps` of 1 up to 1
/// as long as the capped-simplex budget still holds.
pub fn round_coefficients(alpha: &mut [f64], space: &SearchSpace, eps: f64) {
    for v in alpha.iter_mut() {
        if v.abs() < eps {
            *v = 0.0;
        }
    }
    let cap = match *space {
        SearchSpace::CappedSimplex { cap, .. } => cap,
        SearchSpace::Hypercube { .. } => f64::INFINITY,
    };
    let mut sum: f64 = alpha.iter().sum();
    for v in alpha.iter_mut() {
        if *v != 1.0 && (*v - 1.0).abs() < eps {
            let next = sum + (1.0 - *v);
            if next <= cap + SUM_TOLERANCE {
                sum = next;
                *v = 1.0;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub batch: Vec<MergeCoefficients>,
    /// Batch UCB of the returned (rounded) batch.
    pub value: f64,
    /// Batch UCB of the best raw start after rounding.
    pub best_raw_value: f64,
    /// Every restart stalled at its start, so the best raw batch was returned.
    pub used_fallback: bool,
}

/// Hypercube latent variables mapped into the search space, with a fixed
/// stick-breaking ordering per batch point in the simplex case.
struct Parameterization {
    space: SearchSpace,
    orderings: Vec<Vec<usize>>,
}

impl Parameterization {
    fn map(&self, latent: &[f64]) -> Vec<f64> {
        let d = self.space.dim();
        match self.space {
            SearchSpace::Hypercube { .. } => latent.to_vec(),
            SearchSpace::CappedSimplex { cap, .. } => latent
                .chunks_exact(d)
                .zip(&self.orderings)
                .flat_map(|(x, ord)| stick_break_raw(x, ord, cap))
                .collect(),
        }
    }

    fn pull_back(&self, latent: &[f64], grad_alpha: &[f64]) -> Vec<f64> {
        let d = self.space.dim();
        match self.space {
            SearchSpace::Hypercube { .. } => grad_alpha.to_vec(),
            SearchSpace::CappedSimplex { cap, .. } => latent
                .chunks_exact(d)
                .zip(grad_alpha.chunks_exact(d))
                .zip(&self.orderings)
                .flat_map(|((x, g), ord)| stick_break_vjp(x, ord, cap, g))
                .collect(),
        }
    }
}

fn rounded(alpha: &[f64], space: &SearchSpace, eps: f64) -> Vec<f64> {
    let mut out: Vec<f64> = alpha.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    for point in out.chunks_exact_mut(space.dim()) {
        round_coefficients(point, space, eps);
    }
    out
}

/// Maximizes batch UCB over `space`: scores `raw_samples` random batches,
/// ascends the best `restarts` of them with projected L-BFGS on the latent
/// hypercube variables, rounds, and returns the best candidate.
pub fn optimize_batch<R: Rng + ?Sized>(
    post: &PosteriorMixture,
    space: &SearchSpace,
    config: &AcquisitionConfig,
    rng: &mut R,
) -> Result<BatchOutcome> {
    config.validate()?;
    let d = space.dim();
    if d != post.dim() {
        return Err(Error::DimensionMismatch {
            expected: post.dim(),
            found: d,
        });
    }
    let q = config.q;
    let base = BaseSamples::new(q, config.mc_base_samples, rng);
    let (lo, hi) = (config.clamp_eps, 1.0 - config.clamp_eps);

    let starts: Vec<(Vec<f64>, Parameterization)> = (0..config.raw_samples)
        .map(|_| {
            let latent: Vec<f64> = (0..q * d).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
            let orderings = match space {
                SearchSpace::CappedSimplex { .. } => (0..q).map(|_| random_ordering(d, rng)).collect(),
                SearchSpace::Hypercube { .. } => Vec::new(),
            };
            (
                latent,
                Parameterization {
                    space: *space,
                    orderings,
                },
            )
        })
        .collect();

    let raw_values: Vec<f64> = starts
        .par_iter()
        .map(|(latent, p)| qucb::evaluate(post, &p.map(latent), &base, config.lambda, None))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..starts.len()).collect();
    order.sort_by(|&a, &b| raw_values[b].total_cmp(&raw_values[a]).then(a.cmp(&b)));
    order.truncate(config.restarts);

    let optimizer = BoxLbfgs {
        max_iters: config.max_iters,
        ..BoxLbfgs::default()
    };
    let ascended: Vec<(Vec<f64>, bool)> = order
        .par_iter()
        .map(|&idx| {
            let (latent, p) = &starts[idx];
            let objective = |x: &[f64], g: &mut [f64]| {
                let alpha = p.map(x);
                let mut ga = vec![0.0; alpha.len()];
                match qucb::evaluate(post, &alpha, &base, config.lambda, Some(&mut ga)) {
                    Ok(v) => {
                        g.copy_from_slice(&p.pull_back(x, &ga));
                        g.iter_mut().for_each(|v| *v = -*v);
                        -v
                    }
                    Err(_) => f64::NAN,
                }
            };
            let min = optimizer.minimize(objective, latent, lo, hi);
            (p.map(&min.x), min.stalled)
        })
        .collect();
    let used_fallback = ascended.iter().all(|(_, stalled)| *stalled);

    let best_raw = rounded(&starts[order[0]].1.map(&starts[order[0]].0), space, config.round_eps);
    let best_raw_value = qucb::evaluate(post, &best_raw, &base, config.lambda, None)?;
    let mut best = (best_raw, best_raw_value);
    if !used_fallback {
        for (alpha, _) in &ascended {
            let candidate = rounded(alpha, space, config.round_eps);
            let value = qucb::evaluate(post, &candidate, &base, config.lambda, None)?;
            if value > best.1 {
                best = (candidate, value);
            }
        }
    } else {
        log::warn!(
            "all {} acquisition restarts stalled; returning best raw batch",
            order.len()
        );
    }
    let batch = best
        .0
        .chunks_exact(d)
        .map(|c| MergeCoefficients::clamped(c.to_vec()))
        .collect();
    Ok(BatchOutcome {
        batch,
        value: best.1,
        best_raw_value,
        used_fallback,
    })
}

/// Convenience wrapper collecting a batch into [`Points`].
pub fn batch_points(batch: &[MergeCoefficients]) -> Result<Points> {
    Points::from_rows(&batch.iter().map(|a| a.as_slice()).collect::<Vec<_>>())
}
