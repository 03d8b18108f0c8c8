//! Preference-based Gaussian-process surrogate.
//!
//! Fitting happens in two steps. Pairwise comparisons are first turned into
//! scalar latent utilities by a probit MAP estimate under a fixed reference
//! GP prior; the standardized utilities are then treated as ordinary
//! regression targets for a GP whose hyperparameters carry a sparse
//! axis-aligned subspace prior and are sampled with NUTS.

mod gp;
mod hyper;
pub mod kernel;
mod nuts;
mod probit;

use serde::{Deserialize, Serialize};

pub use gp::{DrawPrediction, PosteriorMixture, Prediction};
pub use hyper::{relevance_ranking, sample_hyperposterior, HyperDraw, Relevance, SamplerConfig};
pub use nuts::{sample_nuts, LogDensity, NutsSettings};
pub(crate) use probit::standardize;
pub use probit::{infer_latent_utilities, probit_objective, LatentUtilities};

use crate::error::{Error, Result};

/// A row-major set of points, one row per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::InvalidInput("no rows".into()))?;
        let mut data = Vec::with_capacity(dim * rows.len());
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Full surrogate fit from pairwise comparisons `(preferred_row, other_row)`:
/// MAP utilities, then hyperposterior draws. A utility solve that stops short
/// of its tolerance still yields a usable (standardized) last iterate.
pub fn fit_preferences<R: rand::Rng + ?Sized>(
    x: Points,
    pairs: &[(usize, usize)],
    sigma: f64,
    sampler: &SamplerConfig,
    rng: &mut R,
) -> Result<(PosteriorMixture, Vec<f64>)> {
    let utilities = match infer_latent_utilities(&x, pairs, sigma) {
        Ok(u) => u.values,
        Err(Error::NotConverged {
            iterations,
            grad_norm,
            last,
        }) => {
            log::warn!("utility MAP stopped after {iterations} steps at gradient norm {grad_norm:e}");
            standardize(&last)
        }
        Err(e) => return Err(e),
    };
    let draws = sample_hyperposterior(&x, &utilities, sampler, rng)?;
    let posterior = PosteriorMixture::new(x, utilities.clone(), draws)?;
    Ok((posterior, utilities))
}
