//! Similarity oracles standing in for a perceptual metric, and the simulated
//! user that ranks by them.

use mergebo_core::{coefficient_similarity, image_similarity, Image, RenderSpec, Renderer, SampleId};

use crate::error::Result;
use crate::suite::{OracleKind, TestCase};

/// Side length of images rendered by the render oracle.
pub const RENDER_SIDE: usize = 128;
/// Style collection shared by every case.
pub const COLLECTION_SEED: u64 = 0;

pub enum Oracle {
    Coefficient { target: Vec<f64>, scale: f64 },
    Render { renderer: Box<Renderer>, target: Image },
}

impl Oracle {
    pub fn for_case(case: &TestCase) -> Result<Self> {
        match case.oracle {
            OracleKind::Coefficient => Ok(Oracle::Coefficient {
                target: case.alpha_gt.as_slice().to_vec(),
                scale: 1.0,
            }),
            OracleKind::Render => {
                let spec = RenderSpec {
                    width: RENDER_SIDE,
                    height: RENDER_SIDE,
                    prompt_seed: case.prompt_seed,
                    collection_seed: COLLECTION_SEED,
                };
                let renderer = Renderer::new(case.n, spec)?;
                let target = renderer.render(case.alpha_gt.as_slice())?;
                Ok(Oracle::Render {
                    renderer: Box::new(renderer),
                    target,
                })
            }
        }
    }

    /// Similarity of `alpha` to the target; 1 means an exact match.
    pub fn similarity(&self, alpha: &[f64]) -> Result<f64> {
        match self {
            Oracle::Coefficient { target, scale } => Ok(coefficient_similarity(alpha, target, *scale)?),
            Oracle::Render { renderer, target } => {
                let image = renderer.render(alpha)?;
                Ok(image_similarity(&image, target)?)
            }
        }
    }
}

/// Sorts `scored` by similarity, best first, ties by id, and keeps `k`.
pub fn rank_scored(mut scored: Vec<(SampleId, f64)>, k: usize) -> Vec<SampleId> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(id, _)| id).collect()
}

/// The simulated user: top-`k` candidate ids by oracle similarity.
pub fn simulated_rank(candidates: &[(SampleId, &[f64])], oracle: &Oracle, k: usize) -> Result<Vec<SampleId>> {
    let scored = candidates
        .iter()
        .map(|&(id, alpha)| Ok((id, oracle.similarity(alpha)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_scored(scored, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_lower_id() {
        let ranked = rank_scored(vec![(SampleId(4), 0.5), (SampleId(2), 0.5), (SampleId(9), 0.7)], 3);
        assert_eq!(ranked, vec![SampleId(9), SampleId(2), SampleId(4)]);
    }
}
