//! Two-stage preferential Bayesian optimization of sparse merging
//! coefficients.
//!
//! A session shows a handful of candidate coefficient vectors, the user
//! ranks the best few, and the engine turns those rankings into pairwise
//! preferences, fits a sparse GP surrogate to them and proposes the next
//! batch by maximizing a batch upper confidence bound. Stage 1 searches the
//! B-capped simplex; stage 2 polishes the sparsity pattern of the stage-1
//! winner over the unconstrained hypercube restricted to that pattern.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod acquisition;
pub mod config;
pub mod error;
mod linalg;
pub mod optim;
pub mod render;
pub mod session;
pub mod simplex;
pub mod surrogate;
pub mod types;

pub use acquisition::{optimize_batch, qucb_batch, ucb, AcquisitionConfig, BaseSamples, BatchOutcome};
pub use config::{RetainMode, SessionConfig};
pub use error::{ConfigViolation, Error, Result};
pub use render::{coefficient_similarity, image_similarity, Image, RenderSpec, Renderer};
pub use session::{expand_ranking, DisplayBatch, Event, RankingSubmission, Sample, Session, Step};
pub use simplex::{capped_simplex_volume, sample_initial, stick_break, stick_break_jacobian, StickBreakInput};
pub use surrogate::{fit_preferences, Points, PosteriorMixture};
pub use types::{MergeCoefficients, PreferencePair, SampleId, SearchSpace, SparsityPattern};
