//! Shared value types: coefficient vectors, search spaces, sparsity patterns
//! and preference pairs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used by the capped-simplex membership test on the coefficient sum.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// A vector of merging coefficients, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MergeCoefficients(Vec<f64>);

impl MergeCoefficients {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("coefficient {i} = {v} outside [0, 1]")));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Clamps every entry into `[0, 1]` instead of rejecting.
    pub fn clamped(values: Vec<f64>) -> Self {
        Self(values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Indices of the exactly non-zero entries.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl TryFrom<Vec<f64>> for MergeCoefficients {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MergeCoefficients> for Vec<f64> {
    fn from(m: MergeCoefficients) -> Self {
        m.0
    }
}

impl std::ops::Index<usize> for MergeCoefficients {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// The feasible set the optimizer searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchSpace {
    Hypercube { n: usize },
    CappedSimplex { n: usize, cap: f64 },
}

impl SearchSpace {
    pub fn dim(&self) -> usize {
        match *self {
            SearchSpace::Hypercube { n } | SearchSpace::CappedSimplex { n, .. } => n,
        }
    }

    pub fn contains(&self, alpha: &[f64]) -> bool {
        if alpha.len() != self.dim() || alpha.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return false;
        }
        match *self {
            SearchSpace::Hypercube { .. } => true,
            SearchSpace::CappedSimplex { cap, .. } => alpha.iter().sum::<f64>() <= cap + SUM_TOLERANCE,
        }
    }
}

/// Sorted set of active coordinate indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityPattern {
    active: Vec<usize>,
}

impl SparsityPattern {
    pub fn new(mut active: Vec<usize>, n: usize) -> Result<Self> {
        active.sort_unstable();
        if active.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("duplicate index in pattern".into()));
        }
        if let Some(&i) = active.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidInput(format!(
                "pattern index {i} out of range for dimension {n}"
            )));
        }
        if active.is_empty() {
            return Err(Error::DegeneratePattern);
        }
        Ok(Self { active })
    }

    pub fn indices(&self) -> &[usize] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn contains_support(&self, alpha: &[f64]) -> bool {
        alpha
            .iter()
            .enumerate()
            .all(|(i, v)| *v == 0.0 || self.active.binary_search(&i).is_ok())
    }

    /// Restricts a full-dimensional vector to the active coordinates.
    pub fn project(&self, alpha: &[f64]) -> Vec<f64> {
        self.active.iter().map(|&i| alpha[i]).collect()
    }

    /// Embeds a reduced vector back into `n` dimensions, zeros off-pattern.
    pub fn embed(&self, reduced: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&i, &v) in self.active.iter().zip(reduced) {
            out[i] = v;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(pub u64);

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `preferred ≻ other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub preferred: SampleId,
    pub other: SampleId,
}

impl PreferencePair {
    pub fn new(preferred: SampleId, other: SampleId) -> Result<Self> {
        if preferred == other {
            return Err(Error::InvalidInput(format!(
                "sample {preferred} cannot be preferred over itself"
            )));
        }
        Ok(Self { preferred, other })
    }

    pub fn touches(&self, id: SampleId) -> bool {
        self.preferred == id || self.other == id
    }
}
