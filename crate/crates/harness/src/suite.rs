//! Matching-task test cases whose sparsity and weight-sum histogram follow
//! a fixed table.

use std::fmt;

use mergebo_core::MergeCoefficients;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Nouns used for the 30 prompts; the last five are people.
pub const NOUNS: [&str; 30] = [
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "dolphin",
    "shark",
    "butterfly",
    "tiger",
    "elephant",
    "turtle",
    "airplane",
    "car",
    "ship",
    "truck",
    "rose",
    "bottle",
    "apple",
    "lamp",
    "chair",
    "house",
    "mountain",
    "oak",
    "train",
    "baby",
    "girl",
    "boy",
    "woman",
    "man",
];

const PEOPLE: [&str; 5] = ["baby", "girl", "boy", "woman", "man"];

/// Smallest magnitude a ground-truth coefficient may have.
pub const MIN_ACTIVE: f64 = 0.1;

/// Generation attempts per slot before giving up.
const MAX_ATTEMPTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WeightBin {
    #[serde(rename = "(0,1]")]
    UpTo1,
    #[serde(rename = "(1,2]")]
    UpTo2,
    #[serde(rename = "(2,3]")]
    UpTo3,
    #[serde(rename = "(3,4]")]
    UpTo4,
}

impl WeightBin {
    pub const ALL: [WeightBin; 4] = [WeightBin::UpTo1, WeightBin::UpTo2, WeightBin::UpTo3, WeightBin::UpTo4];

    pub fn of(sum: f64) -> Option<Self> {
        match sum {
            s if s > 0.0 && s <= 1.0 => Some(Self::UpTo1),
            s if s > 1.0 && s <= 2.0 => Some(Self::UpTo2),
            s if s > 2.0 && s <= 3.0 => Some(Self::UpTo3),
            s if s > 3.0 && s <= 4.0 => Some(Self::UpTo4),
            _ => None,
        }
    }

    pub fn contains(&self, sum: f64) -> bool {
        Self::of(sum) == Some(*self)
    }
}

impl fmt::Display for WeightBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WeightBin::UpTo1 => "(0,1]",
            WeightBin::UpTo2 => "(1,2]",
            WeightBin::UpTo3 => "(2,3]",
            WeightBin::UpTo4 => "(3,4]",
        };
        f.write_str(s)
    }
}

/// `(z, bin, count)` rows of the target distribution, 30 cases in total.
pub const SUITE_TABLE: [(usize, WeightBin, usize); 10] = [
    (2, WeightBin::UpTo1, 1),
    (2, WeightBin::UpTo2, 10),
    (3, WeightBin::UpTo2, 3),
    (3, WeightBin::UpTo3, 5),
    (4, WeightBin::UpTo2, 2),
    (4, WeightBin::UpTo3, 4),
    (4, WeightBin::UpTo4, 1),
    (5, WeightBin::UpTo2, 1),
    (5, WeightBin::UpTo3, 2),
    (5, WeightBin::UpTo4, 1),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    #[default]
    Coefficient,
    Render,
}

impl std::str::FromStr for OracleKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coefficient" => Ok(Self::Coefficient),
            "render" => Ok(Self::Render),
            other => Err(HarnessError::Usage(format!("unknown oracle `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub case_id: String,
    pub n: usize,
    pub alpha_gt: MergeCoefficients,
    pub z_gt: usize,
    pub weight_sum_bin: WeightBin,
    pub prompt: String,
    pub prompt_seed: u64,
    pub oracle: OracleKind,
}

impl TestCase {
    pub fn gt_support(&self) -> Vec<usize> {
        self.alpha_gt.support()
    }
}

fn prompt_for(noun: &str) -> String {
    if PEOPLE.contains(&noun) {
        format!("a portrait of {noun}")
    } else {
        format!("a drawing of {noun}")
    }
}

/// Draws one coefficient vector for a `(z, bin)` slot: a random support of
/// size `z` with uniform values, entries below [`MIN_ACTIVE`] zeroed, and the
/// draw rejected unless it still has `z` active entries and its sum lies in
/// the bin.
fn draw_slot<R: Rng + ?Sized>(n: usize, z: usize, bin: WeightBin, rng: &mut R) -> Result<Vec<f64>> {
    for _ in 0..MAX_ATTEMPTS {
        let mut alpha = vec![0.0; n];
        for i in sample_indices(rng, n, z) {
            let v: f64 = rng.random();
            alpha[i] = if v < MIN_ACTIVE { 0.0 } else { v };
        }
        let active = alpha.iter().filter(|&&v| v != 0.0).count();
        if active == z && bin.contains(alpha.iter().sum()) {
            return Ok(alpha);
        }
    }
    Err(HarnessError::Suite(format!("could not fill slot z={z}, bin {bin}")))
}

/// The 30-case matching suite for a collection of `n` adapters.
pub fn build_test_suite(n: usize, seed: u64, oracle: OracleKind) -> Result<Vec<TestCase>> {
    if n < 20 {
        return Err(HarnessError::Usage(format!("suite needs n >= 20 adapters, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(30);
    for &(z, bin, count) in &SUITE_TABLE {
        for _ in 0..count {
            let alpha = draw_slot(n, z, bin, &mut rng)?;
            let index = cases.len();
            let noun = NOUNS[index];
            cases.push(TestCase {
                case_id: format!("case{index:02}-z{z}"),
                n,
                alpha_gt: MergeCoefficients::new(alpha)?,
                z_gt: z,
                weight_sum_bin: bin,
                prompt: prompt_for(noun),
                prompt_seed: rng.random(),
                oracle,
            });
        }
    }
    Ok(cases)
}

/// `count` cases spread evenly over the suite order, which keeps every
/// sparsity level represented.
pub fn stratified_subset(cases: &[TestCase], count: usize) -> Vec<TestCase> {
    if count >= cases.len() {
        return cases.to_vec();
    }
    (0..count).map(|i| cases[i * cases.len() / count].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_totals() {
        assert_eq!(SUITE_TABLE.iter().map(|r| r.2).sum::<usize>(), 30);
    }

    #[test]
    fn bins() {
        assert_eq!(WeightBin::of(1.0), Some(WeightBin::UpTo1));
        assert_eq!(WeightBin::of(1.0000001), Some(WeightBin::UpTo2));
        assert_eq!(WeightBin::of(0.0), None);
        assert_eq!(WeightBin::of(4.5), None);
        assert_eq!(serde_json::to_string(&WeightBin::UpTo3).unwrap(), "\"(2,3]\"");
    }

    #[test]
    fn suite_is_deterministic_and_valid() {
        let a = build_test_suite(20, 7, OracleKind::Coefficient).unwrap();
        let b = build_test_suite(20, 7, OracleKind::Coefficient).unwrap();
        assert_eq!(a, b);
        for c in &a {
            assert_eq!(c.gt_support().len(), c.z_gt);
            assert!(c.weight_sum_bin.contains(c.alpha_gt.sum()));
            assert!(c.alpha_gt.as_slice().iter().all(|&v| v == 0.0 || v >= MIN_ACTIVE));
        }
        assert_eq!(a[25].prompt, "a portrait of baby");
        assert_eq!(a[0].prompt, "a drawing of bird");
    }

    #[test]
    fn subset_spreads_over_levels() {
        let cases = build_test_suite(20, 1, OracleKind::Coefficient).unwrap();
        let sub = stratified_subset(&cases, 10);
        assert_eq!(sub.len(), 10);
        let mut zs: Vec<usize> = sub.iter().map(|c| c.z_gt).collect();
        zs.dedup();
        assert_eq!(zs, vec![2, 3, 4, 5]);
    }
}
