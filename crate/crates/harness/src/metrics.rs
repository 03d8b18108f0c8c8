//! Support-recovery score and the per-method summary of a result set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::records::{sort_records, RunRecord};

/// F1 of the predicted support against the ground-truth support.
pub fn f1_active(pred_support: &[usize], gt_support: &[usize]) -> f64 {
    let pred: BTreeSet<usize> = pred_support.iter().copied().collect();
    let gt: BTreeSet<usize> = gt_support.iter().copied().collect();
    if pred.is_empty() && gt.is_empty() {
        return 1.0;
    }
    let hits = pred.intersection(&gt).count() as f64;
    if hits == 0.0 {
        return 0.0;
    }
    let precision = hits / pred.len() as f64;
    let recall = hits / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Sparsity level encoded in a case id of the form `caseNN-zZ`.
pub fn case_sparsity(case_id: &str) -> Option<usize> {
    case_id.rsplit_once("-z")?.1.parse().ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRates {
    pub at_0_90: f64,
    pub at_0_95: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    /// Mean running-best similarity per iteration, over runs that reach it.
    pub mean_curve: Vec<f64>,
    pub mean_final_similarity: f64,
    pub success: SuccessRates,
    /// Keyed by sparsity level.
    pub success_by_z: BTreeMap<usize, SuccessRates>,
    pub median_final_f1: f64,
    pub mean_final_active: f64,
    pub final_renders: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub methods: Vec<MethodSummary>,
    /// Missing `(method, case, seed)` cells and truncated runs.
    pub missing: Vec<String>,
}

impl Summary {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }
}

fn rates(finals: &[f64]) -> SuccessRates {
    let runs = finals.len();
    let frac = |t: f64| finals.iter().filter(|&&s| s > t).count() as f64 / runs.max(1) as f64;
    SuccessRates {
        at_0_90: frac(0.9),
        at_0_95: frac(0.95),
        runs,
    }
}

/// Aggregates records into per-method summaries. A run's final record is its
/// highest iteration; success means final similarity strictly above the
/// threshold.
pub fn aggregate(records: &[RunRecord]) -> Summary {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);

    let mut runs: BTreeMap<(String, String, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in &sorted {
        runs.entry((r.method.clone(), r.case_id.clone(), r.seed))
            .or_default()
            .push(r);
    }
    let methods: BTreeSet<&str> = runs.keys().map(|k| k.0.as_str()).collect();
    let cells: BTreeSet<(&str, u64)> = runs.keys().map(|k| (k.1.as_str(), k.2)).collect();
    let last_iteration = sorted.iter().map(|r| r.iteration).max().unwrap_or(0);

    let mut missing = Vec::new();
    for &m in &methods {
        for &(case, seed) in &cells {
            match runs.get(&(m.to_string(), case.to_string(), seed)) {
                None => missing.push(format!("{m} {case} seed {seed}: no records")),
                Some(rs) => {
                    let last = rs.last().map_or(0, |r| r.iteration);
                    if last < last_iteration {
                        missing.push(format!("{m} {case} seed {seed}: stops at iteration {last}"));
                    }
                }
            }
        }
    }

    let mut summaries = Vec::new();
    for &m in &methods {
        let method_runs: Vec<&Vec<&RunRecord>> = runs.iter().filter(|(k, _)| k.0 == m).map(|(_, v)| v).collect();
        let mut sums = vec![0.0; last_iteration + 1];
        let mut counts = vec![0usize; last_iteration + 1];
        let mut finals = Vec::new();
        let mut f1s = Vec::new();
        let mut actives = Vec::new();
        let mut renders = Vec::new();
        let mut by_z: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for rs in &method_runs {
            for r in rs.iter() {
                sums[r.iteration] += r.best_similarity;
                counts[r.iteration] += 1;
            }
            let last = rs.last().expect("run has records");
            finals.push(last.best_similarity);
            f1s.push(last.f1);
            actives.push(last.num_active as f64);
            renders.push(last.renders_used);
            match case_sparsity(&last.case_id) {
                Some(z) => by_z.entry(z).or_default().push(last.best_similarity),
                None => missing.push(format!("{m} {}: case id carries no sparsity level", last.case_id)),
            }
        }
        let mean_curve = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
            .collect();
        let n = finals.len() as f64;
        summaries.push(MethodSummary {
            method: m.to_string(),
            runs: finals.len(),
            mean_curve,
            mean_final_similarity: finals.iter().sum::<f64>() / n,
            success: rates(&finals),
            success_by_z: by_z.iter().map(|(&z, f)| (z, rates(f))).collect(),
            median_final_f1: median(&f1s).unwrap_or(f64::NAN),
            mean_final_active: actives.iter().sum::<f64>() / n,
            final_renders: renders,
        });
    }
    Summary {
        methods: summaries,
        missing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_examples() {
        assert_eq!(f1_active(&[1, 3], &[1, 3]), 1.0);
        assert!((f1_active(&[1, 3, 5], &[1, 3]) - 0.8).abs() < 1e-12);
        assert_eq!(f1_active(&[], &[1]), 0.0);
        assert_eq!(f1_active(&[], &[]), 1.0);
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[1.0, 0.8, 0.5]), Some(0.8));
        assert_eq!(median(&[1.0, 0.0]), Some(0.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn sparsity_from_id() {
        assert_eq!(case_sparsity("case07-z3"), Some(3));
        assert_eq!(case_sparsity("other"), None);
    }
}
