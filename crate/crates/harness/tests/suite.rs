use std::collections::BTreeMap;

use mergebo_harness::suite::{MIN_ACTIVE, SUITE_TABLE};
use mergebo_harness::*;

#[test]
fn histogram_matches_table_for_several_seeds_and_sizes() {
    for (n, seed) in [(20, 0), (20, 1), (30, 5), (40, 9)] {
        let cases = build_test_suite(n, seed, OracleKind::Coefficient).unwrap();
        assert_eq!(cases.len(), 30);
        let mut by_z: BTreeMap<usize, usize> = BTreeMap::new();
        let mut by_slot: BTreeMap<(usize, WeightBin), usize> = BTreeMap::new();
        for c in &cases {
            *by_z.entry(c.z_gt).or_default() += 1;
            *by_slot.entry((c.z_gt, c.weight_sum_bin)).or_default() += 1;
            assert_eq!(c.alpha_gt.len(), n);
            assert!(c.alpha_gt.as_slice().iter().all(|&v| v == 0.0 || v >= MIN_ACTIVE));
        }
        assert_eq!(
            by_z.into_iter().collect::<Vec<_>>(),
            vec![(2, 11), (3, 8), (4, 7), (5, 4)]
        );
        for (z, bin, count) in SUITE_TABLE {
            assert_eq!(by_slot[&(z, bin)], count);
        }
    }
}

#[test]
fn small_collections_are_rejected() {
    assert!(build_test_suite(19, 0, OracleKind::Coefficient).is_err());
}

#[test]
fn case_ids_are_unique_and_json_round_trips() {
    let cases = build_test_suite(20, 2, OracleKind::Render).unwrap();
    let ids: std::collections::BTreeSet<_> = cases.iter().map(|c| c.case_id.clone()).collect();
    assert_eq!(ids.len(), 30);
    let json = serde_json::to_string(&cases).unwrap();
    let back: Vec<TestCase> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, cases);
}

#[test]
fn render_oracle_scores_target_as_exact() {
    let case = &build_test_suite(20, 2, OracleKind::Render).unwrap()[7];
    let oracle = Oracle::for_case(case).unwrap();
    assert_eq!(oracle.similarity(case.alpha_gt.as_slice()).unwrap(), 1.0);
    assert!(oracle.similarity(&[0.0; 20]).unwrap() < 1.0);
}
