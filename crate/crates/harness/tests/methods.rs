use mergebo_core::{MergeCoefficients, SampleId, SessionConfig};
use mergebo_harness::methods::{gallery_grid, shared_initial, step_random_direction, CdMode, CoordinateDescent};
use mergebo_harness::oracle::rank_scored;
use mergebo_harness::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn suite() -> Vec<TestCase> {
    build_test_suite(20, 3, OracleKind::Coefficient).unwrap()
}

/// A short engine configuration so full engine runs stay quick.
fn quick_options() -> RunOptions {
    RunOptions {
        engine: SessionConfig {
            t1: 2,
            t2: 2,
            raw_samples: 64,
            restarts: 2,
            mc_base_samples: 32,
            warmup: 20,
            posterior_samples: 20,
            thinning: 5,
            ascent_iters: 30,
            ..SessionConfig::default()
        },
        plant_target: false,
    }
}

#[test]
fn coordinate_values_are_evenly_spaced() {
    let mut cd = CoordinateDescent::new(CdMode::Cyclic, 8);
    let current = vec![0.3; 5];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut visited = Vec::new();
    for _ in 0..12 {
        let (coord, candidates) = cd.step(&current, &mut rng);
        visited.push(coord);
        assert_eq!(candidates.len(), 8);
        for (j, c) in candidates.iter().enumerate() {
            assert!((c[coord] - j as f64 / 7.0).abs() < 1e-15);
            let changed = (0..5).filter(|&i| c[i] != current[i]).count();
            assert_eq!(changed, 1);
        }
    }
    assert_eq!(visited, vec![0, 1, 2, 3, 4, 0, 1, 2, 3, 4, 0, 1]);
}

#[test]
fn random_coordinate_mode_stays_in_range() {
    let mut cd = CoordinateDescent::new(CdMode::Random, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut seen = [false; 6];
    for _ in 0..200 {
        let (coord, _) = cd.step(&[0.0; 6], &mut rng);
        seen[coord] = true;
    }
    assert!(seen.iter().all(|&s| s));
}

#[test]
fn random_direction_points_share_a_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let current: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
        let pts = step_random_direction(&current, 8, &mut rng).unwrap();
        assert_eq!(pts.len(), 8);
        assert!(pts.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        // Interior start: the segment is the exact chord, so every point is
        // collinear with the endpoints and the ends touch the box.
        let (a, b) = (&pts[0], &pts[7]);
        for p in &pts {
            let t = (0..6)
                .map(|i| (p[i] - a[i]) / (b[i] - a[i]))
                .find(|t| t.is_finite())
                .unwrap();
            for i in 0..6 {
                assert!((a[i] + t * (b[i] - a[i]) - p[i]).abs() < 1e-9);
            }
        }
        for end in [a, b] {
            assert!(end.iter().any(|&v| !(1e-9..=1.0 - 1e-9).contains(&v)));
        }
    }
}

#[test]
fn random_direction_in_one_dimension_spans_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for start in [0.0, 0.4, 1.0] {
        let mut pts: Vec<f64> = step_random_direction(&[start], 8, &mut rng)
            .unwrap()
            .into_iter()
            .map(|p| p[0])
            .collect();
        pts.sort_by(f64::total_cmp);
        for (j, v) in pts.iter().enumerate() {
            assert!((v - j as f64 / 7.0).abs() < 1e-12);
        }
    }
}

#[test]
fn random_direction_moves_off_a_sparse_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut current = vec![0.0; 20];
    current[3] = 0.6;
    let pts = step_random_direction(&current, 8, &mut rng).unwrap();
    assert!(pts.iter().any(|p| p != &current));
}

#[test]
fn gallery_grid_is_anchored_at_best() {
    let best = vec![0.2, 0.5, 0.9];
    let a = vec![0.8, 0.1, 0.4];
    let b = vec![1.0, 1.0, 0.0];
    let grid = gallery_grid(&best, &a, &b);
    assert_eq!(grid.len(), 9);
    assert_eq!(grid[0], best);
    for (x, y) in grid[6].iter().zip(&a) {
        assert!((x - y).abs() < 1e-15);
    }
    for (x, y) in grid[2].iter().zip(&b) {
        assert!((x - y).abs() < 1e-15);
    }
    assert!(grid.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn simulated_user_puts_target_first() {
    let case = &suite()[4];
    let oracle = Oracle::for_case(case).unwrap();
    let other = vec![0.5; 20];
    let gt = case.alpha_gt.as_slice().to_vec();
    let cands: Vec<(SampleId, &[f64])> = vec![(SampleId(0), &other), (SampleId(1), &gt)];
    assert_eq!(simulated_rank(&cands, &oracle, 1).unwrap(), vec![SampleId(1)]);
}

proptest! {
    #[test]
    fn ranking_ignores_input_order(scores in prop::collection::vec(0.0f64..1.0, 1..12), seed in any::<u64>()) {
        let scored: Vec<(SampleId, f64)> = scores.iter().enumerate().map(|(i, &s)| (SampleId(i as u64), s)).collect();
        let mut shuffled = scored.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let k = scores.len().min(5);
        prop_assert_eq!(rank_scored(scored, k), rank_scored(shuffled, k));
    }
}

#[test]
fn baselines_use_the_full_budget_and_keep_a_running_best() {
    let case = &suite()[11];
    let options = RunOptions::default();
    for method in [Method::CyclicCd, Method::RandomCd, Method::RandomDir] {
        let records = run_method(method, case, 0, &options).unwrap();
        assert_eq!(records.len(), 21);
        assert_eq!(records[0].renders_used, 5);
        assert_eq!(records.last().unwrap().renders_used, 165);
        for w in records.windows(2) {
            assert!(w[1].best_similarity >= w[0].best_similarity);
            assert_eq!(w[1].renders_used, w[0].renders_used + 8);
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let case = &suite()[0];
    let a = run_method(Method::RandomDir, case, 1, &RunOptions::default()).unwrap();
    let b = run_method(Method::RandomDir, case, 1, &RunOptions::default()).unwrap();
    let strip = |r: &[RunRecord]| {
        r.iter()
            .map(|x| (x.best_similarity, x.f1, x.renders_used))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn every_method_starts_from_the_same_initial_samples() {
    let case = &suite()[2];
    let options = quick_options();
    let first: Vec<f64> = [Method::Ours, Method::Gallery, Method::CyclicCd, Method::RandomDir]
        .iter()
        .map(|&m| run_method(m, case, 0, &options).unwrap()[0].best_similarity)
        .collect();
    assert!(first.windows(2).all(|w| w[0] == w[1]), "{first:?}");
}

#[test]
fn planted_target_is_found_by_every_method() {
    let case = &suite()[20];
    let mut options = quick_options();
    options.plant_target = true;
    let init = shared_initial(case, 0, &options);
    assert_eq!(init[0], case.alpha_gt);
    for method in [
        Method::Ours,
        Method::OursCapOff,
        Method::OursTop1NoPast,
        Method::Gallery,
        Method::CyclicCd,
        Method::RandomCd,
        Method::RandomDir,
    ] {
        let records = run_method(method, case, 0, &options).unwrap();
        assert!(records.iter().all(|r| r.best_similarity == 1.0), "{method}");
        assert_eq!(records.last().unwrap().f1, 1.0);
        assert_eq!(records.last().unwrap().renders_used, options.budget());
    }
}

#[test]
fn engine_run_records_every_iteration() {
    let case = &suite()[5];
    let options = quick_options();
    let records = run_method(Method::Ours, case, 0, &options).unwrap();
    let iterations: Vec<usize> = records.iter().map(|r| r.iteration).collect();
    assert_eq!(iterations, vec![0, 1, 2, 3, 4]);
    let renders: Vec<usize> = records.iter().map(|r| r.renders_used).collect();
    assert_eq!(renders, vec![5, 13, 21, 29, 37]);
}

#[test]
fn non_strict_budget_is_rejected() {
    let case = &suite()[0];
    let mut options = RunOptions::default();
    options.engine.strict_budget = false;
    assert!(run_method(Method::CyclicCd, case, 0, &options).is_err());
}

#[test]
fn shared_initial_lies_in_the_capped_simplex() {
    let options = RunOptions::default();
    for case in suite().iter().take(5) {
        for a in shared_initial(case, 7, &options) {
            assert!(a.sum() <= 2.0 + 1e-9);
            assert_eq!(a.len(), 20);
            let _: &MergeCoefficients = &a;
        }
    }
}
