mod common;

use common::{literal_f, random_mix, random_params, random_tree};
use lsmtune_core::search::simulate_trace;
use lsmtune_core::{
    find_best_params, pick_best, simulate_policy, CostConstants, DecisionParams, EnumConfig, ScoringOptions,
    SearchConfig, SortedRun, TreeState, WorkloadMix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Thirty runs shaped like a tree after a burst of writes.
fn thirty_run_tree() -> TreeState {
    let mut t = TreeState::new(4);
    let mut id = 0;
    let mut ts = 1;
    for (level, n, size) in [(3usize, 2u64, 200u64 << 20), (2, 6, 20 << 20), (1, 8, 4 << 20), (0, 14, 2 << 20)] {
        for i in 0..n {
            t.insert(SortedRun::new(id, level, size + i * 4096, ts, ts)).unwrap();
            id += 1;
            ts += 1;
        }
    }
    t
}

#[test]
fn trace_replays_on_the_full_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let c = CostConstants::default();
    let opts = ScoringOptions::default();
    for _ in 0..200 {
        let start = random_tree(&mut rng, 4, 4, 64 << 20);
        let mix = random_mix(&mut rng);
        let p = random_params(&mut rng);
        let iters = rng.gen_range(1..40);
        let (avg, trace) = simulate_trace(&start, &mix, &c, &p, iters, &opts).unwrap();
        assert_eq!(trace.len(), iters);

        let mut state = start.clone();
        let (mut cost, mut ops) = (0.0, 0.0);
        for rec in &trace {
            let s = state.run_count() as u64;
            assert_eq!(rec.runs_before, s);
            let windows = match pick_best(&state, &mix, &c, &p, &opts) {
                Some(best) => {
                    let shape = rec.shape.expect("replay compacts where the trace does");
                    assert_eq!(
                        (best.candidate.bytes, best.candidate.runs_reduced, best.candidate.output_level as u8, best.windows),
                        (shape.bytes, shape.runs_reduced, shape.output_level, rec.windows)
                    );
                    let id = state.next_id();
                    best.candidate.apply(&mut state, id).unwrap();
                    best.windows
                }
                None => {
                    assert!(rec.shape.is_none());
                    1
                }
            };
            let step = literal_f(s, windows, &c, &mix, &p);
            assert!(rel_close(step, rec.cost));
            assert_eq!(rec.ops, windows as f64 * mix.total());
            cost += rec.cost;
            ops += rec.ops;
            if mix.update > 0.0 {
                for _ in 0..windows {
                    state.push_flush(c.memtable_size);
                }
            }
            state.validate().unwrap();
        }
        assert_eq!(avg, cost / ops);
    }
}

#[test]
fn longer_horizons_extend_the_same_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let c = CostConstants::default();
    for _ in 0..50 {
        let start = random_tree(&mut rng, 4, 5, 64 << 20);
        let mix = random_mix(&mut rng);
        let p = random_params(&mut rng);
        let (_, short) = simulate_trace(&start, &mix, &c, &p, 30, &ScoringOptions::default()).unwrap();
        let (_, long) = simulate_trace(&start, &mix, &c, &p, 120, &ScoringOptions::default()).unwrap();
        assert_eq!(short[..], long[..30]);
    }
}

fn small_config(workers: usize) -> SearchConfig {
    SearchConfig { workers, max_iter: 60, ..Default::default() }
}

#[test]
fn worker_count_does_not_change_the_result() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let c = CostConstants::default();
    for _ in 0..12 {
        let state = random_tree(&mut rng, 4, 3, 64 << 20);
        let mix = random_mix(&mut rng);
        let one = find_best_params(&state, &mix, &c, &small_config(1)).unwrap();
        let many = find_best_params(&state, &mix, &c, &small_config(16)).unwrap();
        assert!(one.same_outcome(&many), "{one:?} vs {many:?}");
    }
    let mix = WorkloadMix::balanced(2048.0);
    let one = find_best_params(&thirty_run_tree(), &mix, &c, &SearchConfig { workers: 1, ..Default::default() }).unwrap();
    let many = find_best_params(&thirty_run_tree(), &mix, &c, &SearchConfig::default()).unwrap();
    assert!(one.same_outcome(&many));
}

#[test]
fn best_tuple_reproduces_and_beats_sampled_tuples() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let c = CostConstants::default();
    for _ in 0..6 {
        let state = random_tree(&mut rng, 4, 3, 64 << 20);
        let mix = random_mix(&mut rng);
        let config = small_config(1);
        let found = find_best_params(&state, &mix, &c, &config).unwrap();
        let again = simulate_policy(&state, &mix, &c, &found.best_params, config.max_iter, &config.scoring).unwrap();
        assert_eq!(again, found.best_avg_cost);
        let s = state.run_count() as u64;
        for _ in 0..20 {
            let p = DecisionParams {
                long_term_weight: 5.0 * rng.gen_range(0..4) as f64,
                stall_threshold: 1 + 2 * rng.gen_range(0..(2 * s.max(1))),
                stall_rate_us: [6.0, 12.0, 24.0][rng.gen_range(0..3)],
            };
            let avg = simulate_policy(&state, &mix, &c, &p, config.max_iter, &config.scoring).unwrap();
            assert!(found.best_avg_cost <= avg, "{p:?} gives {avg} below {}", found.best_avg_cost);
        }
    }
}

#[test]
fn pure_writes_avoid_stalling() {
    let c = CostConstants::default();
    let state = thirty_run_tree();
    let mix = WorkloadMix { range: 0.0, update: 2048.0, point: 0.0 };
    let found = find_best_params(&state, &mix, &c, &small_config(1)).unwrap();
    assert!(found.best_params.stall_threshold >= state.run_count() as u64, "{found:?}");
}

#[test]
fn single_candidate_tree_compacts() {
    let mut state = TreeState::new(2);
    state.insert(SortedRun::new(0, 0, 1 << 20, 10, 10)).unwrap();
    state.insert(SortedRun::new(1, 0, 1 << 20, 11, 11)).unwrap();
    let c = CostConstants::default();
    let mix = WorkloadMix { range: 500.0, update: 2048.0, point: 500.0 };
    let config = SearchConfig {
        scoring: ScoringOptions { enumeration: EnumConfig { max_levels: 2, ..Default::default() }, ..Default::default() },
        ..small_config(1)
    };
    let found = find_best_params(&state, &mix, &c, &config).unwrap();
    let pick = pick_best(&state, &mix, &c, &found.best_params, &config.scoring).expect("merging is chosen");
    assert_eq!(pick.candidate.runs_reduced, 1);
}

#[test]
fn thirty_run_balanced_search_fits_the_budget() {
    let c = CostConstants::default();
    let mix = WorkloadMix::balanced(2048.0);
    let state = thirty_run_tree();
    // Warm once so page faults and thread start-up do not count.
    find_best_params(&state, &mix, &c, &SearchConfig::default()).unwrap();
    let found = find_best_params(&state, &mix, &c, &SearchConfig::default()).unwrap();
    assert!(found.wall_time.as_millis() < 150, "{:?}", found.wall_time);
}
