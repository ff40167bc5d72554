mod common;

use common::random_tree;
use lsmtune_core::{
    all_candidates, baseline_trigger, bloom_fpr, BaselineKind, BaselinePolicy, EnumConfig, SortedRun, TreeState,
    TreeViolation,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_flushes_and_candidates_keep_the_tree_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..200 {
        let levels = rng.gen_range(1..=7);
        let mut state = random_tree(&mut rng, levels, 3, 1 << 20);
        let config = EnumConfig { max_levels: levels, ..Default::default() };
        for _ in 0..60 {
            if rng.gen_bool(0.5) {
                state.push_flush(rng.gen_range(1..1 << 20));
            } else {
                let cands = all_candidates(&state, &config);
                if !cands.is_empty() {
                    let pick = &cands[rng.gen_range(0..cands.len())];
                    let id = state.next_id();
                    pick.apply(&mut state, id).unwrap();
                }
            }
            assert_eq!(state.validate(), Ok(()));
            assert_eq!(state.total_bytes(), state.runs().map(|r| r.size_bytes).sum::<u64>());
            assert_eq!(state.run_count(), state.runs().count());
        }
    }
}

#[test]
fn baselines_keep_the_tree_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    for kind in [BaselineKind::Leveling, BaselineKind::Tiering, BaselineKind::LazyLeveling] {
        for ratio in [2, 4, 10] {
            let policy = BaselinePolicy::new(kind, ratio, 1 << 20).unwrap();
            let mut state = TreeState::new(rng.gen_range(2..=7));
            for _ in 0..500 {
                state.push_flush(1 << 20);
                let mut guard = 0;
                while let Some(action) = baseline_trigger(&policy, &state) {
                    let id = state.next_id();
                    action.apply(&mut state, id).unwrap();
                    assert_eq!(state.validate(), Ok(()));
                    guard += 1;
                    assert!(guard < 100, "{kind:?} does not settle");
                }
            }
        }
    }
}

#[test]
fn validate_examples() {
    assert_eq!(TreeState::new(4).validate(), Ok(()));
    assert_eq!(TreeState::from_runs(4, [SortedRun::new(0, 2, 5, 3, 4)]).unwrap().validate(), Ok(()));
    let bad = TreeState::from_runs(4, [SortedRun::new(0, 0, 5, 5, 5), SortedRun::new(1, 1, 5, 9, 9)]).unwrap();
    assert!(matches!(bad.validate(), Err(TreeViolation::LevelOrder { .. })));
}

#[test]
fn bloom_examples() {
    assert!((bloom_fpr(10.0) - 0.00819).abs() < 1e-5);
    assert_eq!(bloom_fpr(0.0), 1.0);
    let ln2 = std::f64::consts::LN_2;
    assert!((bloom_fpr(10.0 / (ln2 * ln2)) - (-10.0f64).exp()).abs() < 1e-15);
}
