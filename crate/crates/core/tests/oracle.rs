mod common;

use common::random_instance;
use lsmtune_core::oracle::{adaptive_sequence, approximation_ratio, brute_force_minimum, evaluate_sequence};
use lsmtune_core::{optimal_sequence, CostConstants, OracleAction, SearchConfig, TinyInstance, WorkloadMix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn memoized_optimum_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..150 {
        let inst = random_instance(&mut rng, 5, 4);
        let plan = optimal_sequence(&inst).unwrap();
        let (min, count) = brute_force_minimum(&inst).unwrap();
        assert!(count >= 1);
        assert!((plan.total_cost - min).abs() <= 1e-12 * min.max(1.0), "{} vs {min}", plan.total_cost);
        assert!(plan.total_cost <= min * (1.0 + 1e-12));
    }
}

#[test]
fn replaying_the_plan_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..150 {
        let inst = random_instance(&mut rng, 6, 4);
        let plan = optimal_sequence(&inst).unwrap();
        let replay = evaluate_sequence(&inst, &plan.actions).unwrap();
        assert_eq!(replay.total_cost.to_bits(), plan.total_cost.to_bits());
        assert_eq!(replay.avg_cost.to_bits(), plan.avg_cost.to_bits());
    }
}

#[test]
fn adaptive_policy_stays_within_twice_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let config = SearchConfig { workers: 1, ..Default::default() };
    let mut worst: f64 = 1.0;
    for _ in 0..40 {
        let inst = random_instance(&mut rng, 6, 4);
        let best = optimal_sequence(&inst).unwrap();
        let adaptive = adaptive_sequence(&inst, &config).unwrap();
        let ratio = approximation_ratio(&adaptive, &best);
        assert!(ratio >= 1.0 - 1e-12, "adaptive beat the optimum: {ratio}");
        worst = worst.max(ratio);
    }
    assert!(worst <= 2.0 + 1e-9, "worst ratio {worst}");
}

#[test]
fn all_equal_sequences_give_ratio_one() {
    // Pure writes with stalls disabled: every action costs the same per window.
    let mix = WorkloadMix { range: 0.0, update: 2048.0, point: 0.0 };
    let inst = TinyInstance {
        max_levels: 2,
        runs: vec![(0, 1 << 17), (0, 1 << 17), (1, 1 << 18)],
        schedule: vec![mix; 3],
        constants: CostConstants::default(),
        stall_threshold: 1000,
        stall_rate_us: 0.0,
    };
    let best = optimal_sequence(&inst).unwrap();
    let adaptive = adaptive_sequence(&inst, &SearchConfig { workers: 1, ..Default::default() }).unwrap();
    assert_eq!(approximation_ratio(&adaptive, &best), 1.0);
    let idle = evaluate_sequence(&inst, &[OracleAction::Idle; 3]).unwrap();
    assert_eq!(idle.avg_cost, best.avg_cost);
}
