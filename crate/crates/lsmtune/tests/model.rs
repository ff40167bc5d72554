mod common;

use common::{check_history, random_history, HistOp, POLICIES};
use lsmtune::PolicyKind;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn randomized_histories_match_a_reference_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..200 {
        let policy = PolicyKind::parse(POLICIES[i % POLICIES.len()]).unwrap();
        let ops = random_history(&mut rng, 300, 150);
        check_history(policy, &ops).unwrap_or_else(|e| panic!("history {i} under {}: {e}", policy.name()));
    }
}

fn op_strategy() -> impl Strategy<Value = HistOp> {
    let k = 0u64..80;
    prop_oneof![
        6 => (k.clone(), 0u64..1000).prop_map(|(k, v)| HistOp::Put(k, v)),
        2 => k.clone().prop_map(HistOp::Delete),
        3 => k.clone().prop_map(HistOp::Get),
        1 => (k.clone(), k.clone()).prop_map(|(a, b)| HistOp::Scan(a, b)),
        1 => (k, 0usize..30).prop_map(|(a, n)| HistOp::ScanFrom(a, n)),
        1 => Just(HistOp::Flush),
        1 => Just(HistOp::Settle),
        1 => Just(HistOp::Reopen),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_histories_match_a_reference_map(
        ops in prop::collection::vec(op_strategy(), 1..400),
        policy in 0usize..4,
    ) {
        let policy = PolicyKind::parse(POLICIES[policy]).unwrap();
        prop_assert_eq!(check_history(policy, &ops), Ok(()));
    }
}

#[test]
fn deletes_survive_compaction_into_the_bottom_level() {
    let ops: Vec<HistOp> = (0..200)
        .map(|k| HistOp::Put(k, 1))
        .chain((0..200).step_by(3).map(HistOp::Delete))
        .chain([HistOp::Flush, HistOp::Settle, HistOp::Reopen])
        .chain((0..200).map(HistOp::Get))
        .collect();
    for p in POLICIES {
        check_history(PolicyKind::parse(p).unwrap(), &ops).unwrap();
    }
}
