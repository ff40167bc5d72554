use std::collections::HashMap;

use lsmtune::workload::{
    build_named_workload, generate_ops, key_bytes, CompoundWorkload, KeyDistribution, MixSpec, Op, Phase, MIXES,
};

fn counts(mix: MixSpec, n: u64, seed: u64) -> [u64; 3] {
    let w = CompoundWorkload::single(mix, n, 0);
    let mut c = [0u64; 3];
    for (_, op) in generate_ops(&w, 10_000, seed).unwrap() {
        match op {
            Op::Scan { .. } => c[0] += 1,
            Op::Put { .. } => c[1] += 1,
            Op::Get { .. } => c[2] += 1,
        }
    }
    c
}

#[test]
fn generated_ratios_match_every_table_mix() {
    let n = 200_000;
    for mix in MIXES {
        let c = counts(mix, n, 11);
        let total = f64::from(mix.total());
        for (got, pct) in c.iter().zip([mix.range_pct, mix.update_pct, mix.point_pct]) {
            let want = f64::from(pct) / total;
            let share = *got as f64 / n as f64;
            assert!((share - want).abs() <= 0.01, "mix {}: {share} vs {want}", mix.name);
        }
    }
}

#[test]
fn streams_are_deterministic_per_seed() {
    let w = build_named_workload("II", 0.0001).unwrap();
    let a: Vec<_> = generate_ops(&w, 5000, 9).unwrap().collect();
    let b: Vec<_> = generate_ops(&w, 5000, 9).unwrap().collect();
    let c: Vec<_> = generate_ops(&w, 5000, 10).unwrap().collect();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.len() as u64, w.total_ops());
}

#[test]
fn phases_follow_the_named_sequences() {
    for (name, letters, ops) in [("I", "ABDJCE", 409_600), ("II", "JEBFDC", 409_600), ("III", "GHI", 204_800)] {
        let w = build_named_workload(name, 0.01).unwrap();
        let got: String = w.phases.iter().map(|p| p.mix.name).collect();
        assert_eq!(got, letters);
        assert!(w.phases.iter().all(|p| p.ops == ops));
        assert_eq!(w.preload_bytes, 429_496_730);
    }
    assert!(build_named_workload("IV", 0.01).is_err());
    assert!(build_named_workload("I", 0.0).is_err());
}

#[test]
fn phase_indices_advance_at_boundaries() {
    let w = CompoundWorkload {
        name: "x".into(),
        phases: vec![
            Phase { mix: MixSpec::named('A').unwrap(), ops: 3 },
            Phase { mix: MixSpec::named('B').unwrap(), ops: 0 },
            Phase { mix: MixSpec::named('C').unwrap(), ops: 2 },
        ],
        distribution: KeyDistribution::Uniform,
        preload_bytes: 0,
    };
    let phases: Vec<usize> = generate_ops(&w, 10, 1).unwrap().map(|(p, _)| p).collect();
    assert_eq!(phases, vec![0, 0, 0, 1, 1]);
    assert_eq!(w.phase_starts(), vec![0, 3, 3]);
}

#[test]
fn zipfian_keys_are_skewed_and_uniform_keys_are_not() {
    let n = 200_000u64;
    let space = 100_000u64;
    let top = |dist| {
        let mut w = CompoundWorkload::single(MixSpec::named('C').unwrap(), n, 0);
        w.distribution = dist;
        let mut freq: HashMap<u64, u64> = HashMap::new();
        for (_, op) in generate_ops(&w, space, 3).unwrap() {
            let k = match op {
                Op::Get { key } | Op::Put { key } | Op::Scan { start: key, .. } => key,
            };
            assert!(k < space);
            *freq.entry(k).or_default() += 1;
        }
        freq.values().copied().max().unwrap()
    };
    let uniform = top(KeyDistribution::Uniform);
    let zipf = top(KeyDistribution::parse("zipfian").unwrap());
    assert!(zipf >= 10 * uniform, "zipf top {zipf}, uniform top {uniform}");
}

#[test]
fn latest_keys_stay_in_the_newest_percent() {
    let mut w = CompoundWorkload::single(MixSpec::named('B').unwrap(), 10_000, 0);
    w.distribution = KeyDistribution::Latest;
    for (_, op) in generate_ops(&w, 50_000, 4).unwrap() {
        if let Op::Put { key } = op {
            assert!((49_500..50_000).contains(&key));
        }
    }
}

#[test]
fn custom_mixes_must_sum_to_one_hundred() {
    assert!(MixSpec::custom('X', 50, 25, 25).is_ok());
    assert!(MixSpec::custom('X', 50, 25, 24).is_err());
    assert_eq!(key_bytes(42), b"user00000000000000000042".to_vec());
}
