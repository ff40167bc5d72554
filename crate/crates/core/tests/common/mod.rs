#![allow(dead_code)]

use std::collections::BTreeSet;

use lsmtune_core::{CostConstants, DecisionParams, RunId, SortedRun, TreeState, WorkloadMix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random timestamp-valid tree: deeper levels hold strictly older intervals.
pub fn random_tree(rng: &mut ChaCha8Rng, max_levels: usize, max_per_level: usize, max_size: u64) -> TreeState {
    let mut state = TreeState::new(max_levels);
    let mut ts = 1u64;
    let mut id = 0u64;
    for level in (0..max_levels).rev() {
        let n = rng.gen_range(0..=max_per_level);
        for _ in 0..n {
            let span = rng.gen_range(0..4);
            let size = rng.gen_range(1..=max_size);
            state.insert(SortedRun::new(id, level, size, ts, ts + span)).unwrap();
            id += 1;
            ts += span + 1;
        }
    }
    state
}

pub fn random_mix(rng: &mut ChaCha8Rng) -> WorkloadMix {
    let pick = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..2048.0) };
    let mut mix = WorkloadMix { range: pick(rng), update: pick(rng), point: pick(rng) };
    if mix.total() == 0.0 {
        mix.point = 1.0;
    }
    mix
}

pub fn random_params(rng: &mut ChaCha8Rng) -> DecisionParams {
    DecisionParams {
        long_term_weight: rng.gen_range(0.0..200.0),
        stall_threshold: rng.gen_range(1..80),
        stall_rate_us: rng.gen_range(0.0..30.0),
    }
}

/// Literal `f(s, t)`: one window at a time, run count growing by one per
/// window with updates.
pub fn literal_f(s: u64, t: u64, constants: &CostConstants, mix: &WorkloadMix, params: &DecisionParams) -> f64 {
    let growth = u64::from(mix.update > 0.0);
    (0..t)
        .map(|i| lsmtune_core::window_cost(s + growth * i, constants, mix, params).total)
        .sum()
}

/// Reference enumeration straight from the three patterns, deduplicated by
/// input set. Returns `(sorted input ids, output level)` pairs.
///
/// When several patterns produce one input set, the output level kept is the
/// deepest input level if that level is only partly consumed, otherwise one
/// below it, clamped to `bottom`.
pub fn reference_candidates(state: &TreeState, bottom: usize) -> BTreeSet<(Vec<u64>, usize)> {
    let sorted = |level: usize| -> Vec<SortedRun> {
        let mut v = state.level(level).to_vec();
        v.sort_by_key(|r| (r.size_bytes, r.id));
        v
    };
    let mut raw: Vec<(Vec<u64>, usize)> = Vec::new();
    for level in 0..=bottom {
        let runs = sorted(level);
        for len in 2..=runs.len() {
            raw.push((runs[..len].iter().map(|r| r.id.0).collect(), level));
        }
    }
    for from in 0..bottom {
        for to in from..bottom {
            let base: Vec<u64> = (from..=to).flat_map(|l| state.level(l).iter().map(|r| r.id.0)).collect();
            let next = sorted(to + 1);
            for len in 0..=next.len() {
                let mut ids = base.clone();
                ids.extend(next[..len].iter().map(|r| r.id.0));
                if ids.len() >= 2 {
                    raw.push((ids, to + 1));
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    let mut seen = BTreeSet::new();
    for (mut ids, _) in raw {
        ids.sort_unstable();
        if !seen.insert(ids.clone()) {
            continue;
        }
        let levels: BTreeSet<usize> = ids.iter().map(|id| state.get(RunId(*id)).unwrap().level).collect();
        let hi = *levels.last().unwrap();
        let taken = ids.iter().filter(|id| state.get(RunId(**id)).unwrap().level == hi).count();
        let output = if taken < state.level(hi).len() { hi } else { (hi + 1).min(bottom) };
        out.insert((ids, output));
    }
    out
}

/// Random tiny instance whose compactions can finish within the horizon.
pub fn random_instance(rng: &mut ChaCha8Rng, max_runs: usize, max_windows: usize) -> lsmtune_core::TinyInstance {
    let max_levels = rng.gen_range(1..=3);
    let n = rng.gen_range(1..=max_runs);
    let runs = (0..n)
        .map(|_| (rng.gen_range(0..max_levels), rng.gen_range(1u64..=64) << 17))
        .collect();
    let w = rng.gen_range(1..=max_windows);
    let schedule = (0..w)
        .map(|_| {
            let u = if rng.gen_bool(0.15) { 0.0 } else { 2048.0 };
            let mut mix = WorkloadMix { range: rng.gen_range(0.0..2048.0), update: u, point: rng.gen_range(0.0..4096.0) };
            if rng.gen_bool(0.2) {
                mix.range = 0.0;
            }
            mix
        })
        .collect();
    lsmtune_core::TinyInstance {
        max_levels,
        runs,
        schedule,
        constants: CostConstants::default(),
        stall_threshold: rng.gen_range(1..8),
        stall_rate_us: [0.0, 6.0, 12.0, 24.0][rng.gen_range(0..4)],
    }
}
