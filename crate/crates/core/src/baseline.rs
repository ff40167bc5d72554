//! Classical compaction triggers used as comparison policies.
//!
//! - Leveling: level `i > 0` holds at most `F * T^i` bytes and level 0 at most
//!   one run; an over-full level is merged whole into the next one.
//! - Tiering: a level holding `T` runs is merged into one run on the next
//!   level (within the bottom level once there).
//! - LazyLeveling: Tiering above the bottom level, which is kept as a single
//!   run.
//!
//! Baselines stall on the level-0 run count rather than the total.

use alloc::vec::Vec;

use crate::candidates::{CompactionCandidate, Pattern};
use crate::error::{Error, Result};
use crate::types::{RunId, SortedRun, TreeState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Leveling,
    Tiering,
    LazyLeveling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselinePolicy {
    pub kind: BaselineKind,
    pub size_ratio: u64,
    /// Flush size `F`; level `i` capacity under Leveling is `F * T^i`.
    pub buffer_bytes: u64,
}

impl BaselinePolicy {
    pub fn new(kind: BaselineKind, size_ratio: u64, buffer_bytes: u64) -> Result<Self> {
        if size_ratio < 2 {
            return Err(Error::Config("size ratio must be at least 2"));
        }
        if buffer_bytes == 0 {
            return Err(Error::Config("buffer size must be positive"));
        }
        Ok(Self { kind, size_ratio, buffer_bytes })
    }

    pub fn level_capacity(&self, level: usize) -> u64 {
        let mut cap = self.buffer_bytes;
        for _ in 0..level {
            cap = cap.saturating_mul(self.size_ratio);
        }
        cap
    }
}

/// Level-0 run count above which baseline updates are stalled.
pub const BASELINE_STALL_RUNS: usize = 20;
/// Added latency per stalled baseline update, microseconds.
pub const BASELINE_STALL_US: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaselineAction {
    Compact(CompactionCandidate),
    /// Relocate a run to a deeper level without rewriting it.
    Move { run: RunId, to_level: usize },
}

fn merge(runs: &[&SortedRun], output_level: usize) -> CompactionCandidate {
    let first = runs.iter().map(|r| r.level).min().unwrap_or(output_level);
    let pattern = match output_level - first {
        0 => Pattern::SingleLevel,
        1 => Pattern::NextLevel,
        _ => Pattern::Span,
    };
    CompactionCandidate {
        inputs: runs.iter().map(|r| r.id).collect(),
        output_level,
        bytes: runs.iter().map(|r| r.size_bytes).sum(),
        runs_reduced: runs.len() as u64 - 1,
        pattern,
    }
}

fn level_bytes(state: &TreeState, level: usize) -> u64 {
    state.level(level).iter().map(|r| r.size_bytes).sum()
}

/// Merge of all of `level` and `level + 1` into `level + 1`, or a move when
/// that is a single run landing on an empty level.
fn push_down(state: &TreeState, level: usize) -> BaselineAction {
    let upper = state.level(level);
    let lower = state.level(level + 1);
    if upper.len() == 1 && lower.is_empty() {
        return BaselineAction::Move { run: upper[0].id, to_level: level + 1 };
    }
    let runs: Vec<&SortedRun> = upper.iter().chain(lower.iter()).collect();
    BaselineAction::Compact(merge(&runs, level + 1))
}

fn tier_up(state: &TreeState, level: usize, bottom: usize) -> BaselineAction {
    let target = (level + 1).min(bottom);
    let runs: Vec<&SortedRun> = state.level(level).iter().collect();
    if runs.len() == 1 && target != level && state.level(target).is_empty() {
        return BaselineAction::Move { run: runs[0].id, to_level: target };
    }
    BaselineAction::Compact(merge(&runs, target))
}

/// Next action the baseline wants on `state`, if any.
pub fn baseline_trigger(policy: &BaselinePolicy, state: &TreeState) -> Option<BaselineAction> {
    let bottom = state.max_levels() - 1;
    let t = policy.size_ratio as usize;
    match policy.kind {
        BaselineKind::Leveling => (0..bottom).find_map(|level| {
            let over = if level == 0 {
                state.level(0).len() > 1
            } else {
                level_bytes(state, level) > policy.level_capacity(level)
            };
            over.then(|| push_down(state, level))
        }),
        BaselineKind::Tiering => (0..=bottom)
            .find(|&level| state.level(level).len() >= t)
            .map(|level| tier_up(state, level, bottom)),
        BaselineKind::LazyLeveling => {
            if bottom == 0 {
                return (state.level(0).len() > 1).then(|| tier_up(state, 0, 0));
            }
            if let Some(level) = (0..bottom - 1).find(|&l| state.level(l).len() >= t) {
                return Some(tier_up(state, level, bottom));
            }
            if state.level(bottom - 1).len() >= t {
                return Some(push_down(state, bottom - 1));
            }
            (state.level(bottom).len() > 1).then(|| tier_up(state, bottom, bottom))
        }
    }
}

impl BaselineAction {
    /// Applies the action to a simulated tree, returning the new run (or the
    /// moved one).
    pub fn apply(&self, state: &mut TreeState, output_id: u64) -> Result<SortedRun> {
        match self {
            BaselineAction::Compact(c) => c.apply(state, output_id),
            BaselineAction::Move { run, to_level } => {
                state.relocate(*run, *to_level)?;
                state.get(*run).copied().ok_or(Error::UnknownRun(run.0))
            }
        }
    }
}
