//! Enumeration of timestamp-valid compaction candidates.
//!
//! Three input patterns are admitted, each taking runs in ascending size
//! order within a level (ties by run id, older first):
//!
//! 1. a prefix of two or more runs of one level, written back to that level;
//! 2. every run of level `i` plus a prefix of level `i + 1`, written to `i + 1`;
//! 3. every run of levels `i..=j` plus a prefix of level `j + 1`, written to `j + 1`.
//!
//! Distinct patterns frequently name the same input set (an empty level in
//! the middle of a span, a full prefix, a move into an empty level). Each
//! input set is emitted once. When the set allows several output levels it
//! is written one level below its deepest input, or to that level if it is
//! already the bottom.
//!
//! Enumeration runs over [`Shape`]s, a positional description that needs no
//! allocation per candidate; [`CompactionCandidate`] materializes run ids.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::types::{RunId, SortedRun, TreeState};

pub const LEVEL_CAP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumConfig {
    pub max_levels: usize,
    /// Safety cap on emitted candidates; the rest are counted, not emitted.
    pub max_candidates: usize,
}

impl Default for EnumConfig {
    fn default() -> Self {
        Self { max_levels: 4, max_candidates: 4096 }
    }
}

impl EnumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_levels == 0 || self.max_levels > LEVEL_CAP {
            return Err(Error::Config("level count must be within 1..=8"));
        }
        if self.max_candidates == 0 {
            return Err(Error::Config("candidate cap must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pattern {
    SingleLevel,
    NextLevel,
    Span,
}

impl Pattern {
    pub fn number(self) -> u8 {
        match self {
            Pattern::SingleLevel => 1,
            Pattern::NextLevel => 2,
            Pattern::Span => 3,
        }
    }
}

/// Positional description of a candidate against a size-sorted tree.
///
/// Inputs are every run of levels `full_from..full_to` plus the first
/// `partial_len` runs (in size order) of `partial_level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub full_from: u8,
    pub full_to: u8,
    pub partial_level: u8,
    pub partial_len: u32,
    pub output_level: u8,
    pub bytes: u64,
    pub runs_reduced: u64,
}

impl Shape {
    pub fn first_input_level(&self) -> usize {
        if self.full_from < self.full_to {
            self.full_from as usize
        } else {
            self.partial_level as usize
        }
    }

    pub fn pattern(&self) -> Pattern {
        match self.output_level as usize - self.first_input_level() {
            0 => Pattern::SingleLevel,
            1 => Pattern::NextLevel,
            _ => Pattern::Span,
        }
    }

    /// Bitmask of the levels read or written.
    pub fn level_mask(&self) -> u16 {
        let lo = self.first_input_level();
        let hi = self.output_level as usize;
        (((1u32 << (hi + 1)) - 1) & !((1u32 << lo) - 1)) as u16
    }
}

/// Walks every canonical shape over `levels` (each sorted ascending by size)
/// in a fixed order, stopping emission after `cap` shapes.
///
/// Levels at index `bottom` and beyond are ignored. Returns the number of
/// shapes that were counted but not emitted because of the cap.
pub fn for_each_shape<L: AsRef<[u64]>>(
    levels: &[L],
    bottom: usize,
    cap: usize,
    mut visit: impl FnMut(Shape),
) -> usize {
    let depth = levels.len().min(bottom + 1);
    let mut emitted = 0usize;
    let mut skipped = 0usize;
    let mut emit = |shape: Shape| {
        if emitted < cap {
            emitted += 1;
            visit(shape);
        } else {
            skipped += 1;
        }
    };
    let next_nonempty = |from: usize| (from..depth).find(|&l| !levels[l].as_ref().is_empty());

    let mut lo_opt = next_nonempty(0);
    while let Some(lo) = lo_opt {
        let level = levels[lo].as_ref();
        // Pattern 1, strict prefixes; the full level is a full-range shape.
        let mut acc = level[0];
        for len in 2..level.len() {
            acc += level[len - 1];
            emit(Shape {
                full_from: lo as u8,
                full_to: lo as u8,
                partial_level: lo as u8,
                partial_len: len as u32,
                output_level: lo as u8,
                bytes: acc,
                runs_reduced: len as u64 - 1,
            });
        }

        let mut bytes = 0u64;
        let mut count = 0u64;
        let mut hi = lo;
        loop {
            let full = levels[hi].as_ref();
            bytes += full.iter().sum::<u64>();
            count += full.len() as u64;
            if count >= 2 {
                emit(Shape {
                    full_from: lo as u8,
                    full_to: hi as u8 + 1,
                    partial_level: 0,
                    partial_len: 0,
                    output_level: (hi + 1).min(bottom) as u8,
                    bytes,
                    runs_reduced: count - 1,
                });
            }
            let Some(next) = next_nonempty(hi + 1) else { break };
            let partial = levels[next].as_ref();
            let mut acc = bytes;
            for len in 1..partial.len() {
                acc += partial[len - 1];
                emit(Shape {
                    full_from: lo as u8,
                    full_to: hi as u8 + 1,
                    partial_level: next as u8,
                    partial_len: len as u32,
                    output_level: next as u8,
                    bytes: acc,
                    runs_reduced: count + len as u64 - 1,
                });
            }
            hi = next;
        }
        lo_opt = next_nonempty(lo + 1);
    }
    skipped
}

/// A set of input runs merged into one run at `output_level`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompactionCandidate {
    pub inputs: Vec<RunId>,
    pub output_level: usize,
    /// Total input bytes (`X`).
    pub bytes: u64,
    /// `|inputs| - 1` (`y`).
    pub runs_reduced: u64,
    pub pattern: Pattern,
}

impl CompactionCandidate {
    /// Descriptor of the merged run, without touching the tree.
    pub fn output_run(&self, state: &TreeState, output_id: u64) -> Result<SortedRun> {
        let mut min_ts = u64::MAX;
        let mut max_ts = 0u64;
        for id in &self.inputs {
            let run = state.get(*id).ok_or(Error::UnknownRun(id.0))?;
            min_ts = min_ts.min(run.min_ts);
            max_ts = max_ts.max(run.max_ts);
        }
        Ok(SortedRun::new(output_id, self.output_level, self.bytes, min_ts, max_ts))
    }

    /// Removes the inputs and installs one merged run.
    pub fn apply(&self, state: &mut TreeState, output_id: u64) -> Result<SortedRun> {
        let out = self.output_run(state, output_id)?;
        for id in &self.inputs {
            state.remove(*id);
        }
        state.insert(out)?;
        Ok(out)
    }
}

/// Runs of each level in ascending (size, id) order.
#[derive(Debug, Clone)]
pub struct SortedView {
    runs: Vec<Vec<SortedRun>>,
    sizes: Vec<Vec<u64>>,
}

impl SortedView {
    pub fn new(state: &TreeState) -> Self {
        let runs: Vec<Vec<SortedRun>> = state
            .levels()
            .iter()
            .map(|level| {
                let mut v = level.clone();
                v.sort_by_key(|r| (r.size_bytes, r.id));
                v
            })
            .collect();
        let sizes = runs.iter().map(|l| l.iter().map(|r| r.size_bytes).collect()).collect();
        Self { runs, sizes }
    }

    pub fn sizes(&self) -> &[Vec<u64>] {
        &self.sizes
    }

    pub fn materialize(&self, shape: &Shape) -> CompactionCandidate {
        let mut inputs = Vec::with_capacity(shape.runs_reduced as usize + 1);
        for level in shape.full_from..shape.full_to {
            inputs.extend(self.runs[level as usize].iter().map(|r| r.id));
        }
        if shape.partial_len > 0 {
            let level = &self.runs[shape.partial_level as usize];
            inputs.extend(level[..shape.partial_len as usize].iter().map(|r| r.id));
        }
        CompactionCandidate {
            inputs,
            output_level: shape.output_level as usize,
            bytes: shape.bytes,
            runs_reduced: shape.runs_reduced,
            pattern: shape.pattern(),
        }
    }
}

/// Bottom level index used for enumeration over `state`.
pub fn bottom_level(state: &TreeState, config: &EnumConfig) -> usize {
    config.max_levels.clamp(1, LEVEL_CAP).min(state.max_levels()) - 1
}

/// Candidates plus the count dropped by the safety cap.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateSet {
    pub candidates: Vec<CompactionCandidate>,
    pub truncated: usize,
}

impl CandidateSet {
    pub fn build(state: &TreeState, config: &EnumConfig) -> Self {
        let view = SortedView::new(state);
        let mut candidates = Vec::new();
        let truncated = for_each_shape(
            view.sizes(),
            bottom_level(state, config),
            config.max_candidates,
            |shape| candidates.push(view.materialize(&shape)),
        );
        Self { candidates, truncated }
    }
}

/// Every distinct valid candidate of `state`, in a deterministic order.
pub fn all_candidates(state: &TreeState, config: &EnumConfig) -> Vec<CompactionCandidate> {
    CandidateSet::build(state, config).candidates
}

/// Candidates drawn from a single level (pattern 1 prefixes and the whole level).
pub fn enumerate_pattern1(state: &TreeState, level: usize) -> Vec<CompactionCandidate> {
    let view = SortedView::new(state);
    let Some(runs) = view.runs.get(level) else { return Vec::new() };
    let mut out = Vec::new();
    let mut bytes = 0u64;
    for (i, run) in runs.iter().enumerate() {
        bytes += run.size_bytes;
        if i >= 1 {
            out.push(CompactionCandidate {
                inputs: runs[..=i].iter().map(|r| r.id).collect(),
                output_level: level,
                bytes,
                runs_reduced: i as u64,
                pattern: Pattern::SingleLevel,
            });
        }
    }
    out
}

/// All of levels `from..=to` plus each size-ascending prefix of `to + 1`.
///
/// With `from == to` this is the two-level pattern. Candidates that would not
/// reduce the run count are dropped.
pub fn enumerate_span(state: &TreeState, from: usize, to: usize) -> Vec<CompactionCandidate> {
    let view = SortedView::new(state);
    let target = to + 1;
    if from > to || target >= view.runs.len() {
        return Vec::new();
    }
    let mut base: Vec<RunId> = Vec::new();
    let mut bytes = 0u64;
    for level in &view.runs[from..=to] {
        base.extend(level.iter().map(|r| r.id));
        bytes += level.iter().map(|r| r.size_bytes).sum::<u64>();
    }
    let pattern = if from == to { Pattern::NextLevel } else { Pattern::Span };
    let mut out = Vec::new();
    let next = &view.runs[target];
    for len in 0..=next.len() {
        let n = base.len() + len;
        if n >= 2 {
            let mut inputs = base.clone();
            inputs.extend(next[..len].iter().map(|r| r.id));
            out.push(CompactionCandidate {
                inputs,
                output_level: target,
                bytes,
                runs_reduced: n as u64 - 1,
                pattern,
            });
        }
        if len < next.len() {
            bytes += next[len].size_bytes;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(levels: usize, runs: &[(usize, u64)]) -> TreeState {
        // Older timestamps deeper down.
        let mut state = TreeState::new(levels);
        for (i, &(level, size)) in runs.iter().enumerate() {
            let ts = 1000 - 100 * level as u64 + i as u64;
            state.insert(SortedRun::new(i as u64, level, size, ts, ts)).unwrap();
        }
        state
    }

    fn sizes_of(state: &TreeState, c: &CompactionCandidate) -> Vec<u64> {
        c.inputs.iter().map(|id| state.get(*id).unwrap().size_bytes).collect()
    }

    #[test]
    fn pattern1_examples() {
        let t = tree(4, &[(0, 4), (0, 1), (0, 3)]);
        let got: Vec<_> = enumerate_pattern1(&t, 0).iter().map(|c| sizes_of(&t, c)).collect();
        assert_eq!(got, vec![vec![1, 3], vec![1, 3, 4]]);
        assert!(enumerate_pattern1(&tree(4, &[(0, 4)]), 0).is_empty());
        let t = tree(4, &[(0, 7), (0, 7)]);
        let c = enumerate_pattern1(&t, 0);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].inputs, vec![RunId(0), RunId(1)]);
    }

    #[test]
    fn pattern2_examples() {
        let t = tree(4, &[(0, 1), (0, 1), (1, 5), (1, 2)]);
        let got: Vec<_> = enumerate_span(&t, 0, 0).iter().map(|c| sizes_of(&t, c)).collect();
        assert_eq!(got, vec![vec![1, 1], vec![1, 1, 2], vec![1, 1, 2, 5]]);
        let t = tree(4, &[(0, 1), (0, 1)]);
        assert_eq!(enumerate_span(&t, 0, 0).len(), 1);
        let t = tree(4, &[(0, 1)]);
        assert!(enumerate_span(&t, 0, 0).is_empty());
    }

    #[test]
    fn pattern3_examples() {
        let t = tree(4, &[(0, 1), (1, 2), (2, 3)]);
        let c = enumerate_span(&t, 0, 2);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].output_level, 3);
        let t = tree(5, &[(0, 1), (1, 2), (2, 3), (3, 9), (3, 8)]);
        assert_eq!(enumerate_span(&t, 0, 2).len(), 3);
    }

    #[test]
    fn all_candidates_trivial() {
        let cfg = EnumConfig::default();
        assert!(all_candidates(&TreeState::new(4), &cfg).is_empty());
        assert!(all_candidates(&tree(4, &[(2, 10)]), &cfg).is_empty());
    }

    #[test]
    fn six_run_state_candidates_are_sound() {
        let mut t = tree(4, &[(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)]);
        t.validate().unwrap();
        for c in all_candidates(&t, &EnumConfig::default()) {
            assert!(c.runs_reduced >= 1);
            let mut copy = t.clone();
            c.apply(&mut copy, 100).unwrap();
            assert!(copy.validate().is_ok(), "{c:?}");
        }
        let n = all_candidates(&t, &EnumConfig::default()).len();
        // Prefix partials: none (2 runs per level). Ranges from L0: full L0,
        // L0+1 partial, full L0..1, L0..1 + 1 partial of L2, full L0..2; from
        // L1: full, +1 partial, full L1..2; from L2: full.
        assert_eq!(n, 9);
        t.remove(RunId(0));
        assert!(all_candidates(&t, &EnumConfig::default()).len() < n);
    }

    #[test]
    fn cap_truncates_with_counter() {
        let t = tree(4, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]);
        let full = CandidateSet::build(&t, &EnumConfig::default());
        let capped = CandidateSet::build(&t, &EnumConfig { max_candidates: 2, ..Default::default() });
        assert_eq!(capped.candidates.len(), 2);
        assert_eq!(capped.truncated, full.candidates.len() - 2);
        assert_eq!(capped.candidates[..], full.candidates[..2]);
    }

    #[test]
    fn level_mask_spans_inputs_and_output() {
        let s = Shape {
            full_from: 1,
            full_to: 2,
            partial_level: 3,
            partial_len: 1,
            output_level: 3,
            bytes: 1,
            runs_reduced: 1,
        };
        assert_eq!(s.level_mask(), 0b1110);
        assert_eq!(s.pattern(), Pattern::Span);
    }
}
