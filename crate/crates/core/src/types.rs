//! Domain values shared by the cost model, the scorer and the engine.
//!
//! Unit conventions: all costs are microseconds, sizes are bytes, and
//! timestamps are the engine's global write sequence numbers.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// `exp(-bits_per_key * ln(2)^2)`, the false-positive rate of a Bloom filter
/// with an optimal hash count.
pub fn bloom_fpr(bits_per_key: f64) -> f64 {
    if bits_per_key <= 0.0 {
        return 1.0;
    }
    let ln2 = core::f64::consts::LN_2;
    libm::exp(-bits_per_key * ln2 * ln2)
}

/// Device and layout constants feeding the cost model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostConstants {
    /// Time to read one block (`Ir`).
    pub read_io_us: f64,
    /// Time to write one block (`Iw`).
    pub write_io_us: f64,
    pub block_size: u64,
    /// Write buffer size (`F`); one flush per count window.
    pub memtable_size: u64,
    /// Logical entry size (`E`).
    pub entry_size: u64,
    /// Bloom false-positive rate, fixed once at startup.
    pub bloom_fpr: f64,
    /// Blocks read by a range lookup beyond its per-run seek (`l*E/B`).
    ///
    /// Zero keeps the range term to the per-run seek only, which is what the
    /// scorer optimizes against. The engine sets it from observed scan lengths
    /// when it needs absolute time estimates.
    pub scan_blocks: f64,
}

impl Default for CostConstants {
    fn default() -> Self {
        Self {
            read_io_us: 12.0,
            write_io_us: 15.0,
            block_size: 4096,
            memtable_size: 2 * 1024 * 1024,
            entry_size: 1024,
            bloom_fpr: bloom_fpr(10.0),
            scan_blocks: 0.0,
        }
    }
}

impl CostConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.read_io_us > 0.0) || !(self.write_io_us > 0.0) {
            return Err(Error::Config("block I/O times must be positive"));
        }
        if self.block_size == 0 || self.memtable_size == 0 || self.entry_size == 0 {
            return Err(Error::Config("sizes must be positive"));
        }
        if !(0.0..=1.0).contains(&self.bloom_fpr) {
            return Err(Error::Config("bloom false-positive rate outside [0, 1]"));
        }
        if !(self.scan_blocks >= 0.0) {
            return Err(Error::Config("scan blocks must be non-negative"));
        }
        self.window_update_count().map(|_| ())
    }

    /// Updates per count window, `u = F / E`.
    pub fn window_update_count(&self) -> Result<u64> {
        if self.entry_size == 0 || self.memtable_size % self.entry_size != 0 {
            return Err(Error::NonIntegralWindow {
                memtable: self.memtable_size,
                entry: self.entry_size,
            });
        }
        Ok(self.memtable_size / self.entry_size)
    }

    /// `bytes / B` as a real number of blocks.
    #[inline]
    pub fn blocks(&self, bytes: u64) -> f64 {
        bytes as f64 / self.block_size as f64
    }

    /// Device time to read and rewrite `bytes` once: `(X/B)(Ir + Iw)`.
    #[inline]
    pub fn compaction_io_us(&self, bytes: u64) -> f64 {
        self.blocks(bytes) * (self.read_io_us + self.write_io_us)
    }
}

/// Operation counts per count window: range lookups, updates, point lookups.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WorkloadMix {
    pub range: f64,
    pub update: f64,
    pub point: f64,
}

impl WorkloadMix {
    pub const IDLE: WorkloadMix = WorkloadMix { range: 0.0, update: 0.0, point: 0.0 };

    pub fn new(range: f64, update: f64, point: f64) -> Result<Self> {
        let mix = Self { range, update, point };
        if !(range >= 0.0 && update >= 0.0 && point >= 0.0) {
            return Err(Error::Config("workload counts must be non-negative"));
        }
        Ok(mix)
    }

    /// Equal parts of each operation type, `u` of each per window.
    pub fn balanced(updates_per_window: f64) -> Self {
        Self {
            range: updates_per_window,
            update: updates_per_window,
            point: updates_per_window,
        }
    }

    pub fn total(&self) -> f64 {
        self.range + self.update + self.point
    }

    pub fn is_idle(&self) -> bool {
        self.total() <= 0.0
    }

    /// `a = r + alpha * p`, the per-run read weight shared by both score terms.
    #[inline]
    pub fn read_weight(&self, bloom_fpr: f64) -> f64 {
        self.range + bloom_fpr * self.point
    }

    /// Fractions of range, update and point operations (zeros when idle).
    pub fn ratios(&self) -> [f64; 3] {
        let total = self.total();
        if total <= 0.0 {
            return [0.0; 3];
        }
        [self.range / total, self.update / total, self.point / total]
    }

    /// Rescales raw counts so that the update count equals one window.
    ///
    /// With no observed updates the window is instead sized to hold as many
    /// operations as a balanced window (`3u`), keeping the read proportions.
    pub fn rescaled_to_window(&self, updates_per_window: f64) -> Self {
        if self.update > 0.0 {
            let f = updates_per_window / self.update;
            return Self {
                range: self.range * f,
                update: updates_per_window,
                point: self.point * f,
            };
        }
        let reads = self.range + self.point;
        if reads <= 0.0 {
            return Self::IDLE;
        }
        let f = 3.0 * updates_per_window / reads;
        Self { range: self.range * f, update: 0.0, point: self.point * f }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RunId(pub u64);

impl fmt::Display for RunId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Descriptor of one immutable sorted run.
///
/// Key ranges and file handles live with the engine's table metadata; the id
/// doubles as the file number there. Simulated runs have no backing file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SortedRun {
    pub id: RunId,
    pub level: usize,
    pub size_bytes: u64,
    pub min_ts: u64,
    pub max_ts: u64,
}

impl SortedRun {
    pub fn new(id: u64, level: usize, size_bytes: u64, min_ts: u64, max_ts: u64) -> Self {
        Self { id: RunId(id), level, size_bytes, min_ts, max_ts }
    }
}

/// First invariant found broken by [`TreeState::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeViolation {
    EmptyRun(RunId),
    InvertedTimestamps(RunId),
    MisplacedRun { run: RunId, stored_at: usize, claims: usize },
    /// A deeper level holds data newer than a shallower one.
    LevelOrder { shallow: usize, deep: usize, shallow_min_ts: u64, deep_max_ts: u64 },
    RunCount { cached: usize, actual: usize },
    TotalBytes { cached: u64, actual: u64 },
}

impl fmt::Display for TreeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeViolation::EmptyRun(id) => write!(f, "run {id} is empty"),
            TreeViolation::InvertedTimestamps(id) => write!(f, "run {id} has min_ts > max_ts"),
            TreeViolation::MisplacedRun { run, stored_at, claims } => {
                write!(f, "run {run} stored at level {stored_at} but claims level {claims}")
            }
            TreeViolation::LevelOrder { shallow, deep, shallow_min_ts, deep_max_ts } => write!(
                f,
                "level {deep} holds ts {deep_max_ts} newer than level {shallow} min ts {shallow_min_ts}"
            ),
            TreeViolation::RunCount { cached, actual } => {
                write!(f, "cached run count {cached} != {actual}")
            }
            TreeViolation::TotalBytes { cached, actual } => {
                write!(f, "cached total bytes {cached} != {actual}")
            }
        }
    }
}

/// Sorted runs per level. Level 0 is the newest; deeper levels are older.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeState {
    levels: Vec<Vec<SortedRun>>,
    run_count: usize,
    total_bytes: u64,
    next_id: u64,
    next_ts: u64,
}

impl TreeState {
    pub fn new(max_levels: usize) -> Self {
        let mut levels = Vec::with_capacity(max_levels.max(1));
        levels.resize_with(max_levels.max(1), Vec::new);
        Self { levels, run_count: 0, total_bytes: 0, next_id: 0, next_ts: 0 }
    }

    pub fn from_runs(max_levels: usize, runs: impl IntoIterator<Item = SortedRun>) -> Result<Self> {
        let mut state = Self::new(max_levels);
        for run in runs {
            state.insert(run)?;
        }
        Ok(state)
    }

    pub fn max_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[Vec<SortedRun>] {
        &self.levels
    }

    pub fn level(&self, level: usize) -> &[SortedRun] {
        self.levels.get(level).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn run_count(&self) -> usize {
        self.run_count
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bytes
    }

    pub fn is_empty(&self) -> bool {
        self.run_count == 0
    }

    pub fn runs(&self) -> impl Iterator<Item = &SortedRun> + '_ {
        self.levels.iter().flatten()
    }

    pub fn get(&self, id: RunId) -> Option<&SortedRun> {
        self.runs().find(|r| r.id == id)
    }

    /// Smallest id not yet used by any run inserted so far.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Smallest timestamp newer than every run inserted so far.
    pub fn next_ts(&self) -> u64 {
        self.next_ts
    }

    /// Deepest level holding at least one run.
    pub fn deepest_nonempty(&self) -> Option<usize> {
        self.levels.iter().rposition(|l| !l.is_empty())
    }

    pub fn insert(&mut self, run: SortedRun) -> Result<()> {
        if run.level >= self.levels.len() {
            return Err(Error::Config("run level beyond the level cap"));
        }
        self.levels[run.level].push(run);
        self.run_count += 1;
        self.total_bytes += run.size_bytes;
        self.next_id = self.next_id.max(run.id.0 + 1);
        self.next_ts = self.next_ts.max(run.max_ts + 1);
        Ok(())
    }

    pub fn remove(&mut self, id: RunId) -> Option<SortedRun> {
        for level in &mut self.levels {
            if let Some(pos) = level.iter().position(|r| r.id == id) {
                let run = level.remove(pos);
                self.run_count -= 1;
                self.total_bytes -= run.size_bytes;
                return Some(run);
            }
        }
        None
    }

    /// Moves a run to another level without rewriting it.
    pub fn relocate(&mut self, id: RunId, level: usize) -> Result<()> {
        if level >= self.levels.len() {
            return Err(Error::Config("run level beyond the level cap"));
        }
        let mut run = self.remove(id).ok_or(Error::UnknownRun(id.0))?;
        run.level = level;
        self.insert(run)
    }

    /// Adds a freshly flushed run of `size` bytes at level 0, newest of all.
    pub fn push_flush(&mut self, size: u64) -> SortedRun {
        let ts = self.next_ts;
        let run = SortedRun::new(self.next_id, 0, size, ts, ts);
        self.insert(run).expect("level 0 always exists");
        run
    }

    /// Returns the first broken invariant, if any.
    pub fn validate(&self) -> core::result::Result<(), TreeViolation> {
        let mut count = 0usize;
        let mut bytes = 0u64;
        for (idx, level) in self.levels.iter().enumerate() {
            for run in level {
                if run.size_bytes == 0 {
                    return Err(TreeViolation::EmptyRun(run.id));
                }
                if run.min_ts > run.max_ts {
                    return Err(TreeViolation::InvertedTimestamps(run.id));
                }
                if run.level != idx {
                    return Err(TreeViolation::MisplacedRun {
                        run: run.id,
                        stored_at: idx,
                        claims: run.level,
                    });
                }
                count += 1;
                bytes += run.size_bytes;
            }
        }
        if count != self.run_count {
            return Err(TreeViolation::RunCount { cached: self.run_count, actual: count });
        }
        if bytes != self.total_bytes {
            return Err(TreeViolation::TotalBytes { cached: self.total_bytes, actual: bytes });
        }
        // Every level must be no newer than every shallower level: walk from
        // the bottom keeping the newest timestamp seen below.
        let mut newest_below: Option<(usize, u64)> = None;
        for (idx, level) in self.levels.iter().enumerate().rev() {
            if level.is_empty() {
                continue;
            }
            let min_ts = level.iter().map(|r| r.min_ts).min().unwrap_or(0);
            let max_ts = level.iter().map(|r| r.max_ts).max().unwrap_or(0);
            if let Some((deep, deep_max)) = newest_below {
                if deep_max > min_ts {
                    return Err(TreeViolation::LevelOrder {
                        shallow: idx,
                        deep,
                        shallow_min_ts: min_ts,
                        deep_max_ts: deep_max,
                    });
                }
            }
            newest_below = match newest_below {
                Some((d, m)) if m >= max_ts => Some((d, m)),
                _ => Some((idx, max_ts)),
            };
        }
        Ok(())
    }
}

/// Stall and scoring knobs: `(M, c, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionParams {
    /// `M`, scale of the long-term benefit.
    pub long_term_weight: f64,
    /// `c`, total run count above which updates are stalled.
    pub stall_threshold: u64,
    /// `k`, microseconds added to each update while stalled.
    pub stall_rate_us: f64,
}

impl DecisionParams {
    pub fn new(long_term_weight: f64, stall_threshold: u64, stall_rate_us: f64) -> Result<Self> {
        let p = Self { long_term_weight, stall_threshold, stall_rate_us };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.long_term_weight >= 0.0) {
            return Err(Error::Config("long-term weight must be non-negative"));
        }
        if self.stall_threshold < 1 {
            return Err(Error::Config("stall threshold must be at least one run"));
        }
        if !(self.stall_rate_us >= 0.0) {
            return Err(Error::Config("stall rate must be non-negative"));
        }
        Ok(())
    }

    /// Whether updates are stalled with `runs` sorted runs in the tree.
    #[inline]
    pub fn stalls(&self, runs: u64) -> bool {
        runs > self.stall_threshold
    }
}

impl Default for DecisionParams {
    fn default() -> Self {
        Self { long_term_weight: 5.0, stall_threshold: 20, stall_rate_us: 6.0 }
    }
}

/// Result of carrying out one action in the windowed model.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionOutcome {
    /// Count windows elapsed (`t`).
    pub windows: u64,
    /// Foreground cost accrued over those windows.
    pub cost: f64,
    pub resulting_state: TreeState,
}
