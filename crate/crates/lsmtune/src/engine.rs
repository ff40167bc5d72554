//! The storage engine: write buffer, sorted-run files, lookups, flushes,
//! compactions and the pluggable compaction policy.
//!
//! Time is kept on a device clock. Foreground operations advance it by the
//! block I/O they perform (`Ir` per block read, `Iw` per flushed block) plus
//! any stall delay. A scheduled compaction is merged straight away but only
//! installed once the clock has passed its start time plus
//! `in_blocks * Ir + out_blocks * Iw`, so it overlaps with the foreground
//! work issued meanwhile.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use lsmtune_core::{
    baseline_trigger, find_best_params, pick_best, should_recompute, BaselineAction,
    BaselinePolicy, CompactionCandidate, CostConstants, DecisionParams, RunId, ScoredCandidate, SearchSnapshot,
    SortedRun, TreeState, WorkloadMix, BASELINE_STALL_RUNS, BASELINE_STALL_US,
};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::fs::Fs;
use crate::manifest::{self, Edit, ManifestWriter};
use crate::memtable::Memtable;
use crate::sst::{Entry, ReadStats, Table, TableIter, TableWriter, Value};
use crate::stats::{window_mix, LatencySamples, OpKind, StatsWindow};

const MANIFEST: &str = "MANIFEST";
/// Range length assumed before any scan has been observed.
const DEFAULT_SCAN_LEN: f64 = 100.0;

fn table_path(dir: &Path, id: u64) -> PathBuf {
    dir.join(format!("{id:08}.sst"))
}

/// Counters accumulated since the engine was opened.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EngineMetrics {
    /// Device clock, microseconds.
    pub clock_us: f64,
    pub puts: u64,
    pub deletes: u64,
    pub gets: u64,
    pub scans: u64,
    pub scanned_entries: u64,
    /// Foreground block reads and filter checks.
    pub reads: ReadStats,
    pub point_us: f64,
    pub range_us: f64,
    pub update_us: f64,
    pub stall_us: f64,
    pub stalled_updates: u64,
    pub flushes: u64,
    pub flushed_blocks: u64,
    pub compactions: u64,
    pub moves: u64,
    pub compaction_bytes_in: u64,
    pub compaction_bytes_out: u64,
    pub compaction_block_reads: u64,
    pub stats_reports: u64,
    pub searches: u64,
    pub search_wall: Duration,
    /// Sum over foreground operations of the run count they observed.
    pub run_count_sum: u64,
}

impl EngineMetrics {
    pub fn ops(&self) -> u64 {
        self.puts + self.deletes + self.gets + self.scans
    }
}

/// One finished compaction.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactionRecord {
    pub inputs: Vec<RunId>,
    /// Merged run; `None` when every input entry was dropped.
    pub output: Option<RunId>,
    pub output_level: usize,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub runs_before: u64,
    /// Window count predicted when the compaction was chosen.
    pub estimated_windows: Option<u64>,
    /// Flushes that landed while it ran, plus one.
    pub actual_windows: u64,
    pub started_us: f64,
    pub finished_us: f64,
}

struct InFlight {
    candidate: CompactionCandidate,
    output: Option<(SortedRun, Arc<Table>)>,
    levels: u16,
    bytes_in: u64,
    bytes_out: u64,
    runs_before: u64,
    estimated_windows: Option<u64>,
    flushes_at_start: u64,
    started_us: f64,
    finishes_us: f64,
}

enum Policy {
    Arce { params: DecisionParams, last_search: Option<SearchSnapshot> },
    Baseline(BaselinePolicy),
}

struct Inner {
    fs: Arc<dyn Fs>,
    dir: PathBuf,
    config: EngineConfig,
    constants: CostConstants,
    memtable: Memtable,
    next_seq: u64,
    next_file: u64,
    tree: TreeState,
    tables: HashMap<u64, Arc<Table>>,
    manifest: ManifestWriter,
    policy: Policy,
    stats: StatsWindow,
    last_report: Option<WorkloadMix>,
    in_flight: Vec<InFlight>,
    log: Vec<CompactionRecord>,
    metrics: EngineMetrics,
    latencies: LatencySamples,
    closed: bool,
}

/// An LSM-tree key-value store.
///
/// All operations are serialized by one lock.
pub struct Engine {
    inner: Mutex<Inner>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").finish_non_exhaustive()
    }
}

fn level_mask(candidate: &CompactionCandidate, tree: &TreeState) -> u16 {
    let mut mask = 1u16 << candidate.output_level;
    for id in &candidate.inputs {
        if let Some(run) = tree.get(*id) {
            mask |= 1 << run.level;
        }
    }
    mask
}

/// Min-heap item ordered by key, then newest first.
struct Head {
    entry: Entry,
    source: usize,
}

impl PartialEq for Head {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Head {}
impl PartialOrd for Head {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Head {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for `BinaryHeap`: smallest key, then largest seq, on top.
        other.entry.key.cmp(&self.entry.key).then(self.entry.seq.cmp(&other.entry.seq))
    }
}

enum Source {
    Table(TableIter),
    Mem(std::vec::IntoIter<Entry>),
}

impl Source {
    fn next(&mut self, stats: &mut ReadStats) -> Result<Option<Entry>> {
        match self {
            Source::Table(it) => it.next_entry(stats),
            Source::Mem(it) => Ok(it.next()),
        }
    }
}

/// K-way merge yielding the newest version of each key in key order.
struct Merger {
    sources: Vec<Source>,
    heap: BinaryHeap<Head>,
}

impl Merger {
    fn new(mut sources: Vec<Source>, stats: &mut ReadStats) -> Result<Self> {
        let mut heap = BinaryHeap::with_capacity(sources.len());
        for (i, s) in sources.iter_mut().enumerate() {
            if let Some(entry) = s.next(stats)? {
                heap.push(Head { entry, source: i });
            }
        }
        Ok(Self { sources, heap })
    }

    fn refill(&mut self, source: usize, stats: &mut ReadStats) -> Result<()> {
        if let Some(entry) = self.sources[source].next(stats)? {
            self.heap.push(Head { entry, source });
        }
        Ok(())
    }

    fn next(&mut self, stats: &mut ReadStats) -> Result<Option<Entry>> {
        let Some(top) = self.heap.pop() else { return Ok(None) };
        self.refill(top.source, stats)?;
        while self.heap.peek().is_some_and(|h| h.entry.key == top.entry.key) {
            let older = self.heap.pop().expect("peeked");
            self.refill(older.source, stats)?;
        }
        Ok(Some(top.entry))
    }
}

impl Engine {
    /// Opens (or creates) the store in `dir`, replaying its manifest and
    /// deleting files no live run refers to.
    pub fn open(fs: Arc<dyn Fs>, dir: impl Into<PathBuf>, config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let dir = dir.into();
        fs.create_dir_all(&dir)?;
        let manifest_path = dir.join(MANIFEST);
        let recovered = manifest::replay(fs.as_ref(), &manifest_path, config.max_levels)?;
        let tree = recovered.tree;
        tree.validate().map_err(|v| Error::corrupt(&manifest_path, v.to_string()))?;

        let mut tables = HashMap::new();
        for run in tree.runs() {
            let table = Table::open(fs.as_ref(), &table_path(&dir, run.id.0))?;
            tables.insert(run.id.0, Arc::new(table));
        }
        for name in fs.list(&dir)? {
            let orphan_table = name
                .strip_suffix(".sst")
                .and_then(|stem| stem.parse::<u64>().ok())
                .is_some_and(|id| !tables.contains_key(&id));
            if orphan_table || name.ends_with(".tmp") {
                fs.remove(&dir.join(&name))?;
            }
        }
        let params = match recovered.params {
            Some(p) => p,
            None => config.initial_params()?,
        };
        let manifest = ManifestWriter::rewrite(fs.as_ref(), &manifest_path, &tree, recovered.params)?;
        let policy = match config.policy.baseline(config.memtable_size)? {
            Some(b) => Policy::Baseline(b),
            None => Policy::Arce { params, last_search: None },
        };
        let next_seq = tree.runs().map(|r| r.max_ts + 1).max().unwrap_or(1);
        let mut constants = config.constants();
        constants.scan_blocks = DEFAULT_SCAN_LEN * constants.blocks(constants.entry_size);
        let inner = Inner {
            next_file: tree.next_id().max(1),
            fs,
            dir,
            constants,
            memtable: Memtable::new(),
            next_seq,
            tree,
            tables,
            manifest,
            policy,
            stats: StatsWindow::new(config.stats_period),
            config,
            last_report: None,
            in_flight: Vec::new(),
            log: Vec::new(),
            metrics: EngineMetrics::default(),
            latencies: LatencySamples::default(),
            closed: false,
        };
        Ok(Self { inner: Mutex::new(inner) })
    }

    fn lock(&self) -> Result<MutexGuard<'_, Inner>> {
        let inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if inner.closed {
            return Err(Error::Closed);
        }
        Ok(inner)
    }

    pub fn put(&self, key: &[u8], value: &[u8]) -> Result<()> {
        self.lock()?.write(key, Value::Put(value.to_vec()))
    }

    pub fn delete(&self, key: &[u8]) -> Result<()> {
        self.lock()?.write(key, Value::Tombstone)
    }

    pub fn get(&self, key: &[u8]) -> Result<Option<Vec<u8>>> {
        self.lock()?.get(key)
    }

    /// Live entries with keys in `[start, end]`, ascending.
    pub fn scan(&self, start: &[u8], end: &[u8]) -> Result<Vec<(Vec<u8>, Vec<u8>)>> {
        if start > end {
            return Err(Error::InvertedRange);
        }
        self.lock()?.scan(start, Some(end), usize::MAX)
    }

    /// The first `len` live entries with keys at or above `start`.
    pub fn scan_from(&self, start: &[u8], len: usize) -> Result<Vec<(Vec<u8>, Vec<u8>)>> {
        self.lock()?.scan(start, None, len)
    }

    /// Writes out the buffer now, if it holds anything.
    pub fn flush(&self) -> Result<()> {
        let mut inner = self.lock()?;
        if inner.memtable.is_empty() {
            return Ok(());
        }
        let us = inner.flush()?;
        inner.advance(us);
        inner.after_background()
    }

    /// Installs every in-flight compaction regardless of the clock, then
    /// keeps scheduling and installing until the policy is satisfied.
    pub fn settle(&self) -> Result<()> {
        let mut inner = self.lock()?;
        for _ in 0..10_000 {
            if inner.in_flight.is_empty() {
                inner.decide()?;
                if inner.in_flight.is_empty() {
                    return Ok(());
                }
            }
            while let Some(job) = inner.in_flight.pop() {
                inner.install(job)?;
            }
        }
        Ok(())
    }

    /// Feeds a statistics report as if the period had just ended.
    pub fn report_stats(&self, raw: WorkloadMix) -> Result<()> {
        let mut inner = self.lock()?;
        inner.stats.take();
        inner.on_report(raw)
    }

    /// Best candidate under `mix` and the current parameters, without
    /// scheduling it.
    pub fn plan(&self, mix: &WorkloadMix) -> Result<Option<ScoredCandidate>> {
        let inner = self.lock()?;
        let Policy::Arce { params, .. } = &inner.policy else { return Ok(None) };
        let options = inner.config.scoring(inner.free_workers(), inner.busy_levels());
        Ok(pick_best(&inner.tree, mix, &inner.constants, params, &options))
    }

    pub fn tree(&self) -> Result<TreeState> {
        Ok(self.lock()?.tree.clone())
    }

    pub fn metrics(&self) -> Result<EngineMetrics> {
        Ok(self.lock()?.metrics.clone())
    }

    pub fn clock_us(&self) -> Result<f64> {
        Ok(self.lock()?.metrics.clock_us)
    }

    /// Quantile `q` of the device-time latencies recorded since the last
    /// call, then forgets them.
    pub fn take_latency_quantile(&self, q: f64) -> Result<f64> {
        let mut inner = self.lock()?;
        let v = inner.latencies.quantile(q);
        inner.latencies.clear();
        Ok(v)
    }

    pub fn compaction_log(&self) -> Result<Vec<CompactionRecord>> {
        Ok(self.lock()?.log.clone())
    }

    /// Current `(M, c, k)` of the adaptive policy.
    pub fn params(&self) -> Result<Option<DecisionParams>> {
        Ok(match &self.lock()?.policy {
            Policy::Arce { params, .. } => Some(*params),
            Policy::Baseline(_) => None,
        })
    }

    pub fn set_params(&self, new: DecisionParams) -> Result<()> {
        new.validate()?;
        let mut inner = self.lock()?;
        inner.manifest.append(&[Edit::Params(new)])?;
        if let Policy::Arce { params, .. } = &mut inner.policy {
            *params = new;
        }
        Ok(())
    }

    pub fn in_flight(&self) -> Result<usize> {
        Ok(self.lock()?.in_flight.len())
    }

    /// Cost constants the engine decides with.
    pub fn constants(&self) -> Result<CostConstants> {
        Ok(self.lock()?.constants)
    }

    pub fn config(&self) -> Result<EngineConfig> {
        Ok(self.lock()?.config.clone())
    }

    /// Stops accepting operations. Unflushed writes are lost.
    pub fn close(&self) -> Result<()> {
        let mut inner = self.lock()?;
        inner.closed = true;
        Ok(())
    }
}

impl Inner {
    fn stall_us(&self) -> f64 {
        match &self.policy {
            Policy::Arce { params, .. } => {
                if params.stalls(self.tree.run_count() as u64) {
                    params.stall_rate_us
                } else {
                    0.0
                }
            }
            Policy::Baseline(_) => {
                if self.tree.level(0).len() > BASELINE_STALL_RUNS {
                    BASELINE_STALL_US
                } else {
                    0.0
                }
            }
        }
    }

    fn advance(&mut self, us: f64) {
        self.metrics.clock_us += us;
    }

    fn write(&mut self, key: &[u8], value: Value) -> Result<()> {
        if key.len() > usize::from(u16::MAX) {
            return Err(Error::Config("key longer than 65535 bytes".into()));
        }
        let tombstone = matches!(value, Value::Tombstone);
        let mut us = self.stall_us();
        if us > 0.0 {
            self.metrics.stall_us += us;
            self.metrics.stalled_updates += 1;
        }
        let runs = self.tree.run_count() as u64;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.memtable.insert(key, seq, value);
        let flush = if self.memtable.bytes() >= self.config.memtable_size { Some(self.flush()) } else { None };
        if let Some(Ok(flush_us)) = flush {
            us += flush_us;
        }
        self.advance(us);
        self.latencies.push(us);
        self.metrics.update_us += us;
        if tombstone {
            self.metrics.deletes += 1;
        } else {
            self.metrics.puts += 1;
        }
        self.metrics.run_count_sum += runs;
        if let Some(result) = flush {
            result?;
            self.after_background()?;
        }
        self.finish_op(OpKind::Update)
    }

    /// Writes the buffer as a new level-0 run and returns the device time it
    /// took. On failure the buffer is kept for the next attempt.
    fn flush(&mut self) -> Result<f64> {
        let id = self.next_file;
        self.next_file += 1;
        let path = table_path(&self.dir, id);
        let result = (|| {
            let mut w = TableWriter::create(
                self.fs.as_ref(),
                &path,
                self.config.block_size,
                self.config.bloom_bits_per_key,
            )?;
            for (key, seq, value) in self.memtable.iter() {
                w.add(key, seq, value)?;
            }
            let meta = w.finish()?;
            let table = Arc::new(Table::open(self.fs.as_ref(), &path)?);
            let run = SortedRun::new(id, 0, meta.size_bytes, meta.min_seq, meta.max_seq);
            self.manifest.append(&[Edit::Add(run)])?;
            Ok((run, table, meta.blocks))
        })();
        let (run, table, blocks) = match result {
            Ok(v) => v,
            Err(e) => {
                let _ = self.fs.remove(&path);
                return Err(e);
            }
        };
        self.tree.insert(run)?;
        self.tables.insert(id, table);
        self.memtable.clear();
        self.check_tree()?;
        let file_blocks = self.constants.blocks(run.size_bytes).ceil();
        self.metrics.flushes += 1;
        self.metrics.flushed_blocks += blocks;
        Ok(file_blocks * self.config.write_io_us)
    }

    fn check_tree(&self) -> Result<()> {
        self.tree.validate().map_err(|v| Error::corrupt(&self.dir, format!("tree invariant broken: {v}")))
    }

    fn get(&mut self, key: &[u8]) -> Result<Option<Vec<u8>>> {
        let runs = self.tree.run_count() as u64;
        let mut stats = ReadStats::default();
        let found = self.lookup(key, &mut stats)?;
        let us = stats.block_reads as f64 * self.config.read_io_us;
        self.advance(us);
        self.latencies.push(us);
        self.metrics.point_us += us;
        self.metrics.reads.add(&stats);
        self.metrics.gets += 1;
        self.metrics.run_count_sum += runs;
        self.finish_op(OpKind::Point)?;
        Ok(found.and_then(|e| match e.value {
            Value::Put(v) => Some(v),
            Value::Tombstone => None,
        }))
    }

    /// Newest version of `key`: the buffer, then levels shallow to deep,
    /// newest run first within a level.
    fn lookup(&self, key: &[u8], stats: &mut ReadStats) -> Result<Option<Entry>> {
        if let Some(e) = self.memtable.get(key) {
            return Ok(Some(e));
        }
        for level in self.tree.levels() {
            let mut runs: Vec<&SortedRun> = level.iter().collect();
            runs.sort_by_key(|r| Reverse(r.max_ts));
            let mut best: Option<Entry> = None;
            for run in runs {
                if best.as_ref().is_some_and(|b| b.seq > run.max_ts) {
                    break;
                }
                let table = &self.tables[&run.id.0];
                if let Some(e) = table.get(key, stats)? {
                    if best.as_ref().is_none_or(|b| e.seq > b.seq) {
                        best = Some(e);
                    }
                }
            }
            if best.is_some() {
                return Ok(best);
            }
        }
        Ok(None)
    }

    fn scan(&mut self, start: &[u8], end: Option<&[u8]>, len: usize) -> Result<Vec<(Vec<u8>, Vec<u8>)>> {
        let runs = self.tree.run_count() as u64;
        let mut stats = ReadStats::default();
        let out = self.collect_range(start, end, len, &mut stats)?;
        let us = stats.block_reads as f64 * self.config.read_io_us;
        self.advance(us);
        self.latencies.push(us);
        self.metrics.range_us += us;
        self.metrics.reads.add(&stats);
        self.metrics.scans += 1;
        self.metrics.scanned_entries += out.len() as u64;
        self.metrics.run_count_sum += runs;
        self.finish_op(OpKind::Range)?;
        Ok(out)
    }

    fn collect_range(
        &self,
        start: &[u8],
        end: Option<&[u8]>,
        len: usize,
        stats: &mut ReadStats,
    ) -> Result<Vec<(Vec<u8>, Vec<u8>)>> {
        if len == 0 {
            return Ok(Vec::new());
        }
        let mut live = 0usize;
        let mem: Vec<Entry> = self
            .memtable
            .range(start, end)
            .take_while(|e| {
                let more = live < len;
                live += usize::from(!e.is_tombstone());
                more
            })
            .collect();
        let mut sources = vec![Source::Mem(mem.into_iter())];
        for run in self.tree.runs() {
            let table = &self.tables[&run.id.0];
            let meta = table.meta();
            if meta.max_key.as_slice() < start || end.is_some_and(|e| meta.min_key.as_slice() > e) {
                continue;
            }
            sources.push(Source::Table(table.iter_from(start)));
        }
        let mut merger = Merger::new(sources, stats)?;
        let mut out = Vec::new();
        while out.len() < len {
            let Some(e) = merger.next(stats)? else { break };
            if end.is_some_and(|end| e.key.as_slice() > end) {
                break;
            }
            if let Value::Put(v) = e.value {
                out.push((e.key, v));
            }
        }
        Ok(out)
    }

    /// Bookkeeping after every foreground operation: installs compactions
    /// whose time has come and handles statistics reports.
    fn finish_op(&mut self, kind: OpKind) -> Result<()> {
        if self.in_flight.iter().any(|j| j.finishes_us <= self.metrics.clock_us) {
            self.install_due()?;
            self.decide()?;
        }
        if let Some(raw) = self.stats.record(kind) {
            self.on_report(raw)?;
        }
        Ok(())
    }

    fn after_background(&mut self) -> Result<()> {
        self.install_due()?;
        self.decide()
    }

    fn install_due(&mut self) -> Result<()> {
        while let Some(i) = self
            .in_flight
            .iter()
            .enumerate()
            .filter(|(_, j)| j.finishes_us <= self.metrics.clock_us)
            .min_by(|a, b| a.1.finishes_us.total_cmp(&b.1.finishes_us))
            .map(|(i, _)| i)
        {
            let job = self.in_flight.remove(i);
            self.install(job)?;
        }
        Ok(())
    }

    fn on_report(&mut self, raw: WorkloadMix) -> Result<()> {
        self.metrics.stats_reports += 1;
        if self.metrics.scans > 0 {
            let avg_len = self.metrics.scanned_entries as f64 / self.metrics.scans as f64;
            self.constants.scan_blocks = avg_len * self.constants.blocks(self.constants.entry_size);
        }
        if !raw.is_idle() {
            self.last_report = Some(raw);
        }
        if self.config.search.enabled {
            self.maybe_search()?;
        }
        self.decide()
    }

    fn window_mix(&self) -> WorkloadMix {
        let u = (self.config.memtable_size / self.constants.entry_size) as f64;
        window_mix(self.last_report.as_ref(), u)
    }

    fn maybe_search(&mut self) -> Result<()> {
        let Policy::Arce { last_search, .. } = &self.policy else { return Ok(()) };
        let mix = self.window_mix();
        let snapshot =
            SearchSnapshot { mix, total_bytes: self.tree.total_bytes(), run_count: self.tree.run_count() as u64 };
        let due = last_search.is_none_or(|prev| should_recompute(&prev, &snapshot, self.config.search.recompute_threshold));
        if !due || self.tree.is_empty() {
            return Ok(());
        }
        let mut search = self.config.search_config();
        search.scoring = self.config.scoring(self.config.compaction_workers, 0);
        let result = match find_best_params(&self.tree, &mix, &self.constants, &search) {
            Ok(r) => r,
            // Mixes under which nothing ever completes keep the old parameters.
            Err(lsmtune_core::Error::NeverCompletes | lsmtune_core::Error::EmptySimulation) => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        self.metrics.searches += 1;
        self.metrics.search_wall += result.wall_time;
        self.manifest.append(&[Edit::Params(result.best_params)])?;
        if let Policy::Arce { params, last_search } = &mut self.policy {
            *params = result.best_params;
            *last_search = Some(snapshot);
        }
        Ok(())
    }

    fn busy_levels(&self) -> u16 {
        self.in_flight.iter().fold(0, |m, j| m | j.levels)
    }

    fn free_workers(&self) -> usize {
        self.config.compaction_workers.saturating_sub(self.in_flight.len())
    }

    fn busy_runs(&self, candidate: &CompactionCandidate) -> bool {
        level_mask(candidate, &self.tree) & self.busy_levels() != 0
    }

    /// Schedules compactions while workers are free and the policy wants one.
    fn decide(&mut self) -> Result<()> {
        while self.free_workers() > 0 {
            match &self.policy {
                Policy::Baseline(b) => {
                    let Some(action) = baseline_trigger(b, &self.tree) else { return Ok(()) };
                    match action {
                        BaselineAction::Move { run, to_level } => {
                            let from = self.tree.get(run).map_or(0, |r| r.level);
                            if self.busy_levels() & ((1 << to_level) | (1 << from)) != 0 {
                                return Ok(());
                            }
                            self.relocate(run, to_level)?;
                        }
                        BaselineAction::Compact(c) => {
                            if self.busy_runs(&c) {
                                return Ok(());
                            }
                            self.start(c, None)?;
                        }
                    }
                }
                Policy::Arce { params, .. } => {
                    let params = *params;
                    let mix = self.window_mix();
                    let options = self.config.scoring(self.free_workers(), self.busy_levels());
                    let Some(best) = pick_best(&self.tree, &mix, &self.constants, &params, &options) else {
                        return Ok(());
                    };
                    self.start(best.candidate, Some(best.windows))?;
                }
            }
        }
        Ok(())
    }

    fn relocate(&mut self, id: RunId, level: usize) -> Result<()> {
        let mut run = *self.tree.get(id).ok_or(lsmtune_core::Error::UnknownRun(id.0))?;
        run.level = level;
        self.manifest.append(&[Edit::Remove(id.0), Edit::Add(run)])?;
        self.tree.relocate(id, level)?;
        self.metrics.moves += 1;
        self.check_tree()
    }

    /// Merges the candidate's inputs into a new (uninstalled) run file.
    fn start(&mut self, candidate: CompactionCandidate, estimated_windows: Option<u64>) -> Result<()> {
        let inputs: Vec<SortedRun> = candidate
            .inputs
            .iter()
            .map(|id| self.tree.get(*id).copied().ok_or(lsmtune_core::Error::UnknownRun(id.0)))
            .collect::<std::result::Result<_, _>>()?;
        let newest_input = inputs.iter().map(|r| r.max_ts).max().unwrap_or(0);
        let deepest = self.tree.deepest_nonempty().unwrap_or(0);
        // Non-input runs that may hold versions older than some input entry.
        let older: Vec<(u64, Arc<Table>)> = self
            .tree
            .runs()
            .filter(|r| !candidate.inputs.contains(&r.id) && r.min_ts < newest_input)
            .map(|r| (r.min_ts, Arc::clone(&self.tables[&r.id.0])))
            .collect();
        let may_drop = candidate.output_level >= deepest;

        let id = self.next_file;
        self.next_file += 1;
        let path = table_path(&self.dir, id);
        let mut read = ReadStats::default();
        let result = (|| {
            let sources = inputs.iter().map(|r| Source::Table(self.tables[&r.id.0].iter())).collect();
            let mut merger = Merger::new(sources, &mut read)?;
            let mut w = TableWriter::create(
                self.fs.as_ref(),
                &path,
                self.config.block_size,
                self.config.bloom_bits_per_key,
            )?;
            while let Some(e) = merger.next(&mut read)? {
                if e.is_tombstone() && may_drop && !older.iter().any(|(min_ts, t)| *min_ts < e.seq && t.covers(&e.key)) {
                    continue;
                }
                w.add(&e.key, e.seq, &e.value)?;
            }
            if w.entries() == 0 {
                drop(w);
                self.fs.remove(&path)?;
                return Ok(None);
            }
            let meta = w.finish()?;
            let table = Arc::new(Table::open(self.fs.as_ref(), &path)?);
            let mut run = candidate.output_run(&self.tree, id)?;
            run.size_bytes = meta.size_bytes;
            Ok(Some((run, table)))
        })();
        let output = match result {
            Ok(o) => o,
            Err(e) => {
                let _ = self.fs.remove(&path);
                return Err(e);
            }
        };
        let bytes_in: u64 = inputs.iter().map(|r| r.size_bytes).sum();
        let bytes_out = output.as_ref().map_or(0, |(r, _)| r.size_bytes);
        let device_us = self.constants.blocks(bytes_in).ceil() * self.config.read_io_us
            + self.constants.blocks(bytes_out).ceil() * self.config.write_io_us;
        self.metrics.compaction_block_reads += read.block_reads;
        let job = InFlight {
            levels: level_mask(&candidate, &self.tree),
            candidate,
            output,
            bytes_in,
            bytes_out,
            runs_before: self.tree.run_count() as u64,
            estimated_windows,
            flushes_at_start: self.metrics.flushes,
            started_us: self.metrics.clock_us,
            finishes_us: self.metrics.clock_us + device_us,
        };
        self.in_flight.push(job);
        Ok(())
    }

    /// Commits a finished compaction: one manifest record swaps the inputs
    /// for the output, after which the input files are deleted.
    fn install(&mut self, job: InFlight) -> Result<()> {
        let mut edits: Vec<Edit> = job.candidate.inputs.iter().map(|id| Edit::Remove(id.0)).collect();
        if let Some((run, _)) = &job.output {
            edits.push(Edit::Add(*run));
        }
        if let Err(e) = self.manifest.append(&edits) {
            if let Some((run, _)) = &job.output {
                let _ = self.fs.remove(&table_path(&self.dir, run.id.0));
            }
            return Err(e);
        }
        for id in &job.candidate.inputs {
            self.tree.remove(*id);
            self.tables.remove(&id.0);
        }
        let output = job.output.as_ref().map(|(run, _)| run.id);
        if let Some((run, table)) = job.output {
            self.tree.insert(run)?;
            self.tables.insert(run.id.0, table);
        }
        self.check_tree()?;
        self.metrics.compactions += 1;
        self.metrics.compaction_bytes_in += job.bytes_in;
        self.metrics.compaction_bytes_out += job.bytes_out;
        self.log.push(CompactionRecord {
            inputs: job.candidate.inputs.clone(),
            output,
            output_level: job.candidate.output_level,
            bytes_in: job.bytes_in,
            bytes_out: job.bytes_out,
            runs_before: job.runs_before,
            estimated_windows: job.estimated_windows,
            actual_windows: self.metrics.flushes - job.flushes_at_start + 1,
            started_us: job.started_us,
            finished_us: self.metrics.clock_us.max(job.finishes_us),
        });
        let mut first_err = None;
        for id in &job.candidate.inputs {
            if let Err(e) = self.fs.remove(&table_path(&self.dir, id.0)) {
                first_err.get_or_insert(e);
            }
        }
        first_err.map_or(Ok(()), |e| Err(e.into()))
    }
}
