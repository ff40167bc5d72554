//! Benchmark driver: preload, replay a workload, sample metrics.
//!
//! Trace rows are CSV with the header in [`TRACE_HEADER`]; summaries are
//! flat `key=value` lines. Throughput and latency use the engine's device
//! clock, so they are deterministic for a fixed seed and configuration with
//! one replay worker.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Barrier, Mutex};
use std::time::Instant;

use crate::config::EngineConfig;
use crate::engine::{CompactionRecord, Engine, EngineMetrics};
use crate::error::{Error, Result};
use crate::fs::Fs;
use crate::workload::{generate_ops, key_bytes, value_bytes, CompoundWorkload, Op};

pub const TRACE_HEADER: &str = "ops,phase,clock_us,throughput_ops_s,p999_us,run_count,read_blocks,stall_us,space_amp";
/// Operations between trace rows.
pub const DEFAULT_SAMPLE_EVERY: u64 = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub seed: u64,
    pub sample_every: u64,
    /// Foreground replay threads; keys are sharded by index so each key's
    /// operations stay in stream order.
    pub workers: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { seed: 42, sample_every: DEFAULT_SAMPLE_EVERY, workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub ops: u64,
    pub phase: usize,
    pub clock_us: f64,
    /// Operations per device second since the previous row.
    pub throughput: f64,
    pub p999_us: f64,
    pub run_count: usize,
    /// Foreground block reads so far.
    pub read_blocks: u64,
    /// Stall time so far.
    pub stall_us: f64,
    pub space_amp: f64,
}

impl TraceRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{:.3},{:.3},{:.3},{},{},{:.3},{:.6}",
            self.ops,
            self.phase,
            self.clock_us,
            self.throughput,
            self.p999_us,
            self.run_count,
            self.read_blocks,
            self.stall_us,
            self.space_amp
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSummary {
    pub mix: char,
    pub ops: u64,
    pub device_us: f64,
    pub throughput: f64,
    pub mean_latency_us: f64,
    /// Run count averaged over the phase's operations.
    pub mean_runs: f64,
    pub end_runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub policy: String,
    pub workload: String,
    pub seed: u64,
    pub ops: u64,
    pub device_us: f64,
    pub throughput: f64,
    pub mean_latency_us: f64,
    pub wall_secs: f64,
    pub preload_keys: u64,
    pub flushes: u64,
    pub compactions: u64,
    pub moves: u64,
    pub compaction_bytes_in: u64,
    pub searches: u64,
    pub stall_us: f64,
    pub read_blocks: u64,
    pub final_runs: usize,
    pub phases: Vec<PhaseSummary>,
    /// Set when the engine failed part-way; the trace holds what was recorded.
    pub aborted: Option<String>,
}

impl BenchSummary {
    /// Flat `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("policy", self.policy.clone());
        kv("workload", self.workload.clone());
        kv("seed", self.seed.to_string());
        kv("ops", self.ops.to_string());
        kv("device_us", format!("{:.3}", self.device_us));
        kv("throughput_ops_s", format!("{:.3}", self.throughput));
        kv("mean_latency_us", format!("{:.6}", self.mean_latency_us));
        kv("wall_secs", format!("{:.3}", self.wall_secs));
        kv("preload_keys", self.preload_keys.to_string());
        kv("flushes", self.flushes.to_string());
        kv("compactions", self.compactions.to_string());
        kv("moves", self.moves.to_string());
        kv("compaction_bytes_in", self.compaction_bytes_in.to_string());
        kv("searches", self.searches.to_string());
        kv("stall_us", format!("{:.3}", self.stall_us));
        kv("read_blocks", self.read_blocks.to_string());
        kv("final_runs", self.final_runs.to_string());
        kv("phases", self.phases.len().to_string());
        for (i, p) in self.phases.iter().enumerate() {
            kv(&format!("phase.{i}.mix"), p.mix.to_string());
            kv(&format!("phase.{i}.ops"), p.ops.to_string());
            kv(&format!("phase.{i}.device_us"), format!("{:.3}", p.device_us));
            kv(&format!("phase.{i}.throughput_ops_s"), format!("{:.3}", p.throughput));
            kv(&format!("phase.{i}.mean_latency_us"), format!("{:.6}", p.mean_latency_us));
            kv(&format!("phase.{i}.mean_runs"), format!("{:.3}", p.mean_runs));
            kv(&format!("phase.{i}.end_runs"), p.end_runs.to_string());
        }
        kv("aborted", self.aborted.clone().unwrap_or_default());
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub summary: BenchSummary,
    pub trace: Vec<TraceRow>,
    pub compactions: Vec<CompactionRecord>,
}

impl BenchReport {
    pub fn trace_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.trace.len() + 1));
        s.push_str(TRACE_HEADER);
        s.push('\n');
        for row in &self.trace {
            s.push_str(&row.csv());
            s.push('\n');
        }
        s
    }

    /// Writes `<stem>.trace.csv` and `<stem>.summary.txt` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let trace = dir.join(format!("{stem}.trace.csv"));
        let summary = dir.join(format!("{stem}.summary.txt"));
        std::fs::write(&trace, self.trace_csv())?;
        std::fs::write(&summary, self.summary.to_key_values())?;
        Ok((trace, summary))
    }
}

fn throughput(ops: u64, device_us: f64) -> f64 {
    if device_us > 0.0 {
        ops as f64 * 1e6 / device_us
    } else {
        0.0
    }
}

fn shard(op: &Op, workers: usize) -> usize {
    let key = match *op {
        Op::Put { key } | Op::Get { key } => key,
        Op::Scan { start, .. } => start,
    };
    (key % workers as u64) as usize
}

fn apply(engine: &Engine, op: Op, version: u64, value_len: usize) -> Result<()> {
    match op {
        Op::Put { key } => engine.put(&key_bytes(key), &value_bytes(key, version, value_len)),
        Op::Get { key } => engine.get(&key_bytes(key)).map(drop),
        Op::Scan { start, len } => engine.scan_from(&key_bytes(start), len).map(drop),
    }
}

/// Writes keys `0..n` in order through the engine.
pub fn preload(engine: &Engine, n: u64, value_len: usize) -> Result<()> {
    for key in 0..n {
        engine.put(&key_bytes(key), &value_bytes(key, 0, value_len))?;
    }
    Ok(())
}

struct Sampler {
    rows: Mutex<Vec<TraceRow>>,
    last: Mutex<(u64, f64)>,
    logical_bytes: f64,
}

impl Sampler {
    fn sample(&self, engine: &Engine, base: &EngineMetrics, ops: u64, phase: usize) -> Result<()> {
        let m = engine.metrics()?;
        let tree = engine.tree()?;
        let p999 = engine.take_latency_quantile(0.999)?;
        let clock = m.clock_us - base.clock_us;
        let mut last = self.last.lock().expect("sampler lock");
        let row = TraceRow {
            ops,
            phase,
            clock_us: clock,
            throughput: throughput(ops - last.0, clock - last.1),
            p999_us: p999,
            run_count: tree.run_count(),
            read_blocks: m.reads.block_reads - base.reads.block_reads,
            stall_us: m.stall_us - base.stall_us,
            space_amp: tree.total_bytes() as f64 / self.logical_bytes,
        };
        *last = (ops, clock);
        self.rows.lock().expect("sampler lock").push(row);
        Ok(())
    }
}

/// `config` with its statistics period scaled like a workload's operation
/// counts, so reports arrive as often per phase as at full scale.
pub fn scaled_config(config: &EngineConfig, scale: f64) -> EngineConfig {
    let mut out = config.clone();
    out.stats_period = ((config.stats_period as f64 * scale).round() as u64).max(1);
    out
}

/// Opens an engine in `dir` on `fs`, preloads it and replays `workload`.
pub fn run_benchmark(
    fs: Arc<dyn Fs>,
    dir: &Path,
    config: &EngineConfig,
    workload: &CompoundWorkload,
    opts: &BenchOptions,
) -> Result<BenchReport> {
    if opts.workers == 0 || opts.sample_every == 0 {
        return Err(Error::Config("replay workers and sample interval must be positive".into()));
    }
    let started = Instant::now();
    let engine = Engine::open(fs, dir, config.clone())?;
    let value_len = config.value_size as usize;
    let keys = workload.key_space(config.entry_size());
    preload(&engine, keys, value_len)?;
    engine.take_latency_quantile(1.0)?;
    let base = engine.metrics()?;
    let sampler = Sampler {
        rows: Mutex::new(Vec::new()),
        last: Mutex::new((0, 0.0)),
        logical_bytes: (keys * config.entry_size()) as f64,
    };
    let phase_marks: Mutex<Vec<(EngineMetrics, usize)>> = Mutex::new(vec![(base.clone(), 0)]);
    let done = AtomicU64::new(0);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let barrier = Barrier::new(opts.workers);
    let phases = workload.phases.len();

    let record = |e: Error| {
        failure.lock().expect("failure lock").get_or_insert(e);
    };
    // Every worker walks the whole stream so phase barriers line up, even
    // after a failure stops further operations.
    let replay = |worker: usize| {
        let mut stream = match generate_ops(workload, keys, opts.seed) {
            Ok(s) => s.peekable(),
            Err(e) => return record(e),
        };
        let mut phase = 0;
        let mut index = 0u64;
        loop {
            let next_phase = stream.peek().map_or(phases, |(p, _)| *p);
            while phase < next_phase {
                if barrier.wait().is_leader() {
                    match engine.metrics().and_then(|m| Ok((m, engine.tree()?.run_count()))) {
                        Ok(mark) => phase_marks.lock().expect("phase lock").push(mark),
                        Err(e) => record(e),
                    }
                }
                phase += 1;
                barrier.wait();
            }
            let Some((p, op)) = stream.next() else { break };
            index += 1;
            if shard(&op, opts.workers) != worker || failure.lock().expect("failure lock").is_some() {
                continue;
            }
            if let Err(e) = apply(&engine, op, index, value_len) {
                record(e);
                continue;
            }
            let n = done.fetch_add(1, Ordering::SeqCst) + 1;
            if n % opts.sample_every == 0 {
                if let Err(e) = sampler.sample(&engine, &base, n, p) {
                    record(e);
                }
            }
        }
    };
    std::thread::scope(|scope| {
        for w in 0..opts.workers {
            let replay = &replay;
            scope.spawn(move || replay(w));
        }
    });

    let aborted = failure.into_inner().expect("failure lock").map(|e| e.to_string());
    let mut trace = sampler.rows.into_inner().expect("sampler lock");
    trace.sort_by_key(|r| r.ops);
    let end = engine.metrics()?;
    let tree = engine.tree()?;
    let marks = phase_marks.into_inner().expect("phase lock");
    let phase_summaries: Vec<PhaseSummary> = workload
        .phases
        .iter()
        .enumerate()
        .filter_map(|(i, phase)| {
            let (from, _) = marks.get(i)?;
            let (to, end_runs) = marks.get(i + 1).cloned().unwrap_or((end.clone(), tree.run_count()));
            let ops = to.ops() - from.ops();
            let device_us = to.clock_us - from.clock_us;
            Some(PhaseSummary {
                mix: phase.mix.name,
                ops,
                device_us,
                throughput: throughput(ops, device_us),
                mean_latency_us: if ops > 0 { device_us / ops as f64 } else { 0.0 },
                mean_runs: if ops > 0 { (to.run_count_sum - from.run_count_sum) as f64 / ops as f64 } else { 0.0 },
                end_runs,
            })
        })
        .collect();
    let ops = end.ops() - base.ops();
    let device_us = end.clock_us - base.clock_us;
    let summary = BenchSummary {
        policy: config.policy.name().to_string(),
        workload: workload.name.clone(),
        seed: opts.seed,
        ops,
        device_us,
        throughput: throughput(ops, device_us),
        mean_latency_us: if ops > 0 { device_us / ops as f64 } else { 0.0 },
        wall_secs: started.elapsed().as_secs_f64(),
        preload_keys: keys,
        flushes: end.flushes - base.flushes,
        compactions: end.compactions - base.compactions,
        moves: end.moves - base.moves,
        compaction_bytes_in: end.compaction_bytes_in - base.compaction_bytes_in,
        searches: end.searches - base.searches,
        stall_us: end.stall_us - base.stall_us,
        read_blocks: end.reads.block_reads - base.reads.block_reads,
        final_runs: tree.run_count(),
        phases: phase_summaries,
        aborted,
    };
    let compactions = engine.compaction_log()?;
    let closed = engine.close();
    if summary.aborted.is_none() {
        closed?;
    }
    Ok(BenchReport { summary, trace, compactions })
}

/// Reports of several policies on the same operation stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub reports: Vec<BenchReport>,
}

impl Comparison {
    /// Fixed-width table of overall and per-phase throughput (ops/s).
    pub fn table(&self) -> String {
        let mut s = String::new();
        let Some(first) = self.reports.first() else { return s };
        let _ = write!(s, "{:<14}{:>14}", "policy", "overall");
        for p in &first.summary.phases {
            let _ = write!(s, "{:>12}", p.mix);
        }
        s.push('\n');
        for r in &self.reports {
            let _ = write!(s, "{:<14}{:>14.1}", r.summary.policy, r.summary.throughput);
            for p in &r.summary.phases {
                let _ = write!(s, "{:>12.1}", p.throughput);
            }
            s.push('\n');
        }
        s
    }
}

/// Runs every configuration on the same workload and seed, each on a fresh
/// file system from `make_fs`.
pub fn compare_policies(
    make_fs: &dyn Fn() -> Arc<dyn Fs>,
    dir: &Path,
    configs: &[EngineConfig],
    workload: &CompoundWorkload,
    opts: &BenchOptions,
) -> Result<Comparison> {
    if configs.is_empty() {
        return Err(Error::Config("no policies to compare".into()));
    }
    let mut reports = Vec::with_capacity(configs.len());
    for (i, config) in configs.iter().enumerate() {
        let sub = dir.join(format!("{i}-{}", config.policy.name()));
        reports.push(run_benchmark(make_fs(), &sub, config, workload, opts)?);
    }
    Ok(Comparison { reports })
}
