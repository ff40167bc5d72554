#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use lsmtune::fs::{FaultFs, Fs, MemFs};
use lsmtune::manifest;
use lsmtune::{Engine, EngineConfig, PolicyKind, Result, SearchSettings};
use lsmtune_core::bloom_fpr;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 24-byte keys and 104-byte values: 128-byte entries, 64 per 8 KiB buffer.
/// Searches simulate 40 decisions so that frequent searches stay cheap.
pub fn small_config(policy: PolicyKind) -> EngineConfig {
    EngineConfig {
        search: SearchSettings { max_iter: 40, ..SearchSettings::default() },
        memtable_size: 8 * 1024,
        key_size: 24,
        value_size: 104,
        block_size: 512,
        stats_period: 200,
        policy,
        ..EngineConfig::default()
    }
}

pub const POLICIES: [&str; 4] = ["arce", "leveling", "tiering", "lazy_leveling"];

pub fn key(i: u64) -> Vec<u8> {
    format!("key{i:021}").into_bytes()
}

pub fn value(i: u64, version: u64) -> Vec<u8> {
    let mut v = format!("v{i}-{version}-").into_bytes();
    v.resize(104, b'.');
    v
}

pub fn db_dir() -> PathBuf {
    PathBuf::from("/db")
}

/// Operation in a randomized history.
#[derive(Debug, Clone)]
pub enum HistOp {
    Put(u64, u64),
    Delete(u64),
    Get(u64),
    Scan(u64, u64),
    ScanFrom(u64, usize),
    Flush,
    Settle,
    Reopen,
}

/// Replays `ops` against an engine and a reference map, returning the first
/// mismatch.
pub fn check_history(policy: PolicyKind, ops: &[HistOp]) -> std::result::Result<(), String> {
    let fs: Arc<dyn Fs> = Arc::new(MemFs::new());
    let config = small_config(policy);
    let mut engine = Engine::open(fs.clone(), db_dir(), config.clone()).map_err(|e| e.to_string())?;
    let mut model: BTreeMap<Vec<u8>, Vec<u8>> = BTreeMap::new();
    for (step, op) in ops.iter().enumerate() {
        let fail = |what: String| format!("step {step} {op:?}: {what}");
        match op {
            HistOp::Put(k, v) => {
                engine.put(&key(*k), &value(*k, *v)).map_err(|e| fail(e.to_string()))?;
                model.insert(key(*k), value(*k, *v));
            }
            HistOp::Delete(k) => {
                engine.delete(&key(*k)).map_err(|e| fail(e.to_string()))?;
                model.remove(&key(*k));
            }
            HistOp::Get(k) => {
                let got = engine.get(&key(*k)).map_err(|e| fail(e.to_string()))?;
                if got.as_ref() != model.get(&key(*k)) {
                    return Err(fail(format!("get returned {got:?}")));
                }
            }
            HistOp::Scan(a, b) => {
                let (lo, hi) = (key(*a.min(b)), key(*a.max(b)));
                let got = engine.scan(&lo, &hi).map_err(|e| fail(e.to_string()))?;
                let want: Vec<_> = model.range(lo..=hi).map(|(k, v)| (k.clone(), v.clone())).collect();
                if got != want {
                    return Err(fail(format!("scan returned {} entries, expected {}", got.len(), want.len())));
                }
            }
            HistOp::ScanFrom(a, len) => {
                let got = engine.scan_from(&key(*a), *len).map_err(|e| fail(e.to_string()))?;
                let want: Vec<_> = model.range(key(*a)..).take(*len).map(|(k, v)| (k.clone(), v.clone())).collect();
                if got != want {
                    return Err(fail(format!("scan_from returned {} entries, expected {}", got.len(), want.len())));
                }
            }
            HistOp::Flush => engine.flush().map_err(|e| fail(e.to_string()))?,
            HistOp::Settle => engine.settle().map_err(|e| fail(e.to_string()))?,
            HistOp::Reopen => {
                engine.flush().map_err(|e| fail(e.to_string()))?;
                engine.close().map_err(|e| fail(e.to_string()))?;
                engine = Engine::open(fs.clone(), db_dir(), config.clone()).map_err(|e| fail(e.to_string()))?;
            }
        }
        engine.tree().map_err(|e| fail(e.to_string()))?.validate().map_err(|v| fail(v.to_string()))?;
    }
    let all = engine.scan_from(b"", usize::MAX).map_err(|e| e.to_string())?;
    let want: Vec<_> = model.into_iter().collect();
    if all != want {
        return Err(format!("final contents differ: {} vs {} entries", all.len(), want.len()));
    }
    Ok(())
}

/// Random history over `keys` keys.
pub fn random_history(rng: &mut impl rand::Rng, len: usize, keys: u64) -> Vec<HistOp> {
    (0..len)
        .map(|i| match rng.gen_range(0..100) {
            0..=44 => HistOp::Put(rng.gen_range(0..keys), i as u64),
            45..=54 => HistOp::Delete(rng.gen_range(0..keys)),
            55..=79 => HistOp::Get(rng.gen_range(0..keys)),
            80..=87 => HistOp::Scan(rng.gen_range(0..keys), rng.gen_range(0..keys)),
            88..=92 => HistOp::ScanFrom(rng.gen_range(0..keys), rng.gen_range(0..20)),
            93..=95 => HistOp::Flush,
            96..=98 => HistOp::Settle,
            _ => HistOp::Reopen,
        })
        .collect()
}

/// Outcome of one fault-injection trial.
#[derive(Debug)]
pub struct CrashTrial {
    pub fail_at: u64,
    pub recovered_runs: usize,
    pub problem: Option<String>,
}

/// Deterministic script that flushes and compacts repeatedly.
pub struct CrashScript {
    pub config: EngineConfig,
    pub rounds: u64,
}

/// What a fault-free run of the script did: the logical contents after every
/// write, the mutating-call counts around each `settle`, and every finished
/// compaction as `(input ids, output id)`.
pub struct ScriptRecord {
    pub snapshots: Vec<BTreeMap<Vec<u8>, Vec<u8>>>,
    pub installs: Vec<(u64, u64)>,
    pub compactions: Vec<(Vec<u64>, Option<u64>)>,
    /// Live run ids after each manifest record.
    pub states: Vec<BTreeSet<u64>>,
    pub total_calls: u64,
}

/// Run-id sets recorded by every prefix of the manifest at `path`.
pub fn manifest_states(fs: &dyn Fs, path: &std::path::Path, max_levels: usize) -> Vec<BTreeSet<u64>> {
    let data = fs.read_all(path).expect("manifest readable");
    let mut states = Vec::new();
    let mut pos = 0;
    loop {
        let scratch = MemFs::new();
        let mut f = scratch.create(path).unwrap();
        f.write_all(&data[..pos]).unwrap();
        f.sync().unwrap();
        let tree = manifest::replay(&scratch, path, max_levels).expect("prefix replays").tree;
        states.push(tree.runs().map(|r| r.id.0).collect());
        if pos + 8 > data.len() {
            break;
        }
        let len = u32::from_le_bytes(data[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 8 + len;
    }
    states
}

impl CrashScript {
    pub fn new() -> Self {
        Self { config: small_config(PolicyKind::Leveling { size_ratio: 3 }), rounds: 12 }
    }

    /// Runs the script until it finishes or an operation fails.
    fn play(
        &self,
        fs: Arc<dyn Fs>,
        calls: impl Fn() -> u64,
        mut on_snapshot: impl FnMut(&BTreeMap<Vec<u8>, Vec<u8>>),
        mut on_install: impl FnMut(u64, u64),
    ) -> Result<Engine> {
        let engine = Engine::open(fs, db_dir(), self.config.clone())?;
        let mut model = BTreeMap::new();
        on_snapshot(&model);
        for round in 0..self.rounds {
            for i in 0..64 {
                let k = (round * 37 + i * 11) % 300;
                engine.put(&key(k), &value(k, round))?;
                model.insert(key(k), value(k, round));
                on_snapshot(&model);
            }
            if round % 4 == 3 {
                engine.delete(&key(round))?;
                model.remove(&key(round));
                on_snapshot(&model);
            }
            engine.flush()?;
            let before = calls();
            engine.settle()?;
            on_install(before, calls());
        }
        Ok(engine)
    }

    pub fn record(&self) -> ScriptRecord {
        let mem = Arc::new(MemFs::new());
        let counting = Arc::new(FaultFs::counting(mem.clone()));
        let snapshots = std::cell::RefCell::new(Vec::new());
        let installs = std::cell::RefCell::new(Vec::new());
        let c = counting.clone();
        let engine = self
            .play(
                counting.clone(),
                move || c.calls(),
                |m| snapshots.borrow_mut().push(m.clone()),
                |a, b| installs.borrow_mut().push((a, b)),
            )
            .expect("script runs without faults");
        let compactions = engine
            .compaction_log()
            .unwrap()
            .iter()
            .map(|r| (r.inputs.iter().map(|id| id.0).collect(), r.output.map(|id| id.0)))
            .collect();
        let states = manifest_states(mem.as_ref(), &db_dir().join("MANIFEST"), self.config.max_levels);
        ScriptRecord {
            states,
            snapshots: snapshots.into_inner(),
            installs: installs.into_inner(),
            compactions,
            total_calls: counting.calls(),
        }
    }

    /// Fails the `fail_at`-th mutating call, crashes, reopens and checks the
    /// recovered store against the recorded run.
    pub fn trial(&self, record: &ScriptRecord, fail_at: u64) -> CrashTrial {
        let mem = Arc::new(MemFs::new());
        let faulty = Arc::new(FaultFs::new(mem.clone(), fail_at));
        let f = faulty.clone();
        let outcome = self.play(faulty.clone(), move || f.calls(), |_| {}, |_, _| {});
        drop(outcome);
        mem.crash();
        let problem = (|| -> std::result::Result<usize, String> {
            let engine = Engine::open(mem.clone() as Arc<dyn Fs>, db_dir(), self.config.clone())
                .map_err(|e| format!("reopen failed: {e}"))?;
            let tree = engine.tree().map_err(|e| e.to_string())?;
            tree.validate().map_err(|v| format!("invalid tree: {v}"))?;
            let live: BTreeSet<u64> = tree.runs().map(|r| r.id.0).collect();
            for (inputs, output) in &record.compactions {
                if inputs.iter().all(|id| live.contains(id)) && output.is_some_and(|o| live.contains(&o)) {
                    return Err(format!("both inputs and output {output:?} are live"));
                }
            }
            if !record.states.contains(&live) {
                return Err(format!("run set {live:?} never existed in the fault-free run"));
            }
            let contents: BTreeMap<Vec<u8>, Vec<u8>> =
                engine.scan_from(b"", usize::MAX).map_err(|e| format!("scan failed: {e}"))?.into_iter().collect();
            if !record.snapshots.contains(&contents) {
                return Err(format!("recovered {} keys matching no durable prefix", contents.len()));
            }
            Ok(tree.run_count())
        })();
        match problem {
            Ok(runs) => CrashTrial { fail_at, recovered_runs: runs, problem: None },
            Err(p) => CrashTrial { fail_at, recovered_runs: 0, problem: Some(p) },
        }
    }

    /// Up to `n` distinct fault points clustered around compaction installs.
    pub fn fault_points(&self, record: &ScriptRecord, n: usize) -> Vec<u64> {
        let mut points = std::collections::BTreeSet::new();
        for margin in 0..64u64 {
            for &(before, after) in &record.installs {
                if after == before {
                    continue;
                }
                for p in [before.saturating_sub(margin), after + margin] {
                    if (1..=record.total_calls).contains(&p) && points.len() < n {
                        points.insert(p);
                    }
                }
                for p in before..=after {
                    if p >= 1 && points.len() < n {
                        points.insert(p);
                    }
                }
            }
        }
        points.into_iter().collect()
    }
}

/// False-positive block reads per absent-key lookup against `runs` runs.
pub fn measure_bloom_fpr(runs: u64, lookups: u64) -> (f64, f64) {
    let config = EngineConfig {
        memtable_size: 64 * 1024,
        policy: PolicyKind::Tiering { size_ratio: 10 },
        ..small_config(PolicyKind::Arce)
    };
    let per_run = config.memtable_size / config.entry_size();
    let engine = Engine::open(Arc::new(MemFs::new()), db_dir(), config.clone()).unwrap();
    let mut present: Vec<u64> = (0..runs * per_run).map(|i| 2 * i).collect();
    present.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    for chunk in present.chunks(per_run as usize) {
        for &k in chunk {
            engine.put(&key(k), &value(k, 0)).unwrap();
        }
        engine.flush().unwrap();
    }
    assert_eq!(engine.tree().unwrap().run_count() as u64, runs);
    let before = engine.metrics().unwrap().reads;
    let span = runs * per_run;
    for i in 0..lookups {
        let k = 2 * ((i * 7919) % span) + 1;
        assert_eq!(engine.get(&key(k)).unwrap(), None);
    }
    let after = engine.metrics().unwrap().reads;
    let wasted = (after.wasted_block_reads - before.wasted_block_reads) as f64 / lookups as f64;
    (wasted, bloom_fpr(config.bloom_bits_per_key) * runs as f64)
}
