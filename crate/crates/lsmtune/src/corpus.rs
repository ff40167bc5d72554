//! Tiny-instance corpora for the exhaustive oracle.
//!
//! A corpus is a TOML file of `[[instance]]` tables:
//!
//! ```toml
//! [[instance]]
//! max_levels = 2
//! runs = [[0, 131072], [1, 1048576]]
//! schedule = [[512.0, 2048.0, 1024.0]]   # range, update, point per window
//! stall_threshold = 3
//! stall_rate_us = 6.0
//! ```
//!
//! Cost constants default to the engine defaults with 1 KiB entries and may
//! be overridden per instance with a `[instance.constants]` table.

use std::path::Path;
use std::time::{Duration, Instant};

use lsmtune_core::oracle::{adaptive_sequence, approximation_ratio};
use lsmtune_core::{optimal_sequence, CostConstants, SearchConfig, TinyInstance, WorkloadMix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsRecord {
    read_io_us: f64,
    write_io_us: f64,
    block_size: u64,
    memtable_size: u64,
    entry_size: u64,
    bloom_fpr: f64,
    #[serde(default)]
    scan_blocks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRecord {
    max_levels: usize,
    runs: Vec<(usize, u64)>,
    schedule: Vec<[f64; 3]>,
    stall_threshold: u64,
    stall_rate_us: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constants: Option<ConstantsRecord>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusFile {
    #[serde(default)]
    instance: Vec<InstanceRecord>,
}

impl From<&TinyInstance> for InstanceRecord {
    fn from(inst: &TinyInstance) -> Self {
        let c = inst.constants;
        Self {
            max_levels: inst.max_levels,
            runs: inst.runs.clone(),
            schedule: inst.schedule.iter().map(|m| [m.range, m.update, m.point]).collect(),
            stall_threshold: inst.stall_threshold,
            stall_rate_us: inst.stall_rate_us,
            constants: (c != CostConstants::default()).then_some(ConstantsRecord {
                read_io_us: c.read_io_us,
                write_io_us: c.write_io_us,
                block_size: c.block_size,
                memtable_size: c.memtable_size,
                entry_size: c.entry_size,
                bloom_fpr: c.bloom_fpr,
                scan_blocks: c.scan_blocks,
            }),
        }
    }
}

impl InstanceRecord {
    fn into_instance(self) -> TinyInstance {
        let constants = self.constants.map_or_else(CostConstants::default, |c| CostConstants {
            read_io_us: c.read_io_us,
            write_io_us: c.write_io_us,
            block_size: c.block_size,
            memtable_size: c.memtable_size,
            entry_size: c.entry_size,
            bloom_fpr: c.bloom_fpr,
            scan_blocks: c.scan_blocks,
        });
        TinyInstance {
            max_levels: self.max_levels,
            runs: self.runs,
            schedule: self.schedule.iter().map(|&[range, update, point]| WorkloadMix { range, update, point }).collect(),
            constants,
            stall_threshold: self.stall_threshold,
            stall_rate_us: self.stall_rate_us,
        }
    }
}

/// Parses and validates a corpus.
pub fn from_toml(text: &str) -> Result<Vec<TinyInstance>> {
    let file: CorpusFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let instances: Vec<TinyInstance> = file.instance.into_iter().map(InstanceRecord::into_instance).collect();
    for inst in &instances {
        inst.validate()?;
    }
    Ok(instances)
}

pub fn to_toml(instances: &[TinyInstance]) -> String {
    let file = CorpusFile { instance: instances.iter().map(InstanceRecord::from).collect() };
    toml::to_string(&file).expect("corpus serializes")
}

pub fn load(path: &Path) -> Result<Vec<TinyInstance>> {
    let text = std::fs::read_to_string(path)?;
    from_toml(&text).map_err(|e| match e {
        Error::Config(detail) => Error::Parse { path: path.to_path_buf(), detail },
        other => other,
    })
}

pub fn save(path: &Path, instances: &[TinyInstance]) -> Result<()> {
    std::fs::write(path, to_toml(instances))?;
    Ok(())
}

/// One random instance: up to `max_runs` runs of 128 KiB to 8 MiB on up to
/// three levels, and up to `max_windows` windows that each carry a full
/// window of updates (or none) with whole-numbered lookup counts.
pub fn random_instance(rng: &mut ChaCha8Rng, max_runs: usize, max_windows: usize) -> TinyInstance {
    let max_levels = rng.gen_range(1..=3);
    let n = rng.gen_range(1..=max_runs.max(1));
    let runs = (0..n).map(|_| (rng.gen_range(0..max_levels), rng.gen_range(1u64..=64) << 17)).collect();
    let w = rng.gen_range(1..=max_windows.max(1));
    let constants = CostConstants::default();
    let full = (constants.memtable_size / constants.entry_size) as f64;
    let schedule = (0..w)
        .map(|_| {
            let update = if rng.gen_bool(0.15) { 0.0 } else { full };
            let range = if rng.gen_bool(0.2) { 0.0 } else { f64::from(rng.gen_range(0u32..2048)) };
            let point = f64::from(rng.gen_range(0u32..4096));
            let mut mix = WorkloadMix { range, update, point };
            if mix.total() == 0.0 {
                mix.point = 1.0;
            }
            mix
        })
        .collect();
    TinyInstance {
        max_levels,
        runs,
        schedule,
        constants,
        stall_threshold: rng.gen_range(1..8),
        stall_rate_us: [0.0, 6.0, 12.0, 24.0][rng.gen_range(0..4)],
    }
}

/// `count` instances with at most six runs and four windows.
pub fn generate(count: usize, seed: u64) -> Vec<TinyInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_instance(&mut rng, 6, 4)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOutcome {
    pub optimal_avg: f64,
    pub adaptive_avg: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSummary {
    pub outcomes: Vec<OracleOutcome>,
    pub elapsed: Duration,
}

impl OracleSummary {
    pub fn worst_ratio(&self) -> f64 {
        self.outcomes.iter().map(|o| o.ratio).fold(1.0, f64::max)
    }

    pub fn mean_ratio(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 1.0;
        }
        self.outcomes.iter().map(|o| o.ratio).sum::<f64>() / self.outcomes.len() as f64
    }

    /// Instances whose adaptive cost exceeds `bound` times the optimum.
    pub fn violations(&self, bound: f64) -> usize {
        self.outcomes.iter().filter(|o| o.ratio > bound * (1.0 + 1e-9)).count()
    }
}

/// Optimum and adaptive plan for every instance.
pub fn run_oracle_suite(instances: &[TinyInstance], config: &SearchConfig) -> Result<OracleSummary> {
    let started = Instant::now();
    let outcomes = instances
        .iter()
        .map(|inst| {
            let best = optimal_sequence(inst)?;
            let adaptive = adaptive_sequence(inst, config)?;
            Ok(OracleOutcome {
                optimal_avg: best.avg_cost,
                adaptive_avg: adaptive.avg_cost,
                ratio: approximation_ratio(&adaptive, &best),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleSummary { outcomes, elapsed: started.elapsed() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_round_trips_through_toml() {
        let mut instances = generate(20, 3);
        instances[0].constants.read_io_us = 20.0;
        let back = from_toml(&to_toml(&instances)).unwrap();
        assert_eq!(back, instances);
    }

    #[test]
    fn invalid_instances_are_rejected() {
        let text = "[[instance]]\nmax_levels = 1\nruns = [[2, 10]]\nschedule = [[1.0, 0.0, 0.0]]\nstall_threshold = 1\nstall_rate_us = 0.0\n";
        assert!(from_toml(text).is_err());
    }
}
