//! Engine configuration, loadable from TOML.
//!
//! ```toml
//! memtable_size = 2097152
//! key_size = 24
//! value_size = 1000
//! block_size = 4096
//! bloom_bits_per_key = 10.0
//! max_levels = 4
//! read_io_us = 12.0
//! write_io_us = 15.0
//! compaction_workers = 1
//! stats_period = 1000000
//!
//! [policy]
//! kind = "arce"            # or "leveling", "tiering", "lazy_leveling"
//! size_ratio = 10          # baselines only
//!
//! [search]
//! max_iter = 400
//! workers = 16
//! ```

use std::path::Path;

use lsmtune_core::{
    bloom_fpr, Amdahl, BaselineKind, BaselinePolicy, CostConstants, DecisionParams, EnumConfig, ScoringOptions,
    SearchConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Arce,
    Leveling { size_ratio: u64 },
    Tiering { size_ratio: u64 },
    LazyLeveling { size_ratio: u64 },
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Arce => "arce",
            PolicyKind::Leveling { .. } => "leveling",
            PolicyKind::Tiering { .. } => "tiering",
            PolicyKind::LazyLeveling { .. } => "lazy_leveling",
        }
    }

    /// Parses `arce`, `leveling`, `tiering` or `lazy_leveling` (with `T = 10`).
    pub fn parse(name: &str) -> Result<Self> {
        let t = 10;
        Ok(match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "arce" => PolicyKind::Arce,
            "leveling" => PolicyKind::Leveling { size_ratio: t },
            "tiering" => PolicyKind::Tiering { size_ratio: t },
            "lazy_leveling" | "lazyleveling" => PolicyKind::LazyLeveling { size_ratio: t },
            other => return Err(Error::Config(format!("unknown policy {other:?}"))),
        })
    }

    pub fn baseline(&self, buffer_bytes: u64) -> Result<Option<BaselinePolicy>> {
        let (kind, t) = match *self {
            PolicyKind::Arce => return Ok(None),
            PolicyKind::Leveling { size_ratio } => (BaselineKind::Leveling, size_ratio),
            PolicyKind::Tiering { size_ratio } => (BaselineKind::Tiering, size_ratio),
            PolicyKind::LazyLeveling { size_ratio } => (BaselineKind::LazyLeveling, size_ratio),
        };
        Ok(Some(BaselinePolicy::new(kind, t, buffer_bytes)?))
    }
}

/// Parameter-search settings for the adaptive policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub m_step: f64,
    pub c_step: u64,
    pub k_candidates: Vec<f64>,
    pub max_iter: usize,
    pub max_m_steps: usize,
    pub recompute_threshold: f64,
    pub workers: usize,
    pub enabled: bool,
}

impl Default for SearchSettings {
    fn default() -> Self {
        let d = SearchConfig::default();
        Self {
            m_step: d.m_step,
            c_step: d.c_step,
            k_candidates: d.k_candidates,
            max_iter: d.max_iter,
            max_m_steps: d.max_m_steps,
            recompute_threshold: d.recompute_threshold,
            workers: d.workers,
            enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmdahlSettings {
    pub parallel_fraction: f64,
    pub threads: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub memtable_size: u64,
    pub key_size: u64,
    pub value_size: u64,
    pub block_size: u64,
    pub bloom_bits_per_key: f64,
    pub max_levels: usize,
    pub read_io_us: f64,
    pub write_io_us: f64,
    pub compaction_workers: usize,
    /// Operations between statistics reports.
    pub stats_period: u64,
    pub policy: PolicyKind,
    /// Starting `(M, c, k)` for the adaptive policy.
    pub initial_params: (f64, u64, f64),
    pub search: SearchSettings,
    pub amdahl: Option<AmdahlSettings>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let p = DecisionParams::default();
        Self {
            memtable_size: 2 * 1024 * 1024,
            key_size: 24,
            value_size: 1000,
            block_size: 4096,
            bloom_bits_per_key: 10.0,
            max_levels: 4,
            read_io_us: 12.0,
            write_io_us: 15.0,
            compaction_workers: 1,
            stats_period: 1_000_000,
            policy: PolicyKind::Arce,
            initial_params: (p.long_term_weight, p.stall_threshold, p.stall_rate_us),
            search: SearchSettings::default(),
            amdahl: None,
        }
    }
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str::<Self>(&text)
            .map_err(|e| Error::Parse { path: path.to_path_buf(), detail: e.to_string() })
            .and_then(|c| c.validate().map(|()| c))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn entry_size(&self) -> u64 {
        self.key_size + self.value_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.compaction_workers == 0 {
            return Err(Error::Config("at least one compaction worker is required".into()));
        }
        if self.stats_period == 0 {
            return Err(Error::Config("stats period must be positive".into()));
        }
        if self.key_size == 0 || self.key_size > u64::from(u16::MAX) {
            return Err(Error::Config("key size must be within 1..=65535".into()));
        }
        if !(self.bloom_bits_per_key >= 0.0) {
            return Err(Error::Config("bloom bits per key must be non-negative".into()));
        }
        self.constants().validate()?;
        self.constants().window_update_count()?;
        self.enumeration().validate()?;
        self.initial_params()?;
        self.policy.baseline(self.memtable_size)?;
        self.search_config().validate()?;
        Ok(())
    }

    pub fn constants(&self) -> CostConstants {
        CostConstants {
            read_io_us: self.read_io_us,
            write_io_us: self.write_io_us,
            block_size: self.block_size,
            memtable_size: self.memtable_size,
            entry_size: self.entry_size(),
            bloom_fpr: bloom_fpr(self.bloom_bits_per_key),
            scan_blocks: 0.0,
        }
    }

    pub fn enumeration(&self) -> EnumConfig {
        EnumConfig { max_levels: self.max_levels, ..EnumConfig::default() }
    }

    pub fn initial_params(&self) -> Result<DecisionParams> {
        let (m, c, k) = self.initial_params;
        Ok(DecisionParams::new(m, c, k)?)
    }

    /// Scoring options with `free_workers` idle compaction workers.
    pub fn scoring(&self, free_workers: usize, busy_levels: u16) -> ScoringOptions {
        ScoringOptions {
            enumeration: self.enumeration(),
            include_stall: free_workers <= 1,
            amdahl: self
                .amdahl
                .filter(|_| self.compaction_workers > 1)
                .map(|a| Amdahl { parallel_fraction: a.parallel_fraction, threads: a.threads }),
            busy_levels,
        }
    }

    pub fn search_config(&self) -> SearchConfig {
        let s = &self.search;
        SearchConfig {
            m_step: s.m_step,
            c_step: s.c_step,
            k_candidates: s.k_candidates.clone(),
            max_iter: s.max_iter,
            recompute_threshold: s.recompute_threshold,
            workers: s.workers,
            max_m_steps: s.max_m_steps,
            fixed_stall: None,
            scoring: self.scoring(1, 0),
        }
    }
}
