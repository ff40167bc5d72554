//! Operation mixes, compound workloads and deterministic operation streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::error::{Error, Result};

/// Percentages of range lookups, updates and point lookups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixSpec {
    pub name: char,
    pub range_pct: u8,
    pub update_pct: u8,
    pub point_pct: u8,
}

const fn spec(name: char, range_pct: u8, update_pct: u8, point_pct: u8) -> MixSpec {
    MixSpec { name, range_pct, update_pct, point_pct }
}

pub const MIXES: [MixSpec; 10] = [
    spec('A', 98, 1, 1),
    spec('B', 1, 98, 1),
    spec('C', 1, 1, 98),
    spec('D', 49, 2, 49),
    spec('E', 2, 49, 49),
    spec('F', 49, 49, 2),
    spec('G', 40, 40, 20),
    spec('H', 40, 20, 40),
    spec('I', 20, 40, 40),
    spec('J', 33, 33, 33),
];

impl MixSpec {
    pub fn named(name: char) -> Option<MixSpec> {
        MIXES.iter().copied().find(|m| m.name == name.to_ascii_uppercase())
    }

    /// Custom mix; percentages must sum to 100.
    pub fn custom(name: char, range_pct: u8, update_pct: u8, point_pct: u8) -> Result<MixSpec> {
        let sum = u32::from(range_pct) + u32::from(update_pct) + u32::from(point_pct);
        if sum != 100 {
            return Err(Error::Config(format!("mix percentages sum to {sum}")));
        }
        Ok(spec(name, range_pct, update_pct, point_pct))
    }

    /// Sum of the percentages; operation types are drawn in these
    /// proportions (J's 33/33/33 gives equal thirds).
    pub fn total(&self) -> u32 {
        u32::from(self.range_pct) + u32::from(self.update_pct) + u32::from(self.point_pct)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyDistribution {
    Uniform,
    Zipfian { theta: f64 },
    /// Uniform over the most recently inserted 1% of keys.
    Latest,
}

impl KeyDistribution {
    pub const YCSB_THETA: f64 = 0.99;

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "zipf" | "zipfian" => Ok(Self::Zipfian { theta: Self::YCSB_THETA }),
            "latest" => Ok(Self::Latest),
            other => Err(Error::Config(format!("unknown key distribution {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub mix: MixSpec,
    pub ops: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompoundWorkload {
    pub name: String,
    pub phases: Vec<Phase>,
    pub distribution: KeyDistribution,
    pub preload_bytes: u64,
}

/// Operations per phase of Workloads I and II at full scale.
pub const FULL_PHASE_OPS: u64 = 40_960_000;
/// Operations per phase of Workload III at full scale.
pub const FULL_PHASE_OPS_III: u64 = 20_480_000;
/// Data written sequentially before any workload, at full scale.
pub const FULL_PRELOAD_BYTES: u64 = 40 << 30;
/// Entries per range lookup.
pub const SCAN_LEN: usize = 100;

fn scaled(n: u64, scale: f64) -> u64 {
    (n as f64 * scale).round() as u64
}

/// Workload `I`, `II` or `III` with op counts and preload scaled by `scale`.
pub fn build_named_workload(name: &str, scale: f64) -> Result<CompoundWorkload> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::Config(format!("scale {scale} outside (0, 1]")));
    }
    let (letters, per_phase) = match name.to_ascii_uppercase().as_str() {
        "I" => ("ABDJCE", FULL_PHASE_OPS),
        "II" => ("JEBFDC", FULL_PHASE_OPS),
        "III" => ("GHI", FULL_PHASE_OPS_III),
        _ => return Err(Error::UnknownWorkload(name.to_string())),
    };
    let ops = scaled(per_phase, scale).max(1);
    let phases = letters
        .chars()
        .map(|c| Phase { mix: MixSpec::named(c).expect("table mix"), ops })
        .collect();
    Ok(CompoundWorkload {
        name: name.to_ascii_uppercase(),
        phases,
        distribution: KeyDistribution::Uniform,
        preload_bytes: scaled(FULL_PRELOAD_BYTES, scale),
    })
}

impl CompoundWorkload {
    /// Single-phase workload over `mix`.
    pub fn single(mix: MixSpec, ops: u64, preload_bytes: u64) -> Self {
        Self {
            name: mix.name.to_string(),
            phases: vec![Phase { mix, ops }],
            distribution: KeyDistribution::Uniform,
            preload_bytes,
        }
    }

    pub fn total_ops(&self) -> u64 {
        self.phases.iter().map(|p| p.ops).sum()
    }

    /// Keys written by the preload, each `entry_size` bytes.
    pub fn key_space(&self, entry_size: u64) -> u64 {
        (self.preload_bytes / entry_size.max(1)).max(1)
    }

    /// Operation index at which each phase starts.
    pub fn phase_starts(&self) -> Vec<u64> {
        self.phases
            .iter()
            .scan(0, |acc, p| {
                let start = *acc;
                *acc += p.ops;
                Some(start)
            })
            .collect()
    }
}

/// One generated operation over key indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Put { key: u64 },
    Get { key: u64 },
    Scan { start: u64, len: usize },
}

/// `"user"` followed by the index as 20 digits: 24 bytes.
pub fn key_bytes(index: u64) -> Vec<u8> {
    format!("user{index:020}").into_bytes()
}

/// Deterministic value of `len` bytes for a key index and version.
pub fn value_bytes(index: u64, version: u64, len: usize) -> Vec<u8> {
    let mut state = index.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ version.wrapping_mul(0xd1b5_4a32_d192_ed03);
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let word = (state >> 24).to_le_bytes();
        let take = (len - out.len()).min(8);
        out.extend_from_slice(&word[..take]);
    }
    out
}

/// Large prime used to spread zipfian ranks over the key space.
const SPREAD: u64 = 2_147_483_647;

enum Keys {
    Uniform,
    Zipf(Zipf<f64>),
    Latest,
}

/// Deterministic operation stream for a workload.
pub struct OpStream {
    phases: Vec<Phase>,
    phase: usize,
    left: u64,
    rng: ChaCha8Rng,
    keys: Keys,
    key_space: u64,
}

impl std::fmt::Debug for OpStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpStream").field("phase", &self.phase).field("left", &self.left).finish()
    }
}

/// Stream over `key_space` preloaded keys, seeded by `seed`.
pub fn generate_ops(workload: &CompoundWorkload, key_space: u64, seed: u64) -> Result<OpStream> {
    let key_space = key_space.max(1);
    let keys = match workload.distribution {
        KeyDistribution::Uniform => Keys::Uniform,
        KeyDistribution::Latest => Keys::Latest,
        KeyDistribution::Zipfian { theta } => {
            Keys::Zipf(Zipf::new(key_space, theta).map_err(|e| Error::Config(format!("zipf: {e}")))?)
        }
    };
    let phases: Vec<Phase> = workload.phases.iter().copied().filter(|p| p.ops > 0).collect();
    let left = phases.first().map_or(0, |p| p.ops);
    Ok(OpStream { phases, phase: 0, left, rng: ChaCha8Rng::seed_from_u64(seed), keys, key_space })
}

impl OpStream {
    fn key(&mut self) -> u64 {
        let n = self.key_space;
        match &self.keys {
            Keys::Uniform => self.rng.gen_range(0..n),
            Keys::Zipf(z) => {
                let rank = z.sample(&mut self.rng) as u64;
                (rank.saturating_sub(1) % n) * (SPREAD % n).max(1) % n
            }
            Keys::Latest => {
                let window = (n / 100).max(1);
                n - window + self.rng.gen_range(0..window)
            }
        }
    }
}

impl Iterator for OpStream {
    /// `(phase index, operation)`.
    type Item = (usize, Op);

    fn next(&mut self) -> Option<(usize, Op)> {
        while self.left == 0 {
            self.phase += 1;
            self.left = self.phases.get(self.phase)?.ops;
        }
        self.left -= 1;
        let mix = self.phases[self.phase].mix;
        let draw = self.rng.gen_range(0..mix.total());
        let op = if draw < u32::from(mix.range_pct) {
            Op::Scan { start: self.key(), len: SCAN_LEN }
        } else if draw < u32::from(mix.range_pct) + u32::from(mix.update_pct) {
            Op::Put { key: self.key() }
        } else {
            Op::Get { key: self.key() }
        };
        Some((self.phase, op))
    }
}
