//! Per-run Bloom filter with a stable hash, so filters written by one build
//! are readable by any other.
//!
//! Probes use double hashing: probe `i` tests bit `h1 + i * h2 (mod m)`.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a followed by a 64-bit avalanche finalizer.
pub fn key_hash(key: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in key {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

/// Probe count minimizing the false-positive rate, `round(bits_per_key ln 2)`.
pub fn optimal_probes(bits_per_key: f64) -> u8 {
    (bits_per_key * std::f64::consts::LN_2).round().clamp(1.0, 30.0) as u8
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomFilter {
    bits: Vec<u8>,
    probes: u8,
}

impl BloomFilter {
    /// Filter over the given key hashes.
    pub fn build(hashes: &[u64], bits_per_key: f64) -> Self {
        let probes = optimal_probes(bits_per_key);
        let nbits = ((hashes.len() as f64 * bits_per_key).ceil() as usize).max(64);
        let mut filter = Self { bits: vec![0; nbits.div_ceil(8)], probes };
        for &h in hashes {
            filter.insert_hash(h);
        }
        filter
    }

    fn nbits(&self) -> u64 {
        self.bits.len() as u64 * 8
    }

    fn positions(&self, h: u64) -> impl Iterator<Item = u64> {
        let m = self.nbits();
        let h1 = h;
        let h2 = h.rotate_right(32) | 1;
        (0..u64::from(self.probes)).map(move |i| h1.wrapping_add(i.wrapping_mul(h2)) % m)
    }

    fn insert_hash(&mut self, h: u64) {
        let m = self.nbits();
        let h2 = h.rotate_right(32) | 1;
        for i in 0..u64::from(self.probes) {
            let p = h.wrapping_add(i.wrapping_mul(h2)) % m;
            self.bits[(p / 8) as usize] |= 1 << (p % 8);
        }
    }

    pub fn may_contain_hash(&self, h: u64) -> bool {
        self.positions(h).all(|p| self.bits[(p / 8) as usize] & (1 << (p % 8)) != 0)
    }

    pub fn may_contain(&self, key: &[u8]) -> bool {
        self.may_contain_hash(key_hash(key))
    }

    /// `[probes u8][bits...]`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + self.bits.len());
        out.push(self.probes);
        out.extend_from_slice(&self.bits);
        out
    }

    pub fn decode(buf: &[u8]) -> Option<Self> {
        let (&probes, bits) = buf.split_first()?;
        if probes == 0 || bits.is_empty() {
            return None;
        }
        Some(Self { bits: bits.to_vec(), probes })
    }
}
