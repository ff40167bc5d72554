//! In-memory write buffer.

use std::collections::BTreeMap;
use std::ops::Bound;

use crate::sst::{Entry, Value};

/// Sorted buffer of the newest version per key.
///
/// `bytes` counts every buffered write (key plus payload), including ones
/// that replace an earlier version, so the buffer fills after a fixed number
/// of writes regardless of key reuse.
#[derive(Debug, Default)]
pub struct Memtable {
    map: BTreeMap<Vec<u8>, (u64, Value)>,
    bytes: u64,
}

impl Memtable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: &[u8], seq: u64, value: Value) {
        self.bytes += (key.len() + value.len()) as u64;
        self.map.insert(key.to_vec(), (seq, value));
    }

    pub fn get(&self, key: &[u8]) -> Option<Entry> {
        self.map
            .get_key_value(key)
            .map(|(k, (seq, value))| Entry { key: k.clone(), value: value.clone(), seq: *seq })
    }

    /// Entries with keys in `[start, end]` (or `[start, ..)`), ascending.
    pub fn range<'a>(&'a self, start: &[u8], end: Option<&[u8]>) -> impl Iterator<Item = Entry> + 'a {
        let upper = end.map_or(Bound::Unbounded, |e| Bound::Included(e.to_vec()));
        self.map
            .range((Bound::Included(start.to_vec()), upper))
            .map(|(k, (seq, value))| Entry { key: k.clone(), value: value.clone(), seq: *seq })
    }

    /// Entries in key order as `(key, seq, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (&[u8], u64, &Value)> + '_ {
        self.map.iter().map(|(k, (seq, v))| (k.as_slice(), *seq, v))
    }

    pub fn min_seq(&self) -> Option<u64> {
        self.map.values().map(|(seq, _)| *seq).min()
    }

    pub fn max_seq(&self) -> Option<u64> {
        self.map.values().map(|(seq, _)| *seq).max()
    }

    pub fn clear(&mut self) {
        self.map.clear();
        self.bytes = 0;
    }

    /// All entries, ascending, leaving the buffer empty.
    pub fn drain(&mut self) -> Vec<Entry> {
        self.bytes = 0;
        std::mem::take(&mut self.map)
            .into_iter()
            .map(|(key, (seq, value))| Entry { key, value, seq })
            .collect()
    }

    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newest_version_wins_and_bytes_count_every_write() {
        let mut m = Memtable::new();
        m.insert(b"a", 1, Value::Put(b"x".to_vec()));
        m.insert(b"a", 2, Value::Put(b"yy".to_vec()));
        m.insert(b"b", 3, Value::Tombstone);
        assert_eq!(m.bytes(), 2 + 3 + 1);
        assert_eq!(m.get(b"a").unwrap().seq, 2);
        let all = m.drain();
        assert_eq!(all.len(), 2);
        assert!(all[1].is_tombstone());
        assert!(m.is_empty() && m.bytes() == 0);
    }
}
