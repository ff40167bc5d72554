//! Sorted-run table files.
//!
//! ```text
//! +---------------------------+ offset 0
//! | "FXLS" | version u32      |
//! +---------------------------+
//! | data block 0              |  entries... | crc32 u32
//! | data block 1              |
//! | ...                       |
//! +---------------------------+
//! | index                     |  count u32, then per block:
//! |                           |  offset u64 | len u32 | key_len u16 | first key
//! +---------------------------+
//! | bloom filter              |  probes u8 | bits...
//! +---------------------------+
//! | meta                      |  entries u64 | tombstones u64 | min_seq u64 |
//! |                           |  max_seq u64 | min key | max key (u16 length each)
//! +---------------------------+
//! | footer (56 bytes)         |  index off/len | bloom off/len | meta off/len |
//! |                           |  crc32 of index, bloom, meta | footer crc32 | "FXLS"
//! +---------------------------+
//! ```
//!
//! An entry is `key_len u16 | value_len u32 | seq << 1 | tombstone (u64) |
//! key | value`. A block takes entries until its payload reaches the block
//! size, so each block holds `ceil(B / E)` fixed-size entries. All integers
//! are little-endian.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::bloom::{key_hash, BloomFilter};
use crate::error::{Error, Result};
use crate::fs::{FileReader, FileWriter, Fs};

pub const MAGIC: &[u8; 4] = b"FXLS";
pub const VERSION: u32 = 1;
const HEADER_LEN: u64 = 8;
const FOOTER_LEN: u64 = 56;
const ENTRY_HEADER: usize = 14;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Put(Vec<u8>),
    Tombstone,
}

impl Value {
    pub fn as_put(&self) -> Option<&[u8]> {
        match self {
            Value::Put(v) => Some(v),
            Value::Tombstone => None,
        }
    }

    pub fn len(&self) -> usize {
        self.as_put().map_or(0, <[u8]>::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One versioned key-value entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: Vec<u8>,
    pub value: Value,
    pub seq: u64,
}

impl Entry {
    pub fn is_tombstone(&self) -> bool {
        matches!(self.value, Value::Tombstone)
    }
}

/// Summary of a finished table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableMeta {
    pub size_bytes: u64,
    pub entries: u64,
    pub tombstones: u64,
    pub blocks: u64,
    pub min_seq: u64,
    pub max_seq: u64,
    pub min_key: Vec<u8>,
    pub max_key: Vec<u8>,
}

/// Block reads and filter checks performed on behalf of one caller.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ReadStats {
    pub block_reads: u64,
    pub bloom_checks: u64,
    /// Block reads that did not find the key they were looking for.
    pub wasted_block_reads: u64,
}

impl ReadStats {
    pub fn add(&mut self, other: &ReadStats) {
        self.block_reads += other.block_reads;
        self.bloom_checks += other.bloom_checks;
        self.wasted_block_reads += other.wasted_block_reads;
    }
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}
fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}
fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_key(out: &mut Vec<u8>, key: &[u8]) {
    put_u16(out, key.len() as u16);
    out.extend_from_slice(key);
}

/// Little-endian cursor over a byte slice.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len())?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Some(s)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn key(&mut self) -> Option<&'a [u8]> {
        let n = self.u16()? as usize;
        self.take(n)
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

/// Streams sorted entries into a table file.
pub struct TableWriter {
    file: Box<dyn FileWriter>,
    path: PathBuf,
    block_size: usize,
    bits_per_key: f64,
    offset: u64,
    block: Vec<u8>,
    block_first_key: Option<Vec<u8>>,
    index: Vec<u8>,
    blocks: u64,
    hashes: Vec<u64>,
    entries: u64,
    tombstones: u64,
    min_seq: u64,
    max_seq: u64,
    min_key: Option<Vec<u8>>,
    last_key: Option<Vec<u8>>,
}

impl TableWriter {
    pub fn create(fs: &dyn Fs, path: &Path, block_size: u64, bits_per_key: f64) -> Result<Self> {
        let mut file = fs.create(path)?;
        let mut header = Vec::with_capacity(HEADER_LEN as usize);
        header.extend_from_slice(MAGIC);
        put_u32(&mut header, VERSION);
        file.write_all(&header)?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
            block_size: block_size.max(1) as usize,
            bits_per_key,
            offset: HEADER_LEN,
            block: Vec::with_capacity(block_size as usize * 2),
            block_first_key: None,
            index: Vec::new(),
            blocks: 0,
            hashes: Vec::new(),
            entries: 0,
            tombstones: 0,
            min_seq: u64::MAX,
            max_seq: 0,
            min_key: None,
            last_key: None,
        })
    }

    /// Appends an entry; keys must arrive strictly ascending.
    pub fn add(&mut self, key: &[u8], seq: u64, value: &Value) -> Result<()> {
        if self.last_key.as_deref().is_some_and(|last| last >= key) {
            return Err(Error::corrupt(&self.path, "keys out of order while writing"));
        }
        if key.len() > u16::MAX as usize || value.len() > u32::MAX as usize {
            return Err(Error::Config("key or value too large".into()));
        }
        if self.block_first_key.is_none() {
            self.block_first_key = Some(key.to_vec());
        }
        put_u16(&mut self.block, key.len() as u16);
        put_u32(&mut self.block, value.len() as u32);
        put_u64(&mut self.block, (seq << 1) | u64::from(matches!(value, Value::Tombstone)));
        self.block.extend_from_slice(key);
        if let Value::Put(v) = value {
            self.block.extend_from_slice(v);
        } else {
            self.tombstones += 1;
        }
        self.hashes.push(key_hash(key));
        self.entries += 1;
        self.min_seq = self.min_seq.min(seq);
        self.max_seq = self.max_seq.max(seq);
        if self.min_key.is_none() {
            self.min_key = Some(key.to_vec());
        }
        self.last_key = Some(key.to_vec());
        if self.block.len() >= self.block_size {
            self.finish_block()?;
        }
        Ok(())
    }

    fn finish_block(&mut self) -> Result<()> {
        let Some(first) = self.block_first_key.take() else { return Ok(()) };
        let crc = crc32fast::hash(&self.block);
        put_u32(&mut self.block, crc);
        self.file.write_all(&self.block)?;
        put_u64(&mut self.index, self.offset);
        put_u32(&mut self.index, self.block.len() as u32);
        put_key(&mut self.index, &first);
        self.offset += self.block.len() as u64;
        self.blocks += 1;
        self.block.clear();
        Ok(())
    }

    pub fn entries(&self) -> u64 {
        self.entries
    }

    /// Bytes written so far, counting the open block.
    pub fn approximate_size(&self) -> u64 {
        self.offset + self.block.len() as u64
    }

    /// Writes index, filter, meta and footer, then syncs.
    pub fn finish(mut self) -> Result<TableMeta> {
        if self.entries == 0 {
            return Err(Error::Config("refusing to write an empty table".into()));
        }
        self.finish_block()?;
        let mut index = Vec::with_capacity(4 + self.index.len());
        put_u32(&mut index, self.blocks as u32);
        index.extend_from_slice(&self.index);
        let bloom = BloomFilter::build(&self.hashes, self.bits_per_key).encode();
        let min_key = self.min_key.take().expect("non-empty table");
        let max_key = self.last_key.take().expect("non-empty table");
        let mut meta = Vec::new();
        put_u64(&mut meta, self.entries);
        put_u64(&mut meta, self.tombstones);
        put_u64(&mut meta, self.min_seq);
        put_u64(&mut meta, self.max_seq);
        put_key(&mut meta, &min_key);
        put_key(&mut meta, &max_key);

        let index_off = self.offset;
        let bloom_off = index_off + index.len() as u64;
        let meta_off = bloom_off + bloom.len() as u64;
        let mut footer = Vec::with_capacity(FOOTER_LEN as usize);
        put_u64(&mut footer, index_off);
        put_u32(&mut footer, index.len() as u32);
        put_u64(&mut footer, bloom_off);
        put_u32(&mut footer, bloom.len() as u32);
        put_u64(&mut footer, meta_off);
        put_u32(&mut footer, meta.len() as u32);
        put_u32(&mut footer, crc32fast::hash(&index));
        put_u32(&mut footer, crc32fast::hash(&bloom));
        put_u32(&mut footer, crc32fast::hash(&meta));
        let crc = crc32fast::hash(&footer);
        put_u32(&mut footer, crc);
        footer.extend_from_slice(MAGIC);
        debug_assert_eq!(footer.len() as u64, FOOTER_LEN);

        let mut tail = index;
        tail.extend_from_slice(&bloom);
        tail.extend_from_slice(&meta);
        tail.extend_from_slice(&footer);
        self.file.write_all(&tail)?;
        self.file.sync()?;
        Ok(TableMeta {
            size_bytes: meta_off + meta.len() as u64 + FOOTER_LEN,
            entries: self.entries,
            tombstones: self.tombstones,
            blocks: self.blocks,
            min_seq: self.min_seq,
            max_seq: self.max_seq,
            min_key,
            max_key,
        })
    }
}

#[derive(Debug, Clone)]
struct IndexEntry {
    first_key: Vec<u8>,
    offset: u64,
    len: u32,
}

/// Open table with its index, filter and meta held in memory.
pub struct Table {
    file: Arc<dyn FileReader>,
    path: PathBuf,
    index: Vec<IndexEntry>,
    bloom: BloomFilter,
    meta: TableMeta,
}

impl std::fmt::Debug for Table {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Table").field("path", &self.path).field("meta", &self.meta).finish()
    }
}

impl Table {
    pub fn open(fs: &dyn Fs, path: &Path) -> Result<Self> {
        let file = fs.open(path)?;
        let len = file.len();
        let bad = |detail: &str| Error::corrupt(path, detail);
        if len < HEADER_LEN + FOOTER_LEN {
            return Err(bad("file too short"));
        }
        let mut header = [0u8; HEADER_LEN as usize];
        file.read_at(0, &mut header)?;
        if &header[..4] != MAGIC {
            return Err(bad("bad header magic"));
        }
        if u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) != VERSION {
            return Err(bad("unsupported version"));
        }
        let mut footer = [0u8; FOOTER_LEN as usize];
        file.read_at(len - FOOTER_LEN, &mut footer)?;
        if &footer[52..56] != MAGIC {
            return Err(bad("bad footer magic"));
        }
        let mut c = Cursor::new(&footer[..52]);
        let index_off = c.u64().expect("fixed footer");
        let index_len = c.u32().expect("fixed footer");
        let bloom_off = c.u64().expect("fixed footer");
        let bloom_len = c.u32().expect("fixed footer");
        let meta_off = c.u64().expect("fixed footer");
        let meta_len = c.u32().expect("fixed footer");
        let crcs = [c.u32(), c.u32(), c.u32()].map(|x| x.expect("fixed footer"));
        let footer_crc = c.u32().expect("fixed footer");
        if crc32fast::hash(&footer[..48]) != footer_crc {
            return Err(bad("footer checksum mismatch"));
        }
        let section = |off: u64, n: u32, crc: u32, what: &str| -> Result<Vec<u8>> {
            if off.checked_add(u64::from(n)).is_none_or(|end| end > len - FOOTER_LEN) {
                return Err(bad(&format!("{what} section out of bounds")));
            }
            let mut buf = vec![0; n as usize];
            file.read_at(off, &mut buf)?;
            if crc32fast::hash(&buf) != crc {
                return Err(bad(&format!("{what} checksum mismatch")));
            }
            Ok(buf)
        };
        let index_buf = section(index_off, index_len, crcs[0], "index")?;
        let bloom_buf = section(bloom_off, bloom_len, crcs[1], "bloom")?;
        let meta_buf = section(meta_off, meta_len, crcs[2], "meta")?;

        let mut c = Cursor::new(&index_buf);
        let count = c.u32().ok_or_else(|| bad("truncated index"))?;
        let mut index = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let offset = c.u64().ok_or_else(|| bad("truncated index"))?;
            let len = c.u32().ok_or_else(|| bad("truncated index"))?;
            let first_key = c.key().ok_or_else(|| bad("truncated index"))?.to_vec();
            index.push(IndexEntry { first_key, offset, len });
        }
        if !c.done() {
            return Err(bad("trailing index bytes"));
        }
        let bloom = BloomFilter::decode(&bloom_buf).ok_or_else(|| bad("malformed bloom filter"))?;
        let mut c = Cursor::new(&meta_buf);
        let mut field = || c.u64().ok_or_else(|| bad("truncated meta"));
        let (entries, tombstones, min_seq, max_seq) = (field()?, field()?, field()?, field()?);
        let min_key = c.key().ok_or_else(|| bad("truncated meta"))?.to_vec();
        let max_key = c.key().ok_or_else(|| bad("truncated meta"))?.to_vec();
        let meta = TableMeta {
            size_bytes: len,
            entries,
            tombstones,
            blocks: index.len() as u64,
            min_seq,
            max_seq,
            min_key,
            max_key,
        };
        Ok(Self { file, path: path.to_path_buf(), index, bloom, meta })
    }

    pub fn meta(&self) -> &TableMeta {
        &self.meta
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn bloom(&self) -> &BloomFilter {
        &self.bloom
    }

    pub fn covers(&self, key: &[u8]) -> bool {
        self.meta.min_key.as_slice() <= key && key <= self.meta.max_key.as_slice()
    }

    /// Index of the only block that may hold `key`.
    fn block_for(&self, key: &[u8]) -> usize {
        self.index.partition_point(|e| e.first_key.as_slice() <= key).saturating_sub(1)
    }

    fn read_block(&self, i: usize, stats: &mut ReadStats) -> Result<Vec<Entry>> {
        let e = &self.index[i];
        let mut buf = vec![0; e.len as usize];
        self.file.read_at(e.offset, &mut buf)?;
        stats.block_reads += 1;
        decode_block(&buf).ok_or_else(|| Error::corrupt(&self.path, format!("block {i} checksum or framing")))
    }

    /// The newest version of `key` in this table. The filter is consulted
    /// before any block is read.
    pub fn get(&self, key: &[u8], stats: &mut ReadStats) -> Result<Option<Entry>> {
        if !self.covers(key) {
            return Ok(None);
        }
        stats.bloom_checks += 1;
        if !self.bloom.may_contain(key) {
            return Ok(None);
        }
        let block = self.read_block(self.block_for(key), stats)?;
        let found = block.into_iter().find(|e| e.key == key);
        if found.is_none() {
            stats.wasted_block_reads += 1;
        }
        Ok(found)
    }

    /// Entries with keys at or above `start`, in key order.
    pub fn iter_from(self: &Arc<Self>, start: &[u8]) -> TableIter {
        let block = if start <= self.meta.min_key.as_slice() { 0 } else { self.block_for(start) };
        TableIter { table: Arc::clone(self), next_block: block, buf: Vec::new(), pos: 0, skip_below: Some(start.to_vec()) }
    }

    pub fn iter(self: &Arc<Self>) -> TableIter {
        TableIter { table: Arc::clone(self), next_block: 0, buf: Vec::new(), pos: 0, skip_below: None }
    }
}

fn decode_block(buf: &[u8]) -> Option<Vec<Entry>> {
    let (body, crc) = buf.split_at(buf.len().checked_sub(4)?);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().ok()?) {
        return None;
    }
    let mut c = Cursor::new(body);
    let mut out = Vec::with_capacity(body.len() / 1024 + 1);
    while !c.done() {
        if body.len() - c.pos < ENTRY_HEADER {
            return None;
        }
        let klen = c.u16()? as usize;
        let vlen = c.u32()? as usize;
        let tagged = c.u64()?;
        let key = c.take(klen)?.to_vec();
        let raw = c.take(vlen)?;
        let value = if tagged & 1 == 1 { Value::Tombstone } else { Value::Put(raw.to_vec()) };
        out.push(Entry { key, value, seq: tagged >> 1 });
    }
    Some(out)
}

/// Forward iterator that reads one block at a time.
pub struct TableIter {
    table: Arc<Table>,
    next_block: usize,
    buf: Vec<Entry>,
    pos: usize,
    skip_below: Option<Vec<u8>>,
}

impl TableIter {
    /// Next entry, charging block reads to `stats`.
    pub fn next_entry(&mut self, stats: &mut ReadStats) -> Result<Option<Entry>> {
        loop {
            if self.pos < self.buf.len() {
                let e = std::mem::replace(&mut self.buf[self.pos], Entry { key: Vec::new(), value: Value::Tombstone, seq: 0 });
                self.pos += 1;
                if let Some(start) = &self.skip_below {
                    if e.key.as_slice() < start.as_slice() {
                        continue;
                    }
                    self.skip_below = None;
                }
                return Ok(Some(e));
            }
            if self.next_block >= self.table.index.len() {
                return Ok(None);
            }
            self.buf = self.table.read_block(self.next_block, stats)?;
            self.next_block += 1;
            self.pos = 0;
        }
    }
}
