//! Append-only log of run-set edits, replayed on open.
//!
//! Each record is `len u32 | crc32 u32 | payload`, where the payload is one
//! or more edits applied atomically:
//!
//! ```text
//! 1 ADD     id u64 | level u8 | size u64 | min_seq u64 | max_seq u64
//! 2 REMOVE  id u64
//! 3 PARAMS  M f64 | c u64 | k f64
//! ```
//!
//! Replay stops at the first truncated or checksum-failing record, which can
//! only be the tail left by an interrupted append.

use std::path::{Path, PathBuf};

use lsmtune_core::{DecisionParams, SortedRun, TreeState};

use crate::error::{Error, Result};
use crate::fs::{FileWriter, Fs};

const ADD: u8 = 1;
const REMOVE: u8 = 2;
const PARAMS: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Edit {
    Add(SortedRun),
    Remove(u64),
    Params(DecisionParams),
}

fn encode(edits: &[Edit]) -> Vec<u8> {
    let mut out = Vec::with_capacity(edits.len() * 34);
    for edit in edits {
        match edit {
            Edit::Add(run) => {
                out.push(ADD);
                out.extend_from_slice(&run.id.0.to_le_bytes());
                out.push(run.level as u8);
                out.extend_from_slice(&run.size_bytes.to_le_bytes());
                out.extend_from_slice(&run.min_ts.to_le_bytes());
                out.extend_from_slice(&run.max_ts.to_le_bytes());
            }
            Edit::Remove(id) => {
                out.push(REMOVE);
                out.extend_from_slice(&id.to_le_bytes());
            }
            Edit::Params(p) => {
                out.push(PARAMS);
                out.extend_from_slice(&p.long_term_weight.to_le_bytes());
                out.extend_from_slice(&p.stall_threshold.to_le_bytes());
                out.extend_from_slice(&p.stall_rate_us.to_le_bytes());
            }
        }
    }
    out
}

fn decode(mut buf: &[u8]) -> Option<Vec<Edit>> {
    fn u64_at(buf: &mut &[u8]) -> Option<u64> {
        let (head, rest) = buf.split_at_checked(8)?;
        *buf = rest;
        Some(u64::from_le_bytes(head.try_into().ok()?))
    }
    let mut edits = Vec::new();
    while let Some((&tag, rest)) = buf.split_first() {
        buf = rest;
        let edit = match tag {
            ADD => {
                let id = u64_at(&mut buf)?;
                let (&level, rest) = buf.split_first()?;
                buf = rest;
                let size = u64_at(&mut buf)?;
                let min_seq = u64_at(&mut buf)?;
                let max_seq = u64_at(&mut buf)?;
                Edit::Add(SortedRun::new(id, usize::from(level), size, min_seq, max_seq))
            }
            REMOVE => Edit::Remove(u64_at(&mut buf)?),
            PARAMS => Edit::Params(DecisionParams {
                long_term_weight: f64::from_bits(u64_at(&mut buf)?),
                stall_threshold: u64_at(&mut buf)?,
                stall_rate_us: f64::from_bits(u64_at(&mut buf)?),
            }),
            _ => return None,
        };
        edits.push(edit);
    }
    Some(edits)
}

fn frame(edits: &[Edit]) -> Vec<u8> {
    let payload = encode(edits);
    let mut out = Vec::with_capacity(8 + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

/// State recovered from a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovered {
    pub tree: TreeState,
    pub params: Option<DecisionParams>,
    /// Records applied before the log ended or broke off.
    pub records: usize,
    /// Whether an unreadable tail was skipped.
    pub torn_tail: bool,
}

/// Replays the log at `path`; a missing file yields an empty tree.
pub fn replay(fs: &dyn Fs, path: &Path, max_levels: usize) -> Result<Recovered> {
    let mut tree = TreeState::new(max_levels);
    let mut params = None;
    let mut records = 0;
    let mut torn_tail = false;
    if !fs.exists(path) {
        return Ok(Recovered { tree, params, records, torn_tail });
    }
    let data = fs.read_all(path)?;
    let mut pos = 0usize;
    while pos < data.len() {
        let Some(header) = data.get(pos..pos + 8) else {
            torn_tail = true;
            break;
        };
        let len = u32::from_le_bytes(header[..4].try_into().expect("4 bytes")) as usize;
        let crc = u32::from_le_bytes(header[4..].try_into().expect("4 bytes"));
        let Some(payload) = data.get(pos + 8..pos + 8 + len) else {
            torn_tail = true;
            break;
        };
        if crc32fast::hash(payload) != crc {
            torn_tail = true;
            break;
        }
        let edits = decode(payload).ok_or_else(|| Error::corrupt(path, format!("malformed record at {pos}")))?;
        for edit in edits {
            match edit {
                Edit::Add(run) => tree.insert(run)?,
                Edit::Remove(id) => {
                    tree.remove(lsmtune_core::RunId(id))
                        .ok_or_else(|| Error::corrupt(path, format!("remove of unknown run {id}")))?;
                }
                Edit::Params(p) => params = Some(p),
            }
        }
        records += 1;
        pos += 8 + len;
    }
    Ok(Recovered { tree, params, records, torn_tail })
}

/// Appender for the live manifest.
pub struct ManifestWriter {
    file: Box<dyn FileWriter>,
    path: PathBuf,
}

impl std::fmt::Debug for ManifestWriter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManifestWriter").field("path", &self.path).finish()
    }
}

impl ManifestWriter {
    /// Writes a fresh manifest holding `tree` and `params`, atomically
    /// replacing any previous one, and opens it for appends.
    pub fn rewrite(fs: &dyn Fs, path: &Path, tree: &TreeState, params: Option<DecisionParams>) -> Result<Self> {
        let tmp = path.with_extension("tmp");
        let mut edits: Vec<Edit> = tree.runs().copied().map(Edit::Add).collect();
        edits.extend(params.map(Edit::Params));
        let mut file = fs.create(&tmp)?;
        if !edits.is_empty() {
            file.write_all(&frame(&edits))?;
        }
        file.sync()?;
        drop(file);
        fs.rename(&tmp, path)?;
        Ok(Self { file: fs.append(path)?, path: path.to_path_buf() })
    }

    /// Appends one atomic record and syncs it.
    pub fn append(&mut self, edits: &[Edit]) -> Result<()> {
        self.file.write_all(&frame(edits))?;
        self.file.sync()?;
        Ok(())
    }
}
