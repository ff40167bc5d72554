//! File-system seam for the engine.
//!
//! [`RealFs`] goes to the operating system. [`MemFs`] keeps files in memory
//! and tracks how much of each file has been synced, so [`MemFs::crash`] can
//! drop everything a power loss would. [`FaultFs`] wraps another file system
//! and fails the n-th mutating call, along with every call after it.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

pub trait FileWriter: Send {
    fn write_all(&mut self, buf: &[u8]) -> io::Result<()>;
    /// Makes everything written so far durable.
    fn sync(&mut self) -> io::Result<()>;
}

pub trait FileReader: Send + Sync {
    fn len(&self) -> u64;
    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub trait Fs: Send + Sync + fmt::Debug {
    /// Creates or truncates `path`.
    fn create(&self, path: &Path) -> io::Result<Box<dyn FileWriter>>;
    /// Opens `path` for appending, creating it if missing.
    fn append(&self, path: &Path) -> io::Result<Box<dyn FileWriter>>;
    fn open(&self, path: &Path) -> io::Result<Arc<dyn FileReader>>;
    fn remove(&self, path: &Path) -> io::Result<()>;
    fn rename(&self, from: &Path, to: &Path) -> io::Result<()>;
    fn exists(&self, path: &Path) -> bool;
    /// File names directly inside `dir`.
    fn list(&self, dir: &Path) -> io::Result<Vec<String>>;
    fn create_dir_all(&self, dir: &Path) -> io::Result<()>;

    fn read_all(&self, path: &Path) -> io::Result<Vec<u8>> {
        let file = self.open(path)?;
        let mut buf = vec![0; file.len() as usize];
        file.read_at(0, &mut buf)?;
        Ok(buf)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RealFs;

struct RealWriter {
    file: File,
}

impl FileWriter for RealWriter {
    fn write_all(&mut self, buf: &[u8]) -> io::Result<()> {
        self.file.write_all(buf)
    }

    fn sync(&mut self) -> io::Result<()> {
        self.file.sync_data()
    }
}

struct RealReader {
    file: File,
    len: u64,
}

impl FileReader for RealReader {
    fn len(&self) -> u64 {
        self.len
    }

    #[cfg(unix)]
    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        use std::os::unix::fs::FileExt;
        self.file.read_exact_at(buf, offset)
    }

    #[cfg(not(unix))]
    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        use std::os::windows::fs::FileExt;
        let mut done = 0;
        while done < buf.len() {
            let n = self.file.seek_read(&mut buf[done..], offset + done as u64)?;
            if n == 0 {
                return Err(io::ErrorKind::UnexpectedEof.into());
            }
            done += n;
        }
        Ok(())
    }
}

fn sync_parent(path: &Path) -> io::Result<()> {
    #[cfg(unix)]
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        File::open(dir)?.sync_all()?;
    }
    #[cfg(not(unix))]
    let _ = path;
    Ok(())
}

impl Fs for RealFs {
    fn create(&self, path: &Path) -> io::Result<Box<dyn FileWriter>> {
        let file = File::create(path)?;
        sync_parent(path)?;
        Ok(Box::new(RealWriter { file }))
    }

    fn append(&self, path: &Path) -> io::Result<Box<dyn FileWriter>> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        sync_parent(path)?;
        Ok(Box::new(RealWriter { file }))
    }

    fn open(&self, path: &Path) -> io::Result<Arc<dyn FileReader>> {
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        Ok(Arc::new(RealReader { file, len }))
    }

    fn remove(&self, path: &Path) -> io::Result<()> {
        fs::remove_file(path)
    }

    fn rename(&self, from: &Path, to: &Path) -> io::Result<()> {
        fs::rename(from, to)?;
        sync_parent(to)
    }

    fn exists(&self, path: &Path) -> bool {
        path.exists()
    }

    fn list(&self, dir: &Path) -> io::Result<Vec<String>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            if entry.file_type()?.is_file() {
                out.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        out.sort();
        Ok(out)
    }

    fn create_dir_all(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)
    }
}

#[derive(Debug, Default)]
struct MemFile {
    data: Arc<RwLock<Vec<u8>>>,
    /// Bytes that survive a crash; `None` until the first sync.
    synced: Arc<Mutex<Option<usize>>>,
}

impl MemFile {
    fn handle(&self) -> MemFile {
        MemFile { data: Arc::clone(&self.data), synced: Arc::clone(&self.synced) }
    }
}

/// In-memory file system shared by all clones.
#[derive(Debug, Default, Clone)]
pub struct MemFs {
    files: Arc<Mutex<BTreeMap<PathBuf, MemFile>>>,
}

struct MemWriter {
    file: MemFile,
}

impl FileWriter for MemWriter {
    fn write_all(&mut self, buf: &[u8]) -> io::Result<()> {
        self.file.data.write().expect("file lock").extend_from_slice(buf);
        Ok(())
    }

    fn sync(&mut self) -> io::Result<()> {
        let len = self.file.data.read().expect("file lock").len();
        *self.file.synced.lock().expect("sync lock") = Some(len);
        Ok(())
    }
}

struct MemReader {
    data: Arc<RwLock<Vec<u8>>>,
}

impl FileReader for MemReader {
    fn len(&self) -> u64 {
        self.data.read().expect("file lock").len() as u64
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        let data = self.data.read().expect("file lock");
        let start = usize::try_from(offset).map_err(|_| io::Error::from(io::ErrorKind::UnexpectedEof))?;
        let end = start.checked_add(buf.len()).filter(|e| *e <= data.len());
        let end = end.ok_or_else(|| io::Error::from(io::ErrorKind::UnexpectedEof))?;
        buf.copy_from_slice(&data[start..end]);
        Ok(())
    }
}

fn not_found(path: &Path) -> io::Error {
    io::Error::new(io::ErrorKind::NotFound, path.display().to_string())
}

impl MemFs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops unsynced bytes and files never synced, as a power loss would.
    pub fn crash(&self) {
        let mut files = self.files.lock().expect("fs lock");
        files.retain(|_, f| f.synced.lock().expect("sync lock").is_some());
        for f in files.values() {
            let keep = f.synced.lock().expect("sync lock").unwrap_or(0);
            f.data.write().expect("file lock").truncate(keep);
        }
    }

    /// Total bytes held across all files.
    pub fn total_bytes(&self) -> u64 {
        let files = self.files.lock().expect("fs lock");
        files.values().map(|f| f.data.read().expect("file lock").len() as u64).sum()
    }
}

impl Fs for MemFs {
    fn create(&self, path: &Path) -> io::Result<Box<dyn FileWriter>> {
        let mut files = self.files.lock().expect("fs lock");
        let file = MemFile::default();
        let handle = file.handle();
        files.insert(path.to_path_buf(), file);
        Ok(Box::new(MemWriter { file: handle }))
    }

    fn append(&self, path: &Path) -> io::Result<Box<dyn FileWriter>> {
        let mut files = self.files.lock().expect("fs lock");
        let file = files.entry(path.to_path_buf()).or_default();
        Ok(Box::new(MemWriter { file: file.handle() }))
    }

    fn open(&self, path: &Path) -> io::Result<Arc<dyn FileReader>> {
        let files = self.files.lock().expect("fs lock");
        let file = files.get(path).ok_or_else(|| not_found(path))?;
        Ok(Arc::new(MemReader { data: Arc::clone(&file.data) }))
    }

    fn remove(&self, path: &Path) -> io::Result<()> {
        let mut files = self.files.lock().expect("fs lock");
        files.remove(path).map(|_| ()).ok_or_else(|| not_found(path))
    }

    fn rename(&self, from: &Path, to: &Path) -> io::Result<()> {
        let mut files = self.files.lock().expect("fs lock");
        let file = files.remove(from).ok_or_else(|| not_found(from))?;
        files.insert(to.to_path_buf(), file);
        Ok(())
    }

    fn exists(&self, path: &Path) -> bool {
        self.files.lock().expect("fs lock").contains_key(path)
    }

    fn list(&self, dir: &Path) -> io::Result<Vec<String>> {
        let files = self.files.lock().expect("fs lock");
        Ok(files
            .keys()
            .filter(|p| p.parent() == Some(dir))
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect())
    }

    fn create_dir_all(&self, _dir: &Path) -> io::Result<()> {
        Ok(())
    }
}

/// Fails the `n`-th mutating call (create, append, write, sync, rename,
/// remove) and every mutating call after it. A failing write first lands
/// half of its bytes, leaving a torn tail.
#[derive(Debug, Clone)]
pub struct FaultFs {
    inner: Arc<dyn Fs>,
    state: Arc<FaultState>,
}

#[derive(Debug)]
struct FaultState {
    fail_at: u64,
    calls: AtomicU64,
    tripped: AtomicBool,
}

impl FaultState {
    /// `Err(true)` for the call that trips the fault, `Err(false)` after.
    fn check(&self) -> Result<(), bool> {
        if self.tripped.load(Ordering::SeqCst) {
            return Err(false);
        }
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n >= self.fail_at {
            self.tripped.store(true, Ordering::SeqCst);
            return Err(true);
        }
        Ok(())
    }

    fn step(&self) -> io::Result<()> {
        self.check().map_err(|_| injected())
    }
}

fn injected() -> io::Error {
    io::Error::other("injected fault")
}

impl FaultFs {
    pub fn new(inner: Arc<dyn Fs>, fail_at: u64) -> Self {
        Self {
            inner,
            state: Arc::new(FaultState { fail_at, calls: AtomicU64::new(0), tripped: AtomicBool::new(false) }),
        }
    }

    /// Never fails; counts mutating calls.
    pub fn counting(inner: Arc<dyn Fs>) -> Self {
        Self::new(inner, u64::MAX)
    }

    pub fn calls(&self) -> u64 {
        self.state.calls.load(Ordering::SeqCst)
    }

    pub fn tripped(&self) -> bool {
        self.state.tripped.load(Ordering::SeqCst)
    }
}

struct FaultWriter {
    inner: Box<dyn FileWriter>,
    state: Arc<FaultState>,
}

impl FileWriter for FaultWriter {
    fn write_all(&mut self, buf: &[u8]) -> io::Result<()> {
        if let Err(first) = self.state.check() {
            if first {
                self.inner.write_all(&buf[..buf.len() / 2])?;
            }
            return Err(injected());
        }
        self.inner.write_all(buf)
    }

    fn sync(&mut self) -> io::Result<()> {
        self.state.step()?;
        self.inner.sync()
    }
}

impl Fs for FaultFs {
    fn create(&self, path: &Path) -> io::Result<Box<dyn FileWriter>> {
        self.state.step()?;
        let inner = self.inner.create(path)?;
        Ok(Box::new(FaultWriter { inner, state: Arc::clone(&self.state) }))
    }

    fn append(&self, path: &Path) -> io::Result<Box<dyn FileWriter>> {
        self.state.step()?;
        let inner = self.inner.append(path)?;
        Ok(Box::new(FaultWriter { inner, state: Arc::clone(&self.state) }))
    }

    fn open(&self, path: &Path) -> io::Result<Arc<dyn FileReader>> {
        self.inner.open(path)
    }

    fn remove(&self, path: &Path) -> io::Result<()> {
        self.state.step()?;
        self.inner.remove(path)
    }

    fn rename(&self, from: &Path, to: &Path) -> io::Result<()> {
        self.state.step()?;
        self.inner.rename(from, to)
    }

    fn exists(&self, path: &Path) -> bool {
        self.inner.exists(path)
    }

    fn list(&self, dir: &Path) -> io::Result<Vec<String>> {
        self.inner.list(dir)
    }

    fn create_dir_all(&self, dir: &Path) -> io::Result<()> {
        self.inner.create_dir_all(dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crash_keeps_only_synced_bytes() {
        let fs = MemFs::new();
        let dir = Path::new("/db");
        let mut a = fs.create(&dir.join("a")).unwrap();
        a.write_all(b"hello").unwrap();
        a.sync().unwrap();
        a.write_all(b" world").unwrap();
        let mut b = fs.create(&dir.join("b")).unwrap();
        b.write_all(b"never synced").unwrap();
        fs.crash();
        assert_eq!(fs.read_all(&dir.join("a")).unwrap(), b"hello");
        assert!(!fs.exists(&dir.join("b")));
        assert_eq!(fs.list(dir).unwrap(), vec!["a".to_string()]);
    }

    #[test]
    fn fault_fs_trips_and_stays_down() {
        let mem = MemFs::new();
        let fs = FaultFs::new(Arc::new(mem.clone()), 2);
        let mut w = fs.create(Path::new("/x")).unwrap();
        w.write_all(b"abcd").unwrap();
        assert!(w.write_all(b"efgh").is_err());
        assert!(fs.tripped());
        assert!(w.sync().is_err());
        assert!(fs.remove(Path::new("/x")).is_err());
        assert_eq!(mem.read_all(Path::new("/x")).unwrap(), b"abcdef");
    }
}
