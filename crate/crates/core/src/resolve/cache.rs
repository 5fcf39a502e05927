//! Persistent response cache for remote term lookups.
//!
//! The on-disk form is an append-only log of JSON lines, one per fetched
//! key. Entries never expire; delete the file to start over.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ResolveError, TermHit};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    query: String,
    scope: String,
    exact: bool,
    hits: Vec<TermHit>,
    fetched_at: u64,
}

/// Stable digest of (normalized query, scope, exactness).
pub fn cache_key(normalized_query: &str, scope: &str, exact: bool) -> String {
    let mut h = Sha256::new();
    h.update(normalized_query.as_bytes());
    h.update([0x1f]);
    h.update(scope.as_bytes());
    h.update([0x1f]);
    h.update([exact as u8]);
    hex::encode(h.finalize())
}

#[derive(Debug, Default)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, Vec<TermHit>>>,
    file: Mutex<Option<File>>,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open or create a cache file. A corrupt file is discarded with a
    /// warning and the cache starts empty.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        match std::fs::read(&path) {
            Ok(bytes) => match parse_log(&bytes) {
                Ok((lines, complete_len)) => {
                    for l in lines {
                        entries.insert(l.key, l.hits);
                    }
                    if complete_len < bytes.len() {
                        OpenOptions::new().write(true).open(&path)?.set_len(complete_len as u64)?;
                    }
                }
                Err(msg) => {
                    log::warn!("term cache {} is corrupt ({msg}); rebuilding empty", path.display());
                    std::fs::write(&path, b"")?;
                }
            },
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e),
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(ResponseCache {
            path: Some(path),
            entries: RwLock::new(entries),
            file: Mutex::new(Some(file)),
            inflight: Mutex::new(HashMap::new()),
        })
    }

    /// Remove a cache file if present.
    pub fn clear(path: impl AsRef<Path>) -> io::Result<()> {
        match std::fs::remove_file(path) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<Vec<TermHit>> {
        self.entries
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(key)
            .cloned()
    }

    /// Return the cached hits for a key, or run `fetch` once (even under
    /// concurrent callers) and remember a successful result.
    pub fn get_or_fetch(
        &self,
        normalized_query: &str,
        scope: &str,
        exact: bool,
        fetch: impl FnOnce() -> Result<Vec<TermHit>, ResolveError>,
    ) -> Result<Vec<TermHit>, ResolveError> {
        let key = cache_key(normalized_query, scope, exact);
        if let Some(hits) = self.get(&key) {
            return Ok(hits);
        }
        let slot = self
            .inflight
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(key.clone())
            .or_default()
            .clone();
        let _guard = slot.lock().unwrap_or_else(|e| e.into_inner());
        let result = match self.get(&key) {
            Some(hits) => Ok(hits),
            None => fetch().inspect(|hits| {
                self.put(CacheLine {
                    key: key.clone(),
                    query: normalized_query.to_string(),
                    scope: scope.to_string(),
                    exact,
                    hits: hits.clone(),
                    fetched_at: SystemTime::now()
                        .duration_since(UNIX_EPOCH)
                        .map(|d| d.as_secs())
                        .unwrap_or(0),
                })
            }),
        };
        let mut inflight = self.inflight.lock().unwrap_or_else(|e| e.into_inner());
        if inflight.get(&key).is_some_and(|s| Arc::ptr_eq(s, &slot)) {
            inflight.remove(&key);
        }
        result
    }

    fn put(&self, line: CacheLine) {
        if let Some(file) = self.file.lock().unwrap_or_else(|e| e.into_inner()).as_mut() {
            match serde_json::to_string(&line) {
                Ok(mut s) => {
                    s.push('\n');
                    if let Err(e) = file.write_all(s.as_bytes()) {
                        log::warn!("cannot append to term cache: {e}");
                    }
                }
                Err(e) => log::warn!("cannot serialize cache entry: {e}"),
            }
        }
        self.entries
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(line.key, line.hits);
    }
}

/// Parse the log. A torn final line (no trailing newline) is dropped; any
/// other bad line makes the whole file corrupt.
fn parse_log(bytes: &[u8]) -> Result<(Vec<CacheLine>, usize), String> {
    let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if complete.len() < text.len() {
        log::warn!("dropping torn final line in term cache");
    }
    let lines = complete
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let line: CacheLine = serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1))?;
            if line.key != cache_key(&line.query, &line.scope, line.exact) {
                return Err(format!("line {}: key does not match its contents", i + 1));
            }
            Ok(line)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((lines, complete.len()))
}
