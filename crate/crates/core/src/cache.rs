//! Content-addressed JSON response cache on disk.
//!
//! Keys are the SHA-256 of a canonical JSON request description; each entry is
//! stored as `<hash>.json`. Readers never lock; writers are serialized and
//! publish entries by atomic rename, so a reader sees either nothing or a
//! complete file.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Clones share one writer lock.
#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
    write_lock: Arc<Mutex<()>>,
}

/// Hex SHA-256 of the canonical JSON encoding of `request`.
pub fn request_hash<T: Serialize + ?Sized>(request: &T) -> String {
    // serde_json::Value maps are ordered, so the encoding is canonical.
    let value = serde_json::to_value(request).expect("cache keys are serializable");
    let bytes = serde_json::to_vec(&value).expect("cache keys are serializable");
    hex::encode(Sha256::digest(&bytes))
}

impl DiskCache {
    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            write_lock: Arc::new(Mutex::new(())),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Returns `None` on a miss or an unreadable entry.
    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        let bytes = fs::read(self.path_for(key)).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(v) => Some(v),
            Err(err) => {
                tracing::warn!(key, %err, "ignoring corrupt cache entry");
                None
            }
        }
    }

    pub fn put<T: Serialize>(&self, key: &str, value: &T) -> io::Result<()> {
        let bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let tmp = self.dir.join(format!(".{key}.{}.tmp", std::process::id()));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, self.path_for(key))
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|it| {
                it.filter_map(Result::ok)
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
