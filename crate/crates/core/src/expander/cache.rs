use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Content-addressed store of raw endpoint replies, laid out as
/// `<dir>/<first two hex chars>/<sha256>.txt`.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

/// Cache key for a `(model, prompt)` pair.
pub fn cache_key(model: &str, prompt: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0u8]);
    h.update(prompt);
    hex::encode(h.finalize())
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ResponseCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.txt"))
    }

    pub fn get(&self, key: &str) -> Result<Option<String>> {
        let path = self.path_for(key);
        match fs::read_to_string(&path) {
            Ok(body) => Ok(Some(body)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Stores `body` under `key`. The file appears atomically: it is written to
    /// a temporary name in the same directory and renamed into place.
    pub fn put(&self, key: &str, body: &str) -> Result<()> {
        let path = self.path_for(key);
        let parent = path.parent().expect("cache path has a parent");
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(parent, e))?;
        tmp.write_all(body.as_bytes()).map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let key = cache_key("m", b"prompt");
        assert_eq!(key.len(), 64);
        assert_eq!(cache.get(&key).unwrap(), None);
        cache.put(&key, "reply\nwith  spacing ").unwrap();
        assert_eq!(cache.get(&key).unwrap().as_deref(), Some("reply\nwith  spacing "));
        let expected = dir.path().join(&key[..2]).join(format!("{key}.txt"));
        assert!(expected.is_file());
        let leftovers: Vec<_> = fs::read_dir(expected.parent().unwrap()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn model_name_is_part_of_the_key() {
        assert_ne!(cache_key("llama-8b", b"p"), cache_key("llama-70b", b"p"));
        assert_ne!(cache_key("ab", b"c"), cache_key("a", b"bc"));
    }
}
