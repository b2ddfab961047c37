//! Append-only description cache keyed by prompt digest.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    digest: String,
    text: String,
}

/// Generated descriptions, persisted as one JSON record per line.
#[derive(Debug, Default)]
pub struct DescriptionCache {
    path: Option<PathBuf>,
    entries: BTreeMap<String, String>,
    hits: usize,
    misses: usize,
}

impl DescriptionCache {
    /// Cache that lives only in memory.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or starts) the cache file at `path`. Later records win on duplicate digests.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut entries = BTreeMap::new();
        match File::open(&path) {
            Ok(f) => {
                for (n, line) in BufReader::new(f).lines().enumerate() {
                    let line = line.map_err(|e| Error::io(&path, e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
                        path: path.clone(),
                        line: n + 1,
                        message: e.to_string(),
                    })?;
                    entries.insert(rec.digest, rec.text);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(&path, e)),
        }
        Ok(Self {
            path: Some(path),
            entries,
            hits: 0,
            misses: 0,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Looks up `digest`, counting a hit or a miss.
    pub fn lookup(&mut self, digest: &str) -> Option<&str> {
        match self.entries.get(digest) {
            Some(t) => {
                self.hits += 1;
                Some(t.as_str())
            }
            None => {
                self.misses += 1;
                None
            }
        }
    }

    pub fn contains(&self, digest: &str) -> bool {
        self.entries.contains_key(digest)
    }

    /// Stores `text` and appends it to the backing file.
    pub fn insert(&mut self, digest: &str, text: &str) -> Result<()> {
        if let Some(path) = &self.path {
            let mut line = serde_json::to_string(&Record {
                digest: digest.to_owned(),
                text: text.to_owned(),
            })?;
            line.push('\n');
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        self.entries.insert(digest.to_owned(), text.to_owned());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    pub fn misses(&self) -> usize {
        self.misses
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let text = "line one\nline \"two\" \u{e9}";
        {
            let mut c = DescriptionCache::open(&path).unwrap();
            assert!(c.lookup("abc").is_none());
            c.insert("abc", text).unwrap();
        }
        let mut c = DescriptionCache::open(&path).unwrap();
        assert_eq!(c.lookup("abc"), Some(text));
        assert_eq!((c.hits(), c.misses(), c.len()), (1, 0, 1));
    }

    #[test]
    fn corrupt_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "{\"digest\":\"a\",\"text\":\"x\"}\nnot json\n").unwrap();
        match DescriptionCache::open(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
