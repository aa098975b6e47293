//! Content-addressed result cache: one JSON record per (config hash,
//! campaign).  Corrupt entries are warned about and recomputed, never
//! trusted.

use std::fs;
use std::path::{Path, PathBuf};

use crate::record::ResultRecord;
use crate::{Error, Result};

pub const CACHE_ENV_VAR: &str = "DECOUPLING_LAB_CACHE";

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    /// Resolution order: explicit directory, then the environment
    /// variable, then `<out_dir>/cache`.
    pub fn resolve(explicit: Option<&Path>, out_dir: &Path) -> Cache {
        let root = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CACHE_ENV_VAR).map(PathBuf::from))
            .unwrap_or_else(|| out_dir.join("cache"));
        Cache { root }
    }

    pub fn at(root: PathBuf) -> Cache {
        Cache { root }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, hash: &str, campaign: &str) -> PathBuf {
        self.root.join(format!("{hash}-{campaign}.json"))
    }

    /// Stored record for this key, or None (missing or unreadable).
    pub fn lookup(&self, hash: &str, campaign: &str) -> Option<ResultRecord> {
        let path = self.entry_path(hash, campaign);
        let text = fs::read_to_string(&path).ok()?;
        match serde_json::from_str::<ResultRecord>(&text) {
            Ok(rec) if rec.payload.config_hash == hash => Some(rec),
            Ok(_) => {
                eprintln!(
                    "warning: cache entry {} was stored under the wrong key; recomputing",
                    path.display()
                );
                None
            }
            Err(e) => {
                eprintln!(
                    "warning: cache entry {} is corrupt ({e}); recomputing",
                    path.display()
                );
                None
            }
        }
    }

    /// Write atomically: temp file in the same directory, then rename.
    pub fn store(&self, record: &ResultRecord) -> Result<PathBuf> {
        fs::create_dir_all(&self.root)?;
        let path = self.entry_path(&record.payload.config_hash, record.payload.campaign.name());
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(record)?;
        fs::write(&tmp, text)?;
        fs::rename(&tmp, &path).map_err(|e| {
            Error::Cache(format!("installing {} failed: {e}", path.display()))
        })?;
        Ok(path)
    }

    pub fn list(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        match fs::read_dir(&self.root) {
            Ok(entries) => {
                for entry in entries {
                    let path = entry?.path();
                    if path.extension().is_some_and(|e| e == "json") {
                        out.push(path);
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        out.sort();
        Ok(out)
    }

    pub fn clear(&self) -> Result<usize> {
        let entries = self.list()?;
        let n = entries.len();
        for path in entries {
            fs::remove_file(path)?;
        }
        Ok(n)
    }
}
