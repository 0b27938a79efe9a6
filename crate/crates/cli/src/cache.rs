//! Content-addressed memo directory selected by `WETTING_LAB_CACHE`.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

pub const CACHE_ENV: &str = "WETTING_LAB_CACHE";

pub fn dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Hex SHA-256 of the canonical JSON of `key`, salted with the crate version.
pub fn key_hash<K: Serialize>(kind: &str, key: &K) -> CliResult<String> {
    let body = serde_json::to_string(&(kind, env!("CARGO_PKG_VERSION"), key))?;
    Ok(hex::encode(Sha256::digest(body.as_bytes())))
}

/// Returns the cached value for `key` or computes and stores it. Unreadable
/// entries are recomputed and overwritten.
pub fn memo<K, T, F>(kind: &str, key: &K, compute: F) -> CliResult<T>
where
    K: Serialize,
    T: Serialize + DeserializeOwned,
    F: FnOnce() -> CliResult<T>,
{
    let Some(dir) = dir() else { return compute() };
    let path = dir.join(format!("{}.json", key_hash(kind, key)?));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(v) = serde_json::from_str(&text) {
            return Ok(v);
        }
    }
    let value = compute()?;
    std::fs::create_dir_all(&dir)?;
    // write-then-rename so concurrent runs never see a partial entry
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, serde_json::to_vec(&value)?)?;
    std::fs::rename(&tmp, &path)?;
    Ok(value)
}
